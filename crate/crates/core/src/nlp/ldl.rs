//! Dense symmetric indefinite factorization P A Pᵀ = L D Lᵀ with
//! Bunch–Kaufman pivoting (1×1 and 2×2 diagonal blocks). Only the lower
//! triangle of the input is read.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    /// Row-major, lower triangle holds L (unit diagonal implied) and the
    /// diagonal blocks of D.
    a: Vec<f64>,
    /// `swaps[k]` is the row exchanged with row k at step k (k itself if none).
    swaps: Vec<usize>,
    /// Width of the pivot block starting at k (1 or 2); 0 inside a 2×2.
    block: Vec<u8>,
    inertia: Inertia,
}

const ALPHA: f64 = 0.640_388_203_202_208; // (1 + √17) / 8

impl Ldl {
    /// Factor the symmetric matrix whose lower triangle is given in
    /// row-major `a` (n×n). `zero_tol` is the pivot magnitude counted as 0.
    pub fn factor(n: usize, mut a: Vec<f64>, zero_tol: f64) -> Ldl {
        assert_eq!(a.len(), n * n);
        let idx = |i: usize, j: usize| if i >= j { i * n + j } else { j * n + i };
        let mut swaps: Vec<usize> = (0..n).collect();
        let mut block = vec![1u8; n];
        let mut inertia = Inertia::default();
        let mut k = 0;
        while k < n {
            let absakk = a[k * n + k].abs();
            let (mut imax, mut colmax) = (k, 0.0);
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) <= zero_tol {
                inertia.zero += 1;
                a[k * n + k] = 0.0;
                for i in k + 1..n {
                    a[i * n + k] = 0.0;
                }
                k += 1;
                continue;
            }
            let (kp, kstep) = if absakk >= ALPHA * colmax {
                (k, 1)
            } else {
                let mut rowmax: f64 = 0.0;
                for j in k..n {
                    if j != imax {
                        rowmax = rowmax.max(a[idx(imax, j)].abs());
                    }
                }
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    (k, 1)
                } else if a[imax * n + imax].abs() >= ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                swap_sym(&mut a, n, k, kk, kp);
            }
            swaps[kk] = kp;
            if kstep == 1 {
                let d = a[k * n + k];
                if d.abs() <= zero_tol {
                    inertia.zero += 1;
                } else if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                let dinv = if d != 0.0 { 1.0 / d } else { 0.0 };
                for i in k + 1..n {
                    let aik = a[i * n + k];
                    if aik == 0.0 {
                        continue;
                    }
                    let f = aik * dinv;
                    for j in k + 1..=i {
                        a[i * n + j] -= f * a[j * n + k];
                    }
                }
                for i in k + 1..n {
                    a[i * n + k] *= dinv;
                }
            } else {
                let d11 = a[k * n + k];
                let d21 = a[(k + 1) * n + k];
                let d22 = a[(k + 1) * n + k + 1];
                let det = d11 * d22 - d21 * d21;
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                // Multipliers l_i = [a_ik, a_i,k+1] D⁻¹, kept in a scratch
                // buffer while the trailing block is updated.
                let mut l = Vec::with_capacity(2 * (n - k - 2));
                for i in k + 2..n {
                    let (x, y) = (a[i * n + k], a[i * n + k + 1]);
                    l.push(x * i11 + y * i21);
                    l.push(x * i21 + y * i22);
                }
                for i in k + 2..n {
                    let (l1, l2) = (l[2 * (i - k - 2)], l[2 * (i - k - 2) + 1]);
                    if l1 == 0.0 && l2 == 0.0 {
                        continue;
                    }
                    for j in k + 2..=i {
                        a[i * n + j] -= l1 * a[j * n + k] + l2 * a[j * n + k + 1];
                    }
                }
                for i in k + 2..n {
                    a[i * n + k] = l[2 * (i - k - 2)];
                    a[i * n + k + 1] = l[2 * (i - k - 2) + 1];
                }
                block[k] = 2;
                block[k + 1] = 0;
            }
            k += kstep;
        }
        Ldl {
            n,
            a,
            swaps,
            block,
            inertia,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    /// Solve A x = b in place. Zero pivots are skipped (minimum-norm on
    /// the null block).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.a;
        let mut k = 0;
        while k < n {
            let step = self.block[k] as usize;
            let kk = k + step - 1;
            b.swap(kk, self.swaps[kk]);
            k += step;
        }
        // L y = b
        let mut k = 0;
        while k < n {
            let step = self.block[k] as usize;
            for c in k..k + step {
                let bc = b[c];
                if bc != 0.0 {
                    for i in k + step..n {
                        b[i] -= a[i * n + c] * bc;
                    }
                }
            }
            k += step;
        }
        // D w = y
        let mut k = 0;
        while k < n {
            if self.block[k] == 2 {
                let (d11, d21, d22) = (a[k * n + k], a[(k + 1) * n + k], a[(k + 1) * n + k + 1]);
                let det = d11 * d22 - d21 * d21;
                let (x, y) = (b[k], b[k + 1]);
                b[k] = (d22 * x - d21 * y) / det;
                b[k + 1] = (d11 * y - d21 * x) / det;
                k += 2;
            } else {
                let d = a[k * n + k];
                b[k] = if d != 0.0 { b[k] / d } else { 0.0 };
                k += 1;
            }
        }
        // Lᵀ x = w
        let mut k = n;
        while k > 0 {
            let start = if k >= 2 && self.block[k - 2] == 2 { k - 2 } else { k - 1 };
            let step = k - start;
            for c in start..start + step {
                let mut s = 0.0;
                for i in start + step..n {
                    s += a[i * n + c] * b[i];
                }
                b[c] -= s;
            }
            k = start;
        }
        let mut k = n;
        while k > 0 {
            let start = if k >= 2 && self.block[k - 2] == 2 { k - 2 } else { k - 1 };
            let kk = k - 1;
            b.swap(kk, self.swaps[kk]);
            k = start;
        }
    }
}

/// Exchange indices p < q (both ≥ k) of the symmetric matrix stored in the
/// lower triangle, including the already computed rows of L.
fn swap_sym(a: &mut [f64], n: usize, k: usize, p: usize, q: usize) {
    debug_assert!(k <= p && p < q);
    for j in 0..p {
        a.swap(p * n + j, q * n + j);
    }
    a.swap(p * n + p, q * n + q);
    for j in p + 1..q {
        a.swap(j * n + p, q * n + j);
    }
    for i in q + 1..n {
        a.swap(i * n + p, i * n + q);
    }
}
