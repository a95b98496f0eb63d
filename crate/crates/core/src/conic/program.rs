use serde::{Deserialize, Serialize};

use super::cone::{ConeBlock, ConeSpec};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// v(γ, L) = v₀ + B_γ γ + B_L L
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub constant: Vec<f64>,
    pub gamma: SparseMatrix,
    pub status: SparseMatrix,
}

impl AffineMap {
    pub fn constant_only(constant: Vec<f64>) -> Self {
        let m = constant.len();
        AffineMap {
            constant,
            gamma: SparseMatrix::zeros(m, 0),
            status: SparseMatrix::zeros(m, 0),
        }
    }

    pub fn rows(&self) -> usize {
        self.constant.len()
    }

    pub fn eval(&self, gamma: &[f64], status: &[f64]) -> Vec<f64> {
        let g = self.gamma.mul_vec(gamma);
        let s = self.status.mul_vec(status);
        self.constant
            .iter()
            .zip(g.iter().zip(&s))
            .map(|(c, (a, b))| c + a + b)
            .collect()
    }

    /// B_γᵀ y
    pub fn gamma_tr_mul(&self, y: &[f64]) -> Vec<f64> {
        self.gamma.tr_mul_vec(y)
    }

    /// B_Lᵀ y
    pub fn status_tr_mul(&self, y: &[f64]) -> Vec<f64> {
        self.status.tr_mul_vec(y)
    }

    pub fn scale(&self, k: f64) -> AffineMap {
        AffineMap {
            constant: self.constant.iter().map(|c| c * k).collect(),
            gamma: self.gamma.scale(k),
            status: self.status.scale(k),
        }
    }

    fn check(&self, what: &str, n_gamma: usize, n_status: usize) -> Result<()> {
        let m = self.rows();
        if self.gamma.nrows() != m || self.status.nrows() != m {
            return Err(Error::Dimension(format!("{what}: parameter maps have wrong row count")));
        }
        if self.gamma.ncols() != n_gamma || self.status.ncols() != n_status {
            return Err(Error::Dimension(format!(
                "{what}: parameter maps are {}x{} / {}x{}, expected {} and {} columns",
                m,
                self.gamma.ncols(),
                m,
                self.status.ncols(),
                n_gamma,
                n_status
            )));
        }
        Ok(())
    }
}

/// min hᵀx  s.t.  A x + b(γ,L) = 0,  C x + d(γ,L) ≤ 0,  x ∈ K
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub h: Vec<f64>,
    pub a: SparseMatrix,
    pub b: AffineMap,
    pub c: SparseMatrix,
    pub d: AffineMap,
    pub cone: ConeSpec,
    pub var_names: Vec<String>,
    #[serde(default)]
    pub eq_names: Vec<String>,
    #[serde(default)]
    pub ineq_names: Vec<String>,
    pub n_gamma: usize,
    pub n_status: usize,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.h.len()
    }
    pub fn n_eq(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_ineq(&self) -> usize {
        self.c.nrows()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n_vars();
        self.cone.check()?;
        if self.cone.dim() != n {
            return Err(Error::Dimension(format!(
                "cone covers {} variables, program has {n}",
                self.cone.dim()
            )));
        }
        if self.a.ncols() != n || self.c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A has {} and C has {} columns, expected {n}",
                self.a.ncols(),
                self.c.ncols()
            )));
        }
        if self.b.rows() != self.a.nrows() || self.d.rows() != self.c.nrows() {
            return Err(Error::Dimension("right-hand sides do not match row counts".into()));
        }
        if self.var_names.len() != n {
            return Err(Error::Dimension(format!("{} variable names for {n} variables", self.var_names.len())));
        }
        self.b.check("b", self.n_gamma, self.n_status)?;
        self.d.check("d", self.n_gamma, self.n_status)?;
        Ok(())
    }

    pub fn check_params(&self, gamma: &[f64], status: &[f64]) -> Result<()> {
        if gamma.len() != self.n_gamma || status.len() != self.n_status {
            return Err(Error::Dimension(format!(
                "parameters have lengths {}/{}, program expects {}/{}",
                gamma.len(),
                status.len(),
                self.n_gamma,
                self.n_status
            )));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.h.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest violation of equality, inequality and cone constraints at x.
    pub fn primal_residual(&self, x: &[f64], gamma: &[f64], status: &[f64]) -> f64 {
        let b = self.b.eval(gamma, status);
        let d = self.d.eval(gamma, status);
        let eq = self
            .a
            .mul_vec(x)
            .iter()
            .zip(&b)
            .fold(0.0_f64, |m, (ax, bi)| m.max((ax + bi).abs()));
        let ineq = self
            .c
            .mul_vec(x)
            .iter()
            .zip(&d)
            .fold(0.0_f64, |m, (cx, di)| m.max(cx + di));
        eq.max(ineq).max(self.cone.violation(x))
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ConicProgram = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        p.check()?;
        Ok(p)
    }
}

/// Linear expression in x with affine parameter dependence. Read as
/// Σ coef·x + constant + Σ coef·γ + Σ coef·L.
#[derive(Debug, Clone, Default)]
pub struct Expr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
    pub gamma: Vec<(usize, f64)>,
    pub status: Vec<(usize, f64)>,
}

impl Expr {
    pub fn new() -> Self {
        Expr::default()
    }
    pub fn var(v: usize) -> Self {
        Expr::new().term(v, 1.0)
    }
    pub fn term(mut self, v: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }
    pub fn constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
    pub fn gamma(mut self, k: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.gamma.push((k, coef));
        }
        self
    }
    pub fn status(mut self, k: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.status.push((k, coef));
        }
        self
    }
    pub fn add(mut self, other: &Expr, k: f64) -> Self {
        self.terms.extend(other.terms.iter().map(|(v, c)| (*v, c * k)));
        self.constant += other.constant * k;
        self.gamma.extend(other.gamma.iter().map(|(v, c)| (*v, c * k)));
        self.status.extend(other.status.iter().map(|(v, c)| (*v, c * k)));
        self
    }
    pub fn scaled(&self, k: f64) -> Expr {
        Expr::new().add(self, k)
    }
}

#[derive(Default)]
struct Rows {
    names: Vec<String>,
    mat: Vec<(usize, usize, f64)>,
    constant: Vec<f64>,
    gamma: Vec<(usize, usize, f64)>,
    status: Vec<(usize, usize, f64)>,
}

impl Rows {
    fn push(&mut self, name: String, e: Expr) -> usize {
        let r = self.names.len();
        self.names.push(name);
        self.mat.extend(e.terms.into_iter().map(|(v, c)| (r, v, c)));
        self.constant.push(e.constant);
        self.gamma.extend(e.gamma.into_iter().map(|(k, c)| (r, k, c)));
        self.status.extend(e.status.into_iter().map(|(k, c)| (r, k, c)));
        r
    }

    fn finish(self, n: usize, n_gamma: usize, n_status: usize) -> (SparseMatrix, AffineMap, Vec<String>) {
        let m = self.names.len();
        (
            SparseMatrix::from_triplets(m, n, &self.mat),
            AffineMap {
                constant: self.constant,
                gamma: SparseMatrix::from_triplets(m, n_gamma, &self.gamma),
                status: SparseMatrix::from_triplets(m, n_status, &self.status),
            },
            self.names,
        )
    }
}

/// Incremental program assembly. Variables are allocated in cone-block order.
pub struct ProgramBuilder {
    n_gamma: usize,
    n_status: usize,
    names: Vec<String>,
    blocks: Vec<ConeBlock>,
    h: Vec<f64>,
    eq: Rows,
    ineq: Rows,
}

impl ProgramBuilder {
    pub fn new(n_gamma: usize, n_status: usize) -> Self {
        ProgramBuilder {
            n_gamma,
            n_status,
            names: Vec::new(),
            blocks: Vec::new(),
            h: Vec::new(),
            eq: Rows::default(),
            ineq: Rows::default(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    /// A free scalar variable. Adjacent free variables share one block.
    pub fn free(&mut self, name: impl Into<String>) -> usize {
        let v = self.names.len();
        self.names.push(name.into());
        self.h.push(0.0);
        match self.blocks.last_mut() {
            Some(ConeBlock::Free(n)) => *n += 1,
            _ => self.blocks.push(ConeBlock::Free(1)),
        }
        v
    }

    /// Free variable with lo ≤ x ≤ hi (infinite sides are skipped).
    pub fn bounded(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> usize {
        let name = name.into();
        let v = self.free(name.clone());
        self.bound(v, &name, lo, hi);
        v
    }

    pub fn bound(&mut self, v: usize, name: &str, lo: f64, hi: f64) {
        if lo.is_finite() {
            self.le(format!("{name}>=lo"), Expr::new().term(v, -1.0).constant(lo));
        }
        if hi.is_finite() {
            self.le(format!("{name}<=hi"), Expr::var(v).constant(-hi));
        }
    }

    /// Allocate a cone block with its own variables.
    pub fn block(&mut self, kind: ConeBlock, names: Vec<String>) -> Vec<usize> {
        assert_eq!(kind.dim(), names.len());
        let start = self.names.len();
        self.h.extend(std::iter::repeat(0.0).take(names.len()));
        self.names.extend(names);
        self.blocks.push(kind);
        (start..self.names.len()).collect()
    }

    /// Require (e₁, …, eₙ) to lie in the given block, via dedicated block
    /// variables tied to the expressions by equality rows.
    pub fn cone_constraint(&mut self, name: &str, kind: ConeBlock, exprs: Vec<Expr>) -> Vec<usize> {
        let names = (0..exprs.len()).map(|k| format!("{name}[{k}]")).collect();
        let vars = self.block(kind, names);
        for (k, (v, e)) in vars.iter().zip(exprs).enumerate() {
            self.eq(format!("{name}.link[{k}]"), Expr::var(*v).add(&e, -1.0));
        }
        vars
    }

    pub fn cost(&mut self, v: usize, coef: f64) {
        self.h[v] += coef;
    }

    /// expr = 0
    pub fn eq(&mut self, name: impl Into<String>, e: Expr) -> usize {
        self.eq.push(name.into(), e)
    }

    /// expr ≤ 0
    pub fn le(&mut self, name: impl Into<String>, e: Expr) -> usize {
        self.ineq.push(name.into(), e)
    }

    pub fn build(self) -> Result<ConicProgram> {
        let n = self.names.len();
        let (a, b, eq_names) = self.eq.finish(n, self.n_gamma, self.n_status);
        let (c, d, ineq_names) = self.ineq.finish(n, self.n_gamma, self.n_status);
        let p = ConicProgram {
            h: self.h,
            a,
            b,
            c,
            d,
            cone: ConeSpec::new(self.blocks),
            var_names: self.names,
            eq_names,
            ineq_names,
            n_gamma: self.n_gamma,
            n_status: self.n_status,
        };
        p.check()?;
        Ok(p)
    }
}
