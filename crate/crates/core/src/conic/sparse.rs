use serde::{Deserialize, Serialize};

/// Compressed-sparse-column matrix, assembled from triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TripletForm", try_from = "TripletForm")]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowval: Vec<usize>,
    nzval: Vec<f64>,
}

/// Serialized form: row, column, value triplets.
#[derive(Serialize, Deserialize)]
struct TripletForm {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl From<SparseMatrix> for TripletForm {
    fn from(m: SparseMatrix) -> Self {
        TripletForm {
            nrows: m.nrows,
            ncols: m.ncols,
            triplets: m.triplets().collect(),
        }
    }
}

impl TryFrom<TripletForm> for SparseMatrix {
    type Error = String;
    fn try_from(t: TripletForm) -> Result<Self, String> {
        if let Some(&(r, c, _)) = t.triplets.iter().find(|(r, c, _)| *r >= t.nrows || *c >= t.ncols) {
            return Err(format!(
                "triplet ({r}, {c}) outside a {}x{} matrix",
                t.nrows, t.ncols
            ));
        }
        Ok(SparseMatrix::from_triplets(t.nrows, t.ncols, &t.triplets))
    }
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowval: Vec::new(),
            nzval: Vec::new(),
        }
    }

    /// Build from (row, col, value) triplets. Duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(sorted.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut cols = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                cols.push(c);
                last = Some((r, c));
            }
        }
        let keep: Vec<bool> = nzval.iter().map(|v| *v != 0.0).collect();
        let mut rv = Vec::new();
        let mut nz = Vec::new();
        for k in 0..keep.len() {
            if keep[k] {
                rv.push(rowval[k]);
                nz.push(nzval[k]);
                colptr[cols[k] + 1] += 1;
            }
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        SparseMatrix {
            nrows,
            ncols,
            colptr,
            rowval: rv,
            nzval: nz,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.nzval.len()
    }
    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }
    pub fn rowval(&self) -> &[usize] {
        &self.rowval
    }
    pub fn nzval(&self) -> &[f64] {
        &self.nzval
    }

    /// Entries of one column as (row, value).
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.colptr[c]..self.colptr[c + 1];
        self.rowval[range.clone()]
            .iter()
            .copied()
            .zip(self.nzval[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| self.column(c).map(move |(r, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.column(c).find(|(row, _)| *row == r).map_or(0.0, |(_, v)| v)
    }

    /// y = M x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (c, xc) in x.iter().enumerate() {
            if *xc != 0.0 {
                for (r, v) in self.column(c) {
                    y[r] += v * xc;
                }
            }
        }
        y
    }

    /// y = Mᵀ x
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols)
            .map(|c| self.column(c).map(|(r, v)| v * x[r]).sum())
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scale(&self, k: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.nzval.iter_mut().for_each(|v| *v *= k);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 0, 1.0), (1, 2, 2.0), (0, 0, 3.0), (1, 1, 0.0)],
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![4.0, 2.0]);
        assert_eq!(m.tr_mul_vec(&[1.0, 2.0]), vec![4.0, 0.0, 4.0]);
        assert_eq!(m.transpose().to_dense(), vec![vec![4.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]]);
    }

    #[test]
    fn serde_roundtrip_through_triplets() {
        let m = SparseMatrix::from_triplets(3, 2, &[(2, 1, -1.5), (0, 0, 0.25)]);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("triplets"));
        let back: SparseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<SparseMatrix>(r#"{"nrows":1,"ncols":1,"triplets":[[3,0,1.0]]}"#).is_err());
    }
}
