use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Dense symmetric real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

/// Eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix whose asymmetry is at most `1e-12` relative to its
    /// largest entry, then symmetrizes it exactly.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if !asym.is_finite() || asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::symmetrized(m))
    }

    /// Replaces `m` by `(m + m^T)/2` without any check.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    /// Builds from the upper triangle of `f(i, j)`, `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Rank-one matrix `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let n = v.len();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| v[i] * v[j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Trace inner product `<self, other>`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    /// Quadratic form `s^T self s`.
    pub fn quad_form(&self, s: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += self.0[(i, j)] * s[i];
            }
            acc += col * s[j];
        }
        acc
    }

    pub fn scaled(&self, a: f64) -> SymMatrix {
        SymMatrix(&self.0 * a)
    }

    pub fn plus(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn minus(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// `self + a·other`, in place.
    pub fn add_scaled(&mut self, a: f64, other: &SymMatrix) {
        self.0 += &other.0 * a;
    }

    pub fn add_to_diagonal(&mut self, a: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)] += a;
        }
    }

    /// Adds `a·v v^T` in place.
    pub fn add_outer(&mut self, a: f64, v: &[f64]) {
        let n = self.dim();
        for j in 0..n {
            let aj = a * v[j];
            if aj == 0.0 {
                continue;
            }
            for i in 0..n {
                self.0[(i, j)] += aj * v[i];
            }
        }
    }

    /// `D^{-1/2} self D^{-1/2}` for `D = diag(self)`; fails on nonpositive diagonal.
    pub fn unit_diagonal(&self) -> Result<SymMatrix> {
        let d = self.diagonal();
        if let Some(bad) = d.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Numerical(format!(
                "cannot normalize diagonal entry {bad}"
            )));
        }
        let r: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut m = self.0.clone();
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                m[(i, j)] *= r[i] * r[j];
            }
            m[(j, j)] = 1.0;
        }
        Ok(SymMatrix::symmetrized(m))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn eigen(&self) -> Result<Eigen> {
        let eig =
            SymmetricEigen::try_new(self.0.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
                Error::Numerical("symmetric eigendecomposition did not converge".into())
            })?;
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
        Ok(Eigen { values, vectors })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        if self.dim() == 0 {
            return Ok(0.0);
        }
        Ok(self.eigen()?.values[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        if self.dim() == 0 {
            return Ok(0.0);
        }
        Ok(*self.eigen()?.values.last().unwrap())
    }

    /// Nearest positive semidefinite matrix in Frobenius norm (eigenvalue clipping).
    pub fn psd_project(&self) -> Result<SymMatrix> {
        let e = self.eigen()?;
        Ok(e.reconstruct(|v| v.max(0.0)))
    }
}

impl Eigen {
    /// `sum_k f(values[k]) v_k v_k^T`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.vectors.nrows();
        let mut m = DMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            if fl == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            m.ger(fl, &v, &v, 1.0);
        }
        SymMatrix::symmetrized(m)
    }
}

/// Sparse symmetric matrix stored by its upper triangle `(i, j, value)` with `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(dim: usize) -> Self {
        SparseSym {
            dim,
            entries: Vec::new(),
        }
    }

    /// Adds `v` to entry `(i, j)` and, when `i != j`, to `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match self.entries.iter_mut().find(|e| e.0 == a && e.1 == b) {
            Some(e) => e.2 += v,
            None => self.entries.push((a, b, v)),
        }
    }

    /// Adds `a · sym(u v^T)` for sparse vectors `u`, `v` given as `(index, coef)` lists.
    pub fn add_sym_outer(&mut self, a: f64, u: &[(usize, f64)], v: &[(usize, f64)]) {
        for &(i, ui) in u {
            for &(j, vj) in v {
                let val = 0.5 * a * ui * vj;
                if i == j {
                    self.add(i, i, 2.0 * val);
                } else {
                    self.add(i, j, val);
                }
            }
        }
    }

    /// Drops explicit zeros and sorts entries.
    pub fn compress(&mut self) {
        self.entries.retain(|e| e.2 != 0.0);
        self.entries.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle entries `(i, j, value)`, `i <= j`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.2 == 0.0)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.entries
            .iter()
            .filter(|e| e.0 == a && e.1 == b)
            .map(|e| e.2)
            .sum()
    }

    /// `<self, y>` for dense symmetric `y`.
    pub fn inner(&self, y: &SymMatrix) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * y.get(i, i)
                } else {
                    2.0 * v * y.get(i, j)
                }
            })
            .sum()
    }

    /// `s^T self s`.
    pub fn quad_form(&self, s: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * s[i] * s[i]
                } else {
                    2.0 * v * s[i] * s[j]
                }
            })
            .sum()
    }

    pub fn trace(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 == e.1)
            .map(|e| e.2)
            .sum()
    }

    /// Adds `a · self` into a dense matrix.
    pub fn add_into(&self, a: f64, target: &mut SymMatrix) {
        let m = &mut target.0;
        for &(i, j, v) in &self.entries {
            m[(i, j)] += a * v;
            if i != j {
                m[(j, i)] += a * v;
            }
        }
    }

    pub fn to_dense(&self) -> SymMatrix {
        let mut out = SymMatrix::zeros(self.dim);
        self.add_into(1.0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-15, 1.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
    }

    #[test]
    fn eigenvalues_sorted() {
        let m = SymMatrix::from_diagonal(&[3.0, -1.0, 2.0]);
        let e = m.eigen().unwrap();
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        let back = e.reconstruct(|v| v);
        assert!(back.minus(&m).max_abs() < 1e-14);
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let m = SymMatrix::from_diagonal(&[1.0, -1.0]);
        let p = m.psd_project().unwrap();
        assert!(p.minus(&SymMatrix::from_diagonal(&[1.0, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn sparse_inner_matches_dense() {
        let mut a = SparseSym::new(3);
        a.add(0, 0, 1.0);
        a.add(1, 2, -0.5);
        a.add(2, 1, 0.25);
        let y = SymMatrix::from_fn(3, |i, j| (i + 2 * j) as f64 + 1.0);
        let dense = a.to_dense();
        assert!((a.inner(&y) - dense.inner(&y)).abs() < 1e-14);
        let s = [1.0, -1.0, 1.0];
        assert!((a.quad_form(&s) - dense.quad_form(&s)).abs() < 1e-14);
    }
}
