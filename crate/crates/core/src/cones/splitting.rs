//! Dual alternating-direction augmented Lagrangian method for conic programs
//!
//! ```text
//! minimize c^T x  subject to  M x = b,  x in K
//! ```
//!
//! where `K` is a product of PSD blocks (in scaled `svec` coordinates), a free
//! part and a nonnegative orthant, laid out in that order. Each iteration solves
//! one linear system with the cached Cholesky factor of `M M^T`, projects onto
//! `K` once, and updates the primal multiplier.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::matrix::SymMatrix;
use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Length of `svec` for an order-`n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(i, j)` in `svec` (upper triangle, column by column).
pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Scaled half-vectorization: off-diagonal entries are multiplied by `sqrt 2`
/// so that `svec(A) . svec(B) = <A, B>`.
pub fn svec(m: &SymMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            let v = m.get(i, j);
            out.push(if i == j { v } else { SQRT2 * v });
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> SymMatrix {
    SymMatrix::from_fn(n, |i, j| {
        let x = v[svec_index(i, j)];
        if i == j {
            x
        } else {
            x / SQRT2
        }
    })
}

/// Sparse row of `M`.
pub type SparseRow = Vec<(usize, f64)>;

/// `min c^T x` subject to `M x = b`, `x` in PSD blocks x free x nonnegative.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    blocks: Vec<usize>,
    free: usize,
    nonneg: usize,
    rows: Vec<SparseRow>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ConicProgram {
    pub fn new(blocks: Vec<usize>, free: usize, nonneg: usize) -> Self {
        let n = blocks.iter().map(|&k| svec_len(k)).sum::<usize>() + free + nonneg;
        ConicProgram {
            blocks,
            free,
            nonneg,
            rows: Vec::new(),
            b: Vec::new(),
            c: vec![0.0; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Offset of PSD block `k` in the variable vector.
    pub fn block_offset(&self, k: usize) -> usize {
        self.blocks[..k].iter().map(|&n| svec_len(n)).sum()
    }

    pub fn free_offset(&self) -> usize {
        self.block_offset(self.blocks.len())
    }

    pub fn nonneg_offset(&self) -> usize {
        self.free_offset() + self.free
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Appends nonnegative variables at the end and returns the index of the first.
    pub fn add_nonneg(&mut self, count: usize) -> usize {
        let first = self.c.len();
        self.nonneg += count;
        self.c.resize(first + count, 0.0);
        first
    }

    pub fn add_row(&mut self, mut row: SparseRow, rhs: f64) {
        row.retain(|e| e.1 != 0.0);
        self.rows.push(row);
        self.b.push(rhs);
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.c[var] = cost;
    }

    pub fn set_block_cost(&mut self, k: usize, m: &SymMatrix) {
        let off = self.block_offset(k);
        for (p, v) in svec(m).into_iter().enumerate() {
            self.c[off + p] = v;
        }
    }

    /// Row coefficients of `<A, X_k>` for a dense symmetric `A`.
    pub fn block_coefficients(&self, k: usize, a: &SymMatrix) -> SparseRow {
        let off = self.block_offset(k);
        svec(a)
            .into_iter()
            .enumerate()
            .filter(|e| e.1 != 0.0)
            .map(|(p, v)| (off + p, v))
            .collect()
    }

    /// Row coefficients of `<A, X_k>` for `A` given by upper-triangle entries.
    pub fn sparse_block_coefficients(
        &self,
        k: usize,
        entries: &[(usize, usize, f64)],
    ) -> SparseRow {
        let off = self.block_offset(k);
        entries
            .iter()
            .filter(|e| e.2 != 0.0)
            .map(|&(i, j, v)| (off + svec_index(i, j), if i == j { v } else { SQRT2 * v }))
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplittingSettings {
    pub max_iter: usize,
    /// Target for the scaled primal and dual residuals.
    pub tol: f64,
    /// Target for the relative objective gap.
    pub gap_tol: f64,
    pub mu_init: f64,
    /// Residual imbalance ratio that triggers a penalty update.
    pub balance_ratio: f64,
    pub balance_factor: f64,
    pub check_every: usize,
}

impl Default for SplittingSettings {
    fn default() -> Self {
        SplittingSettings {
            max_iter: 20_000,
            tol: 1e-9,
            gap_tol: 1e-9,
            mu_init: 1.0,
            balance_ratio: 5.0,
            balance_factor: 1.6,
            check_every: 10,
        }
    }
}

/// Iterates carried between solves of a growing program.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SplittingSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Dual slack `c - M^T y`, projected onto the dual cone.
    pub s: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub converged: bool,
    pub mu: f64,
}

impl SplittingSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            y: self.y.clone(),
            s: self.s.clone(),
            mu: self.mu,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Projects `v` onto the cone (PSD blocks, free part left alone, nonnegative part clipped)
/// and writes `Pi_K(v)` into `pos` and `Pi_K(-v)` into `neg`.
struct Projector<'a> {
    prog: &'a ConicProgram,
}

impl Projector<'_> {
    /// Splits `v = s - mu x` into the dual-cone part `s` (free part zero) and the primal part.
    fn split(&self, v: &[f64], s: &mut [f64], x_part: &mut [f64]) {
        let mut off = 0;
        for &n in &self.prog.blocks {
            let len = svec_len(n);
            let m = smat(&v[off..off + len], n).into_inner();
            let eig = SymmetricEigen::new(m);
            let mut pos = DMatrix::zeros(n, n);
            let mut neg = DMatrix::zeros(n, n);
            for k in 0..n {
                let lam = eig.eigenvalues[k];
                let col = eig.eigenvectors.column(k);
                if lam > 0.0 {
                    pos.ger(lam, &col, &col, 1.0);
                } else if lam < 0.0 {
                    neg.ger(-lam, &col, &col, 1.0);
                }
            }
            let pos = svec(&SymMatrix::symmetrized(pos));
            let neg = svec(&SymMatrix::symmetrized(neg));
            s[off..off + len].copy_from_slice(&pos);
            x_part[off..off + len].copy_from_slice(&neg);
            off += len;
        }
        for p in off..off + self.prog.free {
            s[p] = 0.0;
            x_part[p] = -v[p];
        }
        off += self.prog.free;
        for p in off..off + self.prog.nonneg {
            s[p] = v[p].max(0.0);
            x_part[p] = (-v[p]).max(0.0);
        }
    }
}

/// Solves the program. A warm start shorter than the program is padded with zeros.
pub fn solve(
    prog: &ConicProgram,
    settings: &SplittingSettings,
    warm: Option<&WarmStart>,
) -> Result<SplittingSolution> {
    let nv = prog.num_vars();
    let nr = prog.num_rows();
    if prog.b.iter().chain(&prog.c).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite program data".into()));
    }

    // Row equilibration and data normalization.
    let row_scale: Vec<f64> = prog
        .rows
        .iter()
        .map(|r| {
            let n = r.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    let scaled = ConicProgram {
        blocks: prog.blocks.clone(),
        free: prog.free,
        nonneg: prog.nonneg,
        rows: prog
            .rows
            .iter()
            .zip(&row_scale)
            .map(|(r, &d)| r.iter().map(|&(j, v)| (j, v * d)).collect())
            .collect(),
        b: prog.b.iter().zip(&row_scale).map(|(v, d)| v * d).collect(),
        c: prog.c.clone(),
    };
    let b_scale = norm(&scaled.b).max(1.0);
    let c_scale = norm(&scaled.c).max(1.0);
    let b: Vec<f64> = scaled.b.iter().map(|v| v / b_scale).collect();
    let c: Vec<f64> = scaled.c.iter().map(|v| v / c_scale).collect();

    // Cholesky of M M^T with a tiny ridge for dependent rows.
    let mut gram = DMatrix::<f64>::zeros(nr, nr);
    {
        let mut dense_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for (i, r) in scaled.rows.iter().enumerate() {
            for &(j, v) in r {
                dense_cols[j].push((i, v));
            }
        }
        for col in &dense_cols {
            for &(i, vi) in col {
                for &(k, vk) in col {
                    gram[(i, k)] += vi * vk;
                }
            }
        }
    }
    for i in 0..nr {
        gram[(i, i)] += 1e-12 + if gram[(i, i)] == 0.0 { 1.0 } else { 0.0 };
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Numerical("constraint Gram matrix is not positive definite".into())
    })?;

    let mut x = vec![0.0; nv];
    let mut y = vec![0.0; nr];
    let mut s = vec![0.0; nv];
    let mut mu = settings.mu_init;
    if let Some(w) = warm {
        for (p, v) in w.x.iter().take(nv).enumerate() {
            x[p] = v / b_scale;
        }
        for (i, v) in w.y.iter().take(nr).enumerate() {
            y[i] = v / (c_scale * row_scale[i]);
        }
        for (p, v) in w.s.iter().take(nv).enumerate() {
            s[p] = v / c_scale;
        }
        if w.mu.is_finite() && w.mu > 0.0 {
            mu = w.mu;
        }
    }

    let proj = Projector { prog: &scaled };
    let mut mty = vec![0.0; nv];
    let mut v = vec![0.0; nv];
    let mut x_part = vec![0.0; nv];
    let mut rhs = vec![0.0; nv];
    let (mut pres, mut dres, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=settings.max_iter {
        iterations = it;
        // y = (M M^T)^{-1} (mu (b - M x) + M (c - s))
        let mx = scaled.apply(&x);
        for p in 0..nv {
            rhs[p] = c[p] - s[p];
        }
        let mcs = scaled.apply(&rhs);
        let r = DVector::from_iterator(nr, (0..nr).map(|i| mu * (b[i] - mx[i]) + mcs[i]));
        let sol = chol.solve(&r);
        y.copy_from_slice(sol.as_slice());

        scaled.apply_transpose(&y, &mut mty);
        for p in 0..nv {
            v[p] = c[p] - mty[p] - mu * x[p];
        }
        proj.split(&v, &mut s, &mut x_part);
        for p in 0..nv {
            x[p] = x_part[p] / mu;
        }

        if it % settings.check_every == 0 || it == settings.max_iter {
            let mx = scaled.apply(&x);
            let pr: Vec<f64> = mx.iter().zip(&b).map(|(a, bb)| a - bb).collect();
            pres = norm(&pr) / (1.0 + norm(&b));
            let dr: Vec<f64> = (0..nv).map(|p| mty[p] + s[p] - c[p]).collect();
            dres = norm(&dr) / (1.0 + norm(&c));
            let pobj = dot(&c, &x);
            let dobj = dot(&b, &y);
            gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if !(pres.is_finite() && dres.is_finite()) {
                return Err(Error::Numerical("splitting iterates diverged".into()));
            }
            if pres <= settings.tol && dres <= settings.tol && gap <= settings.gap_tol {
                converged = true;
                break;
            }
            if pres > settings.balance_ratio * dres {
                mu = (mu * settings.balance_factor).min(1e6);
            } else if dres > settings.balance_ratio * pres {
                mu = (mu / settings.balance_factor).max(1e-6);
            }
        }
    }

    Ok(SplittingSolution {
        x: x.iter().map(|v| v * b_scale).collect(),
        y: y.iter()
            .zip(&row_scale)
            .map(|(v, d)| v * c_scale * d)
            .collect(),
        s: s.iter().map(|v| v * c_scale).collect(),
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        converged,
        mu,
    })
}
