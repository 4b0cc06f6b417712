//! Dense two-phase simplex with Bland's rule.
//!
//! Small and exact enough for the oracle LPs; not meant to be fast.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `a x >= b`
    Ge,
    /// `a x <= b`
    Le,
    /// `a x = b`
    Eq,
}

/// Primal/dual optimal pair of `opt c^T x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Row multipliers with the usual sign convention for the given sense.
    pub y: Vec<f64>,
    pub value: f64,
    pub dual_value: f64,
    /// Largest complementary slackness product.
    pub slackness: f64,
    pub pivots: usize,
}

struct Tableau {
    width: usize,
    /// `rows x (width + 1)`, last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.width + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width)
    }

    fn pivot(&mut self, r: usize, col: usize, reduced: &mut [f64]) {
        let w = self.width + 1;
        let p = self.at(r, col);
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows() {
            if i == r {
                continue;
            }
            let f = self.t[i * w + col];
            if f != 0.0 {
                for (v, pv) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.t[i * w + col] = 0.0;
            }
        }
        let f = reduced[col];
        if f != 0.0 {
            for (v, pv) in reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            reduced[col] = 0.0;
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    /// Reduced costs (with `-objective` in the last slot) for a cost vector.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = cost.to_vec();
        d.push(0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, v) in d.iter_mut().enumerate() {
                    *v -= cb * self.at(i, j);
                }
            }
        }
        d
    }

    /// Minimizes over columns allowed to enter. Bland: lowest eligible column enters,
    /// lowest basic index leaves among ratio ties.
    fn optimize(&mut self, reduced: &mut [f64], allowed: &dyn Fn(usize) -> bool) -> Result<()> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Numerical("simplex pivot limit reached".into()));
            }
            let Some(col) = (0..self.width).find(|&j| allowed(j) && reduced[j] < -PIVOT_TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows() {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - PIVOT_TOL
                                || (ratio <= best + PIVOT_TOL && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let (r, _) = leave.ok_or(Error::Unbounded)?;
            self.pivot(r, col, reduced);
        }
    }
}

/// Solves `opt c^T x` subject to `a_i x (>=|<=|=) b_i` and `x >= 0`.
pub fn lp_solve(
    a: &[Vec<f64>],
    kinds: &[RowKind],
    b: &[f64],
    c: &[f64],
    sense: Sense,
) -> Result<LpSolution> {
    let rows = a.len();
    let n = c.len();
    if kinds.len() != rows || b.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: kinds.len().min(b.len()),
        });
    }
    if let Some(r) = a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: r.len(),
        });
    }
    if a.iter().flatten().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite LP data".into()));
    }

    // Normalize every row to a nonnegative right-hand side.
    let mut flipped = vec![false; rows];
    let mut kind = kinds.to_vec();
    for i in 0..rows {
        if b[i] < 0.0 || (b[i] == 0.0 && kind[i] == RowKind::Ge) {
            flipped[i] = true;
            kind[i] = match kind[i] {
                RowKind::Ge => RowKind::Le,
                RowKind::Le => RowKind::Ge,
                RowKind::Eq => RowKind::Eq,
            };
        }
    }
    // Column layout: structural, one slack/surplus per inequality, one artificial per
    // Ge/Eq row. `unit[i]` is the column that starts as the identity for row i.
    let mut slack_col = vec![None; rows];
    let mut width = n;
    for i in 0..rows {
        if kind[i] != RowKind::Eq {
            slack_col[i] = Some(width);
            width += 1;
        }
    }
    let art_start = width;
    let mut unit = vec![0; rows];
    for i in 0..rows {
        if kind[i] == RowKind::Le {
            unit[i] = slack_col[i].unwrap();
        } else {
            unit[i] = width;
            width += 1;
        }
    }
    let w = width + 1;
    let mut t = vec![0.0; rows * w];
    for i in 0..rows {
        let sgn = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sgn * a[i][j];
        }
        if let Some(s) = slack_col[i] {
            t[i * w + s] = if kind[i] == RowKind::Le { 1.0 } else { -1.0 };
        }
        t[i * w + unit[i]] = 1.0;
        t[i * w + width] = sgn * b[i];
    }
    let mut tab = Tableau {
        width,
        t,
        basis: unit.clone(),
        pivots: 0,
    };

    // Phase one.
    let phase1: Vec<f64> = (0..width)
        .map(|j| if j >= art_start { 1.0 } else { 0.0 })
        .collect();
    let mut reduced = tab.reduced_costs(&phase1);
    tab.optimize(&mut reduced, &|_| true)?;
    let infeasibility: f64 = (0..rows)
        .filter(|&i| tab.basis[i] >= art_start)
        .map(|i| tab.rhs(i))
        .sum();
    let bscale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if infeasibility > 1e-9 * bscale {
        return Err(Error::Infeasible);
    }
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..rows {
        if tab.basis[i] >= art_start {
            if let Some(j) = (0..art_start).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                tab.pivot(i, j, &mut reduced);
            }
        }
    }

    // Phase two on the minimization form.
    let sign = if sense == Sense::Maximize { -1.0 } else { 1.0 };
    let mut cost = vec![0.0; width];
    for j in 0..n {
        cost[j] = sign * c[j];
    }
    let mut reduced = tab.reduced_costs(&cost);
    tab.optimize(&mut reduced, &|j| j < art_start)?;

    let mut x = vec![0.0; n];
    for (i, &bj) in tab.basis.iter().enumerate() {
        if bj < n {
            x[bj] = tab.rhs(i);
        }
    }
    // The identity column of row i has zero cost, so its reduced cost is -y_i.
    let y: Vec<f64> = (0..rows)
        .map(|i| {
            let yi = -reduced[unit[i]];
            let yi = if flipped[i] { -yi } else { yi };
            sign * yi
        })
        .collect();

    let value: f64 = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    let dual_value: f64 = b.iter().zip(&y).map(|(bi, yi)| bi * yi).sum();
    let mut slackness: f64 = 0.0;
    for j in 0..n {
        let aty: f64 = (0..rows).map(|i| a[i][j] * y[i]).sum();
        slackness = slackness.max((x[j] * (c[j] - aty)).abs());
    }
    for i in 0..rows {
        let ax: f64 = a[i].iter().zip(&x).map(|(aij, xj)| aij * xj).sum();
        slackness = slackness.max((y[i] * (ax - b[i])).abs());
    }
    Ok(LpSolution {
        x,
        y,
        value,
        dual_value,
        slackness,
        pivots: tab.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let s = lp_solve(
            &[vec![1.0]],
            &[RowKind::Ge],
            &[1.0],
            &[1.0],
            Sense::Minimize,
        )
        .unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k3_cut_covering() {
        // Columns: the three nontrivial bipartitions of a triangle plus the empty cut.
        let a = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ];
        let s = lp_solve(&a, &[RowKind::Ge; 3], &[1.0; 3], &[1.0; 4], Sense::Minimize).unwrap();
        assert!((s.value - 1.5).abs() < 1e-12);
        assert!((s.dual_value - 1.5).abs() < 1e-12);
        assert!(s.y.iter().all(|&v| v >= -1e-12));
        assert!(s.slackness < 1e-9);
    }

    #[test]
    fn maximize_with_mixed_rows() {
        // max x + 2y s.t. x + y <= 4, x - y = 1, y >= 0.5
        let a = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![0.0, 1.0]];
        let kinds = [RowKind::Le, RowKind::Eq, RowKind::Ge];
        let s = lp_solve(&a, &kinds, &[4.0, 1.0, 0.5], &[1.0, 2.0], Sense::Maximize).unwrap();
        assert!((s.value - 5.5).abs() < 1e-12);
        assert!((s.dual_value - 5.5).abs() < 1e-12);
        assert!(s.slackness < 1e-9);
    }

    #[test]
    fn degenerate_duplicates() {
        let a = vec![
            vec![1.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
        ];
        let s = lp_solve(
            &a,
            &[RowKind::Ge; 3],
            &[1.0, 0.0, 1.0],
            &[1.0; 4],
            Sense::Minimize,
        )
        .unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.value - s.dual_value).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = vec![vec![1.0], vec![1.0]];
        let r = lp_solve(
            &a,
            &[RowKind::Ge, RowKind::Le],
            &[2.0, 1.0],
            &[1.0],
            Sense::Minimize,
        );
        assert!(matches!(r, Err(Error::Infeasible)));
        let r = lp_solve(
            &[vec![1.0]],
            &[RowKind::Ge],
            &[1.0],
            &[1.0],
            Sense::Maximize,
        );
        assert!(matches!(r, Err(Error::Unbounded)));
    }
}
