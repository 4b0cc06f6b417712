//! Cone pairs `(Dist, Cov)`, the constraint map `A` and its adjoint, and the
//! order tests everything else is checked against.

pub mod matrix;
pub mod splitting;

pub use matrix::{Eigen, SparseSym, SymMatrix};

use serde::{Deserialize, Serialize};

use crate::cutset::CutSet;
use crate::error::{Error, Result};
use splitting::{ConicProgram, SplittingSettings};

/// Default tolerance for order and membership tests.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistKind {
    Psd,
    PsdTriangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovKind {
    FullPsd,
    Polyhedral,
}

/// The cone pair together with the constraint map when `Cov` is polyhedral.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    dist: DistKind,
    cov: CovKind,
    a_matrices: Vec<SparseSym>,
    kappa: f64,
    dim: usize,
}

impl ConeSpec {
    /// Polyhedral cover cone generated by `a_matrices`; `kappa` is computed as `min A*(I)`.
    pub fn polyhedral(dim: usize, dist: DistKind, a_matrices: Vec<SparseSym>) -> Result<Self> {
        if a_matrices.is_empty() {
            return Err(Error::InvalidInstance(
                "constraint map has no matrices".into(),
            ));
        }
        let mut kappa = f64::INFINITY;
        for (k, a) in a_matrices.iter().enumerate() {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.dim(),
                });
            }
            if a.is_zero() {
                return Err(Error::InvalidInstance(format!(
                    "constraint matrix {k} is zero"
                )));
            }
            kappa = kappa.min(a.trace());
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "A*(I) has a nonpositive entry ({kappa})"
            )));
        }
        Ok(ConeSpec {
            dist,
            cov: CovKind::Polyhedral,
            a_matrices,
            kappa,
            dim,
        })
    }

    pub fn full_psd(dim: usize, dist: DistKind) -> Self {
        ConeSpec {
            dist,
            cov: CovKind::FullPsd,
            a_matrices: Vec::new(),
            kappa: 0.0,
            dim,
        }
    }

    pub fn dist(&self) -> DistKind {
        self.dist
    }

    pub fn cov(&self) -> CovKind {
        self.cov
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_polyhedral(&self) -> bool {
        self.cov == CovKind::Polyhedral
    }

    /// The matrices `A_1, .., A_d`; empty for the full PSD cover cone.
    pub fn a_matrices(&self) -> &[SparseSym] {
        &self.a_matrices
    }

    /// Number of generators `d` (0 for the full PSD cover cone).
    pub fn num_constraints(&self) -> usize {
        self.a_matrices.len()
    }

    /// `min_i <A_i, I>`, or 0 for the full PSD cover cone.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn require_polyhedral(&self) -> Result<()> {
        if self.is_polyhedral() {
            Ok(())
        } else {
            Err(Error::RequiresPolyhedral)
        }
    }

    fn check_dim(&self, m: &SymMatrix) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        Ok(())
    }

    /// Triangle inequalities used when solving (pairs `i < j`). Together with
    /// PSD and a constant diagonal they imply the `i = j` members.
    pub fn solver_triangles(&self) -> Vec<Triangle> {
        match self.dist {
            DistKind::Psd => Vec::new(),
            DistKind::PsdTriangle => Triangle::family(self.dim, false),
        }
    }
}

/// `A*(Y) = (<A_i, Y>)_i`.
pub fn apply_adjoint(spec: &ConeSpec, y: &SymMatrix) -> Result<Vec<f64>> {
    spec.require_polyhedral()?;
    spec.check_dim(y)?;
    Ok(spec.a_matrices.iter().map(|a| a.inner(y)).collect())
}

/// `A(w) = sum_i w_i A_i`.
pub fn apply_map(spec: &ConeSpec, w: &[f64]) -> Result<SymMatrix> {
    spec.require_polyhedral()?;
    if w.len() != spec.num_constraints() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_constraints(),
            found: w.len(),
        });
    }
    let mut out = SymMatrix::zeros(spec.dim);
    for (a, &wi) in spec.a_matrices.iter().zip(w) {
        if wi != 0.0 {
            a.add_into(wi, &mut out);
        }
    }
    Ok(out)
}

/// `S_U = s_U s_U^T`.
pub fn sign_tensor(u: &CutSet) -> SymMatrix {
    SymMatrix::outer(&u.sign_vector())
}

pub fn psd_project(m: &SymMatrix) -> Result<SymMatrix> {
    m.psd_project()
}

/// `Delta_{sign_i i, sign_j j} = sym((e_0 + sign_i e_i)(e_0 + sign_j e_j)^T)` for `i, j >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triangle {
    pub i: usize,
    pub positive_i: bool,
    pub j: usize,
    pub positive_j: bool,
}

impl Triangle {
    pub fn new(positive_i: bool, i: usize, positive_j: bool, j: usize) -> Self {
        Triangle {
            i,
            positive_i,
            j,
            positive_j,
        }
    }

    fn signs(&self) -> (f64, f64) {
        let s = |p: bool| if p { 1.0 } else { -1.0 };
        (s(self.positive_i), s(self.positive_j))
    }

    /// All sign patterns over ordered pairs `1 <= i, j < dim` when `full`,
    /// otherwise only pairs `i < j`.
    pub fn family(dim: usize, full: bool) -> Vec<Triangle> {
        let mut out = Vec::new();
        for i in 1..dim {
            let start = if full { 1 } else { i + 1 };
            for j in start..dim {
                for (pi, pj) in [(true, true), (true, false), (false, true), (false, false)] {
                    out.push(Triangle::new(pi, i, pj, j));
                }
            }
        }
        out
    }

    /// `<Delta, Y> = Y_00 + s_i Y_0i + s_j Y_0j + s_i s_j Y_ij`.
    pub fn eval(&self, y: &SymMatrix) -> f64 {
        let (si, sj) = self.signs();
        y.get(0, 0)
            + si * y.get(0, self.i)
            + sj * y.get(0, self.j)
            + si * sj * y.get(self.i, self.j)
    }

    pub fn matrix(&self, dim: usize) -> SparseSym {
        let (si, sj) = self.signs();
        let mut d = SparseSym::new(dim);
        d.add_sym_outer(1.0, &[(0, 1.0), (self.i, si)], &[(0, 1.0), (self.j, sj)]);
        d.compress();
        d
    }
}

/// Outcome of a `Dist` membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistReport {
    pub min_eigenvalue: f64,
    /// `min <Delta, Y>` over the whole triangle family, when `Dist` includes it.
    pub worst_triangle_violation: Option<f64>,
    pub member: bool,
}

pub fn check_dist_membership(spec: &ConeSpec, y: &SymMatrix, tol: f64) -> Result<DistReport> {
    spec.check_dim(y)?;
    let min_eigenvalue = y.min_eigenvalue()?;
    let worst_triangle_violation = match spec.dist {
        DistKind::Psd => None,
        DistKind::PsdTriangle => Some(worst_triangle(y, true)),
    };
    let member = min_eigenvalue >= -tol && worst_triangle_violation.is_none_or(|v| v >= -tol);
    Ok(DistReport {
        min_eigenvalue,
        worst_triangle_violation,
        member,
    })
}

/// `min <Delta, Y>` over the triangle family (`+inf` when the family is empty).
pub fn worst_triangle(y: &SymMatrix, full: bool) -> f64 {
    Triangle::family(y.dim(), full)
        .iter()
        .map(|t| t.eval(y))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderCheck {
    pub holds: bool,
    pub residual: f64,
}

/// Tests `X <= Y` in the cover order: `A*(Y - X) >= 0` or `Y - X` PSD.
pub fn check_cover_order(
    spec: &ConeSpec,
    x: &SymMatrix,
    y: &SymMatrix,
    tol: f64,
) -> Result<OrderCheck> {
    spec.check_dim(x)?;
    spec.check_dim(y)?;
    let diff = y.minus(x);
    let residual = match spec.cov {
        CovKind::Polyhedral => apply_adjoint(spec, &diff)?
            .into_iter()
            .fold(f64::INFINITY, f64::min),
        CovKind::FullPsd => diff.min_eigenvalue()?,
    };
    Ok(OrderCheck {
        holds: residual >= -tol,
        residual,
    })
}

/// Constructive certificate that `P` lies in `Dist*`: `P - sum lambda_k Delta_k - margin I`
/// is PSD with `lambda >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistStarCertificate {
    pub triangles: Vec<Triangle>,
    pub lambda: Vec<f64>,
    /// `lambda_min(P - sum lambda_k Delta_k)`, recomputed exactly from `lambda`.
    pub margin: f64,
}

/// Certifies `P` in `Dist*`. For `Dist = PSD` this is `lambda_min(P)`; with triangle
/// inequalities it solves `max t` subject to `P - sum lambda_k Delta_k - t I` PSD, `lambda >= 0`.
pub fn certify_dist_star(
    spec: &ConeSpec,
    p: &SymMatrix,
    settings: &SplittingSettings,
) -> Result<DistStarCertificate> {
    spec.check_dim(p)?;
    let plain = p.min_eigenvalue()?;
    let triangles = spec.solver_triangles();
    if triangles.is_empty() || plain >= 0.0 {
        return Ok(DistStarCertificate {
            lambda: vec![0.0; triangles.len()],
            triangles,
            margin: plain,
        });
    }
    let m = spec.dim;
    let nvec = splitting::svec_len(m);
    // Variables: svec(S) | t (free) | lambda (nonneg). Rows: svec(S) + t svec(I) + sum lambda svec(Delta) = svec(P).
    let mut prog = ConicProgram::new(vec![m], 1, triangles.len());
    let t_col = nvec;
    let lam0 = nvec + 1;
    let deltas: Vec<SparseSym> = triangles.iter().map(|t| t.matrix(m)).collect();
    let pv = splitting::svec(p);
    for j in 0..m {
        for i in 0..=j {
            let p_idx = splitting::svec_index(i, j);
            let scale = if i == j {
                1.0
            } else {
                std::f64::consts::SQRT_2
            };
            let mut row = vec![(p_idx, 1.0)];
            if i == j {
                row.push((t_col, 1.0));
            }
            for (k, d) in deltas.iter().enumerate() {
                let v = d.get(i, j);
                if v != 0.0 {
                    row.push((lam0 + k, scale * v));
                }
            }
            prog.add_row(row, pv[p_idx]);
        }
    }
    prog.set_cost(t_col, -1.0);
    let sol = splitting::solve(&prog, settings, None)?;
    let lambda: Vec<f64> = sol.x[lam0..].iter().map(|v| v.max(0.0)).collect();
    let mut rest = p.clone();
    for (d, &l) in deltas.iter().zip(&lambda) {
        if l > 0.0 {
            d.add_into(-l, &mut rest);
        }
    }
    let margin = rest.min_eigenvalue()?.max(plain);
    if margin == plain {
        return Ok(DistStarCertificate {
            lambda: vec![0.0; triangles.len()],
            triangles,
            margin,
        });
    }
    Ok(DistStarCertificate {
        triangles,
        lambda,
        margin,
    })
}
