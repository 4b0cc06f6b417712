//! Independent checker for beta-certificates.
//!
//! Everything is recomputed from `(W, Z)` and the certificate fields; the only shared
//! code with construction is the cone arithmetic.

use serde::{Deserialize, Serialize};

use super::BetaCertificate;
use crate::cones::{self, splitting::SplittingSettings, ConeSpec, SymMatrix};
use crate::cover::check_cover_feasible;
use crate::error::Result;
use crate::relax::{pairing, Operand};

/// Residuals as stored in a certificate. All are relative to the natural scale of
/// their clause; positive means slack, except `c1_gap` which is signed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub c1_gap: f64,
    pub c2_cut: f64,
    pub c3_cover_residual: f64,
    pub c3_cost: f64,
    pub c4_trace: f64,
    pub c4_dist_star: f64,
    pub pass: bool,
}

impl CheckSummary {
    pub fn unchecked() -> Self {
        CheckSummary {
            c1_gap: 0.0,
            c2_cut: 0.0,
            c3_cover_residual: 0.0,
            c3_cost: 0.0,
            c4_trace: 0.0,
            c4_dist_star: 0.0,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub summary: CheckSummary,
    /// Clauses (i) to (iv) in order.
    pub clauses: [bool; 4],
    /// `<W, Z>` as recomputed by the checker.
    pub pairing: f64,
    /// `s_U^T W s_U`.
    pub cut_value: f64,
    pub tol: f64,
    /// Structural problems (dimension mismatches, non-finite fields).
    pub problems: Vec<String>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.summary.pass
    }
}

fn rel(num: f64, scale: f64) -> f64 {
    num / scale.abs().max(f64::MIN_POSITIVE)
}

/// Residual reported when a clause cannot even be evaluated.
const BROKEN: f64 = f64::MIN;

fn structural_problems(spec: &ConeSpec, w: &SymMatrix, cert: &BetaCertificate) -> Vec<String> {
    let m = spec.dim();
    let mut out = Vec::new();
    if w.dim() != m {
        out.push(format!(
            "payoff has order {} but the cone has order {m}",
            w.dim()
        ));
    }
    if cert.x.len() != m {
        out.push(format!(
            "x has length {} but the cone has order {m}",
            cert.x.len()
        ));
    }
    if cert.cut.dim() != m {
        out.push("cut set has the wrong dimension".into());
    }
    if cert.cover.support().any(|u| u.dim() != m) {
        out.push("cover contains a cut set of the wrong dimension".into());
    }
    let scalars = [cert.beta, cert.rho, cert.mu];
    if scalars.iter().chain(&cert.x).any(|v| !v.is_finite()) {
        out.push("non-finite scalar field".into());
    }
    if !(cert.beta > 0.0 && cert.beta <= 1.0) {
        out.push(format!("beta = {} not in (0, 1]", cert.beta));
    }
    out
}

/// Checks the four clauses of a beta-certificate for the pair `(W, Z)`:
///
/// 1. `rho mu = <W, Z>`;
/// 2. `q(W, s_U) >= beta rho`;
/// 3. `sum_U y_U S_U` covers `Z` and `<1, y> <= mu / beta`;
/// 4. `rho >= <1, x>` and `Diag(x) - W` lies in `Dist*`.
///
/// Never fails; problems show up as failed clauses.
pub fn verify_certificate(
    spec: &ConeSpec,
    w: &Operand,
    z: &Operand,
    cert: &BetaCertificate,
    tol: f64,
) -> VerificationReport {
    let failed = |problems: Vec<String>| VerificationReport {
        summary: CheckSummary {
            c1_gap: BROKEN,
            c2_cut: BROKEN,
            c3_cover_residual: BROKEN,
            c3_cost: BROKEN,
            c4_trace: BROKEN,
            c4_dist_star: BROKEN,
            pass: false,
        },
        clauses: [false; 4],
        pairing: f64::NAN,
        cut_value: f64::NAN,
        tol,
        problems,
    };
    let evaluated = (|| -> Result<(SymMatrix, f64)> {
        let wm = w.payoff_matrix(spec)?;
        let pair = pairing(spec, w, z)?;
        Ok((wm, pair))
    })();
    let (wm, pair) = match evaluated {
        Ok(v) => v,
        Err(e) => return failed(vec![e.to_string()]),
    };
    let problems = structural_problems(spec, &wm, cert);
    if !problems.is_empty() {
        return failed(problems);
    }

    let rho_mu = cert.rho * cert.mu;
    let c1 = rel(rho_mu - pair, pair.abs().max(rho_mu.abs()));

    let cut_value = wm.quad_form(&cert.cut.sign_vector());
    let c2 = rel(cut_value - cert.beta * cert.rho, cert.beta * cert.rho);

    let z_scale = match z {
        Operand::Vector(v) => v.iter().fold(0.0f64, |a, b| a.max(b.abs())),
        Operand::Matrix(m) => m.max_abs(),
    };
    let c3_cover = check_cover_feasible(spec, &cert.cover, z, 0.0)
        .map(|c| rel(c.worst_residual, z_scale))
        .unwrap_or(BROKEN);
    let budget = cert.mu / cert.beta;
    let c3_cost = rel(budget - cert.cover.total_weight(), budget);

    let c4_trace = rel(cert.rho - cert.x.iter().sum::<f64>(), cert.rho);
    let p = SymMatrix::from_diagonal(&cert.x).minus(&wm);
    let settings = SplittingSettings {
        tol: 1e-10,
        gap_tol: 1e-10,
        ..SplittingSettings::default()
    };
    let c4_dist = cones::certify_dist_star(spec, &p, &settings)
        .map(|c| rel(c.margin, wm.max_abs()))
        .unwrap_or(BROKEN);

    let clauses = [
        c1.abs() <= tol,
        c2 >= -tol,
        c3_cover >= -tol && c3_cost >= -tol,
        c4_trace >= -tol && c4_dist >= -tol,
    ];
    VerificationReport {
        summary: CheckSummary {
            c1_gap: c1,
            c2_cut: c2,
            c3_cover_residual: c3_cover,
            c3_cost,
            c4_trace,
            c4_dist_star: c4_dist,
            pass: clauses.iter().all(|&c| c),
        },
        clauses,
        pairing: pair,
        cut_value,
        tol,
        problems,
    }
}
