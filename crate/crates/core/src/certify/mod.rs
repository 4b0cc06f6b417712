//! The end-to-end pipeline: solve, sample a cover, thin it out, pick a cut, and
//! package everything as a beta-certificate that [`verify_certificate`] can audit.

mod json;
mod verify;

pub use json::{CertificateDocument, OracleSummary};
pub use verify::{verify_certificate, CheckSummary, VerificationReport};

use serde::{Deserialize, Serialize};

use crate::cones::{ConeSpec, SymMatrix};
use crate::cover::{
    build_cover, sample_budget, BudgetParams, Cover, CoverConfig, CoverMode, SampleBudget,
    SampleRegime,
};
use crate::cutset::CutSet;
use crate::error::{Error, Result};
use crate::relax::{
    pairing, solve_nu_eps, solve_nu_polar_eps, DualWitness, Operand, SolveOutcome, SolverConfig,
};
use crate::rounding::{self, stage, RoundingSpec};
use crate::sparsify::{sparsify_cover, SparsifyConfig};

/// Tolerance certificates are checked at before they are emitted.
pub const VERIFY_TOL: f64 = 1e-7;

/// `(rho, mu, U, y, x)` for a pair `(W, Z)` and an approximation factor `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaCertificate {
    pub beta: f64,
    pub rho: f64,
    pub mu: f64,
    pub cut: CutSet,
    pub cover: Cover,
    pub x: Vec<f64>,
    pub seed: u64,
    pub alpha_used: f64,
    pub checks: CheckSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Given the covering target `z`, produce the paired payoff `w`.
    Cover,
    /// Given the payoff `w`, produce the paired covering target `z`.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleCase {
    Polyhedral,
    Psd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSchedule {
    pub tau: f64,
    pub eps: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// Sparsifier accuracy; zero when no sparsification happens.
    pub bss: f64,
}

impl ParameterSchedule {
    /// `alpha (1 - gamma)(1 - sigma)(1 - eps) / (1 + bss)`.
    pub fn guaranteed_factor(&self, alpha: f64) -> f64 {
        alpha * (1.0 - self.gamma) * (1.0 - self.sigma) * (1.0 - self.eps) / (1.0 + self.bss)
    }
}

/// Splits the slack `tau = 1 - beta / alpha` evenly among the error sources.
pub fn parameter_schedule(beta: f64, alpha: f64, case: ScheduleCase) -> Result<ParameterSchedule> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} not in (0, 1]"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} must be positive"
        )));
    }
    if beta >= alpha {
        return Err(Error::BetaInfeasible { beta, alpha });
    }
    let tau = 1.0 - beta / alpha;
    Ok(match case {
        ScheduleCase::Polyhedral => {
            let p = tau / 3.0;
            ParameterSchedule {
                tau,
                eps: p,
                sigma: p,
                gamma: p,
                bss: 0.0,
            }
        }
        ScheduleCase::Psd => {
            let p = tau / 4.0;
            ParameterSchedule {
                tau,
                eps: p,
                sigma: p,
                gamma: p,
                bss: tau / (4.0 - tau),
            }
        }
    })
}

/// The support cut with the largest `s_U^T W s_U`; ties go to the lexicographically
/// smallest member list.
pub fn select_best_cut<'a>(
    w: &SymMatrix,
    support: impl IntoIterator<Item = &'a CutSet>,
) -> Result<CutSet> {
    let mut best: Option<(f64, &CutSet)> = None;
    for u in support {
        let v = w.quad_form(&u.sign_vector());
        best = match best {
            Some((bv, bu)) if bv > v || (bv == v && bu <= u) => Some((bv, bu)),
            _ => Some((v, u)),
        };
    }
    best.map(|(_, u)| u.clone())
        .ok_or_else(|| Error::InvalidParameter("cannot select a cut from an empty support".into()))
}

/// Explicit perturbation parameters that bypass [`parameter_schedule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleOverride {
    pub eps: f64,
    pub sigma: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub beta: f64,
    pub mode: CoverMode,
    pub seed: u64,
    pub samples_cap: u64,
    /// Use this rounding constant instead of the claimed or estimated one.
    pub alpha_override: Option<f64>,
    pub schedule_override: Option<ScheduleOverride>,
    /// Draws used when the rounding constant has to be estimated.
    pub estimate_samples: u64,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl PipelineConfig {
    pub fn new(beta: f64, seed: u64) -> Self {
        PipelineConfig {
            beta,
            mode: CoverMode::Adaptive,
            seed,
            samples_cap: 1_000_000,
            alpha_override: None,
            schedule_override: None,
            estimate_samples: 10_000,
            solver_tol: 1e-7,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub direction: Direction,
    pub payoff: Operand,
    pub target: Operand,
    pub certificate: BetaCertificate,
    pub report: VerificationReport,
    pub schedule: ParameterSchedule,
    pub alpha_used: f64,
    /// Solver-side scales before the certificate normalization.
    pub rho_bar: f64,
    pub mu_bar: f64,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    /// The operand the pipeline produced: `w` in the cover direction, `z` in the max direction.
    pub fn paired(&self) -> &Operand {
        match self.direction {
            Direction::Cover => &self.payoff,
            Direction::Max => &self.target,
        }
    }

    pub fn document(&self) -> CertificateDocument {
        CertificateDocument {
            certificate: self.certificate.clone(),
            direction: self.direction,
            paired: self.paired().clone(),
            oracle: None,
        }
    }
}

fn solve(
    spec: &ConeSpec,
    direction: Direction,
    input: &Operand,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    match direction {
        Direction::Cover => solve_nu_polar_eps(spec, input, cfg),
        Direction::Max => solve_nu_eps(spec, input, cfg),
    }
}

fn determine_alpha(
    spec: &ConeSpec,
    rounding: &RoundingSpec,
    direction: Direction,
    input: &Operand,
    cfg: &PipelineConfig,
) -> Result<f64> {
    if let Some(a) = cfg.alpha_override.or(rounding.claimed_alpha) {
        return Ok(a);
    }
    let solver = SolverConfig {
        tol: cfg.solver_tol,
        max_iter: cfg.max_iter,
        ..SolverConfig::new(0.01, 0.01)?
    };
    let pre = solve(spec, direction, input, &solver)?;
    let est = rounding::estimate_in_stage(
        spec,
        rounding,
        &pre.rounding_matrix(),
        cfg.estimate_samples,
        cfg.seed,
        stage::PRELIMINARY,
    )?;
    let a = est.lower_bound().min(1.0);
    if !(a > 0.0) {
        return Err(Error::Degenerate(format!(
            "estimated rounding constant {a} is not positive"
        )));
    }
    Ok(a)
}

fn theoretical_budget(
    spec: &ConeSpec,
    schedule: &ParameterSchedule,
    alpha: f64,
) -> Result<SampleBudget> {
    let params = BudgetParams {
        d: spec.num_constraints(),
        n: spec.dim(),
        gamma: schedule.gamma,
        kappa: if spec.is_polyhedral() {
            spec.kappa()
        } else {
            0.0
        },
        eps: schedule.eps,
        alpha,
    };
    if spec.is_polyhedral() {
        return sample_budget(SampleRegime::Polyhedral, &params);
    }
    let a = sample_budget(SampleRegime::PsdBernstein, &params)?;
    let b = sample_budget(SampleRegime::PsdNesterov, &params)?;
    Ok(if a.samples <= b.samples { a } else { b })
}

/// Runs both halves of the algorithm on `input`: the covering target in the cover
/// direction, the payoff in the max direction. The emitted certificate has already
/// passed [`verify_certificate`] at [`VERIFY_TOL`]; a failing one is still returned
/// with its report so callers can inspect it.
pub fn run_pipeline(
    spec: &ConeSpec,
    rounding: &RoundingSpec,
    direction: Direction,
    input: &Operand,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    input.validate(spec, 1e-9)?;
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "beta = {} not in (0, 1)",
            cfg.beta
        )));
    }
    let mut warnings = Vec::new();
    let alpha = determine_alpha(spec, rounding, direction, input, cfg)?;
    if cfg.beta >= alpha {
        return Err(Error::BetaInfeasible {
            beta: cfg.beta,
            alpha,
        });
    }
    let case = if spec.is_polyhedral() {
        ScheduleCase::Polyhedral
    } else {
        ScheduleCase::Psd
    };
    let mut schedule = parameter_schedule(cfg.beta, alpha, case)?;
    if let Some(o) = cfg.schedule_override {
        warnings.push("explicit eps/sigma/gamma bypass the parameter schedule".into());
        schedule.eps = o.eps;
        schedule.sigma = o.sigma;
        schedule.gamma = o.gamma;
    }
    if schedule.tau < 0.01 {
        warnings.push(format!(
            "beta is within 1% of alpha (tau = {:.2e}); expect long runs",
            schedule.tau
        ));
    }

    let solver = SolverConfig {
        tol: cfg.solver_tol,
        max_iter: cfg.max_iter,
        ..SolverConfig::new(schedule.eps, schedule.sigma)?
    };
    let out = solve(spec, direction, input, &solver)?;
    let wm = out.payoff.payoff_matrix(spec)?;
    let pair = pairing(spec, &out.payoff, &out.target)?;
    let rho = out.primal.rho / (1.0 - schedule.eps);
    let mu = pair / rho;

    let witness = DualWitness {
        mu: out.dual.mu,
        y: out.dual.y.clone(),
    };
    let cover_cfg = match cfg.mode {
        CoverMode::Adaptive => {
            let mut c = CoverConfig::adaptive(mu / (cfg.beta * (1.0 + schedule.bss)), cfg.seed);
            c.samples_cap = cfg.samples_cap;
            c
        }
        CoverMode::Theoretical => {
            let budget = theoretical_budget(spec, &schedule, alpha)?;
            if budget.samples > cfg.samples_cap {
                return Err(Error::BudgetExhausted {
                    samples: budget.samples,
                    best_ratio: f64::INFINITY,
                });
            }
            CoverConfig::theoretical(budget, cfg.seed)
        }
    };
    let mut cover = build_cover(spec, rounding, &witness, &out.target, alpha, &cover_cfg)?;
    if let (false, Operand::Matrix(zm)) = (spec.is_polyhedral(), &out.target) {
        cover = sparsify_cover(&cover, zm, &SparsifyConfig::new(schedule.bss, 1e-9)?)?;
    }
    let cut = select_best_cut(&wm, cover.support())?;

    let mut certificate = BetaCertificate {
        beta: cfg.beta,
        rho,
        mu,
        cut,
        cover,
        x: out.primal.x.clone(),
        seed: cfg.seed,
        alpha_used: alpha,
        checks: CheckSummary::unchecked(),
    };
    let report = verify_certificate(spec, &out.payoff, &out.target, &certificate, VERIFY_TOL);
    certificate.checks = report.summary;
    Ok(PipelineOutput {
        direction,
        payoff: out.payoff.clone(),
        target: out.target.clone(),
        certificate,
        report,
        schedule,
        alpha_used: alpha,
        rho_bar: out.primal.rho,
        mu_bar: out.dual.mu,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::DistKind;
    use crate::instances::{encode_problem, CspInstance, ProblemKind, RawItem};
    use crate::oracle::{brute_maxq, exact_fevc_target};

    fn k3() -> CspInstance {
        encode_problem(
            ProblemKind::MaxCut,
            &[
                RawItem::edge(1, 2, 1.0),
                RawItem::edge(1, 3, 1.0),
                RawItem::edge(2, 3, 1.0),
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn schedule_examples() {
        let s = parameter_schedule(0.8, 0.878, ScheduleCase::Polyhedral).unwrap();
        assert!((s.tau - (1.0 - 0.8 / 0.878)).abs() < 1e-15);
        assert!((s.eps - s.tau / 3.0).abs() < 1e-15);
        assert!(0.878 * (1.0 - s.tau / 3.0).powi(3) >= 0.8);
        assert!(s.guaranteed_factor(0.878) >= 0.8);

        let a = 0.9;
        let s = parameter_schedule(a / 2.0, a, ScheduleCase::Psd).unwrap();
        assert!((s.tau - 0.5).abs() < 1e-15);
        assert!((s.eps - 0.125).abs() < 1e-15);
        assert!((s.bss - 1.0 / 7.0).abs() < 1e-15);
        assert!(s.guaranteed_factor(a) >= a / 2.0);

        assert!(matches!(
            parameter_schedule(0.9, 0.878, ScheduleCase::Polyhedral),
            Err(Error::BetaInfeasible { .. })
        ));
    }

    #[test]
    fn schedule_factor_dominates_beta() {
        for k in 1..100 {
            let beta = 0.878 * k as f64 / 100.0;
            for case in [ScheduleCase::Polyhedral, ScheduleCase::Psd] {
                let s = parameter_schedule(beta, 0.878, case).unwrap();
                assert!(s.guaranteed_factor(0.878) >= beta * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn best_cut_selection() {
        let inst = encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let w = crate::cones::apply_map(&spec, inst.weights()).unwrap();
        let all: Vec<CutSet> = CutSet::enumerate(3).collect();
        let u = select_best_cut(&w, &all).unwrap();
        assert_eq!(w.quad_form(&u.sign_vector()), 1.0);
        // Two cuts of value one: {0, 1} and {0, 2}; the smaller list wins.
        assert_eq!(u.members(), &[0, 1]);
        assert_eq!(select_best_cut(&w, &all[..1]).unwrap(), all[0]);
        assert!(select_best_cut(&w, &[]).is_err());
    }

    fn check_against_oracle(spec: &ConeSpec, out: &PipelineOutput) {
        let c = &out.certificate;
        let w = out.payoff.payoff_matrix(spec).unwrap();
        let z = match &out.target {
            Operand::Vector(v) => v.clone(),
            Operand::Matrix(m) => crate::cones::apply_adjoint(spec, m).unwrap(),
        };
        let maxq = brute_maxq(spec, &w).unwrap().value;
        let fevc = exact_fevc_target(spec, &z).unwrap().value;
        let slack = 1e-7;
        assert!(c.beta * c.rho <= maxq * (1.0 + slack));
        assert!(maxq <= c.rho * (1.0 + slack));
        assert!(c.mu <= fevc * (1.0 + slack));
        assert!(fevc <= c.mu / c.beta * (1.0 + slack));
    }

    #[test]
    fn k3_cover_direction() {
        let inst = k3();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let cfg = PipelineConfig::new(0.8, 7);
        let out = run_pipeline(
            &spec,
            &RoundingSpec::gw_for(&inst),
            Direction::Cover,
            &Operand::Vector(vec![1.0; 3]),
            &cfg,
        )
        .unwrap();
        assert!(out.report.pass(), "{:?}", out.report);
        let c = &out.certificate;
        assert!(c.mu >= 4.0 / 3.0 * 0.9 && c.mu <= 1.5 / 0.8);
        assert!(c.cover.total_weight() <= c.mu / 0.8 * (1.0 + 1e-9));
        assert!(out.report.cut_value >= 0.8 * c.rho);
        check_against_oracle(&spec, &out);
    }

    #[test]
    fn single_arc_both_directions() {
        let inst = encode_problem(ProblemKind::MaxDicut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let rounding = RoundingSpec::gw_for(&inst);
        for dir in [Direction::Cover, Direction::Max] {
            let out = run_pipeline(
                &spec,
                &rounding,
                dir,
                &Operand::Vector(vec![1.0]),
                &PipelineConfig::new(0.5, 1),
            )
            .unwrap();
            assert!(out.report.pass(), "{dir:?}: {:?}", out.report);
            let w = out.payoff.payoff_matrix(&spec).unwrap();
            let best = brute_maxq(&spec, &w).unwrap().value;
            assert!((out.report.cut_value - best).abs() <= 1e-12 * best);
            if dir == Direction::Max {
                assert_eq!(out.report.cut_value, 1.0);
            }
            check_against_oracle(&spec, &out);
        }
    }

    #[test]
    fn zero_input_rejected() {
        let inst = k3();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let r = run_pipeline(
            &spec,
            &RoundingSpec::gw_for(&inst),
            Direction::Max,
            &Operand::Vector(vec![0.0; 3]),
            &PipelineConfig::new(0.8, 1),
        );
        assert!(matches!(r, Err(Error::Degenerate(_))));
        let r = run_pipeline(
            &spec,
            &RoundingSpec::gw_for(&inst),
            Direction::Max,
            &Operand::Vector(vec![1.0; 3]),
            &PipelineConfig::new(0.9, 1),
        );
        assert!(matches!(r, Err(Error::BetaInfeasible { .. })));
    }

    #[test]
    fn tampering_flips_expected_clause() {
        let inst = encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let out = run_pipeline(
            &spec,
            &RoundingSpec::gw_for(&inst),
            Direction::Max,
            &Operand::Vector(vec![1.0]),
            &PipelineConfig::new(0.8, 3),
        )
        .unwrap();
        assert!(out.report.pass());
        let check = |c: &BetaCertificate| {
            verify_certificate(&spec, &out.payoff, &out.target, c, VERIFY_TOL)
        };
        let mut c = out.certificate.clone();
        c.cover = c.cover.scaled(0.5);
        assert_eq!(check(&c).clauses, [true, true, false, true]);
        let mut c = out.certificate.clone();
        c.rho *= 0.5;
        assert!(!check(&c).clauses[0]);
        let mut c = out.certificate.clone();
        c.rho *= 1.001;
        assert_eq!(check(&c).clauses, [false, true, true, true]);
    }

    #[test]
    fn full_psd_both_directions() {
        let spec = ConeSpec::full_psd(4, DistKind::Psd);
        let mut w = SymMatrix::zeros(4);
        w.add_outer(1.0, &[1.0, -1.0, 0.5, 0.0]);
        w.add_outer(0.5, &[0.0, 1.0, 1.0, -1.0]);
        let mut cfg = PipelineConfig::new(0.45, 5);
        cfg.alpha_override = Some(2.0 / std::f64::consts::PI);
        for dir in [Direction::Max, Direction::Cover] {
            let input = match dir {
                Direction::Max => Operand::Matrix(w.clone()),
                Direction::Cover => Operand::Matrix(SymMatrix::identity(4)),
            };
            let out = run_pipeline(&spec, &RoundingSpec::gw(), dir, &input, &cfg).unwrap();
            assert!(out.report.pass(), "{dir:?}: {:?}", out.report);
            assert!(out.schedule.bss > 0.0);
            let text = out.document().to_json().unwrap();
            let back = CertificateDocument::from_json(&text).unwrap();
            assert_eq!(back.paired, *out.paired());
        }
    }

    #[test]
    fn json_round_trip() {
        let inst = k3();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let out = run_pipeline(
            &spec,
            &RoundingSpec::gw_for(&inst),
            Direction::Cover,
            &Operand::Vector(vec![1.0; 3]),
            &PipelineConfig::new(0.8, 11),
        )
        .unwrap();
        let doc = out.document();
        let text = doc.to_json().unwrap();
        let back = CertificateDocument::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.paired, doc.paired);
        assert_eq!(back.certificate.x, doc.certificate.x);
        let report = verify_certificate(
            &spec,
            &back.paired,
            &out.target,
            &back.certificate,
            VERIFY_TOL,
        );
        assert_eq!(report.summary, out.report.summary);
        let keys: Vec<usize> = [
            "\"beta\"",
            "\"rho\"",
            "\"mu\"",
            "\"U\"",
            "\"x\"",
            "\"cover\"",
            "\"seed\"",
            "\"alpha_used\"",
            "\"checks\"",
        ]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
        assert!(keys.windows(2).all(|p| p[0] < p[1]));
    }
}
