//! Perturbed relaxations over the elliptope and their exactly feasible witnesses.
//!
//! Both directions reduce to one conic program over a correlation matrix `Yh`
//! (unit diagonal, `Yh` in `Dist`):
//!
//! * given `W`, maximize `<W, Yh>`; the dual multipliers give `Diag(x) - W` in `Dist*`;
//! * given a target `z` (or `Z`), minimize `mu` subject to `mu ((1-eps) Yh + eps I)`
//!   covering the target; the dual multipliers give the paired `w` (or `W`) and `x`.
//!
//! Triangle inequalities enter lazily: only violated ones are added, with the
//! previous iterates reused as a warm start. Raw solver output is then repaired
//! into exactly feasible witnesses and the remaining slack is reported as a gap.

use crate::cones::splitting::{
    self, ConicProgram, SplittingSettings, SplittingSolution, WarmStart,
};
use crate::cones::{self, ConeSpec, CovKind, SymMatrix, Triangle};
use crate::error::{Error, Result};

/// Solver parameters for one relaxation solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Perturbation `eps` in `(0, 1)`.
    pub eps: f64,
    /// Relative duality gap the witnesses may leave, in `(0, 1)`.
    pub sigma_budget: f64,
    /// Feasibility tolerance of the inner splitting iterations.
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverConfig {
    pub fn new(eps: f64, sigma_budget: f64) -> Result<Self> {
        let cfg = SolverConfig {
            eps,
            sigma_budget,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps = {} not in (0, 1)",
                self.eps
            )));
        }
        if !(self.sigma_budget > 0.0 && self.sigma_budget < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma = {} not in (0, 1)",
                self.sigma_budget
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "tol and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps: 0.01,
            sigma_budget: 0.01,
            tol: 1e-6,
            max_iter: 50_000,
        }
    }
}

/// Either side of a pairing: weights on the generators of a polyhedral cone, or a matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Vector(Vec<f64>),
    Matrix(SymMatrix),
}

impl Operand {
    /// `A(w)` for weights, the matrix itself otherwise.
    pub fn payoff_matrix(&self, spec: &ConeSpec) -> Result<SymMatrix> {
        match self {
            Operand::Vector(w) => cones::apply_map(spec, w),
            Operand::Matrix(m) => Ok(m.clone()),
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Operand::Vector(v) => Some(v),
            Operand::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&SymMatrix> {
        match self {
            Operand::Matrix(m) => Some(m),
            Operand::Vector(_) => None,
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Operand::Vector(v) => v.iter().all(|&x| x == 0.0),
            Operand::Matrix(m) => m.max_abs() == 0.0,
        }
    }

    /// Checks the operand matches the cover cone: nonnegative `d`-vector or PSD matrix.
    pub fn validate(&self, spec: &ConeSpec, tol: f64) -> Result<()> {
        match (self, spec.cov()) {
            (Operand::Vector(v), CovKind::Polyhedral) => {
                if v.len() != spec.num_constraints() {
                    return Err(Error::DimensionMismatch {
                        expected: spec.num_constraints(),
                        found: v.len(),
                    });
                }
                for (index, &weight) in v.iter().enumerate() {
                    if !(weight >= 0.0) || !weight.is_finite() {
                        return Err(Error::NegativeWeight { index, weight });
                    }
                }
            }
            (Operand::Matrix(m), CovKind::FullPsd) => {
                if m.dim() != spec.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: spec.dim(),
                        found: m.dim(),
                    });
                }
                let lam = m.min_eigenvalue()?;
                if lam < -tol * m.max_abs().max(1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "matrix operand is not PSD (min eigenvalue {lam:e})"
                    )));
                }
            }
            (Operand::Vector(_), CovKind::FullPsd) => {
                return Err(Error::InvalidParameter(
                    "full PSD cover cone needs a matrix operand".into(),
                ))
            }
            (Operand::Matrix(_), CovKind::Polyhedral) => {
                return Err(Error::InvalidParameter(
                    "polyhedral cover cone needs a weight vector".into(),
                ))
            }
        }
        if self.is_zero() {
            return Err(Error::Degenerate("operand is zero".into()));
        }
        Ok(())
    }
}

/// `<W, Z>` for any combination the cone supports.
pub fn pairing(spec: &ConeSpec, w: &Operand, z: &Operand) -> Result<f64> {
    match (w, z) {
        (Operand::Vector(w), Operand::Vector(z)) => {
            if w.len() != z.len() {
                return Err(Error::DimensionMismatch {
                    expected: w.len(),
                    found: z.len(),
                });
            }
            Ok(w.iter().zip(z).map(|(a, b)| a * b).sum())
        }
        (Operand::Vector(w), Operand::Matrix(zm)) => {
            let az = cones::apply_adjoint(spec, zm)?;
            Ok(w.iter().zip(&az).map(|(a, b)| a * b).sum())
        }
        (Operand::Matrix(wm), Operand::Matrix(zm)) => Ok(wm.inner(zm)),
        (Operand::Matrix(_), Operand::Vector(_)) => Err(Error::InvalidParameter(
            "a matrix payoff cannot be paired with a weight vector".into(),
        )),
    }
}

/// `(mu, Y)` with `diag(Y) = mu 1` and `Y - mu eps I` in `Dist`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualWitness {
    pub mu: f64,
    pub y: SymMatrix,
}

/// `(rho, x)` with `Diag(x) - W` in `Dist*` and `rho >= (1-eps) <1, x> + eps tr W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalWitness {
    pub rho: f64,
    pub x: Vec<f64>,
}

/// Everything a solve produces: the paired instance `(W, Z)` and witnesses for it.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub primal: PrimalWitness,
    pub dual: DualWitness,
    pub payoff: Operand,
    pub target: Operand,
    /// Triangle multipliers of the `Dist*` decomposition of `Diag(x) - W`.
    pub triangles: Vec<Triangle>,
    pub lambda: Vec<f64>,
    /// Repaired correlation matrix `Yh` (unit diagonal, in `Dist`).
    pub correlation: SymMatrix,
    pub eps: f64,
    /// `1 - <W, Z> / (rho mu)`.
    pub gap: f64,
    pub iterations: usize,
}

impl SolveOutcome {
    /// `Y / mu`, the matrix the rounding samples from.
    pub fn rounding_matrix(&self) -> SymMatrix {
        perturbed(&self.correlation, self.eps)
    }

    pub fn pairing_value(&self, spec: &ConeSpec) -> Result<f64> {
        pairing(spec, &self.payoff, &self.target)
    }
}

/// `(1 - eps) Yh + eps I`.
fn perturbed(yh: &SymMatrix, eps: f64) -> SymMatrix {
    let mut y = yh.scaled(1.0 - eps);
    y.add_to_diagonal(eps);
    y
}

/// Bounds on the unperturbed `nu(W) = max {<W, Yh> : Yh in Dist, diag Yh = 1}`.
#[derive(Debug, Clone)]
pub struct NuEstimate {
    pub lower: f64,
    pub upper: f64,
    pub correlation: SymMatrix,
    pub x: Vec<f64>,
    pub triangles: Vec<Triangle>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
}

/// Makes a near-correlation matrix exactly feasible: unit diagonal, then
/// `Yh <- (Yh + delta I) / (1 + delta)` with the smallest `delta` clearing negative
/// eigenvalues and triangle violations. Fails when `delta / (1 + delta)` exceeds `budget`.
pub fn repair_correlation(
    spec: &ConeSpec,
    raw: &SymMatrix,
    budget: f64,
) -> Result<(SymMatrix, f64)> {
    let yh = raw.unit_diagonal()?;
    let lam = yh.min_eigenvalue()?;
    let tri = spec
        .solver_triangles()
        .iter()
        .map(|t| t.eval(&yh))
        .fold(f64::INFINITY, f64::min);
    let need = (-lam).max(-tri).max(0.0);
    if need == 0.0 {
        return Ok((yh, 0.0));
    }
    let delta = need * (1.0 + 1e-9) + 1e-14;
    let charged = delta / (1.0 + delta);
    if charged > budget {
        return Err(Error::SigmaBudgetExceeded { charged, budget });
    }
    let mut out = yh;
    out.add_to_diagonal(delta);
    let out = out.scaled(1.0 / (1.0 + delta));
    // Pin the diagonal to exactly one after scaling.
    let fixed = SymMatrix::from_fn(out.dim(), |i, j| if i == j { 1.0 } else { out.get(i, j) });
    Ok((fixed, delta))
}

/// Clips `lambda` at zero and shifts `x` so that `Diag(x) - W - sum lambda_k Delta_k`
/// is PSD with a small positive margin.
pub fn repair_multipliers(
    w: &SymMatrix,
    triangles: &[Triangle],
    x: &[f64],
    lambda: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = w.dim();
    let lambda: Vec<f64> = lambda.iter().map(|l| l.max(0.0)).collect();
    let mut p = SymMatrix::from_diagonal(x).minus(w);
    for (t, &l) in triangles.iter().zip(&lambda) {
        if l > 0.0 {
            t.matrix(m).add_into(-l, &mut p);
        }
    }
    let lam = p.min_eigenvalue()?;
    let margin = 1e-6 * w.max_abs().max(1e-300);
    let shift = (-lam).max(0.0) + margin;
    Ok((x.iter().map(|v| v + shift).collect(), lambda))
}

/// Repairs a raw witness pair for payoff `W`: `Y` gets an exact diagonal `mu 1` with
/// `Y - mu eps I` in `Dist`, and `x` is shifted into `Dist*` with `rho` raised to match.
pub fn repair_witness(
    spec: &ConeSpec,
    w: &SymMatrix,
    dual: &DualWitness,
    primal: &PrimalWitness,
    triangles: &[Triangle],
    lambda: &[f64],
    cfg: &SolverConfig,
) -> Result<(DualWitness, PrimalWitness)> {
    let mu = dual.y.diagonal().into_iter().fold(dual.mu, f64::max);
    if !(mu > 0.0) {
        return Err(Error::Numerical("witness scale mu is not positive".into()));
    }
    let mut core = dual.y.clone();
    core.add_to_diagonal(-cfg.eps * mu);
    let (yh, _) = repair_correlation(spec, &core, cfg.sigma_budget)?;
    let y = perturbed(&yh, cfg.eps).scaled(mu);
    let (x, _) = repair_multipliers(w, triangles, &primal.x, lambda)?;
    let bound = (1.0 - cfg.eps) * x.iter().sum::<f64>() + cfg.eps * w.trace();
    Ok((
        DualWitness { mu, y },
        PrimalWitness {
            rho: primal.rho.max(bound),
            x,
        },
    ))
}

/// Raw iterates of the lazy triangle loop, in problem coordinates.
struct LazyState {
    active: Vec<Triangle>,
    warm: Option<WarmStart>,
    iterations: usize,
    tol: f64,
    rounds: usize,
}

const MAX_LAZY_ROUNDS: usize = 10;
const ACTIVATION_TOL: f64 = 1e-8;

impl LazyState {
    fn new(cfg: &SolverConfig) -> Self {
        LazyState {
            active: Vec::new(),
            warm: None,
            iterations: 0,
            // Early rounds only need to locate violated triangles.
            tol: cfg.tol.max(1e-4),
            rounds: 0,
        }
    }

    /// Adds violated triangles; returns true when the active set grew.
    fn activate(&mut self, spec: &ConeSpec, yh: &SymMatrix) -> bool {
        let all = spec.solver_triangles();
        if all.is_empty() {
            return false;
        }
        let mut missing: Vec<(f64, Triangle)> = all
            .iter()
            .filter(|t| !self.active.contains(t))
            .map(|t| (t.eval(yh), *t))
            .filter(|(v, _)| *v < -ACTIVATION_TOL)
            .collect();
        if missing.is_empty() {
            return false;
        }
        self.rounds += 1;
        if self.rounds > MAX_LAZY_ROUNDS {
            let rest: Vec<Triangle> = all
                .into_iter()
                .filter(|t| !self.active.contains(t))
                .collect();
            self.active.extend(rest);
        } else {
            missing.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            self.active.extend(missing.into_iter().map(|(_, t)| t));
        }
        true
    }

    fn settings(&self, cfg: &SolverConfig) -> SplittingSettings {
        SplittingSettings {
            max_iter: cfg.max_iter.saturating_sub(self.iterations).max(1),
            tol: self.tol,
            gap_tol: self.tol,
            ..SplittingSettings::default()
        }
    }

    fn record(&mut self, sol: &SplittingSolution) {
        self.iterations += sol.iterations;
        self.warm = Some(sol.warm_start());
    }

    fn exhausted(&self, cfg: &SolverConfig) -> bool {
        self.iterations >= cfg.max_iter
    }

    fn tighten(&mut self) {
        self.tol = (self.tol * 0.1).max(1e-13);
    }

    /// Tightens towards the configured tolerance after each activation round.
    fn refine(&mut self, cfg: &SolverConfig) {
        if self.tol > cfg.tol {
            self.tol = (self.tol * 0.1).max(cfg.tol);
        }
    }
}

fn triangle_rows(prog: &mut ConicProgram, m: usize, active: &[Triangle], first_slack: usize) {
    for (k, t) in active.iter().enumerate() {
        let mut row = prog.sparse_block_coefficients(0, t.matrix(m).entries());
        row.push((first_slack + k, -1.0));
        prog.add_row(row, 0.0);
    }
}

fn diag_row(prog: &ConicProgram, i: usize) -> Vec<(usize, f64)> {
    prog.sparse_block_coefficients(0, &[(i, i, 1.0)])
}

/// Solves `nu(W)` with lazy triangle activation; the result is exactly feasible on both sides.
pub fn solve_nu(spec: &ConeSpec, w: &SymMatrix, cfg: &SolverConfig) -> Result<NuEstimate> {
    cfg.validate()?;
    if w.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: w.dim(),
        });
    }
    if w.max_abs() == 0.0 {
        return Err(Error::Degenerate("payoff matrix is zero".into()));
    }
    let m = spec.dim();
    let nvec = splitting::svec_len(m);
    let target_gap = cfg.sigma_budget / 2.0;
    let mut state = LazyState::new(cfg);
    let mut best: Option<NuEstimate> = None;
    loop {
        let mut prog = ConicProgram::new(vec![m], 0, state.active.len());
        prog.set_block_cost(0, &w.scaled(-1.0));
        for i in 0..m {
            let row = diag_row(&prog, i);
            prog.add_row(row, 1.0);
        }
        triangle_rows(&mut prog, m, &state.active, nvec);
        let sol = splitting::solve(&prog, &state.settings(cfg), state.warm.as_ref())?;
        state.record(&sol);

        let raw = splitting::smat(&sol.x[..nvec], m);
        let normalized = raw.unit_diagonal().ok();
        if let Some(yh) = &normalized {
            if state.activate(spec, yh) && !state.exhausted(cfg) {
                state.refine(cfg);
                continue;
            }
        }
        if let Some(est) = normalized.and_then(|_| {
            let x: Vec<f64> = sol.y[..m].iter().map(|v| -v).collect();
            nu_estimate(spec, w, &raw, &x, &state, &sol.y[m..], cfg).ok()
        }) {
            let gap = (est.upper - est.lower) / est.upper.abs().max(1e-300);
            let better = best
                .as_ref()
                .is_none_or(|b| (est.upper - est.lower) < (b.upper - b.lower));
            if better {
                best = Some(est);
            }
            if gap <= target_gap {
                return Ok(best.unwrap());
            }
        }
        if state.exhausted(cfg) {
            return finish_nu(best, cfg, &sol);
        }
        state.tighten();
    }
}

fn nu_estimate(
    spec: &ConeSpec,
    w: &SymMatrix,
    raw: &SymMatrix,
    x: &[f64],
    state: &LazyState,
    lambda: &[f64],
    cfg: &SolverConfig,
) -> Result<NuEstimate> {
    let (yh, _) = repair_correlation(spec, raw, cfg.sigma_budget)?;
    let (x, lambda) = repair_multipliers(w, &state.active, x, lambda)?;
    Ok(NuEstimate {
        lower: w.inner(&yh),
        upper: x.iter().sum(),
        correlation: yh,
        x,
        triangles: state.active.clone(),
        lambda,
        iterations: state.iterations,
    })
}

fn finish_nu(
    best: Option<NuEstimate>,
    cfg: &SolverConfig,
    sol: &SplittingSolution,
) -> Result<NuEstimate> {
    match best {
        Some(b) if (b.upper - b.lower) <= cfg.sigma_budget * b.upper.abs() => Ok(b),
        Some(b) => Err(Error::NonConvergence {
            iterations: b.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            gap: (b.upper - b.lower) / b.upper.abs().max(1e-300),
        }),
        None => Err(Error::NonConvergence {
            iterations: cfg.max_iter,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            gap: f64::INFINITY,
        }),
    }
}

/// Max direction: given `W` in `Cov`, returns witnesses for `(W, Z)` with `Z := Y`.
///
/// For a polyhedral cone the payoff is a weight vector `w` and the paired target is
/// `z = A*(Z)`; for the full PSD cone both are matrices.
pub fn solve_nu_eps(spec: &ConeSpec, payoff: &Operand, cfg: &SolverConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    payoff.validate(spec, cfg.tol)?;
    let w = payoff.payoff_matrix(spec)?;
    let est = solve_nu(spec, &w, cfg)?;
    let eps = cfg.eps;
    let y = perturbed(&est.correlation, eps);
    let target = match spec.cov() {
        CovKind::Polyhedral => Operand::Vector(cones::apply_adjoint(spec, &y)?),
        CovKind::FullPsd => Operand::Matrix(y.clone()),
    };
    let rho = (1.0 - eps) * est.x.iter().sum::<f64>() + eps * w.trace();
    let value = pairing(spec, payoff, &target)?;
    Ok(SolveOutcome {
        primal: PrimalWitness { rho, x: est.x },
        dual: DualWitness { mu: 1.0, y },
        payoff: payoff.clone(),
        target,
        triangles: est.triangles,
        lambda: est.lambda,
        correlation: est.correlation,
        eps,
        gap: 1.0 - value / rho,
        iterations: est.iterations,
    })
}

/// Cover direction: given a target `z` (or `Z`), minimizes `mu` and returns the paired
/// payoff `w` (or `W`) from the dual multipliers, scaled so that `rho = 1`.
pub fn solve_nu_polar_eps(
    spec: &ConeSpec,
    target: &Operand,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    target.validate(spec, cfg.tol)?;
    let m = spec.dim();
    let nvec = splitting::svec_len(m);
    let eps = cfg.eps;
    let target_gap = cfg.sigma_budget / 2.0;
    let mut state = LazyState::new(cfg);
    let mut best: Option<SolveOutcome> = None;
    let mut last_residuals: (f64, f64);
    loop {
        let layout = CoverLayout::build(spec, target, eps, &state.active)?;
        let sol = splitting::solve(&layout.prog, &state.settings(cfg), state.warm.as_ref())?;
        state.record(&sol);
        last_residuals = (sol.primal_residual, sol.dual_residual);

        let raw = splitting::smat(&sol.x[..nvec], m);
        if let Ok(yh) = raw.unit_diagonal() {
            if state.activate(spec, &yh) && !state.exhausted(cfg) {
                state.refine(cfg);
                continue;
            }
        }
        if let Ok(out) = layout.extract(spec, target, &raw, &sol, &state, cfg) {
            let done = out.gap <= target_gap;
            if best.as_ref().is_none_or(|b| out.gap < b.gap) {
                best = Some(out);
            }
            if done {
                return Ok(best.unwrap());
            }
        }
        if state.exhausted(cfg) {
            break;
        }
        state.tighten();
    }
    match best {
        Some(b) if b.gap <= cfg.sigma_budget => Ok(b),
        other => Err(Error::NonConvergence {
            iterations: state.iterations,
            primal_residual: last_residuals.0,
            dual_residual: last_residuals.1,
            gap: other.map_or(f64::INFINITY, |b| b.gap),
        }),
    }
}

/// Variable and row layout of the cover-direction program.
///
/// Variables: `Y' = Y - eps mu I` (block 0), for the full PSD cone `Y - Z` (block 1),
/// then `mu`, the coverage slacks and the triangle slacks (nonnegative).
struct CoverLayout {
    prog: ConicProgram,
    diag_rows: std::ops::Range<usize>,
    cover_rows: std::ops::Range<usize>,
    tri_rows: std::ops::Range<usize>,
}

impl CoverLayout {
    fn build(spec: &ConeSpec, target: &Operand, eps: f64, active: &[Triangle]) -> Result<Self> {
        let m = spec.dim();
        let nvec = splitting::svec_len(m);
        let d = spec.num_constraints();
        match (spec.cov(), target) {
            (CovKind::Polyhedral, Operand::Vector(z)) => {
                let mut prog = ConicProgram::new(vec![m], 0, 1 + d + active.len());
                let mu_col = nvec;
                prog.set_cost(mu_col, 1.0);
                for i in 0..m {
                    let mut row = diag_row(&prog, i);
                    row.push((mu_col, -(1.0 - eps)));
                    prog.add_row(row, 0.0);
                }
                for (f, a) in spec.a_matrices().iter().enumerate() {
                    let mut row = prog.sparse_block_coefficients(0, a.entries());
                    row.push((mu_col, eps * a.trace()));
                    row.push((mu_col + 1 + f, -1.0));
                    prog.add_row(row, z[f]);
                }
                triangle_rows(&mut prog, m, active, mu_col + 1 + d);
                Ok(CoverLayout {
                    prog,
                    diag_rows: 0..m,
                    cover_rows: m..m + d,
                    tri_rows: m + d..m + d + active.len(),
                })
            }
            (CovKind::FullPsd, Operand::Matrix(zm)) => {
                let mut prog = ConicProgram::new(vec![m, m], 0, 1 + active.len());
                let mu_col = 2 * nvec;
                prog.set_cost(mu_col, 1.0);
                for i in 0..m {
                    let mut row = diag_row(&prog, i);
                    row.push((mu_col, -(1.0 - eps)));
                    prog.add_row(row, 0.0);
                }
                let zv = splitting::svec(zm);
                for j in 0..m {
                    for i in 0..=j {
                        let p = splitting::svec_index(i, j);
                        let mut row = vec![(nvec + p, 1.0), (p, -1.0)];
                        if i == j {
                            row.push((mu_col, -eps));
                        }
                        prog.add_row(row, -zv[p]);
                    }
                }
                triangle_rows(&mut prog, m, active, mu_col + 1);
                Ok(CoverLayout {
                    prog,
                    diag_rows: 0..m,
                    cover_rows: m..m + nvec,
                    tri_rows: m + nvec..m + nvec + active.len(),
                })
            }
            _ => Err(Error::InvalidParameter(
                "target does not match the cover cone".into(),
            )),
        }
    }

    fn extract(
        &self,
        spec: &ConeSpec,
        target: &Operand,
        raw: &SymMatrix,
        sol: &SplittingSolution,
        state: &LazyState,
        cfg: &SolverConfig,
    ) -> Result<SolveOutcome> {
        let eps = cfg.eps;
        let m = spec.dim();
        let (yh, _) = repair_correlation(spec, raw, cfg.sigma_budget)?;
        let ye = perturbed(&yh, eps);
        let mu = minimal_scale(spec, target, &ye)?;

        let x_raw: Vec<f64> = sol.y[self.diag_rows.clone()].iter().map(|v| -v).collect();
        let lambda_raw = &sol.y[self.tri_rows.clone()];
        let duals = &sol.y[self.cover_rows.clone()];
        let (payoff, w) = match spec.cov() {
            CovKind::Polyhedral => {
                let wv: Vec<f64> = duals.iter().map(|v| v.max(0.0)).collect();
                let wm = cones::apply_map(spec, &wv)?;
                (Operand::Vector(wv), wm)
            }
            CovKind::FullPsd => {
                let g: Vec<f64> = duals.iter().map(|v| -v).collect();
                let wm = splitting::smat(&g, m).psd_project()?;
                (Operand::Matrix(wm.clone()), wm)
            }
        };
        if w.max_abs() == 0.0 {
            return Err(Error::Numerical("paired payoff vanished".into()));
        }
        let (x, lambda) = repair_multipliers(&w, &state.active, &x_raw, lambda_raw)?;
        let denom = (1.0 - eps) * x.iter().sum::<f64>() + eps * w.trace();
        if !(denom > 0.0) {
            return Err(Error::Numerical(
                "dual normalization is not positive".into(),
            ));
        }
        let scale = 1.0 / denom;
        let payoff = match payoff {
            Operand::Vector(v) => Operand::Vector(v.iter().map(|a| a * scale).collect()),
            Operand::Matrix(mm) => Operand::Matrix(mm.scaled(scale)),
        };
        let x: Vec<f64> = x.iter().map(|a| a * scale).collect();
        let lambda: Vec<f64> = lambda.iter().map(|a| a * scale).collect();
        let w = w.scaled(scale);
        let rho = (1.0 - eps) * x.iter().sum::<f64>() + eps * w.trace();
        let value = pairing(spec, &payoff, target)?;
        Ok(SolveOutcome {
            primal: PrimalWitness { rho, x },
            dual: DualWitness {
                mu,
                y: ye.scaled(mu),
            },
            payoff,
            target: target.clone(),
            triangles: state.active.clone(),
            lambda,
            correlation: yh,
            eps,
            gap: 1.0 - value / (rho * mu),
            iterations: state.iterations,
        })
    }
}

/// Smallest `mu` with `mu Ye` covering the target, padded by a relative `1e-12`.
fn minimal_scale(spec: &ConeSpec, target: &Operand, ye: &SymMatrix) -> Result<f64> {
    let mu = match target {
        Operand::Vector(z) => {
            let cover = cones::apply_adjoint(spec, ye)?;
            z.iter()
                .zip(&cover)
                .map(|(zf, cf)| zf / cf)
                .fold(0.0, f64::max)
        }
        Operand::Matrix(zm) => {
            let e = ye.eigen()?;
            if e.values[0] <= 0.0 {
                return Err(Error::Numerical(
                    "perturbed matrix is not positive definite".into(),
                ));
            }
            let inv_sqrt = e.reconstruct(|v| 1.0 / v.sqrt());
            let inner = SymMatrix::symmetrized(
                inv_sqrt.as_matrix() * zm.as_matrix() * inv_sqrt.as_matrix(),
            );
            inner.max_eigenvalue()?.max(0.0)
        }
    };
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Degenerate(
            "target is not covered by any positive scale".into(),
        ));
    }
    Ok(mu * (1.0 + 1e-12))
}
