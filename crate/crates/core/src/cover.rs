//! Fractional covers built from rounding samples.
//!
//! Theoretical mode draws the sample count the concentration bounds ask for and
//! scales counts by `mu / ((1 - gamma) alpha T)`. Adaptive mode draws batches,
//! rescales the empirical distribution by the smallest factor that makes it cover
//! the target exactly, and stops once that cover is cheap enough.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cones::{self, ConeSpec, CovKind, SymMatrix};
use crate::cutset::CutSet;
use crate::error::{Error, Result};
use crate::relax::{DualWitness, Operand};
use crate::rounding::{self, stage, GramFactor, RoundingSpec, CHUNK_SAMPLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleRegime {
    Polyhedral,
    PsdBernstein,
    PsdNesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub samples: u64,
    pub gamma: f64,
    pub regime: SampleRegime,
}

/// Inputs of the sample-count formulas. `n` is the matrix order for the PSD regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetParams {
    pub d: usize,
    pub n: usize,
    pub gamma: f64,
    pub kappa: f64,
    pub eps: f64,
    pub alpha: f64,
}

fn ceil_count(v: f64) -> Result<u64> {
    if !v.is_finite() || v > u64::MAX as f64 {
        return Err(Error::InvalidParameter(format!(
            "sample count {v} is not representable"
        )));
    }
    Ok((v.ceil() as u64).max(1))
}

/// Sample counts from the concentration arguments:
///
/// * polyhedral: `ceil(2 (ln d + ln n) / (gamma^2 kappa eps alpha))`;
/// * matrix Bernstein with variance `(n/eps)^2` and range `n/eps`:
///   `max(ceil(8 s^2 ln(2n) / (gamma alpha)^2), ceil(16 r ln(2n) / (3 gamma alpha)))`;
/// * the PSD rounding bound with `xi = eps / n`: `ceil(2 pi ln(2n) / (gamma^2 xi))`.
pub fn sample_budget(regime: SampleRegime, p: &BudgetParams) -> Result<SampleBudget> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{name} = {v} must be positive"
            )))
        }
    };
    if !(p.gamma > 0.0 && p.gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {} not in (0, 1)",
            p.gamma
        )));
    }
    positive("eps", p.eps)?;
    if p.n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let n = p.n as f64;
    let g = p.gamma;
    let samples = match regime {
        SampleRegime::Polyhedral => {
            positive("kappa", p.kappa)?;
            positive("alpha", p.alpha)?;
            if p.d == 0 {
                return Err(Error::InvalidParameter("d must be positive".into()));
            }
            let logs = (p.d as f64).ln() + n.ln();
            ceil_count(2.0 * logs / (g * g * p.kappa * p.eps * p.alpha))?
        }
        SampleRegime::PsdBernstein => {
            positive("alpha", p.alpha)?;
            let range = n / p.eps;
            let variance = range * range;
            let ga = g * p.alpha;
            let l = (2.0 * n).ln();
            ceil_count(8.0 * variance * l / (ga * ga))?
                .max(ceil_count(16.0 * range * l / (3.0 * ga))?)
        }
        SampleRegime::PsdNesterov => {
            let xi = p.eps / n;
            ceil_count(2.0 * std::f64::consts::PI * (2.0 * n).ln() / (g * g * xi))?
        }
    };
    Ok(SampleBudget {
        samples,
        gamma: g,
        regime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverMode {
    Theoretical,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverMeta {
    pub samples_used: u64,
    pub gamma: f64,
    pub alpha_used: f64,
    pub mode: CoverMode,
}

/// Nonnegative weights on canonical cut sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    entries: BTreeMap<CutSet, f64>,
    pub meta: Option<CoverMeta>,
}

impl Cover {
    /// Builds a cover, dropping zero weights; fails on negative or non-finite weights.
    pub fn new(entries: impl IntoIterator<Item = (CutSet, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (u, w) in entries {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "cover weight {w} is invalid"
                )));
            }
            if w > 0.0 {
                *map.entry(u).or_insert(0.0) += w;
            }
        }
        Ok(Cover {
            entries: map,
            meta: None,
        })
    }

    pub fn empty() -> Self {
        Cover {
            entries: BTreeMap::new(),
            meta: None,
        }
    }

    pub fn entries(&self) -> &BTreeMap<CutSet, f64> {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = &CutSet> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `<1, y>`.
    pub fn total_weight(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn scaled(&self, a: f64) -> Cover {
        Cover {
            entries: self
                .entries
                .iter()
                .map(|(u, w)| (u.clone(), w * a))
                .collect(),
            meta: self.meta,
        }
    }

    /// `sum_U y_U S_U`.
    pub fn to_matrix(&self, dim: usize) -> SymMatrix {
        let mut out = SymMatrix::zeros(dim);
        for (u, &w) in &self.entries {
            out.add_outer(w, &u.sign_vector());
        }
        out
    }

    /// `sum_U y_U A*(S_U)`.
    pub fn coverage(&self, spec: &ConeSpec) -> Result<Vec<f64>> {
        if !spec.is_polyhedral() {
            return Err(Error::RequiresPolyhedral);
        }
        let mut out = vec![0.0; spec.num_constraints()];
        for (u, &w) in &self.entries {
            let s = u.sign_vector();
            for (o, a) in out.iter_mut().zip(spec.a_matrices()) {
                *o += w * a.quad_form(&s);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverCheck {
    pub feasible: bool,
    pub worst_residual: f64,
}

/// Residual of `sum y_U S_U >= Z` in the cover order.
pub fn check_cover_feasible(
    spec: &ConeSpec,
    cover: &Cover,
    target: &Operand,
    tol: f64,
) -> Result<CoverCheck> {
    let worst_residual = match (spec.cov(), target) {
        (CovKind::Polyhedral, Operand::Vector(z)) => {
            let cov = cover.coverage(spec)?;
            if z.len() != cov.len() {
                return Err(Error::DimensionMismatch {
                    expected: cov.len(),
                    found: z.len(),
                });
            }
            cov.iter()
                .zip(z)
                .map(|(c, zf)| c - zf)
                .fold(f64::INFINITY, f64::min)
        }
        (CovKind::Polyhedral, Operand::Matrix(zm)) => {
            let z = cones::apply_adjoint(spec, zm)?;
            return check_cover_feasible(spec, cover, &Operand::Vector(z), tol);
        }
        (CovKind::FullPsd, Operand::Matrix(zm)) => {
            cover.to_matrix(spec.dim()).minus(zm).min_eigenvalue()?
        }
        (CovKind::FullPsd, Operand::Vector(_)) => {
            return Err(Error::InvalidParameter(
                "full PSD cover needs a matrix target".into(),
            ))
        }
    };
    Ok(CoverCheck {
        feasible: worst_residual >= -tol,
        worst_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverConfig {
    pub mode: CoverMode,
    /// Sample count for theoretical mode.
    pub budget: Option<SampleBudget>,
    /// Adaptive mode stops once the cover costs at most this much.
    pub cost_limit: Option<f64>,
    /// Adaptive sample cap.
    pub samples_cap: u64,
    pub seed: u64,
}

impl CoverConfig {
    pub fn adaptive(cost_limit: f64, seed: u64) -> Self {
        CoverConfig {
            mode: CoverMode::Adaptive,
            budget: None,
            cost_limit: Some(cost_limit),
            samples_cap: 1_000_000,
            seed,
        }
    }

    pub fn theoretical(budget: SampleBudget, seed: u64) -> Self {
        CoverConfig {
            mode: CoverMode::Theoretical,
            budget: Some(budget),
            cost_limit: None,
            samples_cap: budget.samples,
            seed,
        }
    }
}

/// Samples `R_{Y/mu}` and turns the counts into a cover of `target`.
pub fn build_cover(
    spec: &ConeSpec,
    rounding: &RoundingSpec,
    witness: &DualWitness,
    target: &Operand,
    alpha_used: f64,
    cfg: &CoverConfig,
) -> Result<Cover> {
    if !(alpha_used > 0.0) || alpha_used > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "rounding constant {alpha_used} not in (0, 1]"
        )));
    }
    let rounding::RoundingKind::GwHyperplane = rounding.kind;
    let factor = rounding::gram_factor(&witness.y, witness.mu)?;
    match cfg.mode {
        CoverMode::Theoretical => {
            let budget = cfg.budget.ok_or_else(|| {
                Error::InvalidParameter("theoretical mode needs a sample budget".into())
            })?;
            let counts =
                rounding::sample_counts(&factor, cfg.seed, stage::THEORETICAL, 0, budget.samples);
            let scale = witness.mu / ((1.0 - budget.gamma) * alpha_used * budget.samples as f64);
            let mut cover = Cover::new(counts.into_iter().map(|(u, c)| (u, c as f64 * scale)))?;
            cover.meta = Some(CoverMeta {
                samples_used: budget.samples,
                gamma: budget.gamma,
                alpha_used,
                mode: CoverMode::Theoretical,
            });
            Ok(cover)
        }
        CoverMode::Adaptive => adaptive_cover(spec, &factor, target, alpha_used, cfg),
    }
}

/// Running integer statistics of the sampled cuts.
struct Tally {
    counts: BTreeMap<CutSet, u64>,
    total: u64,
    /// Polyhedral: satisfied counts per constraint.
    hits: Vec<u64>,
    /// Full PSD: `sum count_U S_U`, integer valued.
    moment: SymMatrix,
}

impl Tally {
    fn add(&mut self, spec: &ConeSpec, batch: BTreeMap<CutSet, u64>) {
        for (u, c) in batch {
            let s = u.sign_vector();
            if spec.is_polyhedral() {
                for (h, a) in self.hits.iter_mut().zip(spec.a_matrices()) {
                    if a.quad_form(&s) > 0.5 {
                        *h += c;
                    }
                }
            } else {
                self.moment.add_outer(c as f64, &s);
            }
            self.total += c;
            *self.counts.entry(u).or_insert(0) += c;
        }
    }

    /// Smallest `c` such that `c / total * sum count_U S_U` covers the target.
    fn scale(&self, target: &Operand) -> Result<f64> {
        let t = self.total as f64;
        match target {
            Operand::Vector(z) => {
                let mut c: f64 = 0.0;
                for (zf, &h) in z.iter().zip(&self.hits) {
                    if *zf > 0.0 {
                        if h == 0 {
                            return Ok(f64::INFINITY);
                        }
                        c = c.max(zf * t / h as f64);
                    }
                }
                Ok(c)
            }
            Operand::Matrix(zm) => {
                let mean = self.moment.scaled(1.0 / t);
                min_cover_scale(&mean, zm)
            }
        }
    }
}

/// Smallest `c` with `c M >= Z` in the PSD order, or infinity when `Z` leaves the range of `M`.
pub fn min_cover_scale(m: &SymMatrix, z: &SymMatrix) -> Result<f64> {
    let e = m.eigen()?;
    let top = e.values.last().copied().unwrap_or(0.0);
    let cutoff = 1e-10 * top.max(1e-300);
    let dim = m.dim();
    let (range, null): (Vec<usize>, Vec<usize>) = (0..dim).partition(|&k| e.values[k] > cutoff);
    let zscale = z.max_abs().max(1e-300);
    for &k in &null {
        let v: Vec<f64> = e.vectors.column(k).iter().copied().collect();
        if z.quad_form(&v) > 1e-10 * zscale {
            return Ok(f64::INFINITY);
        }
    }
    if range.is_empty() {
        return Ok(if zscale > 1e-300 { f64::INFINITY } else { 0.0 });
    }
    let basis = nalgebra::DMatrix::from_fn(dim, range.len(), |i, r| {
        e.vectors[(i, range[r])] / e.values[range[r]].sqrt()
    });
    let reduced = SymMatrix::symmetrized(basis.transpose() * z.as_matrix() * &basis);
    Ok(reduced.max_eigenvalue()?.max(0.0))
}

fn adaptive_cover(
    spec: &ConeSpec,
    factor: &GramFactor,
    target: &Operand,
    alpha_used: f64,
    cfg: &CoverConfig,
) -> Result<Cover> {
    let limit = cfg
        .cost_limit
        .ok_or_else(|| Error::InvalidParameter("adaptive mode needs a cost limit".into()))?;
    let target = match (spec.cov(), target) {
        (CovKind::Polyhedral, Operand::Matrix(zm)) => {
            Operand::Vector(cones::apply_adjoint(spec, zm)?)
        }
        _ => target.clone(),
    };
    let m = spec.dim() as u64;
    let batch = (m * m).max(1024);
    let mut tally = Tally {
        counts: BTreeMap::new(),
        total: 0,
        hits: vec![0; spec.num_constraints()],
        moment: SymMatrix::zeros(spec.dim()),
    };
    let mut next_chunk = 0;
    let mut best = f64::INFINITY;
    while tally.total < cfg.samples_cap {
        let n = batch.min(cfg.samples_cap - tally.total);
        let counts = rounding::sample_counts(factor, cfg.seed, stage::COVER, next_chunk, n);
        next_chunk += n.div_ceil(CHUNK_SAMPLES);
        tally.add(spec, counts);
        let c = tally.scale(&target)? * (1.0 + 1e-12);
        best = best.min(c);
        if c <= limit {
            let t = tally.total as f64;
            let mut cover = Cover::new(
                tally
                    .counts
                    .iter()
                    .map(|(u, &k)| (u.clone(), c * k as f64 / t)),
            )?;
            cover.meta = Some(CoverMeta {
                samples_used: tally.total,
                gamma: 0.0,
                alpha_used,
                mode: CoverMode::Adaptive,
            });
            return Ok(cover);
        }
    }
    Err(Error::BudgetExhausted {
        samples: tally.total,
        best_ratio: best / limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::DistKind;
    use crate::instances::{encode_problem, ProblemKind, RawItem};
    use crate::relax::{solve_nu_polar_eps, SolverConfig};

    fn k3() -> crate::instances::CspInstance {
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
    fn budget_examples() {
        let p = BudgetParams {
            d: 20,
            n: 10,
            gamma: 0.1,
            kappa: 0.25,
            eps: 0.1,
            alpha: 0.878,
        };
        assert_eq!(
            sample_budget(SampleRegime::Polyhedral, &p).unwrap().samples,
            48_277
        );
        let bern = sample_budget(SampleRegime::PsdBernstein, &p)
            .unwrap()
            .samples;
        let expect = (8.0 * 1e4 * 20f64.ln() / (0.1f64 * 0.878).powi(2)).ceil() as u64;
        assert_eq!(bern, expect);
        assert!((bern as f64 - 3.11e7).abs() < 0.01e7);
        let nest = sample_budget(SampleRegime::PsdNesterov, &p)
            .unwrap()
            .samples;
        assert_eq!(
            nest,
            (2.0 * std::f64::consts::PI * 20f64.ln() * 1e4).ceil() as u64
        );
        assert!(
            sample_budget(SampleRegime::Polyhedral, &BudgetParams { gamma: 0.0, ..p }).is_err()
        );
    }

    #[test]
    fn k3_half_cover_is_tight() {
        let inst = k3();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let cover = Cover::new(
            CutSet::enumerate(4)
                .filter(|u| u.members().len() == 2)
                .map(|u| (u, 0.5)),
        )
        .unwrap();
        let z = Operand::Vector(vec![1.0; 3]);
        let r = check_cover_feasible(&spec, &cover, &z, 1e-12).unwrap();
        assert!(r.feasible && r.worst_residual.abs() < 1e-15);
        let r = check_cover_feasible(&spec, &Cover::empty(), &z, 1e-12).unwrap();
        assert!(!r.feasible);
        let doubled = check_cover_feasible(&spec, &cover.scaled(2.0), &z, 0.0).unwrap();
        assert!((doubled.worst_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn theoretical_cover_scaling() {
        let inst = k3();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let cfg = SolverConfig::new(0.1, 0.05).unwrap();
        let out = solve_nu_polar_eps(&spec, &Operand::Vector(vec![1.0; 3]), &cfg).unwrap();
        let budget = SampleBudget {
            samples: 2000,
            gamma: 0.1,
            regime: SampleRegime::Polyhedral,
        };
        let cover = build_cover(
            &spec,
            &RoundingSpec::gw_for(&inst),
            &out.dual,
            &out.target,
            0.87856,
            &CoverConfig::theoretical(budget, 4),
        )
        .unwrap();
        let expect = out.dual.mu / (0.9 * 0.87856);
        assert!((cover.total_weight() - expect).abs() < 1e-9 * expect);
        let again = build_cover(
            &spec,
            &RoundingSpec::gw_for(&inst),
            &out.dual,
            &out.target,
            0.87856,
            &CoverConfig::theoretical(budget, 4),
        )
        .unwrap();
        assert_eq!(cover, again);
    }

    #[test]
    fn adaptive_cover_on_k2() {
        let inst = encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let cfg = SolverConfig::new(0.05, 0.05).unwrap();
        let z = Operand::Vector(vec![1.0]);
        let out = solve_nu_polar_eps(&spec, &z, &cfg).unwrap();
        let cover = build_cover(
            &spec,
            &RoundingSpec::gw_for(&inst),
            &out.dual,
            &z,
            0.87856,
            &CoverConfig::adaptive(out.dual.mu / 0.8, 1),
        )
        .unwrap();
        let r = check_cover_feasible(&spec, &cover, &z, 1e-12).unwrap();
        assert!(r.feasible);
        assert!(cover.total_weight() <= out.dual.mu / 0.8);
    }

    #[test]
    fn adaptive_cover_reports_exhaustion() {
        let inst = encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let cfg = SolverConfig::new(0.05, 0.05).unwrap();
        let z = Operand::Vector(vec![1.0]);
        let out = solve_nu_polar_eps(&spec, &z, &cfg).unwrap();
        let mut c = CoverConfig::adaptive(0.1, 1);
        c.samples_cap = 3000;
        let err = build_cover(&spec, &RoundingSpec::gw(), &out.dual, &z, 0.9, &c).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { samples: 3000, .. }));
    }

    #[test]
    fn adding_a_cut_never_lowers_residual() {
        let inst = k3();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let z = Operand::Vector(vec![1.0; 3]);
        let base = Cover::new([(CutSet::new([0, 1], 4).unwrap(), 0.7)]).unwrap();
        let before = check_cover_feasible(&spec, &base, &z, 0.0)
            .unwrap()
            .worst_residual;
        for u in CutSet::enumerate(4) {
            let mut entries: Vec<_> = base
                .entries()
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            entries.push((u, 0.3));
            let after = check_cover_feasible(&spec, &Cover::new(entries).unwrap(), &z, 0.0)
                .unwrap()
                .worst_residual;
            assert!(after >= before);
        }
    }

    #[test]
    fn min_cover_scale_cases() {
        let m = SymMatrix::identity(3);
        let z = SymMatrix::from_diagonal(&[2.0, 1.0, 0.5]);
        assert!((min_cover_scale(&m, &z).unwrap() - 2.0).abs() < 1e-12);
        let m = SymMatrix::from_diagonal(&[1.0, 1.0, 0.0]);
        assert_eq!(min_cover_scale(&m, &z).unwrap(), f64::INFINITY);
    }
}
