//! Randomized hyperplane rounding and empirical rounding constants.
//!
//! All randomness comes from ChaCha8 streams derived from one seed: stream
//! `stage << 40 | chunk` for a fixed chunk of [`CHUNK_SAMPLES`] draws. Chunks are
//! drawn in parallel and merged as integer counts, so results do not depend on
//! the number of worker threads.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{ConeSpec, CovKind, SymMatrix};
use crate::cutset::CutSet;
use crate::error::{Error, Result};
use crate::instances::CspInstance;

/// Worst-case ratio of hyperplane rounding on parity constraints, rounded down.
pub const GW_ALPHA: f64 = 0.87856;

/// Draws per independent RNG stream.
pub const CHUNK_SAMPLES: u64 = 4096;

/// Stream stages; each pipeline stage draws from its own family of streams.
pub mod stage {
    pub const ESTIMATE: u64 = 1;
    pub const COVER: u64 = 2;
    pub const THEORETICAL: u64 = 3;
    pub const PRELIMINARY: u64 = 4;
}

/// RNG for one chunk of one stage.
pub fn stream_rng(seed: u64, stage: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage << 40 | chunk);
    rng
}

/// Rows of `B` with `B^T B = Y / mu`; column `i` is the vector `b_i`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    b: DMatrix<f64>,
}

impl GramFactor {
    pub fn dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn rank(&self) -> usize {
        self.b.nrows()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.b.column(i).iter().copied().collect()
    }

    /// `B^T B`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::symmetrized(self.b.transpose() * &self.b)
    }
}

/// Factors `Y / mu` through its eigendecomposition, dropping the null space.
pub fn gram_factor(y: &SymMatrix, mu: f64) -> Result<GramFactor> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale {mu} is not positive"
        )));
    }
    let yh = y.scaled(1.0 / mu);
    let e = yh.eigen()?;
    let scale = yh.max_abs().max(1.0);
    if e.values[0] < -1e-8 * scale {
        return Err(Error::Numerical(format!(
            "matrix to factor has eigenvalue {:e}",
            e.values[0]
        )));
    }
    let cutoff = 1e-14 * scale;
    let keep: Vec<usize> = (0..e.values.len())
        .filter(|&k| e.values[k] > cutoff)
        .collect();
    let m = yh.dim();
    let b = DMatrix::from_fn(keep.len(), m, |r, i| {
        let k = keep[r];
        e.values[k].sqrt() * e.vectors[(i, k)]
    });
    Ok(GramFactor { b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundingKind {
    GwHyperplane,
}

/// A rounding scheme and the rounding constant it is known to achieve, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingSpec {
    pub kind: RoundingKind,
    pub claimed_alpha: Option<f64>,
}

impl RoundingSpec {
    pub fn gw() -> Self {
        RoundingSpec {
            kind: RoundingKind::GwHyperplane,
            claimed_alpha: None,
        }
    }

    /// Hyperplane rounding, claiming [`GW_ALPHA`] when every constraint is a parity constraint.
    pub fn gw_for(instance: &CspInstance) -> Self {
        RoundingSpec {
            kind: RoundingKind::GwHyperplane,
            claimed_alpha: instance.is_parity_only().then_some(GW_ALPHA),
        }
    }
}

fn canonical_bits(inside: &[bool]) -> Vec<u64> {
    let flip = !inside[0];
    let mut bits = vec![0u64; inside.len().div_ceil(64)];
    for (i, &b) in inside.iter().enumerate() {
        if b != flip {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    bits
}

fn bits_to_cut(bits: &[u64], dim: usize) -> CutSet {
    let inside: Vec<bool> = (0..dim)
        .map(|i| bits[i / 64] >> (i % 64) & 1 == 1)
        .collect();
    CutSet::from_indicator(&inside)
}

fn hyperplane_side(f: &GramFactor, g: &[f64], inside: &mut [bool]) {
    for (i, slot) in inside.iter_mut().enumerate() {
        let col = f.b.column(i);
        let dot: f64 = col.iter().zip(g).map(|(a, b)| a * b).sum();
        *slot = dot >= 0.0;
    }
}

/// One hyperplane cut: `U = {i : <b_i, g> >= 0}` for a standard Gaussian `g`, made canonical.
pub fn gw_sample<R: Rng + ?Sized>(f: &GramFactor, rng: &mut R) -> CutSet {
    let g: Vec<f64> = (0..f.rank()).map(|_| rng.sample(StandardNormal)).collect();
    let mut inside = vec![false; f.dim()];
    hyperplane_side(f, &g, &mut inside);
    CutSet::from_indicator(&inside)
}

/// Counts of canonical cuts over `samples` draws using chunks `first_chunk..` of `stage`.
pub fn sample_counts(
    f: &GramFactor,
    seed: u64,
    stage: u64,
    first_chunk: u64,
    samples: u64,
) -> BTreeMap<CutSet, u64> {
    let chunks = samples.div_ceil(CHUNK_SAMPLES);
    let partial: Vec<HashMap<Vec<u64>, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK_SAMPLES.min(samples - c * CHUNK_SAMPLES);
            let mut rng = stream_rng(seed, stage, first_chunk + c);
            let mut g = vec![0.0; f.rank()];
            let mut inside = vec![false; f.dim()];
            let mut counts = HashMap::new();
            for _ in 0..n {
                for v in g.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                hyperplane_side(f, &g, &mut inside);
                *counts.entry(canonical_bits(&inside)).or_insert(0) += 1;
            }
            counts
        })
        .collect();
    let mut merged: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    for part in partial {
        for (k, v) in part {
            *merged.entry(k).or_insert(0) += v;
        }
    }
    merged
        .into_iter()
        .map(|(k, v)| (bits_to_cut(&k, f.dim()), v))
        .collect()
}

/// Empirical rounding constant of one fixed matrix `Y` (unit diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    /// Minimum over constraints (or directions) of the empirical `E[R_Y]`-to-`Y` ratio.
    pub alpha_hat: f64,
    /// `P(f satisfied) / <A_f, Y>` per constraint; `None` for excluded constraints.
    pub per_constraint_ratios: Vec<Option<f64>>,
    /// Normal-approximation half-width at 95%.
    pub confidence_halfwidth: f64,
    /// Constraints with `<A_f, Y>` at or below the tolerance.
    pub excluded: Vec<usize>,
    pub samples: u64,
}

impl AlphaEstimate {
    /// `alpha_hat - confidence_halfwidth`.
    pub fn lower_bound(&self) -> f64 {
        self.alpha_hat - self.confidence_halfwidth
    }
}

/// Constraints the relaxation nearly rules out carry no usable ratio at practical sample sizes.
const DEGENERATE_TOL: f64 = 1e-3;
const BATCHES: u64 = 10;

/// Estimates `max {a : E[R_Y] >= a Y}` for the given `Y` from `samples` draws.
pub fn estimate_rounding_constant(
    spec: &ConeSpec,
    rounding: &RoundingSpec,
    y: &SymMatrix,
    samples: u64,
    seed: u64,
) -> Result<AlphaEstimate> {
    estimate_in_stage(spec, rounding, y, samples, seed, stage::ESTIMATE)
}

/// [`estimate_rounding_constant`] drawing from the streams of another stage.
pub fn estimate_in_stage(
    spec: &ConeSpec,
    rounding: &RoundingSpec,
    y: &SymMatrix,
    samples: u64,
    seed: u64,
    stage: u64,
) -> Result<AlphaEstimate> {
    let RoundingKind::GwHyperplane = rounding.kind;
    if samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    if y.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: y.dim(),
        });
    }
    if y.diagonal().iter().any(|d| (d - 1.0).abs() > 1e-8) {
        return Err(Error::InvalidParameter(
            "matrix must have unit diagonal".into(),
        ));
    }
    let factor = gram_factor(y, 1.0)?;
    match spec.cov() {
        CovKind::Polyhedral => estimate_polyhedral(spec, &factor, y, samples, seed, stage),
        CovKind::FullPsd => estimate_psd(&factor, y, samples, seed, stage),
    }
}

fn estimate_polyhedral(
    spec: &ConeSpec,
    factor: &GramFactor,
    y: &SymMatrix,
    samples: u64,
    seed: u64,
    stage: u64,
) -> Result<AlphaEstimate> {
    let counts = sample_counts(factor, seed, stage, 0, samples);
    let t = samples as f64;
    let mut ratios = Vec::with_capacity(spec.num_constraints());
    let mut excluded = Vec::new();
    let mut alpha_hat = f64::INFINITY;
    let mut lower = f64::INFINITY;
    for (f, a) in spec.a_matrices().iter().enumerate() {
        let r = a.inner(y);
        if r <= DEGENERATE_TOL {
            excluded.push(f);
            ratios.push(None);
            continue;
        }
        let hits: u64 = counts
            .iter()
            .filter(|(u, _)| a.quad_form(&u.sign_vector()) > 0.5)
            .map(|(_, &c)| c)
            .sum();
        let p = hits as f64 / t;
        let se = (p * (1.0 - p)).max(1.0 / t).sqrt() / t.sqrt();
        let ratio = p / r;
        alpha_hat = alpha_hat.min(ratio);
        lower = lower.min(ratio - 1.96 * se / r);
        ratios.push(Some(ratio));
    }
    if !alpha_hat.is_finite() {
        return Err(Error::Degenerate(
            "every constraint is degenerate for this matrix".into(),
        ));
    }
    Ok(AlphaEstimate {
        alpha_hat,
        per_constraint_ratios: ratios,
        confidence_halfwidth: alpha_hat - lower,
        excluded,
        samples,
    })
}

/// `lambda_min(Y^{-1/2} E Y^{-1/2})` on the range of `Y`.
fn generalized_min_ratio(y: &SymMatrix, e: &SymMatrix) -> Result<f64> {
    let eig = y.eigen()?;
    let cutoff = 1e-10 * eig.values.last().copied().unwrap_or(1.0).max(1e-300);
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > cutoff)
        .collect();
    let m = y.dim();
    let basis = DMatrix::from_fn(m, keep.len(), |i, r| {
        eig.vectors[(i, keep[r])] / eig.values[keep[r]].sqrt()
    });
    let reduced = SymMatrix::symmetrized(basis.transpose() * e.as_matrix() * &basis);
    reduced.min_eigenvalue()
}

fn empirical_mean(counts: &BTreeMap<CutSet, u64>, dim: usize) -> SymMatrix {
    let total: u64 = counts.values().sum();
    let mut e = SymMatrix::zeros(dim);
    for (u, &c) in counts {
        e.add_outer(c as f64 / total as f64, &u.sign_vector());
    }
    e
}

fn estimate_psd(
    factor: &GramFactor,
    y: &SymMatrix,
    samples: u64,
    seed: u64,
    stage: u64,
) -> Result<AlphaEstimate> {
    let per_batch = (samples / BATCHES).max(1);
    let mut merged: BTreeMap<CutSet, u64> = BTreeMap::new();
    let mut batch_values = Vec::new();
    let chunks_per_batch = per_batch.div_ceil(CHUNK_SAMPLES);
    for b in 0..BATCHES {
        let n = if b + 1 == BATCHES {
            samples - per_batch * (BATCHES - 1)
        } else {
            per_batch
        };
        let counts = sample_counts(factor, seed, stage, b * chunks_per_batch, n);
        batch_values.push(generalized_min_ratio(y, &empirical_mean(&counts, y.dim()))?);
        for (u, c) in counts {
            *merged.entry(u).or_insert(0) += c;
        }
    }
    let alpha_hat = generalized_min_ratio(y, &empirical_mean(&merged, y.dim()))?;
    let k = batch_values.len() as f64;
    let mean = batch_values.iter().sum::<f64>() / k;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(AlphaEstimate {
        alpha_hat,
        per_constraint_ratios: Vec::new(),
        confidence_halfwidth: 1.96 * (var / k).sqrt(),
        excluded: Vec::new(),
        samples,
    })
}

/// `arccos(t) / pi` divided by `(1 - t) / 2`: the hyperplane rounding ratio of a cut edge.
pub fn gw_ratio(t: f64) -> f64 {
    (t.clamp(-1.0, 1.0).acos() / std::f64::consts::PI) / ((1.0 - t) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::DistKind;
    use crate::instances::{encode_problem, ProblemKind, RawItem};

    fn correlation(t: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![1.0, t], vec![t, 1.0]]).unwrap()
    }

    #[test]
    fn factor_reconstructs() {
        let y = SymMatrix::from_rows(&[
            vec![1.0, 0.3, -0.2],
            vec![0.3, 1.0, 0.5],
            vec![-0.2, 0.5, 1.0],
        ])
        .unwrap();
        let f = gram_factor(&y, 1.0).unwrap();
        assert!(f.reconstruct().minus(&y).max_abs() < 1e-12);
        for i in 0..3 {
            let v = f.vector(i);
            assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let f = gram_factor(&correlation(-1.0), 1.0).unwrap();
        assert_eq!(f.rank(), 1);
        let (a, b) = (f.vector(0), f.vector(1));
        assert!((a[0] + b[0]).abs() < 1e-12);
        assert!(gram_factor(&SymMatrix::from_diagonal(&[1.0, -1.0]), 1.0).is_err());
    }

    #[test]
    fn separation_probabilities() {
        let mut rng = stream_rng(11, 0, 0);
        let f = gram_factor(&SymMatrix::identity(2), 1.0).unwrap();
        let sep = (0..10_000)
            .filter(|_| gw_sample(&f, &mut rng).members() == [0])
            .count();
        assert!((sep as f64 / 1e4 - 0.5).abs() < 0.02);
        let anti = gram_factor(&correlation(-1.0), 1.0).unwrap();
        assert!((0..100).all(|_| gw_sample(&anti, &mut rng).members() == [0]));
        let same = gram_factor(&correlation(1.0), 1.0).unwrap();
        assert!((0..100).all(|_| gw_sample(&same, &mut rng).members() == [0, 1]));
    }

    #[test]
    fn counts_are_deterministic_and_thread_independent() {
        let f = gram_factor(&SymMatrix::identity(4), 1.0).unwrap();
        let a = sample_counts(&f, 5, stage::COVER, 0, 10_000);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| sample_counts(&f, 5, stage::COVER, 0, 10_000));
        assert_eq!(a, b);
        assert_eq!(a.values().sum::<u64>(), 10_000);
        let c = sample_counts(&f, 6, stage::COVER, 0, 10_000);
        assert_ne!(a, c);
    }

    #[test]
    fn gw_ratio_at_worst_angle() {
        let t = (2.3311f64).cos();
        assert!((gw_ratio(t) - 0.87856).abs() < 1e-4);
        assert!((gw_ratio(-1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_on_worst_angle_edge() {
        let inst = encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let t = (2.3311f64).cos();
        let y = SymMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, t], vec![0.0, t, 1.0]])
            .unwrap();
        let est = estimate_rounding_constant(&spec, &RoundingSpec::gw_for(&inst), &y, 100_000, 3)
            .unwrap();
        assert!(
            (est.alpha_hat - 0.87856).abs() < 3.0 * est.confidence_halfwidth.max(1e-3),
            "{est:?}"
        );

        let y = SymMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ])
        .unwrap();
        let est = estimate_rounding_constant(&spec, &RoundingSpec::gw(), &y, 1000, 3).unwrap();
        assert_eq!(est.alpha_hat, 1.0);
    }

    #[test]
    fn degenerate_constraint_is_excluded() {
        let inst = encode_problem(
            ProblemKind::MaxCut,
            &[RawItem::edge(1, 2, 1.0), RawItem::edge(1, 3, 1.0)],
            3,
        )
        .unwrap();
        let spec = inst.cone_spec(DistKind::Psd).unwrap();
        let y = SymMatrix::from_fn(4, |i, j| {
            if i == 0 || j == 0 {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            } else {
                1.0
            }
        });
        let est = estimate_rounding_constant(&spec, &RoundingSpec::gw(), &y, 1000, 1);
        assert!(matches!(est, Err(Error::Degenerate(_))));
    }

    #[test]
    fn full_psd_estimate_beats_two_over_pi() {
        let spec = ConeSpec::full_psd(4, DistKind::Psd);
        let y = SymMatrix::from_rows(&[
            vec![1.0, 0.4, -0.3, 0.1],
            vec![0.4, 1.0, 0.2, -0.5],
            vec![-0.3, 0.2, 1.0, 0.3],
            vec![0.1, -0.5, 0.3, 1.0],
        ])
        .unwrap();
        let est = estimate_rounding_constant(&spec, &RoundingSpec::gw(), &y, 40_000, 9).unwrap();
        assert!(
            est.alpha_hat >= 2.0 / std::f64::consts::PI - est.confidence_halfwidth,
            "{est:?}"
        );
    }
}
