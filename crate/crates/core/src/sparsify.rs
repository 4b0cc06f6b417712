//! Support reduction for full PSD covers.
//!
//! Writing `M = sum_U y_U S_U`, each term becomes `u_U u_U^T` with
//! `u_U = sqrt(y_U) M^{-1/2} s_U` on the range of `M`, so the terms sum to the identity.
//! A lower-barrier greedy walk then picks terms one at a time until the weighted sum
//! dominates a multiple of the identity cheaply enough. Dominating `M` implies
//! dominating any `Z` that the input cover dominates.

use nalgebra::{DMatrix, DVector};

use crate::cones::SymMatrix;
use crate::cover::Cover;
use crate::cutset::CutSet;
use crate::error::{Error, Result};

/// Support bound constant: outputs have at most `SUPPORT_CONSTANT * m / eps_s^2` cuts.
pub const SUPPORT_CONSTANT: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsifyConfig {
    pub eps_s: f64,
    pub tol: f64,
}

impl SparsifyConfig {
    pub fn new(eps_s: f64, tol: f64) -> Result<Self> {
        let cfg = SparsifyConfig { eps_s, tol };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_s > 0.0 && self.eps_s < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_s = {} not in (0, 1)",
                self.eps_s
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol = {} is negative",
                self.tol
            )));
        }
        Ok(())
    }
}

pub fn support_bound(dim: usize, eps_s: f64) -> usize {
    (SUPPORT_CONSTANT * dim as f64 / (eps_s * eps_s)).floor() as usize
}

/// Returns the cover unchanged when its support is already within the bound,
/// otherwise runs the barrier selection.
pub fn sparsify_cover(cover: &Cover, z: &SymMatrix, cfg: &SparsifyConfig) -> Result<Cover> {
    cfg.validate()?;
    check_input(cover, z, cfg)?;
    if cover.len() <= support_bound(z.dim(), cfg.eps_s) {
        return Ok(cover.clone());
    }
    select(cover, z, cfg)
}

/// Runs the barrier selection regardless of the current support size.
pub fn barrier_sparsify(cover: &Cover, z: &SymMatrix, cfg: &SparsifyConfig) -> Result<Cover> {
    cfg.validate()?;
    check_input(cover, z, cfg)?;
    select(cover, z, cfg)
}

fn check_input(cover: &Cover, z: &SymMatrix, cfg: &SparsifyConfig) -> Result<()> {
    let dim = z.dim();
    if let Some(u) = cover.support().find(|u| u.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: u.dim(),
        });
    }
    let scale = z.max_abs().max(1.0);
    if z.min_eigenvalue()? < -cfg.tol * scale {
        return Err(Error::InvalidParameter(
            "target is not positive semidefinite".into(),
        ));
    }
    let slack = cover.to_matrix(dim).minus(z).min_eigenvalue()?;
    if slack < -cfg.tol {
        return Err(Error::InvalidParameter(format!(
            "input cover is infeasible (residual {slack:.3e})"
        )));
    }
    Ok(())
}

fn select(cover: &Cover, z: &SymMatrix, cfg: &SparsifyConfig) -> Result<Cover> {
    let dim = z.dim();
    let cost = cover.total_weight();
    if cover.is_empty() {
        return Ok(cover.clone());
    }
    let keys: Vec<&CutSet> = cover.support().collect();
    let weights: Vec<f64> = cover.entries().values().copied().collect();

    // Whitening map onto the range of M.
    let m = cover.to_matrix(dim);
    let e = m.eigen()?;
    let top = e.values.last().copied().unwrap_or(0.0);
    let range: Vec<usize> = (0..dim).filter(|&k| e.values[k] > 1e-10 * top).collect();
    let r = range.len();
    if r == 0 {
        return Err(Error::Degenerate("cover matrix vanishes".into()));
    }
    let whiten = DMatrix::from_fn(r, dim, |a, i| {
        e.vectors[(i, range[a])] / e.values[range[a]].sqrt()
    });
    let vecs: Vec<DVector<f64>> = keys
        .iter()
        .zip(&weights)
        .map(|(u, &w)| &whiten * DVector::from_vec(u.sign_vector()) * w.sqrt())
        .collect();

    let theta = cfg.eps_s;
    let delta = theta / 4.0;
    let max_steps = (SUPPORT_CONSTANT * r as f64 / (theta * theta)).ceil() as usize;
    let target_ratio = (1.0 + theta) * cost;

    let mut a = DMatrix::<f64>::zeros(r, r);
    let mut ell = -(r as f64);
    let mut picked = vec![0.0; vecs.len()];
    let mut spent = 0.0;
    let mut lam_min = 0.0;
    for step in 0..=max_steps {
        let eig = SymMatrix::symmetrized(a.clone()).eigen()?;
        lam_min = eig.values[0];
        if spent > 0.0 && lam_min > 0.0 && spent * (1.0 + 1e-12) / lam_min <= target_ratio {
            break;
        }
        if step == max_steps {
            break;
        }
        let next = ell + delta;
        let phi: f64 = eig.values.iter().map(|l| 1.0 / (l - ell)).sum();
        let phi_next: f64 = eig.values.iter().map(|l| 1.0 / (l - next)).sum();
        let gap = phi_next - phi;
        if eig.values[0] <= next || !(gap > 0.0) {
            return Err(Error::SparsifyStalled(format!(
                "barrier overtaken at step {step}"
            )));
        }
        let vt = eig.vectors.transpose();
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, u) in vecs.iter().enumerate() {
            let p = &vt * u;
            let (mut a1, mut a2) = (0.0, 0.0);
            for (pk, l) in p.iter().zip(&eig.values) {
                let g = 1.0 / (l - next);
                a1 += pk * pk * g;
                a2 += pk * pk * g * g;
            }
            let score = a2 / gap - a1;
            if score > 0.0 {
                let ratio = score / weights[k];
                if best.is_none_or(|(_, _, b)| ratio > b) {
                    best = Some((k, score, ratio));
                }
            }
        }
        let (k, score, _) = best
            .ok_or_else(|| Error::SparsifyStalled(format!("no admissible cut at step {step}")))?;
        let t = 1.0 / score;
        a.ger(t, &vecs[k], &vecs[k], 1.0);
        picked[k] += t * weights[k];
        spent += t * weights[k];
        ell = next;
    }
    if !(lam_min > 0.0) || spent * (1.0 + 1e-12) / lam_min > target_ratio {
        return Err(Error::SparsifyStalled(format!(
            "cost ratio {:.6} above bound {:.6}",
            spent / lam_min.max(1e-300) / cost,
            1.0 + theta
        )));
    }
    let scale = (1.0 + 1e-12) / lam_min;
    let mut out = Cover::new(
        keys.into_iter()
            .zip(picked)
            .filter(|(_, w)| *w > 0.0)
            .map(|(u, w)| (u.clone(), w * scale)),
    )?;
    out.meta = cover.meta;
    let residual = out.to_matrix(dim).minus(z).min_eigenvalue()?;
    if residual < -cfg.tol {
        return Err(Error::SparsifyStalled(format!(
            "output residual {residual:.3e} below tolerance"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_identity_cover(dim: usize) -> Cover {
        // The uniform distribution over sign vectors has second moment I.
        let cuts: Vec<CutSet> = CutSet::enumerate(dim).collect();
        let w = 1.0 / cuts.len() as f64;
        Cover::new(cuts.into_iter().map(|u| (u, w))).unwrap()
    }

    fn random_cover(dim: usize, support: usize, seed: u64) -> (Cover, SymMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all: Vec<CutSet> = CutSet::enumerate(dim).collect();
        let mut entries = Vec::new();
        for _ in 0..support.min(all.len()) {
            let k = rng.random_range(0..all.len());
            entries.push((all.swap_remove(k), rng.random_range(0.1..1.0)));
        }
        let cover = Cover::new(entries).unwrap();
        let z = cover.to_matrix(dim).scaled(0.999);
        (cover, z)
    }

    fn check_contract(input: &Cover, out: &Cover, z: &SymMatrix, cfg: &SparsifyConfig) {
        let dim = z.dim();
        assert!(out.len() <= support_bound(dim, cfg.eps_s));
        assert!(out.total_weight() <= (1.0 + cfg.eps_s) * input.total_weight());
        let res = out.to_matrix(dim).minus(z).min_eigenvalue().unwrap();
        assert!(res >= -1e-8, "residual {res}");
        assert!(out.support().all(|u| input.entries().contains_key(u)));
    }

    #[test]
    fn small_support_unchanged() {
        let cover = uniform_identity_cover(4);
        let cfg = SparsifyConfig::new(0.5, 1e-9).unwrap();
        let out = sparsify_cover(&cover, &SymMatrix::identity(4), &cfg).unwrap();
        assert_eq!(out, cover);
    }

    #[test]
    fn identity_target_contract() {
        let dim = 6;
        let cover = uniform_identity_cover(dim);
        let z = SymMatrix::identity(dim);
        for eps_s in [0.3, 0.5, 0.9] {
            let cfg = SparsifyConfig::new(eps_s, 1e-9).unwrap();
            let out = barrier_sparsify(&cover, &z, &cfg).unwrap();
            check_contract(&cover, &out, &z, &cfg);
        }
    }

    #[test]
    fn random_cover_contract_and_determinism() {
        let cfg = SparsifyConfig::new(0.5, 1e-9).unwrap();
        let (cover, z) = random_cover(10, 500, 3);
        let a = barrier_sparsify(&cover, &z, &cfg).unwrap();
        let b = barrier_sparsify(&cover, &z, &cfg).unwrap();
        assert_eq!(a, b);
        check_contract(&cover, &a, &z, &cfg);
        // Output is already within the bound, so a second pass is a no-op.
        assert_eq!(sparsify_cover(&a, &z, &cfg).unwrap(), a);
    }

    #[test]
    fn rank_deficient_target() {
        let dim = 5;
        let cover = uniform_identity_cover(dim);
        let mut z = SymMatrix::zeros(dim);
        z.add_outer(0.5, &[1.0, 1.0, 0.0, 0.0, 0.0]);
        let cfg = SparsifyConfig::new(0.4, 1e-9).unwrap();
        let out = barrier_sparsify(&cover, &z, &cfg).unwrap();
        check_contract(&cover, &out, &z, &cfg);
    }

    #[test]
    fn rejects_infeasible_input() {
        let cover = uniform_identity_cover(4);
        let z = SymMatrix::identity(4).scaled(2.0);
        let cfg = SparsifyConfig::new(0.5, 1e-9).unwrap();
        assert!(barrier_sparsify(&cover, &z, &cfg).is_err());
        assert!(SparsifyConfig::new(1.0, 0.0).is_err());
    }
}
