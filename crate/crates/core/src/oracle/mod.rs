//! Exact answers for small instances: enumeration of all canonical cuts and the
//! covering LP over all assignments.

mod lp;

pub use lp::{lp_solve, LpSolution, RowKind, Sense};

use rayon::prelude::*;

use crate::cones::{ConeSpec, SymMatrix};
use crate::cover::Cover;
use crate::cutset::CutSet;
use crate::error::{Error, Result};
use crate::instances::CspInstance;

pub const MAX_ENUM_DIM: usize = 24;
pub const MAX_LP_VARS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Enumeration,
    Simplex,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleArg {
    Cut(CutSet),
    Cover(Cover),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub argopt: OracleArg,
    pub method: OracleMethod,
    /// Optimal multipliers of the covering rows (covering LP only).
    pub dual: Option<Vec<f64>>,
}

/// Best cut found in one block of the Gray-code walk, keyed for a deterministic merge.
#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    mask: u64,
}

fn walk_block(w: &SymMatrix, dim: usize, low_bits: usize, high: u64) -> Best {
    // Variables 1..=low_bits walk a Gray code, the rest are fixed by `high`.
    let mut s = vec![-1.0; dim];
    s[0] = 1.0;
    for i in (low_bits + 1)..dim {
        if high >> (i - 1 - low_bits) & 1 == 1 {
            s[i] = 1.0;
        }
    }
    let mut h: Vec<f64> = (0..dim)
        .map(|i| (0..dim).map(|j| w.get(i, j) * s[j]).sum())
        .collect();
    let mut q: f64 = s.iter().zip(&h).map(|(a, b)| a * b).sum();
    let fixed = high << low_bits;
    let mut best = Best {
        value: q,
        mask: fixed,
    };
    let mut gray: u64 = 0;
    for step in 1..(1u64 << low_bits) {
        let bit = step.trailing_zeros() as usize;
        let k = bit + 1;
        let sk = s[k];
        q -= 4.0 * sk * (h[k] - w.get(k, k) * sk);
        for (i, hi) in h.iter_mut().enumerate() {
            *hi -= 2.0 * w.get(i, k) * sk;
        }
        s[k] = -sk;
        gray ^= 1 << bit;
        let mask = fixed | gray;
        if q > best.value || (q == best.value && mask < best.mask) {
            best = Best { value: q, mask };
        }
    }
    best
}

/// Maximum of `s_U^T W s_U` over all canonical cut sets.
///
/// Every sign vector is feasible for both distance cones, so the enumeration does not
/// depend on `spec.dist()`.
pub fn brute_maxq(spec: &ConeSpec, w: &SymMatrix) -> Result<OracleResult> {
    let dim = spec.dim();
    if w.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: w.dim(),
        });
    }
    if dim == 0 || dim > MAX_ENUM_DIM {
        return Err(Error::TooLarge {
            what: "enumeration dimension",
            size: dim,
            limit: MAX_ENUM_DIM,
        });
    }
    let free = dim - 1;
    let high_bits = free.saturating_sub(12).min(8);
    let low_bits = free - high_bits;
    let blocks: Vec<Best> = (0..1u64 << high_bits)
        .into_par_iter()
        .map(|high| walk_block(w, dim, low_bits, high))
        .collect();
    // Incremental updates drift; rescore near-ties exactly and break ties lexicographically.
    let top = blocks
        .iter()
        .map(|b| b.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * w.max_abs().max(1.0) * (dim * dim) as f64;
    let mut best: Option<(f64, CutSet)> = None;
    for b in blocks.iter().filter(|b| b.value >= top - slack) {
        let u = CutSet::from_mask(b.mask, dim);
        let v = w.quad_form(&u.sign_vector());
        best = match best {
            Some((bv, bu)) if bv > v || (bv == v && bu <= u) => Some((bv, bu)),
            _ => Some((v, u)),
        };
    }
    let (value, u) = best.expect("at least one block");
    Ok(OracleResult {
        value,
        argopt: OracleArg::Cut(u),
        method: OracleMethod::Enumeration,
        dual: None,
    })
}

/// Fractional covering number of the instance weights:
/// `min <1, y>` over `y >= 0` on assignments with `sum_a y_a [a satisfies f] >= z_f`.
pub fn exact_fevc(instance: &CspInstance) -> Result<OracleResult> {
    let spec = instance.cone_spec(crate::cones::DistKind::PsdTriangle)?;
    exact_fevc_target(&spec, instance.weights())
}

/// Covering LP for an arbitrary polyhedral target `z`, columns `A*(S_U)` over all cuts.
pub fn exact_fevc_target(spec: &ConeSpec, z: &[f64]) -> Result<OracleResult> {
    if !spec.is_polyhedral() {
        return Err(Error::RequiresPolyhedral);
    }
    let d = spec.num_constraints();
    if z.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: z.len(),
        });
    }
    if let Some((index, &weight)) = z.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeWeight { index, weight });
    }
    let n = spec.dim() - 1;
    if n > MAX_LP_VARS {
        return Err(Error::TooLarge {
            what: "covering LP variables",
            size: n,
            limit: MAX_LP_VARS,
        });
    }
    if z.iter().all(|&v| v == 0.0) {
        return Ok(OracleResult {
            value: 0.0,
            argopt: OracleArg::Cover(Cover::empty()),
            method: OracleMethod::Simplex,
            dual: Some(vec![0.0; d]),
        });
    }
    let cuts: Vec<CutSet> = CutSet::enumerate(spec.dim()).collect();
    let signs: Vec<Vec<f64>> = cuts.iter().map(|u| u.sign_vector()).collect();
    let a: Vec<Vec<f64>> = spec
        .a_matrices()
        .iter()
        .map(|af| signs.iter().map(|s| af.quad_form(s)).collect())
        .collect();
    let sol = lp_solve(
        &a,
        &vec![RowKind::Ge; d],
        z,
        &vec![1.0; cuts.len()],
        Sense::Minimize,
    )?;
    let cover = Cover::new(
        cuts.into_iter()
            .zip(&sol.x)
            .filter(|(_, &x)| x > 0.0)
            .map(|(u, &x)| (u, x)),
    )?;
    Ok(OracleResult {
        value: sol.value,
        argopt: OracleArg::Cover(cover),
        method: OracleMethod::Simplex,
        dual: Some(sol.y),
    })
}
