use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subset `U` of the index set `{0, 1, .., dim-1}`, stored in canonical form
/// (always containing the homogenizing index 0).
///
/// `S_U = s_U s_U^T` does not change under complementation, so every
/// assignment has exactly one canonical representative. Ordering is the
/// lexicographic order on the sorted member lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CutSet {
    members: Vec<usize>,
    dim: usize,
}

impl CutSet {
    /// Builds a canonical cut set from arbitrary members, complementing when 0 is absent.
    pub fn new(members: impl IntoIterator<Item = usize>, dim: usize) -> Result<Self> {
        let mut inside = vec![false; dim];
        for i in members {
            if i >= dim {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    n: dim.saturating_sub(1),
                });
            }
            inside[i] = true;
        }
        Ok(Self::from_indicator(&inside))
    }

    /// Canonical cut set of an indicator vector (`true` = member).
    pub fn from_indicator(inside: &[bool]) -> Self {
        let flip = !inside.first().copied().unwrap_or(true);
        let members = inside
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b != flip)
            .map(|(i, _)| i)
            .collect();
        CutSet {
            members,
            dim: inside.len(),
        }
    }

    /// Cut set encoding a Boolean assignment: `x_i = true` iff `i` is a member.
    ///
    /// `assignment[k]` is the value of variable `k + 1`.
    pub fn from_assignment(assignment: &[bool]) -> Self {
        let mut inside = Vec::with_capacity(assignment.len() + 1);
        inside.push(true);
        inside.extend_from_slice(assignment);
        Self::from_indicator(&inside)
    }

    /// Canonical cut set from the low `dim - 1` bits of `mask`; bit `k` is variable `k + 1`.
    pub fn from_mask(mask: u64, dim: usize) -> Self {
        let mut members = Vec::with_capacity(dim);
        members.push(0);
        members.extend((1..dim).filter(|&i| mask >> (i - 1) & 1 == 1));
        CutSet { members, dim }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    /// The Boolean assignment encoded by this set (variables `1..dim`).
    pub fn assignment(&self) -> Vec<bool> {
        (1..self.dim).map(|i| self.contains(i)).collect()
    }

    /// Signed incidence vector `s_U = 2·1_U − 1`.
    pub fn sign_vector(&self) -> Vec<f64> {
        let mut s = vec![-1.0; self.dim];
        for &i in &self.members {
            s[i] = 1.0;
        }
        s
    }

    /// Iterates all `2^(dim-1)` canonical cut sets of the given dimension.
    pub fn enumerate(dim: usize) -> impl Iterator<Item = CutSet> {
        assert!((1..=63).contains(&dim), "enumeration needs 1 <= dim <= 63");
        (0..1u64 << (dim - 1)).map(move |mask| CutSet::from_mask(mask, dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_by_complement() {
        let u = CutSet::new([1, 2], 4).unwrap();
        assert_eq!(u.members(), &[0, 3]);
        assert_eq!(u, CutSet::new([0, 3], 4).unwrap());
    }

    #[test]
    fn assignment_round_trip() {
        let a = vec![true, false, true];
        let u = CutSet::from_assignment(&a);
        assert_eq!(u.members(), &[0, 1, 3]);
        assert_eq!(u.assignment(), a);
        assert_eq!(u.sign_vector(), vec![1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn enumerates_all_canonical_sets() {
        let all: Vec<_> = CutSet::enumerate(4).collect();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|u| u.contains(0)));
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(CutSet::new([5], 3).is_err());
    }
}
