//! Boolean 2-CSP instances and their encoding as constraint matrices over the
//! homogenized index set `{0, 1, .., n}`.
//!
//! A constraint `f` on variables `i, j` becomes `A_f = 1/4 sum Delta_{s i, t j}` over the
//! true cells `(s, t)` of its truth table, so that `<A_f, S_U>` is 1 exactly when `U`
//! encodes a satisfying assignment. Unary constraints (`i = j`) keep only the
//! consistent cells `s = t`.

use serde::{Deserialize, Serialize};

use crate::cones::{ConeSpec, DistKind, SparseSym, SymMatrix, Triangle};
use crate::cutset::CutSet;
use crate::error::{Error, Result};

/// Truth table of a binary predicate, indexed by `2 * x_i + x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredicateTemplate {
    truth_table: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    And,
    Or,
    Xor,
    Implies,
    Lit,
}

impl PredicateTemplate {
    pub fn new(truth_table: [bool; 4]) -> Result<Self> {
        if truth_table.iter().all(|&b| !b) {
            return Err(Error::InvalidInstance(
                "predicate template is identically false".into(),
            ));
        }
        Ok(PredicateTemplate { truth_table })
    }

    /// Template of `op` applied to the literals `l_i = x_i xor neg_i`, `l_j = x_j xor neg_j`.
    pub fn from_op(op: Op, neg_i: bool, neg_j: bool) -> Self {
        let mut table = [false; 4];
        for (cell, slot) in table.iter_mut().enumerate() {
            let li = (cell >> 1 == 1) != neg_i;
            let lj = (cell & 1 == 1) != neg_j;
            *slot = match op {
                Op::And => li && lj,
                Op::Or => li || lj,
                Op::Xor => li != lj,
                Op::Implies => !li || lj,
                Op::Lit => li,
            };
        }
        PredicateTemplate { truth_table: table }
    }

    pub fn cut() -> Self {
        Self::from_op(Op::Xor, false, false)
    }

    /// `x_i and not x_j`.
    pub fn dicut() -> Self {
        Self::from_op(Op::And, false, true)
    }

    pub fn clause(neg_i: bool, neg_j: bool) -> Self {
        Self::from_op(Op::Or, neg_i, neg_j)
    }

    pub fn truth_table(&self) -> [bool; 4] {
        self.truth_table
    }

    pub fn eval(&self, xi: bool, xj: bool) -> bool {
        self.truth_table[2 * xi as usize + xj as usize]
    }

    /// True when the predicate is `x_i != x_j` or `x_i == x_j`.
    pub fn is_parity(&self) -> bool {
        let t = self.truth_table;
        t == [false, true, true, false] || t == [true, false, false, true]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub template: PredicateTemplate,
    /// 1-based variable index.
    pub i: usize,
    /// 1-based variable index; may equal `i`.
    pub j: usize,
}

impl Constraint {
    pub fn new(template: PredicateTemplate, i: usize, j: usize, n: usize) -> Result<Self> {
        for idx in [i, j] {
            if idx == 0 || idx > n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        let c = Constraint { template, i, j };
        if i == j && !(c.template.eval(false, false) || c.template.eval(true, true)) {
            return Err(Error::InvalidInstance(format!(
                "unary constraint on variable {i} is identically false"
            )));
        }
        Ok(c)
    }

    /// Cells `(x_i, x_j)` that satisfy the constraint, consistent ones only when `i = j`.
    fn true_cells(&self) -> impl Iterator<Item = (bool, bool)> + '_ {
        [(false, false), (false, true), (true, false), (true, true)]
            .into_iter()
            .filter(move |&(a, b)| self.template.eval(a, b) && (self.i != self.j || a == b))
    }

    pub fn is_parity(&self) -> bool {
        self.i != self.j && self.template.is_parity()
    }
}

/// Weighted constraint list on `n` Boolean variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspInstance {
    n: usize,
    constraints: Vec<Constraint>,
    weights: Vec<f64>,
}

impl CspInstance {
    pub fn new(n: usize, constraints: Vec<Constraint>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInstance("no variables".into()));
        }
        if constraints.is_empty() {
            return Err(Error::InvalidInstance("no constraints".into()));
        }
        if constraints.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: constraints.len(),
                found: weights.len(),
            });
        }
        for c in &constraints {
            Constraint::new(c.template, c.i, c.j, n)?;
        }
        check_weights(&weights)?;
        Ok(CspInstance {
            n,
            constraints,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Matrix order `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Same constraints with new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        check_weights(&weights)?;
        Ok(CspInstance {
            weights,
            ..self.clone()
        })
    }

    /// Cone pair whose constraint map is `e_f -> A_f`.
    pub fn cone_spec(&self, dist: DistKind) -> Result<ConeSpec> {
        let mats = self
            .constraints
            .iter()
            .map(|c| constraint_matrix(c, self.n))
            .collect::<Result<Vec<_>>>()?;
        ConeSpec::polyhedral(self.dim(), dist, mats)
    }

    /// Total weight of constraints satisfied by the assignment.
    pub fn value(&self, assignment: &[bool]) -> f64 {
        self.constraints
            .iter()
            .zip(&self.weights)
            .filter(|(c, _)| satisfied(c, assignment))
            .map(|(_, w)| w)
            .sum()
    }

    /// True when every constraint is a parity constraint (cut or uncut) on two distinct variables.
    pub fn is_parity_only(&self) -> bool {
        self.constraints.iter().all(Constraint::is_parity)
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    for (index, &weight) in weights.iter().enumerate() {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::NegativeWeight { index, weight });
        }
    }
    Ok(())
}

/// `Delta_{sign_i i, sign_j j}` as a dense `(n+1) x (n+1)` matrix.
pub fn delta_matrix(
    positive_i: bool,
    i: usize,
    positive_j: bool,
    j: usize,
    n: usize,
) -> Result<SymMatrix> {
    for idx in [i, j] {
        if idx == 0 || idx > n {
            return Err(Error::IndexOutOfRange { index: idx, n });
        }
    }
    Ok(Triangle::new(positive_i, i, positive_j, j)
        .matrix(n + 1)
        .to_dense())
}

/// `A_c`, the quarter-sum of Delta matrices over the true cells of `c`.
pub fn constraint_matrix(c: &Constraint, n: usize) -> Result<SparseSym> {
    let c = Constraint::new(c.template, c.i, c.j, n)?;
    let mut a = SparseSym::new(n + 1);
    for (xi, xj) in c.true_cells() {
        let si = if xi { 1.0 } else { -1.0 };
        let sj = if xj { 1.0 } else { -1.0 };
        a.add_sym_outer(0.25, &[(0, 1.0), (c.i, si)], &[(0, 1.0), (c.j, sj)]);
    }
    a.compress();
    Ok(a)
}

/// Whether `c` holds under `a`, where `a[k]` is the value of variable `k + 1`.
pub fn satisfied(c: &Constraint, a: &[bool]) -> bool {
    c.template.eval(a[c.i - 1], a[c.j - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    MaxCut,
    MaxDicut,
    Max2Sat,
    Csp,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxcut" => Ok(ProblemKind::MaxCut),
            "maxdicut" => Ok(ProblemKind::MaxDicut),
            "max2sat" => Ok(ProblemKind::Max2Sat),
            "csp" => Ok(ProblemKind::Csp),
            other => Err(Error::InvalidInstance(format!(
                "unknown problem kind '{other}'"
            ))),
        }
    }

    /// Operator used when an item does not name one.
    pub fn default_op(self) -> Option<(Op, bool, bool)> {
        match self {
            ProblemKind::MaxCut => Some((Op::Xor, false, false)),
            ProblemKind::MaxDicut => Some((Op::And, false, true)),
            ProblemKind::Max2Sat => Some((Op::Or, false, false)),
            ProblemKind::Csp => None,
        }
    }
}

/// One edge, arc or clause of a raw input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawItem {
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub neg_i: bool,
    #[serde(default)]
    pub neg_j: bool,
    #[serde(default)]
    pub op: Option<Op>,
    pub weight: f64,
}

impl RawItem {
    pub fn edge(i: usize, j: usize, weight: f64) -> Self {
        RawItem {
            i,
            j,
            neg_i: false,
            neg_j: false,
            op: None,
            weight,
        }
    }
}

/// Encodes edges (MaxCut), arcs (MaxDicut), clauses (Max2Sat) or explicit
/// predicates as a weighted CSP. For MaxDicut the arc `(u, v)` becomes
/// `x_u and not x_v`; explicit negation flags are ignored there and for MaxCut.
pub fn encode_problem(kind: ProblemKind, items: &[RawItem], n: usize) -> Result<CspInstance> {
    let mut constraints = Vec::with_capacity(items.len());
    let mut weights = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        if !(item.weight >= 0.0) || !item.weight.is_finite() {
            return Err(Error::NegativeWeight {
                index,
                weight: item.weight,
            });
        }
        let template = match (kind, item.op) {
            (ProblemKind::MaxCut, _) => PredicateTemplate::cut(),
            (ProblemKind::MaxDicut, _) => PredicateTemplate::dicut(),
            (ProblemKind::Max2Sat, None) => PredicateTemplate::clause(item.neg_i, item.neg_j),
            (_, Some(op)) => PredicateTemplate::from_op(op, item.neg_i, item.neg_j),
            (ProblemKind::Csp, None) => {
                return Err(Error::InvalidInstance(format!(
                    "item {index} has no operator"
                )))
            }
        };
        let template = PredicateTemplate::new(template.truth_table)?;
        constraints.push(Constraint::new(template, item.i, item.j, n)?);
        weights.push(item.weight);
    }
    CspInstance::new(n, constraints, weights)
}

/// `<A_c, S_U>` evaluated through the sign vector.
pub fn constraint_value(a: &SparseSym, u: &CutSet) -> f64 {
    a.quad_form(&u.sign_vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::sign_tensor;

    fn all_assignments(n: usize) -> impl Iterator<Item = Vec<bool>> {
        (0..1u32 << n).map(move |m| (0..n).map(|k| m >> k & 1 == 1).collect())
    }

    #[test]
    fn delta_entries_match_definition() {
        let d = delta_matrix(false, 1, false, 2, 2).unwrap();
        let a = [1.0, -1.0, 0.0];
        let b = [1.0, 0.0, -1.0];
        for r in 0..3 {
            for c in 0..3 {
                let expect = 0.5 * (a[r] * b[c] + b[r] * a[c]);
                assert_eq!(d.get(r, c), expect);
            }
        }
        assert!(delta_matrix(true, 3, true, 1, 2).is_err());
    }

    #[test]
    fn delta_on_sign_tensor() {
        let d = delta_matrix(true, 1, false, 2, 2).unwrap();
        let u = CutSet::new([0, 1], 3).unwrap();
        assert_eq!(d.inner(&sign_tensor(&u)), 4.0);
    }

    #[test]
    fn deltas_are_conjunction_indicators() {
        let n = 3;
        for i in 1..=n {
            for j in 1..=n {
                if i == j {
                    continue;
                }
                for a in all_assignments(n) {
                    let s = sign_tensor(&CutSet::from_assignment(&a));
                    let mut total = 0.0;
                    for (pi, pj) in [(true, true), (true, false), (false, true), (false, false)] {
                        let v = 0.25 * delta_matrix(pi, i, pj, j, n).unwrap().inner(&s);
                        let expect = (a[i - 1] == pi) && (a[j - 1] == pj);
                        assert_eq!(v, if expect { 1.0 } else { 0.0 });
                        total += v;
                    }
                    assert_eq!(total, 1.0);
                }
            }
        }
    }

    #[test]
    fn dicut_matrix() {
        let c = Constraint::new(PredicateTemplate::dicut(), 1, 2, 2).unwrap();
        let a = constraint_matrix(&c, 2).unwrap();
        let expect = delta_matrix(true, 1, false, 2, 2).unwrap().scaled(0.25);
        assert!(a.to_dense().minus(&expect).max_abs() < 1e-15);
        assert_eq!(constraint_value(&a, &CutSet::new([0, 1], 3).unwrap()), 1.0);
        assert_eq!(constraint_value(&a, &CutSet::new([0], 3).unwrap()), 0.0);
    }

    #[test]
    fn clause_matrix_matches_three_cell_sum() {
        let c = Constraint::new(PredicateTemplate::clause(false, false), 1, 2, 2).unwrap();
        let a = constraint_matrix(&c, 2).unwrap().to_dense();
        let mut expect = delta_matrix(false, 1, true, 2, 2).unwrap();
        expect.add_scaled(1.0, &delta_matrix(true, 1, false, 2, 2).unwrap());
        expect.add_scaled(1.0, &delta_matrix(true, 1, true, 2, 2).unwrap());
        assert!(a.minus(&expect.scaled(0.25)).max_abs() < 1e-15);
    }

    #[test]
    fn xor_values() {
        let c = Constraint::new(PredicateTemplate::cut(), 1, 2, 2).unwrap();
        let a = constraint_matrix(&c, 2).unwrap();
        let vals: Vec<f64> = [[false, false], [false, true], [true, false], [true, true]]
            .iter()
            .map(|x| constraint_value(&a, &CutSet::from_assignment(x)))
            .collect();
        assert_eq!(vals, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn satisfied_agrees_with_matrix_for_all_templates() {
        let n = 3;
        for bits in 1..16u8 {
            let t = PredicateTemplate::new(std::array::from_fn(|k| bits >> k & 1 == 1)).unwrap();
            for i in 1..=n {
                for j in 1..=n {
                    let Ok(c) = Constraint::new(t, i, j, n) else {
                        assert_eq!(i, j);
                        continue;
                    };
                    let a = constraint_matrix(&c, n).unwrap();
                    for x in all_assignments(n) {
                        let v = constraint_value(&a, &CutSet::from_assignment(&x));
                        assert_eq!(v, if satisfied(&c, &x) { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    #[test]
    fn satisfied_examples() {
        let c = Constraint::new(PredicateTemplate::dicut(), 1, 2, 2).unwrap();
        assert!(satisfied(&c, &[true, false]));
        assert!(!satisfied(&c, &[false, false]));
    }

    #[test]
    fn encode_examples() {
        let arc = encode_problem(ProblemKind::MaxDicut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        assert_eq!(arc.constraints()[0].template, PredicateTemplate::dicut());
        let k3 = encode_problem(
            ProblemKind::MaxCut,
            &[
                RawItem::edge(1, 2, 1.0),
                RawItem::edge(1, 3, 1.0),
                RawItem::edge(2, 3, 1.0),
            ],
            3,
        )
        .unwrap();
        let best = all_assignments(3).map(|a| k3.value(&a)).fold(0.0, f64::max);
        assert_eq!(best, 2.0);
        assert!(k3.is_parity_only());

        let clause = RawItem {
            neg_j: true,
            ..RawItem::edge(1, 2, 2.0)
        };
        let sat = encode_problem(ProblemKind::Max2Sat, &[clause], 2).unwrap();
        assert_eq!(
            sat.constraints()[0].template,
            PredicateTemplate::clause(false, true)
        );
        assert_eq!(sat.weights(), &[2.0]);

        assert!(matches!(
            encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 2, -1.0)], 2),
            Err(Error::NegativeWeight { index: 0, .. })
        ));
        assert!(encode_problem(ProblemKind::MaxCut, &[RawItem::edge(1, 4, 1.0)], 3).is_err());
    }

    #[test]
    fn unary_constraints() {
        let lit = PredicateTemplate::from_op(Op::Lit, false, false);
        let c = Constraint::new(lit, 2, 2, 2).unwrap();
        let a = constraint_matrix(&c, 2).unwrap();
        for x in all_assignments(2) {
            let v = constraint_value(&a, &CutSet::from_assignment(&x));
            assert_eq!(v, if x[1] { 1.0 } else { 0.0 });
        }
        let contradiction = PredicateTemplate::from_op(Op::And, false, true);
        assert!(Constraint::new(contradiction, 1, 1, 2).is_err());
    }

    #[test]
    fn kappa_is_at_least_a_quarter() {
        let inst = encode_problem(
            ProblemKind::Max2Sat,
            &[RawItem::edge(1, 2, 1.0), RawItem::edge(2, 3, 0.5)],
            3,
        )
        .unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        assert!(spec.kappa() >= 0.25);
        let dicut = encode_problem(ProblemKind::MaxDicut, &[RawItem::edge(1, 2, 1.0)], 2).unwrap();
        assert_eq!(dicut.cone_spec(DistKind::Psd).unwrap().kappa(), 0.25);
    }

    #[test]
    fn complement_invariance() {
        let u = CutSet::new([1, 3], 4).unwrap();
        let inside: Vec<bool> = (0..4).map(|i| [1, 3].contains(&i)).collect();
        let raw = SymMatrix::outer(
            &inside
                .iter()
                .map(|&b| if b { 1.0 } else { -1.0 })
                .collect::<Vec<_>>(),
        );
        assert_eq!(raw, sign_tensor(&u));
    }
}
