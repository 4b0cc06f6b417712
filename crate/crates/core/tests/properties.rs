use grothcover::certify::select_best_cut;
use grothcover::cones::{self, ConeSpec, DistKind, SymMatrix};
use grothcover::cover::{check_cover_feasible, Cover};
use grothcover::instances::{
    constraint_matrix, constraint_value, encode_problem, satisfied, Constraint, PredicateTemplate,
    ProblemKind, RawItem,
};
use grothcover::oracle::{brute_maxq, exact_fevc_target, OracleArg};
use grothcover::relax::Operand;
use grothcover::CutSet;
use proptest::prelude::*;

fn table() -> impl Strategy<Value = [bool; 4]> {
    (1u8..16).prop_map(|m| [m & 1 != 0, m & 2 != 0, m & 4 != 0, m & 8 != 0])
}

fn sym(dim: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-2.0f64..2.0, dim * dim)
        .prop_map(move |v| SymMatrix::from_fn(dim, |i, j| v[i * dim + j]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_matches_truth_table(t in table(), i in 1usize..=5, j in 1usize..=5, bits in 0u32..32) {
        let n = 5;
        let template = PredicateTemplate::new(t).unwrap();
        if let Ok(c) = Constraint::new(template, i, j, n) {
            let a = constraint_matrix(&c, n).unwrap();
            let assign: Vec<bool> = (0..n).map(|k| bits >> k & 1 == 1).collect();
            let v = constraint_value(&a, &CutSet::from_assignment(&assign));
            prop_assert_eq!(v, if satisfied(&c, &assign) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn map_and_adjoint_are_adjoint(w in prop::collection::vec(0.0f64..3.0, 4), y in sym(5)) {
        let items = [RawItem::edge(1, 2, 1.0), RawItem::edge(2, 3, 1.0), RawItem::edge(3, 4, 1.0), RawItem::edge(4, 1, 1.0)];
        let inst = encode_problem(ProblemKind::MaxDicut, &items, 4).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let lhs = cones::apply_map(&spec, &w).unwrap().inner(&y);
        let rhs: f64 = cones::apply_adjoint(&spec, &y).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn best_cut_agrees_with_enumeration(w in sym(5)) {
        let spec = ConeSpec::full_psd(5, DistKind::Psd);
        let all: Vec<CutSet> = CutSet::enumerate(5).collect();
        let picked = select_best_cut(&w, &all).unwrap();
        let brute = brute_maxq(&spec, &w).unwrap();
        prop_assert!((w.quad_form(&picked.sign_vector()) - brute.value).abs() < 1e-9);
        if let OracleArg::Cut(u) = brute.argopt {
            prop_assert!((w.quad_form(&u.sign_vector()) - brute.value).abs() < 1e-9);
        }
    }

    #[test]
    fn more_weight_never_hurts(extra in 0usize..8, wt in 0.0f64..2.0) {
        let spec = ConeSpec::full_psd(4, DistKind::Psd);
        let base = Cover::new(CutSet::enumerate(4).take(3).map(|u| (u, 0.5))).unwrap();
        let z = Operand::Matrix(SymMatrix::identity(4).scaled(0.3));
        let before = check_cover_feasible(&spec, &base, &z, 0.0).unwrap().worst_residual;
        let mut entries: Vec<(CutSet, f64)> = base.entries().iter().map(|(u, &v)| (u.clone(), v)).collect();
        entries.push((CutSet::from_mask(extra as u64, 4), wt));
        let after = check_cover_feasible(&spec, &Cover::new(entries).unwrap(), &z, 0.0).unwrap().worst_residual;
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn covering_lp_weak_duality(z in prop::collection::vec(0.0f64..2.0, 3), w in prop::collection::vec(0.0f64..2.0, 3)) {
        let items = [RawItem::edge(1, 2, 1.0), RawItem::edge(1, 3, 1.0), RawItem::edge(2, 3, 1.0)];
        let inst = encode_problem(ProblemKind::MaxCut, &items, 3).unwrap();
        let spec = inst.cone_spec(DistKind::PsdTriangle).unwrap();
        let fevc = exact_fevc_target(&spec, &z).unwrap().value;
        let maxq = brute_maxq(&spec, &cones::apply_map(&spec, &w).unwrap()).unwrap().value;
        let pair: f64 = z.iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert!(maxq * fevc >= pair - 1e-9);
    }
}
