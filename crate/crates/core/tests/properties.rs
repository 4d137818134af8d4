//! Randomised invariants.

use chargecorr::extended::det_extended;
use chargecorr::scheme::R_MIN;
use chargecorr::{
    assemble_sigma, g_analytic, scheme_g, wick_pairings, CorrelationModel, Jet, JacobianForm, SingularityKind,
};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = CorrelationModel> {
    prop_oneof![Just(CorrelationModel::Ring2D), Just(CorrelationModel::GaussianC)]
}

fn planar_kind() -> impl Strategy<Value = SingularityKind> {
    prop_oneof![
        Just(SingularityKind::VectorZero(2)),
        Just(SingularityKind::Critical2D),
        Just(SingularityKind::Umbilic2D)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_is_symmetric_and_xi_positive(kind in planar_kind(), model in model(), r in 0.2f64..12.0) {
        let p = assemble_sigma(kind, &model, r).unwrap();
        prop_assert_eq!(&p.sigma, &p.sigma.transpose());
        prop_assert!((&p.xi - p.xi.transpose()).abs().max() < 1e-15);
        let eig = nalgebra::SymmetricEigen::new(p.xi.clone());
        let scale = p.xi.diagonal().max();
        prop_assert!(eig.eigenvalues.iter().all(|&e| e > -1e-12 * scale));
    }

    #[test]
    fn jacobi_identity(kind in planar_kind(), model in model(), r in 0.3f64..10.0) {
        let p = assemble_sigma(kind, &model, r).unwrap();
        let lhs = det_extended(&p.sigma);
        let rhs = p.det_k * p.det_xi();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs(), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn scheme_matches_closed_form(kind in planar_kind(), model in model(), r in 0.25f64..8.0) {
        let a = g_analytic(kind, &model, r).unwrap();
        let s = scheme_g(kind, &model, r).unwrap();
        prop_assert!((a - s).abs() <= 1e-6 * a.abs().max(1e-300), "{} vs {}", a, s);
    }

    #[test]
    fn separations_at_or_below_r_min_are_refused(kind in planar_kind(), r in 0.0f64..=R_MIN) {
        prop_assert!(scheme_g(kind, &CorrelationModel::Ring2D, r).is_err());
    }

    #[test]
    fn jacobian_form_is_a_determinant(entries in proptest::collection::vec(-3.0f64..3.0, 9)) {
        for n in 2..=3 {
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
            let got = JacobianForm::vector(n).evaluate(m.transpose().as_slice());
            prop_assert!((got - m.determinant()).abs() < 1e-12);
        }
        let (xx, yy, xy) = (entries[0], entries[1], entries[2]);
        prop_assert!((JacobianForm::critical().evaluate(&[xx, yy, xy]) - (xx * yy - xy * xy)).abs() < 1e-12);
    }

    #[test]
    fn pairings_are_perfect_matchings(k in 1usize..5) {
        let all = wick_pairings(2 * k).unwrap();
        let double_factorial: usize = (1..2 * k).step_by(2).product();
        prop_assert_eq!(all.len(), double_factorial);
        for p in &all {
            let mut seen = vec![false; 2 * k];
            for &(a, b) in p {
                prop_assert!(a < b);
                prop_assert!(!seen[a] && !seen[b]);
                seen[a] = true;
                seen[b] = true;
            }
        }
    }

    #[test]
    fn jets_follow_calculus(x in 0.1f64..3.0) {
        let t = Jet::<4>::variable(x);
        let f = (t * t + 1.0).sqrt() / t;
        // d/dx sqrt(x^2+1)/x = -1/(x^2 sqrt(x^2+1))
        let want = -1.0 / (x * x * (x * x + 1.0).sqrt());
        prop_assert!((f.derivative(1) - want).abs() < 1e-12 * want.abs().max(1.0));
        let g = t.powi(3);
        prop_assert!((g.derivative(2) - 6.0 * x).abs() < 1e-12 * x.max(1.0));
        prop_assert!((g.derivative(3) - 6.0).abs() < 1e-12);
    }
}
