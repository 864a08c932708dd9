use hodge_core::exterior::{
    build_graded_complex, conformal_codifferential, identification_adjointness, identification_maps, BoundaryCondition, ComplexSpec,
};
use hodge_core::geometry::{ConformalFactor, WarpedModel};
use proptest::prelude::*;

fn bc(neumann: bool) -> BoundaryCondition {
    if neumann {
        BoundaryCondition::Neumann
    } else {
        BoundaryCondition::Dirichlet
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn complex_identities_hold_for_random_psi(
        nr in 10usize..40, nt in 2usize..6, neumann: bool,
        a in -0.3f64..0.3, k in 0.5f64..2.0, c in -0.4f64..0.4, phase in 0.0f64..6.0,
    ) {
        let model = WarpedModel::cylinder(8.0);
        let src = format!("{a}*sin({k}*r)*cos(theta + {phase}) + {c}*bump((r - 4)/2)");
        let psi = ConformalFactor::parse(&src).unwrap().with_bounds(Some(a.abs() + c.abs()), None, None);
        let g = build_graded_complex(&model, None, ComplexSpec::Product { nr, ntheta: 2 * nt }, bc(neumann)).unwrap();
        let gb = g.conformal(&psi).unwrap();
        let maps = identification_maps(&g, &gb, &psi).unwrap();
        for d in [g.dd_defect(), gb.dd_defect(), g.adjointness_defect(1), gb.adjointness_defect(2), maps.defect, identification_adjointness(&g, &gb, &maps, 3)] {
            prop_assert!(d <= 1e-12, "{d}");
        }
    }

    #[test]
    fn mode_complexes_are_exact(nr in 10usize..60, mu in 0.1f64..5.0, neumann: bool, c in -0.4f64..0.4) {
        let model = WarpedModel::cylinder(8.0);
        let psi = ConformalFactor::parse(&format!("{c}*bump((r - 4)/2)")).unwrap().with_bounds(Some(c.abs()), None, None);
        let g = build_graded_complex(&model, None, ComplexSpec::Mode { nr, p: 0, mu }, bc(neumann)).unwrap();
        let gb = g.conformal(&psi).unwrap();
        prop_assert!(g.dd_defect() <= 1e-12 && gb.dd_defect() <= 1e-12);
        prop_assert!(gb.adjointness_defect(5) <= 1e-12);
    }

    #[test]
    fn zero_psi_codifferential_is_exact(nr in 10usize..40, nt in 2usize..6) {
        let model = WarpedModel::cylinder(8.0);
        let g = build_graded_complex(&model, None, ComplexSpec::Product { nr, ntheta: 2 * nt }, BoundaryCondition::Dirichlet).unwrap();
        let psi = ConformalFactor::parse("0").unwrap().with_bounds(Some(0.0), Some(0.0), None);
        prop_assert_eq!(conformal_codifferential(&g, &psi, 4).unwrap().residual, 0.0);
    }
}
