use crane_lab::discretization::Grid;
use crane_lab::model::{
    check_admissibility, check_p3, derive_physical_thetas, lem_a1_constants, p3_coefficients,
    parabola_margin, rescale, select_gamma, ControllerGains, HWeights, PhysicalParams,
};
use crane_lab::operator::{
    boundary_functional_jb, control_functional_f, weighted_inner, SampledFunction, StateZ,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PhysicalParams> {
    (
        0.1..5.0f64,
        0.2..5.0f64,
        0.1..10.0f64,
        0.1..10.0f64,
        1.0..20.0f64,
    )
        .prop_map(|(rho, length, m_p, m_c, g)| PhysicalParams {
            rho,
            length,
            m_p,
            m_c,
            g,
        })
}

fn gains() -> impl Strategy<Value = ControllerGains> {
    (0.05..5.0f64, 0.05..5.0f64, 0.001..10.0f64).prop_map(|(chi1, chi2, chi3)| ControllerGains {
        chi1,
        chi2,
        chi3,
    })
}

/// Draw with `chi3` placed strictly above the threshold.
fn admissible() -> impl Strategy<Value = (PhysicalParams, ControllerGains)> {
    (params(), gains(), 0.01..5.0f64).prop_map(|(p, mut k, lift)| {
        k.chi3 = p.chi3_threshold() + lift;
        (p, k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn threshold_predicates_agree(p in params(), chi3 in 0.001..10.0f64) {
        let thr = p.chi3_threshold();
        prop_assume!((chi3 - thr).abs() > 1e-9 * (1.0 + thr));
        let k = p.m_p / (p.tension_bottom() * p.rho.sqrt());
        let (a, b) = (k * (chi3 + 1.0), k * chi3);
        prop_assert_eq!(parabola_margin(a, b) > 0.0, chi3 > thr);
    }

    #[test]
    fn round_trip_recovers_a_and_b(p in params(), k in gains()) {
        let m = rescale(&p, &derive_physical_thetas(&p, &k).unwrap()).unwrap();
        let rep = check_admissibility(&m);
        let kk = p.m_p / (p.tension_bottom() * p.rho.sqrt());
        prop_assert!((rep.a - kk * (k.chi3 + 1.0)).abs() <= 1e-10 * (1.0 + rep.a.abs()));
        prop_assert!((rep.b - kk * k.chi3).abs() <= 1e-10 * (1.0 + rep.b.abs()));
    }

    #[test]
    fn selected_gamma_passes_p3(a in 0.01..20.0f64, b in 0.01..20.0f64) {
        prop_assume!(parabola_margin(a, b) > 1e-9);
        let g = select_gamma(a, b).unwrap();
        let (al, be, de) = p3_coefficients(a, b, g);
        prop_assert!(g > 0.0);
        prop_assert!(check_p3(al, be, de));
    }

    #[test]
    fn unit_ratio_has_zero_threshold(m_p in 0.1..10.0f64, length in 0.1..5.0f64) {
        let p = PhysicalParams { rho: 1.0, length, m_p, m_c: 1.0, g: 1.0 };
        prop_assert_eq!(p.chi3_threshold(), 0.0);
    }

    #[test]
    fn lem_a1_bound_holds(
        a0 in 0.0..5.0f64, b0 in 0.05..5.0f64, eps0 in 0.05..5.0f64,
        sa in -1.0..1.0f64, sb in 1.0..3.0f64, se in 1.0..3.0f64,
        x1 in -10.0..10.0f64, x2 in -10.0..10.0f64,
    ) {
        let (c, d) = lem_a1_constants(a0, b0, eps0).unwrap();
        prop_assert!(c > 0.0 && d > 0.0);
        prop_assert!(b0 * b0 - d >= 0.0);
        prop_assert!((eps0 - c) * (b0 * b0 - d) >= a0 * a0 * d * (1.0 - 1e-12));
        let (a, b, e) = (sa * a0, sb * b0, se * eps0);
        let lhs = (a * x1 + b * x2).powi(2) + e * x1 * x1;
        let rhs = c * x1 * x1 + d * x2 * x2;
        prop_assert!(lhs >= rhs - 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn control_law_decomposes((p, k) in admissible(), w0 in -1.0..1.0f64, dw0 in -1.0..1.0f64,
                              v0 in -1.0..1.0f64, dv0 in -1.0..1.0f64) {
        let m = rescale(&p, &derive_physical_thetas(&p, &k).unwrap()).unwrap();
        let rep = check_admissibility(&m);
        prop_assume!(rep.admissible);
        let hw = HWeights::for_model(&m).unwrap();
        // Affine profiles carry the boundary data exactly.
        let grid = Grid::new(16, m.l_tilde).unwrap();
        let z = StateZ::new(
            SampledFunction::from_fn(grid, |x| w0 + dw0 * x),
            SampledFunction::from_fn(grid, |x| v0 + dv0 * x),
        ).unwrap();
        let f = control_functional_f(&z, &m.theta);
        let jw = boundary_functional_jb(w0, dw0, hw.alpha1, hw.alpha2, m.p_top());
        let jv = boundary_functional_jb(v0, dv0, hw.alpha1, hw.alpha2, m.p_top());
        let g = -rep.a * v0 - rep.b * jw - jv;
        prop_assert!((f - g).abs() <= 1e-10 * (1.0 + f.abs()));
    }

    #[test]
    fn energy_product_is_hermitian_and_positive((p, k) in admissible(), seed in 0u64..1000) {
        let m = rescale(&p, &derive_physical_thetas(&p, &k).unwrap()).unwrap();
        prop_assume!(check_admissibility(&m).admissible);
        let hw = HWeights::for_model(&m).unwrap();
        let grid = Grid::new(24, m.l_tilde).unwrap();
        let s = seed as f64;
        let mk = |o: f64| StateZ::new(
            SampledFunction::from_fn(grid, |x| crane_lab::Complex64::new((x + s + o).sin(), (2.0 * x - o).cos())),
            SampledFunction::from_fn(grid, |x| crane_lab::Complex64::new((0.5 * x * o).cos(), (x + s).sin())),
        ).unwrap();
        let (z1, z2) = (mk(0.3), mk(1.7));
        let a = weighted_inner(&z1, &z2, &m, &hw).unwrap();
        let b = weighted_inner(&z2, &z1, &m, &hw).unwrap();
        prop_assert!((a - b.conj()).norm() <= 1e-12 * (1.0 + a.norm()));
        let n = weighted_inner(&z1, &z1, &m, &hw).unwrap();
        prop_assert!(n.re > 0.0 && n.im.abs() <= 1e-12 * n.re);
    }
}
