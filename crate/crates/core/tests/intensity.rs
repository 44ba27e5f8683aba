mod common;

use std::f64::consts::{LN_2, PI};

use common::simpson_log;
use conelab::error::Error;
use conelab::intensity::{
    lambda_mass, lambda_moment, radial_integral, sigma_mass, sphere_area, IntensitySpec,
    MomentDomain, VelocityLaw,
};
use conelab::quadrature::{integrate, Tolerance};
use conelab::{MarkAnnulus, PositionWindow};
use proptest::prelude::*;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

fn ann(a: f64, b: f64) -> MarkAnnulus {
    MarkAnnulus::new(a, b).unwrap()
}

/// Independent λ-mass of a symmetric annulus: `s_{d-1} ∫ r^{d-1-α} e^{-r^β} dr`.
fn oracle_mass(d: usize, alpha: f64, beta: f64, a: f64, b: f64, n: u32) -> f64 {
    let s = match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!(),
    };
    s * simpson_log(
        |r| r.powf(d as f64 - 1.0 - alpha + n as f64) * (-r.powf(beta)).exp(),
        a,
        b,
        20_000,
    )
}

#[test]
fn mass_of_reference_annulus() {
    // E1(1/4) − E1(4), evaluated to 30 digits
    let m = lambda_mass(&VelocityLaw::maxwell(1), &ann(0.5, 2.0)).unwrap();
    assert!((m - 1.0405032820338893).abs() < 1e-12, "{m}");
    assert!((m - 1.0405).abs() < 1e-3);
    assert!((m - oracle_mass(1, 1.0, 2.0, 0.5, 2.0, 0)).abs() < 1e-10);
}

#[test]
fn first_annulus_moment_is_an_erf_difference() {
    let m1 = lambda_moment(&VelocityLaw::maxwell(1), 1, MomentDomain::Annulus(ann(0.5, 2.0))).unwrap();
    let expected = PI.sqrt() * (erf(2.0) - erf(0.5));
    // statrs erf carries about 1e-10 of its own error
    assert!((m1 - expected).abs() < 1e-9, "{m1} vs {expected}");
    assert!((m1 - 0.8416007686992585).abs() < 1e-12);
}

#[test]
fn full_space_moments_of_the_maxwell_law() {
    let law = VelocityLaw::maxwell(1);
    let m1 = lambda_moment(&law, 1, MomentDomain::Full).unwrap();
    let m2 = lambda_moment(&law, 2, MomentDomain::Full).unwrap();
    assert!((m1 - PI.sqrt()).abs() < 1e-6);
    assert!((m2 - 1.0).abs() < 1e-6);
    assert!((m1 - PI.sqrt()).abs() < 1e-9);
}

#[test]
fn full_space_moments_match_gamma_function() {
    for d in 1..=3usize {
        for da in [0.0, 0.5, 0.9] {
            for beta in [0.5, 1.0, 2.0, 3.0] {
                let alpha = d as f64 + da;
                let law = VelocityLaw::new(d, alpha, beta).unwrap();
                for n in 1..=3u32 {
                    let got = lambda_moment(&law, n, MomentDomain::Full).unwrap();
                    let p = d as f64 + n as f64 - alpha;
                    let expected = sphere_area(d) * gamma(p / beta) / beta;
                    assert!(
                        (got - expected).abs() <= 1e-8 * expected,
                        "d={d} α={alpha} β={beta} n={n}: {got} vs {expected}"
                    );
                }
            }
        }
    }
}

#[test]
fn zeroth_full_moment_diverges() {
    assert_eq!(
        lambda_moment(&VelocityLaw::maxwell(2), 0, MomentDomain::Full),
        Err(Error::DivergentMoment(0))
    );
}

#[test]
fn sphere_areas() {
    let expected = [2.0, 2.0 * PI, 4.0 * PI, 2.0 * PI * PI, 8.0 * PI * PI / 3.0];
    for (d, e) in (1..=5).zip(expected) {
        assert!((sphere_area(d) - e).abs() < 1e-12 * e, "d={d}");
    }
}

#[test]
fn annulus_masses_match_simpson_oracle() {
    for (d, alpha, beta, a, b) in [
        (1, 1.0, 2.0, 0.1, 3.0),
        (1, 1.7, 1.0, 0.2, 1.0),
        (2, 2.0, 2.0, 0.5, 2.0),
        (2, 2.5, 1.0, 0.05, 4.0),
        (3, 3.0, 2.0, 0.5, 2.0),
        (3, 3.9, 0.7, 0.3, 1.5),
    ] {
        let law = VelocityLaw::new(d, alpha, beta).unwrap();
        let got = lambda_mass(&law, &ann(a, b)).unwrap();
        let expected = oracle_mass(d, alpha, beta, a, b, 0);
        assert!((got - expected).abs() < 1e-9 * expected, "d={d}: {got} vs {expected}");
        let m2 = lambda_moment(&law, 2, MomentDomain::Annulus(ann(a, b))).unwrap();
        let e2 = oracle_mass(d, alpha, beta, a, b, 2);
        assert!((m2 - e2).abs() < 1e-9 * e2);
    }
}

#[test]
fn one_sided_annulus_has_half_the_mass() {
    for d in 1..=3 {
        let law = VelocityLaw::maxwell(d);
        let full = lambda_mass(&law, &ann(0.5, 2.0)).unwrap();
        let half = lambda_mass(&law, &MarkAnnulus::one_sided(0.5, 2.0).unwrap()).unwrap();
        assert!((2.0 * half - full).abs() < 1e-12 * full);
    }
}

#[test]
fn divergence_at_the_singularity() {
    let law = VelocityLaw::maxwell(1);
    let eps = 1e-4;
    let diff = lambda_mass(&law, &ann(eps, 2.0)).unwrap() - lambda_mass(&law, &ann(2.0 * eps, 2.0)).unwrap();
    assert!((diff - 2.0 * LN_2).abs() < 0.01 * 2.0 * LN_2);
    // 2·∫_ε^{2ε} e^{-r²}/r dr to 30 digits
    assert!((diff - 1.386294331119891).abs() < 1e-9, "{diff}");
    for d in 2..=3 {
        let law = VelocityLaw::maxwell(d);
        let diff = lambda_mass(&law, &ann(eps, 2.0)).unwrap()
            - lambda_mass(&law, &ann(2.0 * eps, 2.0)).unwrap();
        let target = sphere_area(d) * LN_2;
        assert!((diff - target).abs() < 0.01 * target);
    }
}

#[test]
fn sigma_mass_scales_with_window_volume() {
    let law = VelocityLaw::maxwell(2);
    let w = PositionWindow::new(vec![0.0, -1.0], vec![2.0, 0.5]).unwrap();
    let sigma = IntensitySpec::new(law, ann(0.5, 2.0), w).unwrap();
    let m = sigma_mass(&sigma).unwrap();
    assert!((m - 3.0 * lambda_mass(&law, &ann(0.5, 2.0)).unwrap()).abs() < 1e-12);
}

#[test]
fn quadrature_reports_exhausted_budget() {
    let tol = Tolerance {
        max_intervals: 8,
        ..Tolerance::default()
    };
    let res = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &[], tol);
    assert!(matches!(res, Err(Error::QuadratureFailure { .. })));
}

#[test]
fn radial_integral_is_additive() {
    let law = VelocityLaw::new(2, 2.3, 1.5).unwrap();
    let ab = radial_integral(&law, 1, 0.1, 0.7).unwrap();
    let bc = radial_integral(&law, 1, 0.7, 5.0).unwrap();
    let ac = radial_integral(&law, 1, 0.1, 5.0).unwrap();
    assert!((ab + bc - ac).abs() < 1e-9 * ac);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_is_additive_over_adjacent_annuli(
        d in 1usize..=3,
        da in 0.0f64..0.99,
        beta in 0.3f64..3.0,
        a in 0.01f64..1.0,
        w1 in 0.01f64..2.0,
        w2 in 0.01f64..2.0,
    ) {
        let law = VelocityLaw::new(d, d as f64 + da, beta).unwrap();
        let (b, c) = (a + w1, a + w1 + w2);
        let ab = lambda_mass(&law, &ann(a, b)).unwrap();
        let bc = lambda_mass(&law, &ann(b, c)).unwrap();
        let ac = lambda_mass(&law, &ann(a, c)).unwrap();
        prop_assert!((ab + bc - ac).abs() <= 1e-9 * ac);
    }
}
