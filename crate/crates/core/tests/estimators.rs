mod common;

use common::simpson;
use conelab::estimators::{
    closed_form_functional, correlation_density_mc, estimate_functional, factorial_moment_mc,
    k_duality_check, kappa_position_mc, z_check_with_retry, FunctionalKind, TiltDensity,
    DEFAULT_CELLS_PER_AXIS,
};
use conelab::intensity::{IntensitySpec, VelocityLaw};
use conelab::mc::McSettings;
use conelab::suite::reference_gamma0;
use conelab::{
    ConfigurationFunction, FiniteConfiguration, FunctionSpec, MarkAnnulus, MarkedPoint, PhaseBox,
    PositionWindow,
};

const MASS: f64 = 1.0405032820338893;

fn base() -> IntensitySpec {
    IntensitySpec::new(
        VelocityLaw::maxwell(1),
        MarkAnnulus::new(0.5, 2.0).unwrap(),
        PositionWindow::unit(1),
    )
    .unwrap()
}

fn ind(s: &IntensitySpec) -> FunctionSpec {
    FunctionSpec::indicator(s.marks, s.window.clone())
}

fn left_half() -> PositionWindow {
    PositionWindow::new(vec![0.0], vec![0.5]).unwrap()
}

#[test]
fn closed_forms_match_references() {
    let s = base();
    let laplace = closed_form_functional(FunctionalKind::Laplace, &ind(&s).scale(-0.5), None, &s).unwrap();
    assert!((laplace - (MASS * ((-0.5f64).exp() - 1.0)).exp()).abs() < 1e-12);
    assert!((laplace - 0.6640444825557575).abs() < 1e-12);

    let campbell = FunctionSpec::RadialMark(1).times(FunctionSpec::PositionBump(s.window.clone()));
    let c = closed_form_functional(FunctionalKind::Campbell, &campbell, None, &s).unwrap();
    assert!((c - 0.8416007686992585).abs() < 1e-12);

    let b = closed_form_functional(FunctionalKind::Bogoliubov, &ind(&s).scale(0.2), None, &s).unwrap();
    assert!((b - (0.2 * MASS).exp()).abs() < 1e-12);
    assert!((b - 1.231_337_105_279_85).abs() < 1e-12);
}

#[test]
fn cone_laplace_closed_form_matches_simpson() {
    let s = base();
    let phi = FunctionSpec::PositionBump(s.window.clone()).scale(0.5);
    let got = closed_form_functional(FunctionalKind::ConeLaplace, &phi, Some(&[1.0]), &s).unwrap();
    let exponent = 2.0 * simpson(|v| ((0.5 * v).cosh() - 1.0) / v * (-v * v).exp(), 0.5, 2.0, 4000);
    assert!((got - exponent.exp()).abs() < 1e-11, "{got}");
    assert!((got - 1.1022908699303016).abs() < 1e-12);
}

#[test]
fn cone_laplace_is_piecewise_in_position() {
    // φ takes two values; the exponent adds cell by cell
    let s = base();
    let phi = FunctionSpec::PositionBump(left_half())
        .scale(0.5)
        .plus(FunctionSpec::PositionBump(PositionWindow::new(vec![0.5], vec![1.0]).unwrap()).scale(-0.3));
    let got = closed_form_functional(FunctionalKind::ConeLaplace, &phi, Some(&[1.0]), &s).unwrap();
    let cell = |r: f64| 2.0 * simpson(|v| ((r * v).cosh() - 1.0) / v * (-v * v).exp(), 0.5, 2.0, 4000);
    let expected = (0.5 * cell(0.5) + 0.5 * cell(-0.3)).exp();
    assert!((got - expected).abs() < 1e-11);
}

#[test]
fn functional_estimates_agree_with_closed_forms() {
    let s = base();
    let settings = McSettings::new(50_000, 2024);
    let cases = [
        (FunctionalKind::Laplace, ind(&s).scale(-0.5), None),
        (
            FunctionalKind::Campbell,
            FunctionSpec::RadialMark(1).times(FunctionSpec::PositionBump(s.window.clone())),
            None,
        ),
        (FunctionalKind::Bogoliubov, ind(&s).scale(0.2), None),
        (
            FunctionalKind::ConeLaplace,
            FunctionSpec::PositionBump(s.window.clone()).scale(0.5),
            Some(vec![1.0]),
        ),
    ];
    for (kind, f, h) in cases {
        let (r, _, verdict) = z_check_with_retry(&settings, |st| {
            estimate_functional(kind, &f, h.as_deref(), &s, st)
        })
        .unwrap();
        assert!(verdict.passed(), "{kind}: {r:?}");
    }
}

#[test]
fn factorial_moments() {
    let s = base();
    let a = PhaseBox::new(s.marks, left_half());
    let b = PhaseBox::new(s.marks, PositionWindow::new(vec![0.5], vec![1.0]).unwrap());
    let settings = McSettings::new(50_000, 5);
    let r1 = factorial_moment_mc(std::slice::from_ref(&a), &s, &settings).unwrap();
    assert!((r1.closed_form.unwrap() - 0.5202516410169446).abs() < 1e-12);
    assert!(r1.z_score.unwrap().abs() <= 3.0);
    let r2 = factorial_moment_mc(&[a, b], &s, &settings).unwrap();
    assert!((r2.closed_form.unwrap() - 0.27066176998082384).abs() < 1e-12);
    assert!(r2.z_score.unwrap().abs() <= 3.0);
}

#[test]
fn factorial_moment_of_box_partially_outside() {
    // only the overlap with the window and the annulus carries mass
    let s = base();
    let b = PhaseBox::new(
        MarkAnnulus::new(1.0, 5.0).unwrap(),
        PositionWindow::new(vec![0.5], vec![3.0]).unwrap(),
    );
    let r = factorial_moment_mc(&[b], &s, &McSettings::new(20_000, 8)).unwrap();
    let inner = conelab::intensity::lambda_mass(&s.law, &MarkAnnulus::new(1.0, 2.0).unwrap()).unwrap();
    assert!((r.closed_form.unwrap() - 0.5 * inner).abs() < 1e-12);
    assert!(r.z_score.unwrap().abs() <= 3.5);
}

#[test]
fn k_duality_examples() {
    let s = base();
    let settings = McSettings::new(40_000, 17);
    let empty = k_duality_check(&ConfigurationFunction::empty_indicator(), &s, &settings, 12).unwrap();
    assert_eq!(empty.estimate, 1.0);
    assert_eq!(empty.closed_form, Some(1.0));

    let a = PhaseBox::new(s.marks, left_half());
    let single = ConfigurationFunction::new(move |g| {
        if g.len() == 1 && a.contains(&g.points()[0]) { 1.0 } else { 0.0 }
    })
    .with_growth(conelab::combinat::GrowthBound::uniform(1.0));
    let r = k_duality_check(&single, &s, &settings, 12).unwrap();
    assert!((r.closed_form.unwrap() - 0.5202516410169446).abs() < 0.02);
    assert!(r.z_score.unwrap().abs() <= 3.0, "{r:?}");

    let coherent = ConfigurationFunction::coherent(ind(&s).scale(0.2));
    let r = k_duality_check(&coherent, &s, &settings, 12).unwrap();
    assert!((r.closed_form.unwrap() - 1.231_337_105_279_85).abs() < 1e-3);
    assert!(r.z_score.unwrap().abs() <= 3.0);
}

#[test]
fn bogoliubov_expansion_matches_estimate() {
    let s = base();
    let phi = ind(&s).scale(0.2);
    let x = 0.2 * MASS;
    let mut term = 1.0;
    let mut series = 1.0;
    for n in 1..=12 {
        term *= x / n as f64;
        series += term;
    }
    let tail = x.exp() - series;
    let r = estimate_functional(FunctionalKind::Bogoliubov, &phi, None, &s, &McSettings::new(100_000, 4)).unwrap();
    assert!((r.estimate - series).abs() <= 3.0 * r.std_error + tail);
}

#[test]
fn standard_error_scales_with_sample_size() {
    let s = base();
    let f = ind(&s).scale(-0.5);
    let small = estimate_functional(FunctionalKind::Laplace, &f, None, &s, &McSettings::new(40_000, 6)).unwrap();
    let large = estimate_functional(FunctionalKind::Laplace, &f, None, &s, &McSettings::new(80_000, 6)).unwrap();
    let ratio = large.std_error / small.std_error;
    let target = std::f64::consts::FRAC_1_SQRT_2;
    assert!((ratio - target).abs() <= 0.2 * target, "{ratio}");
}

#[test]
fn estimates_do_not_depend_on_chunks() {
    let s = base();
    let f = ind(&s).scale(0.2);
    let base_settings = McSettings::new(30_000, 12);
    let one = estimate_functional(FunctionalKind::Bogoliubov, &f, None, &s, &base_settings.with_chunks(1)).unwrap();
    for chunks in [2, 5, 16] {
        let other = estimate_functional(FunctionalKind::Bogoliubov, &f, None, &s, &base_settings.with_chunks(chunks)).unwrap();
        assert_eq!(one, other);
    }
}

#[test]
fn tilted_correlation_density() {
    let s = base();
    let tilt = TiltDensity::new(ind(&s).scale(0.2), &s).unwrap();
    let g0 = reference_gamma0(&s).unwrap();
    let r = correlation_density_mc(&g0, &tilt, &s, &McSettings::new(50_000, 30)).unwrap();
    assert!((r.closed_form.unwrap() - 1.44).abs() < 1e-12);
    assert!(r.z_score.unwrap().abs() <= 3.0);

    let flat = TiltDensity::new(FunctionSpec::Const(0.0), &s).unwrap();
    let r = correlation_density_mc(&g0, &flat, &s, &McSettings::new(5_000, 30)).unwrap();
    assert_eq!((r.estimate, r.std_error, r.closed_form), (1.0, 0.0, Some(1.0)));

    let empty = correlation_density_mc(&FiniteConfiguration::empty(), &tilt, &s, &McSettings::new(50_000, 31)).unwrap();
    assert_eq!(empty.closed_form, Some(1.0));
    assert!(empty.z_score.unwrap().abs() <= 3.0);
}

#[test]
fn tilt_density_is_normalized() {
    let s = base();
    let tilt = TiltDensity::new(ind(&s).scale(0.3).plus(FunctionSpec::Const(-0.1)), &s).unwrap();
    let sampler = conelab::sampler::PoissonSampler::new(&s).unwrap();
    let stats = conelab::mc::mc_mean(&McSettings::new(50_000, 2), |rng| Ok(tilt.density(&sampler.sample(rng)))).unwrap();
    assert!((stats.mean() - 1.0).abs() <= 3.0 * stats.std_error());
    assert!(TiltDensity::new(FunctionSpec::Const(-1.0), &s).is_err());
}

#[test]
fn gamma0_outside_the_window_is_rejected() {
    let s = base();
    let tilt = TiltDensity::new(FunctionSpec::Const(0.0), &s).unwrap();
    let g0 = FiniteConfiguration::new(vec![MarkedPoint::new(vec![1.0], vec![1.5]).unwrap()]).unwrap();
    assert!(correlation_density_mc(&g0, &tilt, &s, &McSettings::new(10, 1)).is_err());
}

#[test]
fn kappa_first_order() {
    let s = base();
    let settings = McSettings::new(50_000, 40);
    let zero = kappa_position_mc(1, &[0.0], DEFAULT_CELLS_PER_AXIS, &s, &settings).unwrap();
    assert!(zero.entries.iter().all(|e| e.result.estimate == 0.0 && e.result.closed_form == Some(0.0)));

    let sym = kappa_position_mc(1, &[1.0], DEFAULT_CELLS_PER_AXIS, &s, &settings).unwrap();
    assert_eq!(sym.entries.len(), 10);
    for e in &sym.entries {
        assert_eq!(e.result.closed_form, Some(0.0));
    }

    let one = IntensitySpec::new(s.law, MarkAnnulus::one_sided(0.5, 2.0).unwrap(), s.window.clone()).unwrap();
    let t = kappa_position_mc(1, &[1.0], DEFAULT_CELLS_PER_AXIS, &one, &settings).unwrap();
    let total: u64 = t.entries.iter().map(|e| e.count).sum();
    // ≈ half the σ-mass per draw
    assert!((total as f64 / 50_000.0 - MASS / 2.0).abs() < 0.02);
    for e in &t.entries {
        assert!((e.result.closed_form.unwrap() - 0.42080038434962923).abs() < 1e-12);
    }
}

#[test]
fn kappa_second_order_is_symmetric() {
    let s = IntensitySpec::new(
        VelocityLaw::maxwell(2),
        MarkAnnulus::one_sided(0.5, 2.0).unwrap(),
        PositionWindow::unit(2),
    )
    .unwrap();
    let t = kappa_position_mc(2, &[1.0, 0.5], 2, &s, &McSettings::new(20_000, 41)).unwrap();
    assert_eq!(t.entries.len(), 16);
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(t.get(&[i, j]).unwrap(), &{
                let mut e = t.get(&[j, i]).unwrap().clone();
                e.cells = vec![i, j];
                e
            });
        }
    }
    let m1 = t.entries[0].result.closed_form.unwrap().sqrt();
    assert!(m1 > 0.0);
    assert_eq!(t.center(3), vec![0.75, 0.75]);
}
