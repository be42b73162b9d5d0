use ws_core::diagnostics::{log_times, DecaySeries};
use ws_core::profiles::{AsymptoticState, ProfileBundle, ProfileOptions, WPlusSpec, WaveSpec};
use ws_core::remainders::{
    dt_r1, grad_r1, r1, r1_identity_error, r1_tilde, r2_residual, remainder_report, strichartz_r1_norm,
};
use ws_core::spectral::{lebesgue_norm, ComplexField, DilationOptions, Grid};

fn bundle_on(a_plus: WaveSpec, physical: Grid) -> ProfileBundle {
    let w = WPlusSpec::Gaussian {
        amplitude: 0.104,
        width: 0.3,
        center: [0.0; 3],
    };
    let st = AsymptoticState::new(
        &w,
        &a_plus,
        &WaveSpec::Zero,
        Grid::new(32, 4.0).unwrap(),
        physical,
    )
    .unwrap();
    let options = ProfileOptions {
        nu_max: f64::INFINITY,
        t_min: 4.0,
        dilation: DilationOptions {
            mass_tolerance: 1e-9,
            ..Default::default()
        },
        ..Default::default()
    };
    ProfileBundle::build(st, options).unwrap()
}

fn bundle(a_plus: WaveSpec) -> ProfileBundle {
    bundle_on(a_plus, Grid::new(64, 64.0).unwrap())
}

fn gaussian_wave() -> WaveSpec {
    WaveSpec::Gaussian {
        amplitude: 1.0,
        width: 2.0,
        center: [0.0; 3],
    }
}

fn rel_l2(a: &ComplexField, b: &ComplexField) -> f64 {
    lebesgue_norm(&a.sub(b).unwrap(), 2.0).unwrap() / lebesgue_norm(b, 2.0).unwrap()
}

#[test]
fn closed_form_r1_matches_its_definition() {
    let b = bundle(gaussian_wave());
    for &t in &[8.0, 16.0] {
        let e = r1_identity_error(&b, t, 1e-3).unwrap();
        assert!(e < 1e-4, "t = {t}: {e}");
    }
}

#[test]
fn r1_without_free_wave_is_the_lifted_profile_remainder() {
    // M D e^{-iφ} is an isometry, so with A_+ = 0 the norms agree.
    let b = bundle(WaveSpec::Zero);
    let t = 12.0;
    let lifted = lebesgue_norm(&r1(&b, t).unwrap(), 2.0).unwrap();
    let profile = lebesgue_norm(&r1_tilde(&b, t).unwrap(), 2.0).unwrap();
    assert!((lifted / profile - 1.0).abs() < 1e-8, "{lifted} vs {profile}");
}

#[test]
fn grad_r1_matches_spectral_gradient() {
    // At spacing 1 the spectral reference itself is under-resolved.
    let b = bundle_on(gaussian_wave(), Grid::new(128, 64.0).unwrap());
    let t = 8.0;
    let numeric = b.physical_ops().gradient(&r1(&b, t).unwrap()).unwrap();
    let closed = grad_r1(&b, t).unwrap();
    for axis in 0..3 {
        let e = rel_l2(&closed[axis], &numeric[axis]);
        assert!(e < 1e-5, "axis {axis}: {e}");
    }
}

#[test]
fn dt_r1_matches_centered_difference() {
    let b = bundle_on(gaussian_wave(), Grid::new(128, 64.0).unwrap());
    let t = 8.0;
    let central = |h: f64| {
        r1(&b, t + h)
            .unwrap()
            .zip_map(&r1(&b, t - h).unwrap(), |p, q| (p - q) / (2.0 * h))
            .unwrap()
    };
    // Evaluating the lift carries a ~1e-8 relative roundoff floor, so the
    // steps stay large and Richardson removes the h^2 term.
    let (coarse, fine) = (central(0.04), central(0.02));
    let fd = fine.zip_map(&coarse, |f, c| (4.0 * f - c) / 3.0).unwrap();
    let e = rel_l2(&dt_r1(&b, t).unwrap(), &fd);
    assert!(e < 1e-5, "{e}");
}

#[test]
fn wave_remainder_is_small() {
    let b = bundle(gaussian_wave());
    for &t in &[8.0, 16.0] {
        let r = r2_residual(&b, t).unwrap();
        assert!(r.relative() < 1e-3, "t = {t}: {}", r.relative());
    }
}

#[test]
fn report_fits_decay_of_every_column() {
    let b = bundle(WaveSpec::Zero);
    let times = log_times(8.0, 16.0, 3);
    let report = remainder_report(&b, &times, (8.0, 16.0)).unwrap();
    assert_eq!(report.samples.len(), 3);
    let fits = report.fits.as_ref().unwrap();
    // Without A_0 the remainder is t^{-2} up to logarithms.
    assert!(fits.r1_l2.exponent < -1.5 && fits.r1_l2.exponent > -2.0, "{}", fits.r1_l2.exponent);
    assert!(report.series("nope").is_err());
    assert!(remainder_report(&b, &[8.0, 8.0], (8.0, 8.0)).is_err());
}

#[test]
fn strichartz_norm_of_exact_power_law() {
    let (c, p) = (3.0, 1.5);
    let q = 8.0 / 3.0;
    let times = log_times(8.0, 64.0, 57);
    let series = DecaySeries::from_fn("r1_l4", &times, |t| c * t.powf(-p)).unwrap();
    let s = strichartz_r1_norm(&series, 8.0).unwrap();
    let exact = c * (8f64.powf(1.0 - p * q) / (p * q - 1.0)).powf(1.0 / q);
    assert!((s.norm / exact - 1.0).abs() < 1e-3, "{} vs {exact}", s.norm);
    assert!((s.pointwise_fit.exponent + p).abs() < 1e-10);
}

#[test]
fn strichartz_norm_diverges_for_slow_decay() {
    let times = log_times(8.0, 64.0, 9);
    let series = DecaySeries::from_fn("r1_l4", &times, |t| t.powf(-0.3)).unwrap();
    assert!(strichartz_r1_norm(&series, 8.0).unwrap().norm.is_infinite());
}
