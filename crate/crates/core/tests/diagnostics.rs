use num_complex::Complex64;
use proptest::prelude::*;
use ws_core::diagnostics::{
    dyadic_constant, dyadic_norm_bound, fit_decay, free_wave_decay_check, log_times, spacetime_norm,
    strichartz_check, DecaySeries, DyadicFactor,
};
use ws_core::spectral::{ComplexField, Grid, RealField, Spectral, WaveState};

fn r2(x: [f64; 3]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

#[test]
fn spacetime_norm_of_power_law() {
    let (p, q) = (1.25, 8.0 / 3.0);
    let times = log_times(2.0, 40.0, 2001);
    let s = DecaySeries::from_fn("g", &times, |t| t.powf(-p)).unwrap();
    let norm = spacetime_norm(&s, q, (4.0, 32.0)).unwrap();
    let exact = ((4f64.powf(1.0 - p * q) - 32f64.powf(1.0 - p * q)) / (p * q - 1.0)).powf(1.0 / q);
    assert!((norm / exact - 1.0).abs() < 1e-5, "{norm} vs {exact}");
    let sup = spacetime_norm(&s, f64::INFINITY, (4.0, 32.0)).unwrap();
    assert!((sup - 4f64.powf(-p)).abs() < 1e-3 * sup);
}

#[test]
fn dyadic_constant_closed_form() {
    let c = dyadic_constant(4.0, 1, 3.0 / 8.0, 0.0, 0.25).unwrap();
    let exact = (1.0 - 0.5f64.sqrt()).powf(-0.25);
    assert!((c - exact).abs() < 1e-14);
    assert_eq!(dyadic_constant(f64::INFINITY, 2, 0.5, 0.0, 0.0).unwrap(), 1.0);
    assert!(dyadic_constant(4.0, 1, 0.2, 0.0, 0.25).is_err());
    assert!(dyadic_constant(4.0, 1, 0.5, 0.0, -0.1).is_err());
}

#[test]
fn strichartz_rejects_inadmissible_pair() {
    let g = Grid::new(8, 8.0).unwrap();
    let spec = Spectral::new(g);
    let u = ComplexField::from_fn(g, |x| Complex64::new((-r2(x)).exp(), 0.0));
    assert!(strichartz_check(&spec, &[u], 4.0, 4.0, (0.0, 1.0), 2.0, 5).is_err());
}

#[test]
fn radial_free_wave_decays_like_inverse_time() {
    let g = Grid::new(128, 128.0).unwrap();
    let spec = Spectral::new(g);
    let a = RealField::from_fn(g, |x| (-r2(x) / 8.0).exp());
    let wave = WaveState::new(a, RealField::zeros(g), 0.0).unwrap();
    let times = log_times(16.0, 32.0, 5);
    let (_, sup) = free_wave_decay_check(&spec, &wave, f64::INFINITY, 0, &times).unwrap();
    assert!((sup.exponent + 1.0).abs() < 0.15, "{}", sup.exponent);
    let (_, energy) = free_wave_decay_check(&spec, &wave, 2.0, 0, &times).unwrap();
    assert!(energy.exponent.abs() < 0.05, "{}", energy.exponent);
}

fn gaussian_batch(g: Grid, widths: &[f64], momenta: &[f64]) -> Vec<ComplexField> {
    widths
        .iter()
        .zip(momenta)
        .map(|(&w, &p)| ComplexField::from_fn(g, |x| Complex64::from_polar((-r2(x) / (2.0 * w * w)).exp(), p * x[1])))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_is_scale_equivariant(p in -3.0f64..1.0, c in 0.01f64..100.0, scale in 0.01f64..100.0, lambda in 0.1f64..10.0) {
        let times = log_times(1.0, 50.0, 12);
        let base = fit_decay(&DecaySeries::from_fn("b", &times, |t| c * t.powf(p)).unwrap(), None).unwrap();
        let scaled = fit_decay(&DecaySeries::from_fn("s", &times, |t| scale * c * t.powf(p)).unwrap(), None).unwrap();
        prop_assert!((scaled.exponent - base.exponent).abs() < 1e-9);
        prop_assert!((scaled.prefactor / (scale * base.prefactor) - 1.0).abs() < 1e-9);
        let stretched: Vec<f64> = times.iter().map(|t| lambda * t).collect();
        let moved = fit_decay(&DecaySeries::new("m", stretched, times.iter().map(|t| c * t.powf(p)).collect()).unwrap(), None).unwrap();
        prop_assert!((moved.exponent - p).abs() < 1e-9);
        prop_assert!((moved.prefactor / (c * lambda.powf(-p)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spacetime_norm_grows_with_window(p in -2.0f64..0.5, q in 1.0f64..8.0, lo in 1.0f64..4.0, extra in 0.0f64..20.0) {
        let times = log_times(1.0, 64.0, 40);
        let s = DecaySeries::from_fn("g", &times, |t| t.powf(p)).unwrap();
        let small = spacetime_norm(&s, q, (lo, lo + 10.0)).unwrap();
        let large = spacetime_norm(&s, q, (lo, lo + 10.0 + extra)).unwrap();
        prop_assert!(large >= small * (1.0 - 1e-12));
    }

    #[test]
    fn dyadic_direct_never_exceeds_estimate(
        lambda in 0.3f64..0.9,
        rho in 0.0f64..0.5,
        e1 in 0.0f64..0.6,
        e2 in 0.0f64..0.6,
        two in any::<bool>(),
    ) {
        let times = log_times(2.0, 64.0, 81);
        let q = 4.0;
        let f1 = DyadicFactor { series: DecaySeries::from_fn("f1", &times, |t| 2.0 * t.powf(-(lambda + e1))).unwrap(), q: f64::INFINITY };
        let f2 = DyadicFactor { series: DecaySeries::from_fn("f2", &times, |t| t.powf(-(lambda + e2))).unwrap(), q: 8.0 };
        let factors = if two { vec![f1, f2] } else { vec![f1] };
        let b = dyadic_norm_bound(&factors, q, rho, lambda).unwrap();
        prop_assert!(b.direct <= b.estimate * (1.0 + 1e-12), "{b:?}");
        prop_assert!(b.constant >= 1.0);
    }

    #[test]
    fn schrodinger_sup_l2_strichartz_is_isometric(w in 1.0f64..2.0, p in -0.5f64..0.5) {
        let g = Grid::new(16, 16.0).unwrap();
        let spec = Spectral::new(g);
        let batch = gaussian_batch(g, &[w, 0.8 * w], &[p, -p]);
        let rep = strichartz_check(&spec, &batch, f64::INFINITY, 2.0, (0.0, 2.0), 2.0, 9).unwrap();
        prop_assert!((rep.ratio - 1.0).abs() < 1e-12);
        prop_assert!((rep.enlarged_ratio - 1.0).abs() < 1e-12);
    }
}
