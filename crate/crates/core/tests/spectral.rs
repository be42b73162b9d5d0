use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ws_core::spectral::{
    inner_product, lebesgue_norm, md_apply, ComplexField, DilationOptions, Grid, RealField, Spectral, WaveState,
};

fn r2(x: [f64; 3]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

fn random_field(g: Grid, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..g.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ComplexField::from_vec(g, data).unwrap()
}

fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn transform_matches_naive_dft() {
    let g = Grid::new(8, 5.0).unwrap();
    let n = g.n_per_axis();
    let f = random_field(g, 11);
    let s = Spectral::new(g).forward_transform(&f).unwrap();
    let norm = (g.len() as f64).sqrt().recip();
    let mut worst = 0.0f64;
    for m in 0..g.len() {
        let (m0, m1, m2) = g.unravel(m);
        let mut acc = Complex64::default();
        for j in 0..g.len() {
            let (j0, j1, j2) = g.unravel(j);
            let phase = -2.0 * PI * ((m0 * j0 + m1 * j1 + m2 * j2) % n) as f64 / n as f64;
            acc += f.data()[j] * Complex64::from_polar(1.0, phase);
        }
        worst = worst.max((acc * norm - s.data()[m]).norm());
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn laplacian_of_gaussian_matches_closed_form() {
    let g = Grid::new(64, 16.0).unwrap();
    let f = ComplexField::from_fn(g, |x| Complex64::new((-r2(x) / 2.0).exp(), 0.0));
    let lap = Spectral::new(g).laplacian(&f).unwrap();
    let exact = ComplexField::from_fn(g, |x| Complex64::new((r2(x) - 3.0) * (-r2(x) / 2.0).exp(), 0.0));
    assert!(max_diff(&lap, &exact) < 1e-10);
}

#[test]
fn gradient_of_plane_wave_gaussian() {
    let g = Grid::new(64, 20.0).unwrap();
    let p = 0.7;
    let f = ComplexField::from_fn(g, |x| Complex64::from_polar((-r2(x) / 2.0).exp(), p * x[0]));
    let grad = Spectral::new(g).gradient(&f).unwrap();
    let dx = ComplexField::from_fn(g, |x| Complex64::new(-x[0], p) * Complex64::from_polar((-r2(x) / 2.0).exp(), p * x[0]));
    let dz = ComplexField::from_fn(g, |x| -x[2] * Complex64::from_polar((-r2(x) / 2.0).exp(), p * x[0]));
    assert!(max_diff(&grad[0], &dx) < 1e-10);
    assert!(max_diff(&grad[2], &dz) < 1e-10);
}

/// `e^{itΔ/2} e^{-|x|²/2} = (1+it)^{-3/2} e^{-|x|²/(2(1+it))}`.
fn free_gaussian(x: [f64; 3], t: f64) -> Complex64 {
    let a = Complex64::new(1.0, t);
    a.powf(-1.5) * (-r2(x) / (2.0 * a)).exp()
}

#[test]
fn free_schrodinger_of_gaussian() {
    let g = Grid::new(128, 48.0).unwrap();
    let spec = Spectral::new(g);
    let f = ComplexField::from_fn(g, |x| free_gaussian(x, 0.0));
    for &t in &[0.5, 1.5, 3.0] {
        let u = spec.free_schrodinger(&f, t).unwrap();
        let exact = ComplexField::from_fn(g, |x| free_gaussian(x, t));
        assert!(max_diff(&u, &exact) < 1e-9, "t = {t}: {}", max_diff(&u, &exact));
    }
}

/// The free group factorises exactly as `U(t) = M(t) D(t) F M(t)`. For a
/// Gaussian every factor is explicit, so `M D` applied to the sampled
/// `F M u` must reproduce the free evolution.
#[test]
fn md_reproduces_free_evolution_of_gaussian() {
    let t = 5.0;
    let profile = Grid::new(64, 16.0).unwrap();
    let physical = Grid::new(128, 64.0).unwrap();
    let a = Complex64::new(1.0, -1.0 / t);
    let w = ComplexField::from_fn(profile, |xi| a.powf(-1.5) * (-r2(xi) / (2.0 * a)).exp());
    let u = md_apply(&w, t, physical, DilationOptions::default()).unwrap();
    let exact = ComplexField::from_fn(physical, |x| free_gaussian(x, t));
    let err = max_diff(&u, &exact) / exact.max_abs();
    assert!(err < 1e-6, "{err}");
}

/// Radial d'Alembert: `A(t, r) = [(r-t) f(r-t) + (r+t) f(r+t)] / 2r` for data
/// `(f(|x|), 0)`.
#[test]
fn wave_propagation_of_radial_gaussian() {
    let g = Grid::new(64, 24.0).unwrap();
    let spec = Spectral::new(g);
    let f = |s: f64| (-s * s / 2.0).exp();
    let a0 = RealField::from_fn(g, |x| f(r2(x).sqrt()));
    let w = WaveState::new(a0, RealField::zeros(g), 0.0).unwrap();
    let t = 3.0;
    let out = spec.wave_propagate(&w, t).unwrap();
    let exact = RealField::from_fn(g, |x| {
        let r = r2(x).sqrt();
        if r < 1e-12 {
            (1.0 - t * t) * f(t)
        } else {
            ((r - t) * f(r - t) + (r + t) * f(r + t)) / (2.0 * r)
        }
    });
    let err = out.a.zip_map(&exact, |p, q| p - q).unwrap().max_abs();
    assert!(err < 1e-8, "{err}");
    let e0 = spec.wave_energy(&w).unwrap();
    let e1 = spec.wave_energy(&out).unwrap();
    assert!((e1 - e0).abs() < 1e-12 * e0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn parseval(seed in any::<u64>(), n_log in 2u32..5, length in 1.0f64..50.0) {
        let g = Grid::new(1 << n_log, length).unwrap();
        let f = random_field(g, seed);
        let s = Spectral::new(g).forward_transform(&f).unwrap();
        let lhs: f64 = f.data().iter().map(|z| z.norm_sqr()).sum();
        let rhs: f64 = s.data().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn free_group_is_unitary(seed in any::<u64>(), t in -20.0f64..20.0) {
        let g = Grid::new(16, 10.0).unwrap();
        let f = random_field(g, seed);
        let u = Spectral::new(g).free_schrodinger(&f, t).unwrap();
        let n0 = lebesgue_norm(&f, 2.0).unwrap();
        let n1 = lebesgue_norm(&u, 2.0).unwrap();
        prop_assert!((n1 - n0).abs() <= 1e-12 * n0);
    }

    #[test]
    fn free_group_law(seed in any::<u64>(), s in -5.0f64..5.0, t in -5.0f64..5.0) {
        let g = Grid::new(16, 10.0).unwrap();
        let spec = Spectral::new(g);
        let f = random_field(g, seed);
        let two_steps = spec.free_schrodinger(&spec.free_schrodinger(&f, s).unwrap(), t).unwrap();
        let one_step = spec.free_schrodinger(&f, s + t).unwrap();
        prop_assert!(max_diff(&two_steps, &one_step) < 1e-12);
    }

    #[test]
    fn free_group_preserves_inner_products(a in any::<u64>(), b in any::<u64>(), t in -10.0f64..10.0) {
        let g = Grid::new(8, 6.0).unwrap();
        let spec = Spectral::new(g);
        let (f, h) = (random_field(g, a), random_field(g, b));
        let before = inner_product(&f, &h).unwrap();
        let after = inner_product(&spec.free_schrodinger(&f, t).unwrap(), &spec.free_schrodinger(&h, t).unwrap()).unwrap();
        prop_assert!((before - after).norm() < 1e-11);
    }

    #[test]
    fn wave_group_law(seed in any::<u64>(), s in -4.0f64..4.0, t in -4.0f64..4.0) {
        let g = Grid::new(16, 12.0).unwrap();
        let spec = Spectral::new(g);
        let a = random_field(g, seed).real_part();
        let b = random_field(g, seed ^ 1).real_part();
        let w = WaveState::new(a, b, 0.0).unwrap();
        let two = spec.wave_propagate(&spec.wave_propagate(&w, s).unwrap(), t).unwrap();
        let one = spec.wave_propagate(&w, s + t).unwrap();
        let d = two.a.zip_map(&one.a, |p, q| p - q).unwrap().max_abs()
            + two.a_dot.zip_map(&one.a_dot, |p, q| p - q).unwrap().max_abs();
        prop_assert!(d < 1e-10);
        prop_assert!((two.time - (s + t)).abs() < 1e-12);
    }
}
