use std::f64::consts::PI;

use ws_core::profiles::{AsymptoticState, ProfileBundle, ProfileOptions, Route, WPlusSpec, WaveSpec};
use ws_core::spectral::{lebesgue_norm, ComplexField, DilationOptions, Grid, Spectral};

const ALPHA: f64 = 0.104;
const SIGMA: f64 = 0.3;

fn gaussian_w() -> WPlusSpec {
    WPlusSpec::Gaussian {
        amplitude: ALPHA,
        width: SIGMA,
        center: [0.0; 3],
    }
}

fn state(profile: Grid, physical: Grid) -> AsymptoticState {
    let a_plus = WaveSpec::Gaussian {
        amplitude: 1.0,
        width: 2.0,
        center: [0.0; 3],
    };
    AsymptoticState::new(&gaussian_w(), &a_plus, &WaveSpec::Zero, profile, physical).unwrap()
}

fn bundle(route: Route) -> ProfileBundle {
    let st = state(Grid::new(32, 4.0).unwrap(), Grid::new(64, 64.0).unwrap());
    let options = ProfileOptions {
        nu_max: f64::INFINITY,
        route,
        t_min: 4.0,
        dilation: DilationOptions {
            mass_tolerance: 1e-9,
            ..Default::default()
        },
        ..Default::default()
    };
    ProfileBundle::build(st, options).unwrap()
}

fn rel_l2(a: &ComplexField, b: &ComplexField) -> f64 {
    lebesgue_norm(&a.sub(b).unwrap(), 2.0).unwrap() / lebesgue_norm(b, 2.0).unwrap()
}

#[test]
fn c4_matches_gaussian_closed_form() {
    let st = state(Grid::new(32, 4.0).unwrap(), Grid::new(16, 16.0).unwrap());
    let exact = ALPHA * (PI * SIGMA * SIGMA / 2.0).powf(3.0 / 8.0);
    assert!((st.c4 - exact).abs() < 1e-10 * exact, "{} vs {exact}", st.c4);
    assert!((st.c4 - 0.0499).abs() < 1e-4);
}

#[test]
fn u_a_has_unitary_l2_and_dispersive_l4() {
    let b = bundle(Route::Auto);
    let w2 = lebesgue_norm(b.w_plus(), 2.0).unwrap();
    for &t in &[8.0, 16.0] {
        let u = b.u_a(t).unwrap();
        let l2 = lebesgue_norm(&u, 2.0).unwrap();
        let l4 = lebesgue_norm(&u, 4.0).unwrap();
        assert!((l2 / w2 - 1.0).abs() < 1e-8, "t = {t}: {l2} vs {w2}");
        let expected = t.powf(-0.75) * b.state().c4;
        assert!((l4 / expected - 1.0).abs() < 1e-8, "t = {t}: {l4} vs {expected}");
    }
}

#[test]
fn a1_is_the_rescaled_profile() {
    // At t = 8 the physical spacing (1) is exactly 8 profile spacings (1/8),
    // so grid point offsets coincide.
    let b = bundle(Route::Auto);
    let t = 8.0;
    let a1 = b.a1(t).unwrap();
    let (pg, xg) = (b.profile_grid(), b.physical_grid());
    let (hp, hx) = (pg.n_per_axis() / 2, xg.n_per_axis() / 2);
    let mut worst = 0.0f64;
    for i in 0..pg.n_per_axis() {
        for j in [0, 5, hp, pg.n_per_axis() - 1] {
            for k in [hp - 3, hp, hp + 7] {
                let p = b.a1_tilde().data()[pg.index(i, j, k)] / t;
                let x = a1.data()[xg.index(i + hx - hp, j + hx - hp, k + hx - hp)];
                worst = worst.max((p - x).abs());
            }
        }
    }
    assert!(worst < 1e-12 * b.a1_tilde().max_abs(), "{worst}");
}

#[test]
fn a1_dot_is_the_time_derivative_of_a1() {
    let b = bundle(Route::Auto);
    let (t, h) = (8.0, 1e-3);
    let fd = b
        .a1(t + h)
        .unwrap()
        .zip_map(&b.a1(t - h).unwrap(), |p, q| (p - q) / (2.0 * h))
        .unwrap();
    let exact = b.a1_dot(t).unwrap();
    let err = fd.zip_map(&exact, |p, q| p - q).unwrap().max_abs();
    assert!(err < 1e-6 * exact.max_abs(), "{err}");
}

#[test]
fn grad_u_a_matches_spectral_gradient() {
    let b = bundle(Route::Auto);
    let t = 8.0;
    let numeric = Spectral::new(b.physical_grid()).gradient(&b.u_a(t).unwrap()).unwrap();
    let analytic = b.grad_u_a(t).unwrap();
    for axis in 0..3 {
        let e = rel_l2(&analytic[axis], &numeric[axis]);
        assert!(e < 1e-6, "axis {axis}: {e}");
    }
}

#[test]
fn dt_u_a_matches_centered_difference() {
    let b = bundle(Route::Auto);
    let (t, h) = (8.0, 1e-3);
    let fd = b
        .u_a(t + h)
        .unwrap()
        .zip_map(&b.u_a(t - h).unwrap(), |p, q| (p - q) / (2.0 * h))
        .unwrap();
    let e = rel_l2(&b.dt_u_a(t).unwrap(), &fd);
    assert!(e < 1e-6, "{e}");
}

#[test]
fn a_a_is_free_wave_plus_a1() {
    let b = bundle(Route::Auto);
    let t = 8.0;
    let sum = b.a0(t).unwrap().a.add_scaled(1.0, &b.a1(t).unwrap()).unwrap();
    let a_a = b.a_a(t).unwrap();
    assert!(sum.zip_map(&a_a, |p, q| p - q).unwrap().max_abs() < 1e-15);
}

#[test]
fn radial_and_grid_routes_agree() {
    // The grid route propagates on the periodic profile box, so the integral
    // is truncated at nu_max = 4 where D_0(ν)|w_+|^2 still fits.
    let st = state(Grid::new(64, 16.0).unwrap(), Grid::new(16, 16.0).unwrap());
    let build = |route| {
        let options = ProfileOptions {
            nu_max: 4.0,
            node_count: 64,
            route,
            dilation: DilationOptions {
                mass_tolerance: 1e-9,
                ..Default::default()
            },
            ..Default::default()
        };
        ProfileBundle::build(st.clone(), options).unwrap()
    };
    let (radial, grid) = (build(Route::Radial), build(Route::Grid));
    assert!(radial.is_radial() && !grid.is_radial());
    let scale = radial.a1_tilde().max_abs();
    let d = radial.a1_tilde().zip_map(grid.a1_tilde(), |p, q| p - q).unwrap().max_abs();
    assert!(d < 1e-2 * scale, "Ã_1: {d} vs scale {scale}");
    // The cosine kernel has no 1/ω smoothing, so the h = 1/4 profile grid
    // resolves it less well.
    let scale = radial.a1_tilde_tilde().max_abs();
    let d = radial
        .a1_tilde_tilde()
        .zip_map(grid.a1_tilde_tilde(), |p, q| p - q)
        .unwrap()
        .max_abs();
    assert!(d < 3e-2 * scale, "Ã̃_1: {d} vs scale {scale}");
}

#[test]
fn radial_route_rejects_off_centre_profile() {
    let w = WPlusSpec::Gaussian {
        amplitude: ALPHA,
        width: SIGMA,
        center: [0.2, 0.0, 0.0],
    };
    let st = AsymptoticState::new(
        &w,
        &WaveSpec::Zero,
        &WaveSpec::Zero,
        Grid::new(32, 4.0).unwrap(),
        Grid::new(16, 16.0).unwrap(),
    )
    .unwrap();
    let options = ProfileOptions {
        route: Route::Radial,
        ..Default::default()
    };
    assert!(ProfileBundle::build(st, options).is_err());
}

#[test]
fn zero_profile_gives_zero_pair() {
    let st = AsymptoticState::new(
        &WPlusSpec::Zero,
        &WaveSpec::Zero,
        &WaveSpec::Zero,
        Grid::new(16, 4.0).unwrap(),
        Grid::new(16, 16.0).unwrap(),
    )
    .unwrap();
    let b = ProfileBundle::build(st, ProfileOptions::default()).unwrap();
    assert_eq!(b.u_a(4.0).unwrap().max_abs(), 0.0);
    assert_eq!(b.a_a(4.0).unwrap().max_abs(), 0.0);
    assert_eq!(b.state().c4, 0.0);
}
