//! The `checks` stage: linear estimates, free-wave decay, the dyadic block
//! bound and the self-convergence order of the split-step scheme.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::pipeline::{Artifacts, CheckRow, Stage};
use super::Scenario;
use crate::diagnostics::{
    dyadic_constant, dyadic_norm_bound, dyadic_times, fit_decay, free_wave_decay_check, log_times,
    strichartz_check, wave_strichartz_check, DecayFit, DecaySeries, DyadicFactor, StrichartzReport,
    WaveStrichartzReport,
};
use crate::error::Result;
use crate::profiles::{ProfileBundle, WaveSpec};
use crate::solver::{step, SystemState};
use crate::spectral::{lebesgue_norm, ComplexField, RealField, Spectral, WaveState};

const ST: Stage = Stage::Checks;

#[derive(Serialize)]
struct DyadicCase {
    q: f64,
    factor_q: Vec<f64>,
    lambda: f64,
    rho: f64,
    direct: f64,
    estimate: f64,
    lemma_bound: f64,
    constant: f64,
}

#[derive(Serialize)]
struct OrderRun {
    dt: Vec<f64>,
    /// `‖u_dt − u_ref‖_2 + ‖A_dt − A_ref‖_2` at the end of the interval.
    errors: Vec<f64>,
    factor: f64,
}

#[derive(Serialize)]
struct Doc {
    unitary: StrichartzReport,
    strichartz_83_4: StrichartzReport,
    wave: WaveStrichartzReport,
    wave_doubled: WaveStrichartzReport,
    free_wave: Option<FreeWave>,
    dyadic: Vec<DyadicCase>,
    order: OrderRun,
}

#[derive(Serialize)]
struct FreeWave {
    sup: DecayFit,
    l2: DecayFit,
    l4: DecayFit,
    a_a_sup: DecayFit,
}

fn gaussian_batch(spectral: &Spectral, count: usize, rng: &mut ChaCha8Rng) -> Vec<ComplexField> {
    let grid = spectral.grid();
    (0..count)
        .map(|_| {
            let amplitude = rng.gen_range(0.5..2.0);
            let width: f64 = rng.gen_range(1.5..2.5);
            let center: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let k: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
            ComplexField::from_fn(grid, move |x| {
                let d2: f64 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum();
                let phase: f64 = (0..3).map(|i| k[i] * x[i]).sum();
                Complex64::from_polar(amplitude * (-d2 / (2.0 * width * width)).exp(), phase)
            })
        })
        .collect()
}

fn pulse_source(spectral: &Spectral) -> impl Fn(f64) -> RealField + '_ {
    move |t: f64| {
        let g = (-(t - 1.5).powi(2) / 0.5).exp();
        RealField::from_fn(spectral.grid(), move |x| g * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp())
    }
}

fn uniform_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn dyadic_cases(count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DyadicCase>> {
    let mut cases = Vec::with_capacity(count);
    for i in 0..count {
        let q = [4.0, 8.0 / 3.0, 3.0][i % 3];
        let n = 1 + i % 2;
        let lambda = rng.gen_range(0.4..0.9);
        let rho = rng.gen_range(0.0..0.5);
        let t_lo: f64 = rng.gen_range(1.0..4.0);
        let t_hi = t_lo * 2f64.powi(rng.gen_range(3..7));
        let times = dyadic_times(t_lo, t_hi, 16);
        let mut factors = Vec::with_capacity(n);
        for _ in 0..n {
            let a = lambda + rng.gen_range(0.0..0.3);
            let c = rng.gen_range(0.5..2.0);
            // Finite q_k keeps Σ 1/q_k <= 1/(2q), so μ stays positive.
            let qk = if rng.gen_bool(0.5) { f64::INFINITY } else { 2.0 * n as f64 * q };
            factors.push(DyadicFactor {
                series: DecaySeries::from_fn("f", &times, |s| c * s.powf(-a))?,
                q: qk,
            });
        }
        let bound = dyadic_norm_bound(&factors, q, rho, lambda)?;
        cases.push(DyadicCase {
            q,
            factor_q: factors.iter().map(|f| f.q).collect(),
            lambda,
            rho,
            direct: bound.direct,
            estimate: bound.estimate,
            lemma_bound: bound.lemma_bound,
            constant: bound.constant,
        });
    }
    Ok(cases)
}

fn order_state(grid: crate::spectral::Grid, t: f64) -> Result<SystemState> {
    let u = ComplexField::from_fn(grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        Complex64::from_polar(0.5 * (-r2 / 4.0).exp(), 0.5 * x[0])
    });
    let a = RealField::from_fn(grid, |x| 0.5 * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp());
    SystemState::new(u, WaveState::new(a, RealField::zeros(grid), t)?)
}

fn evolve(spectral: &Spectral, start: &SystemState, t_end: f64, dt: f64) -> Result<SystemState> {
    let n = ((t_end - start.time) / dt).round() as usize;
    let mut s = start.clone();
    for _ in 0..n {
        s = step(spectral, &s, dt)?;
    }
    Ok(s)
}

fn state_distance(a: &SystemState, b: &SystemState) -> Result<f64> {
    Ok(lebesgue_norm(&a.u.sub(&b.u)?, 2.0)? + lebesgue_norm(&a.wave.a.sub(&b.wave.a)?, 2.0)?)
}

fn order_run(scenario: &Scenario) -> Result<OrderRun> {
    let c = &scenario.checks;
    let spectral = Spectral::new(c.order_grid.grid()?);
    let (t0, t1) = c.order_interval;
    let start = order_state(spectral.grid(), t0)?;
    let dt = vec![c.order_dt, c.order_dt / 2.0];
    let reference = evolve(&spectral, &start, t1, c.order_dt / 8.0)?;
    let mut errors = Vec::new();
    for &h in &dt {
        errors.push(state_distance(&evolve(&spectral, &start, t1, h)?, &reference)?);
    }
    let factor = if errors[1] == 0.0 { f64::NAN } else { errors[0] / errors[1] };
    Ok(OrderRun { dt, errors, factor })
}

fn free_wave(scenario: &Scenario, bundle: &ProfileBundle) -> Result<Option<FreeWave>> {
    if scenario.state.a_plus == WaveSpec::Zero && scenario.state.a_dot_plus == WaveSpec::Zero {
        return Ok(None);
    }
    let c = &scenario.checks;
    let times = log_times(c.decay_t_lo, scenario.times.t_max, c.decay_samples);
    let ops = bundle.physical_ops();
    let st = bundle.state();
    let data = WaveState::new(st.a_plus.clone(), st.a_dot_plus.clone(), 0.0)?;
    let (_, sup) = free_wave_decay_check(ops, &data, f64::INFINITY, 0, &times)?;
    let (_, l2) = free_wave_decay_check(ops, &data, 2.0, 0, &times)?;
    let (_, l4) = free_wave_decay_check(ops, &data, 4.0, 0, &times)?;
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        values.push(bundle.a_a(t)?.max_abs());
    }
    let a_a_sup = fit_decay(&DecaySeries::new("A_a sup", times.clone(), values)?, None)?;
    Ok(Some(FreeWave { sup, l2, l4, a_a_sup }))
}

pub(super) fn run(scenario: &Scenario, bundle: &ProfileBundle, out: &Artifacts) -> Result<Vec<CheckRow>> {
    let c = &scenario.checks;
    let tol = &scenario.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut rows = Vec::new();

    let spectral = Spectral::new(c.strichartz_grid.grid()?);
    let batch = gaussian_batch(&spectral, c.strichartz_batch, &mut rng);
    let window = c.strichartz_window;
    let unitary = strichartz_check(&spectral, &batch, f64::INFINITY, 2.0, window, 2.0, 41)?;
    let strichartz = strichartz_check(&spectral, &batch, 8.0 / 3.0, 4.0, window, 2.0, 81)?;
    rows.push(CheckRow::near(ST, Some(8), "strichartz_inf_2_ratio", unitary.enlarged_ratio, 1.0, tol.get("unitarity")));
    rows.push(CheckRow::at_most(ST, Some(8), "strichartz_83_4_growth", strichartz.growth, 1.0 + tol.get("strichartz_growth")));

    let wave_ops = Spectral::new(c.wave_grid.grid()?);
    let wave = wave_strichartz_check(&wave_ops, &uniform_times(0.0, 6.0, 241), pulse_source(&wave_ops))?;
    let wave_doubled = wave_strichartz_check(&wave_ops, &uniform_times(0.0, 12.0, 481), pulse_source(&wave_ops))?;
    rows.push(CheckRow::at_most(ST, Some(8), "wave_energy_ratio", wave_doubled.ratio_energy, 1.0 + tol.get("wave_energy")));
    let l4_growth = if wave.ratio_l4 == 0.0 { 1.0 } else { wave_doubled.ratio_l4 / wave.ratio_l4 };
    rows.push(CheckRow::at_most(ST, None, "wave_l4_ratio_growth", l4_growth, 1.0 + tol.get("strichartz_growth")));

    let free = free_wave(scenario, bundle)?;
    match &free {
        Some(f) => {
            let sup_tol = tol.get("free_wave_sup");
            rows.push(CheckRow::near(ST, Some(9), "free_wave_sup_exponent", f.sup.exponent, -1.0, sup_tol));
            rows.push(CheckRow::near(ST, Some(9), "free_wave_l2_exponent", f.l2.exponent, 0.0, tol.get("free_wave_l2")));
            rows.push(CheckRow::near(ST, None, "free_wave_l4_exponent", f.l4.exponent, -0.5, sup_tol));
            rows.push(CheckRow::near(ST, None, "a_a_sup_exponent", f.a_a_sup.exponent, -1.0, sup_tol));
        }
        None => rows.push(CheckRow::skipped(ST, Some(9), "free_wave", "A_+ and its time derivative vanish")),
    }

    let cases = dyadic_cases(c.dyadic_cases, &mut rng)?;
    let worst = cases.iter().map(|d| d.direct / d.estimate).fold(0.0, f64::max);
    let passing = cases.iter().filter(|d| d.direct <= d.estimate).count();
    rows.push(
        CheckRow::at_most(ST, Some(10), "dyadic_direct_over_estimate", worst, 1.0)
            .with_note(format!("{passing}/{} cases", cases.len())),
    );
    let lemma = cases.iter().map(|d| d.estimate / d.lemma_bound).fold(0.0, f64::max);
    rows.push(CheckRow::at_most(ST, None, "dyadic_estimate_over_lemma_bound", lemma, 1.0).reported());
    let closed = |q: f64, gap: f64| (1.0 - 0.5f64.powf(q * gap)).powf(-1.0 / q);
    let mut constant_error = (dyadic_constant(4.0, 1, 0.375, 0.0, 0.25)? - closed(4.0, 0.125)).abs();
    for d in &cases {
        let mu = 1.0 / d.q - d.factor_q.iter().map(|q| 1.0 / q).sum::<f64>();
        let gap = d.factor_q.len() as f64 * d.lambda + d.rho - mu;
        constant_error = constant_error.max((d.constant - closed(d.q, gap)).abs());
    }
    rows.push(CheckRow::at_most(ST, Some(10), "dyadic_constant_error", constant_error, tol.get("dyadic_constant")));

    let order = order_run(scenario)?;
    rows.push(
        CheckRow::near(ST, Some(11), "self_convergence_factor", order.factor, 4.0, 4.0 * tol.get("order_factor"))
            .with_note(format!("dt = {} vs {}", order.dt[0], order.dt[1])),
    );

    out.write_json(
        "checks.json",
        &Doc {
            unitary,
            strichartz_83_4: strichartz,
            wave,
            wave_doubled,
            free_wave: free,
            dyadic: cases,
            order,
        },
    )?;
    Ok(rows)
}
