//! Split-step integration of the coupled system and the backward scattering
//! experiment.
//!
//! One step of size `dt` (either sign) is the symmetric composition
//!
//! 1. `u ← e^{-i(dt/2)A} u`
//! 2. `u ← U(dt) u`
//! 3. `(A, ∂_t A)` advanced exactly with `□A = -|u|^2`, the source taken
//!    linear in time between the densities before and after the drift
//! 4. `u ← e^{-i(dt/2)A_new} u`
//!
//! Every substep is exactly reversible, so `step(dt)` followed by
//! `step(-dt)` returns the initial state up to roundoff.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_decay, spacetime_norm, DecayFit, DecaySeries};
use crate::error::{Error, Result};
use crate::profiles::ProfileBundle;
use crate::spectral::{inner_product, lebesgue_norm, ComplexField, Grid, RealField, Spectral, Spectrum, StepKernels, WaveState};

/// `(u, A, ∂_t A)` at a common time.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub u: ComplexField,
    pub wave: WaveState,
    pub time: f64,
}

impl SystemState {
    pub fn new(u: ComplexField, wave: WaveState) -> Result<Self> {
        u.check_same_grid(wave.grid())?;
        let time = wave.time;
        Ok(Self { u, wave, time })
    }

    pub fn zeros(grid: Grid, time: f64) -> Self {
        Self {
            u: ComplexField::zeros(grid),
            wave: WaveState::zeros(grid, time),
            time,
        }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid()
    }

    /// `(u_a, A_a, ∂_t A_a)(t)`.
    pub fn asymptotic(bundle: &ProfileBundle, t: f64) -> Result<Self> {
        let a0 = bundle.a0(t)?;
        let a = a0.a.add_scaled(1.0, &bundle.a1(t)?)?;
        let a_dot = a0.a_dot.add_scaled(1.0, &bundle.a1_dot(t)?)?;
        Self::new(bundle.u_a(t)?, WaveState::new(a, a_dot, t)?)
    }
}

/// `dt(t) = min(dt_max, κ|t|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSchedule {
    pub kappa: f64,
    pub dt_max: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            kappa: 5e-3,
            dt_max: 0.5,
        }
    }
}

impl StepSchedule {
    pub fn dt(&self, t: f64) -> f64 {
        self.dt_max.min(self.kappa * t.abs())
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            errs.push("solver.kappa must be positive".to_string());
        }
        if !(self.dt_max.is_finite() && self.dt_max > 0.0) {
            errs.push("solver.dt_max must be positive".to_string());
        }
        errs
    }

    /// Number of equal steps used to cross `[min(a,b), max(a,b)]`.
    fn steps_between(&self, a: f64, b: f64) -> usize {
        let dt = self.dt(a.abs().min(b.abs()).max(f64::MIN_POSITIVE));
        ((b - a).abs() / dt).ceil().max(1.0) as usize
    }
}

fn kick(u: &mut ComplexField, a: &RealField, tau: f64) {
    u.data_mut()
        .par_iter_mut()
        .zip(a.data().par_iter())
        .for_each(|(z, &a)| *z *= Complex64::from_polar(1.0, -tau * a));
}

/// Working representation during integration: the wave is kept as spectra so
/// a step costs four FFTs, and the source spectrum of the current time is
/// reused by the next step (the potential kicks leave `|u|` unchanged).
struct Evolving {
    u: ComplexField,
    a: RealField,
    a_hat: Spectrum,
    a_dot_hat: Spectrum,
    /// Source spectrum at the current time, when known.
    source_hat: Option<Spectrum>,
    /// Spare spectrum-sized buffer.
    work: Spectrum,
    time: f64,
}

impl Evolving {
    fn new(ops: &Spectral, state: &SystemState) -> Result<Self> {
        state.u.check_same_grid(ops.grid())?;
        let (a_hat, a_dot_hat) = ops.forward_real_pair(&state.wave.a, &state.wave.a_dot)?;
        let work = a_hat.clone();
        Ok(Self {
            u: state.u.clone(),
            a: state.wave.a.clone(),
            a_hat,
            a_dot_hat,
            source_hat: None,
            work,
            time: state.time,
        })
    }

    /// Spectrum of `-|u|^2`, written into `out`.
    fn source_spectrum(ops: &Spectral, u: &ComplexField, out: &mut Spectrum) {
        out.data_mut()
            .par_iter_mut()
            .zip(u.data().par_iter())
            .for_each(|(s, z)| *s = Complex64::new(-z.norm_sqr(), 0.0));
        ops.forward_in_place(out.data_mut());
    }

    fn advance(&mut self, ops: &Spectral, kernels: &StepKernels) -> Result<()> {
        let dt = kernels.dt();
        kick(&mut self.u, &self.a, 0.5 * dt);
        let mut f0 = match self.source_hat.take() {
            Some(f) => f,
            None => {
                let mut f = self.work.clone();
                Self::source_spectrum(ops, &self.u, &mut f);
                f
            }
        };
        ops.free_schrodinger_with(self.u.data_mut(), kernels);
        Self::source_spectrum(ops, &self.u, &mut self.work);
        ops.wave_step_with(&mut self.a_hat, &mut self.a_dot_hat, kernels, &f0, &self.work);
        // f0 is no longer needed: reuse it for the inverse transform of A.
        f0.data_mut().copy_from_slice(self.a_hat.data());
        ops.inverse_in_place(f0.data_mut());
        self.a
            .data_mut()
            .par_iter_mut()
            .zip(f0.data().par_iter())
            .for_each(|(a, z)| *a = z.re);
        kick(&mut self.u, &self.a, 0.5 * dt);
        std::mem::swap(&mut f0, &mut self.work);
        self.source_hat = Some(f0);
        self.time += dt;
        if !(self.u.is_finite() && self.a.is_finite()) {
            return Err(Error::NonFinite { time: self.time });
        }
        Ok(())
    }

    /// Pins the clock to `t`, removing accumulated rounding in the sum of steps.
    fn land(&mut self, t: f64) {
        self.time = t;
    }

    fn state(&self, ops: &Spectral) -> Result<SystemState> {
        let a_dot = ops.inverse_transform(&self.a_dot_hat)?.real_part();
        Ok(SystemState {
            u: self.u.clone(),
            wave: WaveState::new(self.a.clone(), a_dot, self.time)?,
            time: self.time,
        })
    }
}

/// One split step of size `dt`.
pub fn step(ops: &Spectral, state: &SystemState, dt: f64) -> Result<SystemState> {
    let mut e = Evolving::new(ops, state)?;
    e.advance(ops, &ops.step_kernels(dt))?;
    e.state(ops)
}

/// `(‖u‖_2^2, E(u, A))` with
/// `E = ∫ ½|∇u|^2 + ½(∂_t A)^2 + ½|∇A|^2 + A|u|^2`.
pub fn conserved_quantities(ops: &Spectral, state: &SystemState) -> Result<(f64, f64)> {
    let l2 = lebesgue_norm(&state.u, 2.0)?.powi(2);
    let kinetic = 0.5 * ops.dirichlet_energy(&ops.forward_transform(&state.u)?);
    let wave = ops.wave_energy(&state.wave)?;
    let coupling: f64 = state
        .u
        .data()
        .par_iter()
        .zip(state.wave.a.data().par_iter())
        .map(|(z, a)| a * z.norm_sqr())
        .sum::<f64>()
        * state.grid().cell_volume();
    Ok((l2, kinetic + wave + coupling))
}

/// Diagnostics at one sample time. `v = u − u_ref`, `B = A − A_ref`, where the
/// reference is `(u_a, A_a)` in a scattering run and zero otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub u_l2: f64,
    pub energy: f64,
    pub v_l2: f64,
    pub v_l4: f64,
    pub grad_v_l2: f64,
    pub grad_v_l4: f64,
    pub b_l4: f64,
    pub grad_b_l2: f64,
    pub dt_b_l2: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t", "u_l2", "energy", "v_l2", "v_l4", "grad_v_l2", "grad_v_l4", "b_l4", "grad_b_l2", "dt_b_l2",
];

impl TrajectorySample {
    fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.u_l2,
            self.energy,
            self.v_l2,
            self.v_l4,
            self.grad_v_l2,
            self.grad_v_l4,
            self.b_l4,
            self.grad_b_l2,
            self.dt_b_l2,
        ]
    }
}

/// Largest relative deviation from the first sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub l2: f64,
    pub energy: f64,
}

/// `h`-normalised seminorms with `h(t) = t^{-1/2}` and `J = [t, t_0]`:
///
/// * `x  = sup h^{-1}(‖v‖_2 + ‖v; L^{8/3}(J, L^4)‖ + ‖B; L^4(J, L^4)‖)`
/// * `x1 = sup h^{-1}(‖v; H^1‖ + ‖v; L^{8/3}(J, W^1_4)‖ + ‖B; L^4(J, L^4)‖ + ‖∇B‖_2 + ‖∂_t B‖_2)`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seminorms {
    pub x: f64,
    pub x1: f64,
}

/// Decay fits of a scattering run over `[T, t_0/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringFits {
    pub v_l2: DecayFit,
    /// `max(‖∇B‖_2, ‖∂_t B‖_2)`.
    pub b_energy: DecayFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t_start: f64,
    pub t_end: f64,
    /// Ordered by integration direction.
    pub samples: Vec<TrajectorySample>,
    #[serde(skip)]
    pub snapshots: Vec<SystemState>,
    pub drift: Drift,
    pub seminorms: Option<Seminorms>,
    pub fits: Option<ScatteringFits>,
}

impl TrajectoryRecord {
    fn new(t_start: f64) -> Self {
        Self {
            t_start,
            t_end: t_start,
            samples: Vec::new(),
            snapshots: Vec::new(),
            drift: Drift::default(),
            seminorms: None,
            fits: None,
        }
    }

    fn push(&mut self, s: TrajectorySample) {
        self.t_end = s.t;
        if let Some(first) = self.samples.first() {
            let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
            self.drift.l2 = self.drift.l2.max(rel(s.u_l2, first.u_l2));
            self.drift.energy = self.drift.energy.max(rel(s.energy, first.energy));
        }
        self.samples.push(s);
    }

    /// The named column as a series in increasing time.
    pub fn series(&self, column: &str) -> Result<DecaySeries> {
        let pos = TRAJECTORY_COLUMNS
            .iter()
            .position(|c| *c == column)
            .filter(|&p| p > 0)
            .ok_or_else(|| Error::Domain(format!("unknown trajectory column {column:?}")))?;
        let mut pts: Vec<(f64, f64)> = self.samples.iter().map(|s| (s.t, s.values()[pos])).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        DecaySeries::new(column, pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect())
    }

    fn b_energy_series(&self) -> Result<DecaySeries> {
        let g = self.series("grad_b_l2")?;
        let d = self.series("dt_b_l2")?;
        let values = g.values.iter().zip(&d.values).map(|(a, b)| a.max(*b)).collect();
        DecaySeries::new("b_energy", g.times, values)
    }

    fn compute_seminorms(&self) -> Result<Option<Seminorms>> {
        if self.samples.len() < 2 {
            return Ok(None);
        }
        let v = self.series("v_l2")?;
        let v4 = self.series("v_l4")?;
        let gv = self.series("grad_v_l2")?;
        let gv4 = self.series("grad_v_l4")?;
        let b4 = self.series("b_l4")?;
        let gb = self.series("grad_b_l2")?;
        let db = self.series("dt_b_l2")?;
        let w14 = DecaySeries::new("w14", v4.times.clone(), v4.values.iter().zip(&gv4.values).map(|(a, b)| a + b).collect())?;
        let hi = *v.times.last().expect("non-empty");
        let (mut x, mut x1) = (0.0f64, 0.0f64);
        for (i, &t) in v.times.iter().enumerate() {
            let window = (t, hi);
            let (sv, sw, sb) = if t < hi {
                (
                    spacetime_norm(&v4, 8.0 / 3.0, window)?,
                    spacetime_norm(&w14, 8.0 / 3.0, window)?,
                    spacetime_norm(&b4, 4.0, window)?,
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            let inv_h = t.sqrt();
            x = x.max(inv_h * (v.values[i] + sv + sb));
            let h1 = (v.values[i].powi(2) + gv.values[i].powi(2)).sqrt();
            x1 = x1.max(inv_h * (h1 + sw + sb + gb.values[i] + db.values[i]));
        }
        Ok(Some(Seminorms { x, x1 }))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TRAJECTORY_COLUMNS)?;
        for s in &self.samples {
            let vals = s.values();
            if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite {} at t = {}",
                    TRAJECTORY_COLUMNS[bad], s.t
                )));
            }
            w.write_record(vals.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            t_start: f64,
            t_end: f64,
            samples: usize,
            drift: &'a Drift,
            seminorms: &'a Option<Seminorms>,
            fits: &'a Option<ScatteringFits>,
        }
        let doc = Doc {
            version: crate::scenario::FORMAT_VERSION,
            t_start: self.t_start,
            t_end: self.t_end,
            samples: self.samples.len(),
            drift: &self.drift,
            seminorms: &self.seminorms,
            fits: &self.fits,
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

/// What `v` and `B` are measured against.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    Zero,
    Asymptotic(&'a ProfileBundle),
}

fn vector_norm(g: &[ComplexField; 3], r: f64) -> Result<f64> {
    let n = g[0].data().len();
    let modulus: Vec<f64> = (0..n)
        .map(|i| (g[0].data()[i].norm_sqr() + g[1].data()[i].norm_sqr() + g[2].data()[i].norm_sqr()).sqrt())
        .collect();
    lebesgue_norm(&RealField::from_vec(g[0].grid(), modulus)?, r)
}

fn sample(ops: &Spectral, state: &SystemState, reference: Reference<'_>) -> Result<TrajectorySample> {
    let (l2, energy) = conserved_quantities(ops, state)?;
    let t = state.time;
    let (v, b, b_dot) = match reference {
        Reference::Zero => (state.u.clone(), state.wave.a.clone(), state.wave.a_dot.clone()),
        Reference::Asymptotic(bundle) => {
            let r = SystemState::asymptotic(bundle, t)?;
            (
                state.u.sub(&r.u)?,
                state.wave.a.sub(&r.wave.a)?,
                state.wave.a_dot.sub(&r.wave.a_dot)?,
            )
        }
    };
    let grad_v = ops.gradient(&v)?;
    let grad_b = ops.dirichlet_energy(&ops.forward_real(&b)?).sqrt();
    Ok(TrajectorySample {
        t,
        u_l2: l2.sqrt(),
        energy,
        v_l2: lebesgue_norm(&v, 2.0)?,
        v_l4: lebesgue_norm(&v, 4.0)?,
        grad_v_l2: vector_norm(&grad_v, 2.0)?,
        grad_v_l4: vector_norm(&grad_v, 4.0)?,
        b_l4: lebesgue_norm(&b, 4.0)?,
        grad_b_l2: grad_b,
        dt_b_l2: lebesgue_norm(&b_dot, 2.0)?,
    })
}

/// Integration controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub schedule: StepSchedule,
    /// Sample density per dyadic block `[t, 2t]`.
    pub samples_per_block: usize,
    pub keep_snapshots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            samples_per_block: 16,
            keep_snapshots: false,
        }
    }
}

/// Sample times `lo·2^{k/m}` up to `hi`, with `hi` and every entry of `pins`
/// inside `[lo, hi]` included exactly.
pub fn sample_times(lo: f64, hi: f64, per_block: usize, pins: &[f64]) -> Vec<f64> {
    let m = per_block.max(1) as f64;
    let mut out = vec![lo];
    let mut k = 1.0;
    loop {
        let t = lo * (k / m).exp2();
        if t >= hi * (1.0 - 1e-9) {
            break;
        }
        out.push(t);
        k += 1.0;
    }
    if hi > lo {
        out.push(hi);
    }
    for &p in pins {
        if p > lo && p < hi {
            out.push(p);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    out
}

/// Advances `state` through `times` (ordered in the direction of travel),
/// recording a sample at the start and at each time.
fn run(
    ops: &Spectral,
    state: SystemState,
    times: &[f64],
    options: &RunOptions,
    reference: Reference<'_>,
) -> Result<TrajectoryRecord> {
    let mut record = TrajectoryRecord::new(state.time);
    record.push(sample(ops, &state, reference)?);
    if options.keep_snapshots {
        record.snapshots.push(state.clone());
    }
    let mut e = Evolving::new(ops, &state)?;
    drop(state);
    for &target in times {
        let n = options.schedule.steps_between(e.time, target);
        let kernels = ops.step_kernels((target - e.time) / n as f64);
        for _ in 0..n {
            if let Err(err) = e.advance(ops, &kernels) {
                return Err(aborted(err, e.time, record));
            }
        }
        e.land(target);
        let snapshot = e.state(ops)?;
        match sample(ops, &snapshot, reference) {
            Ok(s) => record.push(s),
            Err(err) => return Err(aborted(err, target, record)),
        }
        if options.keep_snapshots {
            record.snapshots.push(snapshot);
        }
    }
    record.seminorms = record.compute_seminorms()?;
    Ok(record)
}

fn aborted(cause: Error, time: f64, partial: TrajectoryRecord) -> Error {
    Error::Aborted {
        time,
        cause: Box::new(cause),
        partial: Box::new(partial),
    }
}

/// Integrates from `state.time` to `t_target`, sampling on the dyadic grid
/// between the two.
pub fn integrate(
    ops: &Spectral,
    state: SystemState,
    t_target: f64,
    options: &RunOptions,
    reference: Reference<'_>,
) -> Result<TrajectoryRecord> {
    if !(t_target >= 1.0) || !t_target.is_finite() {
        return Err(Error::Domain(format!("t_target = {t_target} must be >= 1")));
    }
    state.u.check_same_grid(ops.grid())?;
    let start = state.time;
    let (lo, hi) = if start <= t_target { (start, t_target) } else { (t_target, start) };
    let mut times = sample_times(lo, hi, options.samples_per_block, &[]);
    if start > t_target {
        times.reverse();
    }
    run(ops, state, &times[1..], options, reference)
}

fn fit_scattering(record: &TrajectoryRecord, big_t: f64, t0: f64) -> Result<Option<ScatteringFits>> {
    let window = (big_t, 0.5 * t0);
    let v = record.series("v_l2")?;
    if v.times.iter().filter(|&&t| t >= window.0 && t <= window.1).count() < 2 {
        return Ok(None);
    }
    Ok(Some(ScatteringFits {
        v_l2: fit_decay(&v, Some(window))?,
        b_energy: fit_decay(&record.b_energy_series()?, Some(window))?,
    }))
}

fn check_times(big_t: f64, t0_list: &[f64]) -> Result<()> {
    if !(big_t >= 1.0) {
        return Err(Error::Domain(format!("T = {big_t} must be >= 1")));
    }
    if t0_list.is_empty() || t0_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("t0 values must be strictly increasing".into()));
    }
    if !(t0_list[0] > big_t) {
        return Err(Error::Domain(format!("t0 = {} must exceed T = {big_t}", t0_list[0])));
    }
    Ok(())
}

/// Starts at `(u_a, A_a, ∂_t A_a)(t_0)` and integrates backward to `T`,
/// recording `v = u − u_a` and `B = A − A_a`.
pub fn scattering_experiment(bundle: &ProfileBundle, big_t: f64, t0: f64, options: &RunOptions) -> Result<TrajectoryRecord> {
    Ok(ensemble(bundle, big_t, &[t0], options)?.runs.remove(0))
}

/// Difference between the runs started at `t0_lo < t0_hi`, over `[T, t0_lo]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T0Pair {
    pub t0_lo: f64,
    pub t0_hi: f64,
    /// `sup_t ‖u_{t0_lo}(t) − u_{t0_hi}(t)‖_2`.
    pub sup_u_l2: f64,
    /// `‖A_{t0_lo} − A_{t0_hi}; L^4([T, t0_lo], L^4)‖`.
    pub b_l4l4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T0Study {
    pub t0_list: Vec<f64>,
    pub runs: Vec<TrajectoryRecord>,
    pub pairs: Vec<T0Pair>,
    /// True when `sup_u_l2` decreases strictly along the pairs.
    pub monotone: bool,
    /// Fit of `sup_u_l2` against `t0_lo`.
    pub fit: Option<DecayFit>,
}

impl T0Study {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            t0_list: &'a [f64],
            pairs: &'a [T0Pair],
            monotone: bool,
            fit: &'a Option<DecayFit>,
        }
        let doc = Doc {
            version: crate::scenario::FORMAT_VERSION,
            t0_list: &self.t0_list,
            pairs: &self.pairs,
            monotone: self.monotone,
            fit: &self.fit,
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

struct Member {
    state: Evolving,
    snapshot: SystemState,
    record: TrajectoryRecord,
    t0: f64,
}

/// Runs every `t0` of the list in lockstep: the runs share sample times and
/// step sequences, so each member is identical to its standalone
/// [`scattering_experiment`], and pairwise differences need no stored
/// snapshots.
fn ensemble(bundle: &ProfileBundle, big_t: f64, t0_list: &[f64], options: &RunOptions) -> Result<T0Study> {
    check_times(big_t, t0_list)?;
    let ops = bundle.physical_ops();
    let t_max = *t0_list.last().expect("non-empty");
    let mut times = sample_times(big_t, t_max, options.samples_per_block, t0_list);
    times.reverse();
    let mut members: Vec<Member> = Vec::new();
    let npairs = t0_list.len() - 1;
    let mut pair_u: Vec<Vec<(f64, f64)>> = vec![Vec::new(); npairs];
    let mut pair_b: Vec<Vec<(f64, f64)>> = vec![Vec::new(); npairs];
    let mut current = t_max;
    for &target in &times {
        if target < current {
            let n = options.schedule.steps_between(current, target);
            let kernels = ops.step_kernels((target - current) / n as f64);
            for m in members.iter_mut() {
                for _ in 0..n {
                    if let Err(err) = m.state.advance(ops, &kernels) {
                        let time = m.state.time;
                        return Err(aborted(err, time, std::mem::replace(&mut m.record, TrajectoryRecord::new(m.t0))));
                    }
                }
                m.state.land(target);
                m.snapshot = m.state.state(ops)?;
            }
            current = target;
        }
        for &t0 in t0_list.iter().rev() {
            if (t0 - target).abs() <= 1e-9 * t0 {
                let snapshot = SystemState::asymptotic(bundle, target)?;
                members.push(Member {
                    state: Evolving::new(ops, &snapshot)?,
                    snapshot,
                    record: TrajectoryRecord::new(target),
                    t0,
                });
            }
        }
        for m in members.iter_mut() {
            let s = sample(ops, &m.snapshot, Reference::Asymptotic(bundle))?;
            m.record.push(s);
            if options.keep_snapshots {
                m.record.snapshots.push(m.snapshot.clone());
            }
        }
        // members are ordered by decreasing t0; pair k is (t0_list[k], t0_list[k+1])
        for k in 0..npairs {
            let (hi_idx, lo_idx) = (npairs - 1 - k, npairs - k);
            if lo_idx < members.len() {
                let (a, b) = (&members[lo_idx].snapshot, &members[hi_idx].snapshot);
                pair_u[k].push((target, lebesgue_norm(&a.u.sub(&b.u)?, 2.0)?));
                pair_b[k].push((target, lebesgue_norm(&a.wave.a.sub(&b.wave.a)?, 4.0)?));
            }
        }
    }
    let mut runs: Vec<TrajectoryRecord> = Vec::with_capacity(members.len());
    for mut m in members.into_iter().rev() {
        m.record.seminorms = m.record.compute_seminorms()?;
        m.record.fits = fit_scattering(&m.record, big_t, m.t0)?;
        runs.push(m.record);
    }
    let mut pairs = Vec::with_capacity(npairs);
    for k in 0..npairs {
        let sup_u_l2 = pair_u[k].iter().map(|p| p.1).fold(0.0, f64::max);
        let mut pts = pair_b[k].clone();
        pts.reverse();
        let b_l4l4 = if pts.len() >= 2 {
            let series = DecaySeries::new("b_diff", pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect())?;
            spacetime_norm(&series, 4.0, (pts[0].0, pts[pts.len() - 1].0))?
        } else {
            0.0
        };
        pairs.push(T0Pair {
            t0_lo: t0_list[k],
            t0_hi: t0_list[k + 1],
            sup_u_l2,
            b_l4l4,
        });
    }
    let monotone = pairs.windows(2).all(|w| w[1].sup_u_l2 < w[0].sup_u_l2);
    let fit = if pairs.len() >= 2 && pairs.iter().all(|p| p.sup_u_l2 > 0.0) {
        let series = DecaySeries::new(
            "t0_sup_u_l2",
            pairs.iter().map(|p| p.t0_lo).collect(),
            pairs.iter().map(|p| p.sup_u_l2).collect(),
        )?;
        Some(fit_decay(&series, None)?)
    } else {
        None
    };
    Ok(T0Study {
        t0_list: t0_list.to_vec(),
        runs,
        pairs,
        monotone,
        fit,
    })
}

/// Runs the scattering experiment from every `t_0` in `t0_list` and compares
/// consecutive runs on `[T, t0_lo]`.
pub fn t0_convergence_study(bundle: &ProfileBundle, big_t: f64, t0_list: &[f64], options: &RunOptions) -> Result<T0Study> {
    if t0_list.len() < 2 {
        return Err(Error::Domain("the t0 study needs at least two starting times".into()));
    }
    ensemble(bundle, big_t, t0_list, options)
}

/// Both sides of the L² balance law for `i∂_t v = -½Δv + Vv + f` with
/// time-independent `V` and `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `‖v(t_1)‖_2^2 − ‖v(t_0)‖_2^2`.
    pub change: f64,
    /// `∫ 2 Im⟨v, f⟩ dt` by the trapezoid rule over the steps.
    pub flux: f64,
    /// `‖v(t_0)‖_2^2`, the scale for a vanishing flux.
    pub initial: f64,
}

impl BalanceReport {
    /// `|change − flux|` relative to the flux, or to the initial mass when
    /// there is no flux.
    pub fn relative_error(&self) -> f64 {
        let scale = if self.flux != 0.0 { self.flux.abs() } else { self.initial };
        if scale == 0.0 {
            self.change.abs()
        } else {
            (self.change - self.flux).abs() / scale
        }
    }
}

/// Exact flow of `i∂_t v = Vv + f` (pointwise) over `tau`.
fn inhomogeneous_kick(v: &mut ComplexField, potential: &RealField, f: &ComplexField, tau: f64) {
    v.data_mut()
        .par_iter_mut()
        .zip(potential.data().par_iter())
        .zip(f.data().par_iter())
        .for_each(|((z, &a), &g)| {
            let e = Complex64::from_polar(1.0, -tau * a);
            let weight = if (a * tau).abs() < 1e-8 {
                Complex64::new(0.0, -tau)
            } else {
                (e - 1.0) / a
            };
            *z = e * *z + weight * g;
        });
}

/// Integrates the linear equation with a Strang split and returns both sides
/// of `‖v(t_1)‖^2 − ‖v(t_0)‖^2 = ∫ 2 Im⟨v, f⟩`.
pub fn balance_law_check(
    ops: &Spectral,
    v0: &ComplexField,
    potential: &RealField,
    f: &ComplexField,
    duration: f64,
    steps: usize,
) -> Result<BalanceReport> {
    v0.check_same_grid(potential.grid())?;
    v0.check_same_grid(f.grid())?;
    if steps == 0 {
        return Err(Error::Domain("balance law check needs at least one step".into()));
    }
    let dt = duration / steps as f64;
    let flux_density = |v: &ComplexField| -> Result<f64> { Ok(2.0 * inner_product(v, f)?.im) };
    let mut v = v0.clone();
    let mut flux = 0.5 * flux_density(&v)?;
    for k in 0..steps {
        inhomogeneous_kick(&mut v, potential, f, 0.5 * dt);
        v = ops.free_schrodinger(&v, dt)?;
        inhomogeneous_kick(&mut v, potential, f, 0.5 * dt);
        let g = flux_density(&v)?;
        flux += if k + 1 == steps { 0.5 * g } else { g };
    }
    flux *= dt;
    let initial = lebesgue_norm(v0, 2.0)?.powi(2);
    let change = lebesgue_norm(&v, 2.0)?.powi(2) - initial;
    Ok(BalanceReport { change, flux, initial })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_state(g: Grid) -> SystemState {
        let u = ComplexField::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            Complex64::from_polar(0.5 * (-r2 / 2.0).exp(), 0.3 * x[0])
        });
        let a = RealField::from_fn(g, |x| 0.2 * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp());
        SystemState::new(u, WaveState::new(a, RealField::zeros(g), 2.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = Grid::new(8, 10.0).unwrap();
        let ops = Spectral::new(g);
        let s = step(&ops, &SystemState::zeros(g, 3.0), 0.1).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(s.wave.a.max_abs(), 0.0);
        assert_eq!(conserved_quantities(&ops, &s).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn schedule_caps_step() {
        let s = StepSchedule { kappa: 0.01, dt_max: 0.2 };
        assert_eq!(s.dt(5.0), 0.05);
        assert_eq!(s.dt(100.0), 0.2);
        assert_eq!(s.steps_between(4.0, 2.0), 100);
    }

    #[test]
    fn sample_times_pin_endpoints() {
        let ts = sample_times(4.0, 64.0, 4, &[16.0, 32.0, 20.0]);
        assert_eq!(ts[0], 4.0);
        assert_eq!(*ts.last().unwrap(), 64.0);
        assert!(ts.contains(&16.0) && ts.contains(&32.0) && ts.contains(&20.0));
        assert_eq!(ts.len(), 18);
    }

    #[test]
    fn step_conserves_mass() {
        let g = Grid::new(16, 12.0).unwrap();
        let ops = Spectral::new(g);
        let s0 = gaussian_state(g);
        let s1 = step(&ops, &s0, 0.05).unwrap();
        let (m0, _) = conserved_quantities(&ops, &s0).unwrap();
        let (m1, _) = conserved_quantities(&ops, &s1).unwrap();
        assert!(((m1 - m0) / m0).abs() < 1e-13);
    }

    #[test]
    fn coupling_term_sign() {
        let g = Grid::new(8, 8.0).unwrap();
        let ops = Spectral::new(g);
        let u = ComplexField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let a = RealField::from_fn(g, |_| 0.5);
        let s = SystemState::new(u, WaveState::new(a, RealField::zeros(g), 0.0).unwrap()).unwrap();
        let (_, e) = conserved_quantities(&ops, &s).unwrap();
        assert!((e - 0.5 * 512.0).abs() < 1e-9);
    }

    #[test]
    fn nan_aborts_with_time() {
        let g = Grid::new(8, 8.0).unwrap();
        let ops = Spectral::new(g);
        let mut s = SystemState::zeros(g, 2.0);
        s.u.data_mut()[3] = Complex64::new(f64::NAN, 0.0);
        match step(&ops, &s, 0.1) {
            Err(Error::NonFinite { time }) => assert!((time - 2.1).abs() < 1e-12),
            other => panic!("expected NonFinite, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn balance_law_without_source_is_trivial() {
        let g = Grid::new(8, 8.0).unwrap();
        let ops = Spectral::new(g);
        let s = gaussian_state(g);
        let r = balance_law_check(&ops, &s.u, &s.wave.a, &ComplexField::zeros(g), 1.0, 10).unwrap();
        assert!(r.change.abs() < 1e-12);
        assert_eq!(r.flux, 0.0);
        assert!(r.relative_error() < 1e-12);
    }
}
