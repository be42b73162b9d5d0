use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::{checks, Format, GridSpec, RateCheck, Scenario, FORMAT_VERSION};
use crate::diagnostics::{fit_decay, log_times, DecayFit};
use crate::error::{Error, Result};
use crate::profiles::{AsymptoticState, NormBounds, ProfileBundle, ProfileOptions};
use crate::remainders::{r1_identity_error, r2_residual, remainder_report, strichartz_r1_norm, REMAINDER_COLUMNS};
use crate::solver::{scattering_experiment, t0_convergence_study, RunOptions, T0Study, TrajectoryRecord};
use crate::spectral::{lebesgue_norm, RealField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Profiles,
    Remainders,
    Scatter,
    #[serde(rename = "t0study")]
    T0Study,
    Checks,
}

impl Stage {
    /// Execution order.
    pub const ALL: [Stage; 5] = [Stage::Profiles, Stage::Remainders, Stage::Scatter, Stage::T0Study, Stage::Checks];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Profiles => "profiles",
            Stage::Remainders => "remainders",
            Stage::Scatter => "scatter",
            Stage::T0Study => "t0study",
            Stage::Checks => "checks",
        }
    }

    /// Acceptance criteria whose rows this stage produces.
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Stage::Profiles => &[1, 2],
            Stage::Remainders => &[3, 4],
            Stage::Scatter => &[5, 6],
            Stage::T0Study => &[7],
            Stage::Checks => &[8, 9, 10, 11],
        }
    }

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Profiles => &[],
            _ => &[Stage::Profiles],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown stage {s:?}; expected one of profiles, remainders, scatter, t0study, checks")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        })
    }
}

/// One line of the verdict table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub stage: Stage,
    pub criterion: Option<u8>,
    pub name: String,
    pub value: Option<f64>,
    /// Human-readable condition, e.g. `<= 1e-6` or `-1.5 ± 0.1`.
    pub requirement: String,
    pub status: Status,
    /// Reported rows do not affect the exit status.
    pub asserted: bool,
    pub note: String,
}

impl CheckRow {
    pub(super) fn at_most(stage: Stage, criterion: Option<u8>, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            stage,
            criterion,
            name: name.into(),
            value: Some(value),
            requirement: format!("<= {threshold}"),
            status: if value <= threshold { Status::Pass } else { Status::Fail },
            asserted: true,
            note: String::new(),
        }
    }

    pub(super) fn near(stage: Stage, criterion: Option<u8>, name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self {
            requirement: format!("{target} ± {tol}"),
            status: if (value - target).abs() <= tol { Status::Pass } else { Status::Fail },
            ..Self::at_most(stage, criterion, name, value, 0.0)
        }
    }

    pub(super) fn skipped(stage: Stage, criterion: Option<u8>, name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            stage,
            criterion,
            name: name.into(),
            value: None,
            requirement: String::new(),
            status: Status::Skip,
            asserted: true,
            note: reason.into(),
        }
    }

    /// A measured value with no requirement attached.
    pub(super) fn info(stage: Stage, name: impl Into<String>, value: f64) -> Self {
        Self {
            requirement: String::new(),
            status: Status::Pass,
            asserted: false,
            ..Self::at_most(stage, None, name, value, 0.0)
        }
    }

    pub(super) fn reported(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub(super) fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum StageOutcome {
    Completed,
    Failed { reason: String },
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    #[serde(flatten)]
    pub outcome: StageOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub rows: Vec<CheckRow>,
}

pub const VERDICT_COLUMNS: [&str; 8] = ["stage", "criterion", "name", "value", "requirement", "status", "asserted", "note"];

impl PipelineReport {
    /// True when every requested stage completed and every asserted row passed.
    pub fn success(&self) -> bool {
        self.stages.iter().all(|s| s.outcome == StageOutcome::Completed)
            && self.rows.iter().filter(|r| r.asserted).all(|r| r.status == Status::Pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.success() {
            0
        } else {
            1
        }
    }

    pub fn rows_for(&self, criterion: u8) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(move |r| r.criterion == Some(criterion))
    }

    /// Skip if any row of the criterion was skipped or none exist, otherwise
    /// pass iff all its asserted rows pass.
    pub fn criterion_status(&self, criterion: u8) -> Status {
        let mut any = false;
        let mut pass = true;
        for r in self.rows_for(criterion) {
            any = true;
            match r.status {
                Status::Skip => return Status::Skip,
                Status::Fail if r.asserted => pass = false,
                _ => {}
            }
        }
        match (any, pass) {
            (false, _) => Status::Skip,
            (true, true) => Status::Pass,
            (true, false) => Status::Fail,
        }
    }

    /// Plain-text verdict table.
    pub fn render(&self) -> String {
        let mut out = format!("scenario {} (seed {})\n", self.scenario, self.seed);
        for s in &self.stages {
            match &s.outcome {
                StageOutcome::Completed => out += &format!("  stage {:<10} completed\n", s.stage),
                StageOutcome::Failed { reason } => out += &format!("  stage {:<10} FAILED: {reason}\n", s.stage),
                StageOutcome::Skipped { reason } => out += &format!("  stage {:<10} skipped: {reason}\n", s.stage),
            }
        }
        out += &format!(
            "\n{:<11} {:>4}  {:<40} {:>13}  {:<22} {:<6}\n",
            "stage", "crit", "check", "value", "requirement", "status"
        );
        for r in &self.rows {
            let value = r.value.map(|v| format!("{v:.5e}")).unwrap_or_else(|| "-".into());
            let crit = r.criterion.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
            let status = if r.asserted { r.status.to_string() } else { format!("({})", r.status) };
            out += &format!("{:<11} {:>4}  {:<40} {:>13}  {:<22} {:<6}", r.stage.as_str(), crit, r.name, value, r.requirement, status);
            if !r.note.is_empty() {
                out += &format!("  {}", r.note);
            }
            out.push('\n');
        }
        out += &format!("\nexit status {}\n", self.exit_code());
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(VERDICT_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.stage.as_str().to_string(),
                r.criterion.map(|c| c.to_string()).unwrap_or_default(),
                r.name.clone(),
                r.value.filter(|v| v.is_finite()).map(|v| format!("{v:e}")).unwrap_or_default(),
                r.requirement.clone(),
                r.status.to_string(),
                r.asserted.to_string(),
                r.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-stage artifact writer honouring the scenario's output formats.
pub(super) struct Artifacts {
    dir: PathBuf,
    csv: bool,
    json: bool,
}

impl Artifacts {
    pub(super) fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub(super) fn csv(&self) -> bool {
        self.csv
    }

    pub(super) fn json(&self) -> bool {
        self.json
    }

    /// Writes `value` with a `version` field merged in.
    pub(super) fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        let mut doc = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut doc {
            map.insert("version".into(), FORMAT_VERSION.into());
        }
        std::fs::write(self.path(name), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    /// Numeric table; the first column is the time used in error reports.
    pub(super) fn write_table(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for row in rows {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { time: row[0] });
            }
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Context {
    bundle: Option<ProfileBundle>,
    study: Option<T0Study>,
}

fn build_bundle(scenario: &Scenario, physical: GridSpec, t_min: f64) -> Result<ProfileBundle> {
    let state = AsymptoticState::new(
        &scenario.state.w_plus,
        &scenario.state.a_plus,
        &scenario.state.a_dot_plus,
        scenario.grid.profile.grid()?,
        physical.grid()?,
    )?;
    let q = &scenario.quadrature;
    ProfileBundle::build(
        state,
        ProfileOptions {
            nu_max: q.nu_max,
            node_count: q.node_count,
            route: q.route,
            dilation: scenario.dilation,
            t_min,
        },
    )
}

/// `|x/reference − 1|`, or `|x|` for a vanishing reference.
fn relative_deviation(x: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        x.abs()
    } else {
        (x / reference - 1.0).abs()
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        a / b
    }
}

fn vector_sup(g: &[RealField; 3]) -> f64 {
    let [x, y, z] = g;
    x.data()
        .iter()
        .zip(y.data())
        .zip(z.data())
        .map(|((a, b), c)| (a * a + b * b + c * c).sqrt())
        .fold(0.0, f64::max)
}

fn profiles_stage(scenario: &Scenario, out: &Artifacts) -> Result<(ProfileBundle, Vec<CheckRow>)> {
    let bundle = build_bundle(scenario, scenario.grid.physical, scenario.earliest_time())?;
    let st = Stage::Profiles;
    let mut rows = Vec::new();
    let w_l2 = lebesgue_norm(bundle.w_plus(), 2.0)?;
    let c4 = bundle.state().c4;

    let mut norm_table = Vec::new();
    for &t in &scenario.profiles.norm_times {
        let u = bundle.u_a(t)?;
        let l2 = lebesgue_norm(&u, 2.0)?;
        let l4 = lebesgue_norm(&u, 4.0)? * t.powf(0.75);
        norm_table.push(vec![t, l2, l4]);
        let tol = &scenario.tolerances;
        rows.push(CheckRow::at_most(st, Some(1), format!("u_a_l2_identity@t={t}"), relative_deviation(l2, w_l2), tol.get("u_a_l2")));
        rows.push(CheckRow::at_most(st, Some(1), format!("u_a_l4_identity@t={t}"), relative_deviation(l4, c4), tol.get("u_a_l4")));
    }

    let a1_sup = bundle.a1_tilde().max_abs();
    let grad_sup = bundle.grad_a1_tilde_sup();
    let mut scaling_table = Vec::new();
    for &t in &scenario.profiles.scaling_times {
        let a = bundle.a1(t)?.max_abs() * t;
        let g = vector_sup(&bundle.grad_a1(t)?) * t * t;
        scaling_table.push(vec![t, a, g]);
        let tol = scenario.tolerances.get("a1_scaling");
        rows.push(CheckRow::at_most(st, Some(2), format!("a1_sup_scaling@t={t}"), relative_deviation(a, a1_sup), tol));
        rows.push(CheckRow::at_most(st, Some(2), format!("grad_a1_sup_scaling@t={t}"), relative_deviation(g, grad_sup), tol));
    }

    // ‖ω^{m+1}Ã_1‖ ∨ ‖ω^m Ã̃_1‖ ≤ (m + ½)^{-1} ‖ω^m |w_+|^2‖ for m = 0, 1.
    let nb: NormBounds = bundle.norm_bounds()?;
    let slack = 1.0 + scenario.tolerances.get("norm_bound");
    for (name, lhs, rhs) in [
        ("norm_bound_grad_a1", nb.grad_a1, 2.0 * nb.source),
        ("norm_bound_a1_tt", nb.a1_tt, 2.0 * nb.source),
        ("norm_bound_lap_a1", nb.lap_a1, 2.0 / 3.0 * nb.grad_source),
        ("norm_bound_grad_a1_tt", nb.grad_a1_tt, 2.0 / 3.0 * nb.grad_source),
    ] {
        rows.push(CheckRow::at_most(st, None, name, ratio(lhs, rhs), slack));
    }

    let pg = bundle.profile_grid();
    let axis: Vec<Vec<f64>> = (0..pg.len())
        .filter(|&i| {
            let p = pg.position(i);
            p[1] == 0.0 && p[2] == 0.0
        })
        .map(|i| {
            let w = bundle.w_plus().data()[i];
            vec![pg.position(i)[0], w.re, w.im, bundle.a1_tilde().data()[i], bundle.a1_tilde_tilde().data()[i]]
        })
        .collect();
    out.write_table("profile_axis.csv", &["xi", "w_re", "w_im", "a1_tilde", "a1_tilde_tilde"], &axis)?;
    out.write_table("profile_norms.csv", &["t", "u_a_l2", "u_a_l4_scaled"], &norm_table)?;
    out.write_table("profile_scaling.csv", &["t", "a1_sup_scaled", "grad_a1_sup_scaled"], &scaling_table)?;

    #[derive(Serialize)]
    struct Doc {
        w_l2: f64,
        c4: f64,
        a1_tilde_sup: f64,
        grad_a1_tilde_sup: f64,
        a1_tilde_tilde_sup: f64,
        tail_error: f64,
        radial: bool,
        nu_max: f64,
        node_count: usize,
        norm_bounds: NormBounds,
    }
    out.write_json(
        "profiles.json",
        &Doc {
            w_l2,
            c4,
            a1_tilde_sup: a1_sup,
            grad_a1_tilde_sup: grad_sup,
            a1_tilde_tilde_sup: bundle.a1_tilde_tilde().max_abs(),
            tail_error: bundle.tail_error(),
            radial: bundle.is_radial(),
            nu_max: bundle.nu_max(),
            node_count: bundle.quadrature_nodes().len(),
            norm_bounds: nb,
        },
    )?;
    Ok((bundle, rows))
}

fn rate_row(stage: Stage, mode: RateCheck, name: &str, exponent: f64, target: f64, tol: f64) -> CheckRow {
    match mode {
        RateCheck::Sharp => CheckRow::near(stage, Some(4), format!("{name}_exponent"), exponent, target, tol),
        RateCheck::Bound => CheckRow::at_most(stage, Some(4), format!("{name}_exponent"), exponent, target + tol),
    }
}

fn remainders_stage(scenario: &Scenario, bundle: &ProfileBundle, out: &Artifacts) -> Result<Vec<CheckRow>> {
    let st = Stage::Remainders;
    let rem = &scenario.remainders;
    let tol = &scenario.tolerances;
    let mut rows = Vec::new();

    for &t in &rem.r2_times {
        let r2 = r2_residual(bundle, t)?;
        rows.push(CheckRow::at_most(st, Some(3), format!("r2_relative@t={t}"), r2.relative(), tol.get("r2_relative")));
    }

    let times = log_times(rem.t_lo, rem.t_hi, rem.samples);
    let report = remainder_report(bundle, &times, (rem.t_lo, rem.t_hi))?;
    if out.csv() {
        report.write_csv(&out.path("remainders.csv"))?;
    }
    if out.json() {
        report.write_json(&out.path("remainders.json"))?;
    }
    let fits = report
        .fits
        .as_ref()
        .ok_or_else(|| Error::Domain("remainder fit window holds fewer than two samples".into()))?;
    let rate = tol.get("r1_rate");
    rows.push(rate_row(st, rem.rates, "r1_l2", fits.r1_l2.exponent, -1.5, rate));
    rows.push(rate_row(st, rem.rates, "grad_r1_l2", fits.grad_r1_l2.exponent, -1.5, rate));
    rows.push(rate_row(st, rem.rates, "dt_r1_l2", fits.dt_r1_l2.exponent, -1.5, rate));
    // The L^4 rate and the Strichartz norm are upper bounds only.
    rows.push(CheckRow::at_most(st, None, "r1_l4_exponent", fits.r1_l4.exponent, -1.5 + rate));

    let l4 = report.series("r1_l4")?;
    let starts: Vec<f64> = times.iter().copied().filter(|&t| t <= 0.5 * rem.t_hi).collect();
    if starts.len() >= 2 {
        let mut norms = Vec::new();
        for &s in &starts {
            norms.push(strichartz_r1_norm(&l4, s)?.norm);
        }
        let series = crate::diagnostics::DecaySeries::new("strichartz_r1", starts.clone(), norms)?;
        let fit = fit_decay(&series, None)?;
        rows.push(CheckRow::at_most(
            st,
            None,
            "strichartz_r1_exponent",
            fit.exponent,
            -9.0 / 8.0 + tol.get("strichartz_r1_rate"),
        ));
    }

    for column in REMAINDER_COLUMNS.iter().skip(1) {
        let s = report.series(column)?;
        let worst = s
            .times
            .iter()
            .zip(&s.values)
            .zip(s.values.iter().skip(1))
            .filter(|((&t, _), _)| t >= 8.0)
            .map(|((_, &a), &b)| ratio(b, a))
            .fold(0.0, f64::max);
        if worst > 1.0 {
            log::warn!("remainder norm {column} increases between samples (ratio {worst:.4})");
        }
        rows.push(CheckRow::at_most(st, None, format!("monotone_{column}"), worst, 1.0).reported());
    }

    for id in &rem.identity {
        let err = match id.physical {
            Some(grid) => {
                let b = build_bundle(scenario, grid, (id.t - 2.0 * id.step).max(1.0))?;
                r1_identity_error(&b, id.t, id.step)?
            }
            None => r1_identity_error(bundle, id.t, id.step)?,
        };
        let note = id
            .physical
            .map(|g| format!("grid {}^3, L = {}", g.n, g.box_length))
            .unwrap_or_default();
        rows.push(CheckRow::at_most(st, Some(4), format!("r1_identity@t={}", id.t), err, tol.get("r1_identity")).with_note(note));
    }
    Ok(rows)
}

fn write_record(out: &Artifacts, stem: &str, record: &TrajectoryRecord) -> Result<()> {
    if out.csv() {
        record.write_csv(&out.path(&format!("{stem}.csv")))?;
    }
    if out.json() {
        record.write_json(&out.path(&format!("{stem}.json")))?;
    }
    Ok(())
}

fn run_options(scenario: &Scenario) -> RunOptions {
    RunOptions {
        schedule: scenario.solver,
        samples_per_block: scenario.times.samples_per_block,
        keep_snapshots: false,
    }
}

/// Saves whatever an aborted run produced before passing the error on.
fn keep_partial<T>(out: &Artifacts, stem: &str, result: Result<T>) -> Result<T> {
    if let Err(Error::Aborted { partial, .. }) = &result {
        if let Err(e) = write_record(out, &format!("{stem}_partial"), partial) {
            log::warn!("could not write the partial trajectory: {e}");
        }
    }
    result
}

fn scatter_stage(scenario: &Scenario, ctx: &mut Context, with_study: bool, out: &Artifacts) -> Result<Vec<CheckRow>> {
    let st = Stage::Scatter;
    let bundle = ctx.bundle.as_ref().expect("prerequisite checked");
    let times = &scenario.times;
    let t0 = *times.t0_list.last().expect("validated");
    let options = run_options(scenario);
    let record = if with_study && times.t0_list.len() >= 2 {
        let study = keep_partial(out, "scatter", t0_convergence_study(bundle, times.big_t, &times.t0_list, &options))?;
        let record = study.runs.last().expect("one run per t0").clone();
        ctx.study = Some(study);
        record
    } else {
        keep_partial(out, "scatter", scattering_experiment(bundle, times.big_t, t0, &options))?
    };
    write_record(out, "scatter", &record)?;

    let tol = &scenario.tolerances;
    let mut rows = vec![
        CheckRow::at_most(st, Some(5), "mass_drift", record.drift.l2, tol.get("mass_drift")),
        CheckRow::at_most(st, Some(5), "energy_drift", record.drift.energy, tol.get("energy_drift")),
    ];
    let (v, b) = match &record.fits {
        Some(f) => (f.v_l2.exponent, f.b_energy.exponent),
        None => (f64::NAN, f64::NAN),
    };
    let window = format!("fit over [{}, {}]", times.big_t, 0.5 * t0);
    rows.push(CheckRow::at_most(st, Some(6), "v_l2_exponent", v, -tol.get("v_decay_rate")).with_note(window.clone()));
    rows.push(CheckRow::at_most(st, Some(6), "b_energy_exponent", b, -tol.get("b_decay_rate")).with_note(window));
    if let Some(s) = record.seminorms {
        rows.push(CheckRow::info(st, "seminorm_x", s.x));
        rows.push(CheckRow::info(st, "seminorm_x1", s.x1));
    }
    Ok(rows)
}

fn t0study_stage(scenario: &Scenario, ctx: &mut Context, out: &Artifacts) -> Result<Vec<CheckRow>> {
    let st = Stage::T0Study;
    let times = &scenario.times;
    if times.t0_list.len() < 2 {
        return Err(Error::Domain("the t0 study needs at least two entries in times.t0_list".into()));
    }
    let study = match ctx.study.take() {
        Some(s) => s,
        None => {
            let bundle = ctx.bundle.as_ref().expect("prerequisite checked");
            keep_partial(out, "t0study", t0_convergence_study(bundle, times.big_t, &times.t0_list, &run_options(scenario)))?
        }
    };
    if out.json() {
        study.write_json(&out.path("t0study.json"))?;
    }
    let pairs: Vec<Vec<f64>> = study.pairs.iter().map(|p| vec![p.t0_lo, p.t0_hi, p.sup_u_l2, p.b_l4l4]).collect();
    out.write_table("t0study_pairs.csv", &["t0_lo", "t0_hi", "sup_u_l2", "b_l4l4"], &pairs)?;
    for run in &study.runs {
        if out.csv() {
            run.write_csv(&out.path(&format!("t0study_t0_{}.csv", run.t_start)))?;
        }
    }

    let successive = study
        .pairs
        .windows(2)
        .map(|w| ratio(w[1].sup_u_l2, w[0].sup_u_l2))
        .fold(0.0, f64::max);
    let mut rows = Vec::new();
    if study.pairs.len() >= 2 {
        rows.push(
            CheckRow::at_most(st, Some(7), "sup_diff_successive_ratio", successive, 1.0)
                .with_note(format!("monotone = {}", study.monotone)),
        );
    }
    let exponent = study.fit.as_ref().map_or(f64::NAN, |f: &DecayFit| f.exponent);
    rows.push(CheckRow::at_most(st, Some(7), "sup_diff_t0_exponent", exponent, -scenario.tolerances.get("t0_decay_rate")));
    ctx.study = Some(study);
    Ok(rows)
}

/// Runs the requested stages in dependency order and writes every artifact
/// plus `verdicts.csv` and `summary.json` under the scenario's output
/// directory. A failed stage skips its dependents; independent stages still
/// run.
pub fn run_pipeline(scenario: &Scenario, stages: &[Stage]) -> Result<PipelineReport> {
    let dir = scenario.outputs.directory.clone();
    std::fs::create_dir_all(&dir)?;
    let out = Artifacts {
        dir,
        csv: scenario.writes(Format::Csv),
        json: scenario.writes(Format::Json),
    };
    let requested: BTreeSet<Stage> = stages.iter().copied().collect();
    let mut ctx = Context { bundle: None, study: None };
    let mut report = PipelineReport {
        version: FORMAT_VERSION,
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        stages: Vec::new(),
        rows: Vec::new(),
    };

    for stage in Stage::ALL.into_iter().filter(|s| requested.contains(s)) {
        let missing = stage.prerequisites().iter().find(|p| match p {
            Stage::Profiles => ctx.bundle.is_none(),
            _ => false,
        });
        if let Some(p) = missing {
            let why = if requested.contains(p) { "did not complete" } else { "was not requested" };
            let reason = format!("missing prerequisite: stage {p} {why}");
            log::warn!("skipping stage {stage}: {reason}");
            for &c in stage.criteria() {
                report.rows.push(CheckRow::skipped(stage, Some(c), format!("criterion {c}"), reason.clone()));
            }
            report.stages.push(StageRecord {
                stage,
                outcome: StageOutcome::Skipped { reason },
            });
            continue;
        }
        log::info!("stage {stage}: starting");
        let result = match stage {
            Stage::Profiles => profiles_stage(scenario, &out).map(|(bundle, rows)| {
                ctx.bundle = Some(bundle);
                rows
            }),
            Stage::Remainders => remainders_stage(scenario, ctx.bundle.as_ref().expect("checked"), &out),
            Stage::Scatter => scatter_stage(scenario, &mut ctx, requested.contains(&Stage::T0Study), &out),
            Stage::T0Study => t0study_stage(scenario, &mut ctx, &out),
            Stage::Checks => checks::run(scenario, ctx.bundle.as_ref().expect("checked"), &out),
        };
        let outcome = match result {
            Ok(rows) => {
                report.rows.extend(rows);
                StageOutcome::Completed
            }
            Err(e) => {
                log::error!("stage {stage} failed: {e}");
                for &c in stage.criteria() {
                    report.rows.push(CheckRow::skipped(stage, Some(c), format!("criterion {c}"), format!("stage failed: {e}")));
                }
                StageOutcome::Failed { reason: e.to_string() }
            }
        };
        report.stages.push(StageRecord { stage, outcome });
    }

    if out.csv() {
        report.write_csv(&out.path("verdicts.csv"))?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        scenario: &'a str,
        seed: u64,
        success: bool,
        stages: &'a [StageRecord],
        verdicts: &'a [CheckRow],
    }
    out.write_json(
        "summary.json",
        &Summary {
            scenario: &report.scenario,
            seed: report.seed,
            success: report.success(),
            stages: &report.stages,
            verdicts: &report.rows,
        },
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("plot".parse::<Stage>().is_err());
    }

    #[test]
    fn criterion_status_combines_rows() {
        let mut r = PipelineReport {
            version: FORMAT_VERSION,
            scenario: "t".into(),
            seed: 0,
            stages: vec![],
            rows: vec![
                CheckRow::at_most(Stage::Profiles, Some(1), "a", 0.5, 1.0),
                CheckRow::at_most(Stage::Profiles, Some(1), "b", 2.0, 1.0).reported(),
            ],
        };
        assert_eq!(r.criterion_status(1), Status::Pass);
        assert_eq!(r.criterion_status(2), Status::Skip);
        assert!(r.success());
        r.rows.push(CheckRow::near(Stage::Profiles, Some(1), "c", -1.3, -1.5, 0.1));
        assert_eq!(r.criterion_status(1), Status::Fail);
        assert!(!r.success());
    }

    #[test]
    fn nan_fails() {
        assert_eq!(CheckRow::at_most(Stage::Scatter, None, "x", f64::NAN, 1.0).status, Status::Fail);
        assert_eq!(CheckRow::near(Stage::Scatter, None, "x", f64::NAN, 1.0, 1.0).status, Status::Fail);
    }
}
