//! Scenario files and the staged experiment pipeline.
//!
//! A scenario is a TOML document; every table is optional and falls back to
//! the reference configuration (Gaussian `w_+`, Gaussian `A_+` bump, `T = 4`,
//! `t_0 ∈ {16, 32, 64}`). The field list, the CSV column orders and the JSON
//! field names are documented in `docs/format.md`.

mod checks;
mod pipeline;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Route, WPlusSpec, WaveSpec};
use crate::solver::StepSchedule;
use crate::spectral::{DilationOptions, Grid};

pub use pipeline::{run_pipeline, CheckRow, PipelineReport, Stage, StageOutcome, Status};

/// Version stamped into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub box_length: f64,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.box_length)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Grid carrying `w_+`, `Ã_1` and `Ã̃_1`.
    pub profile: GridSpec,
    /// Grid carrying `u`, `A` and the dilated profiles.
    pub physical: GridSpec,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            profile: GridSpec { n: 32, box_length: 4.0 },
            physical: GridSpec { n: 128, box_length: 224.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateSection {
    pub w_plus: WPlusSpec,
    pub a_plus: WaveSpec,
    pub a_dot_plus: WaveSpec,
}

impl Default for StateSection {
    fn default() -> Self {
        Self {
            w_plus: WPlusSpec::Gaussian {
                amplitude: 0.104,
                width: 0.3,
                center: [0.0; 3],
            },
            a_plus: WaveSpec::Gaussian {
                amplitude: 1.0,
                width: 2.0,
                center: [0.0; 3],
            },
            a_dot_plus: WaveSpec::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimesSection {
    /// Final time `T` of the backward integrations.
    #[serde(rename = "T")]
    pub big_t: f64,
    /// Starting times of the backward integrations, increasing.
    pub t0_list: Vec<f64>,
    /// Latest time at which any field is evaluated.
    pub t_max: f64,
    /// Trajectory samples per dyadic block `[t, 2t]`.
    pub samples_per_block: usize,
}

impl Default for TimesSection {
    fn default() -> Self {
        Self {
            big_t: 4.0,
            t0_list: vec![16.0, 32.0, 64.0],
            t_max: 64.0,
            samples_per_block: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    /// Times for the `L^2`/`L^4` norm identities of `u_a`.
    pub norm_times: Vec<f64>,
    /// Times for the scaling identities of `A_1` and `∇A_1`.
    pub scaling_times: Vec<f64>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            norm_times: vec![8.0, 16.0, 32.0],
            scaling_times: vec![16.0, 32.0, 64.0],
        }
    }
}

/// How the fitted `R_1` exponents are judged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateCheck {
    /// Exponent at most `-3/2 + tol`: the estimate as an upper bound.
    #[default]
    Bound,
    /// Exponent within `tol` of `-3/2`: the estimate is saturated.
    Sharp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityCheck {
    pub t: f64,
    /// Step of the centred difference for `∂_t u_a`.
    #[serde(default = "default_identity_step")]
    pub step: f64,
    /// Physical grid for this check; the scenario grid when absent.
    #[serde(default)]
    pub physical: Option<GridSpec>,
}

fn default_identity_step() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemainderSection {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Log-spaced sample count over `[t_lo, t_hi]`.
    pub samples: usize,
    pub r2_times: Vec<f64>,
    pub rates: RateCheck,
    pub identity: Vec<IdentityCheck>,
}

impl Default for RemainderSection {
    fn default() -> Self {
        Self {
            t_lo: 8.0,
            t_hi: 64.0,
            samples: 7,
            r2_times: vec![8.0, 16.0],
            rates: RateCheck::Bound,
            identity: vec![IdentityCheck {
                t: 16.0,
                step: default_identity_step(),
                physical: None,
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    /// Upper limit of the `ν`-integrals; `inf` selects the exact tail map.
    pub nu_max: f64,
    pub node_count: usize,
    pub route: Route,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            nu_max: f64::INFINITY,
            node_count: 256,
            route: Route::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    /// Grid for the Schrödinger Strichartz batch.
    pub strichartz_grid: GridSpec,
    pub strichartz_batch: usize,
    pub strichartz_window: (f64, f64),
    /// Grid for the wave estimates.
    pub wave_grid: GridSpec,
    /// Times for the free-wave and `A_a` decay fits, spanning `[lo, t_max]`;
    /// `lo` should exceed the width of `A_+` so that the outgoing shell dominates.
    pub decay_t_lo: f64,
    pub decay_samples: usize,
    pub dyadic_cases: usize,
    /// Grid, time interval and coarse step of the self-convergence run.
    pub order_grid: GridSpec,
    pub order_interval: (f64, f64),
    pub order_dt: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            strichartz_grid: GridSpec { n: 64, box_length: 64.0 },
            strichartz_batch: 4,
            strichartz_window: (0.0, 5.0),
            wave_grid: GridSpec { n: 64, box_length: 32.0 },
            decay_t_lo: 8.0,
            decay_samples: 13,
            dyadic_cases: 20,
            order_grid: GridSpec { n: 32, box_length: 16.0 },
            order_interval: (2.0, 3.0),
            order_dt: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

/// Named thresholds. Every entry is positive; rate thresholds are decay
/// rates, so `v_decay_rate = 0.35` asks for an exponent `<= -0.35`.
pub const DEFAULT_TOLERANCES: [(&str, f64); 20] = [
    ("u_a_l2", 1e-4),
    ("u_a_l4", 1e-3),
    ("a1_scaling", 1e-3),
    ("norm_bound", 1e-6),
    ("r2_relative", 1e-3),
    ("r1_rate", 0.1),
    ("r1_identity", 1e-4),
    ("strichartz_r1_rate", 0.15),
    ("mass_drift", 1e-6),
    ("energy_drift", 1e-4),
    ("v_decay_rate", 0.35),
    ("b_decay_rate", 0.6),
    ("t0_decay_rate", 0.3),
    ("unitarity", 1e-12),
    ("strichartz_growth", 0.2),
    ("wave_energy", 0.05),
    ("free_wave_sup", 0.15),
    ("free_wave_l2", 0.05),
    ("dyadic_constant", 1e-12),
    ("order_factor", 0.25),
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tolerances(pub BTreeMap<String, f64>);

impl Tolerances {
    /// The configured value, or the default for `name`.
    pub fn get(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or_else(|| {
            DEFAULT_TOLERANCES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|&(_, v)| v)
                .unwrap_or_else(|| panic!("no tolerance named {name}"))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seeds the random inputs of the `checks` stage.
    pub seed: u64,
    pub grid: GridSection,
    pub state: StateSection,
    pub times: TimesSection,
    pub profiles: ProfileSection,
    pub remainders: RemainderSection,
    pub quadrature: QuadratureSection,
    pub solver: StepSchedule,
    pub dilation: DilationOptions,
    pub checks: ChecksSection,
    pub tolerances: Tolerances,
    pub outputs: OutputSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "reference".into(),
            seed: 0,
            grid: GridSection::default(),
            state: StateSection::default(),
            times: TimesSection::default(),
            profiles: ProfileSection::default(),
            remainders: RemainderSection::default(),
            quadrature: QuadratureSection::default(),
            solver: StepSchedule::default(),
            dilation: DilationOptions {
                mass_tolerance: 1e-9,
                ..DilationOptions::default()
            },
            checks: ChecksSection::default(),
            tolerances: Tolerances::default(),
            outputs: OutputSection::default(),
        }
    }
}

fn check_grid(errs: &mut Vec<String>, name: &str, spec: &GridSpec) {
    if let Err(e) = spec.grid() {
        errs.push(format!("{name}: {e}"));
    }
}

fn check_times(errs: &mut Vec<String>, name: &str, times: &[f64], lo: f64, hi: f64) {
    for &t in times {
        if !(t >= lo && t <= hi) {
            errs.push(format!("{name}: time {t} must lie in [{lo}, {hi}]"));
        }
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl Scenario {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        let errs = scenario.validate();
        if errs.is_empty() {
            Ok(scenario)
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// A copy with every default tolerance written out explicitly.
    pub fn resolved(&self) -> Scenario {
        let mut s = self.clone();
        for (name, value) in DEFAULT_TOLERANCES {
            s.tolerances.0.entry(name.to_string()).or_insert(value);
        }
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Earliest time at which the pipeline asks for physical fields.
    pub fn earliest_time(&self) -> f64 {
        let mut t = self.times.big_t.min(self.remainders.t_lo);
        for &s in self.profiles.norm_times.iter().chain(&self.profiles.scaling_times).chain(&self.remainders.r2_times) {
            t = t.min(s);
        }
        for id in self.remainders.identity.iter().filter(|c| c.physical.is_none()) {
            t = t.min(id.t - 2.0 * id.step);
        }
        t.max(1.0)
    }

    /// Every violated constraint, in document order.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        check_grid(&mut errs, "grid.profile", &self.grid.profile);
        check_grid(&mut errs, "grid.physical", &self.grid.physical);
        errs.extend(self.state.w_plus.validate());
        errs.extend(self.state.a_plus.validate("state.a_plus"));
        errs.extend(self.state.a_dot_plus.validate("state.a_dot_plus"));

        let times = &self.times;
        if !(times.big_t >= 1.0 && times.big_t.is_finite()) {
            errs.push(format!("times.T = {} must be >= 1", times.big_t));
        }
        if !(times.t_max.is_finite() && times.t_max >= times.big_t) {
            errs.push(format!("times.t_max = {} must be finite and >= times.T", times.t_max));
        }
        if times.t0_list.is_empty() {
            errs.push("times.t0_list must not be empty".into());
        }
        for &t0 in &times.t0_list {
            if !(t0 > times.big_t && t0 <= times.t_max) {
                errs.push(format!("times.t0_list: {t0} must lie in (T, t_max] = ({}, {}]", times.big_t, times.t_max));
            }
        }
        if times.t0_list.windows(2).any(|w| !(w[1] > w[0])) {
            errs.push("times.t0_list must be strictly increasing".into());
        }
        if times.samples_per_block == 0 {
            errs.push("times.samples_per_block must be >= 1".into());
        }

        let rho = self.state.w_plus.support_radius();
        let half_profile = 0.5 * self.grid.profile.box_length;
        if rho > half_profile {
            errs.push(format!(
                "support_radius(w_plus) = {rho:.4} must not exceed half of grid.profile.box_length = {half_profile}"
            ));
        }
        let need = 2.0 * times.t_max * rho;
        if !(self.grid.physical.box_length >= need) {
            errs.push(format!(
                "grid.physical.box_length = {} violates box_length >= 2 * t_max * support_radius(w_plus) = 2 * {} * {rho:.4} = {need:.4}",
                self.grid.physical.box_length, times.t_max
            ));
        }

        check_times(&mut errs, "profiles.norm_times", &self.profiles.norm_times, 1.0, times.t_max);
        check_times(&mut errs, "profiles.scaling_times", &self.profiles.scaling_times, 1.0, times.t_max);

        let rem = &self.remainders;
        if !(rem.t_lo >= 1.0 && rem.t_hi > rem.t_lo && rem.t_hi <= times.t_max) {
            errs.push(format!(
                "remainders: need 1 <= t_lo < t_hi <= t_max, got t_lo = {}, t_hi = {}",
                rem.t_lo, rem.t_hi
            ));
        }
        if rem.samples < 2 {
            errs.push("remainders.samples must be >= 2".into());
        }
        check_times(&mut errs, "remainders.r2_times", &rem.r2_times, 1.0, times.t_max);
        for (i, id) in rem.identity.iter().enumerate() {
            if !positive(id.step) || !(id.t - id.step >= 1.0) || id.t + id.step > times.t_max {
                errs.push(format!(
                    "remainders.identity[{i}]: need 1 <= t - step and t + step <= t_max, got t = {}, step = {}",
                    id.t, id.step
                ));
            }
            if let Some(g) = &id.physical {
                check_grid(&mut errs, &format!("remainders.identity[{i}].physical"), g);
                let need = 2.0 * (id.t + id.step) * rho;
                if !(g.box_length >= need) {
                    errs.push(format!(
                        "remainders.identity[{i}].physical.box_length = {} violates box_length >= 2 * (t + step) * support_radius(w_plus) = {need:.4}",
                        g.box_length
                    ));
                }
            }
        }

        let q = &self.quadrature;
        if !(q.nu_max > 1.0) {
            errs.push(format!("quadrature.nu_max = {} must exceed 1", q.nu_max));
        }
        if q.node_count < 2 {
            errs.push("quadrature.node_count must be >= 2".into());
        }
        errs.extend(self.solver.validate());
        if !(self.dilation.mass_tolerance > 0.0 && self.dilation.mass_tolerance < 1.0) {
            errs.push("dilation.mass_tolerance must lie in (0, 1)".into());
        }

        let c = &self.checks;
        check_grid(&mut errs, "checks.strichartz_grid", &c.strichartz_grid);
        check_grid(&mut errs, "checks.wave_grid", &c.wave_grid);
        check_grid(&mut errs, "checks.order_grid", &c.order_grid);
        if c.strichartz_batch == 0 {
            errs.push("checks.strichartz_batch must be >= 1".into());
        }
        if !(c.strichartz_window.0 >= 0.0 && c.strichartz_window.1 > c.strichartz_window.0) {
            errs.push("checks.strichartz_window must be an interval [a, b] with 0 <= a < b".into());
        }
        if !(c.decay_t_lo >= 1.0 && c.decay_t_lo < times.t_max) || c.decay_samples < 2 {
            errs.push("checks: need 1 <= decay_t_lo < t_max and decay_samples >= 2".into());
        }
        if c.dyadic_cases == 0 {
            errs.push("checks.dyadic_cases must be >= 1".into());
        }
        if !(c.order_interval.1 > c.order_interval.0) || !positive(c.order_dt) || c.order_dt > c.order_interval.1 - c.order_interval.0 {
            errs.push("checks: order_interval must be increasing and order_dt must fit inside it".into());
        }

        for (name, &value) in &self.tolerances.0 {
            if !DEFAULT_TOLERANCES.iter().any(|(n, _)| n == name) {
                errs.push(format!("tolerances.{name}: unknown tolerance"));
            } else if !positive(value) {
                errs.push(format!("tolerances.{name} = {value} must be positive"));
            }
        }
        if self.outputs.formats.is_empty() {
            errs.push("outputs.formats must name at least one format".into());
        }
        errs
    }

    pub fn writes(&self, format: Format) -> bool {
        self.outputs.formats.contains(&format)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Scenario::from_toml(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::from_toml(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_the_reference() {
        let s = parse("").unwrap();
        assert_eq!(s, Scenario::default());
        assert!(s.quadrature.nu_max.is_infinite());
    }

    #[test]
    fn default_round_trips() {
        let s = Scenario::default();
        assert_eq!(parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn parse_error_reports_line() {
        match parse("name = \"x\"\n\n[times]\nT = \"four\"\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(parse("[grid]\nwidth = 3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn all_violations_are_listed() {
        let text = "[times]\nT = 0.5\nt0_list = [100.0]\n\n[tolerances]\nr1_rate = -1.0\nbogus = 1.0\n";
        let Err(Error::Validation(errs)) = parse(text) else {
            panic!("expected validation failure")
        };
        assert!(errs.iter().any(|e| e.contains("times.T")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("t0_list: 100")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("tolerances.r1_rate")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("tolerances.bogus")), "{errs:?}");
    }

    #[test]
    fn small_box_names_the_inequality() {
        let Err(Error::Validation(errs)) = parse("[grid.physical]\nn = 64\nbox_length = 100.0\n") else {
            panic!("expected validation failure")
        };
        assert!(errs.iter().any(|e| e.contains("box_length >= 2 * t_max * support_radius")), "{errs:?}");
    }

    #[test]
    fn tolerance_lookup_falls_back() {
        let mut t = Tolerances::default();
        assert_eq!(t.get("mass_drift"), 1e-6);
        t.0.insert("mass_drift".into(), 1e-3);
        assert_eq!(t.get("mass_drift"), 1e-3);
    }
}
