use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::radial::RadialSource;
use crate::error::{Error, Result};
use crate::spectral::{lebesgue_norm, ComplexField, Grid, RealField};

/// Relative amplitude below which `w_+` counts as vanished when the support
/// radius is computed.
const SUPPORT_AMPLITUDE: f64 = 1e-6;

/// One term `c e^{iθ} Π_j H_{n_j}((x_j - c_j)/σ)` of a Hermite–Gaussian profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermiteTerm {
    pub order: [u32; 3],
    pub coefficient: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Families for the scattering profile `w_+ = F u_+`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WPlusSpec {
    Zero,
    /// `α e^{-|x-c|^2/(2σ^2)}`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// Finite Hermite–Gaussian combination sharing one envelope.
    HermiteGaussian {
        width: f64,
        #[serde(default)]
        center: [f64; 3],
        terms: Vec<HermiteTerm>,
    },
}

fn hermite(n: u32, y: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * y);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * y * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn norm3(c: [f64; 3]) -> f64 {
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

impl WPlusSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            WPlusSpec::Zero => {}
            WPlusSpec::Gaussian { amplitude, width, center } => {
                if !amplitude.is_finite() {
                    errs.push("state.w_plus.amplitude must be finite".into());
                }
                if !(width.is_finite() && *width > 0.0) {
                    errs.push("state.w_plus.width must be positive".into());
                }
                if center.iter().any(|c| !c.is_finite()) {
                    errs.push("state.w_plus.center must be finite".into());
                }
            }
            WPlusSpec::HermiteGaussian { width, terms, .. } => {
                if !(width.is_finite() && *width > 0.0) {
                    errs.push("state.w_plus.width must be positive".into());
                }
                if terms.is_empty() {
                    errs.push("state.w_plus.terms must not be empty".into());
                }
                if terms.iter().any(|t| !t.coefficient.is_finite() || !t.phase.is_finite()) {
                    errs.push("state.w_plus.terms coefficients must be finite".into());
                }
            }
        }
        errs
    }

    pub fn eval(&self, x: [f64; 3]) -> Complex64 {
        match self {
            WPlusSpec::Zero => Complex64::default(),
            WPlusSpec::Gaussian { amplitude, width, center } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                Complex64::new(amplitude * (-r2 / (2.0 * width * width)).exp(), 0.0)
            }
            WPlusSpec::HermiteGaussian { width, center, terms } => {
                let y = [
                    (x[0] - center[0]) / width,
                    (x[1] - center[1]) / width,
                    (x[2] - center[2]) / width,
                ];
                let env = (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) / 2.0).exp();
                terms
                    .iter()
                    .map(|t| {
                        let p = hermite(t.order[0], y[0]) * hermite(t.order[1], y[1]) * hermite(t.order[2], y[2]);
                        Complex64::from_polar(t.coefficient, t.phase) * p
                    })
                    .sum::<Complex64>()
                    * env
            }
        }
    }

    /// Radius outside which `|w_+|` is below `10^{-6}` of its envelope peak.
    pub fn support_radius(&self) -> f64 {
        let base = (2.0 * SUPPORT_AMPLITUDE.recip().ln()).sqrt();
        match self {
            WPlusSpec::Zero => 0.0,
            WPlusSpec::Gaussian { width, center, .. } => norm3(*center) + width * base,
            WPlusSpec::HermiteGaussian { width, center, terms } => {
                let order = terms
                    .iter()
                    .map(|t| t.order.iter().sum::<u32>())
                    .max()
                    .unwrap_or(0) as f64;
                norm3(*center) + width * (base * base + 2.0 * order).sqrt()
            }
        }
    }

    /// `|w_+|^2` as a radial Gaussian mixture, when the profile is isotropic and centred.
    pub fn radial_source(&self) -> Option<RadialSource> {
        match self {
            WPlusSpec::Zero => Some(RadialSource::new(Vec::new())),
            WPlusSpec::Gaussian { amplitude, width, center } if norm3(*center) == 0.0 => {
                Some(RadialSource::new(vec![(amplitude * amplitude, *width)]))
            }
            _ => None,
        }
    }
}

/// Families for the free wave data `A_+` and `Ȧ_+`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveSpec {
    #[default]
    Zero,
    /// `a e^{-|x-c|^2/(2W^2)}`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `a (1 + |x|^2/W^2)^{-γ}`; square integrable for `γ > 3/4`.
    PowerTail {
        amplitude: f64,
        width: f64,
        exponent: f64,
    },
}

impl WaveSpec {
    pub fn validate(&self, name: &str) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            WaveSpec::Zero => {}
            WaveSpec::Gaussian { amplitude, width, center } => {
                if !amplitude.is_finite() {
                    errs.push(format!("state.{name}.amplitude must be finite"));
                }
                if !(width.is_finite() && *width > 0.0) {
                    errs.push(format!("state.{name}.width must be positive"));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    errs.push(format!("state.{name}.center must be finite"));
                }
            }
            WaveSpec::PowerTail { amplitude, width, exponent } => {
                if !amplitude.is_finite() {
                    errs.push(format!("state.{name}.amplitude must be finite"));
                }
                if !(width.is_finite() && *width > 0.0) {
                    errs.push(format!("state.{name}.width must be positive"));
                }
                if !(exponent.is_finite() && *exponent > 0.75) {
                    errs.push(format!(
                        "state.{name}.exponent must exceed 3/4 for a square-integrable field"
                    ));
                }
            }
        }
        errs
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            WaveSpec::Zero => 0.0,
            WaveSpec::Gaussian { amplitude, width, center } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            WaveSpec::PowerTail { amplitude, width, exponent } => {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                amplitude * (1.0 + r2 / (width * width)).powf(-exponent)
            }
        }
    }

    pub fn sample(&self, grid: Grid) -> RealField {
        RealField::from_fn(grid, |x| self.eval(x))
    }
}

/// The scattering data `(w_+, A_+, Ȧ_+)` sampled on their grids.
///
/// `w_+` lives on the profile grid (coordinates `ξ = x/t`); `A_+` and `Ȧ_+`
/// live on the physical grid.
#[derive(Clone, Debug)]
pub struct AsymptoticState {
    pub w_plus: ComplexField,
    pub a_plus: RealField,
    pub a_dot_plus: RealField,
    pub c4: f64,
    pub support_radius: f64,
    pub w_spec: WPlusSpec,
}

impl AsymptoticState {
    pub fn new(
        w_spec: &WPlusSpec,
        a_plus: &WaveSpec,
        a_dot_plus: &WaveSpec,
        profile_grid: Grid,
        physical_grid: Grid,
    ) -> Result<Self> {
        let mut errs = w_spec.validate();
        errs.extend(a_plus.validate("a_plus"));
        errs.extend(a_dot_plus.validate("a_dot_plus"));
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let support_radius = w_spec.support_radius();
        if support_radius > 0.5 * profile_grid.box_length() {
            return Err(Error::Domain(format!(
                "w_+ support radius {support_radius:.4} exceeds the profile half-box {:.4}",
                0.5 * profile_grid.box_length()
            )));
        }
        let w_plus = ComplexField::from_fn(profile_grid, |x| w_spec.eval(x));
        Self::from_fields(
            w_plus,
            a_plus.sample(physical_grid),
            a_dot_plus.sample(physical_grid),
            support_radius,
            w_spec.clone(),
        )
    }

    /// Assembles a state from already-sampled fields.
    pub fn from_fields(
        w_plus: ComplexField,
        a_plus: RealField,
        a_dot_plus: RealField,
        support_radius: f64,
        w_spec: WPlusSpec,
    ) -> Result<Self> {
        a_plus.check_same_grid(a_dot_plus.grid())?;
        let c4 = lebesgue_norm(&w_plus, 4.0)?;
        Ok(Self {
            w_plus,
            a_plus,
            a_dot_plus,
            c4,
            support_radius,
            w_spec,
        })
    }

    pub fn profile_grid(&self) -> Grid {
        self.w_plus.grid()
    }

    pub fn physical_grid(&self) -> Grid {
        self.a_plus.grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_polynomials() {
        assert_eq!(hermite(0, 0.3), 1.0);
        assert_eq!(hermite(1, 0.3), 0.6);
        assert!((hermite(2, 0.3) - (4.0 * 0.09 - 2.0)).abs() < 1e-15);
        assert!((hermite(3, 0.5) - (8.0 * 0.125 - 6.0)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_support_radius() {
        let w = WPlusSpec::Gaussian {
            amplitude: 1.0,
            width: 0.3,
            center: [0.0; 3],
        };
        let rho = w.support_radius();
        let v = w.eval([rho, 0.0, 0.0]).re;
        assert!((v - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn power_tail_needs_square_integrability() {
        let a = WaveSpec::PowerTail {
            amplitude: 1.0,
            width: 2.0,
            exponent: 0.7,
        };
        assert_eq!(a.validate("a_plus").len(), 1);
    }

    #[test]
    fn c4_is_cached_norm() {
        let pg = Grid::new(16, 4.0).unwrap();
        let xg = Grid::new(8, 40.0).unwrap();
        let w = WPlusSpec::Gaussian {
            amplitude: 0.7,
            width: 0.3,
            center: [0.0; 3],
        };
        let s = AsymptoticState::new(&w, &WaveSpec::Zero, &WaveSpec::Zero, pg, xg).unwrap();
        let direct = lebesgue_norm(&s.w_plus, 4.0).unwrap();
        assert!((s.c4 - direct).abs() <= 1e-12 * direct);
    }
}
