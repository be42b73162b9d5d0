use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid_route::{build_on_grid, Propagator};
use super::radial::RadialProfile;
use super::state::AsymptoticState;
use crate::error::{Error, Result};
use crate::quadrature::nu_quadrature;
use crate::spectral::{
    lebesgue_norm, md_apply, ComplexField, DilationOptions, DilationPlan, Grid, RealField, Spectral,
    Spectrum, WaveState,
};

/// How `Ã_1` and `Ã̃_1` are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Radial when `|w_+|^2` is an isotropic Gaussian mixture, grid otherwise.
    #[default]
    Auto,
    Radial,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOptions {
    pub nu_max: f64,
    pub node_count: usize,
    pub route: Route,
    #[serde(skip)]
    pub dilation: DilationOptions,
    /// Earliest time at which physical fields will be requested; sizes the
    /// radial tables.
    pub t_min: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            nu_max: 64.0,
            node_count: 256,
            route: Route::Auto,
            dilation: DilationOptions::default(),
            t_min: 1.0,
        }
    }
}

/// `L^2` norms entering the bound `‖ω^{m+1}Ã_1‖_2 ∨ ‖ω^m Ã̃_1‖_2 ≤ (m+½)^{-1}‖ω^m|w_+|^2‖_2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormBounds {
    pub grad_a1: f64,
    pub lap_a1: f64,
    pub a1_tt: f64,
    pub grad_a1_tt: f64,
    pub source: f64,
    pub grad_source: f64,
}

enum Fields {
    Radial(RadialProfile),
    Grid {
        grad: [RealField; 3],
        lap: RealField,
    },
}

/// Everything needed to evaluate the asymptotic pair at any `t ≥ 1`.
pub struct ProfileBundle {
    state: AsymptoticState,
    options: ProfileOptions,
    nodes: Vec<(f64, f64)>,
    a1_tilde: RealField,
    a1_tilde_tilde: RealField,
    grad_a1_tilde: [RealField; 3],
    lap_a1_tilde: RealField,
    grad_w: [ComplexField; 3],
    lap_w: ComplexField,
    tail_error: f64,
    fields: Fields,
    profile_ops: Spectral,
    physical_ops: Spectral,
    a0_spectra: (Spectrum, Spectrum),
}

impl std::fmt::Debug for ProfileBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProfileBundle")
            .field("profile_grid", &self.profile_grid())
            .field("physical_grid", &self.physical_grid())
            .field("nu_max", &self.options.nu_max)
            .field("nodes", &self.nodes.len())
            .field("radial", &self.is_radial())
            .finish()
    }
}

fn unit(x: [f64; 3]) -> (f64, [f64; 3]) {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if r == 0.0 {
        (0.0, [0.0; 3])
    } else {
        (r, [x[0] / r, x[1] / r, x[2] / r])
    }
}

fn radial_table(state: &AsymptoticState, options: &ProfileOptions, nodes: &[(f64, f64)]) -> Result<Option<RadialProfile>> {
    let source = match (options.route, state.w_spec.radial_source()) {
        (Route::Grid, _) => return Ok(None),
        (_, Some(s)) => s,
        (Route::Radial, None) => {
            return Err(Error::Domain(
                "the radial route needs a centred isotropic Gaussian w_+".into(),
            ))
        }
        (Route::Auto, None) => return Ok(None),
    };
    let pg = state.profile_grid();
    let xg = state.physical_grid();
    let reach = |g: Grid| 0.5 * 3f64.sqrt() * g.box_length();
    let r_max = reach(pg).max(reach(xg) / options.t_min.max(1.0));
    let dr = source.min_width().unwrap_or(1.0) / 64.0;
    Ok(Some(RadialProfile::build(&source, nodes, r_max, dr)))
}

impl ProfileBundle {
    pub fn build(state: AsymptoticState, options: ProfileOptions) -> Result<Self> {
        if !(options.t_min >= 1.0) {
            return Err(Error::Domain(format!("t_min must be >= 1, got {}", options.t_min)));
        }
        let nodes = nu_quadrature(options.nu_max, options.node_count)?;
        let pg = state.profile_grid();
        let profile_ops = Spectral::new(pg);
        let physical_ops = Spectral::new(state.physical_grid());
        let w = &state.w_plus;
        let grad_w = profile_ops.gradient(w)?;
        let lap_w = profile_ops.laplacian(w)?;

        let (a1_tilde, a1_tilde_tilde, grad_a1_tilde, lap_a1_tilde, tail_error, fields) =
            match radial_table(&state, &options, &nodes)? {
                Some(table) => {
                    let a = RealField::from_fn(pg, |x| table.a1(unit(x).0));
                    let tt = RealField::from_fn(pg, |x| table.a1_tt(unit(x).0));
                    let grad = [0, 1, 2].map(|axis| {
                        RealField::from_fn(pg, |x| {
                            let (r, e) = unit(x);
                            table.a1_prime(r) * e[axis]
                        })
                    });
                    let lap = RealField::from_fn(pg, |x| table.a1_laplacian(unit(x).0));
                    let tail = table.tail_error();
                    (a, tt, grad, lap, tail, Fields::Radial(table))
                }
                None => {
                    let a = build_on_grid(w, &nodes, Propagator::Sine, options.dilation)?;
                    let tt = build_on_grid(w, &nodes, Propagator::Cosine, options.dilation)?;
                    let grad = profile_ops.gradient_real(&a.field)?;
                    let lap = profile_ops.laplacian_real(&a.field)?;
                    let tail = a.tail_error.max(tt.tail_error);
                    (
                        a.field,
                        tt.field,
                        grad.clone(),
                        lap.clone(),
                        tail,
                        Fields::Grid { grad, lap },
                    )
                }
            };
        let a0_spectra = physical_ops.forward_real_pair(&state.a_plus, &state.a_dot_plus)?;
        log::debug!(
            "profile bundle built: {} nodes, nu_max {}, tail error {:.3e}",
            nodes.len(),
            options.nu_max,
            tail_error
        );
        Ok(Self {
            state,
            options,
            nodes,
            a1_tilde,
            a1_tilde_tilde,
            grad_a1_tilde,
            lap_a1_tilde,
            grad_w,
            lap_w,
            tail_error,
            fields,
            profile_ops,
            physical_ops,
            a0_spectra,
        })
    }

    pub fn state(&self) -> &AsymptoticState {
        &self.state
    }

    pub fn options(&self) -> &ProfileOptions {
        &self.options
    }

    pub fn nu_max(&self) -> f64 {
        self.options.nu_max
    }

    pub fn quadrature_nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn profile_grid(&self) -> Grid {
        self.state.profile_grid()
    }

    pub fn physical_grid(&self) -> Grid {
        self.state.physical_grid()
    }

    pub fn profile_ops(&self) -> &Spectral {
        &self.profile_ops
    }

    pub fn physical_ops(&self) -> &Spectral {
        &self.physical_ops
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.fields, Fields::Radial(_))
    }

    pub fn radial_profile(&self) -> Option<&RadialProfile> {
        match &self.fields {
            Fields::Radial(p) => Some(p),
            Fields::Grid { .. } => None,
        }
    }

    /// Reported bound on the neglected `ν > ν_max` part of the integrals.
    pub fn tail_error(&self) -> f64 {
        self.tail_error
    }

    pub fn w_plus(&self) -> &ComplexField {
        &self.state.w_plus
    }

    pub fn grad_w(&self) -> &[ComplexField; 3] {
        &self.grad_w
    }

    pub fn lap_w(&self) -> &ComplexField {
        &self.lap_w
    }

    pub fn a1_tilde(&self) -> &RealField {
        &self.a1_tilde
    }

    pub fn a1_tilde_tilde(&self) -> &RealField {
        &self.a1_tilde_tilde
    }

    pub fn grad_a1_tilde(&self) -> &[RealField; 3] {
        &self.grad_a1_tilde
    }

    pub fn lap_a1_tilde(&self) -> &RealField {
        &self.lap_a1_tilde
    }

    /// `‖∇Ã_1‖_∞` on the profile grid.
    pub fn grad_a1_tilde_sup(&self) -> f64 {
        let [gx, gy, gz] = &self.grad_a1_tilde;
        gx.data()
            .iter()
            .zip(gy.data())
            .zip(gz.data())
            .map(|((a, b), c)| (a * a + b * b + c * c).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn norm_bounds(&self) -> Result<NormBounds> {
        if let Fields::Radial(p) = &self.fields {
            let (source, grad_source) = p.source_norms();
            return Ok(NormBounds {
                grad_a1: p.grad_a1_l2(),
                lap_a1: p.lap_a1_l2(),
                a1_tt: p.a1_tt_l2(),
                grad_a1_tt: p.grad_a1_tt_l2(),
                source,
                grad_source,
            });
        }
        let ops = &self.profile_ops;
        let vec_norm = |g: &[RealField; 3]| -> Result<f64> {
            let mut s = 0.0;
            for c in g {
                s += lebesgue_norm(c, 2.0)?.powi(2);
            }
            Ok(s.sqrt())
        };
        let density = self.state.w_plus.modulus_squared();
        Ok(NormBounds {
            grad_a1: vec_norm(&self.grad_a1_tilde)?,
            lap_a1: lebesgue_norm(&self.lap_a1_tilde, 2.0)?,
            a1_tt: lebesgue_norm(&self.a1_tilde_tilde, 2.0)?,
            grad_a1_tt: vec_norm(&ops.gradient_real(&self.a1_tilde_tilde)?)?,
            source: lebesgue_norm(&density, 2.0)?,
            grad_source: vec_norm(&ops.gradient_real(&density)?)?,
        })
    }

    /// `φ(t) = (ln t) Ã_1` on the profile grid.
    pub fn phase(&self, t: f64) -> Result<RealField> {
        check_time(t)?;
        Ok(self.a1_tilde.scale(t.ln()))
    }

    /// `e^{-iφ(t)} f` for a profile-grid field `f`.
    pub fn with_phase(&self, f: &ComplexField, t: f64) -> Result<ComplexField> {
        let l = t.ln();
        f.zip_map(&self.a1_tilde, |z, a| z * Complex64::from_polar(1.0, -l * a))
    }

    /// `M(t) D(t) e^{-iφ(t)} f`: lifts a profile-coordinate expression to the
    /// physical grid.
    pub fn lift(&self, f: &ComplexField, t: f64) -> Result<ComplexField> {
        check_time(t)?;
        md_apply(&self.with_phase(f, t)?, t, self.physical_grid(), self.options.dilation)
    }

    /// `u_a(t) = M D e^{-iφ} w_+`.
    pub fn u_a(&self, t: f64) -> Result<ComplexField> {
        self.lift(&self.state.w_plus, t)
    }

    /// `(A_0, ∂_t A_0)(t)`, the free wave from `(A_+, Ȧ_+)`.
    pub fn a0(&self, t: f64) -> Result<WaveState> {
        let (mut sa, mut sb) = (self.a0_spectra.0.clone(), self.a0_spectra.1.clone());
        self.physical_ops.propagate_spectra(&mut sa, &mut sb, t);
        let (a, a_dot) = self.physical_ops.inverse_real_pair(&sa, &sb)?;
        WaveState::new(a, a_dot, t)
    }

    /// `(∇A_0, ΔA_0)(t)`.
    pub fn a0_derivatives(&self, t: f64) -> Result<([RealField; 3], RealField)> {
        let a0 = self.a0(t)?;
        Ok((
            self.physical_ops.gradient_real(&a0.a)?,
            self.physical_ops.laplacian_real(&a0.a)?,
        ))
    }

    fn dilated_profile(&self, f: &RealField, t: f64) -> Result<RealField> {
        DilationPlan::new(self.profile_grid(), self.physical_grid(), t, self.options.dilation)?.apply_real(f)
    }

    /// `A_1(t) = t^{-1} D_0(t) Ã_1`.
    pub fn a1(&self, t: f64) -> Result<RealField> {
        check_time(t)?;
        match &self.fields {
            Fields::Radial(p) => Ok(RealField::from_fn(self.physical_grid(), |x| {
                p.a1(unit(x).0 / t) / t
            })),
            Fields::Grid { .. } => Ok(self.dilated_profile(&self.a1_tilde, t)?.scale(1.0 / t)),
        }
    }

    /// `∂_t A_1(t) = t^{-2} D_0(t) Ã̃_1`.
    pub fn a1_dot(&self, t: f64) -> Result<RealField> {
        check_time(t)?;
        match &self.fields {
            Fields::Radial(p) => Ok(RealField::from_fn(self.physical_grid(), |x| {
                p.a1_tt(unit(x).0 / t) / (t * t)
            })),
            Fields::Grid { .. } => Ok(self
                .dilated_profile(&self.a1_tilde_tilde, t)?
                .scale(1.0 / (t * t))),
        }
    }

    /// `∇A_1(t) = t^{-2} D_0(t) ∇Ã_1`.
    pub fn grad_a1(&self, t: f64) -> Result<[RealField; 3]> {
        check_time(t)?;
        match &self.fields {
            Fields::Radial(p) => Ok([0, 1, 2].map(|axis| {
                RealField::from_fn(self.physical_grid(), |x| {
                    let (r, e) = unit(x);
                    p.a1_prime(r / t) * e[axis] / (t * t)
                })
            })),
            Fields::Grid { grad, .. } => {
                let s = 1.0 / (t * t);
                Ok([
                    self.dilated_profile(&grad[0], t)?.scale(s),
                    self.dilated_profile(&grad[1], t)?.scale(s),
                    self.dilated_profile(&grad[2], t)?.scale(s),
                ])
            }
        }
    }

    /// `ΔA_1(t) = t^{-3} D_0(t) ΔÃ_1`.
    pub fn lap_a1(&self, t: f64) -> Result<RealField> {
        check_time(t)?;
        match &self.fields {
            Fields::Radial(p) => Ok(RealField::from_fn(self.physical_grid(), |x| {
                p.a1_laplacian(unit(x).0 / t) / (t * t * t)
            })),
            Fields::Grid { lap, .. } => Ok(self.dilated_profile(lap, t)?.scale(t.powi(-3))),
        }
    }

    /// `A_a(t) = A_0(t) + A_1(t)`.
    pub fn a_a(&self, t: f64) -> Result<RealField> {
        self.a0(t)?.a.add_scaled(1.0, &self.a1(t)?)
    }

    /// The profile-coordinate bracket of `∇u_a`:
    /// `iξ w_+ + t^{-1}∇w_+ − i t^{-1} ln t (∇Ã_1) w_+`, one component per axis.
    pub fn grad_bracket(&self, f: &ComplexField, grad_f: &[ComplexField; 3], t: f64) -> Result<[ComplexField; 3]> {
        let l = t.ln();
        let grid = self.profile_grid();
        let mut out = Vec::with_capacity(3);
        for axis in 0..3 {
            let ga = &self.grad_a1_tilde[axis];
            let gf = &grad_f[axis];
            let data = (0..grid.len())
                .map(|idx| {
                    let xi = grid.position(idx)[axis];
                    let z = f.data()[idx];
                    Complex64::i() * xi * z + gf.data()[idx] / t - Complex64::i() * (l / t) * ga.data()[idx] * z
                })
                .collect();
            out.push(ComplexField::from_vec(grid, data)?);
        }
        Ok(out.try_into().expect("three components"))
    }

    /// `∇u_a(t)`.
    pub fn grad_u_a(&self, t: f64) -> Result<[ComplexField; 3]> {
        check_time(t)?;
        let [bx, by, bz] = self.grad_bracket(&self.state.w_plus, &self.grad_w, t)?;
        Ok([self.lift(&bx, t)?, self.lift(&by, t)?, self.lift(&bz, t)?])
    }

    /// `i ∂_t u_a` in profile coordinates (before `M D e^{-iφ}`):
    /// `½|ξ|^2 w − i t^{-1}(ξ·∇ + 3/2) w + t^{-1} Ã_1 w − t^{-1} ln t (ξ·∇Ã_1) w`.
    fn i_dt_bracket(&self, t: f64) -> Result<ComplexField> {
        let grid = self.profile_grid();
        let l = t.ln();
        let w = self.state.w_plus.data();
        let data = (0..grid.len())
            .map(|idx| {
                let xi = grid.position(idx);
                let xi2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                let mut xi_grad_w = Complex64::default();
                let mut xi_grad_a = 0.0;
                for axis in 0..3 {
                    xi_grad_w += xi[axis] * self.grad_w[axis].data()[idx];
                    xi_grad_a += xi[axis] * self.grad_a1_tilde[axis].data()[idx];
                }
                let z = w[idx];
                let a = self.a1_tilde.data()[idx];
                0.5 * xi2 * z - Complex64::i() / t * (xi_grad_w + 1.5 * z) + (a / t) * z - (l / t) * xi_grad_a * z
            })
            .collect();
        ComplexField::from_vec(grid, data)
    }

    /// `∂_t u_a(t)`.
    pub fn dt_u_a(&self, t: f64) -> Result<ComplexField> {
        check_time(t)?;
        let b = self.i_dt_bracket(t)?.map(|z| -Complex64::i() * z);
        self.lift(&b, t)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!("profiles are defined for t >= 1, got {t}")));
    }
    Ok(())
}

/// `Ã_1` on the profile grid for the given state.
pub fn build_a1_tilde(state: &AsymptoticState, nu_max: f64, node_count: usize) -> Result<RealField> {
    let options = ProfileOptions {
        nu_max,
        node_count,
        ..ProfileOptions::default()
    };
    Ok(ProfileBundle::build(state.clone(), options)?.a1_tilde)
}

/// `Ã̃_1` on the profile grid for the given state.
pub fn build_a1_tilde_tilde(state: &AsymptoticState, nu_max: f64, node_count: usize) -> Result<RealField> {
    let options = ProfileOptions {
        nu_max,
        node_count,
        ..ProfileOptions::default()
    };
    Ok(ProfileBundle::build(state.clone(), options)?.a1_tilde_tilde)
}
