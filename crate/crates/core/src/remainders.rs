//! The remainders `R_1 = i∂_t u_a + ½Δu_a − A_a u_a` and `R_2 = □A_a + |u_a|^2`
//! left by the asymptotic pair, in closed form where available.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::diagnostics::{fit_decay, spacetime_norm, DecayFit, DecaySeries};
use crate::error::{Error, Result};
use crate::profiles::ProfileBundle;
use crate::spectral::{lebesgue_norm, ComplexField, RealField};

/// `X = 2∇Ã_1·∇f + (ΔÃ_1) f` and `Y = |∇Ã_1|^2 f` on the profile grid.
fn coupling_terms(bundle: &ProfileBundle, f: &ComplexField, grad_f: &[ComplexField; 3]) -> (Vec<Complex64>, Vec<Complex64>) {
    let ga = bundle.grad_a1_tilde();
    let lap = bundle.lap_a1_tilde().data();
    let n = f.data().len();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for idx in 0..n {
        let g = [ga[0].data()[idx], ga[1].data()[idx], ga[2].data()[idx]];
        let dot = g[0] * grad_f[0].data()[idx] + g[1] * grad_f[1].data()[idx] + g[2] * grad_f[2].data()[idx];
        let z = f.data()[idx];
        x.push(2.0 * dot + lap[idx] * z);
        y.push((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) * z);
    }
    (x, y)
}

/// `R̃_1 = (2t^2)^{-1}(Δw_+ − i ln t (2∇Ã_1·∇w_+ + (ΔÃ_1)w_+) − (ln t)^2 |∇Ã_1|^2 w_+)`,
/// on the profile grid.
pub fn r1_tilde(bundle: &ProfileBundle, t: f64) -> Result<ComplexField> {
    check_time(t)?;
    let l = t.ln();
    let (x, y) = coupling_terms(bundle, bundle.w_plus(), bundle.grad_w());
    let lap = bundle.lap_w().data();
    let c = 1.0 / (2.0 * t * t);
    let data = (0..x.len())
        .map(|i| c * (lap[i] - Complex64::i() * l * x[i] - l * l * y[i]))
        .collect();
    ComplexField::from_vec(bundle.profile_grid(), data)
}

/// `∂_t R̃_1 = t^{-3}(−Δw_+ + i(ln t − ½)(2∇Ã_1·∇w_+ + (ΔÃ_1)w_+) + ln t (ln t − 1)|∇Ã_1|^2 w_+)`.
pub fn dt_r1_tilde(bundle: &ProfileBundle, t: f64) -> Result<ComplexField> {
    check_time(t)?;
    let l = t.ln();
    let (x, y) = coupling_terms(bundle, bundle.w_plus(), bundle.grad_w());
    let lap = bundle.lap_w().data();
    let c = t.powi(-3);
    let data = (0..x.len())
        .map(|i| c * (-lap[i] + Complex64::i() * (l - 0.5) * x[i] + l * (l - 1.0) * y[i]))
        .collect();
    ComplexField::from_vec(bundle.profile_grid(), data)
}

fn sub_product(f: &ComplexField, a: &RealField, u: &ComplexField) -> Result<ComplexField> {
    a.check_same_grid(u.grid())?;
    f.check_same_grid(u.grid())?;
    let data = f
        .data()
        .iter()
        .zip(a.data())
        .zip(u.data())
        .map(|((z, a), w)| z - a * w)
        .collect();
    ComplexField::from_vec(f.grid(), data)
}

/// `R_1 = M D e^{-iφ} R̃_1 − A_0 u_a`.
pub fn r1(bundle: &ProfileBundle, t: f64) -> Result<ComplexField> {
    let lifted = bundle.lift(&r1_tilde(bundle, t)?, t)?;
    let a0 = bundle.a0(t)?;
    sub_product(&lifted, &a0.a, &bundle.u_a(t)?)
}

/// `∇R_1 = M D e^{-iφ}(iξ + t^{-1}∇ − i t^{-1} ln t ∇Ã_1) R̃_1 − ∇(A_0 u_a)`.
pub fn grad_r1(bundle: &ProfileBundle, t: f64) -> Result<[ComplexField; 3]> {
    let rt = r1_tilde(bundle, t)?;
    let grad_rt = bundle.profile_ops().gradient(&rt)?;
    let brackets = bundle.grad_bracket(&rt, &grad_rt, t)?;
    let a0 = bundle.a0(t)?.a;
    let grad_a0 = bundle.physical_ops().gradient_real(&a0)?;
    let u = bundle.u_a(t)?;
    let grad_u = bundle.grad_u_a(t)?;
    let mut out = Vec::with_capacity(3);
    for axis in 0..3 {
        let lifted = bundle.lift(&brackets[axis], t)?;
        let step = sub_product(&lifted, &grad_a0[axis], &u)?;
        out.push(sub_product(&step, &a0, &grad_u[axis])?);
    }
    Ok(out.try_into().expect("three components"))
}

/// `∂_t R_1`: the time derivative of `M D e^{-iφ} R̃_1` at fixed `x`, minus
/// `∂_t A_0 u_a + A_0 ∂_t u_a`.
pub fn dt_r1(bundle: &ProfileBundle, t: f64) -> Result<ComplexField> {
    let rt = r1_tilde(bundle, t)?;
    let drt = dt_r1_tilde(bundle, t)?;
    let grad_rt = bundle.profile_ops().gradient(&rt)?;
    let grid = bundle.profile_grid();
    let l = t.ln();
    let ga = bundle.grad_a1_tilde();
    let a1 = bundle.a1_tilde().data();
    let data = (0..grid.len())
        .map(|idx| {
            let xi = grid.position(idx);
            let xi2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            let mut xi_grad = Complex64::default();
            let mut xi_grad_a = 0.0;
            for axis in 0..3 {
                xi_grad += xi[axis] * grad_rt[axis].data()[idx];
                xi_grad_a += xi[axis] * ga[axis].data()[idx];
            }
            let z = rt.data()[idx];
            let i = Complex64::i();
            (-1.5 / t - i * 0.5 * xi2 + i * (l / t) * xi_grad_a - i * a1[idx] / t) * z - xi_grad / t + drt.data()[idx]
        })
        .collect();
    let lifted = bundle.lift(&ComplexField::from_vec(grid, data)?, t)?;
    let a0 = bundle.a0(t)?;
    let step = sub_product(&lifted, &a0.a_dot, &bundle.u_a(t)?)?;
    sub_product(&step, &a0.a, &bundle.dt_u_a(t)?)
}

/// Right side of `R_1 = i∂_t u_a + ½Δu_a − (A_0 + A_1) u_a`, with `∂_t u_a`
/// from a centred difference of step `h`.
pub fn r1_from_definition(bundle: &ProfileBundle, t: f64, h: f64) -> Result<ComplexField> {
    check_time(t - h)?;
    let up = bundle.u_a(t + h)?;
    let um = bundle.u_a(t - h)?;
    let u = bundle.u_a(t)?;
    let lap = bundle.physical_ops().laplacian(&u)?;
    let aa = bundle.a_a(t)?;
    let data = (0..u.data().len())
        .map(|i| {
            let dt = (up.data()[i] - um.data()[i]) / (2.0 * h);
            Complex64::i() * dt + 0.5 * lap.data()[i] - aa.data()[i] * u.data()[i]
        })
        .collect();
    ComplexField::from_vec(u.grid(), data)
}

/// `‖R_1 − (i∂_t u_a + ½Δu_a − A_a u_a)‖_2 / ‖R_1‖_2`.
pub fn r1_identity_error(bundle: &ProfileBundle, t: f64, h: f64) -> Result<f64> {
    let closed = r1(bundle, t)?;
    let direct = r1_from_definition(bundle, t, h)?;
    let norm = lebesgue_norm(&closed, 2.0)?;
    let diff = lebesgue_norm(&closed.sub(&direct)?, 2.0)?;
    Ok(if norm == 0.0 { diff } else { diff / norm })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct R2Residual {
    /// `‖□A_a + |u_a|^2‖_{4/3}`.
    pub residual: f64,
    /// `‖|u_a|^2‖_{4/3}`.
    pub reference: f64,
}

impl R2Residual {
    pub fn relative(&self) -> f64 {
        if self.reference == 0.0 {
            self.residual
        } else {
            self.residual / self.reference
        }
    }
}

/// Residual of `□A_a + |u_a|^2` with `ΔA_a` evaluated exactly and `∂_t^2 A_a`
/// from centred second differences of steps `h = 10^{-3} t` and `h/2`,
/// combined by Richardson extrapolation.
pub fn r2_residual(bundle: &ProfileBundle, t: f64) -> Result<R2Residual> {
    let h = 1e-3 * t;
    check_time(t - h)?;
    let a = bundle.a_a(t)?;
    let second = |h: f64| -> Result<Vec<f64>> {
        let ap = bundle.a_a(t + h)?;
        let am = bundle.a_a(t - h)?;
        Ok((0..a.data().len())
            .map(|i| (ap.data()[i] - 2.0 * a.data()[i] + am.data()[i]) / (h * h))
            .collect())
    };
    let coarse = second(h)?;
    let fine = second(0.5 * h)?;
    let (_, lap_a0) = bundle.a0_derivatives(t)?;
    let lap_a1 = bundle.lap_a1(t)?;
    let u = bundle.u_a(t)?;
    let density = u.modulus_squared();
    let data = (0..a.data().len())
        .map(|i| {
            let dtt = (4.0 * fine[i] - coarse[i]) / 3.0;
            dtt - lap_a0.data()[i] - lap_a1.data()[i] + density.data()[i]
        })
        .collect();
    let res = RealField::from_vec(a.grid(), data)?;
    Ok(R2Residual {
        residual: lebesgue_norm(&res, 4.0 / 3.0)?,
        reference: lebesgue_norm(&density, 4.0 / 3.0)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrichartzR1 {
    /// `‖R_1; L^{8/3}([t_lo, t_max], L^4)‖` by quadrature, plus the fitted tail.
    pub norm: f64,
    pub tail: f64,
    pub pointwise_fit: DecayFit,
}

/// `‖R_1; L^{8/3}([t_lo, ∞), L^4)‖`: quadrature over the supplied samples of
/// `‖R_1(s)‖_4` and a power-law tail beyond the last sample.
pub fn strichartz_r1_norm(series: &DecaySeries, t_lo: f64) -> Result<StrichartzR1> {
    let q = 8.0 / 3.0;
    let t_max = *series
        .times
        .last()
        .ok_or_else(|| Error::Domain("empty R_1 series".into()))?;
    let core = spacetime_norm(series, q, (t_lo, t_max))?;
    let fit = fit_decay(series, Some((t_lo, t_max)))?;
    let p = q * fit.exponent + 1.0;
    let tail = if fit.prefactor == 0.0 || series.values.iter().all(|&v| v == 0.0) {
        0.0
    } else if p < 0.0 {
        fit.prefactor.powf(q) * t_max.powf(p) / -p
    } else {
        f64::INFINITY
    };
    Ok(StrichartzR1 {
        norm: (core.powf(q) + tail).powf(1.0 / q),
        tail,
        pointwise_fit: fit,
    })
}

/// One row of the remainder table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RemainderSample {
    pub t: f64,
    pub r1_l2: f64,
    pub grad_r1_l2: f64,
    pub dt_r1_l2: f64,
    pub r1_l4: f64,
    pub r2_residual_l43: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderFits {
    pub r1_l2: DecayFit,
    pub grad_r1_l2: DecayFit,
    pub dt_r1_l2: DecayFit,
    pub r1_l4: DecayFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderReport {
    pub samples: Vec<RemainderSample>,
    pub fits: Option<RemainderFits>,
    pub fit_window: (f64, f64),
}

pub const REMAINDER_COLUMNS: [&str; 6] = ["t", "r1_l2", "grad_r1_l2", "dt_r1_l2", "r1_l4", "r2_residual_l43"];

fn vector_l2(g: &[ComplexField; 3]) -> Result<f64> {
    let mut s = 0.0;
    for c in g {
        s += lebesgue_norm(c, 2.0)?.powi(2);
    }
    Ok(s.sqrt())
}

/// Evaluates every remainder norm at `times` and fits the decay over
/// `fit_window` (times below 8 are warm-up and excluded by callers).
pub fn remainder_report(bundle: &ProfileBundle, times: &[f64], fit_window: (f64, f64)) -> Result<RemainderReport> {
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|&t| !(t >= 1.0)) {
        return Err(Error::Domain("remainder times must be increasing and >= 1".into()));
    }
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let r = r1(bundle, t)?;
        let sample = RemainderSample {
            t,
            r1_l2: lebesgue_norm(&r, 2.0)?,
            grad_r1_l2: vector_l2(&grad_r1(bundle, t)?)?,
            dt_r1_l2: lebesgue_norm(&dt_r1(bundle, t)?, 2.0)?,
            r1_l4: lebesgue_norm(&r, 4.0)?,
            r2_residual_l43: r2_residual(bundle, t)?.residual,
        };
        log::info!("remainders at t = {t}: |R1|_2 = {:.4e}", sample.r1_l2);
        samples.push(sample);
    }
    let series = |label: &str, f: fn(&RemainderSample) -> f64| {
        DecaySeries::new(label, times.to_vec(), samples.iter().map(f).collect())
    };
    let in_window = times.iter().filter(|&&t| t >= fit_window.0 && t <= fit_window.1).count();
    let fits = if in_window >= 2 {
        Some(RemainderFits {
            r1_l2: fit_decay(&series("r1_l2", |s| s.r1_l2)?, Some(fit_window))?,
            grad_r1_l2: fit_decay(&series("grad_r1_l2", |s| s.grad_r1_l2)?, Some(fit_window))?,
            dt_r1_l2: fit_decay(&series("dt_r1_l2", |s| s.dt_r1_l2)?, Some(fit_window))?,
            r1_l4: fit_decay(&series("r1_l4", |s| s.r1_l4)?, Some(fit_window))?,
        })
    } else {
        None
    };
    Ok(RemainderReport {
        samples,
        fits,
        fit_window,
    })
}

impl RemainderReport {
    pub fn series(&self, column: &str) -> Result<DecaySeries> {
        let pick: fn(&RemainderSample) -> f64 = match column {
            "r1_l2" => |s| s.r1_l2,
            "grad_r1_l2" => |s| s.grad_r1_l2,
            "dt_r1_l2" => |s| s.dt_r1_l2,
            "r1_l4" => |s| s.r1_l4,
            "r2_residual_l43" => |s| s.r2_residual_l43,
            other => return Err(Error::Domain(format!("unknown remainder column {other}"))),
        };
        DecaySeries::new(
            column,
            self.samples.iter().map(|s| s.t).collect(),
            self.samples.iter().map(pick).collect(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(REMAINDER_COLUMNS)?;
        for s in &self.samples {
            let row = [s.t, s.r1_l2, s.grad_r1_l2, s.dt_r1_l2, s.r1_l4, s.r2_residual_l43];
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { time: s.t });
            }
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            fit_window: (f64, f64),
            fits: &'a Option<RemainderFits>,
        }
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(
            &mut f,
            &Doc {
                version: crate::scenario::FORMAT_VERSION,
                fit_window: self.fit_window,
                fits: &self.fits,
            },
        )?;
        writeln!(f)?;
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!("remainders are defined for t >= 1, got {t}")));
    }
    Ok(())
}
