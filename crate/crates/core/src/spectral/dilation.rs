//! Dilation `D_0(t) f = f(·/t)` between grids, and the Schrödinger
//! factorization operator `M(t) D(t)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{ComplexField, RealField};
use super::grid::Grid;
use super::ops::Spectral;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Trigonometric,
    Trilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DilationOptions {
    pub method: Interpolation,
    /// Largest admissible fraction of `Σ|f|^2` that the target box cannot represent.
    pub mass_tolerance: f64,
}

impl Default for DilationOptions {
    fn default() -> Self {
        Self {
            method: Interpolation::Trigonometric,
            mass_tolerance: 1e-12,
        }
    }
}

/// Fraction of `Σ|f|^2` carried by samples with `max_i |x_i| >= half_width`.
pub fn mass_outside(grid: Grid, data: &[Complex64], half_width: f64) -> f64 {
    let mut total = 0.0;
    let mut outside = 0.0;
    for (idx, z) in data.iter().enumerate() {
        let m = z.norm_sqr();
        total += m;
        let p = grid.position(idx);
        if p.iter().any(|c| c.abs() >= half_width) {
            outside += m;
        }
    }
    if total > 0.0 {
        outside / total
    } else {
        0.0
    }
}

/// Precomputed interpolation weights for dilating fields on `source` by `t`
/// onto `target`. Reusable across fields at the same `t`.
pub struct DilationPlan {
    t: f64,
    source: Grid,
    target: Grid,
    options: DilationOptions,
    /// Target indices (per axis) whose pulled-back coordinate lies in the source box.
    rows: Vec<usize>,
    /// Trigonometric evaluation matrix, `rows.len() × n_source`.
    eval: Vec<Complex64>,
    spectral: Option<Spectral>,
}

impl DilationPlan {
    pub fn new(source: Grid, target: Grid, t: f64, options: DilationOptions) -> Result<Self> {
        if !(t.is_finite() && t >= 1.0) {
            return Err(Error::Domain(format!("dilation factor must be >= 1, got {t}")));
        }
        let ns = source.n_per_axis();
        let half = 0.5 * source.box_length();
        let rows: Vec<usize> = (0..target.n_per_axis())
            .filter(|&a| {
                let y = target.coord(a) / t;
                y >= -half && y < half
            })
            .collect();
        let (eval, spectral) = match options.method {
            Interpolation::Trigonometric => {
                let mut e = Vec::with_capacity(rows.len() * ns);
                for &a in &rows {
                    let y = target.coord(a) / t;
                    let phase = 2.0 * PI * (y / source.box_length() + 0.5);
                    for m in 0..ns {
                        if m == ns / 2 {
                            e.push(Complex64::new((phase * m as f64).cos(), 0.0));
                        } else {
                            e.push(Complex64::from_polar(1.0, phase * source.signed_mode(m) as f64));
                        }
                    }
                }
                (e, Some(Spectral::new(source)))
            }
            Interpolation::Trilinear => (Vec::new(), None),
        };
        Ok(Self {
            t,
            source,
            target,
            options,
            rows,
            eval,
            spectral,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn target(&self) -> Grid {
        self.target
    }

    fn check_support(&self, f: &ComplexField) -> Result<()> {
        let hw = 0.5 * self.target.box_length() / self.t;
        let frac = mass_outside(self.source, f.data(), hw);
        if frac > self.options.mass_tolerance {
            return Err(Error::DilationAliasing {
                t: self.t,
                mass_fraction: frac,
                tolerance: self.options.mass_tolerance,
            });
        }
        Ok(())
    }

    /// Samples `x ↦ f(x/t)` on the target grid.
    pub fn apply(&self, f: &ComplexField) -> Result<ComplexField> {
        f.check_same_grid(self.source)?;
        self.check_support(f)?;
        match self.options.method {
            Interpolation::Trigonometric => self.apply_trig(f),
            Interpolation::Trilinear => Ok(self.apply_trilinear(f)),
        }
    }

    pub fn apply_real(&self, f: &RealField) -> Result<RealField> {
        Ok(self.apply(&f.to_complex())?.real_part())
    }

    fn apply_trig(&self, f: &ComplexField) -> Result<ComplexField> {
        let ns = self.source.n_per_axis();
        let nr = self.rows.len();
        let spectral = self.spectral.as_ref().expect("trigonometric plan");
        let mut c = f.data().to_vec();
        spectral.forward_in_place(&mut c);
        let scale = (self.source.len() as f64).sqrt().recip();
        let e = &self.eval;

        // Contract the last axis: t1[m1][m2][r3].
        let mut t1 = vec![Complex64::default(); ns * ns * nr];
        t1.par_chunks_mut(nr)
            .zip(c.par_chunks(ns))
            .for_each(|(out, line)| {
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &e[r * ns..(r + 1) * ns];
                    *o = row.iter().zip(line).map(|(a, b)| a * b).sum::<Complex64>() * scale;
                }
            });
        // Middle axis: t2[m1][r2][r3].
        let mut t2 = vec![Complex64::default(); ns * nr * nr];
        t2.par_chunks_mut(nr * nr)
            .zip(t1.par_chunks(ns * nr))
            .for_each(|(out, slab)| {
                for r2 in 0..nr {
                    let row = &e[r2 * ns..(r2 + 1) * ns];
                    let dst = &mut out[r2 * nr..(r2 + 1) * nr];
                    for (m2, &w) in row.iter().enumerate() {
                        let src = &slab[m2 * nr..(m2 + 1) * nr];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            });
        // First axis, scattered into the target field.
        let mut out = ComplexField::zeros(self.target);
        let nt = self.target.n_per_axis();
        let block = nr * nr;
        let planes: Vec<Vec<Complex64>> = (0..nr)
            .into_par_iter()
            .map(|r1| {
                let row = &e[r1 * ns..(r1 + 1) * ns];
                let mut acc = vec![Complex64::default(); block];
                for (m1, &w) in row.iter().enumerate() {
                    let src = &t2[m1 * block..(m1 + 1) * block];
                    for (d, s) in acc.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
                acc
            })
            .collect();
        let data = out.data_mut();
        for (r1, plane) in planes.iter().enumerate() {
            let a = self.rows[r1];
            for (r2, &b) in self.rows.iter().enumerate() {
                let base = (a * nt + b) * nt;
                for (r3, &cidx) in self.rows.iter().enumerate() {
                    data[base + cidx] = plane[r2 * nr + r3];
                }
            }
        }
        Ok(out)
    }

    fn apply_trilinear(&self, f: &ComplexField) -> ComplexField {
        let src = self.source;
        let ns = src.n_per_axis();
        let hs = src.spacing();
        let t = self.t;
        let sdata = f.data();
        let locate = |x: f64| -> Option<(usize, f64)> {
            let p = x / t / hs + (ns / 2) as f64;
            if p < 0.0 || p > (ns - 1) as f64 {
                return None;
            }
            let i = (p.floor() as usize).min(ns - 2);
            Some((i, p - i as f64))
        };
        ComplexField::from_fn(self.target, |x| {
            let (Some((i, fx)), Some((j, fy)), Some((k, fz))) =
                (locate(x[0]), locate(x[1]), locate(x[2]))
            else {
                return Complex64::default();
            };
            let mut acc = Complex64::default();
            for (di, wi) in [(0, 1.0 - fx), (1, fx)] {
                for (dj, wj) in [(0, 1.0 - fy), (1, fy)] {
                    for (dk, wk) in [(0, 1.0 - fz), (1, fz)] {
                        acc += sdata[src.index(i + di, j + dj, k + dk)] * (wi * wj * wk);
                    }
                }
            }
            acc
        })
    }
}

/// `D_0(t) f` sampled on `target`.
pub fn dilate(f: &ComplexField, t: f64, target: Grid, options: DilationOptions) -> Result<ComplexField> {
    DilationPlan::new(f.grid(), target, t, options)?.apply(f)
}

pub fn dilate_real(f: &RealField, t: f64, target: Grid, options: DilationOptions) -> Result<RealField> {
    DilationPlan::new(f.grid(), target, t, options)?.apply_real(f)
}

/// The constant `(it)^{-3/2}` on the principal branch, `e^{-3πi/4} t^{-3/2}`.
pub fn d_prefactor(t: f64) -> Complex64 {
    Complex64::from_polar(t.powf(-1.5), -0.75 * PI)
}

/// Multiplies a dilated field by `(it)^{-3/2} e^{i|x|^2/2t}` in place.
pub fn apply_md_phase(g: &mut ComplexField, t: f64) {
    let grid = g.grid();
    let pre = d_prefactor(t);
    g.data_mut().par_iter_mut().enumerate().for_each(|(idx, z)| {
        if *z != Complex64::default() {
            let x = grid.position(idx);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            *z *= pre * Complex64::from_polar(1.0, r2 / (2.0 * t));
        }
    });
}

/// `M(t) D(t) f = (it)^{-3/2} e^{i|x|^2/2t} f(x/t)`.
pub fn md_apply(f: &ComplexField, t: f64, target: Grid, options: DilationOptions) -> Result<ComplexField> {
    let mut g = dilate(f, t, target, options)?;
    apply_md_phase(&mut g, t);
    Ok(g)
}
