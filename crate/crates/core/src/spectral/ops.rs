use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::field::{ComplexField, RealField, WaveState};
use super::grid::Grid;
use crate::error::{Error, Result};

/// Fourier coefficients of a field under the unitary DFT.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_vec(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                found: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

/// FFT plans and wavenumber tables for one grid, plus the linear propagators.
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
    k2: OnceLock<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

/// Per-mode multipliers of one split step of fixed size, reusable across
/// steps and across states on the same grid.
pub struct StepKernels {
    dt: f64,
    wave: Vec<WaveKernel>,
    schrodinger: Vec<Complex64>,
}

impl StepKernels {
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Coefficients of the exact wave update with a source that is linear in time
/// over the step: `s(τ) = s0 + (s1 - s0) τ/dt`.
#[derive(Clone, Copy, Debug)]
struct WaveKernel {
    cos: f64,
    sin_over_omega: f64,
    minus_omega_sin: f64,
    i0: f64,
    i1: f64,
    j0: f64,
    j1: f64,
}

impl WaveKernel {
    fn new(omega: f64, dt: f64) -> Self {
        if omega == 0.0 {
            return Self {
                cos: 1.0,
                sin_over_omega: dt,
                minus_omega_sin: 0.0,
                i0: 0.5 * dt * dt,
                i1: dt * dt / 6.0,
                j0: dt,
                j1: 0.5 * dt,
            };
        }
        let x = omega * dt;
        let (s, c) = x.sin_cos();
        let (i0, i1, j1) = if x.abs() < 1e-2 {
            let x2 = x * x;
            (
                dt * dt * (0.5 - x2 / 24.0 + x2 * x2 / 720.0),
                dt * dt * (1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0),
                dt * (0.5 - x2 / 24.0 + x2 * x2 / 720.0),
            )
        } else {
            let w2 = omega * omega;
            (
                (1.0 - c) / w2,
                (x - s) / (w2 * omega * dt),
                (1.0 - c) / (w2 * dt),
            )
        };
        Self {
            cos: c,
            sin_over_omega: s / omega,
            minus_omega_sin: -omega * s,
            i0,
            i1,
            j0: s / omega,
            j1,
        }
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n_per_axis();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k: grid.freq_lattice(),
            k2: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Per-axis wavenumbers in DFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// `|k|^2` for every mode, built on first use.
    pub fn k_squared(&self) -> &[f64] {
        self.k2.get_or_init(|| {
            let g = self.grid;
            let k = &self.k;
            (0..g.len())
                .into_par_iter()
                .map(|idx| {
                    let (i, j, l) = g.unravel(idx);
                    k[i] * k[i] + k[j] * k[j] + k[l] * k[l]
                })
                .collect()
        })
    }

    fn fft3(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n_per_axis();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);

        let mut slab_buf = vec![Complex64::default(); n * n];
        for slab in data.chunks_mut(n * n) {
            transpose::transpose(slab, &mut slab_buf, n, n);
            fft.process_with_scratch(&mut slab_buf, &mut scratch);
            transpose::transpose(&slab_buf, slab, n, n);
        }

        // Slowest axis: gather one (i, l) plane per j, transpose it so i is
        // contiguous, transform, and scatter back.
        let mut plane = vec![Complex64::default(); n * n];
        for j in 0..n {
            for i in 0..n {
                let src = (i * n + j) * n;
                slab_buf[i * n..(i + 1) * n].copy_from_slice(&data[src..src + n]);
            }
            transpose::transpose(&slab_buf, &mut plane, n, n);
            fft.process_with_scratch(&mut plane, &mut scratch);
            transpose::transpose(&plane, &mut slab_buf, n, n);
            for i in 0..n {
                let dst = (i * n + j) * n;
                data[dst..dst + n].copy_from_slice(&slab_buf[i * n..(i + 1) * n]);
            }
        }

        let norm = (self.grid.len() as f64).sqrt().recip();
        data.par_iter_mut().for_each(|z| *z *= norm);
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.fft3(data, &self.forward);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.fft3(data, &self.inverse);
    }

    pub fn forward_transform(&self, f: &ComplexField) -> Result<Spectrum> {
        f.check_same_grid(self.grid)?;
        let mut data = f.data().to_vec();
        self.forward_in_place(&mut data);
        Ok(Spectrum {
            grid: self.grid,
            data,
        })
    }

    pub fn inverse_transform(&self, coeffs: &Spectrum) -> Result<ComplexField> {
        if coeffs.data.len() != self.grid.len() {
            return Err(Error::Shape {
                expected: self.grid.len(),
                found: coeffs.data.len(),
            });
        }
        let mut data = coeffs.data.clone();
        self.inverse_in_place(&mut data);
        ComplexField::from_vec(self.grid, data)
    }

    /// Transforms two real fields with one complex FFT.
    pub fn forward_real_pair(&self, a: &RealField, b: &RealField) -> Result<(Spectrum, Spectrum)> {
        a.check_same_grid(self.grid)?;
        b.check_same_grid(self.grid)?;
        let mut z: Vec<Complex64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.forward_in_place(&mut z);
        let g = self.grid;
        let (sa, sb): (Vec<_>, Vec<_>) = (0..g.len())
            .into_par_iter()
            .map(|m| {
                let zm = z[m];
                let zn = z[g.negated_index(m)].conj();
                ((zm + zn) * 0.5, (zm - zn) * Complex64::new(0.0, -0.5))
            })
            .unzip();
        Ok((
            Spectrum { grid: g, data: sa },
            Spectrum { grid: g, data: sb },
        ))
    }

    /// Inverse of [`Spectral::forward_real_pair`]; both spectra must be Hermitian.
    pub fn inverse_real_pair(&self, sa: &Spectrum, sb: &Spectrum) -> Result<(RealField, RealField)> {
        let mut z: Vec<Complex64> = sa
            .data
            .par_iter()
            .zip(sb.data.par_iter())
            .map(|(&x, &y)| x + Complex64::i() * y)
            .collect();
        self.inverse_in_place(&mut z);
        let (a, b): (Vec<f64>, Vec<f64>) = z.iter().map(|c| (c.re, c.im)).unzip();
        Ok((
            RealField::from_vec(self.grid, a)?,
            RealField::from_vec(self.grid, b)?,
        ))
    }

    pub fn forward_real(&self, a: &RealField) -> Result<Spectrum> {
        self.forward_transform(&a.to_complex())
    }

    pub fn inverse_real(&self, s: &Spectrum, tol: f64) -> Result<RealField> {
        self.inverse_transform(s)?.real_part_checked(tol)
    }

    /// Multiplies every coefficient by `m(kx, ky, kz, slot)` in place.
    pub fn apply_multiplier<F>(&self, s: &mut Spectrum, m: F)
    where
        F: Fn(f64, f64, f64, usize) -> Complex64 + Sync,
    {
        let g = self.grid;
        let k = &self.k;
        s.data.par_iter_mut().enumerate().for_each(|(idx, z)| {
            let (i, j, l) = g.unravel(idx);
            *z *= m(k[i], k[j], k[l], idx);
        });
    }

    /// `U(t) = exp(i t Δ / 2)`, the free Schrödinger group.
    pub fn free_schrodinger(&self, u: &ComplexField, t: f64) -> Result<ComplexField> {
        u.check_same_grid(self.grid)?;
        let mut data = u.data().to_vec();
        self.free_schrodinger_in_place(&mut data, t);
        ComplexField::from_vec(self.grid, data)
    }

    /// [`Spectral::free_schrodinger`] on raw samples.
    pub fn free_schrodinger_in_place(&self, data: &mut [Complex64], t: f64) {
        self.forward_in_place(data);
        data.par_iter_mut()
            .zip(self.k_squared().par_iter())
            .for_each(|(z, &k2)| *z *= Complex64::from_polar(1.0, -0.5 * t * k2));
        self.inverse_in_place(data);
    }

    /// Exact free wave propagation of `(A, ∂_t A)` by `dt`.
    pub fn wave_propagate(&self, w: &WaveState, dt: f64) -> Result<WaveState> {
        let (mut sa, mut sb) = self.forward_real_pair(&w.a, &w.a_dot)?;
        self.propagate_spectra(&mut sa, &mut sb, dt);
        let (a, a_dot) = self.inverse_real_pair(&sa, &sb)?;
        Ok(WaveState {
            a,
            a_dot,
            time: w.time + dt,
        })
    }

    /// Propagates spectral wave data in place.
    pub fn propagate_spectra(&self, sa: &mut Spectrum, sb: &mut Spectrum, dt: f64) {
        let g = self.grid;
        let k = &self.k;
        sa.data
            .par_iter_mut()
            .zip(sb.data.par_iter_mut())
            .enumerate()
            .for_each(|(idx, (a, b))| {
                let (i, j, l) = g.unravel(idx);
                let omega = (k[i] * k[i] + k[j] * k[j] + k[l] * k[l]).sqrt();
                let kern = WaveKernel::new(omega, dt);
                let na = *a * kern.cos + *b * kern.sin_over_omega;
                let nb = *a * kern.minus_omega_sin + *b * kern.cos;
                *a = na;
                *b = nb;
            });
    }

    /// Exact wave update over `dt` with source `□A = s`, where `s` is linear in
    /// time between `s0` (start) and `s1` (end) of the step.
    pub fn wave_step_linear_source(
        &self,
        w: &WaveState,
        dt: f64,
        s0: &RealField,
        s1: &RealField,
    ) -> Result<WaveState> {
        let (mut sa, mut sb) = self.forward_real_pair(&w.a, &w.a_dot)?;
        let (f0, f1) = self.forward_real_pair(s0, s1)?;
        self.wave_step_spectra(&mut sa, &mut sb, dt, &f0, &f1);
        let (a, a_dot) = self.inverse_real_pair(&sa, &sb)?;
        Ok(WaveState {
            a,
            a_dot,
            time: w.time + dt,
        })
    }

    /// Tabulates the free Schrödinger and wave multipliers for steps of `dt`.
    pub fn step_kernels(&self, dt: f64) -> StepKernels {
        let k2 = self.k_squared();
        StepKernels {
            dt,
            wave: k2.par_iter().map(|&k2| WaveKernel::new(k2.sqrt(), dt)).collect(),
            schrodinger: k2.par_iter().map(|&k2| Complex64::from_polar(1.0, -0.5 * dt * k2)).collect(),
        }
    }

    /// `U(dt)` on raw samples with tabulated phases.
    pub fn free_schrodinger_with(&self, data: &mut [Complex64], kernels: &StepKernels) {
        self.forward_in_place(data);
        data.par_iter_mut()
            .zip(kernels.schrodinger.par_iter())
            .for_each(|(z, m)| *z *= m);
        self.inverse_in_place(data);
    }

    /// [`Spectral::wave_step_spectra`] with tabulated kernels.
    pub fn wave_step_with(&self, sa: &mut Spectrum, sb: &mut Spectrum, kernels: &StepKernels, f0: &Spectrum, f1: &Spectrum) {
        sa.data
            .par_iter_mut()
            .zip(sb.data.par_iter_mut())
            .zip(kernels.wave.par_iter())
            .enumerate()
            .for_each(|(idx, ((a, b), kern))| {
                let src0 = f0.data[idx];
                let dsrc = f1.data[idx] - src0;
                let na = *a * kern.cos + *b * kern.sin_over_omega + src0 * kern.i0 + dsrc * kern.i1;
                let nb = *a * kern.minus_omega_sin + *b * kern.cos + src0 * kern.j0 + dsrc * kern.j1;
                *a = na;
                *b = nb;
            });
    }

    /// [`Spectral::wave_step_linear_source`] acting on spectra in place.
    pub fn wave_step_spectra(&self, sa: &mut Spectrum, sb: &mut Spectrum, dt: f64, f0: &Spectrum, f1: &Spectrum) {
        sa.data
            .par_iter_mut()
            .zip(sb.data.par_iter_mut())
            .zip(self.k_squared().par_iter())
            .enumerate()
            .for_each(|(idx, ((a, b), &k2))| {
                let kern = WaveKernel::new(k2.sqrt(), dt);
                let src0 = f0.data[idx];
                let dsrc = f1.data[idx] - src0;
                let na = *a * kern.cos + *b * kern.sin_over_omega + src0 * kern.i0 + dsrc * kern.i1;
                let nb = *a * kern.minus_omega_sin + *b * kern.cos + src0 * kern.j0 + dsrc * kern.j1;
                *a = na;
                *b = nb;
            });
    }

    fn derivative_multiplier(&self, axis: usize) -> impl Fn(f64, f64, f64, usize) -> Complex64 + Sync + '_ {
        let g = self.grid;
        let nyq = g.n_per_axis() / 2;
        move |kx, ky, kz, idx| {
            let (i, j, l) = g.unravel(idx);
            let (kk, slot) = match axis {
                0 => (kx, i),
                1 => (ky, j),
                _ => (kz, l),
            };
            if slot == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, kk)
            }
        }
    }

    /// Spectral gradient (multipliers `i k_j`, Nyquist plane zeroed).
    pub fn gradient(&self, f: &ComplexField) -> Result<[ComplexField; 3]> {
        let s = self.forward_transform(f)?;
        let mut out = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut d = s.clone();
            self.apply_multiplier(&mut d, self.derivative_multiplier(axis));
            out.push(self.inverse_transform(&d)?);
        }
        Ok(out.try_into().expect("three components"))
    }

    pub fn gradient_real(&self, f: &RealField) -> Result<[RealField; 3]> {
        let g = self.gradient(&f.to_complex())?;
        Ok([g[0].real_part(), g[1].real_part(), g[2].real_part()])
    }

    /// Spectral Laplacian (multiplier `-|k|^2`).
    pub fn laplacian(&self, f: &ComplexField) -> Result<ComplexField> {
        let mut s = self.forward_transform(f)?;
        self.apply_multiplier(&mut s, |kx, ky, kz, _| {
            Complex64::new(-(kx * kx + ky * ky + kz * kz), 0.0)
        });
        self.inverse_transform(&s)
    }

    pub fn laplacian_real(&self, f: &RealField) -> Result<RealField> {
        Ok(self.laplacian(&f.to_complex())?.real_part())
    }

    /// `‖∇f‖_2^2` computed from the spectrum (full `|k|^2`, Nyquist included).
    pub fn dirichlet_energy(&self, s: &Spectrum) -> f64 {
        let g = self.grid;
        let k = &self.k;
        let sum: f64 = s
            .data
            .iter()
            .enumerate()
            .map(|(idx, z)| {
                let (i, j, l) = g.unravel(idx);
                (k[i] * k[i] + k[j] * k[j] + k[l] * k[l]) * z.norm_sqr()
            })
            .sum();
        sum * g.cell_volume()
    }

    /// `½(‖∂_t A‖² + ‖∇A‖²)`.
    pub fn wave_energy(&self, w: &WaveState) -> Result<f64> {
        let (sa, sb) = self.forward_real_pair(&w.a, &w.a_dot)?;
        let kin: f64 = sb.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume();
        Ok(0.5 * (kin + self.dirichlet_energy(&sa)))
    }
}
