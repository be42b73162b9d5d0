//! Radial evaluation of the long-range profiles for isotropic Gaussian data.
//!
//! For a radial source `f`, the 3D wave propagators reduce to one-dimensional
//! integrals (Kirchhoff):
//!
//! ```text
//! (ω^{-1} sin(ωτ) f)(r) = (1/2r) ∫_{|r-τ|}^{r+τ} s f(s) ds
//! (cos(ωτ) f)(r)        = ∂_τ of the above
//! ```
//!
//! With `f = D_0(ν)|w_+|^2` a Gaussian mixture the inner integral is elementary,
//! so `Ã_1`, `Ã̃_1` and their radial derivatives are obtained from the
//! `ν`-quadrature alone, with no spatial truncation. Values are tabulated on a
//! fine uniform radius grid and interpolated with Hermite splines.

use rayon::prelude::*;

/// `Σ_j c_j e^{-r^2/β_j^2}`, the radial profile of `|w_+|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSource {
    terms: Vec<(f64, f64)>,
}

impl RadialSource {
    pub fn new(terms: Vec<(f64, f64)>) -> Self {
        Self {
            terms: terms.into_iter().filter(|&(c, _)| c != 0.0).collect(),
        }
    }

    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn min_width(&self) -> Option<f64> {
        self.terms.iter().map(|t| t.1).reduce(f64::min)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.terms.iter().map(|&(c, b)| c * (-(r * r) / (b * b)).exp()).sum()
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, b)| -2.0 * r / (b * b) * c * (-(r * r) / (b * b)).exp())
            .sum()
    }

    /// `S', S'', S''', S''''` where `S(x) = ∫_0^x s f(s/ν) ds`.
    fn s_derivatives(&self, nu: f64, x: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for &(c, beta) in &self.terms {
            let b = nu * beta;
            let y = x / b;
            let e = c * (-y * y).exp();
            let g0 = e;
            let g1 = -2.0 * y * e / b;
            let g2 = (4.0 * y * y - 2.0) * e / (b * b);
            let g3 = -(8.0 * y * y * y - 12.0 * y) * e / (b * b * b);
            out[0] += x * g0;
            out[1] += g0 + x * g1;
            out[2] += 2.0 * g1 + x * g2;
            out[3] += 3.0 * g2 + x * g3;
        }
        out
    }

    /// `S(r+τ) - S(r-τ)` for `r, τ >= 0`, without cancellation.
    fn sine_primitive(&self, nu: f64, r: f64, tau: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, beta)| {
                let b = nu * beta;
                let b2 = b * b;
                0.5 * c * b2 * (-(r - tau) * (r - tau) / b2).exp() * -(-4.0 * r * tau / b2).exp_m1()
            })
            .sum()
    }
}

/// Kernel values at one `(r, ν)`: the sine propagator applied to `D_0(ν)f`
/// with its first two radial derivatives, its Laplacian and that Laplacian's
/// derivative, and the cosine propagator with its derivative.
#[derive(Clone, Copy, Debug, Default)]
struct Kernel {
    k: f64,
    k1: f64,
    k2: f64,
    lap: f64,
    lap1: f64,
    c: f64,
    c1: f64,
}

fn kernel(src: &RadialSource, r: f64, nu: f64) -> Kernel {
    let tau = nu - 1.0;
    if r == 0.0 {
        let s = src.s_derivatives(nu, tau);
        return Kernel {
            k: s[0],
            k1: 0.0,
            k2: s[2] / 3.0,
            lap: s[2],
            lap1: 0.0,
            c: s[1],
            c1: 0.0,
        };
    }
    let p = src.s_derivatives(nu, r + tau);
    let m = src.s_derivatives(nu, r - tau);
    let p0 = src.sine_primitive(nu, r, tau);
    let p1 = p[0] - m[0];
    let p2 = p[1] - m[1];
    let p3 = p[2] - m[2];
    let q0 = p[0] + m[0];
    let q1 = p[1] + m[1];
    let r2 = r * r;
    Kernel {
        k: p0 / (2.0 * r),
        k1: (r * p1 - p0) / (2.0 * r2),
        k2: p2 / (2.0 * r) - p1 / r2 + p0 / (r2 * r),
        lap: p2 / (2.0 * r),
        lap1: (r * p3 - p2) / (2.0 * r2),
        c: q0 / (2.0 * r),
        c1: (r * q1 - q0) / (2.0 * r2),
    }
}

/// Tabulated radial profiles `Ã_1(r)`, `Ã̃_1(r)` and derivatives.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    dr: f64,
    a: Vec<f64>,
    da: Vec<f64>,
    d2a: Vec<f64>,
    lap: Vec<f64>,
    dlap: Vec<f64>,
    tt: Vec<f64>,
    dtt: Vec<f64>,
    tail_error: f64,
    source: RadialSource,
}

#[inline]
fn hermite5(t: f64, h: f64, f0: f64, f1: f64, d0: f64, d1: f64, s0: f64, s1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h3 = 0.5 * (t3 - 2.0 * t4 + t5);
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    f0 * h0 + h * d0 * h1 + h * h * s0 * h2 + h * h * s1 * h3 + h * d1 * h4 + f1 * h5
}

#[inline]
fn hermite3(t: f64, h: f64, f0: f64, f1: f64, d0: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    f0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + h * d0 * (t3 - 2.0 * t2 + t)
        + f1 * (3.0 * t2 - 2.0 * t3)
        + h * d1 * (t3 - t2)
}

impl RadialProfile {
    /// Tabulates on `r = 0, dr, 2dr, …` up to at least `r_max`.
    pub fn build(source: &RadialSource, nodes: &[(f64, f64)], r_max: f64, dr: f64) -> Self {
        let count = (r_max / dr).ceil() as usize + 2;
        let last = nodes.last().copied();
        let rows: Vec<([f64; 7], f64)> = (0..count)
            .into_par_iter()
            .map(|k| {
                let r = k as f64 * dr;
                let mut acc = [0.0; 7];
                for &(nu, w) in nodes {
                    let kern = kernel(source, r, nu);
                    let s = w * nu.powi(-3);
                    acc[0] -= s * kern.k;
                    acc[1] -= s * kern.k1;
                    acc[2] -= s * kern.k2;
                    acc[3] -= s * kern.lap;
                    acc[4] -= s * kern.lap1;
                    acc[5] += s * kern.c;
                    acc[6] += s * kern.c1;
                }
                let tail = match last {
                    Some((nu, _)) if nu.is_finite() && nu < 1e6 => {
                        let kern = kernel(source, r, nu);
                        nu.powi(-2) * kern.k.abs().max(kern.c.abs())
                    }
                    _ => 0.0,
                };
                (acc, tail)
            })
            .collect();
        let col = |i: usize| rows.iter().map(|r| r.0[i]).collect::<Vec<f64>>();
        let tail_error = rows.iter().fold(0.0_f64, |m, r| m.max(r.1));
        Self {
            dr,
            a: col(0),
            da: col(1),
            d2a: col(2),
            lap: col(3),
            dlap: col(4),
            tt: col(5),
            dtt: col(6),
            tail_error,
            source: source.clone(),
        }
    }

    pub fn source(&self) -> &RadialSource {
        &self.source
    }

    pub fn step(&self) -> f64 {
        self.dr
    }

    pub fn r_max(&self) -> f64 {
        (self.a.len() - 1) as f64 * self.dr
    }

    /// Estimated size of the neglected `ν > ν_max` contribution (sup over radii).
    pub fn tail_error(&self) -> f64 {
        self.tail_error
    }

    #[inline]
    fn locate(&self, r: f64) -> Option<(usize, f64)> {
        let p = r / self.dr;
        let k = p.floor() as usize;
        if k + 1 >= self.a.len() {
            None
        } else {
            Some((k, p - k as f64))
        }
    }

    /// `Ã_1(r)`; beyond the table the Coulomb tail `∝ 1/r` is continued.
    pub fn a1(&self, r: f64) -> f64 {
        match self.locate(r) {
            Some((k, t)) => hermite5(
                t,
                self.dr,
                self.a[k],
                self.a[k + 1],
                self.da[k],
                self.da[k + 1],
                self.d2a[k],
                self.d2a[k + 1],
            ),
            None => {
                let n = self.a.len() - 1;
                self.a[n] * self.r_max() / r
            }
        }
    }

    /// `∂_r Ã_1(r)`.
    pub fn a1_prime(&self, r: f64) -> f64 {
        match self.locate(r) {
            Some((k, t)) => hermite3(t, self.dr, self.da[k], self.da[k + 1], self.d2a[k], self.d2a[k + 1]),
            None => {
                let n = self.a.len() - 1;
                self.da[n] * (self.r_max() / r).powi(2)
            }
        }
    }

    /// `ΔÃ_1(r)`.
    pub fn a1_laplacian(&self, r: f64) -> f64 {
        match self.locate(r) {
            Some((k, t)) => hermite3(t, self.dr, self.lap[k], self.lap[k + 1], self.dlap[k], self.dlap[k + 1]),
            None => 0.0,
        }
    }

    /// `Ã̃_1(r)`.
    pub fn a1_tt(&self, r: f64) -> f64 {
        match self.locate(r) {
            Some((k, t)) => hermite3(t, self.dr, self.tt[k], self.tt[k + 1], self.dtt[k], self.dtt[k + 1]),
            None => 0.0,
        }
    }

    /// `∂_r Ã̃_1(r)`.
    pub fn a1_tt_prime(&self, r: f64) -> f64 {
        match self.locate(r) {
            Some((k, t)) => {
                // Linear in the derivative table; only used for norms.
                self.dtt[k] * (1.0 - t) + self.dtt[k + 1] * t
            }
            None => 0.0,
        }
    }

    /// `(4π ∫_0^{r_max} F(r)^2 r^2 dr)^{1/2}` by Simpson's rule on the table nodes.
    fn radial_l2(&self, values: &[f64]) -> f64 {
        let n = values.len() - 1;
        let m = if n % 2 == 0 { n } else { n - 1 };
        let f = |k: usize| {
            let r = k as f64 * self.dr;
            values[k] * values[k] * r * r
        };
        let mut s = f(0) + f(m);
        for k in 1..m {
            s += if k % 2 == 1 { 4.0 * f(k) } else { 2.0 * f(k) };
        }
        s *= self.dr / 3.0;
        if m < n {
            s += 0.5 * self.dr * (f(m) + f(n));
        }
        (4.0 * std::f64::consts::PI * s).sqrt()
    }

    /// `‖∇Ã_1‖_2`, including the `1/r^2` tail of the gradient beyond the table.
    pub fn grad_a1_l2(&self) -> f64 {
        let core = self.radial_l2(&self.da);
        let n = self.da.len() - 1;
        let r = self.r_max();
        let c = self.da[n] * r * r;
        (core * core + 4.0 * std::f64::consts::PI * c * c / r).sqrt()
    }

    /// `‖ΔÃ_1‖_2`.
    pub fn lap_a1_l2(&self) -> f64 {
        self.radial_l2(&self.lap)
    }

    /// `‖Ã̃_1‖_2`.
    pub fn a1_tt_l2(&self) -> f64 {
        self.radial_l2(&self.tt)
    }

    /// `‖∇Ã̃_1‖_2`.
    pub fn grad_a1_tt_l2(&self) -> f64 {
        self.radial_l2(&self.dtt)
    }

    /// `‖|w_+|^2‖_2` and `‖∇|w_+|^2‖_2` on the same radial quadrature.
    pub fn source_norms(&self) -> (f64, f64) {
        let g: Vec<f64> = (0..self.a.len()).map(|k| self.source.value(k as f64 * self.dr)).collect();
        let dg: Vec<f64> = (0..self.a.len())
            .map(|k| self.source.derivative(k as f64 * self.dr))
            .collect();
        (self.radial_l2(&g), self.radial_l2(&dg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::nu_quadrature;

    fn profile(nu_max: f64, nodes: usize) -> RadialProfile {
        let src = RadialSource::new(vec![(0.8, 0.5)]);
        let q = nu_quadrature(nu_max, nodes).unwrap();
        RadialProfile::build(&src, &q, 12.0, 0.5 / 64.0)
    }

    #[test]
    fn kernel_matches_direct_integral() {
        // (1/2r) ∫_{|r-τ|}^{r+τ} s f(s/ν) ds by brute force.
        let src = RadialSource::new(vec![(1.3, 0.4), (0.2, 0.9)]);
        for &(r, nu) in &[(0.3, 1.7), (2.0, 3.5), (0.05, 1.02), (5.0, 4.0)] {
            let tau: f64 = nu - 1.0;
            let (lo, hi) = ((r - tau).abs(), r + tau);
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let x = lo + (i as f64 + 0.5) * h;
                s += x * src.value(x / nu) * h;
            }
            let direct = s / (2.0 * r);
            let k = kernel(&src, r, nu).k;
            assert!((k - direct).abs() < 1e-8 * (1.0 + direct.abs()), "{r} {nu}: {k} vs {direct}");
        }
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let src = RadialSource::new(vec![(1.0, 0.5)]);
        let nu = 2.3;
        for &r in &[0.2, 0.9, 1.7, 3.1] {
            let h = 1e-4;
            let kp = kernel(&src, r + h, nu);
            let km = kernel(&src, r - h, nu);
            let k0 = kernel(&src, r, nu);
            assert!(((kp.k - km.k) / (2.0 * h) - k0.k1).abs() < 1e-6);
            assert!(((kp.k1 - km.k1) / (2.0 * h) - k0.k2).abs() < 1e-6);
            assert!(((kp.lap - km.lap) / (2.0 * h) - k0.lap1).abs() < 1e-5);
            assert!(((kp.c - km.c) / (2.0 * h) - k0.c1).abs() < 1e-6);
            assert!((k0.k2 + 2.0 * k0.k1 / r - k0.lap).abs() < 1e-10);
        }
    }

    #[test]
    fn origin_limits_are_continuous() {
        let src = RadialSource::new(vec![(1.0, 0.5)]);
        let nu = 1.8;
        let k0 = kernel(&src, 0.0, nu);
        let ke = kernel(&src, 1e-3, nu);
        assert!((k0.k - ke.k).abs() < 1e-5);
        assert!((k0.lap - ke.lap).abs() < 1e-4);
        assert!((k0.c - ke.c).abs() < 1e-5);
    }

    #[test]
    fn self_similar_wave_equation_holds() {
        // □(t^{-1} Ã(x/t)) = -t^{-3}|w|^2(x/t) is equivalent to
        // r^2 Ã'' + 4 r Ã' + 2 Ã - ΔÃ = -|w|^2.
        let p = profile(f64::INFINITY, 512);
        let g = p.source().clone();
        let scale = g.value(0.0);
        for k in 1..400 {
            let r = k as f64 * 0.02;
            let a = p.a1(r);
            let da = p.a1_prime(r);
            let lap = p.a1_laplacian(r);
            let d2a = lap - 2.0 * da / r;
            let res = r * r * d2a + 4.0 * r * da + 2.0 * a - lap + g.value(r);
            assert!(res.abs() < 1e-6 * scale, "r = {r}: residual {res}");
        }
    }

    #[test]
    fn tt_is_minus_scaling_derivative() {
        // Ã̃ = -(1 + r ∂_r) Ã.
        let p = profile(f64::INFINITY, 512);
        for k in 0..200 {
            let r = k as f64 * 0.05;
            let lhs = p.a1_tt(r);
            let rhs = -(p.a1(r) + r * p.a1_prime(r));
            assert!((lhs - rhs).abs() < 1e-7, "r = {r}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn coulomb_tail() {
        // r Ã_1(r) levels off; for a narrow source the plateau is the point
        // charge value -Q/(4π), Q = ∫|w|^2 = c (√π β)^3.
        let p = profile(f64::INFINITY, 512);
        let m8 = 8.0 * p.a1(8.0);
        let m11 = 11.0 * p.a1(11.0);
        assert!((m8 - m11).abs() < 1e-2 * m11.abs());

        let (c, beta) = (1.0, 0.02);
        let src = RadialSource::new(vec![(c, beta)]);
        let q = nu_quadrature(f64::INFINITY, 512).unwrap();
        let narrow = RadialProfile::build(&src, &q, 6.0, beta / 8.0);
        let charge = c * (std::f64::consts::PI.sqrt() * beta).powi(3);
        let expect = -charge / (4.0 * std::f64::consts::PI);
        let got = 5.0 * narrow.a1(5.0);
        assert!((got - expect).abs() < 0.02 * expect.abs(), "{got} vs {expect}");
    }

    #[test]
    fn zero_source_gives_zero() {
        let src = RadialSource::new(vec![]);
        let q = nu_quadrature(8.0, 64).unwrap();
        let p = RadialProfile::build(&src, &q, 2.0, 0.1);
        assert_eq!(p.a1(0.5), 0.0);
        assert_eq!(p.a1_tt(0.5), 0.0);
    }
}
