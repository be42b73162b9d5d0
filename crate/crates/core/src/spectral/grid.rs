use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A periodic cubic box `[-L/2, L/2)^3` sampled with `n` points per axis.
///
/// Grid point `i` along an axis sits at `(i - n/2) * h`, so the origin is
/// always a sample point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n_per_axis: usize, box_length: f64) -> Result<Self> {
        if n_per_axis < 2 || !n_per_axis.is_power_of_two() {
            return Err(Error::Domain(format!(
                "points per axis must be a power of two >= 2, got {n_per_axis}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Domain(format!(
                "box length must be positive and finite, got {box_length}"
            )));
        }
        Ok(Self {
            n: n_per_axis,
            length: box_length,
        })
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Total number of samples, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical coordinate of index `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Signed frequency index of DFT slot `m`: `m` for `m < n/2`, else `m - n`.
    #[inline]
    pub fn signed_mode(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    #[inline]
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI / self.length * self.signed_mode(m) as f64
    }

    /// Per-axis wavenumbers in DFT order.
    pub fn freq_lattice(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.wavenumber(m)).collect()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Inverse of [`Grid::index`].
    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        (i, j, k)
    }

    /// Physical position of the sample with flat index `idx`.
    #[inline]
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unravel(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Flat index of the mode `-m` (componentwise negation modulo `n`).
    #[inline]
    pub fn negated_index(&self, idx: usize) -> usize {
        let (i, j, k) = self.unravel(idx);
        let neg = |m: usize| (self.n - m) % self.n;
        self.index(neg(i), neg(j), neg(k))
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^3 grid, L = {}", self.n, self.length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_n_is_length() {
        for &(n, l) in &[(8, 1.0), (64, 37.3), (128, 192.0)] {
            let g = Grid::new(n, l).unwrap();
            assert_eq!(g.spacing() * n as f64, l);
        }
    }

    #[test]
    fn lattice_symmetric_except_nyquist() {
        let g = Grid::new(16, 5.0).unwrap();
        let k = g.freq_lattice();
        let nyq = k[8];
        assert!((nyq + PI / g.spacing()).abs() < 1e-12);
        for m in 1..8 {
            assert!((k[m] + k[16 - m]).abs() < 1e-12);
        }
        assert_eq!(k[0], 0.0);
    }

    #[test]
    fn origin_is_a_sample() {
        let g = Grid::new(32, 10.0).unwrap();
        assert_eq!(g.coord(16), 0.0);
        assert_eq!(g.coord(0), -5.0);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(12, 1.0).is_err());
        assert!(Grid::new(16, -1.0).is_err());
        assert!(Grid::new(16, f64::NAN).is_err());
    }

    #[test]
    fn negation_round_trip() {
        let g = Grid::new(8, 1.0).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.negated_index(g.negated_index(idx)), idx);
        }
        assert_eq!(g.negated_index(0), 0);
    }
}
