use num_complex::Complex64;
use rayon::prelude::*;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Samples of a function on a [`Grid`], row-major over `(x1, x2, x3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    data: Vec<T>,
}

pub type ComplexField = Field<Complex64>;
pub type RealField = Field<f64>;

impl<T: Copy + Send + Sync + Default> Field<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![T::default(); grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                found: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    /// Samples `f(x1, x2, x3)` at every grid point.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> T + Sync,
    {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|idx| f(grid.position(idx)))
            .collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U, F>(&self, f: F) -> Field<U>
    where
        U: Copy + Send + Sync + Default,
        F: Fn(T) -> U + Sync,
    {
        Field {
            grid: self.grid,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map<S, U, F>(&self, other: &Field<S>, f: F) -> Result<Field<U>>
    where
        S: Copy + Send + Sync + Default,
        U: Copy + Send + Sync + Default,
        F: Fn(T, S) -> U + Sync,
    {
        self.check_same_grid(other.grid)?;
        Ok(Field {
            grid: self.grid,
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: Grid) -> Result<()> {
        if self.grid != other {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: other.to_string(),
            });
        }
        Ok(())
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl ComplexField {
    /// Real part, refusing if the imaginary residue exceeds `tol` relative to the field.
    pub fn real_part_checked(&self, tol: f64) -> Result<RealField> {
        let scale = self.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let residue = self.data.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
        let rel = if scale > 0.0 { residue / scale } else { 0.0 };
        if rel > tol {
            return Err(Error::ImaginaryResidue {
                residue: rel,
                tolerance: tol,
            });
        }
        Ok(self.real_part())
    }

    pub fn real_part(&self) -> RealField {
        self.map(|z| z.re)
    }

    pub fn modulus_squared(&self) -> RealField {
        self.map(|z| z.norm_sqr())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

macro_rules! impl_linear {
    ($t:ty) => {
        impl Field<$t> {
            /// `self + a * other`.
            pub fn add_scaled(&self, a: f64, other: &Self) -> Result<Self> {
                self.zip_map(other, |x, y| x + y * a)
            }

            pub fn sub(&self, other: &Self) -> Result<Self> {
                self.zip_map(other, |x, y| x - y)
            }

            pub fn scale(&self, a: f64) -> Self {
                self.map(|x| x * a)
            }
        }
    };
}

impl_linear!(f64);
impl_linear!(Complex64);

/// Pointwise modulus abstraction so norms work for real and complex fields.
pub trait Modulus: Copy + Send + Sync + Default {
    fn modulus(self) -> f64;
}

impl Modulus for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Modulus for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Grid quadrature of the `L^r` norm, `(h^3 Σ |f|^r)^{1/r}`; grid max for `r = ∞`.
pub fn lebesgue_norm<T: Modulus + Default>(f: &Field<T>, r: f64) -> Result<f64> {
    lebesgue_norm_slice(f.grid(), f.data(), r)
}

pub(crate) fn lebesgue_norm_slice<T: Modulus>(grid: Grid, data: &[T], r: f64) -> Result<f64> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::Domain(format!("Lebesgue exponent must be >= 1, got {r}")));
    }
    if r.is_infinite() {
        return Ok(data.iter().fold(0.0, |m, v| m.max(v.modulus())));
    }
    let sum: f64 = if r == 2.0 {
        data.iter().map(|v| v.modulus().powi(2)).sum()
    } else if r == 4.0 {
        data.iter().map(|v| v.modulus().powi(4)).sum()
    } else {
        data.iter().map(|v| v.modulus().powf(r)).sum()
    };
    Ok((grid.cell_volume() * sum).powf(1.0 / r))
}

/// Discrete `L^2` inner product `h^3 Σ conj(f) g`.
pub fn inner_product(f: &ComplexField, g: &ComplexField) -> Result<Complex64> {
    f.check_same_grid(g.grid())?;
    let s: Complex64 = f
        .data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * f.grid().cell_volume())
}

/// A wave field and its time derivative at a common time.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub a: RealField,
    pub a_dot: RealField,
    pub time: f64,
}

impl WaveState {
    pub fn new(a: RealField, a_dot: RealField, time: f64) -> Result<Self> {
        a.check_same_grid(a_dot.grid())?;
        Ok(Self { a, a_dot, time })
    }

    pub fn zeros(grid: Grid, time: f64) -> Self {
        Self {
            a: RealField::zeros(grid),
            a_dot: RealField::zeros(grid),
            time,
        }
    }

    pub fn grid(&self) -> Grid {
        self.a.grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_one_is_volume_power() {
        let g = Grid::new(8, 3.0).unwrap();
        let one = RealField::from_fn(g, |_| 1.0);
        for &r in &[1.0, 2.0, 3.5, 4.0] {
            let expect = 27.0_f64.powf(1.0 / r);
            assert!((lebesgue_norm(&one, r).unwrap() - expect).abs() < 1e-12 * expect);
        }
        assert_eq!(lebesgue_norm(&one, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn exponent_below_one_rejected() {
        let g = Grid::new(4, 1.0).unwrap();
        let f = RealField::zeros(g);
        assert!(matches!(lebesgue_norm(&f, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn shape_checked() {
        let g = Grid::new(4, 1.0).unwrap();
        assert!(matches!(
            RealField::from_vec(g, vec![0.0; 10]),
            Err(Error::Shape { expected: 64, found: 10 })
        ));
    }

    #[test]
    fn imaginary_residue_guard() {
        let g = Grid::new(4, 1.0).unwrap();
        let f = ComplexField::from_fn(g, |_| Complex64::new(1.0, 1e-6));
        assert!(f.real_part_checked(1e-10).is_err());
        assert!(f.real_part_checked(1e-5).is_ok());
    }
}
