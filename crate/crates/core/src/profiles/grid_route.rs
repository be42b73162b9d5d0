//! Literal spectral evaluation of the `ν`-integrals on the profile grid, for
//! data without radial symmetry.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{ComplexField, DilationOptions, DilationPlan, RealField, Spectral, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagator {
    /// `-∫ ν^{-3} ω^{-1} sin(ω(ν-1)) D_0(ν)|w|^2 dν`
    Sine,
    /// `∫ ν^{-3} cos(ω(ν-1)) D_0(ν)|w|^2 dν`
    Cosine,
}

/// Result of a grid-route build: the field and the estimated truncation error.
pub struct GridBuild {
    pub field: RealField,
    pub tail_error: f64,
}

/// Sums the quadrature over `nodes`, one spectral propagation per node.
pub fn build_on_grid(
    w: &ComplexField,
    nodes: &[(f64, f64)],
    kind: Propagator,
    options: DilationOptions,
) -> Result<GridBuild> {
    let grid = w.grid();
    let spectral = Spectral::new(grid);
    let density = w.modulus_squared().to_complex();
    let mut acc = Spectrum::from_vec(grid, vec![Complex64::default(); grid.len()])?;
    let mut last_sup = 0.0;
    for (index, &(nu, weight)) in nodes.iter().enumerate() {
        let dilated = DilationPlan::new(grid, grid, nu, options)
            .and_then(|p| p.apply(&density))
            .map_err(|e| Error::QuadratureNode {
                index,
                nu,
                source: Box::new(e),
            })?;
        let mut s = spectral.forward_transform(&dilated)?;
        let tau = nu - 1.0;
        let sign = match kind {
            Propagator::Sine => -1.0,
            Propagator::Cosine => 1.0,
        };
        let scale = sign * weight * nu.powi(-3);
        spectral.apply_multiplier(&mut s, |kx, ky, kz, _| {
            let omega = (kx * kx + ky * ky + kz * kz).sqrt();
            let m = match kind {
                Propagator::Sine if omega == 0.0 => tau,
                Propagator::Sine => (omega * tau).sin() / omega,
                Propagator::Cosine => (omega * tau).cos(),
            };
            Complex64::new(m, 0.0)
        });
        if index + 1 == nodes.len() {
            let f = spectral.inverse_transform(&s)?;
            last_sup = f.max_abs() * nu.powi(-3) * nu;
        }
        for (a, b) in acc.data_mut().iter_mut().zip(s.data()) {
            *a += b * scale;
        }
    }
    let field = spectral.inverse_real(&acc, 1e-10)?;
    Ok(GridBuild {
        field,
        tail_error: last_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;

    #[test]
    fn zero_profile_gives_zero() {
        let g = Grid::new(8, 20.0).unwrap();
        let w = ComplexField::zeros(g);
        let nodes = vec![(1.5, 0.5), (2.0, 0.5)];
        let out = build_on_grid(&w, &nodes, Propagator::Sine, DilationOptions::default()).unwrap();
        assert_eq!(out.field.max_abs(), 0.0);
    }

    #[test]
    fn aliasing_names_node() {
        let g = Grid::new(16, 4.0).unwrap();
        let w = ComplexField::from_fn(g, |x| {
            Complex64::new((-8.0 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), 0.0)
        });
        let nodes = vec![(1.0, 0.5), (8.0, 0.5)];
        match build_on_grid(&w, &nodes, Propagator::Cosine, DilationOptions::default()) {
            Err(Error::QuadratureNode { index, nu, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(nu, 8.0);
            }
            other => panic!("expected node failure, got {:?}", other.map(|_| ())),
        }
    }
}
