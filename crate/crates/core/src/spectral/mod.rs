//! Grids, fields, discrete Fourier analysis and the linear operators built on it.

mod dilation;
mod field;
mod grid;
mod ops;

pub use dilation::{
    apply_md_phase, d_prefactor, dilate, dilate_real, mass_outside, md_apply, DilationOptions,
    DilationPlan, Interpolation,
};
pub use field::{inner_product, lebesgue_norm, ComplexField, Field, Modulus, RealField, WaveState};
pub use grid::Grid;
pub use ops::{Spectral, Spectrum, StepKernels};
