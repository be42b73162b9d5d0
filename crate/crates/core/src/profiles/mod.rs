//! The asymptotic pair `(u_a, A_a = A_0 + A_1)` and its derivatives.
//!
//! Two grids are involved. Profile quantities (`w_+`, `Ã_1`, `Ã̃_1`) are
//! functions of `ξ = x/t` and are sampled on a small *profile grid*; physical
//! quantities at time `t` are sampled on the *physical grid*, which must be
//! large enough to hold `D_0(t) w_+` for every `t` of interest.

mod bundle;
mod grid_route;
mod radial;
mod state;

pub use bundle::{build_a1_tilde, build_a1_tilde_tilde, NormBounds, ProfileBundle, ProfileOptions, Route};
pub use grid_route::{build_on_grid, GridBuild, Propagator};
pub use radial::{RadialProfile, RadialSource};
pub use state::{AsymptoticState, HermiteTerm, WPlusSpec, WaveSpec};
