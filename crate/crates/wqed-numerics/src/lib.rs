//! Numerical substrate for the waveguide scattering engine.
//!
//! Uniform momentum grids with endpoint-corrected weights, Cauchy principal
//! values by pole subtraction, oscillatory Fourier integrals with analytic
//! tails, the complex Lambert W function on every branch, and a few dense
//! linear-algebra and interpolation helpers shared by the solvers.

pub mod diffquot;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod interp;
pub mod lambert;
pub mod linalg;
pub mod pv;
pub mod quad;

pub use diffquot::{default_threshold, safe_difference_quotient};
pub use error::NumericsError;
pub use fourier::{fourier_2d, fourier_oscillatory, FourierTable, TailSpec};
pub use grid::MomentumGrid;
pub use lambert::lambert_w;
pub use pv::{pv_integrate, PVKernelSample};

/// Complex double used throughout.
pub type C64 = num_complex::Complex<f64>;

pub type Result<T> = std::result::Result<T, NumericsError>;
