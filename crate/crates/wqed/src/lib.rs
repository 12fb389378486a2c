//! Few-photon scattering off a giant atom with delayed coherent feedback.
//!
//! The crate solves the singular integral equations for the connected
//! one- and two-photon vertex functions, assembles single-, two- and
//! three-photon scattering amplitudes from them, and evaluates the
//! observables of a weak coherent drive: inelastic spectra, second- and
//! third-order coherence functions, and resonance poles.

pub mod error;
pub mod model;
pub mod observables;
pub mod scattering;
pub mod vertex;

pub use error::{ModelError, ObservableError, ScatteringError, VertexError};
pub use model::{Channel, ComplexEnergy, ModelParams};
pub use scattering::AmplitudeMode;
pub use vertex::VertexMode;
pub use wqed_numerics::C64;
