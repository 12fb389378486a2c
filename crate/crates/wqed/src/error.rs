use thiserror::Error;
use wqed_numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter {field} = {value}")]
    InvalidParameter { field: &'static str, value: f64 },

    #[error("closed-form self-energy needs Im ε ≥ 0, got {im}")]
    NotRetarded { im: f64 },

    #[error("inverse propagator |G⁻¹({re} + {im}i)| = {magnitude:.3e} is below the floor")]
    PoleProximity { re: f64, im: f64, magnitude: f64 },

    #[error("{what} failed to converge (refinement gap {gap:.3e})")]
    NonConvergence { what: &'static str, gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VertexError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("vertex system is numerically singular at ε = {energy}: pivot ratio {pivot_ratio:.3e}")]
    SingularSystem { energy: f64, pivot_ratio: f64 },

    #[error("grid too coarse at ε = {energy}: refinement moves the solution by {relative_change:.3e} (relative)")]
    GridTooCoarse { energy: f64, relative_change: f64 },

    #[error("two-photon vertex iteration stalled after {iterations} iterations at residual {residual:.3e}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("solve at ε = {energy} failed: {source}")]
    AtEnergy {
        energy: f64,
        #[source]
        source: Box<VertexError>,
    },

    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScatteringError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Vertex(#[from] VertexError),

    #[error("exact three-photon amplitude needs the two-photon vertex slice")]
    MissingF12,

    #[error("momentum {k} outside the tabulated range ±{limit}")]
    OutOfRange { k: f64, limit: f64 },

    #[error("connected two-photon amplitude is singular at k = {k}")]
    CoincidentMomenta { k: f64 },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Vertex(#[from] VertexError),

    #[error(transparent)]
    Scattering(#[from] ScatteringError),

    #[error("power balance violated: residual {residual:.3e} against scale {scale:.3e}")]
    ConservationViolation { residual: f64, scale: f64 },

    #[error("single-photon amplitude S_{channel}1(0) = {magnitude:.3e} is too small to normalize")]
    DegenerateNormalization { channel: u8, magnitude: f64 },

    #[error("pulse-length extrapolation unstable: last two lengths differ by {relative:.3e}")]
    ExtrapolationUnstable { relative: f64 },

    #[error("pole on branch {branch} has residual {residual:.3e}")]
    ResidualTooLarge { branch: i64, residual: f64 },

    #[error("{0}")]
    InvalidInput(String),
}
