use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("site ({i}, {j}) is {distance:.3e} from the target, outside the tubular radius {radius}")]
    OutsideTube { i: usize, j: usize, distance: f64, radius: f64 },

    #[error("non-finite value at site ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("far-field value differs from the boundary constant by {mismatch:.3e}")]
    FarFieldMismatch { mismatch: f64 },

    #[error("bracket [{lo}, {hi}] does not straddle the target")]
    Bracket { lo: f64, hi: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("frame degenerate on {fraction:.4} of the sites")]
    DegenerateFrame { fraction: f64 },

    #[error("gauge error: {0}")]
    Gauge(String),

    #[error("step {step} at t = {t:.6e}: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("step rejected {rejections} times by the energy guard")]
    Rejected { rejections: usize },

    #[error("hook failed: {0}")]
    Hook(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
