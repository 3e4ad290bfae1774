use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("window length {d} exceeds the enumeration guard {max}")]
    WindowTooLarge { d: usize, max: usize },

    #[error("invalid history state: {0}")]
    InvalidState(String),

    #[error("invalid expert panel: {0}")]
    InvalidPanel(String),

    #[error("panel file line {line}: {msg}")]
    PanelParse { line: usize, msg: String },

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("horizon of {steps} steps exceeds the {engine} engine budget ({budget})")]
    HorizonTooLarge {
        engine: &'static str,
        steps: usize,
        budget: usize,
    },

    #[error("engine {engine} unavailable: {reason}")]
    EngineUnavailable { engine: &'static str, reason: String },

    #[error("recursion depth {k} exceeds guard {max}")]
    DepthTooLarge { k: usize, max: usize },

    #[error("degenerate gradient: <p,1> = {0:e}")]
    DegenerateGradient(f64),

    #[error("degenerate block denominator: {0:e}")]
    DegenerateDenominator(f64),

    #[error("one-step min-max precondition {which} violated: {detail}")]
    PreconditionViolated { which: &'static str, detail: String },

    #[error("singular diffusion: smallest eigenvalue of A is {0:e}")]
    SingularDiffusion(f64),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("no move remains at day {day} of horizon {horizon}")]
    GameOver { day: usize, horizon: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
