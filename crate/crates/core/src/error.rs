use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tree would have {atoms} atoms at the terminal level, exceeding the exact-mode cap of {cap}; use Monte Carlo mode instead")]
    SizeCap { atoms: u128, cap: usize },

    #[error("mark '{label}': per-step jump probability q = {q} is not in (0, 1); increase n_steps")]
    Intensity { label: String, q: f64 },

    #[error("target level {target} exceeds source level {from}")]
    Level { target: usize, from: usize },

    #[error("operation requires a {required} driver but the tree model is {actual}")]
    Model { required: &'static str, actual: &'static str },

    #[error("value shape does not match the tree: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("input is not a martingale: max defect {defect}")]
    MartingaleDefect { defect: f64 },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
