use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const COMPLETED: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const BLOWUP: i32 = 2;
    pub const POSITIVITY: i32 = 3;
    pub const INSTABILITY: i32 = 4;
    pub const CONVERGENCE: i32 = 5;
    pub const VERDICT: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] alignlab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(alignlab_core::Error::Numerical { .. }) => exit::INSTABILITY,
            _ => exit::USAGE,
        }
    }
}
