//! Configuration and output handling behind the `mipt-xeb` binary.

pub mod config;
pub mod output;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("partial failure: {0}")]
    Partial(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Partial(_) => 3,
        }
    }
}

impl From<mipt_xeb::Error> for Failure {
    fn from(e: mipt_xeb::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Fails when more than 10% of `total` tasks failed.
pub fn check_partial(failed: usize, total: usize, what: &str) -> Result<(), Failure> {
    if failed * 10 > total {
        return Err(Failure::Partial(format!("{failed} of {total} {what} failed")));
    }
    Ok(())
}
