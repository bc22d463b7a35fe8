use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<basket_wing::WingError> for CliError {
    fn from(e: basket_wing::WingError) -> Self {
        CliError::Numeric(e.to_string())
    }
}
