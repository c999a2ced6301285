use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_EXTRACTION: i32 = 5;
pub const EXIT_SWEEP_FAILED: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("singularity crossed before the first sample: {0}")]
    BlowUpBeforeSample(String),

    #[error(transparent)]
    Io(#[from] anyhow::Error),

    #[error("{0}")]
    Extraction(String),

    #[error("every sweep row failed")]
    AllRowsFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::BlowUpBeforeSample(_) => EXIT_BLOW_UP,
            CliError::Io(_) => EXIT_IO,
            CliError::Extraction(_) => EXIT_EXTRACTION,
            CliError::AllRowsFailed => EXIT_SWEEP_FAILED,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
