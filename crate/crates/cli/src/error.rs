use std::fmt;

use bss_core::BssError;

/// Exit codes are part of the interface.
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DIMENSION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_SINGULAR: i32 = 5;
pub const EXIT_GUARD: i32 = 6;
pub const EXIT_IO: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Io(String),
    Core(BssError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => match e.root() {
                BssError::InvalidConfig(_) => EXIT_PARSE,
                BssError::Dimension(_) => EXIT_DIMENSION,
                BssError::Singular { .. } => EXIT_SINGULAR,
                BssError::Guard { .. } => EXIT_GUARD,
                BssError::Domain(_)
                | BssError::NotConverged { .. }
                | BssError::SolverAbort { .. }
                | BssError::DegenerateLoading(_)
                | BssError::DegenerateScore(_)
                | BssError::Component { .. } => EXIT_SOLVER,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<BssError> for CliError {
    fn from(e: BssError) -> Self {
        CliError::Core(e)
    }
}
