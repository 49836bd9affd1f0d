use eight4_core::Error;

pub const PASS: u8 = 0;
pub const ASSERTION: u8 = 1;
pub const SYSTEMIC: u8 = 2;
pub const NO_CONVERGENCE: u8 = 3;
pub const COLLISION: u8 = 4;
pub const DOMAIN: u8 = 5;
pub const USAGE: u8 = 64;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn systemic(message: impl Into<String>) -> Self {
        Self {
            code: SYSTEMIC,
            message: message.into(),
        }
    }
}

pub fn code_for(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. } | Error::CorrectorDivergence { .. } | Error::NoSignChange { .. } => {
            NO_CONVERGENCE
        }
        Error::CollisionProximity { .. } => COLLISION,
        Error::DomainError(_) | Error::NoPhysicalSolution(_) => DOMAIN,
        Error::InvalidIndex(_) | Error::InvalidConfig(_) => USAGE,
        _ => SYSTEMIC,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: code_for(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::systemic(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::systemic(e.to_string())
    }
}
