use salvage_core::Error;

pub const USAGE: u8 = 1;
pub const CONFIG: u8 = 2;
pub const REFUSED: u8 = 3;

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

pub fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: USAGE,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn refused(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: REFUSED,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn config(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: CONFIG,
        error: error.into(),
    }
}

/// Domain errors come from user-supplied numbers; everything else from files.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) => USAGE,
            Error::NoApplicableCurve(_) | Error::GridTooLarge { .. } => REFUSED,
            _ => CONFIG,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

/// Writing outputs failed.
impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        config(e)
    }
}
