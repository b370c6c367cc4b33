//! Process exit codes.

use std::fmt;

pub const SUCCESS: u8 = 0;
pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;

/// Bad configuration or command-line usage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Exit code for an error chain.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<trustsup::Error>() {
            if e.is_numeric() {
                return NUMERIC;
            }
            if matches!(e, trustsup::Error::InvalidArgument(_)) {
                return CONFIG;
            }
            return DATA;
        }
    }
    DATA
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let numeric = anyhow::Error::new(trustsup::Error::Diverged {
            epoch: 1,
            loss: f64::NAN,
        });
        assert_eq!(code_for(&numeric), NUMERIC);
        let data = anyhow::Error::new(trustsup::Error::Empty("x".into())).context("loading");
        assert_eq!(code_for(&data), DATA);
        let cfg = anyhow::Error::new(ConfigError("bad".into()));
        assert_eq!(code_for(&cfg), CONFIG);
    }
}
