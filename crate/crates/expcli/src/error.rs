use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("population cap exceeded in {failed} of {replicas} replica(s), first at t = {first_time}")]
    Capacity { failed: u64, replicas: u64, first_time: f64 },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("sweep aborted at {param} = {value}: {source}")]
    Sweep {
        param: String,
        value: f64,
        #[source]
        source: Box<ExpError>,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExpError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        ExpError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config { .. } => 2,
            ExpError::Capacity { .. } => 3,
            ExpError::Estimation(_) => 4,
            ExpError::Sweep { source, .. } => source.exit_code(),
            ExpError::Io { .. } => 1,
        }
    }
}

impl From<branchsel::stats::StatsError> for ExpError {
    fn from(e: branchsel::stats::StatsError) -> Self {
        ExpError::Estimation(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(ExpError::config("dt", "bad").exit_code(), 2);
        let cap = ExpError::Capacity {
            failed: 1,
            replicas: 2,
            first_time: 0.5,
        };
        assert_eq!(cap.exit_code(), 3);
        assert_eq!(ExpError::Estimation("x".into()).exit_code(), 4);
        let nested = ExpError::Sweep {
            param: "L".into(),
            value: 4.0,
            source: Box::new(ExpError::Estimation("x".into())),
        };
        assert_eq!(nested.exit_code(), 4);
        assert!(nested.to_string().contains("L = 4"));
    }

    #[test]
    fn config_message_names_field() {
        let e = ExpError::config("replicas", "must be at least 1");
        assert_eq!(e.to_string(), "config error at `replicas`: must be at least 1");
    }
}
