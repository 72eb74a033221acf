use serde::Serialize;
use thiserror::Error;
use vaisman_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Machine-readable form of a failed run.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub stage: Option<&'static str>,
    pub message: String,
    pub exit_code: i32,
}

fn variant_name(e: &CoreError) -> String {
    format!("{e:?}").chars().take_while(|c| c.is_alphanumeric()).collect()
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e.root() {
                CoreError::NotConverged { .. } | CoreError::LinearSolver(_) => 3,
                CoreError::InvalidArgument(_)
                | CoreError::NotBasic(_)
                | CoreError::NonPositiveDensity(_)
                | CoreError::Compatibility(_)
                | CoreError::Aliasing(_)
                | CoreError::NonzeroMean(_)
                | CoreError::NonPositiveBackground(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::OutsideChart(_) => 2,
                _ => 1,
            },
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (kind, stage) = match self {
            CliError::Usage(_) => ("Usage".to_string(), None),
            CliError::Io(_) => ("Io".to_string(), None),
            CliError::Core(e) => {
                let stage = match e {
                    CoreError::Stage { stage, .. } => Some(*stage),
                    _ => None,
                };
                (variant_name(e.root()), stage)
            }
        };
        ErrorRecord {
            kind,
            stage,
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        let nc = CliError::from(CoreError::Stage {
            stage: "solve",
            source: Box::new(CoreError::NotConverged {
                residual: 1.0,
                iterations: 3,
            }),
        });
        assert_eq!(nc.exit_code(), 3);
        let rec = nc.record();
        assert_eq!(rec.kind, "NotConverged");
        assert_eq!(rec.stage, Some("solve"));
        assert_eq!(CliError::from(CoreError::NotBasic(0.1)).exit_code(), 2);
        assert_eq!(CliError::from(CoreError::SingularMetric).exit_code(), 1);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }
}
