use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{context}: {error}")]
    Core { context: String, error: vertexeuler_core::Error },
    #[error("scenario: {0}")]
    Parse(toml::de::Error),
    #[error("scenario: {0}")]
    Emit(toml::ser::Error),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("json: {0}")]
    Json(serde_json::Error),
    #[error("csv: {0}")]
    Csv(csv::Error),
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub fn core(context: impl Into<String>, error: vertexeuler_core::Error) -> Self {
        HarnessError::Core { context: context.into(), error }
    }
}

// Hand-written so the wrapped error is shown once rather than again as a source.
macro_rules! wrap {
    ($($ty:ty => $variant:ident),*) => {
        $(impl From<$ty> for HarnessError {
            fn from(e: $ty) -> Self {
                HarnessError::$variant(e)
            }
        })*
    };
}

wrap!(toml::de::Error => Parse, toml::ser::Error => Emit, serde_json::Error => Json, csv::Error => Csv);

pub type Result<T> = std::result::Result<T, HarnessError>;
