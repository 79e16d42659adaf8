use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value failed validation. `field` names the offending key path.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("query time {t} precedes state stamp {stamp}")]
    TimeBeforeStamp { t: f64, stamp: f64 },

    #[error("ego point lies inside the region of robot {peer_id}")]
    EgoPenetration { peer_id: u32 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }

    /// Prefix the field path of an [`Error::Invalid`], e.g. `size[0]` → `robots[2].size[0]`.
    pub fn within(self, parent: &str) -> Self {
        match self {
            Error::Invalid { field, reason } => Error::Invalid { field: format!("{parent}.{field}"), reason },
            other => other,
        }
    }
}
