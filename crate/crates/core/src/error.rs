use thiserror::Error;

/// Errors raised by the library. Most numerical code is infallible; these
/// cover rejected inputs, configuration validation and artifact I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("state label {label} out of range (cardinality {cardinality})")]
    LabelOutOfRange { label: usize, cardinality: usize },

    #[error("SARSA update requires the next action")]
    MissingNextAction,

    #[error("critic update attempted while suspended; route through stabilized_step")]
    CriticSuspended,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("unsupported artifact format version {found} (supported: {supported})")]
    ArtifactVersion { found: u32, supported: u32 },

    #[error("state/action space mismatch: artifact {artifact} vs config {config}")]
    SpaceMismatch { artifact: String, config: String },

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
