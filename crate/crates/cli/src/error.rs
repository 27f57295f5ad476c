use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Failure,
    MissingInput,
    InvalidConfig,
    BadArtifact,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Failure => 1,
            Kind::MissingInput => 2,
            Kind::InvalidConfig => 3,
            Kind::BadArtifact => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::InvalidConfig, message)
    }

    /// The one-line JSON written to stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl From<objcrop::Error> for CliError {
    fn from(e: objcrop::Error) -> Self {
        use objcrop::Error as E;
        let kind = match &e {
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Kind::MissingInput,
            E::MissingKeys(_) | E::MissingBoxes { .. } => Kind::MissingInput,
            E::InvalidConfig(_) => Kind::InvalidConfig,
            E::BadMagic { .. } | E::VersionMismatch { .. } | E::Truncated(_) => Kind::BadArtifact,
            _ => Kind::Failure,
        };
        CliError::new(kind, e.to_string())
    }
}
