//! Error-to-exit-code mapping: 0 success, 1 usage, 2 numerical abort, 3 io.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage,
    Numerical,
    Io,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        match self {
            ExitKind::Usage => 1,
            ExitKind::Numerical => 2,
            ExitKind::Io => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> CliError {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> CliError {
        CliError::new(ExitKind::Usage, message)
    }

    pub fn numerical(message: impl Into<String>) -> CliError {
        CliError::new(ExitKind::Numerical, message)
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError::new(ExitKind::Io, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<surfmap_render::RenderError> for CliError {
    fn from(e: surfmap_render::RenderError) -> Self {
        use surfmap_render::RenderError as R;
        let kind = match &e {
            R::Io(_) | R::Image(_) | R::BadDataset(_) | R::Checkpoint(_) => ExitKind::Io,
            R::DomainFit(_) => ExitKind::Numerical,
            R::UnknownObject(_) | R::BadCamera(_) | R::LengthMismatch { .. } => ExitKind::Usage,
            _ => ExitKind::Numerical,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<surfmap_mesh::MeshError> for CliError {
    fn from(e: surfmap_mesh::MeshError) -> Self {
        use surfmap_mesh::MeshError as M;
        let kind = match &e {
            M::Io(_) | M::BadObj(_) | M::BadAtlas(_) => ExitKind::Io,
            M::DomainMismatch | M::UnsupportedDomain | M::ResolutionTooHigh(_) => ExitKind::Usage,
            _ => ExitKind::Numerical,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<surfmap_deform::DeformError> for CliError {
    fn from(e: surfmap_deform::DeformError) -> Self {
        CliError::numerical(e.to_string())
    }
}

impl From<surfmap_sdf::SdfError> for CliError {
    fn from(e: surfmap_sdf::SdfError) -> Self {
        use surfmap_sdf::SdfError as S;
        let kind = match &e {
            S::Io(_) | S::BadGridFile(_) | S::BadDescriptor { .. } => ExitKind::Io,
            _ => ExitKind::Usage,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<surfmap_domain::DomainError> for CliError {
    fn from(e: surfmap_domain::DomainError) -> Self {
        CliError::numerical(e.to_string())
    }
}
