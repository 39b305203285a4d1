use thiserror::Error;

/// Library-wide error type. Variants map one-to-one onto the documented
/// CLI exit-code classes (validation, I/O, unsupported feature, internal).
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model bytes: {0}")]
    Decode(String),
    #[error("unsupported tensor element type: {0}")]
    UnsupportedDtype(i32),
    #[error("graph contains a cycle")]
    Cycle,
    #[error("shapes do not broadcast: {0:?} vs {1:?}")]
    Broadcast(Vec<usize>, Vec<usize>),
    #[error("invalid bit width: {0}")]
    BitWidth(String),
    #[error("graph input '{0}' is not bound")]
    UnboundInput(String),
    #[error("no kernel registered for op '{1}' (domain '{0}')")]
    UnsupportedOp(String, String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("shape annotation conflicts with inference: {0}")]
    ShapeConflict(String),
    #[error("unsupported tensor rank for layout conversion: {0}")]
    Rank(String),
    #[error("non-scalar bit_width or zero_point cannot be lowered: {0}")]
    PerChannelBitWidth(String),
    #[error("quantization parameter '{0}' is not a constant")]
    DynamicParam(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("zero_point must be integer-valued for lowering: {0}")]
    ZeroPoint(String),
    #[error("invalid argument: {0}")]
    Arg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A single validation finding. Validation never fails; it reports.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Node name or tensor name the finding refers to, when known.
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, subject: subject.into(), message: message.into() }
    }

    pub fn warning(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, subject: subject.into(), message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {}: {}", sev, self.subject, self.message)
    }
}
