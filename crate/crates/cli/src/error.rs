//! Failure classes and their exit codes.

use std::fmt;
use std::process::ExitCode;

use hetembed_core::eval::EvalError;
use hetembed_core::synth::SynthError;
use hetembed_core::text::TextError;
use hetembed_core::train::ModelError;
use hetembed_core::walk::WalkError;
use hetembed_core::{GraphError, OnlineError, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Anything not covered below, including failed output writes.
    Other,
    /// Bad flags, config file or parameter values.
    Config,
    /// Unreadable or inconsistent input files.
    Data,
    /// Non-finite values or divergence during optimization.
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Other => 1,
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

pub type Result<T> = std::result::Result<T, Failure>;

impl Failure {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Failure::new(Kind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure::new(Kind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Failure {
            kind: self.kind,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for Failure {
    /// The cause chain on one line. Many errors already repeat their source in
    /// their own message, so a cause that the text so far ends with is skipped.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut text = String::new();
        for cause in self.error.chain() {
            let s = cause.to_string();
            if text.ends_with(&s) {
                continue;
            }
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&s);
        }
        f.write_str(&text)
    }
}

/// Attach a message to any error convertible into a [`Failure`].
pub trait Context<T> {
    fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Result<T>;
}

impl<T, E: Into<Failure>> Context<T> for std::result::Result<T, E> {
    fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Result<T> {
        self.map_err(|e| e.into().context(ctx))
    }
}

/// Output side I/O (writing results) counts as [`Kind::Other`]; read
/// failures are wrapped as data errors where they occur.
impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(Kind::Other, e)
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

impl From<TextError> for Failure {
    fn from(e: TextError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

fn walk_kind(e: &WalkError) -> Kind {
    match e {
        WalkError::InvalidConfig(_) | WalkError::Scheme { .. } => Kind::Config,
        _ => Kind::Data,
    }
}

impl From<WalkError> for Failure {
    fn from(e: WalkError) -> Self {
        Failure::new(walk_kind(&e), e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_) => Kind::Config,
            TrainError::Walk(w) => walk_kind(w),
            e if e.is_numeric() => Kind::Numeric,
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<OnlineError> for Failure {
    fn from(e: OnlineError) -> Self {
        let kind = match &e {
            OnlineError::Config(_) | OnlineError::NoScheme { .. } | OnlineError::SchemeMismatch { .. } => Kind::Config,
            OnlineError::Walk(w) => walk_kind(w),
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::InvalidK { .. } => Kind::Config,
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        let kind = match &e {
            SynthError::Config(_) => Kind::Config,
            SynthError::Io(_) => Kind::Other,
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}
