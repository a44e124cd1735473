//! Exit codes: 0 ok, 2 config, 3 IO, 4 unrecoverable decode.

use std::fmt;

use hiercode::code::CodeError;
use hiercode::config::ConfigError;
use hiercode::dynamics::DynamicsError;
use hiercode::simstore::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    Decode,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Io => 3,
            Category::Decode => 4,
        }
    }
}

/// Printed as `error: <category> <Kind>: <message>` so scripts can match on
/// the first three words.
#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, kind: &str, message: impl Into<String>) -> Self {
        CliError { category, kind: kind.into(), message: message.into() }
    }

    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        Self::new(Category::Config, kind, message)
    }

    pub fn decode(kind: &str, message: impl Into<String>) -> Self {
        Self::new(Category::Decode, kind, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cat = match self.category {
            Category::Config => "config",
            Category::Io => "io",
            Category::Decode => "decode",
        };
        write!(f, "error: {cat} {}: {}", self.kind, self.message)
    }
}

/// Variant name of an error enum, taken from its `Debug` form.
fn variant<E: fmt::Debug>(e: &E) -> String {
    format!("{e:?}").chars().take_while(|c| c.is_ascii_alphanumeric()).collect()
}

fn code_category(e: &CodeError) -> Category {
    match e {
        CodeError::TooManyErasures { .. }
        | CodeError::SiblingsUndecoded(_)
        | CodeError::Inconsistent(_)
        | CodeError::Matrix(_) => Category::Decode,
        _ => Category::Config,
    }
}

impl From<CodeError> for CliError {
    fn from(e: CodeError) -> Self {
        CliError::new(code_category(&e), &variant(&e), e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let kind = match &e {
            ConfigError::Code(c) => variant(c),
            ConfigError::Field(f) => variant(f),
            other => variant(other),
        };
        CliError::config(&kind, e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Code(c) => c.into(),
            DynamicsError::TargetUndecodable(_) => CliError::decode(&variant(&e), e.to_string()),
            other => CliError::config(&variant(&other), other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Code(c) => c.into(),
            StoreError::Io(_) | StoreError::Corrupt(_) => {
                CliError::new(Category::Io, &variant(&e), e.to_string())
            }
            other => CliError::config(&variant(&other), other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Category::Io, "Io", e.to_string())
    }
}
