//! Types shared by the double- and triple-level codes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{Field, Gf};
use crate::linalg::MatrixError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("field of size {available} too small, need at least {required}")]
    FieldTooSmall { required: usize, available: usize },
    #[error("group {group}: 2*gamma = {two_gamma} must be below min(r - delta) = {limit}")]
    GammaTooLarge { group: usize, two_gamma: usize, limit: usize },
    #[error("group {group}: half-integral gamma needs an even cloud count, got {clouds}")]
    OddGroupHalfGamma { group: usize, clouds: usize },
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch { what: String, expected: usize, actual: usize },
    #[error("{erasures} erasures exceed the {level} budget of {budget}")]
    TooManyErasures { level: AccessLevel, erasures: usize, budget: usize },
    /// Flat 0-based cloud index; shown 1-based.
    #[error("cloud {} is needed but has not been decoded", .0 + 1)]
    SiblingsUndecoded(usize),
    #[error("inconsistent received data: {0}")]
    Inconsistent(String),
    #[error("no cloud with index {0}")]
    UnknownCloud(usize),
    #[error("evaluation points collide: {0}")]
    PointCollision(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// How much of the system a decode is allowed to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessLevel {
    Local,
    Middle,
    Global,
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessLevel::Local => "local",
            AccessLevel::Middle => "middle",
            AccessLevel::Global => "global",
        })
    }
}

/// Length, dimension and cross-parity budget of one local cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudParams {
    pub n: usize,
    pub k: usize,
    pub delta: usize,
}

impl CloudParams {
    pub fn new(n: usize, k: usize, delta: usize) -> Self {
        CloudParams { n, k, delta }
    }

    pub fn r(&self) -> usize {
        self.n - self.k
    }
}

/// Row and column evaluation points of one cloud's Cauchy matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudPoints {
    pub a: Vec<Gf>,
    pub b: Vec<Gf>,
}

impl CloudPoints {
    /// The first `u + v` entries of the field's default point sequence.
    pub fn consecutive(field: &Field, u: usize, v: usize) -> Self {
        let seq: Vec<Gf> = field.point_sequence().take(u + v).collect();
        CloudPoints { a: seq[..u].to_vec(), b: seq[u..].to_vec() }
    }
}

/// One named intermediate value computed while decoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub label: String,
    pub values: Vec<Gf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub level: AccessLevel,
    /// Which parity-check system was solved.
    pub system: String,
    pub steps: Vec<TraceStep>,
}

impl DecodeTrace {
    pub(crate) fn new(level: AccessLevel, system: impl Into<String>) -> Self {
        DecodeTrace { level, system: system.into(), steps: Vec::new() }
    }

    pub(crate) fn push(&mut self, label: impl Into<String>, values: &[Gf]) {
        self.steps.push(TraceStep { label: label.into(), values: values.to_vec() });
    }

    pub fn get(&self, label: &str) -> Option<&[Gf]> {
        self.steps.iter().find(|s| s.label == label).map(|s| s.values.as_slice())
    }

    pub fn render(&self, field: &Field) -> String {
        let mut out = format!("{} decode via {}\n", self.level, self.system);
        for s in &self.steps {
            let vals: Vec<String> = s.values.iter().map(|&v| field.power_notation(v)).collect();
            out.push_str(&format!("  {} = ({})\n", s.label, vals.join(", ")));
        }
        out
    }
}

/// Output of a successful decode: the message and the filled codeword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub message: Vec<Gf>,
    pub codeword: Vec<Gf>,
    pub trace: DecodeTrace,
}

/// The distance matrix `D`: one column per cloud, one row per access level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub rows: Vec<Vec<usize>>,
    /// Number of columns in each column group; separators go between groups.
    pub group_sizes: Vec<usize>,
}

impl DistanceMatrix {
    pub fn column(&self, j: usize) -> Vec<usize> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

impl fmt::Display for DistanceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().flatten().map(|d| d.to_string().len()).max().unwrap_or(1);
        let mut bounds = Vec::new();
        let mut acc = 0;
        for g in &self.group_sizes {
            acc += g;
            bounds.push(acc);
        }
        for (li, row) in self.rows.iter().enumerate() {
            let mut line = String::from("[");
            for (j, d) in row.iter().enumerate() {
                if j > 0 {
                    line.push_str(if bounds.contains(&j) { " | " } else { " " });
                }
                line.push_str(&format!("{d:>width$}"));
            }
            line.push(']');
            writeln!(f, "d{} {}", li + 1, line)?;
        }
        Ok(())
    }
}

pub(crate) fn erasure_count(word: &[Option<Gf>]) -> usize {
    word.iter().filter(|s| s.is_none()).count()
}

pub(crate) fn check_len(what: &str, expected: usize, actual: usize) -> Result<(), CodeError> {
    if expected == actual {
        Ok(())
    } else {
        Err(CodeError::LengthMismatch { what: what.to_string(), expected, actual })
    }
}

pub(crate) fn add_into(acc: &mut [Gf], v: &[Gf]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += *b;
    }
}

pub(crate) fn check_budget(
    level: AccessLevel,
    word: &[Option<Gf>],
    budget: usize,
) -> Result<usize, CodeError> {
    let erasures = erasure_count(word);
    if erasures > budget {
        Err(CodeError::TooManyErasures { level, erasures, budget })
    } else {
        Ok(erasures)
    }
}

/// Maps solver failures on a within-budget erasure pattern to decode errors.
pub(crate) fn solver_error(level: AccessLevel, e: MatrixError) -> CodeError {
    match e {
        MatrixError::Unsolvable => {
            CodeError::Inconsistent(format!("{level} parity-check system has no solution"))
        }
        MatrixError::Underdetermined { unknowns, rank } => CodeError::Inconsistent(format!(
            "{level} system underdetermined ({unknowns} unknowns, rank {rank})"
        )),
        other => CodeError::Matrix(other),
    }
}
