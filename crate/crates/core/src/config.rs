//! User-facing code description, loaded from TOML or JSON.
//!
//! ```toml
//! levels = 3
//! field = { m = 5, poly_hex = "0x25" }
//! n = [[10, 11], [10, 10]]
//! k = [[6, 6], [7, 7]]
//! delta = [[1, 1], [1, 1]]
//! two_gamma = [2, 1]
//! ```
//!
//! Two-level configs use flat arrays (`n = [6, 6]`). `delta` may be
//! replaced by `d1` (two-level only), from which `delta = r - d1 + 1`.
//! `points` optionally gives each cloud's Cauchy points as field integers.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::code::{CloudParams, CloudPoints, CodeError};
use crate::dl::{DlCode, DlParams};
use crate::gf::{Field, FieldError, Gf};
use crate::layered::LayeredCode;
use crate::tl::{TlCode, TlGroup, TlParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Code(#[from] CodeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub m: u32,
    pub poly_hex: String,
}

impl FieldSpec {
    pub fn build(&self) -> Result<Field, ConfigError> {
        let digits = self.poly_hex.trim_start_matches("0x").trim_start_matches("0X");
        let poly = u32::from_str_radix(digits, 16)
            .map_err(|e| ConfigError::Invalid(format!("poly_hex {:?}: {e}", self.poly_hex)))?;
        Ok(Field::new(self.m, poly)?)
    }
}

/// Per-cloud numbers, flat for two levels and per group for three.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dims {
    Flat(Vec<usize>),
    Nested(Vec<Vec<usize>>),
}

impl Dims {
    fn groups(&self) -> Vec<Vec<usize>> {
        match self {
            Dims::Flat(v) => vec![v.clone()],
            Dims::Nested(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSpec {
    pub a: Vec<u16>,
    pub b: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpecConfig {
    pub levels: u8,
    pub field: FieldSpec,
    pub n: Dims,
    pub k: Dims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Dims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_gamma: Option<Vec<usize>>,
    /// Flat list in cloud order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// First 32 bytes of SHA-256 over the canonical JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpecHash(pub [u8; 32]);

impl SpecHash {
    pub fn prefix(&self) -> [u8; 8] {
        self.0[..8].try_into().expect("8 bytes")
    }
}

impl fmt::Display for SpecHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl CodeSpecConfig {
    /// Parses TOML, falling back to JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical form: JSON with keys sorted at every level and no whitespace.
    pub fn canonical_json(&self) -> String {
        // serde_json::Value keeps object keys in a BTreeMap.
        let v = serde_json::to_value(self).expect("config serializes");
        v.to_string()
    }

    pub fn hash(&self) -> SpecHash {
        SpecHash(Sha256::digest(self.canonical_json().as_bytes()).into())
    }

    fn cloud_params(&self) -> Result<Vec<Vec<CloudParams>>, ConfigError> {
        let n = self.n.groups();
        let k = self.k.groups();
        let shape = |d: &Vec<Vec<usize>>| d.iter().map(Vec::len).collect::<Vec<_>>();
        if shape(&n) != shape(&k) {
            return Err(ConfigError::Invalid("n and k have different shapes".into()));
        }
        for (nv, kv) in n.iter().flatten().zip(k.iter().flatten()) {
            if kv >= nv {
                return Err(ConfigError::Invalid(format!("k = {kv} must be below n = {nv}")));
            }
        }
        let delta = match (&self.delta, &self.d1) {
            (Some(d), None) => {
                let d = d.groups();
                if shape(&d) != shape(&n) {
                    return Err(ConfigError::Invalid("delta has the wrong shape".into()));
                }
                d
            }
            (None, Some(d1)) => {
                if self.levels != 2 {
                    return Err(ConfigError::Invalid("d1 inference is two-level only".into()));
                }
                if d1.len() != n[0].len() {
                    return Err(ConfigError::Invalid("d1 has the wrong length".into()));
                }
                let mut out = Vec::new();
                for ((nv, kv), d) in n[0].iter().zip(&k[0]).zip(d1) {
                    let r = nv - kv;
                    if *d == 0 || *d > r + 1 {
                        return Err(ConfigError::Invalid(format!(
                            "d1 = {d} impossible with r = {r}"
                        )));
                    }
                    out.push(r + 1 - d);
                }
                vec![out]
            }
            _ => return Err(ConfigError::Invalid("give exactly one of delta and d1".into())),
        };
        Ok(n.iter()
            .zip(&k)
            .zip(&delta)
            .map(|((ng, kg), dg)| {
                ng.iter().zip(kg).zip(dg).map(|((&n, &k), &d)| CloudParams::new(n, k, d)).collect()
            })
            .collect())
    }

    fn points(&self, field: &Field, count: usize) -> Result<Option<Vec<CloudPoints>>, ConfigError> {
        let Some(pts) = &self.points else { return Ok(None) };
        if pts.len() != count {
            return Err(ConfigError::Invalid(format!(
                "points: expected {count} clouds, got {}",
                pts.len()
            )));
        }
        let conv = |v: &[u16]| -> Result<Vec<Gf>, ConfigError> {
            v.iter()
                .map(|&x| {
                    if field.contains(Gf(x)) {
                        Ok(Gf(x))
                    } else {
                        Err(ConfigError::Invalid(format!("point {x} outside GF(2^{})", field.m())))
                    }
                })
                .collect()
        };
        Ok(Some(
            pts.iter()
                .map(|p| Ok(CloudPoints { a: conv(&p.a)?, b: conv(&p.b)? }))
                .collect::<Result<_, ConfigError>>()?,
        ))
    }

    /// Describes an existing code, with every evaluation point spelled out.
    pub fn from_code(code: &LayeredCode, seed: Option<u64>) -> Self {
        let f = code.field();
        let field = FieldSpec { m: f.m(), poly_hex: format!("{:#x}", f.poly()) };
        let pts = |p: &CloudPoints| PointSpec {
            a: p.a.iter().map(|g| g.0).collect(),
            b: p.b.iter().map(|g| g.0).collect(),
        };
        match code {
            LayeredCode::Dl(c) => {
                let cl = c.params().clouds();
                CodeSpecConfig {
                    levels: 2,
                    field,
                    n: Dims::Flat(cl.iter().map(|c| c.n).collect()),
                    k: Dims::Flat(cl.iter().map(|c| c.k).collect()),
                    delta: Some(Dims::Flat(cl.iter().map(|c| c.delta).collect())),
                    d1: None,
                    two_gamma: None,
                    points: Some(c.points().iter().map(pts).collect()),
                    seed,
                }
            }
            LayeredCode::Tl(c) => {
                let g = c.params().groups();
                let nested = |f: fn(&CloudParams) -> usize| {
                    Dims::Nested(g.iter().map(|g| g.clouds.iter().map(f).collect()).collect())
                };
                CodeSpecConfig {
                    levels: 3,
                    field,
                    n: nested(|c| c.n),
                    k: nested(|c| c.k),
                    delta: Some(nested(|c| c.delta)),
                    d1: None,
                    two_gamma: Some(g.iter().map(|g| g.two_gamma).collect()),
                    points: Some(c.points().iter().flatten().map(pts).collect()),
                    seed,
                }
            }
        }
    }

    pub fn build(&self) -> Result<LayeredCode, ConfigError> {
        let field = self.field.build()?;
        let clouds = self.cloud_params()?;
        match self.levels {
            2 => {
                if matches!(self.n, Dims::Nested(_)) {
                    return Err(ConfigError::Invalid("two-level configs use flat arrays".into()));
                }
                if self.two_gamma.is_some() {
                    return Err(ConfigError::Invalid("two_gamma needs levels = 3".into()));
                }
                let clouds = clouds.into_iter().next().unwrap_or_default();
                let pts = self.points(&field, clouds.len())?;
                let params = DlParams::new(field, clouds)?;
                Ok(LayeredCode::Dl(DlCode::build(params, pts)?))
            }
            3 => {
                if matches!(self.n, Dims::Flat(_)) {
                    return Err(ConfigError::Invalid(
                        "three-level configs use nested arrays".into(),
                    ));
                }
                let tg = self
                    .two_gamma
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("levels = 3 needs two_gamma".into()))?;
                if tg.len() != clouds.len() {
                    return Err(ConfigError::Invalid("two_gamma needs one entry per group".into()));
                }
                let sizes: Vec<usize> = clouds.iter().map(Vec::len).collect();
                let groups: Vec<TlGroup> = clouds
                    .into_iter()
                    .zip(tg)
                    .map(|(clouds, &two_gamma)| TlGroup { two_gamma, clouds })
                    .collect();
                let total = sizes.iter().sum();
                let pts = self.points(&field, total)?.map(|flat| {
                    let mut it = flat.into_iter();
                    sizes.iter().map(|&s| it.by_ref().take(s).collect()).collect()
                });
                let params = TlParams::new(field, groups)?;
                Ok(LayeredCode::Tl(TlCode::build(params, pts)?))
            }
            l => Err(ConfigError::Invalid(format!("levels must be 2 or 3, got {l}"))),
        }
    }
}
