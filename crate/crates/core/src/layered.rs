//! One interface over double- and triple-level codes, addressing clouds by
//! their flat position in the codeword.

use crate::code::{AccessLevel, CodeError, Decoded, DistanceMatrix};
use crate::dl::DlCode;
use crate::gf::{Field, Gf};
use crate::tl::{KnownClouds, TlCode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayeredCode {
    Dl(DlCode),
    Tl(TlCode),
}

impl LayeredCode {
    pub fn levels(&self) -> u8 {
        match self {
            LayeredCode::Dl(_) => 2,
            LayeredCode::Tl(_) => 3,
        }
    }

    pub fn field(&self) -> &Field {
        match self {
            LayeredCode::Dl(c) => c.field(),
            LayeredCode::Tl(c) => c.field(),
        }
    }

    pub fn cloud_count(&self) -> usize {
        match self {
            LayeredCode::Dl(c) => c.p(),
            LayeredCode::Tl(c) => c.params().cloud_count(),
        }
    }

    /// Cloud indices grouped as the topology sees them; a double-level code
    /// is one group.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        match self {
            LayeredCode::Dl(c) => vec![(0..c.p()).collect()],
            LayeredCode::Tl(c) => {
                let p = c.params();
                (0..p.p0()).map(|x| (0..p.p(x)).map(|i| p.flat_index(x, i)).collect()).collect()
            }
        }
    }

    pub fn n(&self, cloud: usize) -> usize {
        match self {
            LayeredCode::Dl(c) => c.params().cloud(cloud).n,
            LayeredCode::Tl(c) => {
                let (x, i) = self.locate(c, cloud);
                c.params().cloud(x, i).n
            }
        }
    }

    pub fn k(&self, cloud: usize) -> usize {
        match self {
            LayeredCode::Dl(c) => c.params().cloud(cloud).k,
            LayeredCode::Tl(c) => {
                let (x, i) = self.locate(c, cloud);
                c.params().cloud(x, i).k
            }
        }
    }

    pub fn total_n(&self) -> usize {
        (0..self.cloud_count()).map(|c| self.n(c)).sum()
    }

    pub fn total_k(&self) -> usize {
        (0..self.cloud_count()).map(|c| self.k(c)).sum()
    }

    /// Offset of each cloud's first symbol in the flat codeword.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        (0..self.cloud_count())
            .map(|c| {
                let o = acc;
                acc += self.n(c);
                o
            })
            .collect()
    }

    /// Other clouds in the same group.
    pub fn siblings(&self, cloud: usize) -> Vec<usize> {
        match self {
            LayeredCode::Dl(_) => Vec::new(),
            LayeredCode::Tl(_) => self
                .groups()
                .into_iter()
                .find(|g| g.contains(&cloud))
                .unwrap_or_default()
                .into_iter()
                .filter(|&c| c != cloud)
                .collect(),
        }
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        match self {
            LayeredCode::Dl(c) => c.params().distance_matrix(),
            LayeredCode::Tl(c) => c.params().distance_matrix(),
        }
    }

    /// Erasure budget of `cloud` at each level, in order.
    pub fn budgets(&self, cloud: usize) -> Vec<(AccessLevel, usize)> {
        let d = self.distance_matrix().column(cloud);
        let n = self.n(cloud);
        let levels: &[AccessLevel] = match self {
            LayeredCode::Dl(_) => &[AccessLevel::Local, AccessLevel::Global],
            LayeredCode::Tl(_) => &[AccessLevel::Local, AccessLevel::Middle, AccessLevel::Global],
        };
        levels.iter().zip(d).map(|(&l, d)| (l, (d - 1).min(n))).collect()
    }

    fn locate(&self, c: &TlCode, cloud: usize) -> (usize, usize) {
        c.params().locate(cloud).unwrap_or((usize::MAX, usize::MAX))
    }

    fn check(&self, cloud: usize) -> Result<(), CodeError> {
        if cloud < self.cloud_count() {
            Ok(())
        } else {
            Err(CodeError::UnknownCloud(cloud))
        }
    }

    /// Encodes per-cloud messages in flat order into per-cloud codewords.
    pub fn encode(&self, messages: &[Vec<Gf>]) -> Result<Vec<Vec<Gf>>, CodeError> {
        match self {
            LayeredCode::Dl(c) => Ok(c.encode(messages)?.segments),
            LayeredCode::Tl(c) => {
                let groups = self.groups();
                crate::code::check_len("message count", self.cloud_count(), messages.len())?;
                let nested: Vec<Vec<Vec<Gf>>> = groups
                    .iter()
                    .map(|g| g.iter().map(|&j| messages[j].clone()).collect())
                    .collect();
                Ok(c.encode(&nested)?.segments.into_iter().flatten().collect())
            }
        }
    }

    pub fn decode_local(
        &self,
        cloud: usize,
        received: &[Option<Gf>],
    ) -> Result<Decoded, CodeError> {
        self.check(cloud)?;
        match self {
            LayeredCode::Dl(c) => c.decode_local(cloud, received),
            LayeredCode::Tl(c) => {
                let (x, i) = self.locate(c, cloud);
                c.decode_local(x, i, received)
            }
        }
    }

    /// `known` holds decoded codewords indexed by flat cloud.
    pub fn decode_middle(
        &self,
        cloud: usize,
        received: &[Option<Gf>],
        known: &[Option<Vec<Gf>>],
    ) -> Result<Decoded, CodeError> {
        self.check(cloud)?;
        match self {
            LayeredCode::Dl(_) => {
                Err(CodeError::InvalidParams("a two-level code has no middle access level".into()))
            }
            LayeredCode::Tl(c) => {
                let (x, i) = self.locate(c, cloud);
                let sib: Vec<Option<Vec<Gf>>> =
                    self.groups()[x].iter().map(|&j| known[j].clone()).collect();
                c.decode_middle(x, i, received, &sib)
            }
        }
    }

    pub fn decode_global(
        &self,
        cloud: usize,
        received: &[Option<Gf>],
        known: &[Option<Vec<Gf>>],
    ) -> Result<Decoded, CodeError> {
        self.check(cloud)?;
        match self {
            LayeredCode::Dl(c) => c.decode_global(cloud, received, known),
            LayeredCode::Tl(c) => {
                let (x, i) = self.locate(c, cloud);
                let nested: KnownClouds = self
                    .groups()
                    .iter()
                    .map(|g| g.iter().map(|&j| known[j].clone()).collect())
                    .collect();
                c.decode_global(x, i, received, &nested)
            }
        }
    }

    /// Decodes at the requested level.
    pub fn decode_at(
        &self,
        level: AccessLevel,
        cloud: usize,
        received: &[Option<Gf>],
        known: &[Option<Vec<Gf>>],
    ) -> Result<Decoded, CodeError> {
        match level {
            AccessLevel::Local => self.decode_local(cloud, received),
            AccessLevel::Middle => self.decode_middle(cloud, received, known),
            AccessLevel::Global => self.decode_global(cloud, received, known),
        }
    }
}
