//! Simulated multi-cloud storage: one codeword symbol per server, failure
//! injection, and a read planner that escalates local -> middle -> global.
//!
//! On disk a store is a directory holding `manifest.txt` and one file per
//! server under `shards/`, named after the cloud label and server number.
//! A shard file is a 16-byte header (`HCS1`, 8-byte prefix of the store's
//! origin hash, `u32` LE symbol index within the cloud) followed by the
//! symbol as a little-endian integer of `ceil(m/8)` bytes.
//!
//! The origin hash is the code hash the store was created with. It stays
//! fixed when the code is later scaled out or split, so shards of untouched
//! clouds keep their exact bytes.
//!
//! Manifest lines are `key = value`:
//!
//! | key           | value                                        |
//! |---------------|----------------------------------------------|
//! | `format`      | `hiercode-shards/1`                          |
//! | `spec_hash`   | hex SHA-256 of the current code config       |
//! | `origin_hash` | `spec_hash` when the store was created       |
//! | `codeword_id` | free-form label                              |
//! | `levels`      | 2 or 3                                       |
//! | `field_m`     | symbol width in bits                         |
//! | `groups`      | clouds per group, `;` between groups         |
//! | `servers`     | server count per cloud                       |
//! | `labels`      | cloud labels, used in shard file names       |
//! | `symbols`     | total shard count                            |
//! | `failed`      | failed global shard indices                  |
//! | `extra.*`     | caller metadata, e.g. padding                |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{AccessLevel, CodeError, DecodeTrace};
use crate::gf::Gf;
use crate::layered::LayeredCode;

const MAGIC: &[u8; 4] = b"HCS1";
const FORMAT: &str = "hiercode-shards/1";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no server with index {0}")]
    UnknownServer(usize),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Code(#[from] CodeError),
}

/// Groups of clouds of servers. Servers are numbered globally in codeword order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub levels: u8,
    pub groups: Vec<Vec<usize>>,
    pub servers: Vec<usize>,
    /// Stable cloud names; survive renumbering by scale-out and split.
    pub labels: Vec<String>,
}

impl Topology {
    pub fn from_code(code: &LayeredCode) -> Self {
        Topology {
            levels: code.levels(),
            groups: code.groups(),
            servers: (0..code.cloud_count()).map(|c| code.n(c)).collect(),
            labels: match code {
                LayeredCode::Dl(_) => (1..=code.cloud_count()).map(|c| c.to_string()).collect(),
                LayeredCode::Tl(_) => code
                    .groups()
                    .iter()
                    .enumerate()
                    .flat_map(|(x, g)| (1..=g.len()).map(move |i| format!("{}.{}", x + 1, i)))
                    .collect(),
            },
        }
    }

    /// Same layout, ignoring labels.
    pub fn same_shape(&self, other: &Topology) -> bool {
        self.levels == other.levels && self.groups == other.groups && self.servers == other.servers
    }

    /// Layout of `code` carrying these labels after splitting cloud `target`
    /// into two clouds at `target` and `target + 1`.
    pub fn after_split(&self, code: &LayeredCode, target: usize) -> Topology {
        let mut t = Topology::from_code(code);
        let mut labels = self.labels.clone();
        let base = labels[target].clone();
        labels.splice(target..=target, [format!("{base}a"), format!("{base}b")]);
        t.labels = labels;
        t
    }

    /// Layout of `code` carrying these labels plus one appended cloud.
    pub fn after_scale_out(&self, code: &LayeredCode) -> Topology {
        let mut t = Topology::from_code(code);
        let mut labels = self.labels.clone();
        // one past the largest leading number, so "1a", "1b", "2" gives "3"
        let lead = |l: &String| {
            l.chars()
                .take_while(char::is_ascii_digit)
                .collect::<String>()
                .parse::<usize>()
                .unwrap_or(0)
        };
        let mut next = labels.iter().map(lead).max().unwrap_or(0) + 1;
        while labels.contains(&next.to_string()) {
            next += 1;
        }
        labels.push(next.to_string());
        t.labels = labels;
        t
    }

    pub fn cloud_count(&self) -> usize {
        self.servers.len()
    }

    pub fn server_count(&self) -> usize {
        self.servers.iter().sum()
    }

    pub fn offset(&self, cloud: usize) -> usize {
        self.servers[..cloud].iter().sum()
    }

    pub fn global(&self, cloud: usize, server: usize) -> usize {
        self.offset(cloud) + server
    }

    /// `(cloud, server)` of a global index.
    pub fn locate(&self, global: usize) -> Option<(usize, usize)> {
        let mut rest = global;
        for (c, &n) in self.servers.iter().enumerate() {
            if rest < n {
                return Some((c, rest));
            }
            rest -= n;
        }
        None
    }
}

/// Which servers fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FailureModel {
    /// Fixed global server indices.
    Explicit { servers: Vec<usize> },
    /// `count` distinct random servers in every cloud.
    PerCloud { count: usize },
    /// `count` distinct random servers in one cloud.
    InCloud { cloud: usize, count: usize },
    /// Each server fails independently with probability `p`.
    Iid { p: f64 },
}

impl FailureModel {
    pub fn sample(&self, topo: &Topology, rng: &mut impl Rng) -> Result<Vec<usize>, StoreError> {
        let total = topo.server_count();
        let pick = |cloud: usize, count: usize, rng: &mut dyn rand::RngCore| {
            let n = topo.servers[cloud];
            if count > n {
                return Err(StoreError::InvalidInput(format!(
                    "cannot fail {count} of {n} servers in cloud {}",
                    cloud + 1
                )));
            }
            let mut chosen: Vec<usize> = rand::seq::index::sample(rng, n, count)
                .into_iter()
                .map(|s| topo.global(cloud, s))
                .collect();
            chosen.sort_unstable();
            Ok(chosen)
        };
        let mut out = match self {
            FailureModel::Explicit { servers } => {
                if let Some(&bad) = servers.iter().find(|&&s| s >= total) {
                    return Err(StoreError::UnknownServer(bad));
                }
                servers.clone()
            }
            FailureModel::PerCloud { count } => {
                let mut all = Vec::new();
                for c in 0..topo.cloud_count() {
                    all.extend(pick(c, *count, rng)?);
                }
                all
            }
            FailureModel::InCloud { cloud, count } => {
                if *cloud >= topo.cloud_count() {
                    return Err(StoreError::InvalidInput(format!("no cloud {}", cloud + 1)));
                }
                pick(*cloud, *count, rng)?
            }
            FailureModel::Iid { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(StoreError::InvalidInput(format!(
                        "probability {p} outside [0, 1]"
                    )));
                }
                (0..total).filter(|_| rng.gen_bool(*p)).collect()
            }
        };
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Anything the planner can read shards from.
pub trait ShardSource {
    fn topology(&self) -> &Topology;
    fn is_failed(&self, global: usize) -> bool;
    /// Reads one live shard. Never called for failed shards.
    fn read_shard(&self, global: usize) -> Result<Gf, StoreError>;
}

/// In-memory shards, used by trials.
#[derive(Debug, Clone)]
pub struct MemoryShards {
    topology: Topology,
    symbols: Vec<Gf>,
    failed: Vec<bool>,
}

impl MemoryShards {
    pub fn new(topology: Topology, segments: &[Vec<Gf>]) -> Result<Self, StoreError> {
        let symbols = flatten_checked(&topology, segments)?;
        let failed = vec![false; symbols.len()];
        Ok(MemoryShards { topology, symbols, failed })
    }

    pub fn fail(&mut self, servers: &[usize]) -> Result<(), StoreError> {
        mark_failed(&mut self.failed, servers)
    }
}

impl ShardSource for MemoryShards {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn is_failed(&self, global: usize) -> bool {
        self.failed[global]
    }

    fn read_shard(&self, global: usize) -> Result<Gf, StoreError> {
        Ok(self.symbols[global])
    }
}

fn flatten_checked(topology: &Topology, segments: &[Vec<Gf>]) -> Result<Vec<Gf>, StoreError> {
    if segments.is_empty() || segments.iter().all(Vec::is_empty) {
        return Err(StoreError::InvalidInput("empty codeword".into()));
    }
    if segments.len() != topology.cloud_count()
        || segments.iter().zip(&topology.servers).any(|(s, &n)| s.len() != n)
    {
        return Err(StoreError::InvalidInput(format!(
            "codeword segment lengths {:?} do not match servers {:?}",
            segments.iter().map(Vec::len).collect::<Vec<_>>(),
            topology.servers
        )));
    }
    Ok(segments.concat())
}

fn check_hash(hash: &str) -> Result<(), StoreError> {
    if hash.len() < 16 || hex::decode(&hash[..16]).is_err() {
        return Err(StoreError::InvalidInput("spec hash must be hex".into()));
    }
    Ok(())
}

fn check_labels(topology: &Topology) -> Result<(), StoreError> {
    let ok_char = |c: char| c.is_ascii_alphanumeric() || c == '.' || c == '-';
    let mut seen = std::collections::BTreeSet::new();
    if topology.labels.len() != topology.cloud_count() {
        return Err(StoreError::InvalidInput("one label per cloud required".into()));
    }
    for l in &topology.labels {
        if l.is_empty() || !l.chars().all(ok_char) || !seen.insert(l) {
            return Err(StoreError::InvalidInput(format!("bad or repeated cloud label {l:?}")));
        }
    }
    Ok(())
}

fn mark_failed(failed: &mut [bool], servers: &[usize]) -> Result<(), StoreError> {
    if let Some(&bad) = servers.iter().find(|&&s| s >= failed.len()) {
        return Err(StoreError::UnknownServer(bad));
    }
    for &s in servers {
        failed[s] = true;
    }
    Ok(())
}

/// Shards persisted under a directory.
#[derive(Debug, Clone)]
pub struct ShardStore {
    root: PathBuf,
    topology: Topology,
    spec_hash: String,
    origin_hash: String,
    codeword_id: String,
    field_m: u32,
    failed: Vec<bool>,
    extra: BTreeMap<String, String>,
}

impl ShardStore {
    /// Writes every shard and a fresh manifest, replacing earlier contents.
    pub fn store(
        root: &Path,
        topology: Topology,
        segments: &[Vec<Gf>],
        field_m: u32,
        spec_hash: &str,
        codeword_id: &str,
    ) -> Result<Self, StoreError> {
        let symbols = flatten_checked(&topology, segments)?;
        check_hash(spec_hash)?;
        check_labels(&topology)?;
        fs::create_dir_all(root.join("shards"))?;
        let store = ShardStore {
            root: root.to_path_buf(),
            topology,
            spec_hash: spec_hash.to_string(),
            origin_hash: spec_hash.to_string(),
            codeword_id: codeword_id.to_string(),
            field_m,
            failed: vec![false; symbols.len()],
            extra: BTreeMap::new(),
        };
        for (g, &s) in symbols.iter().enumerate() {
            fs::write(store.shard_path(g), store.encode_shard(g, s))?;
        }
        store.write_manifest()?;
        Ok(store)
    }

    /// Moves the store to a new code layout. Only shards whose bytes change
    /// are written; shards of vanished clouds are removed. Failure flags
    /// follow their `(label, server)`.
    pub fn update(
        &mut self,
        topology: Topology,
        segments: &[Vec<Gf>],
        spec_hash: &str,
    ) -> Result<Vec<PathBuf>, StoreError> {
        let symbols = flatten_checked(&topology, segments)?;
        check_hash(spec_hash)?;
        check_labels(&topology)?;
        let old_paths: Vec<PathBuf> =
            (0..self.topology.server_count()).map(|g| self.shard_path(g)).collect();
        let old_failed: Vec<PathBuf> =
            self.failed().into_iter().map(|g| self.shard_path(g)).collect();
        self.topology = topology;
        self.spec_hash = spec_hash.to_string();
        self.failed = vec![false; symbols.len()];
        let mut written = Vec::new();
        for (g, &s) in symbols.iter().enumerate() {
            let path = self.shard_path(g);
            self.failed[g] = old_failed.contains(&path);
            let bytes = self.encode_shard(g, s);
            if fs::read(&path).ok().as_deref() != Some(bytes.as_slice()) {
                fs::write(&path, bytes)?;
                written.push(path);
            }
        }
        let live: Vec<PathBuf> = (0..symbols.len()).map(|g| self.shard_path(g)).collect();
        for p in old_paths.iter().filter(|p| !live.contains(p)) {
            fs::remove_file(p)?;
        }
        self.write_manifest()?;
        Ok(written)
    }

    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(root.join("manifest.txt"))?;
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| StoreError::Corrupt(format!("manifest line {line:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            kv.get(k).cloned().ok_or_else(|| StoreError::Corrupt(format!("manifest lacks {k}")))
        };
        if get("format")? != FORMAT {
            return Err(StoreError::Corrupt("unknown manifest format".into()));
        }
        let nums = |s: &str| -> Result<Vec<usize>, StoreError> {
            s.split(',')
                .filter(|t| !t.is_empty())
                .map(|t| t.trim().parse().map_err(|_| StoreError::Corrupt(format!("number {t:?}"))))
                .collect()
        };
        let groups = get("groups")?.split(';').map(nums).collect::<Result<Vec<_>, _>>()?;
        let servers = nums(&get("servers")?)?;
        let levels = get("levels")?.parse().map_err(|_| StoreError::Corrupt("levels".into()))?;
        let field_m = get("field_m")?.parse().map_err(|_| StoreError::Corrupt("field_m".into()))?;
        let labels: Vec<String> = get("labels")?.split(',').map(str::to_string).collect();
        if labels.len() != servers.len() {
            return Err(StoreError::Corrupt("labels and servers differ in length".into()));
        }
        let topology = Topology { levels, groups, servers, labels };
        let total: usize =
            get("symbols")?.parse().map_err(|_| StoreError::Corrupt("symbols".into()))?;
        if total != topology.server_count() {
            return Err(StoreError::Corrupt(format!(
                "manifest lists {total} symbols but {} servers",
                topology.server_count()
            )));
        }
        let mut failed = vec![false; total];
        mark_failed(&mut failed, &nums(&get("failed")?)?)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let extra = kv
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(ShardStore {
            root: root.to_path_buf(),
            topology,
            spec_hash: get("spec_hash")?,
            origin_hash: get("origin_hash")?,
            codeword_id: get("codeword_id")?,
            field_m,
            failed,
            extra,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn spec_hash(&self) -> &str {
        &self.spec_hash
    }

    pub fn origin_hash(&self) -> &str {
        &self.origin_hash
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn codeword_id(&self) -> &str {
        &self.codeword_id
    }

    pub fn failed(&self) -> Vec<usize> {
        (0..self.failed.len()).filter(|&g| self.failed[g]).collect()
    }

    pub fn extra(&self) -> &BTreeMap<String, String> {
        &self.extra
    }

    pub fn set_extra(&mut self, key: &str, value: &str) -> Result<(), StoreError> {
        self.extra.insert(key.to_string(), value.to_string());
        self.write_manifest()
    }

    pub fn shard_path(&self, global: usize) -> PathBuf {
        let (c, s) = self.topology.locate(global).expect("index within topology");
        let label = &self.topology.labels[c];
        self.root.join("shards").join(format!("c{label}_s{:03}.shard", s + 1))
    }

    fn width(&self) -> usize {
        (self.field_m as usize).div_ceil(8)
    }

    fn hash_prefix(&self) -> [u8; 8] {
        let bytes = hex::decode(&self.origin_hash[..16]).expect("validated hex");
        bytes.try_into().expect("8 bytes")
    }

    fn encode_shard(&self, global: usize, symbol: Gf) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.width());
        out.extend(MAGIC);
        out.extend(self.hash_prefix());
        let (_, server) = self.topology.locate(global).expect("index within topology");
        out.extend((server as u32).to_le_bytes());
        out.extend(&symbol.0.to_le_bytes()[..self.width()]);
        out
    }

    fn write_manifest(&self) -> Result<(), StoreError> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut text = String::new();
        let mut line = |k: &str, v: &str| text.push_str(&format!("{k} = {v}\n"));
        line("format", FORMAT);
        line("spec_hash", &self.spec_hash);
        line("origin_hash", &self.origin_hash);
        line("codeword_id", &self.codeword_id);
        line("levels", &self.topology.levels.to_string());
        line("field_m", &self.field_m.to_string());
        line("groups", &self.topology.groups.iter().map(|g| list(g)).collect::<Vec<_>>().join(";"));
        line("servers", &list(&self.topology.servers));
        line("labels", &self.topology.labels.join(","));
        line("symbols", &self.topology.server_count().to_string());
        line("failed", &list(&self.failed()));
        for (k, v) in &self.extra {
            line(&format!("extra.{k}"), v);
        }
        fs::write(self.root.join("manifest.txt"), text)?;
        Ok(())
    }

    /// Marks servers failed, persisting the flags. Returns the newly failed set.
    pub fn fail_servers(
        &mut self,
        model: &FailureModel,
        seed: u64,
    ) -> Result<Vec<usize>, StoreError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen = model.sample(&self.topology, &mut rng)?;
        let fresh: Vec<usize> = chosen.iter().copied().filter(|&g| !self.failed[g]).collect();
        mark_failed(&mut self.failed, &chosen)?;
        self.write_manifest()?;
        Ok(fresh)
    }

    /// Clears every failure flag.
    pub fn heal(&mut self) -> Result<(), StoreError> {
        self.failed.iter_mut().for_each(|f| *f = false);
        self.write_manifest()
    }
}

impl ShardSource for ShardStore {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn is_failed(&self, global: usize) -> bool {
        self.failed[global]
    }

    fn read_shard(&self, global: usize) -> Result<Gf, StoreError> {
        let bytes = fs::read(self.shard_path(global))?;
        if bytes.len() != HEADER_LEN + self.width() {
            return Err(StoreError::Corrupt(format!("shard {global} has {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC || bytes[4..12] != self.hash_prefix() {
            return Err(StoreError::Corrupt(format!("shard {global} belongs to another code")));
        }
        let idx = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
        let (_, server) = self.topology.locate(global).expect("index within topology");
        if idx as usize != server {
            return Err(StoreError::Corrupt(format!("shard {global} carries index {idx}")));
        }
        let mut raw = [0u8; 2];
        raw[..self.width()].copy_from_slice(&bytes[HEADER_LEN..]);
        let v = u16::from_le_bytes(raw);
        if u32::from(v) >> self.field_m != 0 {
            return Err(StoreError::Corrupt(format!("shard {global} symbol {v} too wide")));
        }
        Ok(Gf(v))
    }
}

/// One shard access: which server, and whether it held a live symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoRecord {
    pub cloud: usize,
    pub server: usize,
    pub live: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    pub level: AccessLevel,
    /// Cumulative live shards read when this stage was attempted.
    pub symbols_read: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadReport {
    /// 0-based flat cloud index.
    pub cloud: usize,
    pub success: bool,
    pub level: Option<AccessLevel>,
    pub symbols_read: usize,
    pub servers_contacted: usize,
    pub message: Option<Vec<Gf>>,
    pub stages: Vec<StageCost>,
    /// Why each lower level was not enough.
    pub reasons: Vec<String>,
    pub io: Vec<IoRecord>,
    /// Intermediate values of the decode that recovered the target.
    pub trace: Option<DecodeTrace>,
}

struct Reader<'a, S: ShardSource> {
    src: &'a S,
    code: &'a LayeredCode,
    received: Vec<Option<Vec<Option<Gf>>>>,
    decoded: Vec<Option<Vec<Gf>>>,
    traces: Vec<Option<DecodeTrace>>,
    io: Vec<IoRecord>,
}

impl<S: ShardSource> Reader<'_, S> {
    fn load(&mut self, cloud: usize) -> Result<(), StoreError> {
        if self.received[cloud].is_some() {
            return Ok(());
        }
        let topo = self.src.topology();
        let mut word = Vec::with_capacity(topo.servers[cloud]);
        for s in 0..topo.servers[cloud] {
            let g = topo.global(cloud, s);
            let live = !self.src.is_failed(g);
            word.push(if live { Some(self.src.read_shard(g)?) } else { None });
            self.io.push(IoRecord { cloud, server: s, live });
        }
        self.received[cloud] = Some(word);
        Ok(())
    }

    fn symbols_read(&self) -> usize {
        self.io.iter().filter(|r| r.live).count()
    }

    fn try_decode(&mut self, level: AccessLevel, cloud: usize) -> Result<(), CodeError> {
        if self.decoded[cloud].is_some() {
            return Ok(());
        }
        let word = self.received[cloud].as_ref().expect("cloud loaded before decode");
        let d = self.code.decode_at(level, cloud, word, &self.decoded)?;
        self.decoded[cloud] = Some(d.codeword);
        self.traces[cloud] = Some(d.trace);
        Ok(())
    }

    /// Decodes other clouds at the lowest level that works, repeating while
    /// new clouds become available.
    fn peel(&mut self, target: usize) {
        loop {
            let mut progress = false;
            for c in (0..self.code.cloud_count()).filter(|&c| c != target) {
                if self.decoded[c].is_some() {
                    continue;
                }
                let ok = self.try_decode(AccessLevel::Local, c).is_ok()
                    || (self.code.levels() == 3 && self.try_decode(AccessLevel::Middle, c).is_ok());
                progress |= ok;
            }
            if !progress {
                break;
            }
        }
    }
}

/// Reads cloud `target`, escalating only as far as needed.
pub fn read<S: ShardSource>(
    src: &S,
    code: &LayeredCode,
    target: usize,
) -> Result<ReadReport, StoreError> {
    if target >= code.cloud_count() {
        return Err(CodeError::UnknownCloud(target).into());
    }
    if !src.topology().same_shape(&Topology::from_code(code)) {
        return Err(StoreError::InvalidInput("store topology does not match the code".into()));
    }
    let p = code.cloud_count();
    let mut r = Reader {
        src,
        code,
        received: vec![None; p],
        decoded: vec![None; p],
        traces: vec![None; p],
        io: Vec::new(),
    };
    let mut stages = Vec::new();
    let mut reasons = Vec::new();
    let mut level = None;

    r.load(target)?;
    stages.push(StageCost { level: AccessLevel::Local, symbols_read: r.symbols_read() });
    match r.try_decode(AccessLevel::Local, target) {
        Ok(()) => level = Some(AccessLevel::Local),
        Err(e) => reasons.push(format!("local: {e}")),
    }

    if level.is_none() && code.levels() == 3 {
        let sibs = code.siblings(target);
        for &s in &sibs {
            r.load(s)?;
        }
        stages.push(StageCost { level: AccessLevel::Middle, symbols_read: r.symbols_read() });
        let mut sib_err = None;
        for &s in &sibs {
            if let Err(e) = r.try_decode(AccessLevel::Local, s) {
                sib_err =
                    Some(format!("middle: sibling cloud {} not locally decodable: {e}", s + 1));
                break;
            }
        }
        match sib_err {
            Some(e) => reasons.push(e),
            None => match r.try_decode(AccessLevel::Middle, target) {
                Ok(()) => level = Some(AccessLevel::Middle),
                Err(e) => reasons.push(format!("middle: {e}")),
            },
        }
    }

    if level.is_none() {
        for c in 0..p {
            r.load(c)?;
        }
        stages.push(StageCost { level: AccessLevel::Global, symbols_read: r.symbols_read() });
        r.peel(target);
        match r.try_decode(AccessLevel::Global, target) {
            Ok(()) => level = Some(AccessLevel::Global),
            Err(e) => reasons.push(format!("global: {e}")),
        }
    }

    let message = r.decoded[target].as_ref().map(|c| c[..code.k(target)].to_vec());
    Ok(ReadReport {
        cloud: target,
        success: level.is_some(),
        level,
        symbols_read: r.symbols_read(),
        servers_contacted: r.io.len(),
        message,
        stages,
        reasons,
        trace: r.traces[target].take(),
        io: r.io,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: usize,
    pub local: usize,
    pub middle: usize,
    pub global: usize,
    pub unrecoverable: usize,
    pub mean_symbols_read: f64,
    pub mean_servers_contacted: f64,
    pub failure_rate: f64,
}

impl TrialStats {
    pub fn from_reports(reports: &[ReadReport]) -> Self {
        let count = |l| reports.iter().filter(|r| r.level == Some(l)).count();
        let n = reports.len().max(1) as f64;
        let unrecoverable = reports.iter().filter(|r| !r.success).count();
        TrialStats {
            trials: reports.len(),
            local: count(AccessLevel::Local),
            middle: count(AccessLevel::Middle),
            global: count(AccessLevel::Global),
            unrecoverable,
            mean_symbols_read: reports.iter().map(|r| r.symbols_read).sum::<usize>() as f64 / n,
            mean_servers_contacted: reports.iter().map(|r| r.servers_contacted).sum::<usize>()
                as f64
                / n,
            failure_rate: unrecoverable as f64 / n,
        }
    }
}

/// Per-trial generator: stream `trial` of the ChaCha8 sequence for `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs independent trials: random messages, sampled failures, one read of
/// `target`. Reports come back in trial order regardless of scheduling.
pub fn run_trials(
    code: &LayeredCode,
    model: &FailureModel,
    target: usize,
    trials: usize,
    seed: u64,
) -> Result<(Vec<ReadReport>, TrialStats), StoreError> {
    if trials == 0 {
        return Err(StoreError::InvalidInput("trials must be at least 1".into()));
    }
    let topo = Topology::from_code(code);
    let q = code.field().order() as u16;
    let reports = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let messages: Vec<Vec<Gf>> = (0..code.cloud_count())
                .map(|c| (0..code.k(c)).map(|_| Gf(rng.gen_range(0..q))).collect())
                .collect();
            let mut shards = MemoryShards::new(topo.clone(), &code.encode(&messages)?)?;
            shards.fail(&model.sample(&topo, &mut rng)?)?;
            let report = read(&shards, code, target)?;
            if let Some(m) = &report.message {
                if *m != messages[target] {
                    return Err(StoreError::Corrupt(format!("trial {t} decoded a wrong message")));
                }
            }
            Ok(report)
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let stats = TrialStats::from_reports(&reports);
    Ok((reports, stats))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::code::CloudParams;
    use crate::dl::tests::example3;
    use crate::dl::{DlCode, DlParams};
    use crate::gf::Field;
    use crate::tl::tests::{example4, example4_messages};

    const HASH: &str = "00112233445566778899aabbccddeeff";

    fn ex3() -> (LayeredCode, Vec<Vec<Gf>>, Vec<Vec<Gf>>) {
        let code = LayeredCode::Dl(example3());
        let f = code.field().clone();
        let m = vec![
            vec![Gf::ONE, f.beta_pow(1), f.beta_pow(2)],
            vec![f.beta_pow(1), Gf::ONE, Gf::ZERO],
        ];
        let cw = code.encode(&m).unwrap();
        (code, m, cw)
    }

    /// Four clouds, n = 4, k = 2, only the first carrying cross parity:
    /// d1 = 2 and d2 = 3 for cloud 1.
    pub(crate) fn narrative_code() -> LayeredCode {
        let c = CloudParams::new;
        let params =
            DlParams::new(Field::gf16(), vec![c(4, 2, 1), c(4, 2, 0), c(4, 2, 0), c(4, 2, 0)])
                .unwrap();
        LayeredCode::Dl(DlCode::build(params, None).unwrap())
    }

    fn uniform_code(p: usize) -> LayeredCode {
        let clouds = vec![CloudParams::new(6, 3, 1); p];
        LayeredCode::Dl(DlCode::build(DlParams::new(Field::gf16(), clouds).unwrap(), None).unwrap())
    }

    #[test]
    fn labels_follow_split_and_scale_out() {
        let topo = Topology::from_code(&uniform_code(2));
        assert_eq!(topo.labels, ["1", "2"]);
        let grown = topo.after_scale_out(&uniform_code(3));
        assert_eq!(grown.labels, ["1", "2", "3"]);
        let split = grown.after_split(&uniform_code(4), 0);
        assert_eq!(split.labels, ["1a", "1b", "2", "3"]);
        assert_eq!(split.after_scale_out(&uniform_code(5)).labels, ["1a", "1b", "2", "3", "4"]);
    }

    #[test]
    fn store_writes_one_file_per_server() {
        let (code, _, cw) = ex3();
        let dir = tempfile::tempdir().unwrap();
        let topo = Topology::from_code(&code);
        let s = ShardStore::store(dir.path(), topo.clone(), &cw, 4, HASH, "ex3").unwrap();
        assert_eq!(fs::read_dir(dir.path().join("shards")).unwrap().count(), 12);
        let bytes = fs::read(s.shard_path(7)).unwrap();
        assert_eq!(bytes.len(), 17);
        assert_eq!(&bytes[..4], b"HCS1");
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert!(s.shard_path(7).ends_with("c2_s002.shard"));
        assert_eq!(Gf(u16::from(bytes[16])), cw[1][1]);

        let again = ShardStore::store(dir.path(), topo.clone(), &cw, 4, HASH, "ex3").unwrap();
        assert_eq!(fs::read(again.shard_path(7)).unwrap(), bytes);
        assert!(matches!(
            ShardStore::store(dir.path(), topo, &[vec![], vec![]], 4, HASH, "x"),
            Err(StoreError::InvalidInput(_))
        ));

        let tl = LayeredCode::Tl(example4());
        let f = tl.field().clone();
        let flat: Vec<Vec<Gf>> = example4_messages(&f).into_iter().flatten().collect();
        let dir = tempfile::tempdir().unwrap();
        ShardStore::store(
            dir.path(),
            Topology::from_code(&tl),
            &tl.encode(&flat).unwrap(),
            4,
            HASH,
            "ex4",
        )
        .unwrap();
        assert_eq!(fs::read_dir(dir.path().join("shards")).unwrap().count(), 24);
    }

    #[test]
    fn manifest_round_trips_failures() {
        let (code, m, cw) = ex3();
        let dir = tempfile::tempdir().unwrap();
        let mut s =
            ShardStore::store(dir.path(), Topology::from_code(&code), &cw, 4, HASH, "ex3").unwrap();
        s.set_extra("padding", "3").unwrap();
        let fresh = s.fail_servers(&FailureModel::Explicit { servers: vec![1, 3] }, 0).unwrap();
        assert_eq!(fresh, vec![1, 3]);
        let opened = ShardStore::open(dir.path()).unwrap();
        assert_eq!(opened.failed(), vec![1, 3]);
        assert_eq!(opened.extra()["padding"], "3");
        let rep = read(&opened, &code, 0).unwrap();
        assert_eq!(rep.level, Some(AccessLevel::Local));
        assert_eq!(rep.message.as_ref(), Some(&m[0]));
        assert_eq!(rep.symbols_read, 4);
        assert!(rep.io.iter().all(|r| r.live || [1, 3].contains(&r.server)));
        assert!(matches!(
            s.fail_servers(&FailureModel::Explicit { servers: vec![12] }, 0),
            Err(StoreError::UnknownServer(12))
        ));
    }

    #[test]
    fn corrupt_shard_is_detected() {
        let (code, _, cw) = ex3();
        let dir = tempfile::tempdir().unwrap();
        let s =
            ShardStore::store(dir.path(), Topology::from_code(&code), &cw, 4, HASH, "ex3").unwrap();
        let mut bytes = fs::read(s.shard_path(2)).unwrap();
        bytes[5] ^= 1;
        fs::write(s.shard_path(2), bytes).unwrap();
        assert!(matches!(read(&s, &code, 0), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn example3_two_erasures_stay_local() {
        let (code, m, cw) = ex3();
        // every pair of failures in cloud 1 is within d1 - 1 = 2
        for a in 0..6 {
            for b in a + 1..6 {
                let mut s = MemoryShards::new(Topology::from_code(&code), &cw).unwrap();
                s.fail(&[a, b]).unwrap();
                let rep = read(&s, &code, 0).unwrap();
                assert_eq!(rep.level, Some(AccessLevel::Local));
                assert_eq!(rep.symbols_read, 4);
                assert_eq!(rep.servers_contacted, 6);
                assert_eq!(rep.message.as_ref(), Some(&m[0]));
            }
        }
        let mut s = MemoryShards::new(Topology::from_code(&code), &cw).unwrap();
        s.fail(&[0, 1, 2]).unwrap();
        let rep = read(&s, &code, 0).unwrap();
        assert_eq!(rep.level, Some(AccessLevel::Global));
        assert_eq!((rep.symbols_read, rep.servers_contacted), (9, 12));
    }

    #[test]
    fn example4_three_erasures_use_middle() {
        let code = LayeredCode::Tl(example4());
        let f = code.field().clone();
        let flat: Vec<Vec<Gf>> = example4_messages(&f).into_iter().flatten().collect();
        let mut s =
            MemoryShards::new(Topology::from_code(&code), &code.encode(&flat).unwrap()).unwrap();
        s.fail(&[0, 3, 4]).unwrap();
        let rep = read(&s, &code, 0).unwrap();
        assert_eq!(rep.level, Some(AccessLevel::Middle));
        assert_eq!(rep.servers_contacted, 12);
        assert_eq!(rep.symbols_read, 9);
        assert_eq!(rep.message.as_ref(), Some(&flat[0]));
        assert_eq!(rep.stages.len(), 2);
    }

    #[test]
    fn narrative_one_failure_local_two_global() {
        let code = narrative_code();
        let d = code.distance_matrix();
        assert_eq!((d.rows[0][0], d.rows[1][0]), (2, 3));
        let m: Vec<Vec<Gf>> = (0..4).map(|c| vec![Gf(c + 1), Gf(7)]).collect();
        let cw = code.encode(&m).unwrap();
        let topo = Topology::from_code(&code);
        let mut s = MemoryShards::new(topo.clone(), &cw).unwrap();
        s.fail(&[1]).unwrap();
        let rep = read(&s, &code, 0).unwrap();
        assert_eq!((rep.level, rep.servers_contacted), (Some(AccessLevel::Local), 4));
        s.fail(&[2]).unwrap();
        let rep = read(&s, &code, 0).unwrap();
        assert_eq!((rep.level, rep.servers_contacted), (Some(AccessLevel::Global), 16));
        assert_eq!(rep.message.as_ref(), Some(&m[0]));
        s.fail(&[3]).unwrap();
        assert!(!read(&s, &code, 0).unwrap().success);
    }

    #[test]
    fn trials_edge_probabilities() {
        let (code, _, _) = ex3();
        let (_, st) = run_trials(&code, &FailureModel::Iid { p: 0.0 }, 0, 50, 9).unwrap();
        assert_eq!((st.local, st.trials), (50, 50));
        let (_, st) = run_trials(&code, &FailureModel::Iid { p: 1.0 }, 0, 50, 9).unwrap();
        assert_eq!(st.unrecoverable, 50);
        let (_, st) =
            run_trials(&code, &FailureModel::InCloud { cloud: 0, count: 2 }, 0, 200, 9).unwrap();
        assert_eq!(st.local, 200);
        assert!(run_trials(&code, &FailureModel::Iid { p: 0.5 }, 0, 0, 9).is_err());
        assert!(run_trials(&code, &FailureModel::Iid { p: 1.5 }, 0, 1, 9).is_err());
    }

    #[test]
    fn trials_are_deterministic() {
        let code = LayeredCode::Tl(example4());
        let model = FailureModel::Iid { p: 0.25 };
        let (a, sa) = run_trials(&code, &model, 1, 300, 42).unwrap();
        let (b, sb) = run_trials(&code, &model, 1, 300, 42).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_eq!(sa, sb);
        let (c, _) = run_trials(&code, &model, 1, 300, 43).unwrap();
        assert_ne!(a, c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn level_rank(r: &ReadReport) -> u8 {
            match r.level {
                Some(AccessLevel::Local) => 0,
                Some(AccessLevel::Middle) => 1,
                Some(AccessLevel::Global) => 2,
                None => 3,
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]
            #[test]
            fn fewer_failures_never_escalate(mask in any::<u32>(), drop in any::<prop::sample::Index>(), seed in any::<u64>()) {
                let code = LayeredCode::Tl(example4());
                let topo = Topology::from_code(&code);
                let mut rng = trial_rng(seed, 0);
                let m: Vec<Vec<Gf>> = (0..4).map(|_| (0..3).map(|_| Gf(rand::Rng::gen_range(&mut rng, 0..16))).collect()).collect();
                let cw = code.encode(&m).unwrap();
                let failed: Vec<usize> = (0..24).filter(|i| mask >> i & 1 == 1).collect();
                prop_assume!(!failed.is_empty());
                let mut full = MemoryShards::new(topo.clone(), &cw).unwrap();
                full.fail(&failed).unwrap();
                let mut fewer = failed.clone();
                fewer.remove(drop.index(fewer.len()));
                let mut sub = MemoryShards::new(topo, &cw).unwrap();
                sub.fail(&fewer).unwrap();
                let a = read(&full, &code, 0).unwrap();
                let b = read(&sub, &code, 0).unwrap();
                prop_assert!(level_rank(&b) <= level_rank(&a));
                prop_assert!(a.stages.windows(2).all(|w| w[0].symbols_read <= w[1].symbols_read));
                if a.success {
                    prop_assert_eq!(a.message.as_ref(), Some(&m[0]));
                }
                let live = a.io.iter().filter(|r| r.live).count();
                prop_assert_eq!(live, a.symbols_read);
            }

            #[test]
            fn round_trip_without_failures(raw in proptest::collection::vec(0u16..16, 12)) {
                let code = LayeredCode::Tl(example4());
                let m: Vec<Vec<Gf>> = raw.chunks(3).map(|c| c.iter().map(|&v| Gf(v)).collect()).collect();
                let s = MemoryShards::new(Topology::from_code(&code), &code.encode(&m).unwrap()).unwrap();
                for t in 0..4 {
                    let rep = read(&s, &code, t).unwrap();
                    prop_assert_eq!(rep.level, Some(AccessLevel::Local));
                    prop_assert_eq!(rep.message.as_ref(), Some(&m[t]));
                }
            }
        }
    }
}
