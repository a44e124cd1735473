//! Subcommand bodies. Each is a thin wrapper over one library operation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hiercode::code::{AccessLevel, CloudParams};
use hiercode::config::CodeSpecConfig;
use hiercode::dl::{DlCode, DlCodeword};
use hiercode::dynamics::{self, SplitSpec};
use hiercode::gf::Gf;
use hiercode::layered::LayeredCode;
use hiercode::simstore::{self, FailureModel, ReadReport, ShardStore, Topology};
use serde::Serialize;

use crate::error::{Category, CliError};
use crate::pack;
use crate::ModelArgs;

type Result<T> = std::result::Result<T, CliError>;

const FILE_BYTES: &str = "file_bytes";
const PADDING_BITS: &str = "padding_bits";
const STRIPES: &str = "stripes";
const DATA_CLOUDS: &str = "data_clouds";

struct Loaded {
    config: CodeSpecConfig,
    code: LayeredCode,
    /// Hash of the fully spelled-out config, so equivalent inputs agree.
    hash: String,
}

fn load_code(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config("Unreadable", format!("{}: {e}", path.display())))?;
    let config = CodeSpecConfig::parse(&text)?;
    let code = config.build()?;
    let hash = CodeSpecConfig::from_code(&code, config.seed).hash().to_string();
    Ok(Loaded { config, code, hash })
}

fn write_artifact(path: &Path, code: &LayeredCode, seed: Option<u64>) -> Result<String> {
    let cfg = CodeSpecConfig::from_code(code, seed);
    fs::write(path, cfg.to_toml())?;
    Ok(cfg.hash().to_string())
}

fn emit<T: Serialize>(event: &str, value: &T) {
    let line = serde_json::json!({ "event": event, "data": value });
    eprintln!("{line}");
}

fn render(code: &LayeredCode, symbols: &[Gf]) -> String {
    let f = code.field();
    symbols.iter().map(|&s| f.power_notation(s)).collect::<Vec<_>>().join(", ")
}

/// Resolves a label, a 1-based flat index, or `x,i`.
fn resolve_cloud(topo: &Topology, spec: &str) -> Result<usize> {
    if let Some(c) = topo.labels.iter().position(|l| l == spec) {
        return Ok(c);
    }
    if let Some((x, i)) = spec.split_once(',') {
        let dotted = format!("{}.{}", x.trim(), i.trim());
        if let Some(c) = topo.labels.iter().position(|l| *l == dotted) {
            return Ok(c);
        }
    }
    match spec.parse::<usize>() {
        Ok(j) if j >= 1 && j <= topo.cloud_count() => Ok(j - 1),
        _ => Err(CliError::config("UnknownCloud", format!("no cloud {spec:?}"))),
    }
}

fn parse_params(spec: &str) -> Result<CloudParams> {
    let nums: Vec<usize> =
        spec.split(',').map(|t| t.trim().parse()).collect::<std::result::Result<_, _>>().map_err(
            |_| CliError::config("BadParams", format!("expected n,k,delta, got {spec:?}")),
        )?;
    match nums[..] {
        [n, k, delta] => Ok(CloudParams::new(n, k, delta)),
        _ => Err(CliError::config("BadParams", format!("expected n,k,delta, got {spec:?}"))),
    }
}

fn failure_model(args: &ModelArgs, topo: &Topology) -> Result<FailureModel> {
    if let Some(list) = &args.servers {
        let mut servers = Vec::new();
        for item in list.split(',').filter(|s| !s.trim().is_empty()) {
            let bad =
                || CliError::config("BadServer", format!("expected CLOUD/SERVER, got {item:?}"));
            let (c, s) = item.trim().rsplit_once('/').ok_or_else(bad)?;
            let cloud = resolve_cloud(topo, c)?;
            let s: usize = s.parse().map_err(|_| bad())?;
            if s == 0 || s > topo.servers[cloud] {
                return Err(bad());
            }
            servers.push(topo.global(cloud, s - 1));
        }
        return Ok(FailureModel::Explicit { servers });
    }
    if let Some(count) = args.per_cloud {
        return Ok(FailureModel::PerCloud { count });
    }
    if let Some(spec) = &args.in_cloud {
        let (c, n) = spec.rsplit_once(':').ok_or_else(|| {
            CliError::config("BadModel", format!("expected CLOUD:COUNT, got {spec:?}"))
        })?;
        let count = n
            .parse()
            .map_err(|_| CliError::config("BadModel", format!("bad count in {spec:?}")))?;
        return Ok(FailureModel::InCloud { cloud: resolve_cloud(topo, c)?, count });
    }
    let p = args.iid.expect("clap requires one model");
    Ok(FailureModel::Iid { p })
}

fn stripe_dir(root: &Path, s: usize) -> PathBuf {
    root.join(format!("stripe-{s:04}"))
}

fn open_stripes(root: &Path) -> Result<Vec<ShardStore>> {
    let first = ShardStore::open(&stripe_dir(root, 0))?;
    let count: usize =
        first.extra().get(STRIPES).and_then(|v| v.parse().ok()).ok_or_else(|| {
            CliError::new(Category::Io, "Corrupt", "manifest lacks the stripe count")
        })?;
    let mut out = vec![first];
    for s in 1..count {
        out.push(ShardStore::open(&stripe_dir(root, s))?);
    }
    Ok(out)
}

fn check_hash(store: &ShardStore, loaded: &Loaded) -> Result<()> {
    if store.spec_hash() != loaded.hash {
        return Err(CliError::config(
            "CodeMismatch",
            format!("{} was written with another code", store.root().display()),
        ));
    }
    Ok(())
}

fn data_clouds(store: &ShardStore) -> Result<Vec<String>> {
    let v = store
        .extra()
        .get(DATA_CLOUDS)
        .ok_or_else(|| CliError::new(Category::Io, "Corrupt", "manifest lacks data clouds"))?;
    Ok(v.split(',').map(str::to_string).collect())
}

fn extra_usize(store: &ShardStore, key: &str) -> Result<usize> {
    store
        .extra()
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::new(Category::Io, "Corrupt", format!("manifest lacks {key}")))
}

fn read_cloud(
    store: &ShardStore,
    code: &LayeredCode,
    cloud: usize,
    verbose: bool,
) -> Result<ReadReport> {
    let report = simstore::read(store, code, cloud)?;
    if verbose {
        emit("read", &report);
        if let Some(t) = &report.trace {
            eprint!("{}", t.render(code.field()));
        }
    }
    Ok(report)
}

fn describe(report: &ReadReport, label: &str) -> String {
    match report.level {
        Some(level) => format!(
            "cloud {label}: recovered at {level} level; {} symbols read, {} servers contacted",
            report.symbols_read, report.servers_contacted
        ),
        None => format!("cloud {label}: unrecoverable ({})", report.reasons.join("; ")),
    }
}

/// Decodes every cloud and re-encodes, giving the full stored codeword.
fn recover_codeword(store: &ShardStore, code: &LayeredCode, verbose: bool) -> Result<Vec<Vec<Gf>>> {
    let mut messages = Vec::new();
    for c in 0..code.cloud_count() {
        let r = read_cloud(store, code, c, verbose)?;
        let label = &store.topology().labels[c];
        let m = r
            .message
            .clone()
            .ok_or_else(|| CliError::decode("Unrecoverable", describe(&r, label)))?;
        messages.push(m);
    }
    Ok(code.encode(&messages)?)
}

fn two_level(code: &LayeredCode) -> Result<&DlCode> {
    match code {
        LayeredCode::Dl(c) => Ok(c),
        LayeredCode::Tl(_) => Err(CliError::config(
            "Unsupported",
            "scale-out and split are defined for two-level codes",
        )),
    }
}

pub fn build(config: &Path, out: Option<&Path>) -> Result<()> {
    let loaded = load_code(config)?;
    print!("{}", loaded.code.distance_matrix());
    println!("hash {}", loaded.hash);
    if let Some(out) = out {
        write_artifact(out, &loaded.code, loaded.config.seed)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn encode(code_path: &Path, input: &Path, out: &Path) -> Result<()> {
    let loaded = load_code(code_path)?;
    let code = &loaded.code;
    let bytes = fs::read(input)?;
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        return Err(CliError::config("OutputExists", format!("{} is not empty", out.display())));
    }
    let m = code.field().m();
    let stripe_len = code.total_k();
    let (symbols, padding) = pack::pack(&bytes, m, stripe_len);
    let stripes = symbols.len() / stripe_len;
    let topo = Topology::from_code(code);
    for (s, chunk) in symbols.chunks(stripe_len).enumerate() {
        let mut rest = chunk;
        let messages: Vec<Vec<Gf>> = (0..code.cloud_count())
            .map(|c| {
                let (head, tail) = rest.split_at(code.k(c));
                rest = tail;
                head.to_vec()
            })
            .collect();
        let segments = code.encode(&messages)?;
        let id = format!("stripe-{s:04}");
        let mut store =
            ShardStore::store(&stripe_dir(out, s), topo.clone(), &segments, m, &loaded.hash, &id)?;
        store.set_extra(FILE_BYTES, &bytes.len().to_string())?;
        store.set_extra(PADDING_BITS, &padding.to_string())?;
        store.set_extra(STRIPES, &stripes.to_string())?;
        store.set_extra(DATA_CLOUDS, &topo.labels.join(","))?;
    }
    println!(
        "encoded {} bytes into {stripes} stripe(s) of {} shards ({padding} padding bits)",
        bytes.len(),
        topo.server_count()
    );
    Ok(())
}

pub fn read(
    code_path: &Path,
    shards: &Path,
    cloud: Option<&str>,
    stripe: Option<usize>,
    out: Option<&Path>,
    verbose: bool,
) -> Result<()> {
    let loaded = load_code(code_path)?;
    let code = &loaded.code;
    let stores = open_stripes(shards)?;
    let chosen: Vec<usize> = match stripe {
        Some(s) if s < stores.len() => vec![s],
        Some(s) => return Err(CliError::config("UnknownStripe", format!("no stripe {s}"))),
        None => (0..stores.len()).collect(),
    };
    for &s in &chosen {
        check_hash(&stores[s], &loaded)?;
    }

    if let Some(spec) = cloud {
        let mut failed = false;
        for &s in &chosen {
            let store = &stores[s];
            let c = resolve_cloud(store.topology(), spec)?;
            let r = read_cloud(store, code, c, verbose)?;
            println!("stripe {s:04} {}", describe(&r, &store.topology().labels[c]));
            match &r.message {
                Some(m) => println!("message ({})", render(code, m)),
                None => failed = true,
            }
        }
        return if failed {
            Err(CliError::decode("Unrecoverable", format!("cloud {spec} could not be read")))
        } else {
            Ok(())
        };
    }

    let len = extra_usize(&stores[0], FILE_BYTES)?;
    let mut symbols = Vec::new();
    let mut log = Vec::new();
    for &s in &chosen {
        let store = &stores[s];
        for label in data_clouds(store)? {
            let c = resolve_cloud(store.topology(), &label)?;
            let r = read_cloud(store, code, c, verbose)?;
            log.push(format!("stripe {s:04} {}", describe(&r, &label)));
            let m = r.message.ok_or_else(|| {
                CliError::decode("Unrecoverable", format!("stripe {s:04} cloud {label}"))
            })?;
            symbols.extend(m);
        }
    }
    let full = stripe.is_none();
    let bytes = pack::unpack(
        &symbols,
        code.field().m(),
        if full { len } else { symbols.len() * code.field().m() as usize / 8 },
    );
    match out {
        Some(p) => {
            fs::write(p, &bytes)?;
            log.iter().for_each(|l| println!("{l}"));
            println!("wrote {} bytes to {}", bytes.len(), p.display());
        }
        None => {
            log.iter().for_each(|l| eprintln!("{l}"));
            std::io::stdout().write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn fail(shards: &Path, model: &ModelArgs, seed: u64, heal: bool) -> Result<()> {
    let mut stores = open_stripes(shards)?;
    let model = failure_model(model, stores[0].topology())?;
    for store in &mut stores {
        if heal {
            store.heal()?;
        }
        store.fail_servers(&model, seed)?;
    }
    let store = &stores[0];
    let topo = store.topology();
    let names: Vec<String> = store
        .failed()
        .into_iter()
        .map(|g| {
            let (c, s) = topo.locate(g).expect("failed index within topology");
            format!("{}/{}", topo.labels[c], s + 1)
        })
        .collect();
    println!("failed servers: {}", if names.is_empty() { "none".into() } else { names.join(",") });
    Ok(())
}

pub fn trials(
    code_path: &Path,
    model: &ModelArgs,
    trials: usize,
    seed: Option<u64>,
    cloud: &str,
    json: bool,
) -> Result<()> {
    let loaded = load_code(code_path)?;
    let code = &loaded.code;
    let topo = Topology::from_code(code);
    let target = resolve_cloud(&topo, cloud)?;
    let model = failure_model(model, &topo)?;
    let seed = seed.or(loaded.config.seed).unwrap_or(0);
    let (_, stats) = simstore::run_trials(code, &model, target, trials, seed)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
        return Ok(());
    }
    let pct = |n: usize| 100.0 * n as f64 / stats.trials as f64;
    println!("cloud {} under {model:?}, {} trials, seed {seed}", topo.labels[target], stats.trials);
    println!("{:<15}{:>10}{:>10}", "outcome", "count", "share");
    let mut rows = vec![(AccessLevel::Local.to_string(), stats.local)];
    if code.levels() == 3 {
        rows.push((AccessLevel::Middle.to_string(), stats.middle));
    }
    rows.push((AccessLevel::Global.to_string(), stats.global));
    rows.push(("unrecoverable".into(), stats.unrecoverable));
    for (name, n) in rows {
        println!("{name:<15}{n:>10}{:>9.2}%", pct(n));
    }
    println!("mean symbols read       {:.3}", stats.mean_symbols_read);
    println!("mean servers contacted  {:.3}", stats.mean_servers_contacted);
    Ok(())
}

pub fn scale(
    code_path: &Path,
    shards: &Path,
    new: &str,
    out_code: &Path,
    verbose: bool,
) -> Result<()> {
    let loaded = load_code(code_path)?;
    let dl = two_level(&loaded.code)?;
    let new = parse_params(new)?;
    let mut stores = open_stripes(shards)?;
    let mut grown: Option<LayeredCode> = None;
    let mut written = 0;
    let mut exchanged = 0;
    for store in &mut stores {
        check_hash(store, &loaded)?;
        let segments = recover_codeword(store, &loaded.code, false)?;
        let stored = DlCodeword { segments };
        let out = dynamics::scale_out(dl, &stored, new, None, &vec![Gf::ZERO; new.k])?;
        if verbose {
            for msg in &out.plan.messages {
                emit("protocol", msg);
            }
        }
        exchanged += out.plan.symbols_exchanged();
        let code = LayeredCode::Dl(out.code);
        let hash = CodeSpecConfig::from_code(&code, loaded.config.seed).hash().to_string();
        let topo = store.topology().after_scale_out(&code);
        written += store.update(topo, &out.codeword.segments, &hash)?.len();
        grown = Some(code);
    }
    let code = grown.expect("at least one stripe");
    write_artifact(out_code, &code, loaded.config.seed)?;
    print!("{}", code.distance_matrix());
    println!(
        "added cloud {}; {exchanged} symbols exchanged, {written} shard files written; code in {}",
        stores[0].topology().labels.last().expect("cloud labels"),
        out_code.display()
    );
    Ok(())
}

pub fn split(
    code_path: &Path,
    shards: &Path,
    target: &str,
    a: &str,
    b: &str,
    out_code: &Path,
    verbose: bool,
) -> Result<()> {
    let loaded = load_code(code_path)?;
    let dl = two_level(&loaded.code)?;
    let mut stores = open_stripes(shards)?;
    let x = resolve_cloud(stores[0].topology(), target)?;
    let spec = SplitSpec { target: x, a: parse_params(a)?, b: parse_params(b)? };
    let old_label = stores[0].topology().labels[x].clone();
    let mut result: Option<LayeredCode> = None;
    let mut written = Vec::new();
    for store in &mut stores {
        check_hash(store, &loaded)?;
        let segments = recover_codeword(store, &loaded.code, false)?;
        let out = dynamics::split(dl, &DlCodeword { segments }, spec)?;
        let code = LayeredCode::Dl(out.code);
        let hash = CodeSpecConfig::from_code(&code, loaded.config.seed).hash().to_string();
        let topo = store.topology().after_split(&code, x);
        let halves = [topo.labels[x].clone(), topo.labels[x + 1].clone()];
        written.extend(store.update(topo, &out.codeword.segments, &hash)?);
        let data: Vec<String> = data_clouds(store)?
            .into_iter()
            .flat_map(|l| if l == old_label { halves.to_vec() } else { vec![l] })
            .collect();
        store.set_extra(DATA_CLOUDS, &data.join(","))?;
        result = Some(code);
    }
    if verbose {
        for p in &written {
            emit("written", &p.display().to_string());
        }
    }
    let code = result.expect("at least one stripe");
    write_artifact(out_code, &code, loaded.config.seed)?;
    print!("{}", code.distance_matrix());
    let labels = &stores[0].topology().labels;
    println!(
        "split cloud {old_label} into {} and {}; {} shard files written; code in {}",
        labels[x],
        labels[x + 1],
        written.len(),
        out_code.display()
    );
    Ok(())
}
