//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its own PASS/FAIL line; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::time::{Duration, Instant};

use hiercode::code::{AccessLevel, CloudParams, CloudPoints, CodeError};
use hiercode::config::CodeSpecConfig;
use hiercode::dl::{DlCode, DlParams};
use hiercode::dynamics::{scale_out, split, ScaleOutPoints, SplitSpec};
use hiercode::gf::{Field, Gf};
use hiercode::layered::LayeredCode;
use hiercode::linalg::GfMatrix;
use hiercode::simstore::{
    read, run_trials, trial_rng, FailureModel, MemoryShards, ReadReport, ShardStore, Topology,
};
use hiercode::tl::{TlCode, TlGroup, TlParams};
use rand::Rng;

type Outcome = Result<(), String>;
/// Name, check, time limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- helpers

fn bp(f: &Field, e: i64) -> Gf {
    if e < 0 {
        Gf::ZERO
    } else {
        f.beta_pow(e)
    }
}

fn pw(f: &Field, e: &[i64]) -> Vec<Gf> {
    e.iter().map(|&i| bp(f, i)).collect()
}

fn erase(v: &[Gf], at: &[usize]) -> Vec<Option<Gf>> {
    v.iter().enumerate().map(|(i, &x)| if at.contains(&i) { None } else { Some(x) }).collect()
}

/// All `w`-subsets of `0..n`.
fn subsets(n: usize, w: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == w)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Rank by plain row reduction, kept separate from the library solver.
fn rank(f: &Field, rows: &[Vec<Gf>]) -> usize {
    let mut m: Vec<Vec<Gf>> = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let inv = f.inv(m[r][c]).unwrap();
        let pivot: Vec<Gf> = m[r].iter().map(|&v| f.mul(v, inv)).collect();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let s = row[c];
                for (x, &pv) in row.iter_mut().zip(&pivot) {
                    *x += f.mul(s, pv);
                }
            }
        }
        m[r] = pivot;
        r += 1;
    }
    r
}

fn mat_rows(m: &GfMatrix) -> Vec<Vec<Gf>> {
    m.to_rows()
}

/// `[top; bottom]` glued column-wise: each row of `left` extended by the same row of `right`.
fn hcat(left: &[Vec<Gf>], right: &[Vec<Gf>]) -> Vec<Vec<Gf>> {
    left.iter().zip(right).map(|(a, b)| a.iter().chain(b).copied().collect()).collect()
}

fn identity(k: usize) -> Vec<Vec<Gf>> {
    (0..k).map(|i| (0..k).map(|j| if i == j { Gf::ONE } else { Gf::ZERO }).collect()).collect()
}

fn keep_columns(rows: &[Vec<Gf>], erased: &[usize], n: usize) -> Vec<Vec<Gf>> {
    rows.iter()
        .map(|r| (0..r.len()).filter(|j| *j >= n || !erased.contains(j)).map(|j| r[j]).collect())
        .collect()
}

/// Erasure oracle: `generator` spans the candidate words of one cloud (first
/// `n` columns are the cloud's symbols, the rest are side information the
/// decoder already knows). A pattern is recoverable exactly when the rows
/// stay independent after dropping the erased symbol columns.
fn recoverable(f: &Field, generator: &[Vec<Gf>], n: usize, erased: &[usize]) -> bool {
    let kept = keep_columns(generator, erased, n);
    rank(f, &kept) == generator.len()
}

fn example3() -> DlCode {
    let f = Field::gf16();
    let params = DlParams::new(f.clone(), vec![CloudParams::new(6, 3, 1); 2]).unwrap();
    let pts = CloudPoints { a: pw(&f, &[1, 2, 3, 7]), b: pw(&f, &[8, 9, 10, 11]) };
    DlCode::build(params, Some(vec![pts.clone(), pts])).unwrap()
}

fn example4() -> TlCode {
    let f = Field::gf16();
    let g = TlGroup { two_gamma: 1, clouds: vec![CloudParams::new(6, 3, 1); 2] };
    let params = TlParams::new(f.clone(), vec![g.clone(), g]).unwrap();
    let pts = CloudPoints { a: pw(&f, &[1, 2, 3, 7, 6]), b: pw(&f, &[8, 9, 10, 11, 12]) };
    TlCode::build(params, Some(vec![vec![pts.clone(), pts.clone()], vec![pts.clone(), pts]]))
        .unwrap()
}

fn example4_messages(f: &Field) -> Vec<Vec<Vec<Gf>>> {
    vec![vec![pw(f, &[0, 1, 2]), pw(f, &[1, 0, -1])], vec![pw(f, &[2, -1, 1]), pw(f, &[-1, 1, 0])]]
}

fn check_rows(g: &GfMatrix, f: &Field, expected: &[Vec<i64>]) -> Outcome {
    ensure!(g.rows() == expected.len(), "row count {} != {}", g.rows(), expected.len());
    for (r, row) in expected.iter().enumerate() {
        ensure!(g.row(r) == pw(f, row).as_slice(), "generator row {} differs", r + 1);
    }
    Ok(())
}

// ------------------------------------------------------------- criteria

fn golden_double_level() -> Outcome {
    let code = example3();
    let f = code.field().clone();
    let z = -1;
    let g = vec![
        vec![0, z, z, 5, 12, 7, z, z, z, 13, 9, 3],
        vec![z, 0, z, 0, 4, 11, z, z, z, 10, 6, 0],
        vec![z, z, 0, 2, 14, 3, z, z, z, 14, 10, 4],
        vec![z, z, z, 13, 9, 3, 0, z, z, 5, 12, 7],
        vec![z, z, z, 10, 6, 0, z, 0, z, 0, 4, 11],
        vec![z, z, z, 14, 10, 4, z, z, 0, 2, 14, 3],
    ];
    check_rows(&code.generator(), &f, &g)?;

    let cw = code.encode(&[pw(&f, &[0, 1, 2]), pw(&f, &[1, 0, -1])]).map_err(|e| e.to_string())?;
    ensure!(cw.segments[0] == pw(&f, &[0, 1, 2, 14, -1, -1]), "c1 = {:?}", cw.segments[0]);
    ensure!(cw.segments[1] == pw(&f, &[1, 0, -1, 6, -1, 13]), "c2 = {:?}", cw.segments[1]);

    let local =
        code.decode_local(0, &erase(&cw.segments[0], &[1, 3])).map_err(|e| e.to_string())?;
    ensure!(
        local.trace.get("solved") == Some(pw(&f, &[1, 14, 7]).as_slice()),
        "local (e1, e2, e3) = {:?}",
        local.trace.get("solved")
    );
    let others = vec![None, Some(cw.segments[1].clone())];
    let global = code
        .decode_global(0, &erase(&cw.segments[0], &[0, 1, 3, 4]), &others)
        .map_err(|e| e.to_string())?;
    ensure!(global.trace.get("m1B1,2") == Some(&[bp(&f, 11)][..]), "m1B1,2 differs");
    ensure!(
        global.trace.get("solved") == Some(pw(&f, &[0, 1, 10, 7]).as_slice()),
        "global e' = {:?}",
        global.trace.get("solved")
    );
    ensure!(global.codeword == cw.segments[0], "global decode result differs");
    Ok(())
}

fn golden_triple_level() -> Outcome {
    let code = example4();
    let f = code.field().clone();
    let z = -1;
    let dl = [[[5, 12, 7], [13, 9, 3]], [[0, 4, 11], [10, 6, 0]], [[2, 14, 3], [14, 10, 4]]];
    let ev = [[3, 12, 10], [9, 3, 1], [6, 0, 13]];
    let mut expected = Vec::new();
    for gx in 0..2 {
        for ci in 0..2 {
            for r in 0..3 {
                let mut row = Vec::new();
                for gy in 0..2 {
                    for cj in 0..2 {
                        row.extend((0..3).map(|c| if (gx, ci, r) == (gy, cj, c) { 0 } else { z }));
                        row.extend(if gx != gy {
                            ev[r]
                        } else if ci == cj {
                            dl[r][0]
                        } else {
                            dl[r][1]
                        });
                    }
                }
                expected.push(row);
            }
        }
    }
    let g = code.generator();
    ensure!(g.shape() == (12, 24), "generator shape {:?}", g.shape());
    check_rows(&g, &f, &expected)?;

    let cw = code.encode(&example4_messages(&f)).map_err(|e| e.to_string())?;
    ensure!(cw.get(0, 0) == pw(&f, &[0, 1, 2, 12, 14, 12]).as_slice(), "c11 = {:?}", cw.get(0, 0));
    ensure!(cw.get(0, 1) == pw(&f, &[1, 0, -1, 9, 14, 1]).as_slice(), "c12 = {:?}", cw.get(0, 1));

    let siblings = vec![None, Some(cw.get(0, 1).to_vec())];
    let d = code
        .decode_middle(0, 0, &erase(cw.get(0, 0), &[0, 3, 4]), &siblings)
        .map_err(|e| e.to_string())?;
    ensure!(d.trace.get("y1,2") == Some(&[bp(&f, 11)][..]), "y12 = {:?}", d.trace.get("y1,2"));
    ensure!(d.trace.get("z1,2") == Some(&[bp(&f, 4)][..]), "z12 = {:?}", d.trace.get("z1,2"));
    ensure!(
        d.trace.get("filled") == Some(pw(&f, &[0, 12, 14]).as_slice()),
        "(e1, e2, e3) = {:?}",
        d.trace.get("filled")
    );
    Ok(())
}

fn distance_matrices() -> Outcome {
    let f = Field::gf16();
    let c = CloudParams::new;
    let p = DlParams::new(f, vec![c(10, 6, 1), c(11, 7, 2)]).map_err(|e| e.to_string())?;
    ensure!(p.distance_matrix().rows == vec![vec![4, 3], vec![7, 6]], "two-level D differs");

    let f32 = Field::new(5, 0b10_0101).map_err(|e| e.to_string())?;
    let tl = TlParams::new(
        f32,
        vec![
            TlGroup { two_gamma: 2, clouds: vec![c(10, 6, 1), c(11, 6, 1)] },
            TlGroup { two_gamma: 1, clouds: vec![c(10, 7, 1), c(10, 7, 1)] },
            TlGroup {
                two_gamma: 1,
                clouds: vec![c(12, 9, 1), c(12, 8, 2), c(12, 9, 1), c(12, 9, 1)],
            },
        ],
    )
    .map_err(|e| e.to_string())?;
    let want = vec![
        vec![2, 3, 2, 2, 2, 2, 2, 2],
        vec![6, 7, 5, 5, 8, 8, 8, 8],
        vec![9, 10, 9, 9, 11, 11, 11, 11],
    ];
    ensure!(tl.distance_matrix().rows == want, "three-level D = {:?}", tl.distance_matrix().rows);
    Ok(())
}

/// Checks one cloud at one level: every pattern below `d` is recovered by the
/// decoder, and some weight-`d` pattern is unrecoverable by the oracle and
/// rejected by the decoder.
fn exhaust<F>(f: &Field, oracle: &[Vec<Gf>], n: usize, d: usize, truth: &[Gf], decode: F) -> Outcome
where
    F: Fn(&[Option<Gf>]) -> Result<Vec<Gf>, CodeError>,
{
    for w in 0..d.min(n + 1) {
        for e in subsets(n, w) {
            ensure!(
                recoverable(f, oracle, n, &e),
                "oracle: pattern {e:?} below d = {d} unrecoverable"
            );
            let got = decode(&erase(truth, &e)).map_err(|err| format!("pattern {e:?}: {err}"))?;
            ensure!(got == truth, "pattern {e:?} decoded wrongly");
        }
    }
    let tight: Vec<_> = if d <= n {
        subsets(n, d).into_iter().filter(|e| !recoverable(f, oracle, n, e)).collect()
    } else {
        Vec::new()
    };
    ensure!(!tight.is_empty(), "no unrecoverable weight-{d} pattern, distance exceeds {d}");
    ensure!(decode(&erase(truth, &tight[0])).is_err(), "decoder accepted pattern {:?}", tight[0]);
    Ok(())
}

fn exhaustive_distances() -> Outcome {
    // double level
    let code = example3();
    let f = code.field().clone();
    let cw = code.encode(&[pw(&f, &[0, 1, 2]), pw(&f, &[1, 0, -1])]).unwrap();
    for x in 0..2 {
        let (k, n) = (3, 6);
        let a = mat_rows(code.a(x));
        let u = mat_rows(code.u(x));
        let zeros = vec![vec![Gf::ZERO; k]; u.len()];
        let mut local = hcat(&identity(k), &a);
        local.extend(hcat(&zeros, &u));
        let b = mat_rows(code.b(x, 1 - x));
        let global = hcat(&hcat(&identity(k), &a), &b);
        let p = code.params();
        let truth = &cw.segments[x];
        exhaust(&f, &local, n, p.d1(x), truth, |r| code.decode_local(x, r).map(|d| d.codeword))?;
        let mut others = vec![None, None];
        others[1 - x] = Some(cw.segments[1 - x].clone());
        exhaust(&f, &global, n, p.d2(x), truth, |r| {
            code.decode_global(x, r, &others).map(|d| d.codeword)
        })?;
        ensure!((p.d1(x), p.d2(x)) == (3, 5), "example 3 distances");
    }

    // triple level
    let code = example4();
    let cw = code.encode(&example4_messages(&f)).unwrap();
    let p = code.params();
    for (x, i) in p.cloud_ids().collect::<Vec<_>>() {
        ensure!((p.d1(x, i), p.d2(x, i), p.d3(x, i)) == (2, 5, 6), "example 4 distances");
        let (k, n) = (3, 6);
        let a = mat_rows(code.a(x, i));
        let mut local = hcat(&identity(k), &a);
        for extra in [code.u(x, i), code.v(x, i)] {
            let rows = mat_rows(extra);
            local.extend(hcat(&vec![vec![Gf::ZERO; k]; rows.len()], &rows));
        }
        let i2 = 1 - i;
        let middle = hcat(&hcat(&identity(k), &a), &mat_rows(code.b(x, i, i2)));
        let y = 1 - x;
        let mut global = middle.clone();
        for s in 0..p.slot_count(y) {
            global = hcat(&global, &mat_rows(code.e(x, i, y, s)));
        }
        let truth = cw.get(x, i);
        exhaust(&f, &local, n, p.d1(x, i), truth, |r| {
            code.decode_local(x, i, r).map(|d| d.codeword)
        })?;
        let mut sib = vec![None, None];
        sib[i2] = Some(cw.get(x, i2).to_vec());
        exhaust(&f, &middle, n, p.d2(x, i), truth, |r| {
            code.decode_middle(x, i, r, &sib).map(|d| d.codeword)
        })?;
        let mut known: Vec<Vec<Option<Vec<Gf>>>> =
            cw.segments.iter().map(|g| g.iter().map(|c| Some(c.clone())).collect()).collect();
        known[x][i] = None;
        exhaust(&f, &global, n, p.d3(x, i), truth, |r| {
            code.decode_global(x, i, r, &known).map(|d| d.codeword)
        })?;
    }
    Ok(())
}

fn definition_conformance() -> Outcome {
    let f = Field::gf16();
    let params = DlParams::new(f.clone(), vec![CloudParams::new(5, 2, 1); 2]).unwrap();
    let code = DlCode::build(params, None).unwrap();
    let q = 16u16;
    let p = 2usize;
    let (n, k, delta) = (5usize, 2usize, [1usize, 1]);
    let total_delta: usize = delta.iter().sum();
    let mut d_restrict = [usize::MAX; 2];
    let mut d_zero_ext = [usize::MAX; 2];
    let mut restricted: [std::collections::HashSet<Vec<Gf>>; 2] = Default::default();
    let mut count = 0usize;
    for v in 0..(q as u32).pow((p * k) as u32) {
        let digits: Vec<Gf> = (0..p * k).map(|j| Gf(((v >> (4 * j)) & 0xf) as u16)).collect();
        let msgs = vec![digits[..k].to_vec(), digits[k..].to_vec()];
        let cw = code.encode(&msgs).unwrap();
        count += 1;
        for x in 0..p {
            let seg = &cw.segments[x];
            let wt = seg.iter().filter(|s| !s.is_zero()).count();
            restricted[x].insert(seg.clone());
            if wt > 0 {
                d_restrict[x] = d_restrict[x].min(wt);
                if cw.segments[1 - x].iter().all(|s| s.is_zero()) {
                    d_zero_ext[x] = d_zero_ext[x].min(wt);
                }
            }
        }
    }
    ensure!(count == 65536, "enumerated {count} codewords");
    for x in 0..p {
        let r = n - k;
        let d1 = r - delta[x] + 1;
        let d2 = r - delta[x] + total_delta + 1;
        ensure!(
            d_restrict[x] == d1,
            "restriction code {}: distance {} != {d1}",
            x + 1,
            d_restrict[x]
        );
        ensure!(
            d_zero_ext[x] == d2,
            "zero-extended code {}: distance {} != {d2}",
            x + 1,
            d_zero_ext[x]
        );
        ensure!(restricted[x].len() == 16usize.pow((k + delta[x]) as u32), "restriction size");
    }
    Ok(())
}

fn scale_out_equivalence() -> Outcome {
    let base = example3();
    let f = base.field().clone();
    let m = vec![pw(&f, &[0, 1, 2]), pw(&f, &[1, 0, -1])];
    let cw = base.encode(&m).unwrap();
    let used = pw(&f, &[1, 2, 3, 7, 8, 9, 10, 11]);
    let fresh: Vec<Gf> = (1..16u16).map(Gf).filter(|g| !used.contains(g)).collect();

    for (delta_new, expect_d2) in [(1usize, 6usize), (2, 7)] {
        let new = CloudParams::new(6, 3, delta_new);
        let appended = fresh[..delta_new].to_vec();
        // points need only be distinct within one cloud, so the new cloud starts over
        let seq: Vec<Gf> = (1..=10).map(|i| f.beta_pow(i)).collect();
        let new_pts = CloudPoints {
            a: seq[..3 + delta_new].to_vec(),
            b: seq[3 + delta_new..8 + delta_new].to_vec(),
        };
        let pts =
            ScaleOutPoints { appended: vec![appended.clone(); 2], new_cloud: new_pts.clone() };
        let m3 = pw(&f, &[5, -1, 11]);
        let out = scale_out(&base, &cw, new, Some(pts), &m3).map_err(|e| e.to_string())?;

        let mut b_ext = pw(&f, &[8, 9, 10, 11]);
        b_ext.extend(&appended);
        let old = CloudPoints { a: pw(&f, &[1, 2, 3, 7]), b: b_ext };
        let scratch = DlCode::build(
            DlParams::new(
                f.clone(),
                vec![CloudParams::new(6, 3, 1), CloudParams::new(6, 3, 1), new],
            )
            .unwrap(),
            Some(vec![old.clone(), old, new_pts]),
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            scratch.generator() == out.code.generator(),
            "generators differ (delta = {delta_new})"
        );
        let mut all_m = m.clone();
        all_m.push(m3.clone());
        ensure!(scratch.encode(&all_m).unwrap() == out.codeword, "codewords differ");

        for x in 0..2 {
            let d2 = out.code.params().d2(x);
            ensure!(d2 == base.params().d2(x) + delta_new && d2 == expect_d2, "d2 = {d2}");
            let truth = &out.codeword.segments[x];
            let mut known: Vec<Option<Vec<Gf>>> =
                out.codeword.segments.iter().cloned().map(Some).collect();
            known[x] = None;
            for w in 0..=6 {
                for e in subsets(6, w) {
                    let res = out.code.decode_global(x, &erase(truth, &e), &known);
                    if w < d2 {
                        ensure!(
                            matches!(&res, Ok(d) if &d.codeword == truth),
                            "pattern {e:?} failed"
                        );
                    }
                }
            }
            if d2 <= 6 {
                let all: Vec<usize> = (0..6).collect();
                ensure!(
                    out.code.decode_global(x, &erase(truth, &all), &known).is_err(),
                    "weight-6 pattern decoded with d2 = {d2}"
                );
            }
        }
    }
    Ok(())
}

fn split_non_interference() -> Outcome {
    let f = Field::new(6, 0b100_0011).unwrap();
    let c = CloudParams::new;
    let code = DlCode::build(
        DlParams::new(f.clone(), vec![c(8, 4, 2), c(6, 3, 1), c(6, 3, 1)]).unwrap(),
        None,
    )
    .unwrap();
    let m = vec![pw(&f, &[3, 17, -1, 40]), pw(&f, &[5, 0, 61]), pw(&f, &[-1, 9, 22])];
    let cw = code.encode(&m).unwrap();
    let layered = LayeredCode::Dl(code.clone());
    let hash = CodeSpecConfig::from_code(&layered, None).hash().to_string();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut store = ShardStore::store(
        dir.path(),
        Topology::from_code(&layered),
        &cw.segments,
        6,
        &hash,
        "desk",
    )
    .map_err(|e| e.to_string())?;
    let snapshot = |store: &ShardStore, clouds: &[usize]| -> BTreeMap<String, Vec<u8>> {
        let topo = store.topology();
        let mut out = BTreeMap::new();
        for &cl in clouds {
            for s in 0..topo.servers[cl] {
                let path = store.shard_path(topo.global(cl, s));
                out.insert(path.display().to_string(), fs::read(&path).unwrap());
            }
        }
        out
    };
    let before = snapshot(&store, &[1, 2]);

    let spec = SplitSpec { target: 0, a: c(4, 2, 1), b: c(4, 2, 1) };
    let s = split(&code, &cw, spec).map_err(|e| e.to_string())?;
    let new_layered = LayeredCode::Dl(s.code.clone());
    let new_hash = CodeSpecConfig::from_code(&new_layered, None).hash().to_string();
    let topo = store.topology().after_split(&new_layered, 0);
    let written = store.update(topo, &s.codeword.segments, &new_hash).map_err(|e| e.to_string())?;
    let after = snapshot(&store, &[2, 3]);
    ensure!(before == after, "sibling shard files changed");
    ensure!(
        written.iter().all(|p| !before.contains_key(&p.display().to_string())),
        "siblings rewritten"
    );
    ensure!(s.codeword.segments[2..] == cw.segments[1..], "sibling codewords changed");

    // profiles of the untouched clouds, before and after
    let profile = |code: &DlCode, words: &[Vec<Gf>], x: usize| -> Vec<(bool, bool)> {
        let mut known: Vec<Option<Vec<Gf>>> = words.iter().cloned().map(Some).collect();
        known[x] = None;
        (0u32..1 << 6)
            .map(|mask| {
                let e: Vec<usize> = (0..6).filter(|i| mask >> i & 1 == 1).collect();
                let r = erase(&words[x], &e);
                let ok = |res: Result<hiercode::code::Decoded, CodeError>| {
                    res.map(|d| d.codeword == words[x]).unwrap_or(false)
                };
                (ok(code.decode_local(x, &r)), ok(code.decode_global(x, &r, &known)))
            })
            .collect()
    };
    for (old, new) in [(1, 2), (2, 3)] {
        ensure!(
            profile(&code, &cw.segments, old) == profile(&s.code, &s.codeword.segments, new),
            "erasure profile of cloud {} changed",
            old + 1
        );
    }

    for (half, params) in [(0, spec.a), (1, spec.b)] {
        let budget = params.r() - params.delta;
        let word = &s.codeword.segments[half];
        for w in 0..=params.n {
            for e in subsets(params.n, w) {
                let ok = s.code.decode_local(half, &erase(word, &e)).map(|d| &d.codeword == word);
                if w <= budget {
                    ensure!(matches!(ok, Ok(true)), "half {half}: pattern {e:?} failed");
                } else if w == budget + 1 {
                    ensure!(ok.is_err(), "half {half}: pattern {e:?} beyond budget decoded");
                }
            }
        }
    }
    Ok(())
}

fn simulator() -> Outcome {
    let code = LayeredCode::Tl(example4());
    let model = FailureModel::Iid { p: 0.15 };
    let (a, sa) = run_trials(&code, &model, 0, 10_000, 2024).map_err(|e| e.to_string())?;
    let (b, sb) = run_trials(&code, &model, 0, 10_000, 2024).map_err(|e| e.to_string())?;
    let ja = serde_json::to_vec(&a).unwrap();
    ensure!(ja == serde_json::to_vec(&b).unwrap(), "reports differ between runs");
    ensure!(sa == sb, "stats differ");
    ensure!(sa.local > 0 && sa.middle > 0 && sa.global > 0, "levels not all exercised: {sa:?}");

    let topo = Topology::from_code(&code);
    let rank = |r: &ReadReport| r.level.map_or(3, |l| l as u8);
    for t in 0..2_000u64 {
        let mut rng = trial_rng(7, t);
        let m: Vec<Vec<Gf>> =
            (0..4).map(|_| (0..3).map(|_| Gf(rng.gen_range(0..16))).collect()).collect();
        let cw = code.encode(&m).unwrap();
        let failed = FailureModel::Iid { p: 0.2 }.sample(&topo, &mut rng).unwrap();
        let mut full = MemoryShards::new(topo.clone(), &cw).unwrap();
        full.fail(&failed).unwrap();
        let base = read(&full, &code, 0).unwrap();
        for drop in 0..failed.len() {
            let mut fewer = failed.clone();
            fewer.remove(drop);
            let mut sub = MemoryShards::new(topo.clone(), &cw).unwrap();
            sub.fail(&fewer).unwrap();
            let r = read(&sub, &code, 0).unwrap();
            ensure!(rank(&r) <= rank(&base), "trial {t}: removing a failure escalated the read");
        }
    }

    // four clouds, n = 4, k = 2; only cloud 1 carries cross parity: d1 = 2, d2 = 3
    let c = CloudParams::new;
    let narrative = LayeredCode::Dl(
        DlCode::build(
            DlParams::new(Field::gf16(), vec![c(4, 2, 1), c(4, 2, 0), c(4, 2, 0), c(4, 2, 0)])
                .unwrap(),
            None,
        )
        .unwrap(),
    );
    let d = narrative.distance_matrix();
    ensure!((d.rows[0][0], d.rows[1][0]) == (2, 3), "narrative distances {:?}", d.rows);
    let m: Vec<Vec<Gf>> = (1..=4).map(|i| vec![Gf(i), Gf(9)]).collect();
    let mut s =
        MemoryShards::new(Topology::from_code(&narrative), &narrative.encode(&m).unwrap()).unwrap();
    s.fail(&[0]).unwrap();
    let one = read(&s, &narrative, 0).unwrap();
    ensure!(
        one.level == Some(AccessLevel::Local) && one.servers_contacted == 4,
        "one failure: {one:?}"
    );
    s.fail(&[3]).unwrap();
    let two = read(&s, &narrative, 0).unwrap();
    ensure!(
        two.level == Some(AccessLevel::Global) && two.servers_contacted == 16,
        "two failures: {two:?}"
    );
    ensure!(two.message.as_ref() == Some(&m[0]), "two failures: wrong data");
    Ok(())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("golden double-level example", golden_double_level, 1),
        ("golden triple-level example", golden_triple_level, 1),
        ("distance matrices", distance_matrices, 1),
        ("exhaustive distance oracles", exhaustive_distances, 30),
        ("definition conformance by enumeration", definition_conformance, 60),
        ("scale-out equivalence", scale_out_equivalence, 30),
        ("split non-interference", split_non_interference, 60),
        ("simulator determinism and escalation", simulator, 60),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = run();
        let took = start.elapsed();
        if result.is_ok() && took > Duration::from_secs(*limit) {
            result = Err(format!("took {took:.2?}, limit {limit} s"));
        }
        match result {
            Ok(()) => println!("criterion {}: PASS  {name} ({took:.2?})", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({took:.2?}): {e}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
