//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{bag, random_instance, random_positions};
use joinsample::fixtures::{figure_db, figure_db_with_probs, figure_plan, figure_query};
use joinsample::pipeline::{
    bench, gen_synthetic, oracle_join, oracle_sample_check, synthetic_query, Materialized, BenchConfig, Method,
    Prepared, SampleConfig, Strategy,
};
use joinsample::planner::{plan_query, JoinQuery};
use joinsample::sampling::{geo_counted, rng_from_seed, UniformMethod};
use joinsample::storage::to_csv_string;
use joinsample::{CsrStore, Database, IndexKind, ProbeStats, RandomAccessIndex, UsrStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn pass_if(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("figure-exact chained index", criterion_1),
        ("figure-consistent unchained index", criterion_2),
        ("random access matches enumeration", criterion_3),
        ("cached access equals plain access", criterion_4),
        ("sampler inclusion frequencies", criterion_5),
        ("boundary exactness at p = 0 and p = 1", criterion_6),
        ("complexity counters", criterion_7),
        ("desk-scale speedup direction", criterion_8),
        ("degree trade-off report", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            pass_if(false, format!("panicked: {msg}"))
        });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{id} [{verdict}] {name}: {} ({:.2} s)",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
    let root = store.root_table();
    let got = (
        root.links[0].hd.clone(),
        root.links[0].w.clone(),
        root.links[1].hd.clone(),
        root.links[1].w.clone(),
        store.pref().unwrap().to_vec(),
    );
    let expected = (
        vec![3, 3, 5, 5],
        vec![3, 3, 2, 2],
        vec![4, 5, 4, 5],
        vec![2, 3, 2, 3],
        vec![6, 15, 19, 25],
    );
    let ok = got == expected && within(start, Duration::from_secs(1));
    pass_if(ok, format!("hd/w/pref columns {got:?}"))
}

// Unchained index of the running example as drawn: root (start, len, w)
// per nested attribute, and each child's perm / pref columns.
const FIG_UA: [(usize, usize, u64); 4] = [(0, 3, 3), (0, 3, 3), (3, 2, 2), (3, 2, 2)];
const FIG_V: [(usize, usize, u64); 4] = [(0, 2, 2), (2, 3, 3), (0, 2, 2), (2, 3, 3)];
const FIG_UA_PERM: [usize; 6] = [0, 2, 3, 1, 5, 4];
const FIG_UA_PREF: [u64; 6] = [1, 2, 3, 1, 2, 1];
const FIG_V_PERM: [usize; 6] = [2, 4, 1, 3, 5, 0];
const FIG_V_PREF: [u64; 6] = [1, 2, 1, 2, 3, 1];

type Slice = (Vec<usize>, Vec<u64>, u64);

/// Per root row: the referenced slice's rows, its prefix sums and the weight.
fn slices_of(triples: &[(usize, usize, u64)], perm: &[usize], pref: &[u64]) -> Vec<Slice> {
    triples
        .iter()
        .map(|&(s, l, w)| (perm[s..s + l].to_vec(), pref[s..s + l].to_vec(), w))
        .collect()
}

fn criterion_2() -> Outcome {
    let store = UsrStore::build(&figure_plan(), &figure_db()).unwrap();
    let root = store.root_table();
    let mut ok = store.pref().unwrap() == [6, 15, 19, 25];
    let mut notes = Vec::new();
    for (link, (fig, perm, pref)) in root
        .links
        .iter()
        .zip([(&FIG_UA, &FIG_UA_PERM, &FIG_UA_PREF), (&FIG_V, &FIG_V_PERM, &FIG_V_PREF)])
    {
        let child = &store.tables()[link.table];
        let ours: Vec<(usize, usize, u64)> = (0..root.len).map(|i| (link.start[i], link.len[i], link.w[i])).collect();
        let mine = slices_of(&ours, child.perm.as_ref().unwrap(), &child.pref);
        let theirs = slices_of(fig, perm, pref);
        let same_content = mine == theirs;
        // Every slot of perm belongs to exactly one slice.
        let mut slots: Vec<usize> = child.perm.clone().unwrap();
        slots.sort_unstable();
        let is_perm = slots == (0..child.len).collect::<Vec<_>>();
        let placement = if ours.iter().zip(fig.iter()).all(|(a, b)| a.0 == b.0) { "same" } else { "different" };
        ok &= same_content && is_perm;
        notes.push(format!(
            "{}: slice contents {}, group placement {placement}",
            child.attrs.join(","),
            if same_content { "match" } else { "DIFFER" }
        ));
    }
    pass_if(ok, format!("root pref {:?}; {}", store.pref().unwrap(), notes.join("; ")))
}

fn check_enumeration(store: &dyn RandomAccessIndex, oracle: &joinsample::PhysicalRelation) -> bool {
    let flat = store.flatten();
    if bag(&flat) != bag(oracle) || flat.len() as u64 != store.total() {
        return false;
    }
    (0..store.total()).all(|i| store.get(&[i]).unwrap().row(0) == flat.row(i as usize))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let q = figure_query();
    let db = figure_db();
    let oracle = oracle_join(&q, &db).unwrap();
    let plan = figure_plan();
    let mut ok = check_enumeration(&CsrStore::build(&plan, &db).unwrap(), &oracle)
        && check_enumeration(&UsrStore::build(&plan, &db).unwrap(), &oracle);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut nonempty, mut tuples) = (0, 0);
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 4, 8);
        let oracle = oracle_join(&inst.query, &inst.db).unwrap();
        let attrs = inst.query.output_attrs();
        let root = attrs[rng.gen_range(0..attrs.len())].clone();
        let plan = plan_query(&inst.query, Some(&root)).unwrap();
        ok &= check_enumeration(&CsrStore::build(&plan, &inst.db).unwrap(), &oracle);
        ok &= check_enumeration(&UsrStore::build(&plan, &inst.db).unwrap(), &oracle);
        nonempty += usize::from(!oracle.is_empty());
        tuples += oracle.len();
    }
    ok &= within(start, Duration::from_secs(30));
    pass_if(
        ok,
        format!("figure + 200 random instances ({nonempty} non-empty, {tuples} join tuples), both indexes"),
    )
}

fn probe_instances() -> Vec<(JoinQuery, Database, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out = vec![(figure_query(), figure_db(), "p".to_string())];
    for (o, s) in [(3, 1), (4, 2), (4, 3)] {
        out.push((synthetic_query(), gen_synthetic(o, s, 1).unwrap(), "x".to_string()));
    }
    while out.len() < 20 {
        let inst = random_instance(&mut rng, 4, 8);
        let attrs = inst.query.output_attrs();
        let root = attrs[rng.gen_range(0..attrs.len())].clone();
        if oracle_join(&inst.query, &inst.db).unwrap().len() > 3 {
            out.push((inst.query, inst.db, root));
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let instances = probe_instances();
    let built: Vec<(CsrStore, UsrStore)> = instances
        .iter()
        .map(|(q, db, root)| {
            let plan = plan_query(q, Some(root)).unwrap();
            (CsrStore::build(&plan, db).unwrap(), UsrStore::build(&plan, db).unwrap())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut mismatches = 0;
    let mut probes = 0;
    for i in 0..1000 {
        let (csr, usr) = &built[i % built.len()];
        let pos = random_positions(&mut rng, csr.total());
        probes += pos.len();
        for store in [csr as &dyn RandomAccessIndex, usr] {
            let plain = to_csv_string(&store.get_with(&pos, false, &mut ProbeStats::default()).unwrap());
            let cached = to_csv_string(&store.get_with(&pos, true, &mut ProbeStats::default()).unwrap());
            mismatches += usize::from(plain != cached);
        }
    }
    pass_if(
        mismatches == 0,
        format!("1000 sequences ({probes} positions) over {} instances, {mismatches} mismatches", built.len()),
    )
}

const INNER: [UniformMethod; 4] = [
    UniformMethod::Naive,
    UniformMethod::Geo,
    UniformMethod::Binom,
    UniformMethod::Hybrid { threshold: 0.5 },
];

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let q = figure_query();
    let trials = 20_000;
    let mut runs: Vec<(String, Database, Strategy)> = Vec::new();
    // Surviving root rows get 0.1, 0.35, 0.6 and 0.9; the two dangling rows 0.5.
    let mixed = figure_db_with_probs([0.1, 0.35, 0.5, 0.6, 0.9, 0.5]);
    for index in [IndexKind::Csr, IndexKind::Usr] {
        for m in INNER {
            let cfg = SampleConfig::new(index, Method::PerTuple(m));
            runs.push((format!("mixed per-tuple/{m} {index}"), mixed.clone(), Strategy::IndexAndProbe(cfg)));
        }
        let cfg = SampleConfig::new(index, Method::PerTuple(UniformMethod::hybrid()));
        runs.push((format!("mixed M&S {index}"), mixed.clone(), Strategy::MaterializeAndScan(cfg)));
    }
    for p in [0.01, 0.3, 0.5, 0.7, 0.99] {
        let db = figure_db_with_probs([p; 6]);
        for index in [IndexKind::Csr, IndexKind::Usr] {
            for m in INNER {
                let cfg = SampleConfig::new(index, Method::Uniform { method: m, p });
                runs.push((format!("p={p} {m} {index}"), db.clone(), Strategy::IndexAndProbe(cfg)));
            }
            let cfg = SampleConfig::new(index, Method::PerTuple(UniformMethod::hybrid()));
            runs.push((format!("p={p} per-tuple {index}"), db.clone(), Strategy::IndexAndProbe(cfg.clone())));
            runs.push((format!("p={p} M&S {index}"), db.clone(), Strategy::MaterializeAndScan(cfg)));
        }
    }
    let mut failures = Vec::new();
    let mut max_z: f64 = 0.0;
    for (seed, (name, db, strategy)) in runs.iter().enumerate() {
        let report = oracle_sample_check(&q, db, strategy, trials, 1000 + seed as u64, 5.0).unwrap();
        max_z = max_z.max(report.max_abs_z);
        if !report.passed() {
            failures.push(format!("{name}: {report}"));
        }
    }
    let ok = failures.is_empty() && within(start, Duration::from_secs(300));
    let mut detail = format!(
        "{} configurations x {trials} trials x 25 tuples, max |z| = {max_z:.2}",
        runs.len()
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; failing: {}", failures.join(" | ")));
    }
    pass_if(ok, detail)
}

fn criterion_6() -> Outcome {
    let q = figure_query();
    let mut checks = 0;
    let mut bad = Vec::new();
    for p in [0.0, 1.0] {
        let db = figure_db_with_probs([p; 6]);
        let oracle = oracle_join(&q, &db).unwrap();
        assert_eq!(oracle.len(), 25);
        let oracle = bag(&oracle);
        for index in [IndexKind::Csr, IndexKind::Usr] {
            let mut methods: Vec<Method> = INNER.iter().map(|&m| Method::PerTuple(m)).collect();
            methods.extend(INNER.iter().map(|&method| Method::Uniform { method, p }));
            for method in methods {
                let cfg = SampleConfig::new(index, method);
                let prepared = Prepared::new(&q, &db, &cfg).unwrap();
                let ms = Materialized::new(&q, &db, &cfg).unwrap();
                for seed in 0..20 {
                    let r = prepared.sample(&mut rng_from_seed(seed)).unwrap();
                    let m = ms.sample(&mut rng_from_seed(seed));
                    for (who, rows) in [("ip", &r.rows), ("ms", &m.rows)] {
                        checks += 1;
                        let good = if p == 0.0 { rows.is_empty() } else { bag(rows) == oracle };
                        if !good {
                            bad.push(format!("{who} {index} {method:?} p={p} seed={seed}"));
                        }
                    }
                }
            }
        }
    }
    pass_if(bad.is_empty(), format!("{checks} runs; failures: {bad:?}"))
}

fn criterion_7() -> Outcome {
    let mut rng = rng_from_seed(77);
    let mut geo_bad = 0;
    let mut geo_runs = 0;
    for p in [0.001, 0.01, 0.1, 0.3, 0.5, 0.9, 0.999] {
        for n in [1u64, 25, 1000] {
            for _ in 0..200 {
                let (s, draws) = geo_counted(p, n, &mut rng).unwrap();
                geo_runs += 1;
                geo_bad += usize::from(draws != s.len() as u64 + 1);
            }
        }
    }
    // Through the pipeline: geometric draws, probe counts and search bounds.
    let mut probe_bad = 0;
    let mut searches = 0;
    let mut violations = 0;
    let mut runs = 0;
    for (q, db, root) in probe_instances() {
        for index in [IndexKind::Csr, IndexKind::Usr] {
            for caching in [false, true] {
                for p in [0.05, 0.3, 0.8] {
                    let cfg = SampleConfig {
                        caching: Some(caching),
                        reroot_at: Some(root.clone()),
                        ..SampleConfig::new(index, Method::Uniform { method: UniformMethod::Geo, p })
                    };
                    let prepared = Prepared::new(&q, &db, &cfg).unwrap();
                    for seed in 0..10 {
                        let r = prepared.sample(&mut rng_from_seed(seed)).unwrap();
                        runs += 1;
                        probe_bad += usize::from(r.stats.probes != r.k);
                        geo_bad += usize::from(r.n > 0 && r.geom_draws != r.k + 1);
                        searches += r.stats.searches;
                        violations += r.stats.bound_violations;
                    }
                }
            }
        }
    }
    let ok = geo_bad == 0 && probe_bad == 0 && violations == 0 && searches > 0;
    pass_if(
        ok,
        format!(
            "geo draws != k+1: {geo_bad} of {} runs; probes != k: {probe_bad} of {runs}; \
             searches over ceil(log2 len)+1 comparisons: {violations} of {searches}",
            geo_runs + runs
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = BenchConfig {
        probs: vec![1e-3],
        index: IndexKind::Csr,
        method: UniformMethod::hybrid(),
        trials: 5,
        ..BenchConfig::new(6, 3)
    };
    let rows = bench(&cfg).unwrap();
    let ip = rows.iter().find(|r| r.strategy == "ip").unwrap();
    let ms = rows.iter().find(|r| r.strategy == "ms").unwrap();
    let ratio = ip.total.as_secs_f64() / ms.total.as_secs_f64();
    let ok = ratio <= 0.5 && within(start, Duration::from_secs(120));
    pass_if(
        ok,
        format!(
            "o=6 s=3 p=1e-3: I&P median {:.1} ms (build {:.1}, probe {:.1}) vs M&S {:.1} ms (build {:.1}, flatten {:.1}, scan {:.1}); ratio {ratio:.3}, speedup {:.2}x",
            ip.total.as_secs_f64() * 1e3,
            ip.build.as_secs_f64() * 1e3,
            ip.probe.as_secs_f64() * 1e3,
            ms.total.as_secs_f64() * 1e3,
            ms.build.as_secs_f64() * 1e3,
            ms.flatten.as_secs_f64() * 1e3,
            ms.scan.as_secs_f64() * 1e3,
            1.0 / ratio
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut lines = Vec::new();
    let mut usr_ok = true;
    let mut csr_steps = Vec::new();
    for s in 1..=5 {
        let mut cell = Vec::new();
        for index in [IndexKind::Csr, IndexKind::Usr] {
            let cfg = BenchConfig {
                probs: vec![1e-3],
                index,
                trials: 3,
                baseline: false,
                ..BenchConfig::new(6, s)
            };
            let row = bench(&cfg).unwrap().remove(0);
            if index == IndexKind::Usr {
                // Two levels per probe: root search over 10^s rows, slice search over d.
                let bound =
                    row.k * ((10f64.powi(s as i32)).log2().ceil() as u64 + 1 + (row.d as f64).log2().ceil() as u64 + 1);
                usr_ok &= row.bound_violations == 0 && row.comparisons <= bound;
                cell.push(format!("usr probe {:.2} ms, {} comparisons", row.probe.as_secs_f64() * 1e3, row.comparisons));
            } else {
                csr_steps.push(row.chain_steps);
                cell.push(format!("csr probe {:.2} ms, {} nxt steps", row.probe.as_secs_f64() * 1e3, row.chain_steps));
            }
        }
        lines.push(format!("d={}: {}", 10u64.pow(6 - s), cell.join(", ")));
    }
    let grows = csr_steps.windows(2).all(|w| w[0] >= w[1]);
    pass_if(
        usr_ok,
        format!(
            "{}; csr chain work {} with degree",
            lines.join("; "),
            if grows { "grows monotonically" } else { "does not grow monotonically" }
        ),
    )
}
