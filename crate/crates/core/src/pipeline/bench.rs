//! Synthetic degree-modulation benchmark.
//!
//! `S(x,y)` has `10^s` rows with distinct `y`; `T(y,z)` has `10^o` rows,
//! `10^(o-s)` per `S` key, randomly permuted. The join always has `10^o`
//! rows while the degree `d = 10^(o-s)` of the join key varies.

use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;

use super::{Materialized, Method, PipelineError, Prepared, SampleConfig, SampleResult};
use crate::planner::{parse_query, JoinQuery};
use crate::sampling::{rng_from_seed, trial_seed, UniformMethod};
use crate::shred::IndexKind;
use crate::storage::{Column, Database, PhysicalRelation};

pub const SYNTHETIC_QUERY: &str = "S(x,y) T(y,z)";

pub fn synthetic_query() -> JoinQuery {
    parse_query(SYNTHETIC_QUERY).expect("static query")
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub o: u32,
    pub s: u32,
    pub probs: Vec<f64>,
    pub index: IndexKind,
    pub caching: Option<bool>,
    pub method: UniformMethod,
    pub trials: usize,
    pub seed: u64,
    /// Also time the materialize-and-scan baseline.
    pub baseline: bool,
}

impl BenchConfig {
    pub fn new(o: u32, s: u32) -> Self {
        BenchConfig {
            o,
            s,
            probs: vec![1e-3],
            index: IndexKind::Csr,
            caching: None,
            method: UniformMethod::hybrid(),
            trials: 5,
            seed: 0,
            baseline: true,
        }
    }

    pub fn degree(&self) -> u64 {
        10u64.pow(self.o - self.s)
    }

    fn validate(&self) -> Result<(), String> {
        if self.s < 1 || self.s >= self.o {
            return Err(format!("need 1 <= s < o, got o={} s={}", self.o, self.s));
        }
        if self.o > 9 {
            return Err(format!("o={} is beyond desk scale", self.o));
        }
        if self.trials == 0 {
            return Err("trials must be positive".into());
        }
        Ok(())
    }
}

/// Builds the benchmark instance for `(o, s)`; T is shuffled with `seed`.
pub fn gen_synthetic(o: u32, s: u32, seed: u64) -> Result<Database, String> {
    BenchConfig::new(o, s).validate()?;
    let (ns, nt) = (10i64.pow(s), 10i64.pow(o));
    let d = nt / ns;
    let x: Vec<i64> = (0..ns).collect();
    let mut t: Vec<(i64, i64)> = (0..nt).map(|j| (j / d, j)).collect();
    t.shuffle(&mut rng_from_seed(seed));
    let (ty, tz): (Vec<i64>, Vec<i64>) = t.into_iter().unzip();
    let s_rel = PhysicalRelation::new(
        "S",
        vec!["x".into(), "y".into()],
        vec![Arc::new(Column::Int(x.clone())), Arc::new(Column::Int(x))],
    );
    let t_rel = PhysicalRelation::new(
        "T",
        vec!["y".into(), "z".into()],
        vec![Arc::new(Column::Int(ty)), Arc::new(Column::Int(tz))],
    );
    let mut db = Database::new();
    db.insert(s_rel.map_err(|e| e.to_string())?);
    db.insert(t_rel.map_err(|e| e.to_string())?);
    Ok(db)
}

/// Median timings and counters of one (strategy, p) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub strategy: &'static str,
    pub o: u32,
    pub s: u32,
    pub d: u64,
    pub index: IndexKind,
    pub caching: bool,
    pub p: f64,
    pub build: Duration,
    pub possample: Duration,
    pub probe: Duration,
    pub flatten: Duration,
    pub scan: Duration,
    pub total: Duration,
    /// Median sample size; `ks` holds every trial's.
    pub k: u64,
    pub ks: Vec<u64>,
    pub n: u64,
    pub chain_steps: u64,
    pub comparisons: u64,
    pub bound_violations: u64,
}

fn median<T: Ord + Copy>(mut v: Vec<T>) -> T {
    v.sort_unstable();
    v[v.len() / 2]
}

fn summarize(strategy: &'static str, cfg: &BenchConfig, caching: bool, p: f64, runs: &[SampleResult]) -> BenchRow {
    let pick = |f: &dyn Fn(&SampleResult) -> Duration| median(runs.iter().map(f).collect());
    let ks: Vec<u64> = runs.iter().map(|r| r.k).collect();
    BenchRow {
        strategy,
        o: cfg.o,
        s: cfg.s,
        d: cfg.degree(),
        index: cfg.index,
        caching,
        p,
        build: pick(&|r| r.timings.build),
        possample: pick(&|r| r.timings.possample),
        probe: pick(&|r| r.timings.probe),
        flatten: pick(&|r| r.timings.flatten),
        scan: pick(&|r| r.timings.scan),
        total: pick(&|r| r.timings.total()),
        k: median(ks.clone()),
        ks,
        n: runs[0].n,
        chain_steps: median(runs.iter().map(|r| r.stats.chain_steps).collect()),
        comparisons: median(runs.iter().map(|r| r.stats.comparisons).collect()),
        bound_violations: runs.iter().map(|r| r.stats.bound_violations).sum(),
    }
}

/// Times every probability of `cfg`: each trial rebuilds the index so that
/// build time is part of every measurement. One untimed warm-up run
/// precedes the trials of each cell.
pub fn bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let db = gen_synthetic(cfg.o, cfg.s, cfg.seed).map_err(PipelineError::Config)?;
    let q = synthetic_query();
    let mut rows = Vec::new();
    for &p in &cfg.probs {
        let sc = SampleConfig {
            index: cfg.index,
            caching: cfg.caching,
            method: Method::Uniform { method: cfg.method, p },
            reroot_at: Some("x".into()),
        };
        let mut run_ip = |t: u64| -> Result<SampleResult, PipelineError> {
            let prepared = Prepared::new(&q, &db, &sc)?;
            prepared.sample(&mut rng_from_seed(trial_seed(cfg.seed, t)))
        };
        run_ip(u64::MAX)?;
        let runs = (0..cfg.trials as u64).map(&mut run_ip).collect::<Result<Vec<_>, _>>()?;
        rows.push(summarize("ip", cfg, sc.caching(), p, &runs));

        if cfg.baseline {
            let mut run_ms = |t: u64| -> Result<SampleResult, PipelineError> {
                let m = Materialized::new(&q, &db, &sc)?;
                Ok(m.sample(&mut rng_from_seed(trial_seed(cfg.seed, t))))
            };
            run_ms(u64::MAX)?;
            let runs = (0..cfg.trials as u64).map(&mut run_ms).collect::<Result<Vec<_>, _>>()?;
            rows.push(summarize("ms", cfg, false, p, &runs));
        }
    }
    Ok(rows)
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy", "o", "s", "d", "index", "caching", "p", "build_ms", "possample_ms", "probe_ms", "flatten_ms",
        "scan_ms", "total_ms", "k", "n", "nxt_steps", "comparisons",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            r.o.to_string(),
            r.s.to_string(),
            r.d.to_string(),
            r.index.to_string(),
            r.caching.to_string(),
            r.p.to_string(),
            ms(r.build),
            ms(r.possample),
            ms(r.probe),
            ms(r.flatten),
            ms(r.scan),
            ms(r.total),
            r.k.to_string(),
            r.n.to_string(),
            r.chain_steps.to_string(),
            r.comparisons.to_string(),
        ])?;
    }
    w.flush()
}
