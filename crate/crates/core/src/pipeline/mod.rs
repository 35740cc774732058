//! End-to-end sampling strategies.
//!
//! Index-and-Probe builds a random-access index, samples positions of the
//! flat join and decodes only those. Materialize-and-Scan, the baseline,
//! flattens the whole join and runs one Bernoulli trial per output row.

mod bench;
mod oracle;

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::csr::CsrStore;
use crate::planner::{plan_query, JoinQuery, NsaPlan, PlanError};
use crate::sampling::{per_tuple_counted, Rng, SamplingError, UniformMethod};
use crate::shred::{IndexError, IndexKind, ProbeStats, RandomAccessIndex};
use crate::storage::{Column, Database, PhysicalRelation};
use crate::usr::UsrStore;

pub use bench::{bench, gen_synthetic, synthetic_query, write_bench_csv, BenchConfig, BenchRow, SYNTHETIC_QUERY};
pub use oracle::{oracle_join, oracle_sample_check, CheckFailure, CheckReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Storage(#[from] crate::storage::StorageError),
    #[error("query has no bern attribute and no uniform probability was given")]
    NoProbability,
    #[error("bern attribute `{0}` is not numeric")]
    NotNumeric(String),
    #[error("{0}")]
    Config(String),
}

/// How sample positions are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Probabilities from the query's bern attribute, one per root row;
    /// each row's positions are drawn with the inner method.
    PerTuple(UniformMethod),
    /// One probability for every tuple; the bern attribute is ignored.
    Uniform { method: UniformMethod, p: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleConfig {
    pub index: IndexKind,
    /// Probe with the cursor cache; `None` picks the default per index
    /// (on for chained, off for unchained).
    pub caching: Option<bool>,
    pub method: Method,
    /// Attribute that must be flat at the root. Defaults to the bern
    /// attribute for per-tuple sampling; uniform sampling keeps the tree
    /// as built.
    pub reroot_at: Option<String>,
}

impl SampleConfig {
    pub fn new(index: IndexKind, method: Method) -> Self {
        SampleConfig {
            index,
            caching: None,
            method,
            reroot_at: None,
        }
    }

    pub fn caching(&self) -> bool {
        self.caching.unwrap_or(self.index == IndexKind::Csr)
    }
}

/// Wall-clock time per phase. Index-and-Probe fills build / possample /
/// probe; Materialize-and-Scan fills build / flatten / scan.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub build: Duration,
    pub possample: Duration,
    pub probe: Duration,
    pub flatten: Duration,
    pub scan: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.build + self.possample + self.probe + self.flatten + self.scan
    }
}

#[derive(Clone, Debug)]
pub struct SampleResult {
    pub rows: PhysicalRelation,
    /// Size of the full join.
    pub n: u64,
    /// Sample size.
    pub k: u64,
    pub timings: PhaseTimings,
    pub stats: ProbeStats,
    /// Geometric draws made by position sampling.
    pub geom_draws: u64,
}

pub enum Index {
    Csr(CsrStore),
    Usr(UsrStore),
}

impl Index {
    pub fn build(kind: IndexKind, plan: &NsaPlan, db: &Database) -> Result<Self, IndexError> {
        Ok(match kind {
            IndexKind::Csr => Index::Csr(CsrStore::build(plan, db)?),
            IndexKind::Usr => Index::Usr(UsrStore::build(plan, db)?),
        })
    }

    pub fn as_dyn(&self) -> &(dyn RandomAccessIndex + Send + Sync) {
        match self {
            Index::Csr(s) => s,
            Index::Usr(s) => s,
        }
    }
}

/// Plans `q` with the attribute `cfg` requires at the root.
pub fn plan_for(q: &JoinQuery, cfg: &SampleConfig) -> Result<NsaPlan, PipelineError> {
    let root_attr = match (&cfg.reroot_at, cfg.method) {
        (Some(a), _) => Some(a.as_str()),
        (None, Method::PerTuple(_)) => Some(q.bern_attr.as_deref().ok_or(PipelineError::NoProbability)?),
        (None, Method::Uniform { .. }) => None,
    };
    Ok(plan_query(q, root_attr)?)
}

fn float_values(col: &Column, attr: &str) -> Result<Vec<f64>, PipelineError> {
    (0..col.len())
        .map(|i| col.as_f64(i).ok_or_else(|| PipelineError::NotNumeric(attr.to_string())))
        .collect()
}

/// An index built once and sampled many times.
pub struct Prepared {
    pub index: Index,
    cfg: SampleConfig,
    weights: Vec<u64>,
    probs: Option<Vec<f64>>,
    pub build_time: Duration,
}

impl Prepared {
    pub fn new(q: &JoinQuery, db: &Database, cfg: &SampleConfig) -> Result<Self, PipelineError> {
        let start = Instant::now();
        let plan = plan_for(q, cfg)?;
        let index = Index::build(cfg.index, &plan, db)?;
        let build_time = start.elapsed();
        let idx = index.as_dyn();
        let probs = match cfg.method {
            Method::PerTuple(_) => {
                let attr = q.bern_attr.as_deref().ok_or(PipelineError::NoProbability)?;
                let col = idx.root_column(attr).ok_or(PipelineError::NotNumeric(attr.to_string()))?;
                Some(float_values(col, attr)?)
            }
            Method::Uniform { .. } => None,
        };
        Ok(Prepared {
            weights: idx.root_weights(),
            index,
            cfg: cfg.clone(),
            probs,
            build_time,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<SampleResult, PipelineError> {
        let idx = self.index.as_dyn();
        let n = idx.total();
        let start = Instant::now();
        let (pos, geom_draws) = match (self.cfg.method, &self.probs) {
            (Method::PerTuple(inner), Some(probs)) => per_tuple_counted(&self.weights, probs, inner, rng)?,
            (Method::Uniform { method, p }, _) => method.sample_counted(p, n, rng)?,
            (Method::PerTuple(_), None) => unreachable!("per-tuple probabilities are loaded at build"),
        };
        let possample = start.elapsed();
        let start = Instant::now();
        let mut stats = ProbeStats::default();
        let rows = idx.get_with(&pos, self.cfg.caching(), &mut stats)?;
        let probe = start.elapsed();
        Ok(SampleResult {
            k: rows.len() as u64,
            rows,
            n,
            timings: PhaseTimings {
                build: self.build_time,
                possample,
                probe,
                ..Default::default()
            },
            stats,
            geom_draws,
        })
    }
}

pub fn index_and_probe(
    q: &JoinQuery,
    db: &Database,
    cfg: &SampleConfig,
    rng: &mut Rng,
) -> Result<SampleResult, PipelineError> {
    Prepared::new(q, db, cfg)?.sample(rng)
}

/// The flattened join with a probability per row, ready for scanning.
pub struct Materialized {
    pub flat: PhysicalRelation,
    probs: Vec<f64>,
    pub build_time: Duration,
    pub flatten_time: Duration,
}

impl Materialized {
    pub fn new(q: &JoinQuery, db: &Database, cfg: &SampleConfig) -> Result<Self, PipelineError> {
        let start = Instant::now();
        let plan = plan_for(q, cfg)?;
        let index = Index::build(cfg.index, &plan, db)?;
        let build_time = start.elapsed();
        let start = Instant::now();
        let flat = index.as_dyn().flatten();
        let flatten_time = start.elapsed();
        let probs = match cfg.method {
            Method::PerTuple(_) => {
                let attr = q.bern_attr.as_deref().ok_or(PipelineError::NoProbability)?;
                let col = flat.column(attr).ok_or(PipelineError::NotNumeric(attr.to_string()))?;
                let probs = float_values(col, attr)?;
                if let Some(row) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
                    return Err(SamplingError::ProbabilityOutOfRange { row, value: probs[row] }.into());
                }
                probs
            }
            Method::Uniform { p, .. } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(SamplingError::Domain(p).into());
                }
                vec![p; flat.len()]
            }
        };
        Ok(Materialized {
            flat,
            probs,
            build_time,
            flatten_time,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> SampleResult {
        use rand::Rng as _;
        let start = Instant::now();
        let keep: Vec<usize> = (0..self.flat.len()).filter(|&i| rng.gen::<f64>() < self.probs[i]).collect();
        let rows = gather_rows(&self.flat, &keep);
        let scan = start.elapsed();
        SampleResult {
            k: rows.len() as u64,
            rows,
            n: self.flat.len() as u64,
            timings: PhaseTimings {
                build: self.build_time,
                flatten: self.flatten_time,
                scan,
                ..Default::default()
            },
            stats: ProbeStats::default(),
            geom_draws: 0,
        }
    }
}

fn gather_rows(rel: &PhysicalRelation, rows: &[usize]) -> PhysicalRelation {
    let cols = rel.columns().iter().map(|c| std::sync::Arc::new(c.gather(rows))).collect();
    if rel.attrs().is_empty() {
        return PhysicalRelation::nullary("sample", rows.len());
    }
    PhysicalRelation::new("sample", rel.attrs().to_vec(), cols).expect("same shape")
}

pub fn materialize_and_scan(
    q: &JoinQuery,
    db: &Database,
    cfg: &SampleConfig,
    rng: &mut Rng,
) -> Result<SampleResult, PipelineError> {
    Ok(Materialized::new(q, db, cfg)?.sample(rng))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    IndexAndProbe(SampleConfig),
    MaterializeAndScan(SampleConfig),
}

impl Strategy {
    pub fn config(&self) -> &SampleConfig {
        match self {
            Strategy::IndexAndProbe(c) | Strategy::MaterializeAndScan(c) => c,
        }
    }
}
