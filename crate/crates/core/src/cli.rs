//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verification fails, 2 on usage or
//! input errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::pipeline::{
    bench, index_and_probe, materialize_and_scan, oracle_join, oracle_sample_check, plan_for, write_bench_csv,
    BenchConfig, Index, Method, SampleConfig, Strategy,
};
use crate::planner::{gyo_reduce, parse_query, plan_query, JoinQuery};
use crate::sampling::{rng_from_seed, UniformMethod, DEFAULT_THRESHOLD};
use crate::shred::IndexKind;
use crate::storage::{load_csv, to_csv_string, write_csv, Database};

#[derive(Parser, Debug)]
#[command(name = "joinsample", version, about = "Poisson sampling over acyclic joins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the join tree and the semijoin plan.
    Plan {
        query: PathBuf,
        /// Reroot so this attribute is flat at the root (default: the bern attribute).
        #[arg(long)]
        root: Option<String>,
    },
    /// Inspect the shredded index.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Enumerate the full join as CSV.
    Join {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = IndexArg::Csr)]
        index: IndexArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw one sample.
    Sample {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Use materialize-and-scan instead of index-and-probe.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check inclusion frequencies against the reference join.
    Verify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
        /// Failure threshold in standard errors.
        #[arg(long, default_value_t = 5.0)]
        z: f64,
        /// Also check materialize-and-scan.
        #[arg(long)]
        baseline: bool,
        /// CSV of per-tuple failures.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time both strategies on the synthetic degree benchmark.
    Bench {
        /// Join size exponent.
        #[arg(long, default_value_t = 6)]
        o: u32,
        /// Exponents of |S|, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        s: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "0.001")]
        p: Vec<f64>,
        #[arg(long, value_enum, default_value_t = IndexArg::Csr)]
        index: IndexArg,
        #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
        caching: Option<bool>,
        #[arg(long, value_enum, default_value_t = UniformArg::Hybrid)]
        method: UniformArg,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, env = "JS_SEED", default_value_t = 0)]
        seed: u64,
        /// Skip the materialize-and-scan baseline.
        #[arg(long)]
        no_baseline: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum IndexAction {
    /// Print every table of the index with its bookkeeping columns.
    Dump {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = IndexArg::Csr)]
        index: IndexArg,
        /// Directory to write one CSV per table into.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Input {
    query: PathBuf,
    /// Directory holding `<Relation>.csv` files (default: the query's directory).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SamplingArgs {
    #[arg(long, value_enum, default_value_t = IndexArg::Csr)]
    index: IndexArg,
    /// Per-tuple by default; a uniform method requires --p.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Uniform method used inside each root row for per-tuple sampling.
    #[arg(long, value_enum, default_value_t = UniformArg::Hybrid)]
    inner: UniformArg,
    /// One probability for every tuple, overriding the bern attribute.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, env = "JS_SEED", default_value_t = 0)]
    seed: u64,
    /// Probe with the cursor cache (default: on for csr, off for usr).
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    caching: Option<bool>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IndexArg {
    Csr,
    Usr,
}

impl From<IndexArg> for IndexKind {
    fn from(a: IndexArg) -> Self {
        match a {
            IndexArg::Csr => IndexKind::Csr,
            IndexArg::Usr => IndexKind::Usr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum MethodArg {
    Naive,
    Geo,
    Binom,
    Hybrid,
    PerTuple,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UniformArg {
    Naive,
    Geo,
    Binom,
    Hybrid,
}

impl UniformArg {
    fn method(self, threshold: f64) -> UniformMethod {
        match self {
            UniformArg::Naive => UniformMethod::Naive,
            UniformArg::Geo => UniformMethod::Geo,
            UniformArg::Binom => UniformMethod::Binom,
            UniformArg::Hybrid => UniformMethod::Hybrid { threshold },
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Verification(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl SamplingArgs {
    fn config(&self) -> Result<SampleConfig, Failure> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(usage(format!("--threshold {} is outside [0, 1]", self.threshold)));
        }
        let uniform = |m: MethodArg| match m {
            MethodArg::Naive => UniformMethod::Naive,
            MethodArg::Geo => UniformMethod::Geo,
            MethodArg::Binom => UniformMethod::Binom,
            MethodArg::Hybrid | MethodArg::PerTuple => UniformMethod::Hybrid {
                threshold: self.threshold,
            },
        };
        let method = match (self.p, self.method) {
            (Some(_), Some(MethodArg::PerTuple)) => {
                return Err(usage("--method per-tuple cannot be combined with --p"));
            }
            (Some(p), m) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(usage(format!("--p {p} is outside [0, 1]")));
                }
                Method::Uniform {
                    method: uniform(m.unwrap_or(MethodArg::Hybrid)),
                    p,
                }
            }
            (None, None | Some(MethodArg::PerTuple)) => Method::PerTuple(self.inner.method(self.threshold)),
            (None, Some(m)) => {
                return Err(usage(format!("--method {m:?} needs --p; use --inner to pick the per-tuple method")));
            }
        };
        Ok(SampleConfig {
            index: self.index.into(),
            caching: self.caching,
            method,
            reroot_at: None,
        })
    }
}

/// Loads every relation the query mentions. Declared relations come from
/// their `file=` (relative to the data directory); undeclared ones from
/// `<data>/<Name>.csv`.
pub fn load_database(q: &JoinQuery, data_dir: &Path) -> Result<Database, crate::storage::StorageError> {
    let mut db = Database::new();
    for atom in &q.atoms {
        if db.get(&atom.relation).is_ok() {
            continue;
        }
        let decl = q.relations.iter().find(|r| r.name == atom.relation);
        let path = match decl {
            Some(d) => data_dir.join(&d.file),
            None => data_dir.join(format!("{}.csv", atom.relation)),
        };
        let mut rel = load_csv(&path, None)?.with_name(atom.relation.clone());
        if let Some(attrs) = decl.and_then(|d| d.attrs.as_ref()) {
            rel = rel.project(attrs)?;
        }
        db.insert(rel);
    }
    Ok(db)
}

fn read_query(path: &Path) -> Result<JoinQuery, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_query(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_input(input: &Input) -> Result<(JoinQuery, Database), Failure> {
    let q = read_query(&input.query)?;
    let dir = match &input.data {
        Some(d) => d.clone(),
        None => input.query.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let db = load_database(&q, &dir)?;
    Ok((q, db))
}

fn write_output(path: Option<&Path>, contents: &str, stdout: &mut dyn Write) -> Outcome {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(stdout.write_all(contents.as_bytes())?),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(Failure::Verification(msg)) => {
            let _ = writeln!(stderr, "verification failed: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    match command {
        Command::Plan { query, root } => {
            let q = read_query(&query)?;
            let root = root.or_else(|| q.bern_attr.clone());
            writeln!(stdout, "query: {q}")?;
            writeln!(stdout, "join tree (GYO):")?;
            write!(stdout, "{}", gyo_reduce(&q)?)?;
            let plan = plan_query(&q, root.as_deref())?;
            if let Some(r) = &root {
                writeln!(stdout, "rerooted at `{r}`:")?;
                write!(stdout, "{}", plan.tree)?;
            }
            writeln!(stdout, "plan:")?;
            write!(stdout, "{plan}")?;
            Ok(())
        }
        Command::Index {
            action: IndexAction::Dump { input, index, output },
        } => {
            let (q, db) = load_input(&input)?;
            let plan = plan_query(&q, q.bern_attr.as_deref())?;
            let idx = Index::build(index.into(), &plan, &db)?;
            let tables = idx.as_dyn().dump();
            match output {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    for (i, t) in tables.iter().enumerate() {
                        let path = dir.join(format!("{i}_{}.csv", t.name()));
                        write_csv(t, fs::File::create(&path)?)?;
                        writeln!(stdout, "wrote {}", path.display())?;
                    }
                }
                None => {
                    for (i, t) in tables.iter().enumerate() {
                        writeln!(stdout, "# table {i}: {}", t.name())?;
                        write!(stdout, "{}", to_csv_string(t))?;
                    }
                }
            }
            Ok(())
        }
        Command::Join { input, index, output } => {
            let (q, db) = load_input(&input)?;
            let cfg = SampleConfig::new(index.into(), Method::Uniform {
                method: UniformMethod::Naive,
                p: 1.0,
            });
            let plan = plan_for(&q, &cfg)?;
            let idx = Index::build(cfg.index, &plan, &db)?;
            let flat = idx.as_dyn().flatten();
            if output.is_some() {
                writeln!(stdout, "{} rows", flat.len())?;
            }
            write_output(output.as_deref(), &to_csv_string(&flat), stdout)
        }
        Command::Sample {
            input,
            sampling,
            baseline,
            output,
        } => {
            let (q, db) = load_input(&input)?;
            let cfg = sampling.config()?;
            let mut rng = rng_from_seed(sampling.seed);
            let result = if baseline {
                materialize_and_scan(&q, &db, &cfg, &mut rng)?
            } else {
                index_and_probe(&q, &db, &cfg, &mut rng)?
            };
            let t = &result.timings;
            let summary = format!(
                "sampled {} of {} rows ({}, seed {}); build {:?}, positions {:?}, probe {:?}, flatten {:?}, scan {:?}",
                result.k,
                result.n,
                if baseline { "materialize-and-scan" } else { "index-and-probe" },
                sampling.seed,
                t.build,
                t.possample,
                t.probe,
                t.flatten,
                t.scan
            );
            match output {
                Some(_) => writeln!(stdout, "{summary}")?,
                None => writeln!(stderr, "{summary}")?,
            }
            write_output(output.as_deref(), &to_csv_string(&result.rows), stdout)
        }
        Command::Verify {
            input,
            sampling,
            trials,
            z,
            baseline,
            output,
        } => {
            if trials == 0 {
                return Err(usage("--trials must be positive"));
            }
            let (q, db) = load_input(&input)?;
            let cfg = sampling.config()?;
            let n = oracle_join(&q, &db)?.len();
            writeln!(stdout, "reference join: {n} rows")?;
            let mut strategies = vec![("index-and-probe", Strategy::IndexAndProbe(cfg.clone()))];
            if baseline {
                strategies.push(("materialize-and-scan", Strategy::MaterializeAndScan(cfg)));
            }
            let mut failed = Vec::new();
            let mut csv = String::from("strategy,tuple,multiplicity,p,observed,z\n");
            for (name, strategy) in &strategies {
                let report = oracle_sample_check(&q, &db, strategy, trials, sampling.seed, z)?;
                let verdict = if report.passed() { "pass" } else { "FAIL" };
                writeln!(stdout, "{name}: {verdict}: {report}")?;
                for f in &report.failures {
                    let tuple: Vec<String> = f.tuple.iter().map(|v| v.to_string()).collect();
                    csv.push_str(&format!(
                        "{name},\"{}\",{},{},{},{}\n",
                        tuple.join(" "),
                        f.multiplicity,
                        f.p,
                        f.observed,
                        f.z
                    ));
                }
                if !report.passed() {
                    failed.push(*name);
                }
            }
            if let Some(path) = &output {
                fs::write(path, csv)?;
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Verification(failed.join(", ")))
            }
        }
        Command::Bench {
            o,
            s,
            p,
            index,
            caching,
            method,
            threshold,
            trials,
            seed,
            no_baseline,
            output,
        } => {
            let mut rows = Vec::new();
            for s in s {
                let cfg = BenchConfig {
                    probs: p.clone(),
                    index: index.into(),
                    caching,
                    method: method.method(threshold),
                    trials,
                    seed,
                    baseline: !no_baseline,
                    ..BenchConfig::new(o, s)
                };
                let cell = bench(&cfg).map_err(|e| usage(e.to_string()))?;
                for r in &cell {
                    let sink: &mut dyn Write = if output.is_some() { &mut *stdout } else { &mut *stderr };
                    writeln!(
                        sink,
                        "{} {} o={} s={} d={} p={}: total {:.3} ms, k={} of n={}",
                        r.strategy,
                        r.index,
                        r.o,
                        r.s,
                        r.d,
                        r.p,
                        r.total.as_secs_f64() * 1e3,
                        r.k,
                        r.n
                    )?;
                }
                rows.extend(cell);
            }
            let mut buf = Vec::new();
            write_bench_csv(&rows, &mut buf)?;
            write_output(output.as_deref(), &String::from_utf8_lossy(&buf), stdout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("joinsample").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        let (code, _, err) = run_args(&["sample"]);
        assert_eq!(code, 2);
        assert!(err.contains("QUERY"), "{err}");
        let (code, _, err) = run_args(&["frobnicate"]);
        assert_eq!(code, 2, "{err}");
        let (code, _, err) = run_args(&["plan", "/nonexistent/q.txt"]);
        assert_eq!(code, 2);
        assert!(err.contains("/nonexistent/q.txt"));
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("bench"));
    }

    #[test]
    fn method_flags_are_checked() {
        let args = SamplingArgs {
            index: IndexArg::Csr,
            method: Some(MethodArg::Geo),
            inner: UniformArg::Hybrid,
            p: None,
            threshold: 0.5,
            seed: 0,
            caching: None,
        };
        assert!(matches!(args.config(), Err(Failure::Usage(m)) if m.contains("--p")));
        let args = SamplingArgs { p: Some(0.2), ..args };
        assert_eq!(args.config().unwrap().method, Method::Uniform { method: UniformMethod::Geo, p: 0.2 });
        let args = SamplingArgs { method: Some(MethodArg::PerTuple), ..args };
        assert!(args.config().is_err());
        let args = SamplingArgs { p: None, inner: UniformArg::Binom, ..args };
        assert_eq!(args.config().unwrap().method, Method::PerTuple(UniformMethod::Binom));
        let args = SamplingArgs { p: Some(1.5), method: None, ..args };
        assert!(matches!(args.config(), Err(Failure::Usage(m)) if m.contains("--p")));
    }
}
