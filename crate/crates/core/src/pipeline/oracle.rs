//! Reference join and statistical check of sampling strategies.

use std::collections::HashMap;
use std::fmt;

use super::{Materialized, Method, PipelineError, Prepared, Strategy};
use crate::planner::JoinQuery;
use crate::sampling::{rng_from_seed, trial_seed};
use crate::shred::IndexError;
use crate::storage::{Column, Database, PhysicalRelation, Value};

/// Nested-loop join over the atoms in query order; every combination of
/// consistent rows contributes one output row, so multiplicities multiply.
pub fn oracle_join(q: &JoinQuery, db: &Database) -> Result<PhysicalRelation, PipelineError> {
    let out_attrs = q.output_attrs();
    let mut atoms = Vec::with_capacity(q.atoms.len());
    for atom in &q.atoms {
        let rel = db.get(&atom.relation)?;
        if rel.attrs().len() != atom.attrs.len() {
            return Err(IndexError::Arity {
                atom: atom.to_string(),
                expected: rel.attrs().len(),
                found: atom.attrs.len(),
            }
            .into());
        }
        let slots: Vec<usize> = atom
            .attrs
            .iter()
            .map(|a| out_attrs.iter().position(|o| o == a).expect("output covers atom"))
            .collect();
        atoms.push((rel, slots));
    }

    let mut rows: Vec<Vec<Value>> = Vec::new();
    let mut binding: Vec<Option<Value>> = vec![None; out_attrs.len()];
    extend(&atoms, 0, &mut binding, &mut rows);

    let mut columns: Vec<Option<Column>> = vec![None; out_attrs.len()];
    for row in &rows {
        for (c, v) in columns.iter_mut().zip(row) {
            let col = c.get_or_insert_with(|| Column::empty(v.kind()));
            col.push(v.clone()).expect("attribute values share a kind");
        }
    }
    if out_attrs.is_empty() {
        return Ok(PhysicalRelation::from_rows("oracle", &[], rows)?);
    }
    let columns = columns
        .into_iter()
        .enumerate()
        .map(|(i, c)| std::sync::Arc::new(c.unwrap_or_else(|| Column::empty(first_kind(&atoms, i)))))
        .collect();
    Ok(PhysicalRelation::new("oracle", out_attrs, columns)?)
}

fn first_kind(atoms: &[(&PhysicalRelation, Vec<usize>)], slot: usize) -> crate::storage::Kind {
    atoms
        .iter()
        .find_map(|(rel, slots)| slots.iter().position(|&s| s == slot).map(|c| rel.columns()[c].kind()))
        .expect("slot belongs to an atom")
}

fn extend(
    atoms: &[(&PhysicalRelation, Vec<usize>)],
    depth: usize,
    binding: &mut Vec<Option<Value>>,
    out: &mut Vec<Vec<Value>>,
) {
    let Some((rel, slots)) = atoms.get(depth) else {
        out.push(binding.iter().map(|v| v.clone().expect("all attributes bound")).collect());
        return;
    };
    for r in 0..rel.len() {
        let row = rel.row(r);
        let consistent = slots
            .iter()
            .zip(&row)
            .all(|(&s, v)| binding[s].as_ref().is_none_or(|b| b == v));
        if !consistent {
            continue;
        }
        let fresh: Vec<usize> = slots.iter().copied().filter(|&s| binding[s].is_none()).collect();
        for (&s, v) in slots.iter().zip(&row) {
            binding[s] = Some(v.clone());
        }
        extend(atoms, depth + 1, binding, out);
        for s in fresh {
            binding[s] = None;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckFailure {
    pub tuple: Vec<Value>,
    pub multiplicity: u64,
    pub p: f64,
    pub observed: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub trials: u64,
    /// Distinct tuples of the oracle join.
    pub tuples: usize,
    pub max_abs_z: f64,
    pub failures: Vec<CheckFailure>,
    /// Sampled rows that are not in the oracle join, or appear more often
    /// in a single sample than in the join.
    pub unexpected: u64,
    /// Trials whose probe count differed from the sample size.
    pub probe_mismatches: u64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.unexpected == 0 && self.probe_mismatches == 0
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} trials, {} distinct tuples, max |z| = {:.3}, {} failures, {} unexpected rows",
            self.trials,
            self.tuples,
            self.max_abs_z,
            self.failures.len(),
            self.unexpected
        )
    }
}

/// One seeded trial: the sample and whether the probe counters agreed.
type Trial<'a> = dyn FnMut(u64) -> Result<(PhysicalRelation, bool), PipelineError> + 'a;

/// Runs `strategy` for `trials` seeded trials and tests every oracle
/// tuple's inclusion frequency against its probability at `z_limit`
/// standard errors. Frequencies for probabilities 0 and 1 must be exact.
pub fn oracle_sample_check(
    q: &JoinQuery,
    db: &Database,
    strategy: &Strategy,
    trials: u64,
    seed: u64,
    z_limit: f64,
) -> Result<CheckReport, PipelineError> {
    let oracle = oracle_join(q, db)?;
    let cfg = strategy.config();
    let attrs = oracle.attrs().to_vec();
    let p_slot = match cfg.method {
        Method::PerTuple(_) => {
            let attr = q.bern_attr.as_deref().ok_or(PipelineError::NoProbability)?;
            Some(attrs.iter().position(|a| a == attr).expect("bern attribute is in the output"))
        }
        Method::Uniform { .. } => None,
    };

    let mut ids: HashMap<Vec<Value>, usize> = HashMap::new();
    let mut multiplicity: Vec<u64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for row in oracle.rows() {
        let next = ids.len();
        let id = *ids.entry(row.clone()).or_insert(next);
        if id == multiplicity.len() {
            multiplicity.push(0);
            probs.push(match (p_slot, cfg.method) {
                (Some(s), _) => row[s].as_f64().ok_or_else(|| PipelineError::NotNumeric(attrs[s].clone()))?,
                (None, Method::Uniform { p, .. }) => p,
                (None, Method::PerTuple(_)) => unreachable!(),
            });
        }
        multiplicity[id] += 1;
    }

    let prepared;
    let materialized;
    let mut run: Box<Trial> = match strategy {
        Strategy::IndexAndProbe(cfg) => {
            prepared = Prepared::new(q, db, cfg)?;
            Box::new(|s| {
                let r = prepared.sample(&mut rng_from_seed(s))?;
                let ok = r.stats.probes == r.k;
                Ok((r.rows, ok))
            })
        }
        Strategy::MaterializeAndScan(cfg) => {
            materialized = Materialized::new(q, db, cfg)?;
            Box::new(|s| Ok((materialized.sample(&mut rng_from_seed(s)).rows, true)))
        }
    };

    let mut report = CheckReport {
        trials,
        tuples: multiplicity.len(),
        ..Default::default()
    };
    let mut hits = vec![0u64; multiplicity.len()];
    let mut this_trial = vec![0u64; multiplicity.len()];
    for t in 0..trials {
        let (rows, probes_ok) = run(trial_seed(seed, t))?;
        if !probes_ok {
            report.probe_mismatches += 1;
        }
        this_trial.iter_mut().for_each(|c| *c = 0);
        for row in rows.rows() {
            let Some(&id) = ids.get(&row) else {
                report.unexpected += 1;
                continue;
            };
            this_trial[id] += 1;
            if this_trial[id] > multiplicity[id] {
                report.unexpected += 1;
            }
        }
        for (h, c) in hits.iter_mut().zip(&this_trial) {
            *h += c;
        }
    }

    let tuples: Vec<Vec<Value>> = {
        let mut by_id = vec![Vec::new(); ids.len()];
        for (row, id) in ids {
            by_id[id] = row;
        }
        by_id
    };
    score(&mut report, &tuples, &multiplicity, &probs, &hits, z_limit);
    Ok(report)
}

/// z-score of every tuple's hit count; records failures beyond `z_limit`.
fn score(report: &mut CheckReport, tuples: &[Vec<Value>], multiplicity: &[u64], probs: &[f64], hits: &[u64], z_limit: f64) {
    let n = report.trials as f64;
    for id in 0..multiplicity.len() {
        let (m, p) = (multiplicity[id] as f64, probs[id]);
        let observed = hits[id] as f64 / n;
        let expected = m * p;
        let z = if p == 0.0 || p == 1.0 {
            if observed == expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (observed - expected) / (m * p * (1.0 - p) / n).sqrt()
        };
        report.max_abs_z = report.max_abs_z.max(z.abs());
        if z.abs() > z_limit {
            report.failures.push(CheckFailure {
                tuple: tuples[id].clone(),
                multiplicity: multiplicity[id],
                p,
                observed,
                z,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{figure_db, figure_db_with_probs, figure_query};
    use crate::pipeline::SampleConfig;
    use crate::planner::parse_query;
    use crate::sampling::UniformMethod;
    use crate::shred::IndexKind;

    #[test]
    fn figure_join_has_25_rows() {
        let j = oracle_join(&figure_query(), &figure_db()).unwrap();
        assert_eq!(j.len(), 25);
        assert_eq!(j.attrs(), ["x", "y", "p", "u", "a", "v"]);
    }

    #[test]
    fn disjoint_keys_give_nothing() {
        let mut db = Database::new();
        db.insert(PhysicalRelation::from_rows("A", &["k"], vec![vec![Value::Int(1)]]).unwrap());
        db.insert(PhysicalRelation::from_rows("B", &["k"], vec![vec![Value::Int(2)]]).unwrap());
        let q = parse_query("A(k) B(k)").unwrap();
        let j = oracle_join(&q, &db).unwrap();
        assert_eq!(j.len(), 0);
        assert_eq!(j.attrs(), ["k"]);
    }

    #[test]
    fn duplicates_multiply() {
        // A = {(1,a), (1,a)}, B = {(1,b), (1,c)}: each B row pairs with
        // both copies of the A row.
        let mut db = Database::new();
        let a = vec![vec![Value::Int(1), Value::str("a")]; 2];
        let b = vec![vec![Value::Int(1), Value::str("b")], vec![Value::Int(1), Value::str("c")]];
        db.insert(PhysicalRelation::from_rows("A", &["k", "x"], a).unwrap());
        db.insert(PhysicalRelation::from_rows("B", &["k", "y"], b).unwrap());
        let q = parse_query("A(k,x) B(k,y)").unwrap();
        let j = oracle_join(&q, &db).unwrap();
        assert_eq!(j.len(), 4);
        let bs = j.rows().filter(|r| r[2] == Value::str("b")).count();
        assert_eq!(bs, 2);
    }

    #[test]
    fn check_exact_cases() {
        let q = figure_query();
        let cfg = SampleConfig::new(IndexKind::Csr, Method::PerTuple(UniformMethod::Geo));
        for (p, trials) in [(1.0, 20), (0.0, 20)] {
            let db = figure_db_with_probs([p; 6]);
            for strategy in [Strategy::IndexAndProbe(cfg.clone()), Strategy::MaterializeAndScan(cfg.clone())] {
                let r = oracle_sample_check(&q, &db, &strategy, trials, 3, 5.0).unwrap();
                assert!(r.passed(), "{r}");
                assert_eq!(r.max_abs_z, 0.0);
            }
        }
    }

    #[test]
    fn scoring_flags_bias_and_inexact_base_cases() {
        let tuples = vec![vec![Value::Int(0)], vec![Value::Int(1)], vec![Value::Int(2)]];
        let mut report = CheckReport {
            trials: 10_000,
            ..Default::default()
        };
        // p = 0.3 observed at 0.3, p = 0.3 observed at 0.33 (z ~ 6.5), p = 1 observed short by one.
        score(&mut report, &tuples, &[1, 1, 1], &[0.3, 0.3, 1.0], &[3000, 3300, 9999], 5.0);
        assert_eq!(report.failures.len(), 2);
        assert_eq!(report.failures[0].tuple, tuples[1]);
        assert!((report.failures[0].z - 6.547).abs() < 1e-2);
        assert!(report.failures[1].z.is_infinite());
    }

    #[test]
    fn mixed_probabilities_pass() {
        let q = figure_query();
        let db = figure_db_with_probs([0.1, 0.35, 0.6, 0.9, 0.35, 0.1]);
        for index in [IndexKind::Csr, IndexKind::Usr] {
            let cfg = SampleConfig::new(index, Method::PerTuple(UniformMethod::hybrid()));
            let r = oracle_sample_check(&q, &db, &Strategy::IndexAndProbe(cfg), 4000, 1, 5.0).unwrap();
            assert!(r.passed(), "{r}");
            assert_eq!(r.tuples, 25);
        }
    }
}
