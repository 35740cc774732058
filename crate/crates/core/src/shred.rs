//! Pieces shared by the chained and unchained shredded representations.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::planner::{Atom, NsaPlan};
use crate::storage::{Column, Database, PhysicalRelation, StorageError};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("atom {atom} has {found} attributes but relation has {expected} columns")]
    Arity {
        atom: String,
        expected: usize,
        found: usize,
    },
    #[error("semijoin attribute `{0}` is not flat in both schemes, or the union repeats it")]
    SchemeClash(String),
    #[error("weight or prefix sum overflows 64 bits")]
    Overflow,
    #[error("position {pos} out of range for join of size {n}")]
    PositionOutOfRange { pos: u64, n: u64 },
    #[error("probe sequence not strictly increasing at index {index} ({prev} then {next})")]
    NonIncreasingProbeSequence { index: usize, prev: u64, next: u64 },
    #[error("row {row} out of range for table {table} of {len} rows")]
    OutOfRange { table: usize, row: usize, len: usize },
    #[error("store has no prefix vector; finalize it first")]
    NotFinalized,
    #[error("output attribute order does not match the store's attributes")]
    OutputOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexKind {
    Csr,
    Usr,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Csr => "csr",
            IndexKind::Usr => "usr",
        })
    }
}

impl std::str::FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csr" => Ok(IndexKind::Csr),
            "usr" => Ok(IndexKind::Usr),
            other => Err(format!("unknown index kind `{other}` (expected csr or usr)")),
        }
    }
}

/// Work counters collected while probing an index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProbeStats {
    /// Positions accessed.
    pub probes: u64,
    /// `nxt` dereferences while walking chains (chained only).
    pub chain_steps: u64,
    /// Prefix-vector comparisons made by binary searches.
    pub comparisons: u64,
    /// Binary searches performed.
    pub searches: u64,
    /// Searches that made more than `ceil(log2(len)) + 1` comparisons.
    pub bound_violations: u64,
}

impl ProbeStats {
    pub fn merge(&mut self, other: &ProbeStats) {
        self.probes += other.probes;
        self.chain_steps += other.chain_steps;
        self.comparisons += other.comparisons;
        self.searches += other.searches;
        self.bound_violations += other.bound_violations;
    }
}

/// Read access shared by both representations.
pub trait RandomAccessIndex {
    fn kind(&self) -> IndexKind;

    /// Number of tuples in the flattened join.
    fn total(&self) -> u64;

    /// Output attributes, in output column order.
    fn attrs(&self) -> &[String];

    /// Rows of the root table.
    fn root_len(&self) -> usize;

    /// Weight of root row `row`.
    fn root_weight(&self, row: usize) -> u64;

    fn root_weights(&self) -> Vec<u64> {
        (0..self.root_len()).map(|r| self.root_weight(r)).collect()
    }

    /// Flat column of the root table.
    fn root_column(&self, attr: &str) -> Option<&Column>;

    /// Total tuples stored across all tables.
    fn size(&self) -> usize;

    /// Tuples at `pos`, in `pos` order.
    fn get_with(&self, pos: &[u64], cached: bool, stats: &mut ProbeStats) -> Result<PhysicalRelation, IndexError>;

    fn get(&self, pos: &[u64]) -> Result<PhysicalRelation, IndexError> {
        self.get_with(pos, false, &mut ProbeStats::default())
    }

    fn get_cached(&self, pos: &[u64]) -> Result<PhysicalRelation, IndexError> {
        self.get_with(pos, true, &mut ProbeStats::default())
    }

    /// The full join, in the index's enumeration order.
    fn flatten(&self) -> PhysicalRelation;

    /// One relation per table, with the bookkeeping columns, in table order.
    fn dump(&self) -> Vec<PhysicalRelation>;
}

/// The relation bound to an atom: columns of `atom.relation`, renamed
/// positionally to the atom's attributes.
pub fn bind_atom(db: &Database, atom: &Atom) -> Result<PhysicalRelation, IndexError> {
    let rel = db.get(&atom.relation)?;
    if rel.attrs().len() != atom.attrs.len() {
        return Err(IndexError::Arity {
            atom: atom.to_string(),
            expected: rel.attrs().len(),
            found: atom.attrs.len(),
        });
    }
    Ok(rel.renamed(atom.attrs.clone())?)
}

/// Output attribute order: first appearance across the plan's atoms.
pub fn output_order(plan: &NsaPlan) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for atom in plan.tree.atoms() {
        for a in &atom.attrs {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
    }
    out
}

pub(crate) fn check_positions(pos: &[u64], n: u64) -> Result<(), IndexError> {
    for (idx, &p) in pos.iter().enumerate() {
        if p >= n {
            return Err(IndexError::PositionOutOfRange { pos: p, n });
        }
        if idx > 0 && pos[idx - 1] >= p {
            return Err(IndexError::NonIncreasingProbeSequence {
                index: idx,
                prev: pos[idx - 1],
                next: p,
            });
        }
    }
    Ok(())
}

pub(crate) fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        u64::from(usize::BITS - (n - 1).leading_zeros())
    }
}

/// Leftmost `j` with `target < prefix[j]`, counting comparisons.
pub(crate) fn search_prefix(prefix: &[u64], target: u64, stats: &mut ProbeStats) -> usize {
    let (mut lo, mut hi) = (0, prefix.len());
    let mut comparisons = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        comparisons += 1;
        if target < prefix[mid] {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    stats.searches += 1;
    stats.comparisons += comparisons;
    if comparisons > ceil_log2(prefix.len()) + 1 {
        stats.bound_violations += 1;
    }
    lo
}

/// Where each output attribute lives: (table, flat column).
#[derive(Clone, Debug, Default)]
pub(crate) struct Layout {
    pub attrs: Vec<String>,
    pub slots: Vec<(usize, usize)>,
}

impl Layout {
    /// `tables` lists each table's flat attributes.
    pub fn new(order: &[String], tables: &[&[String]]) -> Result<Self, IndexError> {
        let total: usize = tables.iter().map(|t| t.len()).sum();
        if total != order.len() {
            return Err(IndexError::OutputOrder);
        }
        let mut slots = Vec::with_capacity(order.len());
        for attr in order {
            let slot = tables
                .iter()
                .enumerate()
                .find_map(|(t, attrs)| attrs.iter().position(|a| a == attr).map(|c| (t, c)))
                .ok_or(IndexError::OutputOrder)?;
            slots.push(slot);
        }
        Ok(Layout {
            attrs: order.to_vec(),
            slots,
        })
    }

    /// Gathers output columns from per-table row selections.
    pub fn materialize(
        &self,
        name: &str,
        columns: &[&[Arc<Column>]],
        selection: &[Vec<usize>],
        rows: usize,
    ) -> PhysicalRelation {
        if self.attrs.is_empty() {
            return PhysicalRelation::nullary(name, rows);
        }
        let cols = self
            .slots
            .iter()
            .map(|&(t, c)| Arc::new(columns[t][c].gather(&selection[t])))
            .collect();
        PhysicalRelation::new(name, self.attrs.clone(), cols).expect("layout is consistent")
    }
}

/// Label for a nested attribute in dumps: the child table's flat attributes.
pub(crate) fn link_label(child_attrs: &[String], node: usize) -> String {
    if child_attrs.is_empty() {
        format!("node{node}")
    } else {
        child_attrs.join(".")
    }
}

pub(crate) fn int_column<I: IntoIterator<Item = i64>>(values: I) -> Arc<Column> {
    Arc::new(Column::Int(values.into_iter().collect()))
}

pub(crate) fn checked_weight<I: IntoIterator<Item = u64>>(factors: I) -> Result<u64, IndexError> {
    factors
        .into_iter()
        .try_fold(1u64, |acc, w| acc.checked_mul(w))
        .ok_or(IndexError::Overflow)
}

pub(crate) fn inclusive_prefix<I: IntoIterator<Item = u64>>(weights: I) -> Result<Vec<u64>, IndexError> {
    let mut acc = 0u64;
    weights
        .into_iter()
        .map(|w| {
            acc = acc.checked_add(w).ok_or(IndexError::Overflow)?;
            Ok(acc)
        })
        .collect()
}
