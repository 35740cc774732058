//! Unchained shredded representation (USR).
//!
//! Instead of linked chains, each non-root table carries a permutation that
//! lays every group out as a contiguous slice, together with a prefix sum of
//! element weights that restarts at every slice. A parent row refers to its
//! nested bag by `(start, len, w)`. Locating the element holding a digit is
//! a binary search inside the slice rather than a chain walk.

use std::sync::Arc;

use crate::keys::KeyMap;
use crate::planner::NsaPlan;
use crate::shred::{
    bind_atom, check_positions, checked_weight, inclusive_prefix, int_column, link_label,
    output_order, search_prefix, IndexError, IndexKind, Layout, ProbeStats, RandomAccessIndex,
};
use crate::storage::{Column, Database, PhysicalRelation, Value};

#[derive(Clone, Debug)]
pub struct UsrLink {
    pub table: usize,
    /// First slot of the nested bag's slice in the child's `perm`.
    pub start: Vec<usize>,
    pub len: Vec<usize>,
    pub w: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct UsrTable {
    pub node: usize,
    pub attrs: Vec<String>,
    pub columns: Vec<Arc<Column>>,
    pub len: usize,
    pub links: Vec<UsrLink>,
    /// Rows in slice order; absent on the root, whose order is the identity.
    pub perm: Option<Vec<usize>>,
    /// Inclusive prefix sums of weights in `perm` order, restarting at every
    /// slice; on the root a single running sum. Empty until grouped or
    /// finalized.
    pub pref: Vec<u64>,
}

impl UsrTable {
    fn from_relation(node: usize, rel: PhysicalRelation) -> Self {
        UsrTable {
            node,
            attrs: rel.attrs().to_vec(),
            columns: rel.columns().to_vec(),
            len: rel.len(),
            links: Vec::new(),
            perm: None,
            pref: Vec::new(),
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> u64 {
        self.links.iter().map(|l| l.w[i]).product()
    }

    fn checked_weight(&self, i: usize) -> Result<u64, IndexError> {
        checked_weight(self.links.iter().map(|l| l.w[i]))
    }

    fn key_columns(&self, keys: &[String]) -> Result<Vec<&Column>, IndexError> {
        keys.iter()
            .map(|k| {
                self.attrs
                    .iter()
                    .position(|a| a == k)
                    .map(|c| self.columns[c].as_ref())
                    .ok_or_else(|| IndexError::SchemeClash(k.clone()))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct UsrGrouping {
    keys: KeyMap,
    /// Per group, in first-encounter order: slice start, length and weight.
    pub starts: Vec<usize>,
    pub lens: Vec<usize>,
    pub weights: Vec<u64>,
    pub perm: Vec<usize>,
    pub pref: Vec<u64>,
}

impl UsrGrouping {
    /// (start, len, weight) of the group with key `key`.
    pub fn get(&self, key: &[Value]) -> Option<(usize, usize, u64)> {
        self.keys.lookup_values(key).map(|g| {
            let g = g as usize;
            (self.starts[g], self.lens[g], self.weights[g])
        })
    }
}

/// Groups `table` on `keys` in two passes: count group sizes, then place
/// rows into their slices in scan order.
pub fn usr_group(table: &UsrTable, keys: &[String]) -> Result<UsrGrouping, IndexError> {
    let cols = table.key_columns(keys)?;
    let grouped = KeyMap::group(&cols, table.len);
    let mut lens = vec![0usize; grouped.groups];
    for &g in &grouped.group_of {
        lens[g as usize] += 1;
    }
    let mut starts = Vec::with_capacity(grouped.groups);
    let mut acc = 0;
    for &l in &lens {
        starts.push(acc);
        acc += l;
    }
    let mut fill = starts.clone();
    let mut perm = vec![0usize; table.len];
    let mut pref = vec![0u64; table.len];
    let mut weights = vec![0u64; grouped.groups];
    for (i, &g) in grouped.group_of.iter().enumerate() {
        let g = g as usize;
        let w = table.checked_weight(i)?;
        weights[g] = weights[g].checked_add(w).ok_or(IndexError::Overflow)?;
        perm[fill[g]] = i;
        pref[fill[g]] = weights[g];
        fill[g] += 1;
    }
    Ok(UsrGrouping {
        keys: grouped.map,
        starts,
        lens,
        weights,
        perm,
        pref,
    })
}

#[derive(Clone, Debug)]
pub struct UsrStore {
    tables: Vec<UsrTable>,
    root: usize,
    layout: Option<Layout>,
    finalized: bool,
}

impl UsrStore {
    pub fn from_relation(node: usize, rel: PhysicalRelation) -> Self {
        UsrStore {
            tables: vec![UsrTable::from_relation(node, rel)],
            root: 0,
            layout: None,
            finalized: false,
        }
    }

    pub fn build(plan: &NsaPlan, db: &Database) -> Result<Self, IndexError> {
        let mut stores: Vec<Option<UsrStore>> = plan
            .tree
            .atoms()
            .iter()
            .enumerate()
            .map(|(node, atom)| bind_atom(db, atom).map(|rel| Some(UsrStore::from_relation(node, rel))))
            .collect::<Result<_, _>>()?;
        for step in &plan.steps {
            let child = stores[step.child].take().expect("child built before use");
            let parent = stores[step.parent].take().expect("parent present");
            stores[step.parent] = Some(parent.semijoin(child, &step.shared)?);
        }
        let store = stores[plan.root()].take().expect("root store");
        store.finalize()?.with_output_order(&output_order(plan))
    }

    /// `self ⋉̂ child` on the shared flat attributes `z`.
    pub fn semijoin(mut self, mut child: UsrStore, z: &[String]) -> Result<Self, IndexError> {
        self.check_union(&child, z)?;
        let grouping = usr_group(&child.tables[child.root], z)?;

        let parent_root = &self.tables[self.root];
        let probe_cols = parent_root.key_columns(z)?;
        let mut keep = Vec::with_capacity(parent_root.len);
        let mut start = Vec::with_capacity(parent_root.len);
        let mut len = Vec::with_capacity(parent_root.len);
        let mut w = Vec::with_capacity(parent_root.len);
        for r in 0..parent_root.len {
            if let Some(g) = grouping.keys.lookup(&probe_cols, r) {
                let g = g as usize;
                keep.push(r);
                start.push(grouping.starts[g]);
                len.push(grouping.lens[g]);
                w.push(grouping.weights[g]);
            }
        }

        let offset = self.tables.len();
        let child_root = child.root;
        {
            let croot = &mut child.tables[child_root];
            let kept: Vec<usize> = (0..croot.attrs.len()).filter(|&c| !z.contains(&croot.attrs[c])).collect();
            croot.columns = kept.iter().map(|&c| croot.columns[c].clone()).collect();
            croot.attrs = kept.iter().map(|&c| croot.attrs[c].clone()).collect();
            croot.perm = Some(grouping.perm);
            croot.pref = grouping.pref;
        }
        for table in &mut child.tables {
            for link in &mut table.links {
                link.table += offset;
            }
        }

        let root = &mut self.tables[self.root];
        if keep.len() != root.len {
            root.columns = root.columns.iter().map(|c| Arc::new(c.gather(&keep))).collect();
            for link in &mut root.links {
                link.start = keep.iter().map(|&r| link.start[r]).collect();
                link.len = keep.iter().map(|&r| link.len[r]).collect();
                link.w = keep.iter().map(|&r| link.w[r]).collect();
            }
            root.len = keep.len();
        }
        root.links.push(UsrLink {
            table: offset + child_root,
            start,
            len,
            w,
        });
        root.pref.clear();
        self.tables.extend(child.tables);
        self.layout = None;
        self.finalized = false;
        Ok(self)
    }

    fn check_union(&self, child: &UsrStore, z: &[String]) -> Result<(), IndexError> {
        let prow = &self.tables[self.root].attrs;
        let crow = &child.tables[child.root].attrs;
        if let Some(a) = z.iter().find(|a| !prow.contains(a) || !crow.contains(a)) {
            return Err(IndexError::SchemeClash(a.clone()));
        }
        let parent_all: Vec<&String> = self.tables.iter().flat_map(|t| &t.attrs).collect();
        let clash = child
            .tables
            .iter()
            .flat_map(|t| &t.attrs)
            .find(|a| parent_all.contains(a) && !z.contains(a));
        match clash {
            Some(a) => Err(IndexError::SchemeClash(a.clone())),
            None => Ok(()),
        }
    }

    pub fn finalize(mut self) -> Result<Self, IndexError> {
        let root = &self.tables[self.root];
        let weights = (0..root.len)
            .map(|i| root.checked_weight(i))
            .collect::<Result<Vec<_>, _>>()?;
        self.tables[self.root].pref = inclusive_prefix(weights)?;
        self.finalized = true;
        if self.layout.is_none() {
            let order: Vec<String> = self.dfs_tables().iter().flat_map(|&t| self.tables[t].attrs.clone()).collect();
            self.layout = Some(self.layout_for(&order)?);
        }
        Ok(self)
    }

    pub fn with_output_order(mut self, order: &[String]) -> Result<Self, IndexError> {
        self.layout = Some(self.layout_for(order)?);
        Ok(self)
    }

    fn layout_for(&self, order: &[String]) -> Result<Layout, IndexError> {
        let attrs: Vec<&[String]> = self.tables.iter().map(|t| t.attrs.as_slice()).collect();
        Layout::new(order, &attrs)
    }

    fn dfs_tables(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.tables.len());
        let mut stack = vec![self.root];
        while let Some(t) = stack.pop() {
            out.push(t);
            stack.extend(self.tables[t].links.iter().rev().map(|l| l.table));
        }
        out
    }

    pub fn tables(&self) -> &[UsrTable] {
        &self.tables
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_table(&self) -> &UsrTable {
        &self.tables[self.root]
    }

    pub fn pref(&self) -> Result<&[u64], IndexError> {
        if self.finalized {
            Ok(&self.tables[self.root].pref)
        } else {
            Err(IndexError::NotFinalized)
        }
    }

    pub fn weight_of(&self, table: usize, i: usize) -> Result<u64, IndexError> {
        let t = self.tables.get(table).ok_or(IndexError::OutOfRange {
            table,
            row: i,
            len: 0,
        })?;
        if i >= t.len {
            return Err(IndexError::OutOfRange {
                table,
                row: i,
                len: t.len,
            });
        }
        Ok(t.weight(i))
    }

    fn layout(&self) -> &Layout {
        self.layout.as_ref().expect("finalized store has a layout")
    }

    fn columns(&self) -> Vec<&[Arc<Column>]> {
        self.tables.iter().map(|t| t.columns.as_slice()).collect()
    }

    /// Element of slice `[s, s + l)` of `table` that holds `digit`, searching
    /// from slot `from` on; returns (slot, offset inside the element).
    #[inline]
    fn locate(&self, table: usize, s: usize, l: usize, from: usize, digit: u64, stats: &mut ProbeStats) -> (usize, u64) {
        let pref = &self.tables[table].pref;
        let j = from + search_prefix(&pref[s + from..s + l], digit, stats);
        let before = if j == 0 { 0 } else { pref[s + j - 1] };
        (j, digit - before)
    }

    fn get_one(&self, table: usize, row: usize, mut sub: u64, sel: &mut [Vec<usize>], stats: &mut ProbeStats) {
        sel[table].push(row);
        for link in &self.tables[table].links {
            let w = link.w[row];
            let digit = sub % w;
            sub /= w;
            let (s, l) = (link.start[row], link.len[row]);
            let (j, rest) = self.locate(link.table, s, l, 0, digit, stats);
            let e = self.tables[link.table].perm.as_ref().expect("non-root table has perm")[s + j];
            self.get_one(link.table, e, rest, sel, stats);
        }
    }

    /// Bulk access for one level. Consecutive probes of the same slice with a
    /// non-decreasing digit only search the slice suffix from the previous hit.
    fn get_level_cached(
        &self,
        table: usize,
        rows: Vec<usize>,
        mut subs: Vec<u64>,
        sel: &mut [Vec<usize>],
        stats: &mut ProbeStats,
    ) {
        for link in &self.tables[table].links {
            let perm = self.tables[link.table].perm.as_ref().expect("non-root table has perm");
            let mut child_rows = Vec::with_capacity(rows.len());
            let mut child_subs = Vec::with_capacity(rows.len());
            // (slice start, digit, slot found)
            let mut cache: Option<(usize, u64, usize)> = None;
            for (idx, &row) in rows.iter().enumerate() {
                let w = link.w[row];
                let digit = subs[idx] % w;
                subs[idx] /= w;
                let (s, l) = (link.start[row], link.len[row]);
                let from = match cache {
                    Some((cs, cd, cj)) if cs == s && digit >= cd => cj,
                    _ => 0,
                };
                let (j, rest) = self.locate(link.table, s, l, from, digit, stats);
                cache = Some((s, digit, j));
                child_rows.push(perm[s + j]);
                child_subs.push(rest);
            }
            self.get_level_cached(link.table, child_rows, child_subs, sel, stats);
        }
        sel[table] = rows;
    }

    fn enumerate(&self, tasks: &mut Vec<Task>, state: &mut [usize], sel: &mut [Vec<usize>]) {
        match tasks.pop() {
            None => {
                for (t, &r) in state.iter().enumerate() {
                    sel[t].push(r);
                }
            }
            Some(Task::Row(t, r)) => {
                state[t] = r;
                let mark = tasks.len();
                for link in &self.tables[t].links {
                    tasks.push(Task::Slice(link.table, link.start[r], link.len[r]));
                }
                self.enumerate(tasks, state, sel);
                tasks.truncate(mark);
                tasks.push(Task::Row(t, r));
            }
            Some(Task::Slice(t, s, l)) => {
                let perm = self.tables[t].perm.as_ref().expect("non-root table has perm");
                for &e in &perm[s..s + l] {
                    tasks.push(Task::Row(t, e));
                    self.enumerate(tasks, state, sel);
                    tasks.pop();
                }
                tasks.push(Task::Slice(t, s, l));
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Task {
    Row(usize, usize),
    Slice(usize, usize, usize),
}

impl RandomAccessIndex for UsrStore {
    fn kind(&self) -> IndexKind {
        IndexKind::Usr
    }

    fn total(&self) -> u64 {
        self.pref().ok().and_then(|p| p.last().copied()).unwrap_or(0)
    }

    fn attrs(&self) -> &[String] {
        &self.layout().attrs
    }

    fn root_len(&self) -> usize {
        self.tables[self.root].len
    }

    fn root_weight(&self, row: usize) -> u64 {
        self.tables[self.root].weight(row)
    }

    fn root_column(&self, attr: &str) -> Option<&Column> {
        let root = &self.tables[self.root];
        root.attrs.iter().position(|a| a == attr).map(|c| root.columns[c].as_ref())
    }

    fn size(&self) -> usize {
        self.tables.iter().map(|t| t.len).sum()
    }

    fn get_with(&self, pos: &[u64], cached: bool, stats: &mut ProbeStats) -> Result<PhysicalRelation, IndexError> {
        let pref = self.pref()?;
        check_positions(pos, self.total())?;
        stats.probes += pos.len() as u64;
        let mut sel: Vec<Vec<usize>> = vec![Vec::new(); self.tables.len()];
        let root_len = pref.len();
        if cached {
            let mut rows = Vec::with_capacity(pos.len());
            let mut subs = Vec::with_capacity(pos.len());
            let mut from = 0;
            for &i in pos {
                let (j, rest) = self.locate(self.root, 0, root_len, from, i, stats);
                from = j;
                rows.push(j);
                subs.push(rest);
            }
            self.get_level_cached(self.root, rows, subs, &mut sel, stats);
        } else {
            for s in sel.iter_mut() {
                s.reserve(pos.len());
            }
            for &i in pos {
                let (j, rest) = self.locate(self.root, 0, root_len, 0, i, stats);
                self.get_one(self.root, j, rest, &mut sel, stats);
            }
        }
        Ok(self.layout().materialize("sample", &self.columns(), &sel, pos.len()))
    }

    fn flatten(&self) -> PhysicalRelation {
        let total = self.total() as usize;
        let mut sel: Vec<Vec<usize>> = vec![Vec::with_capacity(total); self.tables.len()];
        let mut state = vec![0usize; self.tables.len()];
        let mut tasks = Vec::new();
        for r in 0..self.tables[self.root].len {
            tasks.push(Task::Row(self.root, r));
            self.enumerate(&mut tasks, &mut state, &mut sel);
            tasks.clear();
        }
        self.layout().materialize("join", &self.columns(), &sel, total)
    }

    fn dump(&self) -> Vec<PhysicalRelation> {
        self.dfs_tables()
            .into_iter()
            .map(|t| {
                let table = &self.tables[t];
                let mut attrs = table.attrs.clone();
                let mut cols = table.columns.clone();
                for link in &table.links {
                    let label = link_label(&self.tables[link.table].attrs, self.tables[link.table].node);
                    attrs.push(format!("start_{label}"));
                    cols.push(int_column(link.start.iter().map(|&s| s as i64)));
                    attrs.push(format!("len_{label}"));
                    cols.push(int_column(link.len.iter().map(|&l| l as i64)));
                    attrs.push(format!("w_{label}"));
                    cols.push(int_column(link.w.iter().map(|&w| w as i64)));
                }
                if let Some(perm) = &table.perm {
                    attrs.push("perm".into());
                    cols.push(int_column(perm.iter().map(|&p| p as i64)));
                }
                if table.perm.is_some() || self.finalized {
                    attrs.push("pref".into());
                    cols.push(int_column(table.pref.iter().map(|&p| p as i64)));
                }
                let name = link_label(&table.attrs, table.node);
                if cols.is_empty() {
                    return PhysicalRelation::nullary(name, table.len);
                }
                PhysicalRelation::new(name, attrs, cols).expect("dump columns align")
            })
            .collect()
    }
}
