//! Chained shredded representation (CSR).
//!
//! A nested relation is stored as one flat table per scheme. A parent row
//! refers to the bag in nested attribute `Z` by the head of a linked list in
//! Z's table (`hd_Z`) and by the bag's weight (`w_Z`). List successors are
//! kept in the child table's `nxt` column, with `-1` terminating a chain.
//! Chains are shared: every parent row with the same join key points at the
//! same head.
//!
//! The flattened tuples are ordered by root row, then by mixed-radix decoding
//! of the offset inside a root row, with the first nested attribute as the
//! least-significant digit. A digit selects an element of the chain by
//! accumulating element weights from the head.

use std::sync::Arc;

use crate::keys::KeyMap;
use crate::planner::NsaPlan;
use crate::shred::{
    bind_atom, check_positions, checked_weight, inclusive_prefix, int_column, link_label,
    output_order, IndexError, IndexKind, Layout, ProbeStats, RandomAccessIndex,
};
use crate::storage::{Column, Database, PhysicalRelation, Value};

/// Link from a parent table to the table of one nested attribute.
#[derive(Clone, Debug)]
pub struct CsrLink {
    pub table: usize,
    /// Head of the chain holding the nested bag, per parent row.
    pub hd: Vec<usize>,
    /// Weight of the nested bag, per parent row.
    pub w: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct CsrTable {
    /// Query atom this table was built from.
    pub node: usize,
    pub attrs: Vec<String>,
    pub columns: Vec<Arc<Column>>,
    pub len: usize,
    pub links: Vec<CsrLink>,
    /// Chain successor; present iff the table is not the root.
    pub nxt: Option<Vec<i64>>,
    /// Inclusive prefix sum of row weights; present iff the table is the
    /// root of a finalized store.
    pub pref: Option<Vec<u64>>,
}

impl CsrTable {
    fn from_relation(node: usize, rel: PhysicalRelation) -> Self {
        CsrTable {
            node,
            attrs: rel.attrs().to_vec(),
            columns: rel.columns().to_vec(),
            len: rel.len(),
            links: Vec::new(),
            nxt: None,
            pref: None,
        }
    }

    /// Product of the nested weights of row `i`; 1 for flat tables. Every
    /// product was overflow-checked when the store was built.
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

/// Result of grouping a table on its join key.
#[derive(Clone, Debug)]
pub struct CsrGrouping {
    keys: KeyMap,
    /// Per group: offset of the last row seen with that key (the chain head).
    pub heads: Vec<usize>,
    /// Per group: sum of the row weights.
    pub weights: Vec<u64>,
    pub nxt: Vec<i64>,
}

impl CsrGrouping {
    /// (head, weight) of the group with key `key`.
    pub fn get(&self, key: &[Value]) -> Option<(usize, u64)> {
        self.keys
            .lookup_values(key)
            .map(|g| (self.heads[g as usize], self.weights[g as usize]))
    }

    pub fn groups(&self) -> usize {
        self.heads.len()
    }
}

/// Groups `table` on `keys` in one scan. Each new row is prepended to its
/// key's chain, so a chain lists rows in reverse scan order.
pub fn csr_group(table: &CsrTable, keys: &[String]) -> Result<CsrGrouping, IndexError> {
    let cols = table.key_columns(keys)?;
    let grouped = KeyMap::group(&cols, table.len);
    let mut heads = vec![usize::MAX; grouped.groups];
    let mut weights = vec![0u64; grouped.groups];
    let mut nxt = vec![-1i64; table.len];
    for (i, &g) in grouped.group_of.iter().enumerate() {
        let g = g as usize;
        let w = table.checked_weight(i)?;
        if heads[g] != usize::MAX {
            nxt[i] = heads[g] as i64;
        }
        heads[g] = i;
        weights[g] = weights[g].checked_add(w).ok_or(IndexError::Overflow)?;
    }
    Ok(CsrGrouping {
        keys: grouped.map,
        heads,
        weights,
        nxt,
    })
}

#[derive(Clone, Debug)]
pub struct CsrStore {
    tables: Vec<CsrTable>,
    root: usize,
    layout: Option<Layout>,
}

impl CsrStore {
    /// Store for a flat relation: a single root table.
    pub fn from_relation(node: usize, rel: PhysicalRelation) -> Self {
        CsrStore {
            tables: vec![CsrTable::from_relation(node, rel)],
            root: 0,
            layout: None,
        }
    }

    /// Builds, finalizes and orders the output of the store for `plan`.
    pub fn build(plan: &NsaPlan, db: &Database) -> Result<Self, IndexError> {
        let mut stores: Vec<Option<CsrStore>> = plan
            .tree
            .atoms()
            .iter()
            .enumerate()
            .map(|(node, atom)| bind_atom(db, atom).map(|rel| Some(CsrStore::from_relation(node, rel))))
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
    ///
    /// The child's root loses its `z` columns and gains `nxt`; parent rows
    /// without a matching key are dropped and the survivors gain `hd`/`w`
    /// columns for the new nested attribute. The child's tables are adopted.
    pub fn semijoin(mut self, mut child: CsrStore, z: &[String]) -> Result<Self, IndexError> {
        self.check_union(&child, z)?;
        let grouping = csr_group(&child.tables[child.root], z)?;

        let parent_root = &self.tables[self.root];
        let probe_cols = parent_root.key_columns(z)?;
        let mut keep = Vec::with_capacity(parent_root.len);
        let mut hd = Vec::with_capacity(parent_root.len);
        let mut w = Vec::with_capacity(parent_root.len);
        for r in 0..parent_root.len {
            if let Some(g) = grouping.keys.lookup(&probe_cols, r) {
                keep.push(r);
                hd.push(grouping.heads[g as usize]);
                w.push(grouping.weights[g as usize]);
            }
        }

        let offset = self.tables.len();
        let child_root = child.root;
        {
            let croot = &mut child.tables[child_root];
            let kept: Vec<usize> = (0..croot.attrs.len()).filter(|&c| !z.contains(&croot.attrs[c])).collect();
            croot.columns = kept.iter().map(|&c| croot.columns[c].clone()).collect();
            croot.attrs = kept.iter().map(|&c| croot.attrs[c].clone()).collect();
            croot.nxt = Some(grouping.nxt);
            croot.pref = None;
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
                link.hd = keep.iter().map(|&r| link.hd[r]).collect();
                link.w = keep.iter().map(|&r| link.w[r]).collect();
            }
            root.len = keep.len();
        }
        root.links.push(CsrLink {
            table: offset + child_root,
            hd,
            w,
        });
        root.pref = None;
        self.tables.extend(child.tables);
        self.layout = None;
        Ok(self)
    }

    fn check_union(&self, child: &CsrStore, z: &[String]) -> Result<(), IndexError> {
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

    /// Adds the root prefix vector.
    pub fn finalize(mut self) -> Result<Self, IndexError> {
        let root = &self.tables[self.root];
        let weights = (0..root.len)
            .map(|i| root.checked_weight(i))
            .collect::<Result<Vec<_>, _>>()?;
        let pref = inclusive_prefix(weights)?;
        self.tables[self.root].pref = Some(pref);
        if self.layout.is_none() {
            let order: Vec<String> = self.dfs_tables().iter().flat_map(|&t| self.tables[t].attrs.clone()).collect();
            self.layout = Some(self.layout_for(&order)?);
        }
        Ok(self)
    }

    /// Sets the output column order; `order` must list every flat attribute once.
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

    pub fn tables(&self) -> &[CsrTable] {
        &self.tables
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_table(&self) -> &CsrTable {
        &self.tables[self.root]
    }

    pub fn pref(&self) -> Result<&[u64], IndexError> {
        self.tables[self.root].pref.as_deref().ok_or(IndexError::NotFinalized)
    }

    /// Weight of the nested tuple at row `i` of `table`.
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

    /// Walks the chain from `head` to the element containing digit `digit`;
    /// returns the element and the offset inside it.
    #[inline]
    fn walk(&self, table: usize, head: usize, mut digit: u64, stats: &mut ProbeStats) -> (usize, u64) {
        let t = &self.tables[table];
        let nxt = t.nxt.as_ref().expect("non-root table has nxt");
        let mut e = head;
        let mut cw = t.weight(e);
        while digit >= cw {
            digit -= cw;
            let next = nxt[e];
            debug_assert!(next >= 0, "digit beyond chain weight");
            e = next as usize;
            cw = t.weight(e);
            stats.chain_steps += 1;
        }
        (e, digit)
    }

    fn get_one(&self, table: usize, row: usize, mut sub: u64, sel: &mut [Vec<usize>], stats: &mut ProbeStats) {
        sel[table].push(row);
        for link in &self.tables[table].links {
            let w = link.w[row];
            let digit = sub % w;
            sub /= w;
            let (e, rest) = self.walk(link.table, link.hd[row], digit, stats);
            self.get_one(link.table, e, rest, sel, stats);
        }
    }

    /// Bulk access for one level with the chain cursor cache: when the next
    /// probe hits the same chain at a digit no smaller than the previous one,
    /// the walk resumes from the previously found element.
    fn get_level_cached(
        &self,
        table: usize,
        rows: Vec<usize>,
        mut subs: Vec<u64>,
        sel: &mut [Vec<usize>],
        stats: &mut ProbeStats,
    ) {
        for link in &self.tables[table].links {
            let child = &self.tables[link.table];
            let nxt = child.nxt.as_ref().expect("non-root table has nxt");
            let mut child_rows = Vec::with_capacity(rows.len());
            let mut child_subs = Vec::with_capacity(rows.len());
            // (head, digit, element reached, weight skipped before element)
            let mut cache: Option<(usize, u64, usize, u64)> = None;
            for (idx, &row) in rows.iter().enumerate() {
                let w = link.w[row];
                let digit = subs[idx] % w;
                subs[idx] /= w;
                let head = link.hd[row];
                let (mut e, mut skipped) = match cache {
                    Some((h, d, e, s)) if h == head && digit >= d => (e, s),
                    _ => (head, 0),
                };
                let mut rest = digit - skipped;
                let mut cw = child.weight(e);
                while rest >= cw {
                    rest -= cw;
                    skipped += cw;
                    e = nxt[e] as usize;
                    cw = child.weight(e);
                    stats.chain_steps += 1;
                }
                cache = Some((head, digit, e, skipped));
                child_rows.push(e);
                child_subs.push(rest);
            }
            self.get_level_cached(link.table, child_rows, child_subs, sel, stats);
        }
        sel[table] = rows;
    }

    /// Enumerates every flattened tuple in order, as per-table row selections.
    fn enumerate_all(&self) -> Vec<Vec<usize>> {
        let pref = self.pref().expect("finalized");
        let total = pref.last().copied().unwrap_or(0) as usize;
        let mut sel: Vec<Vec<usize>> = vec![Vec::with_capacity(total); self.tables.len()];
        let mut state = vec![0usize; self.tables.len()];
        let mut tasks = Vec::new();
        for r in 0..self.tables[self.root].len {
            tasks.push(Task::Row(self.root, r));
            self.enumerate(&mut tasks, &mut state, &mut sel);
            tasks.clear();
        }
        sel
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
                // Pushed first = enumerated innermost: the first nested
                // attribute is the fastest-varying digit.
                for link in &self.tables[t].links {
                    tasks.push(Task::Chain(link.table, link.hd[r]));
                }
                self.enumerate(tasks, state, sel);
                tasks.truncate(mark);
                tasks.push(Task::Row(t, r));
            }
            Some(Task::Chain(t, head)) => {
                let nxt = self.tables[t].nxt.as_ref().expect("non-root table has nxt");
                let mut e = head as i64;
                while e >= 0 {
                    tasks.push(Task::Row(t, e as usize));
                    self.enumerate(tasks, state, sel);
                    tasks.pop();
                    e = nxt[e as usize];
                }
                tasks.push(Task::Chain(t, head));
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Task {
    Row(usize, usize),
    Chain(usize, usize),
}

impl RandomAccessIndex for CsrStore {
    fn kind(&self) -> IndexKind {
        IndexKind::Csr
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
        if cached {
            let mut rows = Vec::with_capacity(pos.len());
            let mut subs = Vec::with_capacity(pos.len());
            let mut j = 0;
            for &i in pos {
                // Positions increase, so the root row never moves backwards.
                while pref[j] <= i {
                    j += 1;
                }
                rows.push(j);
                subs.push(i - if j == 0 { 0 } else { pref[j - 1] });
            }
            self.get_level_cached(self.root, rows, subs, &mut sel, stats);
        } else {
            for s in sel.iter_mut() {
                s.reserve(pos.len());
            }
            for &i in pos {
                let j = pref.partition_point(|&p| p <= i);
                let sub = i - if j == 0 { 0 } else { pref[j - 1] };
                self.get_one(self.root, j, sub, &mut sel, stats);
            }
        }
        Ok(self.layout().materialize("sample", &self.columns(), &sel, pos.len()))
    }

    fn flatten(&self) -> PhysicalRelation {
        let sel = self.enumerate_all();
        let rows = self.total() as usize;
        self.layout().materialize("join", &self.columns(), &sel, rows)
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
                    attrs.push(format!("hd_{label}"));
                    cols.push(int_column(link.hd.iter().map(|&h| h as i64)));
                    attrs.push(format!("w_{label}"));
                    cols.push(int_column(link.w.iter().map(|&w| w as i64)));
                }
                if let Some(nxt) = &table.nxt {
                    attrs.push("nxt".into());
                    cols.push(int_column(nxt.iter().copied()));
                }
                if let Some(pref) = &table.pref {
                    attrs.push("pref".into());
                    cols.push(int_column(pref.iter().map(|&p| p as i64)));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{figure_db, figure_plan};

    fn v(s: &str) -> Value {
        Value::str(s)
    }

    #[test]
    fn groups_s_by_x() {
        let db = figure_db();
        let s = CsrStore::from_relation(1, db.get("S").unwrap().clone());
        let g = csr_group(s.root_table(), &["x".to_string()]).unwrap();
        assert_eq!(g.get(&[v("x1")]), Some((3, 3)));
        assert_eq!(g.get(&[v("x2")]), Some((5, 2)));
        assert_eq!(g.get(&[v("x3")]), Some((4, 1)));
        assert_eq!(g.get(&[v("x4")]), None);
        assert_eq!(g.nxt, [-1, -1, 0, 2, -1, 1]);
    }

    #[test]
    fn group_single_row_and_single_key() {
        let one = PhysicalRelation::from_rows("A", &["k"], vec![vec![Value::Int(1)]]).unwrap();
        let g = csr_group(CsrStore::from_relation(0, one).root_table(), &["k".into()]).unwrap();
        assert_eq!(g.get(&[Value::Int(1)]), Some((0, 1)));
        assert_eq!(g.nxt, [-1]);

        let m = 5;
        let same = PhysicalRelation::from_rows("A", &["k"], (0..m).map(|_| vec![Value::Int(7)])).unwrap();
        let g = csr_group(CsrStore::from_relation(0, same).root_table(), &["k".into()]).unwrap();
        assert_eq!(g.get(&[Value::Int(7)]), Some((m - 1, m as u64)));
        assert_eq!(g.nxt, [-1, 0, 1, 2, 3]);
    }

    #[test]
    fn figure_store_columns() {
        let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
        let root = store.root_table();
        assert_eq!(root.len, 4);
        assert_eq!(root.links[0].hd, [3, 3, 5, 5]);
        assert_eq!(root.links[0].w, [3, 3, 2, 2]);
        assert_eq!(root.links[1].hd, [4, 5, 4, 5]);
        assert_eq!(root.links[1].w, [2, 3, 2, 3]);
        assert_eq!(store.pref().unwrap(), [6, 15, 19, 25]);
        assert_eq!(store.total(), 25);
        assert_eq!(store.weight_of(store.root(), 1).unwrap(), 9);
        assert_eq!(store.weight_of(store.root(), 2).unwrap(), 4);
        let leaf = root.links[0].table;
        assert_eq!(store.weight_of(leaf, 0).unwrap(), 1);
        assert!(matches!(store.weight_of(store.root(), 4), Err(IndexError::OutOfRange { .. })));
        assert_eq!(store.tables()[leaf].attrs, ["u", "a"]);
        assert_eq!(store.tables()[leaf].nxt.as_deref().unwrap(), [-1, -1, 0, 2, -1, 1]);
        assert_eq!(store.tables()[root.links[1].table].nxt.as_deref().unwrap(), [-1, -1, -1, 1, 2, 3]);
    }

    #[test]
    fn figure_after_first_semijoin() {
        let db = figure_db();
        let r = CsrStore::from_relation(0, db.get("R").unwrap().clone());
        let s = CsrStore::from_relation(1, db.get("S").unwrap().clone());
        let n1 = r.semijoin(s, &["x".into()]).unwrap();
        assert_eq!(n1.root_table().links[0].w, [3, 3, 2, 2]);
        assert_eq!(n1.root_table().links[0].hd, [3, 3, 5, 5]);
    }

    #[test]
    fn access_at_position_four() {
        let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
        let got = store.get(&[4]).unwrap();
        assert_eq!(got.attrs(), ["x", "y", "p", "u", "a", "v"]);
        assert_eq!(
            got.row(0),
            ["x1", "y1", "p1", "u2", "a1", "v3"].map(v).to_vec()
        );
    }

    #[test]
    fn get_matches_flatten() {
        let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
        let flat = store.flatten();
        assert_eq!(flat.len(), 25);
        let all: Vec<u64> = (0..25).collect();
        for cached in [false, true] {
            let got = store.get_with(&all, cached, &mut ProbeStats::default()).unwrap();
            assert_eq!(got.rows().collect::<Vec<_>>(), flat.rows().collect::<Vec<_>>());
        }
        // Rows contributed per root row follow the prefix deltas.
        let xs: Vec<Value> = flat.rows().map(|r| r[1].clone()).collect();
        let first_root_rows = xs.iter().take(6).all(|y| *y == v("y1"));
        assert!(first_root_rows);
    }

    #[test]
    fn cache_resumes_chain_walks() {
        let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
        // Root row 1 covers positions 6..15 with bases (3, 3).
        let pos: Vec<u64> = (6..15).collect();
        let mut plain = ProbeStats::default();
        let mut cached = ProbeStats::default();
        let a = store.get_with(&pos, false, &mut plain).unwrap();
        let b = store.get_with(&pos, true, &mut cached).unwrap();
        assert_eq!(a.rows().collect::<Vec<_>>(), b.rows().collect::<Vec<_>>());
        // {u,a}: digits cycle 0,1,2 three times, walking 0+1+2 steps per cycle
        // from the head, or 2 steps per cycle with resumption.
        // {v}: digits 0,0,0,1,1,1,2,2,2; 9 steps uncached, 2 cached.
        assert_eq!(plain.chain_steps, 18);
        assert_eq!(cached.chain_steps, 8);
    }

    #[test]
    fn probe_errors() {
        let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
        assert!(matches!(store.get(&[25]), Err(IndexError::PositionOutOfRange { .. })));
        assert!(matches!(store.get(&[3, 2]), Err(IndexError::NonIncreasingProbeSequence { .. })));
        assert_eq!(store.get_cached(&[]).unwrap().len(), 0);
    }

    #[test]
    fn empty_and_flat_stores() {
        let db = figure_db();
        let r = CsrStore::from_relation(0, db.get("R").unwrap().clone());
        let lonely = PhysicalRelation::from_rows("S", &["u", "x"], vec![vec![v("u9"), v("x9")]]).unwrap();
        let empty = r.semijoin(CsrStore::from_relation(1, lonely), &["x".into()]).unwrap().finalize().unwrap();
        assert_eq!(empty.root_table().len, 0);
        assert_eq!(empty.pref().unwrap(), [] as [u64; 0]);
        assert_eq!(empty.flatten().len(), 0);

        let flat = CsrStore::from_relation(0, db.get("R").unwrap().clone()).finalize().unwrap();
        let out = flat.flatten();
        assert_eq!(out.rows().collect::<Vec<_>>(), db.get("R").unwrap().rows().collect::<Vec<_>>());
        assert_eq!(flat.pref().unwrap(), [1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn scheme_clash_is_rejected() {
        let db = figure_db();
        let r = CsrStore::from_relation(0, db.get("R").unwrap().clone());
        let t = CsrStore::from_relation(2, db.get("T").unwrap().clone());
        assert!(matches!(r.semijoin(t, &["x".into()]), Err(IndexError::SchemeClash(_))));
    }

    #[test]
    fn overflowing_weights_fail_the_build() {
        // Cartesian products of 2^22 would need 3 x 22 bits per level; force
        // overflow directly on a weight column instead.
        let rel = PhysicalRelation::from_rows("A", &["k"], vec![vec![Value::Int(0)]]).unwrap();
        let mut store = CsrStore::from_relation(0, rel);
        let child = PhysicalRelation::from_rows("B", &["j"], vec![vec![Value::Int(0)]]).unwrap();
        store = store.semijoin(CsrStore::from_relation(1, child), &[]).unwrap();
        store.tables[0].links[0].w[0] = u64::MAX;
        let other = PhysicalRelation::from_rows("C", &["m"], vec![vec![Value::Int(0)], vec![Value::Int(1)]]).unwrap();
        store = store.semijoin(CsrStore::from_relation(2, other), &[]).unwrap();
        assert!(matches!(store.finalize(), Err(IndexError::Overflow)));
    }

    #[test]
    fn dump_has_figure_columns() {
        let store = CsrStore::build(&figure_plan(), &figure_db()).unwrap();
        let tables = store.dump();
        assert_eq!(tables[0].attrs(), ["x", "y", "p", "hd_u.a", "w_u.a", "hd_v", "w_v", "pref"]);
        assert_eq!(tables[1].attrs(), ["u", "a", "nxt"]);
        assert_eq!(tables[2].attrs(), ["v", "nxt"]);
    }
}
