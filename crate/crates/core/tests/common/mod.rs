#![allow(dead_code)]

use std::collections::HashMap;

use joinsample::planner::{Atom, JoinQuery};
use joinsample::{Database, PhysicalRelation, Value};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random acyclic query with its database.
pub struct Instance {
    pub query: JoinQuery,
    pub db: Database,
}

/// Builds a random join tree of up to `max_atoms` atoms, each sharing a
/// random subset of its parent's attributes and adding fresh ones, then
/// lists the atoms in shuffled order. Values come from a small domain so
/// that joins match often, and rows repeat freely.
pub fn random_instance<R: Rng>(rng: &mut R, max_atoms: usize, max_rows: usize) -> Instance {
    let k = rng.gen_range(1..=max_atoms);
    let mut attrs: Vec<Vec<String>> = Vec::with_capacity(k);
    let mut fresh = 0;
    let mut next_attr = || {
        fresh += 1;
        format!("a{fresh}")
    };
    for i in 0..k {
        let mut own: Vec<String> = Vec::new();
        if i > 0 {
            let parent = &attrs[rng.gen_range(0..i)];
            for a in parent {
                if rng.gen_bool(0.5) {
                    own.push(a.clone());
                }
            }
        }
        let extra = rng.gen_range(usize::from(!own.is_empty())..=2);
        for _ in 0..extra.max(usize::from(own.is_empty())) {
            own.push(next_attr());
        }
        own.shuffle(rng);
        attrs.push(own);
    }
    attrs.shuffle(rng);

    let mut db = Database::new();
    let mut atoms = Vec::with_capacity(k);
    for (i, a) in attrs.iter().enumerate() {
        let name = format!("R{i}");
        let rows = rng.gen_range(0..=max_rows);
        let tuples: Vec<Vec<Value>> = (0..rows)
            .map(|_| a.iter().map(|_| Value::Int(rng.gen_range(0..3))).collect())
            .collect();
        // Stored under positional column names; the atom renames them.
        let cols: Vec<String> = (0..a.len()).map(|c| format!("c{c}")).collect();
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        db.insert(PhysicalRelation::from_rows(name.clone(), &col_refs, tuples).unwrap());
        atoms.push(Atom {
            relation: name,
            attrs: a.clone(),
        });
    }
    Instance {
        query: JoinQuery::new(atoms, None).unwrap(),
        db,
    }
}

pub fn bag(rel: &PhysicalRelation) -> HashMap<Vec<Value>, usize> {
    let mut m = HashMap::new();
    for r in rel.rows() {
        *m.entry(r).or_insert(0) += 1;
    }
    m
}

pub fn sorted_rows(rel: &PhysicalRelation) -> Vec<Vec<Value>> {
    let mut rows: Vec<_> = rel.rows().collect();
    rows.sort();
    rows
}

/// Random strictly increasing subset of `0..n`.
pub fn random_positions<R: Rng>(rng: &mut R, n: u64) -> Vec<u64> {
    let density: f64 = rng.gen();
    (0..n).filter(|_| rng.gen_bool(density)).collect()
}
