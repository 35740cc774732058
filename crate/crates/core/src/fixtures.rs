//! The running example instance: R(x,y,p), S(u,a,x), T(v,y).
//!
//! All values are strings except, in [`figure_db_with_probs`], the `p`
//! column, which then holds inclusion probabilities.

use crate::planner::{parse_query, plan_query, JoinQuery, NsaPlan};
use crate::storage::{Database, PhysicalRelation, Value};

pub const R_ROWS: [[&str; 3]; 6] = [
    ["x1", "y1", "p1"],
    ["x1", "y2", "p2"],
    ["x4", "y3", "p3"],
    ["x2", "y1", "p4"],
    ["x2", "y2", "p5"],
    ["x4", "y3", "p6"],
];

pub const S_ROWS: [[&str; 3]; 6] = [
    ["u1", "a1", "x1"],
    ["u1", "a1", "x2"],
    ["u2", "a1", "x1"],
    ["u3", "a2", "x1"],
    ["u3", "a2", "x3"],
    ["u4", "a3", "x2"],
];

pub const T_ROWS: [[&str; 2]; 6] = [
    ["v1", "y4"],
    ["v2", "y2"],
    ["v3", "y1"],
    ["v4", "y2"],
    ["v5", "y1"],
    ["v6", "y2"],
];

pub const FIGURE_QUERY: &str = "R(x,y,p) S(u,a,x) T(v,y) bern p";

fn strings<const N: usize>(name: &str, attrs: &[&str], rows: &[[&str; N]]) -> PhysicalRelation {
    PhysicalRelation::from_rows(name, attrs, rows.iter().map(|r| r.iter().map(|s| Value::str(s)).collect()))
        .expect("fixture relation")
}

pub fn figure_db() -> Database {
    let mut db = Database::new();
    db.insert(strings("R", &["x", "y", "p"], &R_ROWS));
    db.insert(strings("S", &["u", "a", "x"], &S_ROWS));
    db.insert(strings("T", &["v", "y"], &T_ROWS));
    db
}

/// The example database with R's `p` column replaced by `probs`.
pub fn figure_db_with_probs(probs: [f64; 6]) -> Database {
    let mut db = figure_db();
    let rows = R_ROWS
        .iter()
        .zip(probs)
        .map(|(r, p)| vec![Value::str(r[0]), Value::str(r[1]), Value::Float(p)]);
    db.insert(PhysicalRelation::from_rows("R", &["x", "y", "p"], rows).expect("fixture relation"));
    db
}

pub fn figure_query() -> JoinQuery {
    parse_query(FIGURE_QUERY).expect("fixture query")
}

pub fn figure_plan() -> NsaPlan {
    plan_query(&figure_query(), Some("p")).expect("fixture plan")
}
