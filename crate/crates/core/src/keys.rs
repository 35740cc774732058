//! Hash grouping on join keys.

use rustc_hash::FxHashMap;

use crate::storage::{Column, Value};

/// Maps join-key values to dense group ids, assigned in first-encounter order.
#[derive(Clone, Debug)]
pub(crate) enum KeyMap {
    /// Empty key: every row falls into group 0.
    Unit { groups: usize },
    /// Single integer column, the common case.
    Int(FxHashMap<i64, u32>),
    Generic(FxHashMap<Vec<Value>, u32>),
}

pub(crate) struct Grouped {
    pub map: KeyMap,
    /// Group id of every row.
    pub group_of: Vec<u32>,
    pub groups: usize,
}

impl KeyMap {
    /// Groups `len` rows on the key formed by `cols`.
    pub fn group(cols: &[&Column], len: usize) -> Grouped {
        match cols {
            [] => Grouped {
                map: KeyMap::Unit {
                    groups: usize::from(len > 0),
                },
                group_of: vec![0; len],
                groups: usize::from(len > 0),
            },
            [Column::Int(values)] => {
                let mut map = FxHashMap::default();
                let mut group_of = Vec::with_capacity(len);
                for &v in values.iter() {
                    let next = map.len() as u32;
                    group_of.push(*map.entry(v).or_insert(next));
                }
                let groups = map.len();
                Grouped {
                    map: KeyMap::Int(map),
                    group_of,
                    groups,
                }
            }
            _ => {
                let mut map = FxHashMap::default();
                let mut group_of = Vec::with_capacity(len);
                for i in 0..len {
                    let key: Vec<Value> = cols.iter().map(|c| c.value(i)).collect();
                    let next = map.len() as u32;
                    group_of.push(*map.entry(key).or_insert(next));
                }
                let groups = map.len();
                Grouped {
                    map: KeyMap::Generic(map),
                    group_of,
                    groups,
                }
            }
        }
    }

    /// Group of the key formed by `cols` at `row`, if that key occurs.
    pub fn lookup(&self, cols: &[&Column], row: usize) -> Option<u32> {
        match self {
            KeyMap::Unit { groups } => (*groups > 0).then_some(0),
            KeyMap::Int(map) => match cols {
                [Column::Int(values)] => map.get(&values[row]).copied(),
                _ => None,
            },
            KeyMap::Generic(map) => {
                let key: Vec<Value> = cols.iter().map(|c| c.value(row)).collect();
                map.get(&key).copied()
            }
        }
    }

    pub fn lookup_values(&self, key: &[Value]) -> Option<u32> {
        match self {
            KeyMap::Unit { groups } => (key.is_empty() && *groups > 0).then_some(0),
            KeyMap::Int(map) => match key {
                [Value::Int(v)] => map.get(v).copied(),
                _ => None,
            },
            KeyMap::Generic(map) => map.get(key).copied(),
        }
    }
}
