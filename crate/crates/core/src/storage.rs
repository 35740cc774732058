//! Columnar in-memory relations.
//!
//! A [`PhysicalRelation`] is a bag of tuples stored as equal-length typed
//! columns. Rows are addressed positionally; every index structure in this
//! crate refers to tuples by their offset into one of these relations.

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: blank value for attribute `{attr}`")]
    BlankField { line: u64, attr: String },
    #[error("line {line}: value `{value}` for attribute `{attr}` is not a valid {kind}")]
    BadValue {
        line: u64,
        attr: String,
        kind: Kind,
        value: String,
    },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("offset {index} out of range for relation of {len} tuples")]
    OutOfRange { index: usize, len: usize },
    #[error("column `{attr}` has {found} values, expected {expected}")]
    LengthMismatch {
        attr: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{attr}` mixes {expected} and {found} values")]
    KindMismatch {
        attr: String,
        expected: Kind,
        found: Kind,
    },
    #[error("relation `{0}` is not in the database")]
    UnknownRelation(String),
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Int,
    Float,
    Str,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Int => "int",
            Kind::Float => "float",
            Kind::Str => "str",
        })
    }
}

impl std::str::FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "int" => Ok(Kind::Int),
            "float" => Ok(Kind::Float),
            "str" => Ok(Kind::Str),
            other => Err(format!("unknown kind `{other}`")),
        }
    }
}

/// A scalar data value.
///
/// Equality and hashing are structural: floats compare by bit pattern and an
/// `Int` never equals a `Float`.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(Arc<str>),
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::Int(_) => Kind::Int,
            Value::Float(_) => Kind::Float,
            Value::Str(_) => Kind::Str,
        }
    }

    /// Numeric view, used for reading probabilities.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Str(_) => None,
        }
    }

    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Int(v) => {
                state.write_u8(0);
                v.hash(state);
            }
            Value::Float(v) => {
                state.write_u8(1);
                v.to_bits().hash(state);
            }
            Value::Str(v) => {
                state.write_u8(2);
                v.hash(state);
            }
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            _ => {
                let rank = |v: &Value| v.kind() as u8;
                rank(self).cmp(&rank(other)).then(Ordering::Equal)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Str(v) => f.write_str(v),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::str(v)
    }
}

/// A typed column. A column holds exactly one kind of value.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<Arc<str>>),
}

impl Column {
    pub fn empty(kind: Kind) -> Column {
        Column::with_capacity(kind, 0)
    }

    pub fn with_capacity(kind: Kind, cap: usize) -> Column {
        match kind {
            Kind::Int => Column::Int(Vec::with_capacity(cap)),
            Kind::Float => Column::Float(Vec::with_capacity(cap)),
            Kind::Str => Column::Str(Vec::with_capacity(cap)),
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Column::Int(_) => Kind::Int,
            Column::Float(_) => Kind::Float,
            Column::Str(_) => Kind::Str,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value at `i`. Panics when out of range.
    pub fn value(&self, i: usize) -> Value {
        match self {
            Column::Int(v) => Value::Int(v[i]),
            Column::Float(v) => Value::Float(v[i]),
            Column::Str(v) => Value::Str(v[i].clone()),
        }
    }

    pub fn as_f64(&self, i: usize) -> Option<f64> {
        match self {
            Column::Int(v) => Some(v[i] as f64),
            Column::Float(v) => Some(v[i]),
            Column::Str(_) => None,
        }
    }

    /// New column with the values at `rows`, in that order.
    pub fn gather(&self, rows: &[usize]) -> Column {
        match self {
            Column::Int(v) => Column::Int(rows.iter().map(|&r| v[r]).collect()),
            Column::Float(v) => Column::Float(rows.iter().map(|&r| v[r]).collect()),
            Column::Str(v) => Column::Str(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }

    /// Appends a value; fails when its kind differs from the column's.
    pub fn push(&mut self, value: Value) -> std::result::Result<(), Kind> {
        match (self, value) {
            (Column::Int(c), Value::Int(v)) => c.push(v),
            (Column::Float(c), Value::Float(v)) => c.push(v),
            (Column::Str(c), Value::Str(v)) => c.push(v),
            (_, v) => return Err(v.kind()),
        }
        Ok(())
    }
}

/// A flat bag of tuples stored column-wise.
///
/// Columns are reference counted so that projections and index structures
/// share storage with the relation they were built from.
#[derive(Clone, Debug)]
pub struct PhysicalRelation {
    name: String,
    attrs: Vec<String>,
    columns: Vec<Arc<Column>>,
    len: usize,
}

impl PhysicalRelation {
    pub fn new(
        name: impl Into<String>,
        attrs: Vec<String>,
        columns: Vec<Arc<Column>>,
    ) -> Result<Self> {
        check_distinct(&attrs)?;
        assert_eq!(attrs.len(), columns.len(), "one column per attribute");
        let len = columns.first().map_or(0, |c| c.len());
        for (attr, col) in attrs.iter().zip(&columns) {
            if col.len() != len {
                return Err(StorageError::LengthMismatch {
                    attr: attr.clone(),
                    expected: len,
                    found: col.len(),
                });
            }
        }
        Ok(PhysicalRelation {
            name: name.into(),
            attrs,
            columns,
            len,
        })
    }

    /// Relation with attributes but no columns populated beyond `len` unit rows.
    /// Used for nullary relations (no attributes) that still carry a tuple count.
    pub(crate) fn nullary(name: impl Into<String>, len: usize) -> Self {
        PhysicalRelation {
            name: name.into(),
            attrs: Vec::new(),
            columns: Vec::new(),
            len,
        }
    }

    /// Builds a relation from row tuples; column kinds are taken from the
    /// first row (an empty row set gives `Int` columns).
    pub fn from_rows(
        name: impl Into<String>,
        attrs: &[&str],
        rows: impl IntoIterator<Item = Vec<Value>>,
    ) -> Result<Self> {
        let attrs: Vec<String> = attrs.iter().map(|a| a.to_string()).collect();
        check_distinct(&attrs)?;
        let mut columns: Option<Vec<Column>> = None;
        let mut count = 0;
        for row in rows {
            if row.len() != attrs.len() {
                return Err(StorageError::RaggedRow {
                    line: count as u64 + 1,
                    expected: attrs.len(),
                    found: row.len(),
                });
            }
            let cols = columns.get_or_insert_with(|| {
                row.iter().map(|v| Column::empty(v.kind())).collect()
            });
            for ((col, v), attr) in cols.iter_mut().zip(row).zip(&attrs) {
                let expected = col.kind();
                col.push(v).map_err(|found| StorageError::KindMismatch {
                    attr: attr.clone(),
                    expected,
                    found,
                })?;
            }
            count += 1;
        }
        let columns = columns.unwrap_or_else(|| attrs.iter().map(|_| Column::empty(Kind::Int)).collect());
        if attrs.is_empty() {
            return Ok(PhysicalRelation::nullary(name, count));
        }
        PhysicalRelation::new(name, attrs, columns.into_iter().map(Arc::new).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attrs(&self) -> &[String] {
        &self.attrs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn columns(&self) -> &[Arc<Column>] {
        &self.columns
    }

    pub fn attr_index(&self, attr: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a == attr)
    }

    pub fn column(&self, attr: &str) -> Option<&Arc<Column>> {
        self.attr_index(attr).map(|i| &self.columns[i])
    }

    /// Projection of row `i` onto `attrs`, in the requested order.
    pub fn tuple_at<S: AsRef<str>>(&self, i: usize, attrs: &[S]) -> Result<Vec<Value>> {
        if i >= self.len {
            return Err(StorageError::OutOfRange {
                index: i,
                len: self.len,
            });
        }
        attrs
            .iter()
            .map(|a| {
                let a = a.as_ref();
                self.column(a)
                    .map(|c| c.value(i))
                    .ok_or_else(|| StorageError::UnknownAttribute(a.to_string()))
            })
            .collect()
    }

    /// Full row `i`. Panics when out of range.
    pub fn row(&self, i: usize) -> Vec<Value> {
        assert!(i < self.len, "row {i} out of range ({})", self.len);
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        (0..self.len).map(move |i| self.row(i))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same columns under new attribute names (positional).
    pub fn renamed(&self, attrs: Vec<String>) -> Result<Self> {
        assert_eq!(attrs.len(), self.attrs.len(), "rename arity");
        check_distinct(&attrs)?;
        Ok(PhysicalRelation {
            name: self.name.clone(),
            attrs,
            columns: self.columns.clone(),
            len: self.len,
        })
    }

    /// Columns `attrs` in the requested order; storage is shared.
    pub fn project<S: AsRef<str>>(&self, attrs: &[S]) -> Result<Self> {
        let mut names = Vec::with_capacity(attrs.len());
        let mut cols = Vec::with_capacity(attrs.len());
        for a in attrs {
            let a = a.as_ref();
            let col = self
                .column(a)
                .ok_or_else(|| StorageError::UnknownAttribute(a.to_string()))?;
            names.push(a.to_string());
            cols.push(col.clone());
        }
        check_distinct(&names)?;
        Ok(PhysicalRelation {
            name: self.name.clone(),
            attrs: names,
            columns: cols,
            len: self.len,
        })
    }
}

fn check_distinct(attrs: &[String]) -> Result<()> {
    for (i, a) in attrs.iter().enumerate() {
        if attrs[..i].contains(a) {
            return Err(StorageError::DuplicateAttribute(a.clone()));
        }
    }
    Ok(())
}

/// Named input relations.
#[derive(Clone, Debug, Default)]
pub struct Database {
    relations: HashMap<String, PhysicalRelation>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rel: PhysicalRelation) {
        self.relations.insert(rel.name().to_string(), rel);
    }

    pub fn get(&self, name: &str) -> Result<&PhysicalRelation> {
        self.relations
            .get(name)
            .ok_or_else(|| StorageError::UnknownRelation(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut PhysicalRelation> {
        self.relations.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    /// Total number of input tuples.
    pub fn size(&self) -> usize {
        self.relations.values().map(|r| r.len()).sum()
    }
}

/// Reads a relation from `path`; the relation is named after the file stem.
pub fn load_csv(path: &Path, schema: Option<&HashMap<String, Kind>>) -> Result<PhysicalRelation> {
    let file = std::fs::File::open(path).map_err(|source| StorageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, name, schema)
}

/// Reads CSV with a header line. Without a schema, each column is `Int` if
/// every value parses as one, else `Float` if every value does, else `Str`.
pub fn read_csv<R: Read>(
    reader: R,
    name: impl Into<String>,
    schema: Option<&HashMap<String, Kind>>,
) -> Result<PhysicalRelation> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let attrs: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    check_distinct(&attrs)?;
    if let Some(schema) = schema {
        if let Some(unknown) = schema.keys().find(|k| !attrs.contains(k)) {
            return Err(StorageError::UnknownAttribute(unknown.clone()));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); attrs.len()];
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != attrs.len() {
            return Err(StorageError::RaggedRow {
                line,
                expected: attrs.len(),
                found: record.len(),
            });
        }
        for (i, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(StorageError::BlankField {
                    line,
                    attr: attrs[i].clone(),
                });
            }
            raw[i].push(field.to_string());
        }
        lines.push(line);
    }

    let mut columns = Vec::with_capacity(attrs.len());
    for (attr, values) in attrs.iter().zip(raw) {
        let kind = match schema.and_then(|s| s.get(attr)) {
            Some(k) => *k,
            None => infer_kind(&values),
        };
        columns.push(Arc::new(parse_column(attr, kind, values, &lines)?));
    }
    if attrs.is_empty() {
        return Ok(PhysicalRelation::nullary(name, lines.len()));
    }
    PhysicalRelation::new(name, attrs, columns)
}

fn infer_kind(values: &[String]) -> Kind {
    if values.iter().all(|v| v.parse::<i64>().is_ok()) {
        Kind::Int
    } else if values.iter().all(|v| v.parse::<f64>().is_ok()) {
        Kind::Float
    } else {
        Kind::Str
    }
}

fn parse_column(attr: &str, kind: Kind, values: Vec<String>, lines: &[u64]) -> Result<Column> {
    let bad = |i: usize, v: &str| StorageError::BadValue {
        line: lines[i],
        attr: attr.to_string(),
        kind,
        value: v.to_string(),
    };
    Ok(match kind {
        Kind::Int => Column::Int(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| v.parse().map_err(|_| bad(i, v)))
                .collect::<Result<_>>()?,
        ),
        Kind::Float => Column::Float(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| v.parse().map_err(|_| bad(i, v)))
                .collect::<Result<_>>()?,
        ),
        Kind::Str => Column::Str(values.into_iter().map(Arc::from).collect()),
    })
}

/// Writes the relation as CSV with a header line.
pub fn write_csv<W: Write>(rel: &PhysicalRelation, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(rel.attrs())?;
    let mut record = Vec::with_capacity(rel.attrs().len());
    for i in 0..rel.len() {
        record.clear();
        record.extend(rel.columns().iter().map(|c| c.value(i).to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|source| StorageError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

pub fn to_csv_string(rel: &PhysicalRelation) -> String {
    let mut buf = Vec::new();
    write_csv(rel, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}
