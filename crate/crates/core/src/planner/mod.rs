//! Query parsing, join-tree construction and 2-phase plan compilation.

mod nsa;
mod query;
mod tree;

use thiserror::Error;

pub use nsa::{compile_2nsa, NsaPlan, SemijoinStep};
pub use query::{parse_query, Atom, JoinQuery, RelationDecl};
pub use tree::{gyo_reduce, JoinTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate attribute `{attr}` in atom {atom}")]
    DuplicateAttr { atom: String, attr: String },
    #[error("bern attribute `{0}` does not occur in any atom")]
    BernAttrUnknown(String),
    #[error("query is not acyclic")]
    NotAcyclic,
    #[error("attribute `{0}` does not occur in the join tree")]
    AttrNotInTree(String),
    #[error("invalid join tree: {0}")]
    InvalidTree(String),
    #[error("semijoin of node {parent} with node {child} repeats flat attribute `{attr}`")]
    InvalidSchemeUnion {
        parent: usize,
        child: usize,
        attr: String,
    },
}

/// Join tree for `q`, rerooted so that `root_attr` (if any) is flat at the root.
pub fn plan_query(q: &JoinQuery, root_attr: Option<&str>) -> Result<NsaPlan, PlanError> {
    let mut tree = gyo_reduce(q)?;
    if let Some(attr) = root_attr {
        tree = tree.reroot(attr)?;
    }
    compile_2nsa(&tree)
}
