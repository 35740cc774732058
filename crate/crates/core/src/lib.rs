//! Poisson sampling over acyclic joins without materializing the join.
//!
//! The join is compiled into a shredded random-access index (chained or
//! unchained), positions of the flat join are sampled directly, and only the
//! sampled positions are decoded.

pub mod cli;
pub mod csr;
pub mod fixtures;
mod keys;
pub mod pipeline;
pub mod planner;
pub mod sampling;
pub mod shred;
pub mod storage;
pub mod usr;

pub use csr::CsrStore;
pub use shred::{IndexError, IndexKind, ProbeStats, RandomAccessIndex};
pub use storage::{Column, Database, Kind, PhysicalRelation, Value};
pub use usr::UsrStore;
