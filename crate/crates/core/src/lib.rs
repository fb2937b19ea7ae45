//! Certain answers to self-join-free Boolean conjunctive queries over
//! databases that may violate their primary keys.
//!
//! The crate classifies a query into one of three complexity classes
//! from its attack graph and answers certainty with three engines: a
//! first-order recursion for acyclic attack graphs, a polynomial-time
//! reduction pipeline for graphs without strong cycles, and an exhaustive
//! repair oracle used as ground truth.

pub mod attack;
pub mod classify;
pub mod error;
pub mod eval;
pub mod fd;
pub mod fo;
pub mod fuzz;
mod graph;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod ptime;

pub use attack::{attack_graph, AttackGraph, CycleStatus, Strength};
pub use classify::{classify, Classification, ComplexityClass, Evidence};
pub use error::{CqaError, Result};
pub use eval::eval_bcq;
pub use fo::{certain_fo, emit_rewriting, Formula};
pub use model::{substitute, Atom, Database, Fact, Mode, Query, RelationDecl, Term, Valuation, Value, Var};
pub use oracle::{certain_oracle, count_repairs, falsifying_repair};
pub use parse::{parse_database, parse_query};
pub use ptime::{certain_ptime, PtimeEngine};
