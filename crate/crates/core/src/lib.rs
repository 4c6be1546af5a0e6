//! Data exchange under source inconsistency.
//!
//! A schema mapping relates a source schema to a target schema through
//! source-to-target tgds and target constraints (tgds and egds). When a
//! source instance admits no solution, answers are defined over the
//! exchange repairs: maximal subsets of the source that admit a solution.
//! This crate computes those certain answers three independent ways:
//!
//! - brute force over the subset-repair lattice ([`repair`]),
//! - rewriting into consistent query answering over the source ([`unfold`]),
//! - translation to a disjunctive logic program whose selected-minimal
//!   models correspond to the repairs ([`dlp`]).
//!
//! Mappings whose target side uses existential quantification are first
//! compiled to an equivalent GAV mapping ([`compile`]): skolemization into
//! second-order form, equality singularization, and skeleton rewriting.
//!
//! Everything is deterministic: instances are ordered fact sets, search
//! procedures visit candidates in a fixed order, and serialized artifacts
//! are byte-stable across runs.

pub mod chase;
pub mod compile;
pub mod depgraph;
pub mod dlp;
pub mod hom;
pub mod lattice;
pub mod mapping;
pub mod query;
pub mod repair;
pub mod schema;
pub mod skeleton;
pub mod term;
pub mod textio;
pub mod unfold;
pub mod value;

/// Crate-wide error type. The CLI maps variants onto exit codes, so new
/// variants need a corresponding mapping there.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("constraint class error: {0}")]
    Class(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
