//! Evolutionary discovery of autoregressive block designs at desk scale.
//!
//! Designs are trees of named units whose bodies are written in a small
//! block DSL ([`dsl`]). Candidate units are validated by a symbolic checker
//! ([`checker`]), assembled unit by unit ([`search`]), recombined by genetic
//! operators ([`genome`]), scored by a synthetic oracle ([`oracle`]) and kept
//! in an append-only evolution store ([`store`]). The [`scheduler`] decides
//! what to design and verify next under a ladder of per-scale budgets, and
//! [`runtime`] drives the whole loop. [`metrics`] turns a finished run into
//! population-fitness series.

pub mod dsl;
pub mod tensor;
pub mod unit_tree;
pub mod checker;
pub mod oracle;
pub mod genome;
pub mod search;
pub mod store;
pub mod scheduler;
pub mod metrics;
pub mod runtime;
