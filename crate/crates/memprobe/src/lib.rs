//! Seed-deterministic generator, runner, and scorer for model
//! memory-capability test suites.
//!
//! The pipeline is four stages, each usable on its own:
//! generation ([`snapshot::expand_snapshot`]) turns parameter grids into
//! concrete probes; the runner ([`runner::run_suite`]) collects model
//! responses over HTTP or from built-in mocks; scoring
//! ([`metrics::score_case`]) applies each task's metric; and reporting
//! ([`report::aggregate`]) rolls scores up per task and per category.

pub mod corpus;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod snapshot;
pub mod tasks;
