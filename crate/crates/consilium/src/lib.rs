//! Adaptive multi-expert decision engine for medical question answering.
//!
//! A query first gets a complexity assessment (low / moderate / high),
//! then the matching pipeline runs:
//!
//! - **low** — one recruited primary-care expert answers directly;
//! - **moderate** — a recruited team deliberates over a communication
//!   graph in rounds, with consensus checks, an entropy trace and
//!   moderator feedback between rounds;
//! - **high** — a tiered chain of teams writes and hands over reports,
//!   and a decider rules over the chain.
//!
//! Forced modes expose every pipeline and a set of solo and voting
//! baselines for ablation. All model traffic goes through the
//! [`backend::ChatBackend`] trait; the scripted and replay backends make
//! every pipeline runnable offline and deterministically.
//!
//! See the `examples/` directory for one runnable program per capability
//! and the `consilium` binary for the CLI (`classify`, `run`, `eval`,
//! `report`, `replay`).

pub mod aggregate;
pub mod backend;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod ict;
pub mod mdt;
pub mod metrics;
pub mod orchestrator;
pub mod parsers;
pub mod prompts;
pub mod retrieval;
pub mod solo;
pub mod types;

pub use error::{Error, Result};
pub use orchestrator::{run, run_level, Mode, Resources, RunConfig, RunOutput};
pub use types::{CanonicalAnswer, ComplexityLevel, Decision, Query};
