//! Guardrails for LLM agents: an LLM plans against textual guard requests,
//! writes a guardrail program over a fixed toolbox, and the program's
//! execution decides whether the agent's action is granted or denied.

pub mod api;
pub mod bench;
pub mod bridge;
pub mod engine;
pub mod evaluator;
pub mod gdsl;
pub mod memory;
pub mod planner;
pub mod toolbox;
pub mod types;

pub use engine::{default_k, seeded_memory, CaseRun, EngineConfig, EngineError, GuardEngine, Settings};
pub use types::{AgentIo, DetailSet, Label, RequestKind, Verdict};
