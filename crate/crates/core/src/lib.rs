//! Instruction-giving agents for a partially observable bike-collection task.
//!
//! A classical planner underlies everything: maps compile to planning
//! problems, unknown bike locations are handled by determinize-and-replan,
//! and two rule-based agents turn plans into instructions and explanations.

pub mod ambiguity;
pub mod belief;
pub mod cli;
pub mod dialogue;
pub mod domain;
pub mod planning;
pub mod session;
pub mod simulation;
