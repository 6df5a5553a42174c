//! Property-guided code generation.
//!
//! A Generator agent writes a program from a problem statement; a Tester agent
//! defines properties the answer must satisfy, turns them into executable
//! checks and test inputs, and turns failing runs into feedback. The
//! [`orchestrator`] iterates the two until the checks pass or the budget runs
//! out, and [`eval`] scores the final programs on hidden tests.

pub mod literal;
pub mod llm;
pub mod problem;
pub mod sandbox;
pub mod tester;
pub mod generator;
pub mod orchestrator;
pub mod eval;
