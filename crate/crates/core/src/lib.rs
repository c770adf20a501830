//! Evolutionary synthesis of interpretable control policies.
//!
//! Candidate policies are small programs in a restricted language
//! ([`policy_lang`]), scored by closed-loop simulation ([`evaluation`] over
//! [`environments`]) and evolved through an island-model database
//! ([`program_db`]) fed by pluggable generators ([`generation`]). The
//! [`orchestrator`] ties the loop together.

pub mod environments;
pub mod evaluation;
pub mod generation;
pub mod orchestrator;
pub mod policy_lang;
pub mod program_db;
pub mod seed;
pub mod spec_input;
