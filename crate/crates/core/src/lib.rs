//! Plan-driven audio composition: a language-model planner turns a request
//! into timed generation calls, a synthesis agent renders each call, and a
//! timeline mixer produces the final clip. Also ships the token codec,
//! conditioning math and onset metrics used to evaluate such systems.

pub mod agent;
pub mod audio;
pub mod cli;
pub mod compose;
pub mod conditioning;
pub mod linalg;
pub mod metrics;
pub mod mixer;
pub mod plan;
pub mod planner;
pub mod resample;
pub mod selftest;
pub mod session;
pub mod tokens;
mod util;
pub mod wav;
