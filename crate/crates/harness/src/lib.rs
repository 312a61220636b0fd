//! Gridworld analogs of manipulation sub-tasks, chained into zig-zags, with
//! compositional and monolithic learning experiments and the `mdpcat` CLI.

pub mod cli;
pub mod experiment;
pub mod laws;
pub mod learn;
pub mod tasks;
