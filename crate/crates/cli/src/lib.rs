//! Library surface of the experiment harness, so integration tests can
//! drive the same code paths the binary does.

pub mod commands;
pub mod spec;
