//! Model-file language and subcommands behind the `fieldspace` binary.

pub mod commands;
pub mod dsl;
pub mod theory;
