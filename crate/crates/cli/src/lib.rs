//! Command implementations behind the `bouquet` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use bouquet::Result;
pub use commands::{cmd_brush, cmd_conjugate, cmd_project, cmd_render, cmd_trace};
pub use config::RunConfig;
pub use output::Sink;
pub use verify::cmd_verify;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done(serde_json::Value),
    /// A verification step failed; exit code 3.
    Failed(serde_json::Value),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Trace,
    Render,
    Project,
    Conjugate,
    Brush,
    Verify,
}

pub fn run(cmd: Command, cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    match cmd {
        Command::Trace => cmd_trace(cfg, sink),
        Command::Render => cmd_render(cfg, sink),
        Command::Project => cmd_project(cfg, sink),
        Command::Conjugate => cmd_conjugate(cfg, sink),
        Command::Brush => cmd_brush(cfg, sink),
        Command::Verify => cmd_verify(cfg, sink),
    }
}
