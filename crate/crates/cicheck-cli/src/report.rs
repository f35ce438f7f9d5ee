//! Report plumbing shared by the subcommands.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Provenance header embedded in every report: the subcommand plus the full
/// flag set it ran with, so a report alone suffices to reproduce the run.
#[derive(Debug, Serialize)]
pub struct RunSpec<'a, T: Serialize> {
    pub subcommand: &'static str,
    #[serde(flatten)]
    pub args: &'a T,
}

/// Pretty-prints a report to `out`, or to stdout when no path is given.
/// Output always ends with a newline.
pub fn emit_json<T: Serialize>(report: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing report to {}", path.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Inner {
        seed: u64,
    }

    #[test]
    fn run_spec_flattens_args_next_to_subcommand() {
        let spec = RunSpec {
            subcommand: "check",
            args: &Inner { seed: 7 },
        };
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["subcommand"], "check");
        assert_eq!(json["seed"], 7);
    }

    #[test]
    fn emit_json_writes_trailing_newline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        emit_json(&Inner { seed: 1 }, Some(&path)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("}\n"));
    }
}
