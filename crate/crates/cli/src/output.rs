//! Writers shared by the subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::exit::CliResult;
use crate::manifest::{resolve_paths, sidecar, RunManifest};
use crate::Context;

/// Seventeen significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A buffered file, or stdout when `path` is `None`.
pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes the manifest to `--manifest`, or next to the main output.
pub fn write_manifest<T: Serialize>(
    ctx: &Context,
    command: &str,
    options: &T,
    seed: Option<u64>,
    output: Option<&Path>,
) -> CliResult<()> {
    let target = match (&ctx.manifest, output) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => sidecar(out),
        (None, None) => return Ok(()),
    };
    let inputs = resolve_paths(serde_json::to_value(options).unwrap_or(Value::Null));
    let manifest = RunManifest::new(command, inputs, seed, ctx.threads, ctx.sequential);
    write_json(Some(&target), &manifest)
}
