//! Writing reports and trace files to an output directory.

use super::runner::RunOutput;
use serde::Serialize;
use std::fs;
use std::io;
use std::path::Path;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// `report.json` plus every trace file the run's trace level produced.
pub fn write_run(dir: &Path, out: &RunOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), &out.report)?;
    for (name, body) in out.trace.files() {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}
