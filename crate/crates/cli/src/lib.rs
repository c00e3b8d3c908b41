//! Batch front end: experiment configs in, CSV and JSON artifacts out.

pub mod config;
pub mod experiments;
pub mod format;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{parse_config_str, parse_config_value, CliError, CliResult, ExperimentConfig, Subcommand};
pub use experiments::{run, Artifact, Output};

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::schema("<config>", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// `out.csv` with suffix `zeros.json` becomes `out.zeros.json`.
pub fn artifact_path(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    primary.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes every artifact next to `output`, or the primary one to stdout
/// when no output path is set. Returns the paths written.
pub fn write_output(cfg: &ExperimentConfig, out: &Output) -> CliResult<Vec<PathBuf>> {
    let Some(path) = &cfg.output else {
        print!("{}", out.primary.content);
        return Ok(Vec::new());
    };
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    fs::write(path, &out.primary.content).map_err(|e| io(path, e))?;
    let mut written = vec![path.clone()];
    for a in &out.extra {
        let p = artifact_path(path, a.suffix.as_deref().unwrap_or("extra"));
        fs::write(&p, &a.content).map_err(|e| io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
