//! Output files: atomic writes, the per-trial CSV and the run manifest.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::TrialRecord;

pub const TRIALS_CSV: &str = "trials.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub const TRIALS_HEADER: [&str; 9] =
    ["scheme", "k", "d", "trial", "seed", "status", "iterations", "final_objective", "wall_time_ms"];

/// Writes `bytes` to a temporary file beside `path`, syncs it and renames it
/// into place, so readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub(crate) fn csv_bytes<I>(header: &[String], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Creates `dir` if needed and checks that it accepts new files.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    tempfile::NamedTempFile::new_in(dir)?;
    Ok(())
}

pub fn trials_csv(records: &[TrialRecord]) -> Result<Vec<u8>> {
    let header: Vec<String> = TRIALS_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = records.iter().map(|r| {
        vec![
            r.scheme_id.clone(),
            r.k.to_string(),
            r.d.to_string(),
            r.trial_index.to_string(),
            r.seed.to_string(),
            r.status.to_string(),
            r.iterations.to_string(),
            r.final_objective.to_string(),
            r.wall_time_ms.to_string(),
        ]
    });
    csv_bytes(&header, rows)
}

pub fn save_records(records: &[TrialRecord], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(TRIALS_CSV);
    write_atomic(&path, &trials_csv(records)?)?;
    Ok(path)
}

/// Reads a trials CSV back.
pub fn load_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(TRIALS_HEADER.iter().copied()) {
        return Err(Error::InvalidState(format!("{}: unexpected header", path.display())));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Everything needed to reproduce an output directory.
///
/// The embedded config leaves out `output_dir` and `parallelism`: neither
/// changes a result byte, and keeping them out lets two runs that differ only
/// in where or how wide they ran produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        let mut value = serde_json::to_value(config)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("parallelism");
        }
        Ok(Self {
            tool: "gdlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed: config.master_seed,
            config: value,
        })
    }

    /// The recorded config, with default output directory and parallelism.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json_str(&self.config.to_string())
    }
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_JSON);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
