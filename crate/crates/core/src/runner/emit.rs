//! Output files of a run and replay from the manifest.
//!
//! - `trajectory.csv`: one row per (iteration, component)
//! - `final.toml`: one entry per component with labels, complexity and metrics
//! - `manifest.toml`: code version, master seed, stream ids and the full config
//! - `timings.toml`: wall-clock seconds; excluded from replay comparisons

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Method, SearchConfig};
use super::record::{CallCounts, FinalArchitecture, LogRow, RunRecord, Timings};
use crate::error::{Error, Result};
use crate::model::{Architecture, SearchSpace};
use crate::rng::Stream;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FINAL_FILE: &str = "final.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TIMINGS_FILE: &str = "timings.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDocument {
    pub method: Method,
    pub seed: u64,
    pub calls: CallCounts,
    pub architectures: Vec<FinalArchitecture>,
}

impl FinalDocument {
    /// Architectures, checked against `space` (labels and indices must agree).
    pub fn architectures_in(&self, space: &SearchSpace) -> Result<Vec<Architecture>> {
        self.architectures
            .iter()
            .map(|fa| {
                let arch = space.architecture_from_labels(&fa.labels)?;
                if arch.choices() != fa.choices.as_slice() {
                    return Err(Error::Config(format!(
                        "component {}: labels and choices disagree",
                        fa.component
                    )));
                }
                Ok(arch)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub stream: Stream,
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub method: Method,
    pub seed: u64,
    /// ChaCha8 stream number = (id << 32) | index, seeded from `seed`.
    pub streams: Vec<StreamEntry>,
    pub config: SearchConfig,
}

impl Manifest {
    pub fn new(cfg: &SearchConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            method: cfg.method,
            seed: cfg.seed,
            streams: Stream::ALL.iter().map(|&s| StreamEntry { stream: s, id: s.id() }).collect(),
            config: cfg.clone(),
        }
    }
}

#[derive(Serialize)]
struct TimingsDocument {
    calls: CallCounts,
    seconds: Timings,
}

/// Writes the trajectory as CSV: `iter,component,epsilon,mean_loss,
/// expected_complexity,entropy_d1..entropy_dD`.
pub fn write_trajectory<W: std::io::Write>(log: &[LogRow], dims: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["iter", "component", "epsilon", "mean_loss", "expected_complexity"].map(String::from).to_vec();
    header.extend((1..=dims).map(|d| format!("entropy_d{d}")));
    w.write_record(&header)?;
    for row in log {
        let mut rec = vec![
            row.iter.to_string(),
            row.component.to_string(),
            row.epsilon.to_string(),
            row.mean_loss.to_string(),
            row.expected_complexity.to_string(),
        ];
        rec.extend(row.entropies.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all four output files into `dir`, creating it if needed. The
/// manifest records `cfg`, which must be the config that produced `record`.
pub fn emit_results(record: &RunRecord, cfg: &SearchConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> =
        [TRAJECTORY_FILE, FINAL_FILE, MANIFEST_FILE, TIMINGS_FILE].iter().map(|f| dir.join(f)).collect();

    write_trajectory(&record.log, record.dim_names.len(), fs::File::create(&paths[0])?)?;
    let doc = FinalDocument {
        method: record.method,
        seed: record.seed,
        calls: record.calls,
        architectures: record.finals.clone(),
    };
    fs::write(&paths[1], toml::to_string(&doc)?)?;
    fs::write(&paths[2], toml::to_string(&Manifest::new(cfg))?)?;
    let timings = TimingsDocument { calls: record.calls, seconds: record.timings };
    fs::write(&paths[3], toml::to_string(&timings)?)?;
    Ok(paths)
}

pub fn read_final(path: &Path) -> Result<FinalDocument> {
    Ok(toml::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let m: Manifest = toml::from_str(&fs::read_to_string(path)?)?;
    m.config.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub record: RunRecord,
    /// (file name, byte-identical to the original)
    pub files: Vec<(String, bool)>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.files.iter().all(|(_, same)| *same)
    }
}

/// Reruns the config stored in `manifest`, writes the outputs to `out`, and
/// compares the trajectory and final documents with the ones stored next to
/// the manifest.
pub fn replay(manifest: &Path, out: &Path) -> Result<ReplayReport> {
    let m = read_manifest(manifest)?;
    let original = manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut cfg = m.config;
    cfg.out = Some(out.display().to_string());
    if original.canonicalize().ok() == out.canonicalize().ok() && out.exists() {
        return Err(Error::Config("replay output directory must differ from the original".into()));
    }
    let record = super::run(&cfg)?;
    emit_results(&record, &cfg, out)?;
    let files = [TRAJECTORY_FILE, FINAL_FILE]
        .iter()
        .map(|f| {
            let a = fs::read(original.join(f))?;
            let b = fs::read(out.join(f))?;
            Ok((f.to_string(), a == b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayReport { record, files })
}
