//! Run orchestration: configuration, the curate / caption / eval commands,
//! leaderboard emission and the built-in synthetic corpora.

mod caption;
mod config;
mod eval;
mod report;
pub mod synth;

pub use caption::{run_caption, CaptionSummary, ClipError, PROMPT_LOG};
pub use config::*;
pub use eval::{aggregate, load_pairs, run_eval, EvalOutcome, PairEntry, PairReport, PairSpec, SystemSpec, SystemSummary};
pub use report::{emit_report, load_rows, ReportFormat, ReportRow};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curation::{CurateSummary, Curator};
use crate::error::{Error, Result};
use crate::ingest::FrameDecoder;
use crate::model::Manifest;
use crate::providers::ModelProvider;

/// Process exit codes of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Config = 2,
    Degraded = 3,
    Internal = 4,
}

impl ExitCode {
    pub fn for_error(e: &Error) -> ExitCode {
        match e {
            Error::Config(_) => ExitCode::Config,
            Error::ProviderUnavailable { .. } => ExitCode::Degraded,
            _ => ExitCode::Internal,
        }
    }
}

/// What produced an output, without timestamps, so equal records mean
/// equal outputs under mocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub provider_versions: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunRecord {
    /// An unreachable provider contributes no versions.
    pub fn new(command: &str, config: &RunConfig, provider: &dyn ModelProvider) -> Self {
        RunRecord {
            command: command.into(),
            config_hash: config.hash(),
            seed: config.seed,
            provider_versions: provider.health().map(|h| h.versions).unwrap_or_default(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Path of the run record a manifest-based command leaves beside the manifest.
pub fn record_path(manifest: &Path, command: &str) -> std::path::PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(format!("run.{command}.json"))
}

/// Curates `corpus` (or resumes the manifest alone) and records the run.
pub fn run_curate(
    config: &RunConfig,
    manifest: &Manifest,
    corpus: Option<&Path>,
    decoder: &dyn FrameDecoder,
    provider: &dyn ModelProvider,
    workers: usize,
) -> Result<CurateSummary> {
    let curator = Curator::new(manifest, decoder, provider, config.curation_thresholds.clone(), workers)?;
    let summary = curator.run(corpus)?;
    RunRecord::new("curate", config, provider).write(&record_path(manifest.path(), "curate"))?;
    Ok(summary)
}
