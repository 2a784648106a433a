//! Append-only, line-delimited record log.
//!
//! Every line is one self-describing JSON object carrying `schema_version`
//! and a `kind` tag. The state of a clip is the fold of all lines that
//! mention it, in file order. Lines are written with a single `write(2)` on
//! an `O_APPEND` descriptor; readers ignore a trailing line that lacks its
//! newline, so a crashed write is never observed as a record.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::types::{
    CaptionRecord, ClipRecord, CurationVerdict, Decision, MediaAsset, MetricReport, ObjectTagSet, Stage,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestEntry {
    /// A media asset that failed validity checks and never became a clip.
    RejectedAsset {
        asset: MediaAsset,
        verdict: CurationVerdict,
    },
    Clip {
        record: ClipRecord,
    },
    Verdict {
        clip_id: String,
        verdict: CurationVerdict,
    },
    Captions {
        clip_id: String,
        captions: CaptionRecord,
    },
    Tags {
        clip_id: String,
        tags: ObjectTagSet,
    },
    Scores {
        clip_id: String,
        scores: MetricReport,
    },
    BlobRef {
        clip_id: String,
        name: String,
        hash: String,
    },
    /// A per-clip scalar feeding a corpus-level barrier (e.g. mean luma).
    Statistic {
        clip_id: String,
        stage: Stage,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Line {
    schema_version: u32,
    #[serde(flatten)]
    entry: ManifestEntry,
}

/// Folded view of a manifest.
#[derive(Debug, Clone, Default)]
pub struct ManifestState {
    clips: Vec<ClipRecord>,
    index: HashMap<String, usize>,
    pub rejected_assets: Vec<(MediaAsset, CurationVerdict)>,
    pub blob_refs: Vec<(String, String, String)>,
    pub statistics: std::collections::BTreeMap<(String, Stage), f64>,
    pub warnings: Vec<String>,
}

impl ManifestState {
    /// Hash of the latest blob named `name` attached to `clip_id`.
    pub fn blob(&self, clip_id: &str, name: &str) -> Option<&str> {
        self.blob_refs
            .iter()
            .rev()
            .find(|(c, n, _)| c == clip_id && n == name)
            .map(|(_, _, h)| h.as_str())
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }

    pub fn into_clips(self) -> Vec<ClipRecord> {
        self.clips
    }

    pub fn get(&self, clip_id: &str) -> Option<&ClipRecord> {
        self.index.get(clip_id).map(|&i| &self.clips[i])
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Clips whose track contains `stage`, kept at every earlier stage of
    /// that track, and without a verdict at `stage` yet.
    pub fn pending(&self, stage: Stage) -> Vec<&ClipRecord> {
        self.clips
            .iter()
            .filter(|clip| {
                let track = Stage::track(clip.media_kind);
                let Some(pos) = track.iter().position(|s| *s == stage) else {
                    return false;
                };
                clip.verdict(stage).is_none()
                    && track[..pos]
                        .iter()
                        .all(|s| clip.verdict(*s).is_some_and(CurationVerdict::is_keep))
            })
            .collect()
    }

    /// Applies one entry, validating it against the current state.
    pub fn apply(&mut self, entry: ManifestEntry) -> Result<()> {
        match entry {
            ManifestEntry::RejectedAsset { asset, verdict } => {
                self.rejected_assets.push((asset, verdict));
            }
            ManifestEntry::Clip { record } => {
                if self.index.contains_key(&record.clip_id) {
                    return Err(Error::DuplicateId(record.clip_id));
                }
                record.validate().map_err(|reason| Error::VerdictOrder {
                    clip_id: record.clip_id.clone(),
                    reason,
                })?;
                self.index.insert(record.clip_id.clone(), self.clips.len());
                self.clips.push(record);
            }
            ManifestEntry::Verdict { clip_id, verdict } => {
                let clip = self.clip_mut(&clip_id)?;
                clip.check_next_verdict(&verdict)
                    .map_err(|reason| Error::VerdictOrder { clip_id, reason })?;
                clip.stage_verdicts.push(verdict);
            }
            ManifestEntry::Captions { clip_id, captions } => {
                let clip = self.clip_mut(&clip_id)?;
                if clip.captions.is_some() {
                    return Err(Error::VerdictOrder {
                        clip_id,
                        reason: "captions already recorded".into(),
                    });
                }
                clip.captions = Some(captions);
            }
            ManifestEntry::Tags { clip_id, tags } => {
                let clip = self.clip_mut(&clip_id)?;
                if clip.tags.is_some() {
                    return Err(Error::VerdictOrder {
                        clip_id,
                        reason: "tags already recorded".into(),
                    });
                }
                clip.tags = Some(tags);
            }
            ManifestEntry::Scores { clip_id, scores } => {
                let clip = self.clip_mut(&clip_id)?;
                let merged = clip.scores.get_or_insert_with(MetricReport::default);
                merged.metrics.extend(scores.metrics);
                merged.provider_versions.extend(scores.provider_versions);
                merged.run_config_hash = scores.run_config_hash;
            }
            ManifestEntry::BlobRef { clip_id, name, hash } => {
                self.clip_mut(&clip_id)?;
                self.blob_refs.push((clip_id, name, hash));
            }
            ManifestEntry::Statistic { clip_id, stage, value } => {
                self.clip_mut(&clip_id)?;
                if !value.is_finite() {
                    return Err(Error::Malformed(format!("non-finite {stage} statistic for {clip_id}")));
                }
                if self.statistics.contains_key(&(clip_id.clone(), stage)) {
                    return Err(Error::VerdictOrder {
                        clip_id,
                        reason: format!("{stage} statistic already recorded"),
                    });
                }
                self.statistics.insert((clip_id, stage), value);
            }
        }
        Ok(())
    }

    fn clip_mut(&mut self, clip_id: &str) -> Result<&mut ClipRecord> {
        match self.index.get(clip_id) {
            Some(&i) => Ok(&mut self.clips[i]),
            None => Err(Error::UnknownClip(clip_id.to_string())),
        }
    }

    /// Number of REJECT (and SPLIT) verdicts per stage, including assets
    /// rejected before becoming clips.
    pub fn decision_counts(&self, decision: Decision) -> std::collections::BTreeMap<Stage, usize> {
        let mut counts = std::collections::BTreeMap::new();
        let verdicts = self
            .clips
            .iter()
            .flat_map(|c| c.stage_verdicts.iter())
            .chain(self.rejected_assets.iter().map(|(_, v)| v));
        for v in verdicts.filter(|v| v.decision == decision) {
            *counts.entry(v.stage).or_insert(0) += 1;
        }
        counts
    }
}

/// Parses manifest bytes. Malformed or inconsistent lines are skipped with
/// a warning; an unterminated trailing line is ignored.
pub fn parse(bytes: &[u8]) -> ManifestState {
    let mut state = ManifestState::default();
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(last) => &bytes[..=last],
        None => &bytes[..0],
    };
    if complete.len() < bytes.len() {
        state
            .warnings
            .push("ignoring unterminated trailing line (interrupted write)".into());
    }
    for (lineno, raw) in complete.split(|&b| b == b'\n').enumerate() {
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let parsed = std::str::from_utf8(raw)
            .map_err(|e| Error::Malformed(e.to_string()))
            .and_then(|s| serde_json::from_str::<Line>(s).map_err(Error::from));
        let outcome = parsed.and_then(|line| {
            if line.schema_version != SCHEMA_VERSION {
                return Err(Error::Malformed(format!(
                    "unsupported schema_version {}",
                    line.schema_version
                )));
            }
            state.apply(line.entry)
        });
        if let Err(e) = outcome {
            let msg = format!("line {}: skipped ({e})", lineno + 1);
            warn!("{msg}");
            state.warnings.push(msg);
        }
    }
    state
}

/// Reads and folds the manifest at `path`. A missing file is an empty manifest.
pub fn read_all(path: &Path) -> Result<ManifestState> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(parse(&bytes)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ManifestState::default()),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Ids of clips pending `stage` in the manifest at `path`.
pub fn resume(path: &Path, stage: Stage) -> Result<BTreeSet<String>> {
    let state = read_all(path)?;
    Ok(state.pending(stage).into_iter().map(|c| c.clip_id.clone()).collect())
}

/// Appends a single clip record to the manifest at `path`.
pub fn append_record(path: &Path, record: ClipRecord) -> Result<()> {
    Manifest::open(path)?.append(ManifestEntry::Clip { record })
}

/// Serialized appender over one manifest file.
///
/// The in-memory state is kept in sync with the file so appends can be
/// validated (unique ids, verdict order) without re-reading.
pub struct Manifest {
    path: PathBuf,
    inner: Mutex<Inner>,
}

struct Inner {
    file: File,
    state: ManifestState,
}

impl Manifest {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, e))?;
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let state = parse(&bytes);
        if bytes.last().is_some_and(|&b| b != b'\n') {
            // Terminate the torn line so the next record starts cleanly.
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Manifest {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner { file, state }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates `entry` against the current state and appends it as one line.
    pub fn append(&self, entry: ManifestEntry) -> Result<()> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let mut trial = inner.state.clone_shallow_for(&entry);
        trial.apply(entry.clone())?;
        let mut line = serde_json::to_vec(&Line {
            schema_version: SCHEMA_VERSION,
            entry: entry.clone(),
        })?;
        line.push(b'\n');
        inner.file.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        inner.state.apply(entry).expect("entry validated above");
        Ok(())
    }

    pub fn append_clip(&self, record: ClipRecord) -> Result<()> {
        self.append(ManifestEntry::Clip { record })
    }

    pub fn append_verdict(&self, clip_id: &str, verdict: CurationVerdict) -> Result<()> {
        self.append(ManifestEntry::Verdict {
            clip_id: clip_id.to_string(),
            verdict,
        })
    }

    pub fn append_captions(&self, clip_id: &str, captions: CaptionRecord) -> Result<()> {
        self.append(ManifestEntry::Captions {
            clip_id: clip_id.to_string(),
            captions,
        })
    }

    pub fn append_tags(&self, clip_id: &str, tags: ObjectTagSet) -> Result<()> {
        self.append(ManifestEntry::Tags {
            clip_id: clip_id.to_string(),
            tags,
        })
    }

    pub fn append_blob_ref(&self, clip_id: &str, name: &str, hash: &str) -> Result<()> {
        self.append(ManifestEntry::BlobRef {
            clip_id: clip_id.to_string(),
            name: name.to_string(),
            hash: hash.to_string(),
        })
    }

    pub fn append_statistic(&self, clip_id: &str, stage: Stage, value: f64) -> Result<()> {
        self.append(ManifestEntry::Statistic {
            clip_id: clip_id.to_string(),
            stage,
            value,
        })
    }

    pub fn append_rejected_asset(&self, asset: MediaAsset, verdict: CurationVerdict) -> Result<()> {
        self.append(ManifestEntry::RejectedAsset { asset, verdict })
    }

    pub fn sync(&self) -> Result<()> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }

    /// A copy of the folded state.
    pub fn snapshot(&self) -> ManifestState {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).state.clone()
    }

    pub fn with_state<R>(&self, f: impl FnOnce(&ManifestState) -> R) -> R {
        f(&self.inner.lock().unwrap_or_else(|p| p.into_inner()).state)
    }
}

impl ManifestState {
    /// Minimal state needed to validate `entry` without cloning everything.
    fn clone_shallow_for(&self, entry: &ManifestEntry) -> ManifestState {
        let mut trial = ManifestState::default();
        let id = match entry {
            ManifestEntry::Clip { record } => {
                if let Some(&i) = self.index.get(&record.clip_id) {
                    trial.index.insert(record.clip_id.clone(), 0);
                    trial.clips.push(self.clips[i].clone());
                }
                return trial;
            }
            ManifestEntry::RejectedAsset { .. } => return trial,
            ManifestEntry::Verdict { clip_id, .. }
            | ManifestEntry::Captions { clip_id, .. }
            | ManifestEntry::Tags { clip_id, .. }
            | ManifestEntry::Scores { clip_id, .. }
            | ManifestEntry::BlobRef { clip_id, .. } => clip_id,
            ManifestEntry::Statistic { clip_id, stage, .. } => {
                if let Some(v) = self.statistics.get(&(clip_id.clone(), *stage)) {
                    trial.statistics.insert((clip_id.clone(), *stage), *v);
                }
                clip_id
            }
        };
        if let Some(&i) = self.index.get(id) {
            trial.index.insert(id.clone(), 0);
            trial.clips.push(self.clips[i].clone());
        }
        trial
    }
}
