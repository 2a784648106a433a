use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{record_path, RunConfig, RunRecord};
use crate::captioning::{caption_record, tag_statistics, Captioned, Captioner, PromptLog, TagStatistics, TemplateSet};
use crate::error::{Error, Result};
use crate::ingest::FrameDecoder;
use crate::model::{BlobStore, CaptionFlag, CaptionRecord, ClipRecord, Manifest, MediaKind, ObjectTagSet};
use crate::providers::{Limited, ModelProvider};

/// Prompt audit log written beside the manifest.
pub const PROMPT_LOG: &str = "prompts.jsonl";
const APPEARANCE_BLOB: &str = "appearance_caption";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipError {
    pub clip_id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptionSummary {
    /// Fully kept video clips.
    pub eligible: usize,
    /// Caption records written by this run.
    pub captioned: usize,
    /// Tag sets written by this run.
    pub tagged: usize,
    pub appearance_too_long: usize,
    pub temporal_too_long: usize,
    pub tag_statistics: TagStatistics,
    /// Eligible clips still missing captions or tags.
    pub pending: usize,
    pub errors: Vec<ClipError>,
}

impl CaptionSummary {
    pub fn is_degraded(&self) -> bool {
        self.pending > 0
    }
}

/// Stage-1 output kept when Stage 2 fails, so a rerun does not ask again.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AppearanceDraft {
    text: String,
    too_long: bool,
    indices: Vec<usize>,
}

#[derive(Default)]
struct Work {
    prompts: Vec<PromptLog>,
    draft: Option<AppearanceDraft>,
    record: Option<CaptionRecord>,
    tags: Option<ObjectTagSet>,
    error: Option<Error>,
}

fn eligible(clip: &ClipRecord) -> bool {
    clip.media_kind == MediaKind::Video && clip.is_fully_kept()
}

fn caption_one(captioner: &Captioner, clip: &ClipRecord, stored: Option<AppearanceDraft>) -> Work {
    let mut w = Work::default();
    let record = match &clip.captions {
        Some(r) => r.clone(),
        None => {
            let draft = match stored {
                Some(d) => d,
                None => match captioner.caption_appearance(clip) {
                    Ok((c, indices)) => {
                        w.prompts.extend(c.prompts);
                        let d = AppearanceDraft {
                            text: c.text,
                            too_long: c.too_long,
                            indices,
                        };
                        w.draft = Some(d.clone());
                        d
                    }
                    Err(e) => {
                        w.error = Some(e);
                        return w;
                    }
                },
            };
            let (temporal, t_idx) = match captioner.caption_temporal(clip, &draft.text) {
                Ok(r) => r,
                Err(e) => {
                    w.error = Some(e);
                    return w;
                }
            };
            w.prompts.extend(temporal.prompts.iter().cloned());
            let appearance = Captioned {
                text: draft.text,
                too_long: draft.too_long,
                prompts: Vec::new(),
            };
            let r = caption_record(&appearance, draft.indices, &temporal, t_idx);
            w.record = Some(r.clone());
            r
        }
    };
    match captioner.retrieve_object_tags(&clip.clip_id, &record.appearance_caption) {
        Ok((tags, prompts)) => {
            w.prompts.extend(prompts);
            w.tags = Some(tags);
        }
        Err(e) => w.error = Some(e),
    }
    w
}

/// Two-stage captions and tag retrieval for every fully kept clip that
/// lacks them. Results are committed in manifest order.
pub fn run_caption(
    config: &RunConfig,
    manifest: &Manifest,
    decoder: &dyn FrameDecoder,
    provider: &dyn ModelProvider,
    workers: usize,
) -> Result<CaptionSummary> {
    let settings = config.captioning.clone();
    let limited = Limited::new(provider, settings.max_in_flight.max(1));
    let captioner = Captioner {
        provider: &limited,
        decoder,
        templates: TemplateSet::builtin(&settings.template_version)?,
        settings,
    };
    let blobs = BlobStore::beside(manifest.path());
    let todo: Vec<(ClipRecord, Option<String>)> = manifest.with_state(|s| {
        s.clips()
            .iter()
            .filter(|c| eligible(c) && (c.captions.is_none() || c.tags.is_none()))
            .map(|c| (c.clone(), s.blob(&c.clip_id, APPEARANCE_BLOB).map(str::to_string)))
            .collect()
    });
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let log_path: PathBuf = manifest.path().parent().unwrap_or(std::path::Path::new(".")).join(PROMPT_LOG);
    let (mut captioned, mut tagged, mut errors) = (0, 0, Vec::new());
    for chunk in todo.chunks(workers * 4) {
        let results: Vec<Work> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(clip, blob)| {
                    let stored = match blob {
                        Some(hash) => match blobs.get(hash).and_then(|b| Ok(serde_json::from_slice(&b)?)) {
                            Ok(d) => Some(d),
                            Err(e) => {
                                return Work {
                                    error: Some(e),
                                    ..Work::default()
                                }
                            }
                        },
                        None => None,
                    };
                    caption_one(&captioner, clip, stored)
                })
                .collect()
        });
        for ((clip, _), w) in chunk.iter().zip(results) {
            if !w.prompts.is_empty() {
                let io = |e| Error::io(&log_path, e);
                let mut f = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io)?;
                let mut buf = Vec::new();
                for p in &w.prompts {
                    serde_json::to_writer(&mut buf, p)?;
                    buf.push(b'\n');
                }
                f.write_all(&buf).map_err(io)?;
            }
            match (&w.record, &w.draft) {
                (Some(r), _) => {
                    manifest.append_captions(&clip.clip_id, r.clone())?;
                    captioned += 1;
                }
                (None, Some(d)) => {
                    let hash = blobs.put(&serde_json::to_vec(d)?)?;
                    manifest.append_blob_ref(&clip.clip_id, APPEARANCE_BLOB, &hash)?;
                }
                (None, None) => {}
            }
            if let Some(t) = w.tags {
                manifest.append_tags(&clip.clip_id, t)?;
                tagged += 1;
            }
            if let Some(e) = w.error {
                tracing::warn!(clip = %clip.clip_id, "{e}");
                errors.push(ClipError {
                    clip_id: clip.clip_id.clone(),
                    code: e.code().into(),
                    message: e.to_string(),
                });
            }
        }
    }
    RunRecord::new("caption", config, provider).write(&record_path(manifest.path(), "caption"))?;
    Ok(manifest.with_state(|s| {
        let done: Vec<&ClipRecord> = s.clips().iter().filter(|c| eligible(c)).collect();
        let flag = |f: CaptionFlag| {
            done.iter()
                .filter(|c| c.captions.as_ref().is_some_and(|r| r.constraint_flags.contains(&f)))
                .count()
        };
        CaptionSummary {
            eligible: done.len(),
            captioned,
            tagged,
            appearance_too_long: flag(CaptionFlag::AppearanceTooLong),
            temporal_too_long: flag(CaptionFlag::TemporalTooLong),
            tag_statistics: tag_statistics(done.iter().filter_map(|c| c.tags.as_ref())),
            pending: done.iter().filter(|c| c.captions.is_none() || c.tags.is_none()).count(),
            errors,
        }
    }))
}
