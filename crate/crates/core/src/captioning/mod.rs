//! Two-stage hierarchical captioning and object tag retrieval.
//!
//! Stage 1 describes only the object's appearance from a small frame
//! subset. Stage 2 conditions on that description and a larger subset to
//! describe camera motion and interaction. Tags for the object-similarity
//! metric are then extracted from the Stage 1 caption.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FrameDecoder, FramePlan, FrameImage, FrameSource};
use crate::model::{CaptionFlag, CaptionRecord, ClipRecord, ObjectTagSet, TagProvenance};
use crate::providers::{CompletionRequest, ModelProvider};

pub const APPEARANCE_PLACEHOLDER: &str = "{APPEARANCE_DESCRIPTION}";
pub const CAPTION_PLACEHOLDER: &str = "{CAPTION}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateStage {
    Appearance,
    Temporal,
    TagRetrieval,
}

impl TemplateStage {
    fn file_stem(self) -> &'static str {
        match self {
            TemplateStage::Appearance => "appearance",
            TemplateStage::Temporal => "temporal",
            TemplateStage::TagRetrieval => "tags",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub stage: TemplateStage,
    pub system_text: String,
    pub user_text: String,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        let count = |needle: &str| self.user_text.matches(needle).count() + self.system_text.matches(needle).count();
        let (appearance, caption) = (count(APPEARANCE_PLACEHOLDER), count(CAPTION_PLACEHOLDER));
        let ok = match self.stage {
            TemplateStage::Appearance => appearance == 0 && caption == 0,
            TemplateStage::Temporal => appearance == 1 && self.user_text.contains(APPEARANCE_PLACEHOLDER),
            TemplateStage::TagRetrieval => caption == 1 && self.user_text.contains(CAPTION_PLACEHOLDER),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{:?} template has the wrong placeholders", self.stage)))
        }
    }
}

/// One version of the three prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub appearance: PromptTemplate,
    pub temporal: PromptTemplate,
    pub tags: PromptTemplate,
}

macro_rules! builtin {
    ($stage:expr, $stem:literal) => {
        PromptTemplate {
            stage: $stage,
            system_text: include_str!(concat!("../../templates/v1/", $stem, ".system.txt")).to_string(),
            user_text: include_str!(concat!("../../templates/v1/", $stem, ".user.txt")).to_string(),
        }
    };
}

impl TemplateSet {
    /// Templates compiled into the crate. Only `v1` exists.
    pub fn builtin(version: &str) -> Result<Self> {
        if version != "v1" {
            return Err(Error::Config(format!("unknown template version {version:?}")));
        }
        Ok(TemplateSet {
            version: version.into(),
            appearance: builtin!(TemplateStage::Appearance, "appearance"),
            temporal: builtin!(TemplateStage::Temporal, "temporal"),
            tags: builtin!(TemplateStage::TagRetrieval, "tags"),
        })
    }

    /// Reads `<dir>/<version>/{appearance,temporal,tags}.{system,user}.txt`.
    pub fn load(dir: &Path, version: &str) -> Result<Self> {
        let read = |stage: TemplateStage| -> Result<PromptTemplate> {
            let base = dir.join(version);
            let file = |part: &str| {
                let p = base.join(format!("{}.{part}.txt", stage.file_stem()));
                std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
            };
            let t = PromptTemplate {
                stage,
                system_text: file("system")?,
                user_text: file("user")?,
            };
            t.validate()?;
            Ok(t)
        };
        Ok(TemplateSet {
            version: version.into(),
            appearance: read(TemplateStage::Appearance)?,
            temporal: read(TemplateStage::Temporal)?,
            tags: read(TemplateStage::TagRetrieval)?,
        })
    }
}

/// Whitespace-separated tokens.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Sentences end at '.', '!' or '?' followed by whitespace or the end of
/// the text; trailing text without a terminator is one more sentence.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut count = 0;
    let mut open = false;
    for (i, &c) in chars.iter().enumerate() {
        let boundary = matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if boundary {
            count += 1;
            open = false;
        } else if !c.is_whitespace() {
            open = true;
        }
    }
    count + usize::from(open)
}

/// Lowercases, trims list markers and trailing punctuation, drops empty
/// lines and duplicates (first occurrence wins).
pub fn normalize_tags(raw: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    raw.lines()
        .map(|line| {
            let mut t = line.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            loop {
                let next = strip_marker(&t);
                if next == t {
                    return t;
                }
                t = next;
            }
        })
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .collect()
}

fn strip_marker(t: &str) -> String {
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let t = match t.split_once(['.', ')']) {
        Some((n, rest)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) && (rest.is_empty() || rest.starts_with(' ')) => rest,
        _ => t,
    };
    t.trim_end_matches(['.', ',', ';', ':']).trim().to_string()
}

/// A reply reads as prose rather than a tag list when any line is longer
/// than a short noun phrase or holds more than one sentence.
pub fn looks_like_prose(raw: &str) -> bool {
    raw.lines().any(|l| count_words(l) > 5 || count_sentences(l) > 1)
}

/// An outgoing prompt, recorded verbatim for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLog {
    pub clip_id: String,
    pub stage: TemplateStage,
    pub template_version: String,
    pub system: String,
    pub user: String,
    pub frame_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Captioned {
    pub text: String,
    pub too_long: bool,
    pub prompts: Vec<PromptLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionSettings {
    pub template_version: String,
    pub appearance_frames: usize,
    pub temporal_frames: usize,
    pub appearance_max_words: usize,
    pub appearance_max_sentences: usize,
    pub temporal_max_words: usize,
    /// Ask once more when a caption breaks its length limits.
    pub regenerate_on_violation: bool,
    pub max_in_flight: usize,
}

impl Default for CaptionSettings {
    fn default() -> Self {
        CaptionSettings {
            template_version: "v1".into(),
            appearance_frames: 12,
            temporal_frames: 24,
            appearance_max_words: 40,
            appearance_max_sentences: 2,
            temporal_max_words: 60,
            regenerate_on_violation: false,
            max_in_flight: 4,
        }
    }
}

pub struct Captioner<'a> {
    pub provider: &'a dyn ModelProvider,
    pub decoder: &'a dyn FrameDecoder,
    pub templates: TemplateSet,
    pub settings: CaptionSettings,
}

impl Captioner<'_> {
    fn frames(&self, clip: &ClipRecord, k: usize) -> Result<(Vec<usize>, Vec<FrameImage>)> {
        let plan = FramePlan::uniform(clip.frame_count, k.min(clip.frame_count))?;
        let frames = self.decoder.decode(&FrameSource::from_clip(clip), &plan)?;
        Ok((plan.indices().to_vec(), frames))
    }

    fn ask(&self, clip_id: &str, template: &PromptTemplate, user: String, indices: &[usize], images: Vec<FrameImage>, log: &mut Vec<PromptLog>) -> Result<String> {
        log.push(PromptLog {
            clip_id: clip_id.to_string(),
            stage: template.stage,
            template_version: self.templates.version.clone(),
            system: template.system_text.clone(),
            user: user.clone(),
            frame_indices: indices.to_vec(),
        });
        let text = self.provider.complete(&CompletionRequest {
            system: template.system_text.clone(),
            user,
            images,
        })?;
        Ok(text.trim().to_string())
    }

    /// Stage 1 over `appearance_frames` uniformly sampled frames.
    pub fn caption_appearance(&self, clip: &ClipRecord) -> Result<(Captioned, Vec<usize>)> {
        let (indices, frames) = self.frames(clip, self.settings.appearance_frames)?;
        let s = &self.settings;
        let too_long = |t: &str| count_words(t) > s.appearance_max_words || count_sentences(t) > s.appearance_max_sentences;
        let t = &self.templates.appearance;
        let mut prompts = Vec::new();
        let mut text = self.ask(&clip.clip_id, t, t.user_text.clone(), &indices, frames.clone(), &mut prompts)?;
        if too_long(&text) && s.regenerate_on_violation {
            text = self.ask(&clip.clip_id, t, t.user_text.clone(), &indices, frames, &mut prompts)?;
        }
        Ok((
            Captioned {
                too_long: too_long(&text),
                text,
                prompts,
            },
            indices,
        ))
    }

    /// Stage 2, conditioned on the Stage 1 caption.
    pub fn caption_temporal(&self, clip: &ClipRecord, appearance: &str) -> Result<(Captioned, Vec<usize>)> {
        if appearance.trim().is_empty() {
            return Err(Error::PreconditionFailed(format!("clip {} has no appearance caption", clip.clip_id)));
        }
        let (indices, frames) = self.frames(clip, self.settings.temporal_frames)?;
        let t = &self.templates.temporal;
        let user = substitute(&t.user_text, APPEARANCE_PLACEHOLDER, appearance.trim());
        let max = self.settings.temporal_max_words;
        let mut prompts = Vec::new();
        let mut text = self.ask(&clip.clip_id, t, user.clone(), &indices, frames.clone(), &mut prompts)?;
        if count_words(&text) > max && self.settings.regenerate_on_violation {
            text = self.ask(&clip.clip_id, t, user, &indices, frames, &mut prompts)?;
        }
        Ok((
            Captioned {
                too_long: count_words(&text) > max,
                text,
                prompts,
            },
            indices,
        ))
    }

    /// Tags from the appearance caption, with one reformat retry when the
    /// reply is prose.
    pub fn retrieve_object_tags(&self, clip_id: &str, caption: &str) -> Result<(ObjectTagSet, Vec<PromptLog>)> {
        if caption.trim().is_empty() {
            return Err(Error::PreconditionFailed("cannot tag an empty caption".into()));
        }
        let t = &self.templates.tags;
        let user = substitute(&t.user_text, CAPTION_PLACEHOLDER, caption.trim());
        let mut prompts = Vec::new();
        let mut reply = self.ask(clip_id, t, user.clone(), &[], Vec::new(), &mut prompts)?;
        if looks_like_prose(&reply) {
            let retry = format!("{user}\nReply with one tag per line and nothing else.");
            reply = self.ask(clip_id, t, retry, &[], Vec::new(), &mut prompts)?;
            if looks_like_prose(&reply) {
                return Err(Error::ProviderContract {
                    capability: crate::providers::Capability::TextComplete,
                    reason: "tag retrieval returned prose twice".into(),
                });
            }
        }
        let tags = normalize_tags(&reply);
        if tags.is_empty() {
            return Err(Error::ProviderContract {
                capability: crate::providers::Capability::TextComplete,
                reason: "tag retrieval returned no tags".into(),
            });
        }
        Ok((
            ObjectTagSet {
                tags,
                provenance: TagProvenance::AppearanceCaption,
            },
            prompts,
        ))
    }
}

/// Replaces the single placeholder occurrence.
pub fn substitute(template: &str, placeholder: &str, value: &str) -> String {
    template.replacen(placeholder, value, 1)
}

/// Builds the stored record from both stages.
pub fn caption_record(appearance: &Captioned, a_idx: Vec<usize>, temporal: &Captioned, t_idx: Vec<usize>) -> CaptionRecord {
    let mut flags = BTreeSet::new();
    if appearance.too_long {
        flags.insert(CaptionFlag::AppearanceTooLong);
    }
    if temporal.too_long {
        flags.insert(CaptionFlag::TemporalTooLong);
    }
    CaptionRecord {
        appearance_caption: appearance.text.clone(),
        temporal_caption: temporal.text.clone(),
        appearance_frame_indices: a_idx,
        temporal_frame_indices: t_idx,
        constraint_flags: flags,
    }
}

/// Mean tags per caption and mean tag length in characters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TagStatistics {
    pub captions: usize,
    pub avg_objects_per_video: f64,
    pub avg_word_len: f64,
}

pub fn tag_statistics<'a>(sets: impl IntoIterator<Item = &'a ObjectTagSet>) -> TagStatistics {
    let (mut n, mut tags, mut chars) = (0usize, 0usize, 0usize);
    for s in sets {
        n += 1;
        tags += s.tags.len();
        chars += s.tags.iter().map(|t| t.chars().count()).sum::<usize>();
    }
    TagStatistics {
        captions: n,
        avg_objects_per_video: if n == 0 { 0.0 } else { tags as f64 / n as f64 },
        avg_word_len: if tags == 0 { 0.0 } else { chars as f64 / tags as f64 },
    }
}
