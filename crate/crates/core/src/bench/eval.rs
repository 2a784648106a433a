use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RunConfig, RunRecord};
use crate::appearance::{self, object_similarity, reference_embeddings, to_metric, ObjectCell};
use crate::error::{Error, Result};
use crate::geometry::{clip_chamfer_score, video_met3r};
use crate::ingest::{FrameDecoder, FrameImage, FramePlan, FrameSource};
use crate::model::{Manifest, ManifestEntry, MediaKind, MetricName, MetricReport, MetricStatus, MetricValue};
use crate::providers::ModelProvider;

/// The evaluation set: systems, each with (reference, generated) pairs.
/// Relative paths resolve against the spec file's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    /// Registered scene views for mock geometry.
    #[serde(default)]
    pub scenes: Option<PathBuf>,
    pub systems: Vec<SystemSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    pub pairs: Vec<PairEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub id: String,
    pub reference: PathBuf,
    pub generated: PathBuf,
    /// Conditioning image; the first reference frame when absent.
    #[serde(default)]
    pub reference_image: Option<PathBuf>,
    /// Object tags; taken from the manifest entry of `clip_id` when empty.
    #[serde(default)]
    pub tags: Vec<String>,
    /// Extra reference views per tag.
    #[serde(default)]
    pub reference_objects: BTreeMap<String, Vec<PathBuf>>,
    #[serde(default)]
    pub clip_id: Option<String>,
}

pub fn load_pairs(path: &Path) -> Result<PairSpec> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut spec: PairSpec = serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let abs = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let Some(s) = spec.scenes.as_mut() {
        abs(s);
    }
    for sys in &mut spec.systems {
        for pair in &mut sys.pairs {
            abs(&mut pair.reference);
            abs(&mut pair.generated);
            if let Some(r) = pair.reference_image.as_mut() {
                abs(r);
            }
            pair.reference_objects.values_mut().flatten().for_each(abs);
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for sys in &spec.systems {
        if !names.insert(&sys.name) {
            return Err(Error::Config(format!("system {:?} listed twice", sys.name)));
        }
        let mut ids = std::collections::BTreeSet::new();
        if let Some(p) = sys.pairs.iter().find(|p| !ids.insert(&p.id)) {
            return Err(Error::Config(format!("pair {:?} listed twice in {}", p.id, sys.name)));
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub system: String,
    pub pair_id: String,
    #[serde(default)]
    pub clip_id: Option<String>,
    pub report: MetricReport,
    /// Per-cell object-similarity diagnostics.
    #[serde(default)]
    pub object_cells: Vec<ObjectCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub name: String,
    pub pairs: usize,
    /// Mean of the OK values per metric.
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub pairs: Vec<PairReport>,
    pub systems: Vec<SystemSummary>,
}

impl EvalOutcome {
    pub fn is_degraded(&self) -> bool {
        self.pairs
            .iter()
            .any(|p| p.report.metrics.values().any(|v| v.status == MetricStatus::Error))
    }
}

struct Video {
    source: FrameSource,
}

impl Video {
    fn open(decoder: &dyn FrameDecoder, path: &Path) -> Result<Self> {
        match decoder.probe(path)? {
            crate::ingest::Probe::Valid(p) => Ok(Video {
                source: FrameSource::from_probe(&p),
            }),
            crate::ingest::Probe::Rejected { verdict, .. } => Err(Error::InvalidMedia {
                path: path.to_path_buf(),
                reason: verdict.reason,
            }),
        }
    }

    fn len(&self) -> usize {
        self.source.frame_count
    }

    fn sample(&self, decoder: &dyn FrameDecoder, k: usize) -> Result<(Vec<usize>, Vec<FrameImage>)> {
        let plan = FramePlan::uniform(self.len(), k.min(self.len()))?;
        Ok((plan.indices().to_vec(), decoder.decode(&self.source, &plan)?))
    }
}

fn load_still(decoder: &dyn FrameDecoder, path: &Path) -> Result<FrameImage> {
    decoder
        .decode_indices(path, MediaKind::Image, &[0])?
        .pop()
        .ok_or_else(|| Error::Decode {
            path: path.to_path_buf(),
            reason: "no image decoded".into(),
        })
}

fn error_report(e: &Error) -> BTreeMap<MetricName, MetricValue> {
    MetricName::ALL
        .into_iter()
        .map(|m| (m, MetricValue::error(format!("{}: {e}", e.code()))))
        .collect()
}

fn evaluate_pair(
    config: &RunConfig,
    decoder: &dyn FrameDecoder,
    provider: &dyn ModelProvider,
    pair: &PairEntry,
    tags: &[String],
) -> Result<(BTreeMap<MetricName, MetricValue>, Vec<ObjectCell>)> {
    let s = &config.sampling;
    let on = |m: MetricName| config.metrics.enabled.contains(&m);
    let reference = Video::open(decoder, &pair.reference)?;
    let generated = Video::open(decoder, &pair.generated)?;
    let ref_image = match &pair.reference_image {
        Some(p) => load_still(decoder, p)?,
        None => decoder
            .decode(&reference.source, &FramePlan::from_indices(reference.len(), vec![0])?)?
            .remove(0),
    };
    let (_, gen_vbench) = generated.sample(decoder, s.vbench_frames)?;
    let mut out = BTreeMap::new();
    let run = |m: MetricName, f: &mut dyn FnMut() -> Result<f64>| {
        if on(m) {
            to_metric(m, f())
        } else {
            MetricValue::skipped("disabled by config")
        }
    };
    let put = |out: &mut BTreeMap<_, _>, m: MetricName, f: &mut dyn FnMut() -> Result<f64>| {
        out.insert(m, run(m, f));
    };
    put(&mut out, MetricName::I2vSubject, &mut || appearance::i2v_subject(provider, &ref_image, &gen_vbench));
    put(&mut out, MetricName::I2vBackground, &mut || appearance::i2v_background(provider, &ref_image, &gen_vbench));
    put(&mut out, MetricName::SubjectConsistency, &mut || appearance::subject_consistency(provider, &gen_vbench));
    put(&mut out, MetricName::BackgroundConsistency, &mut || appearance::background_consistency(provider, &gen_vbench));
    put(&mut out, MetricName::TemporalFlickering, &mut || {
        appearance::temporal_flickering(&generated.sample(decoder, generated.len())?.1)
    });
    put(&mut out, MetricName::VideoSimilarity, &mut || {
        let k = s.video_similarity_frames.min(reference.len()).min(generated.len());
        appearance::video_similarity(provider, &reference.sample(decoder, k)?.1, &generated.sample(decoder, k)?.1)
    });
    let mut cells = Vec::new();
    let object = if !on(MetricName::ObjectSimilarity) {
        MetricValue::skipped("disabled by config")
    } else if tags.is_empty() {
        MetricValue::skipped("no object tags")
    } else {
        let params = &config.metrics.object_similarity;
        let computed = (|| {
            let (_, mut ref_frames) = reference.sample(decoder, params.keyframes)?;
            ref_frames.push(ref_image.clone());
            let mut refs = reference_embeddings(provider, &ref_frames, tags)?;
            for (tag, paths) in &pair.reference_objects {
                let views: Vec<FrameImage> = paths.iter().map(|p| load_still(decoder, p)).collect::<Result<_>>()?;
                let extra = reference_embeddings(provider, &views, std::slice::from_ref(tag))?;
                for (t, e) in extra {
                    refs.entry(t).or_default().extend(e);
                }
            }
            let (idx, frames) = generated.sample(decoder, params.keyframes)?;
            let keyframes: Vec<(usize, FrameImage)> = idx.into_iter().zip(frames).collect();
            object_similarity(provider, &refs, &keyframes, tags, params)
        })();
        match computed {
            Ok(r) => {
                cells = r.cells;
                match r.score {
                    Some(v) => to_metric(MetricName::ObjectSimilarity, Ok(v)),
                    None if cells.is_empty() => MetricValue::skipped("no tag has a reference instance"),
                    None => MetricValue::error("too many object cells failed"),
                }
            }
            Err(e) => to_metric(MetricName::ObjectSimilarity, Err(e)),
        }
    };
    out.insert(MetricName::ObjectSimilarity, object);
    let needs_geometry = on(MetricName::ChamferDistance) || on(MetricName::Met3r);
    let geo = if needs_geometry {
        let (_, r) = reference.sample(decoder, s.geometry_frames)?;
        let (_, g) = generated.sample(decoder, s.geometry_frames)?;
        Some((r, g))
    } else {
        None
    };
    put(&mut out, MetricName::ChamferDistance, &mut || {
        let (r, g) = geo.as_ref().expect("geometry frames sampled");
        Ok(clip_chamfer_score(provider, r, g, &config.geometry_params())?.distance)
    });
    let met3r = if !on(MetricName::Met3r) {
        MetricValue::skipped("disabled by config")
    } else {
        let (_, g) = geo.as_ref().expect("geometry frames sampled");
        match video_met3r(provider, g) {
            Ok(v) => match v.score {
                Some(x) => to_metric(MetricName::Met3r, Ok(x)),
                None => MetricValue::skipped("no frame pair had enough overlap"),
            },
            Err(e) => to_metric(MetricName::Met3r, Err(e)),
        }
    };
    out.insert(MetricName::Met3r, met3r);
    out.insert(MetricName::MotionSmoothness, MetricValue::skipped("no frame-interpolation provider"));
    Ok((out, cells))
}

/// Per-metric mean over OK values. A metric with no OK value is SKIPPED
/// when every pair skipped it and ERROR otherwise.
pub fn aggregate(reports: &[&MetricReport]) -> BTreeMap<MetricName, MetricValue> {
    MetricName::ALL
        .into_iter()
        .map(|m| {
            let values: Vec<&MetricValue> = reports.iter().filter_map(|r| r.get(m)).collect();
            let ok: Vec<f64> = values.iter().filter_map(|v| v.ok_value()).collect();
            let v = if !ok.is_empty() {
                let mean = ok.iter().sum::<f64>() / ok.len() as f64;
                MetricValue::ok(m, mean).unwrap_or_else(|e| MetricValue::error(e.to_string()))
            } else if values.iter().all(|v| v.status == MetricStatus::Skipped) {
                let detail = values.first().and_then(|v| v.detail.clone()).unwrap_or_else(|| "no pairs".into());
                MetricValue::skipped(detail)
            } else {
                MetricValue::error("no pair produced a value")
            };
            (m, v)
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn file_stem_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Scores every pair, writes `reports/<system>/<pair>.json`,
/// `summary.json` and `run.json` under `out`, and merges scores into
/// the manifest for pairs that name a clip.
pub fn run_eval(
    config: &RunConfig,
    spec: &PairSpec,
    out: &Path,
    decoder: &dyn FrameDecoder,
    provider: &dyn ModelProvider,
    manifest: Option<&Manifest>,
    workers: usize,
) -> Result<EvalOutcome> {
    let record = RunRecord::new("eval", config, provider);
    let versions = record.provider_versions.clone();
    let hash = record.config_hash.clone();
    let jobs: Vec<(&SystemSpec, &PairEntry)> = spec.systems.iter().flat_map(|s| s.pairs.iter().map(move |p| (s, p))).collect();
    let tags_for = |p: &PairEntry| -> Vec<String> {
        if !p.tags.is_empty() {
            return p.tags.clone();
        }
        match (manifest, &p.clip_id) {
            (Some(m), Some(id)) => m.with_state(|s| s.get(id).and_then(|c| c.tags.as_ref()).map(|t| t.tags.clone())).unwrap_or_default(),
            _ => Vec::new(),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let pairs: Vec<PairReport> = pool.install(|| {
        jobs.par_iter()
            .map(|(sys, pair)| {
                let (metrics, object_cells) = match evaluate_pair(config, decoder, provider, pair, &tags_for(pair)) {
                    Ok(r) => r,
                    Err(e) => {
                        tracing::warn!(system = %sys.name, pair = %pair.id, "{e}");
                        (error_report(&e), Vec::new())
                    }
                };
                PairReport {
                    system: sys.name.clone(),
                    pair_id: pair.id.clone(),
                    clip_id: pair.clip_id.clone(),
                    report: MetricReport {
                        metrics,
                        run_config_hash: hash.clone(),
                        provider_versions: versions.clone(),
                    },
                    object_cells,
                }
            })
            .collect()
    });
    let systems: Vec<SystemSummary> = spec
        .systems
        .iter()
        .map(|s| {
            let reports: Vec<&MetricReport> = pairs.iter().filter(|p| p.system == s.name).map(|p| &p.report).collect();
            SystemSummary {
                name: s.name.clone(),
                pairs: reports.len(),
                report: MetricReport {
                    metrics: aggregate(&reports),
                    run_config_hash: hash.clone(),
                    provider_versions: versions.clone(),
                },
            }
        })
        .collect();
    for p in &pairs {
        write_json(
            &out.join("reports").join(file_stem_safe(&p.system)).join(format!("{}.json", file_stem_safe(&p.pair_id))),
            p,
        )?;
    }
    write_json(&out.join("summary.json"), &systems)?;
    record.write(&out.join("run.json"))?;
    if let Some(m) = manifest {
        for p in &pairs {
            if let Some(id) = &p.clip_id {
                if m.with_state(|s| s.get(id).is_some()) {
                    m.append(ManifestEntry::Scores {
                        clip_id: id.clone(),
                        scores: p.report.clone(),
                    })?;
                }
            }
        }
    }
    Ok(EvalOutcome { pairs, systems })
}
