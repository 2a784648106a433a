//! Built-in synthetic corpora.
//!
//! The desk corpus is twenty `.rvid` clips with planted curation defects
//! and a known verdict for every stage. The eval set renders analytic
//! scenes whose views are stored in `scenes.json`, so mock geometry is
//! exact for every frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PairEntry, PairSpec, SystemSpec};
use crate::error::{Error, Result};
use crate::ingest::container::{write_clip, Encoding};
use crate::ingest::decode::save_png;
use crate::ingest::FrameImage;
use crate::model::Stage;
use crate::providers::scene::BACKGROUND;
use crate::providers::{label_color, Camera, SceneRegistry, SceneSpec, Texture};

const SIDE: u32 = 320;
const FPS: (u32, u32) = (24, 1);
const CLEAN_LABELS: [&str; 10] = [
    "ring", "gemstone", "watch", "bottle", "sneaker", "handbag", "headphones", "camera", "wallet", "mug",
];

/// Expected outcome of curating the desk corpus with default thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskGroundTruth {
    pub clips: usize,
    pub rejected: BTreeMap<Stage, usize>,
    pub split: usize,
    pub segments: usize,
    pub kept: usize,
    /// File name of every clip and the stage that rejects it (`None` = kept).
    pub planted: BTreeMap<String, Option<Stage>>,
}

/// Where [`synth_corpus`] put things.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLayout {
    pub corpus: PathBuf,
    pub pairs: PathBuf,
    pub scenes: PathBuf,
    pub ground_truth: PathBuf,
}

fn gray(v: u8) -> [u8; 3] {
    [v, v, v]
}

/// Static 20×20 gray blocks plus a label square drifting one pixel per frame.
fn block_frames(rng: &mut ChaCha8Rng, w: u32, h: u32, n: usize, levels: (u8, u8), label: Option<&str>) -> Vec<FrameImage> {
    let (bw, bh) = (w.div_ceil(20), h.div_ceil(20));
    let blocks: Vec<u8> = (0..bw * bh)
        .map(|_| loop {
            let v = rng.random_range(levels.0..=levels.1);
            if v != BACKGROUND[0] {
                break v;
            }
        })
        .collect();
    let color = label.map(label_color);
    let y0 = h / 2 - 40;
    (0..n)
        .map(|t| {
            let x0 = 40 + (t as u32 % (w - 120));
            FrameImage::from_fn(w, h, |x, y| match color {
                Some(c) if (x0..x0 + 80).contains(&x) && (y0..y0 + 80).contains(&y) => c,
                _ => gray(blocks[((y / 20) * bw + x / 20) as usize]),
            })
        })
        .collect()
}

fn gradient_frames(n: usize) -> Vec<FrameImage> {
    (0..n)
        .map(|t| {
            FrameImage::from_fn(SIDE, SIDE, |x, y| {
                let p = ((x + y + t as u32) % (2 * SIDE)) as f64 / (2 * SIDE) as f64;
                gray((60.0 + 135.0 * p) as u8)
            })
        })
        .collect()
}

fn stripe_frames(n: usize) -> Vec<FrameImage> {
    (0..n)
        .map(|t| FrameImage::from_fn(SIDE, SIDE, |x, _| gray(if (x + t as u32) % 2 == 0 { 0 } else { 255 })))
        .collect()
}

fn save_clip(dir: &Path, name: &str, frames: &[FrameImage]) -> Result<()> {
    write_clip(&dir.join(format!("{name}.rvid")), FPS, Encoding::RunLength, frames)
}

/// Writes the twenty-clip desk corpus into `dir`.
pub fn write_desk_corpus(dir: &Path, seed: u64) -> Result<DeskGroundTruth> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut planted = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, label) in CLEAN_LABELS.iter().enumerate() {
        let name = format!("clean_{i:02}");
        save_clip(dir, &name, &block_frames(&mut rng, SIDE, SIDE, 90, (40, 215), Some(label)))?;
        planted.insert(name, None);
    }
    for i in 0..3 {
        let name = format!("short_{i}");
        save_clip(dir, &name, &block_frames(&mut rng, SIDE, SIDE, 60, (40, 215), Some("bottle")))?;
        planted.insert(name, Some(Stage::DurationResolution));
    }
    for i in 0..2 {
        let name = format!("lowres_{i}");
        save_clip(dir, &name, &block_frames(&mut rng, SIDE, 240, 90, (40, 215), Some("watch")))?;
        planted.insert(name, Some(Stage::DurationResolution));
    }
    save_clip(dir, "dark", &block_frames(&mut rng, SIDE, SIDE, 90, (5, 30), None))?;
    planted.insert("dark".into(), Some(Stage::Brightness));
    save_clip(dir, "overexposed", &block_frames(&mut rng, SIDE, SIDE, 90, (230, 250), None))?;
    planted.insert("overexposed".into(), Some(Stage::Brightness));
    save_clip(dir, "blurry", &gradient_frames(90))?;
    planted.insert("blurry".into(), Some(Stage::Blur));
    save_clip(dir, "stripes", &stripe_frames(90))?;
    planted.insert("stripes".into(), Some(Stage::Blur));
    let mut two = block_frames(&mut rng, SIDE, SIDE, 90, (40, 215), Some("mug"));
    two.extend(block_frames(&mut rng, SIDE, SIDE, 90, (40, 215), Some("vase")));
    save_clip(dir, "two_shot", &two)?;
    planted.insert("two_shot".into(), None);
    let rejected = [(Stage::DurationResolution, 5), (Stage::Brightness, 2), (Stage::Blur, 2)].into();
    Ok(DeskGroundTruth {
        clips: 22,
        rejected,
        split: 1,
        segments: 2,
        kept: 12,
        planted,
    })
}

fn texture(label: &str, secondary: [u8; 3]) -> Texture {
    Texture {
        primary: label_color(label),
        secondary,
        cell: 0.4,
    }
}

fn sphere(label: &str, secondary: [u8; 3]) -> SceneSpec {
    SceneSpec::Sphere {
        center: [0.0; 3],
        radius: 1.0,
        texture: texture(label, secondary),
    }
}

fn camera(angle: f64) -> Camera {
    Camera::new(96, 72, 80.0).orbit(Point3::origin(), 3.0, angle)
}

/// Renders `n` views; `scene(t)` and `angle(t)` give the scene and orbit angle of frame `t`.
fn render_clip(
    registry: &SceneRegistry,
    path: &Path,
    n: usize,
    scene: impl Fn(usize) -> SceneSpec,
    angle: impl Fn(usize) -> f64,
) -> Result<()> {
    let frames: Vec<FrameImage> = (0..n).map(|t| registry.register(scene(t), camera(angle(t)))).collect();
    write_clip(path, FPS, Encoding::RunLength, &frames)
}

struct EvalCase {
    id: &'static str,
    label: &'static str,
    step: f64,
    planted_miss: bool,
}

const CASES: [EvalCase; 4] = [
    EvalCase { id: "p0_static", label: "mug", step: 0.0, planted_miss: false },
    EvalCase { id: "p1_bottle", label: "bottle", step: 0.04, planted_miss: false },
    EvalCase { id: "p2_vase", label: "vase", step: 0.05, planted_miss: true },
    EvalCase { id: "p3_watch", label: "watch", step: 0.03, planted_miss: true },
];

const EVAL_FRAMES: usize = 24;
const MISS_TAG: &str = "lamp";

/// Writes the eval set: three systems over four reference videos.
/// `reference-copy` returns the reference itself, `drifting` recolours
/// the texture over time on a faster orbit, `mismatch` shows a plane of
/// another object. Pairs 2 and 3 also ask for a lamp that only exists
/// in a separate reference view, planting misses in every system.
pub fn write_eval_set(dir: &Path) -> Result<PathBuf> {
    for sub in ["reference", "drifting", "mismatch"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let registry = SceneRegistry::new();
    let lamp = FrameImage::from_fn(64, 64, |x, y| {
        if (20..44).contains(&x) && (20..44).contains(&y) {
            label_color(MISS_TAG)
        } else {
            BACKGROUND
        }
    });
    save_png(&lamp, &dir.join("lamp.png"))?;
    let dark = [40, 40, 40];
    let mut systems: Vec<SystemSpec> = ["reference-copy", "drifting", "mismatch"]
        .iter()
        .map(|n| SystemSpec {
            name: n.to_string(),
            pairs: Vec::new(),
        })
        .collect();
    for case in &CASES {
        let reference = PathBuf::from("reference").join(format!("{}.rvid", case.id));
        render_clip(&registry, &dir.join(&reference), EVAL_FRAMES, |_| sphere(case.label, dark), |t| t as f64 * case.step)?;
        let drifting = PathBuf::from("drifting").join(format!("{}.rvid", case.id));
        render_clip(
            &registry,
            &dir.join(&drifting),
            EVAL_FRAMES,
            |t| sphere(case.label, [40 + 6 * t as u8, 40, 60]),
            |t| t as f64 * case.step * 1.5,
        )?;
        let mismatch = PathBuf::from("mismatch").join(format!("{}.rvid", case.id));
        render_clip(
            &registry,
            &dir.join(&mismatch),
            EVAL_FRAMES,
            |_| SceneSpec::Plane {
                z: 0.0,
                texture: texture("camera", dark),
            },
            |t| t as f64 * case.step,
        )?;
        let mut tags = vec![case.label.to_string()];
        let mut reference_objects = BTreeMap::new();
        if case.planted_miss {
            tags.push(MISS_TAG.into());
            reference_objects.insert(MISS_TAG.to_string(), vec![PathBuf::from("lamp.png")]);
        }
        for (sys, generated) in systems.iter_mut().zip([&reference, &drifting, &mismatch]) {
            sys.pairs.push(PairEntry {
                id: case.id.into(),
                reference: reference.clone(),
                generated: generated.clone(),
                reference_image: None,
                tags: tags.clone(),
                reference_objects: reference_objects.clone(),
                clip_id: None,
            });
        }
    }
    registry.save(&dir.join("scenes.json"))?;
    let spec = PairSpec {
        scenes: Some(PathBuf::from("scenes.json")),
        systems,
    };
    let path = dir.join("pairs.json");
    let mut bytes = serde_json::to_vec_pretty(&spec)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Desk corpus under `out/corpus`, eval set under `out/eval`, ground
/// truth in `out/ground_truth.json`.
pub fn synth_corpus(out: &Path, seed: u64) -> Result<SynthLayout> {
    let corpus = out.join("corpus");
    let truth = write_desk_corpus(&corpus, seed)?;
    let eval = out.join("eval");
    let pairs = write_eval_set(&eval)?;
    let ground_truth = out.join("ground_truth.json");
    let mut bytes = serde_json::to_vec_pretty(&truth)?;
    bytes.push(b'\n');
    std::fs::write(&ground_truth, bytes).map_err(|e| Error::io(&ground_truth, e))?;
    Ok(SynthLayout {
        corpus,
        pairs,
        scenes: eval.join("scenes.json"),
        ground_truth,
    })
}
