//! Probing and frame decoding.
//!
//! Native support covers `.rvid` clips, single still images and directories
//! of numbered images. Anything else goes through an external decoder
//! process speaking the frame-stream contract implemented by
//! [`write_frame_stream`] / [`read_frame_stream`].

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::container::{ClipReader, MAGIC};
use super::frame::FrameImage;
use super::plan::FramePlan;
use crate::error::{Error, Result};
use crate::model::{ClipRecord, CurationVerdict, MediaAsset, MediaKind, Md5Hex, Stage};

pub const FRAME_HEADER_LEN: usize = 16;
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbedAsset {
    pub asset: MediaAsset,
    pub stream: StreamInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Valid(ProbedAsset),
    Rejected { asset: MediaAsset, verdict: CurationVerdict },
}

impl Probe {
    pub fn is_valid(&self) -> bool {
        matches!(self, Probe::Valid(_))
    }
}

/// Where to read frames from: an asset path, its kind, and the first
/// asset frame of the clip.
#[derive(Debug, Clone)]
pub struct FrameSource {
    pub path: PathBuf,
    pub kind: MediaKind,
    pub first_frame: usize,
    pub frame_count: usize,
    pub asset_frames: Option<usize>,
}

impl FrameSource {
    pub fn from_clip(clip: &ClipRecord) -> Self {
        FrameSource {
            path: clip.source_path.clone(),
            kind: clip.media_kind,
            first_frame: clip.frame_range.start,
            frame_count: clip.frame_count,
            asset_frames: None,
        }
    }

    pub fn from_probe(probed: &ProbedAsset) -> Self {
        FrameSource {
            path: probed.asset.source_path.clone(),
            kind: probed.asset.kind,
            first_frame: 0,
            frame_count: probed.stream.frame_count,
            asset_frames: Some(probed.stream.frame_count),
        }
    }
}

/// Decodes frames for a clip.
pub trait FrameDecoder: Send + Sync {
    fn probe(&self, path: &Path) -> Result<Probe>;

    /// Decodes the frames at `indices` (asset frame numbers, strictly increasing).
    fn decode_indices(&self, path: &Path, kind: MediaKind, indices: &[usize]) -> Result<Vec<FrameImage>>;

    /// Decodes a clip-local plan: exactly `plan.len()` frames in plan order.
    fn decode(&self, source: &FrameSource, plan: &FramePlan) -> Result<Vec<FrameImage>> {
        if plan.total_frames() != source.frame_count {
            return Err(Error::InvalidPlan(format!(
                "plan over {} frames applied to a clip of {}",
                plan.total_frames(),
                source.frame_count
            )));
        }
        let indices: Vec<usize> = plan.indices().iter().map(|i| i + source.first_frame).collect();
        let frames = self.decode_indices(&source.path, source.kind, &indices)?;
        if frames.len() != plan.len() {
            return Err(Error::Decode {
                path: source.path.clone(),
                reason: format!("decoder returned {} frames for a plan of {}", frames.len(), plan.len()),
            });
        }
        Ok(frames)
    }
}

fn checksum_and_size(paths: &[PathBuf]) -> Result<(Md5Hex, u64)> {
    use md5::{Digest, Md5};
    let mut hasher = Md5::new();
    let mut total = 0u64;
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        total += bytes.len() as u64;
        hasher.update(&bytes);
    }
    let digest = hex::encode(hasher.finalize());
    Ok((Md5Hex::try_from(digest)?, total))
}

pub fn asset_id_for(path: &Path) -> String {
    Md5Hex::of_bytes(path.to_string_lossy().as_bytes()).to_string()
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Images of a sequence directory, ordered by the last number in the file stem.
pub fn sequence_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_image_file(&path) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let digits: String = stem
            .chars()
            .rev()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if let Ok(n) = digits.parse::<u64>() {
            files.push((n, path));
        }
    }
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn load_image(path: &Path) -> Result<FrameImage> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    FrameImage::new(rgb.width(), rgb.height(), rgb.into_raw())
}

pub fn save_png(frame: &FrameImage, path: &Path) -> Result<()> {
    image::save_buffer(
        path,
        frame.pixels(),
        frame.width(),
        frame.height(),
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Built-in decoder for `.rvid` clips, still images and image sequences.
#[derive(Debug, Clone, Copy, Default)]
pub struct NativeDecoder;

impl NativeDecoder {
    fn reject(path: &Path, kind: MediaKind, files: &[PathBuf], reason: String) -> Result<Probe> {
        let (checksum, bytes) = checksum_and_size(files)?;
        Ok(Probe::Rejected {
            asset: MediaAsset {
                asset_id: asset_id_for(path),
                source_path: path.to_path_buf(),
                kind,
                bytes,
                checksum_md5: checksum,
            },
            verdict: CurationVerdict::reject(Stage::Validity, reason),
        })
    }
}

impl FrameDecoder for NativeDecoder {
    fn probe(&self, path: &Path) -> Result<Probe> {
        let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
        if meta.is_dir() {
            let files = sequence_files(path)?;
            if files.is_empty() {
                return Self::reject(path, MediaKind::ImageSequence, &files, "no numbered images".into());
            }
            let mut dims = None;
            for f in &files {
                match image::image_dimensions(f) {
                    Ok(d) if dims.is_none() || dims == Some(d) => dims = Some(d),
                    Ok(d) => {
                        let reason = format!("{} has size {}x{}, sequence is {:?}", f.display(), d.0, d.1, dims);
                        return Self::reject(path, MediaKind::ImageSequence, &files, reason);
                    }
                    Err(e) => {
                        let reason = format!("{}: {e}", f.display());
                        return Self::reject(path, MediaKind::ImageSequence, &files, reason);
                    }
                }
            }
            let (width, height) = dims.expect("non-empty sequence");
            let (checksum, bytes) = checksum_and_size(&files)?;
            return Ok(Probe::Valid(ProbedAsset {
                asset: MediaAsset {
                    asset_id: asset_id_for(path),
                    source_path: path.to_path_buf(),
                    kind: MediaKind::ImageSequence,
                    bytes,
                    checksum_md5: checksum,
                },
                stream: StreamInfo {
                    frame_count: files.len(),
                    width,
                    height,
                    fps: 24.0,
                },
            }));
        }

        let files = [path.to_path_buf()];
        if meta.len() == 0 {
            let kind = if is_image_file(path) { MediaKind::Image } else { MediaKind::Video };
            return Self::reject(path, kind, &files, "empty file".into());
        }
        if is_image_file(path) {
            return match image::open(path) {
                Ok(img) => {
                    let (checksum, bytes) = checksum_and_size(&files)?;
                    Ok(Probe::Valid(ProbedAsset {
                        asset: MediaAsset {
                            asset_id: asset_id_for(path),
                            source_path: path.to_path_buf(),
                            kind: MediaKind::Image,
                            bytes,
                            checksum_md5: checksum,
                        },
                        stream: StreamInfo {
                            frame_count: 1,
                            width: img.width(),
                            height: img.height(),
                            fps: 1.0,
                        },
                    }))
                }
                Err(e) => Self::reject(path, MediaKind::Image, &files, format!("corrupt image: {e}")),
            };
        }
        match ClipReader::open(path) {
            Ok(reader) => {
                let h = *reader.header();
                let (checksum, bytes) = checksum_and_size(&files)?;
                Ok(Probe::Valid(ProbedAsset {
                    asset: MediaAsset {
                        asset_id: asset_id_for(path),
                        source_path: path.to_path_buf(),
                        kind: MediaKind::Video,
                        bytes,
                        checksum_md5: checksum,
                    },
                    stream: StreamInfo {
                        frame_count: h.frame_count as usize,
                        width: h.width,
                        height: h.height,
                        fps: h.fps(),
                    },
                }))
            }
            Err(Error::InvalidMedia { reason, .. }) => Self::reject(path, MediaKind::Video, &files, reason),
            Err(e) => Err(e),
        }
    }

    fn decode_indices(&self, path: &Path, kind: MediaKind, indices: &[usize]) -> Result<Vec<FrameImage>> {
        match kind {
            MediaKind::Video => {
                let mut reader = ClipReader::open(path).map_err(|e| match e {
                    Error::InvalidMedia { path, reason } => Error::Decode { path, reason },
                    other => other,
                })?;
                indices.iter().map(|&i| reader.read_frame(i, path)).collect()
            }
            MediaKind::ImageSequence => {
                let files = sequence_files(path)?;
                indices
                    .iter()
                    .map(|&i| {
                        let f = files
                            .get(i)
                            .ok_or_else(|| Error::InvalidPlan(format!("frame {i} outside sequence of {}", files.len())))?;
                        load_image(f)
                    })
                    .collect()
            }
            MediaKind::Image => indices
                .iter()
                .map(|&i| {
                    if i != 0 {
                        return Err(Error::InvalidPlan(format!("frame {i} requested from a still image")));
                    }
                    load_image(path)
                })
                .collect(),
        }
    }
}

/// Writes frames in the decoder stream format: per frame a 16-byte
/// little-endian header `(width, height, frame_index, reserved)` followed by
/// raw RGB24 bytes.
pub fn write_frame_stream<W: Write>(out: &mut W, frames: &[(usize, FrameImage)]) -> std::io::Result<()> {
    for (index, frame) in frames {
        let mut header = [0u8; FRAME_HEADER_LEN];
        header[0..4].copy_from_slice(&frame.width().to_le_bytes());
        header[4..8].copy_from_slice(&frame.height().to_le_bytes());
        header[8..12].copy_from_slice(&(*index as u32).to_le_bytes());
        out.write_all(&header)?;
        out.write_all(frame.pixels())?;
    }
    out.flush()
}

/// Parses a frame stream, checking that frames arrive for exactly `expected` indices.
pub fn read_frame_stream<R: Read>(input: &mut R, expected: &[usize]) -> Result<Vec<FrameImage>> {
    let bad = |reason: String| Error::Decode {
        path: PathBuf::from("<frame stream>"),
        reason,
    };
    let mut frames = Vec::with_capacity(expected.len());
    for &want in expected {
        let mut header = [0u8; FRAME_HEADER_LEN];
        input
            .read_exact(&mut header)
            .map_err(|e| bad(format!("missing header for frame {want}: {e}")))?;
        let word = |i: usize| u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap());
        let (w, h, idx) = (word(0), word(1), word(2) as usize);
        if idx != want {
            return Err(bad(format!("expected frame {want}, stream carries {idx}")));
        }
        if w == 0 || h == 0 || (w as u64) * (h as u64) > 1 << 28 {
            return Err(bad(format!("implausible frame size {w}x{h}")));
        }
        let mut pixels = vec![0u8; w as usize * h as usize * 3];
        input
            .read_exact(&mut pixels)
            .map_err(|e| bad(format!("truncated pixels for frame {want}: {e}")))?;
        frames.push(FrameImage::new(w, h, pixels)?);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after the last frame".into()));
    }
    Ok(frames)
}

/// External decoder invoked as `<program> <args..> frames <path> <i,j,k>`
/// (frame stream on stdout) and `<program> <args..> probe <path>` (a JSON
/// [`StreamInfo`] on stdout, or a non-zero exit for invalid media).
#[derive(Debug, Clone)]
pub struct SubprocessDecoder {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl SubprocessDecoder {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        SubprocessDecoder {
            program: program.into(),
            args,
        }
    }

    fn run(&self, verb: &str, path: &Path, extra: Option<String>) -> Result<std::process::Output> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).arg(verb).arg(path);
        if let Some(e) = extra {
            cmd.arg(e);
        }
        cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
        cmd.output().map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: format!("failed to start {}: {e}", self.program.display()),
        })
    }
}

impl FrameDecoder for SubprocessDecoder {
    fn probe(&self, path: &Path) -> Result<Probe> {
        let output = self.run("probe", path, None)?;
        let files = if path.is_dir() { sequence_files(path)? } else { vec![path.to_path_buf()] };
        let (checksum, bytes) = checksum_and_size(&files)?;
        let kind = if path.is_dir() {
            MediaKind::ImageSequence
        } else if is_image_file(path) {
            MediaKind::Image
        } else {
            MediaKind::Video
        };
        let asset = MediaAsset {
            asset_id: asset_id_for(path),
            source_path: path.to_path_buf(),
            kind,
            bytes,
            checksum_md5: checksum,
        };
        if !output.status.success() {
            let reason = String::from_utf8_lossy(&output.stderr).trim().to_string();
            return Ok(Probe::Rejected {
                asset,
                verdict: CurationVerdict::reject(Stage::Validity, format!("decoder probe failed: {reason}")),
            });
        }
        let stream: StreamInfo = serde_json::from_slice(&output.stdout).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: format!("unparseable probe output: {e}"),
        })?;
        if stream.frame_count == 0 || !(stream.fps > 0.0) {
            return Ok(Probe::Rejected {
                asset,
                verdict: CurationVerdict::reject(Stage::Validity, "zero-duration stream"),
            });
        }
        Ok(Probe::Valid(ProbedAsset { asset, stream }))
    }

    fn decode_indices(&self, path: &Path, _kind: MediaKind, indices: &[usize]) -> Result<Vec<FrameImage>> {
        let list = indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        let output = self.run("frames", path, Some(list))?;
        if !output.status.success() {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        read_frame_stream(&mut output.stdout.as_slice(), indices).map_err(|e| match e {
            Error::Decode { reason, .. } => Error::Decode {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }
}

/// Whether `path` looks like a clip this crate can decode natively.
pub fn is_native_clip(path: &Path) -> bool {
    let mut magic = [0u8; 4];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .is_ok()
        && &magic == MAGIC
}

/// Converts a directory of numbered images into an `.rvid` clip.
pub fn convert_image_sequence(dir: &Path, out: &Path, fps: (u32, u32)) -> Result<StreamInfo> {
    let files = sequence_files(dir)?;
    let frames = files.iter().map(|f| load_image(f)).collect::<Result<Vec<_>>>()?;
    super::container::write_clip(out, fps, super::container::Encoding::RunLength, &frames)?;
    let first = frames.first().ok_or_else(|| Error::InvalidMedia {
        path: dir.to_path_buf(),
        reason: "no numbered images".into(),
    })?;
    Ok(StreamInfo {
        frame_count: frames.len(),
        width: first.width(),
        height: first.height(),
        fps: fps.0 as f64 / fps.1 as f64,
    })
}
