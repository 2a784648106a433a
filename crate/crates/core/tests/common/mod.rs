#![allow(dead_code)]

use std::path::Path;

use idvid::ingest::container::{write_clip, Encoding};
use idvid::ingest::FrameImage;
use idvid::model::{ClipRecord, FrameRange, MediaKind, Md5Hex};
use idvid::providers::label_color;

/// A 64×48 frame with a `label` block whose position drifts with `t`.
pub fn object_frame(label: &str, t: usize) -> FrameImage {
    let c = label_color(label);
    let dx = (t % 16) as u32;
    FrameImage::from_fn(64, 48, |x, y| {
        if (10 + dx..30 + dx).contains(&x) && (12..32).contains(&y) {
            c
        } else {
            let v = 60 + ((x / 8 + y / 8) % 2) as u8 * 50;
            [v, v, v]
        }
    })
}

pub fn write_frames(path: &Path, frames: &[FrameImage]) {
    write_clip(path, (24, 1), Encoding::RunLength, frames).unwrap();
}

/// Writes a clip of `n` object frames and returns a record pointing at it.
pub fn clip_on_disk(dir: &Path, name: &str, label: &str, n: usize) -> ClipRecord {
    let path = dir.join(format!("{name}.rvid"));
    let frames: Vec<_> = (0..n).map(|t| object_frame(label, t)).collect();
    write_frames(&path, &frames);
    let checksum = Md5Hex::of_bytes(name.as_bytes());
    let range = FrameRange { start: 0, end: n - 1 };
    ClipRecord {
        clip_id: ClipRecord::derive_id(&checksum, range),
        asset_id: name.into(),
        checksum_md5: checksum,
        source_path: path,
        media_kind: MediaKind::Video,
        frame_range: range,
        frame_count: n,
        width: 64,
        height: 48,
        fps: 24.0,
        parent_clip_id: None,
        stage_verdicts: vec![],
        captions: None,
        tags: None,
        scores: None,
    }
}
