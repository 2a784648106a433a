//! `.rvid`: a minimal random-access clip container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "RVID" | version u32 | width u32 | height u32 | fps_num u32 | fps_den u32
//!        | frame_count u32 | encoding u32
//!        | frame_count × (offset u64, length u32)
//!        | frame payloads
//! ```
//!
//! Encoding 0 stores raw RGB24; encoding 1 stores runs of identical pixels
//! as `(count u16, r, g, b)`.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::frame::FrameImage;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RVID";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 32;
const ENTRY_LEN: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Raw,
    RunLength,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipHeader {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frame_count: u32,
    pub encoding: Encoding,
}

impl ClipHeader {
    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }
}

fn rle_encode(pixels: &[u8], out: &mut Vec<u8>) {
    let mut chunks = pixels.chunks_exact(3).peekable();
    while let Some(px) = chunks.next() {
        let mut run: u16 = 1;
        while run < u16::MAX && chunks.peek() == Some(&px) {
            chunks.next();
            run += 1;
        }
        out.extend_from_slice(&run.to_le_bytes());
        out.extend_from_slice(px);
    }
}

fn rle_decode(payload: &[u8], expected: usize) -> Option<Vec<u8>> {
    if payload.len() % 5 != 0 {
        return None;
    }
    let mut out = Vec::with_capacity(expected);
    for run in payload.chunks_exact(5) {
        let n = u16::from_le_bytes([run[0], run[1]]) as usize;
        if out.len() + n * 3 > expected {
            return None;
        }
        for _ in 0..n {
            out.extend_from_slice(&run[2..5]);
        }
    }
    (out.len() == expected).then_some(out)
}

/// Writes `frames` as an `.rvid` clip. All frames must share dimensions.
pub fn write_clip<'a>(
    path: &Path,
    fps: (u32, u32),
    encoding: Encoding,
    frames: impl IntoIterator<Item = &'a FrameImage>,
) -> Result<()> {
    let mut payloads: Vec<Vec<u8>> = Vec::new();
    let mut dims: Option<(u32, u32)> = None;
    for frame in frames {
        let d = (frame.width(), frame.height());
        if *dims.get_or_insert(d) != d {
            return Err(Error::Malformed("all frames of a clip must share dimensions".into()));
        }
        payloads.push(match encoding {
            Encoding::Raw => frame.pixels().to_vec(),
            Encoding::RunLength => {
                let mut buf = Vec::new();
                rle_encode(frame.pixels(), &mut buf);
                buf
            }
        });
    }
    let (width, height) = dims.ok_or_else(|| Error::Malformed("a clip needs at least one frame".into()))?;
    if fps.0 == 0 || fps.1 == 0 {
        return Err(Error::Malformed("fps numerator and denominator must be positive".into()));
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    for v in [
        VERSION,
        width,
        height,
        fps.0,
        fps.1,
        payloads.len() as u32,
        match encoding {
            Encoding::Raw => 0,
            Encoding::RunLength => 1,
        },
    ] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    let mut offset = HEADER_LEN + ENTRY_LEN * payloads.len() as u64;
    for p in &payloads {
        w.write_all(&offset.to_le_bytes()).map_err(io)?;
        w.write_all(&(p.len() as u32).to_le_bytes()).map_err(io)?;
        offset += p.len() as u64;
    }
    for p in &payloads {
        w.write_all(p).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// An opened `.rvid` clip with a validated offset table.
pub struct ClipReader {
    file: File,
    header: ClipHeader,
    table: Vec<(u64, u32)>,
}

impl ClipReader {
    /// Opens and validates the container structure. Any inconsistency
    /// (bad magic, truncated table or payload) is reported as
    /// [`Error::InvalidMedia`].
    pub fn open(path: &Path) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidMedia {
            path: path.to_path_buf(),
            reason,
        };
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut head = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut head)
            .map_err(|_| invalid("file shorter than container header".into()))?;
        if &head[..4] != MAGIC {
            return Err(invalid("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != VERSION {
            return Err(invalid(format!("unsupported version {}", word(0))));
        }
        let encoding = match word(6) {
            0 => Encoding::Raw,
            1 => Encoding::RunLength,
            e => return Err(invalid(format!("unknown encoding {e}"))),
        };
        let header = ClipHeader {
            width: word(1),
            height: word(2),
            fps_num: word(3),
            fps_den: word(4),
            frame_count: word(5),
            encoding,
        };
        if header.width == 0 || header.height == 0 {
            return Err(invalid("zero frame dimensions".into()));
        }
        if header.fps_num == 0 || header.fps_den == 0 {
            return Err(invalid("non-positive frame rate".into()));
        }
        if header.frame_count == 0 {
            return Err(invalid("zero-duration stream".into()));
        }
        let table_len = ENTRY_LEN * header.frame_count as u64;
        if HEADER_LEN + table_len > file_len {
            return Err(invalid("truncated frame table".into()));
        }
        let mut raw = vec![0u8; table_len as usize];
        file.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
        let table: Vec<(u64, u32)> = raw
            .chunks_exact(ENTRY_LEN as usize)
            .map(|c| {
                (
                    u64::from_le_bytes(c[..8].try_into().unwrap()),
                    u32::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let mut expected = HEADER_LEN + table_len;
        for &(off, len) in &table {
            if off != expected {
                return Err(invalid("frame table is not contiguous".into()));
            }
            expected += len as u64;
        }
        if expected != file_len {
            return Err(invalid(format!("expected {expected} bytes, file has {file_len}")));
        }
        Ok(ClipReader { file, header, table })
    }

    pub fn header(&self) -> &ClipHeader {
        &self.header
    }

    pub fn read_frame(&mut self, index: usize, path: &Path) -> Result<FrameImage> {
        let &(off, len) = self.table.get(index).ok_or_else(|| {
            Error::InvalidPlan(format!("frame {index} outside clip of {} frames", self.table.len()))
        })?;
        let decode_err = |reason: &str| Error::Decode {
            path: path.to_path_buf(),
            reason: format!("frame {index}: {reason}"),
        };
        self.file
            .seek(SeekFrom::Start(off))
            .map_err(|e| decode_err(&e.to_string()))?;
        let mut payload = vec![0u8; len as usize];
        self.file
            .read_exact(&mut payload)
            .map_err(|e| decode_err(&e.to_string()))?;
        let expected = self.header.width as usize * self.header.height as usize * 3;
        let pixels = match self.header.encoding {
            Encoding::Raw if payload.len() == expected => payload,
            Encoding::Raw => return Err(decode_err("raw payload has the wrong size")),
            Encoding::RunLength => rle_decode(&payload, expected).ok_or_else(|| decode_err("corrupt run-length payload"))?,
        };
        FrameImage::new(self.header.width, self.header.height, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames() -> Vec<FrameImage> {
        (0..4u8)
            .map(|i| FrameImage::from_fn(7, 5, |x, y| [i, (x * 30) as u8, if y > 2 { 255 } else { 0 }]))
            .collect()
    }

    #[test]
    fn roundtrip_both_encodings() {
        let dir = tempfile::tempdir().unwrap();
        for enc in [Encoding::Raw, Encoding::RunLength] {
            let path = dir.path().join(format!("{enc:?}.rvid"));
            let src = frames();
            write_clip(&path, (24, 1), enc, &src).unwrap();
            let mut r = ClipReader::open(&path).unwrap();
            assert_eq!(r.header().frame_count, 4);
            assert_eq!(r.header().fps(), 24.0);
            for (i, f) in src.iter().enumerate() {
                assert_eq!(&r.read_frame(i, &path).unwrap(), f);
            }
            assert_eq!(r.read_frame(4, &path).unwrap_err().code(), "INVALID_PLAN");
        }
    }

    #[test]
    fn truncated_file_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rvid");
        write_clip(&path, (24, 1), Encoding::Raw, &frames()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [10, 100, bytes.len() - 1] {
            let p = dir.path().join(format!("cut{cut}.rvid"));
            std::fs::write(&p, &bytes[..cut]).unwrap();
            assert_eq!(ClipReader::open(&p).err().unwrap().code(), "INVALID_MEDIA");
        }
    }

    #[test]
    fn long_runs_split_at_u16_max() {
        let f = FrameImage::solid(300, 300, [1, 2, 3]);
        let mut buf = Vec::new();
        rle_encode(f.pixels(), &mut buf);
        assert_eq!(buf.len(), 5 * 2);
        assert_eq!(rle_decode(&buf, f.pixels().len()).unwrap(), f.pixels());
    }
}
