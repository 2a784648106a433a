use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// An 8-bit RGB frame stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for FrameImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl FrameImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Malformed(format!("frame must be at least 1x1, got {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(FrameImage { width, height, pixels })
    }

    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        FrameImage::new(width, height, pixels).expect("solid frame dimensions")
    }

    /// Builds a frame by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        FrameImage::new(width, height, pixels).expect("from_fn frame dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &FrameImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Per-pixel luma, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels.chunks_exact(3).map(luma_of).collect()
    }

    pub fn flip_horizontal(&self) -> FrameImage {
        FrameImage::from_fn(self.width, self.height, |x, y| self.pixel(self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> FrameImage {
        FrameImage::from_fn(self.width, self.height, |x, y| self.pixel(x, self.height - 1 - y))
    }

    /// Copies the rectangle `[x0, x1) × [y0, y1)`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<FrameImage> {
        if x0 >= x1 || y0 >= y1 || x1 > self.width || y1 > self.height {
            return Err(Error::Malformed(format!(
                "crop ({x0},{y0})-({x1},{y1}) outside {}x{} frame",
                self.width, self.height
            )));
        }
        Ok(FrameImage::from_fn(x1 - x0, y1 - y0, |x, y| self.pixel(x0 + x, y0 + y)))
    }
}

#[inline]
fn luma_of(px: &[u8]) -> f64 {
    LUMA_WEIGHTS[0] * px[0] as f64 + LUMA_WEIGHTS[1] * px[1] as f64 + LUMA_WEIGHTS[2] * px[2] as f64
}

/// Mean BT.601 luma over all pixels, in `[0, 255]`.
pub fn luminance_mean(frame: &FrameImage) -> f64 {
    let sum: f64 = frame.pixels.chunks_exact(3).map(luma_of).sum();
    sum / (frame.width as f64 * frame.height as f64)
}

/// Population variance of the 4-neighbour Laplacian of the luma plane,
/// with replicated borders.
pub fn laplacian_variance(frame: &FrameImage) -> f64 {
    let w = frame.width as usize;
    let h = frame.height as usize;
    let gray = frame.luma();
    let at = |x: usize, y: usize| gray[y * w + x];
    let mut responses = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            responses.push(at(x, up) + at(x, down) + at(left, y) + at(right, y) - 4.0 * at(x, y));
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
}

/// Area-average resampling weights from `n_in` source cells to `n_out`.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Grayscale thumbnail of `size × size` cells, each the area average of
/// the luma it covers.
pub fn gray_thumbnail(frame: &FrameImage, size: usize) -> Vec<f64> {
    let w = frame.width as usize;
    let h = frame.height as usize;
    let gray = frame.luma();
    let wx = area_weights(w, size);
    let wy = area_weights(h, size);
    // Horizontal pass: h rows × size columns.
    let mut rows = vec![0.0; h * size];
    for y in 0..h {
        for (ox, taps) in wx.iter().enumerate() {
            rows[y * size + ox] = taps.iter().map(|&(x, wt)| gray[y * w + x] * wt).sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for (oy, taps) in wy.iter().enumerate() {
        for ox in 0..size {
            out[oy * size + ox] = taps.iter().map(|&(y, wt)| rows[y * size + ox] * wt).sum();
        }
    }
    out
}
