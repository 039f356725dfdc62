//! Dense value types: token grids, flow fields, occlusion masks, and videos.
//!
//! All of them are immutable after construction, store `f32` data row-major,
//! and reject non-finite values and mismatched lengths up front. A "token" is
//! one spatial position's channel vector inside a [`TokenGrid`].

use crate::error::{Error, Result};

fn check_finite(name: &str, data: &[f32]) -> Result<()> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{name} contains a non-finite value at index {pos}"
        )));
    }
    Ok(())
}

fn check_dim(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(format!("{name} must be positive")));
    }
    Ok(())
}

/// One frame's token field: `h` rows, `w` columns, `d` channels per token,
/// stored row-major as `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    h: usize,
    w: usize,
    d: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub fn new(h: usize, w: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        check_dim("h", h)?;
        check_dim("w", w)?;
        check_dim("d", d)?;
        if data.len() != h * w * d {
            return Err(Error::invalid(format!(
                "token grid data length {} != h*w*d = {}",
                data.len(),
                h * w * d
            )));
        }
        check_finite("token grid data", &data)?;
        Ok(Self { h, w, d, data })
    }

    /// Grid filled with a single value.
    pub fn filled(h: usize, w: usize, d: usize, value: f32) -> Result<Self> {
        Self::new(h, w, d, vec![value; h * w * d])
    }

    /// Build a grid by evaluating `f(y, x, ch)` at every element.
    pub fn from_fn(h: usize, w: usize, d: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w * d);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..d {
                    data.push(f(y, x, ch));
                }
            }
        }
        Self::new(h, w, d, data)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of tokens (`h * w`).
    pub fn tokens(&self) -> usize {
        self.h * self.w
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.w + x) * self.d + ch
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f32 {
        self.data[self.offset(y, x, ch)]
    }

    /// Channel vector of the token at `(y, x)`.
    #[inline]
    pub fn token(&self, y: usize, x: usize) -> &[f32] {
        let base = (y * self.w + x) * self.d;
        &self.data[base..base + self.d]
    }

    /// Channel vector of the `i`-th token in row-major order.
    #[inline]
    pub fn token_at(&self, i: usize) -> &[f32] {
        let base = i * self.d;
        &self.data[base..base + self.d]
    }

    pub fn same_shape(&self, other: &TokenGrid) -> bool {
        self.h == other.h && self.w == other.w && self.d == other.d
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &TokenGrid) -> Result<TokenGrid> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "add: ({},{},{}) vs ({},{},{})",
                self.h, self.w, self.d, other.h, other.w, other.d
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        TokenGrid::new(self.h, self.w, self.d, data)
    }

    /// Elementwise scale.
    pub fn scale(&self, factor: f32) -> Result<TokenGrid> {
        TokenGrid::new(self.h, self.w, self.d, self.data.iter().map(|v| v * factor).collect())
    }

    /// Add a scalar to every element.
    pub fn add_scalar(&self, value: f32) -> Result<TokenGrid> {
        TokenGrid::new(self.h, self.w, self.d, self.data.iter().map(|v| v + value).collect())
    }

    /// Stack two grids along the row axis; `w` and `d` must match.
    /// The result holds `a`'s tokens first, then `b`'s.
    pub fn stack_rows(a: &TokenGrid, b: &TokenGrid) -> Result<TokenGrid> {
        if a.w != b.w || a.d != b.d {
            return Err(Error::shape(format!(
                "stack_rows: ({},{}) vs ({},{})",
                a.w, a.d, b.w, b.d
            )));
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        TokenGrid::new(a.h + b.h, a.w, a.d, data)
    }

    /// Largest absolute element difference; shapes must match.
    pub fn max_abs_diff(&self, other: &TokenGrid) -> Result<f32> {
        if !self.same_shape(other) {
            return Err(Error::shape("max_abs_diff on differing shapes"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max))
    }
}

/// Per-pixel backward displacement field in units of its own `(h, w)` grid.
///
/// For a target pixel `(x, y)` the source sample in the previous frame lives
/// at `(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    h: usize,
    w: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(h: usize, w: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        check_dim("h", h)?;
        check_dim("w", w)?;
        if u.len() != h * w || v.len() != h * w {
            return Err(Error::invalid(format!(
                "flow component lengths ({}, {}) != h*w = {}",
                u.len(),
                v.len(),
                h * w
            )));
        }
        check_finite("flow u", &u)?;
        check_finite("flow v", &v)?;
        Ok(Self { h, w, u, v })
    }

    /// Flow with constant displacement everywhere.
    pub fn constant(h: usize, w: usize, u: f32, v: f32) -> Result<Self> {
        Self::new(h, w, vec![u; h * w], vec![v; h * w])
    }

    /// All-zero flow.
    pub fn zero(h: usize, w: usize) -> Result<Self> {
        Self::constant(h, w, 0.0, 0.0)
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Result<Self> {
        let mut u = Vec::with_capacity(h * w);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (du, dv) = f(y, x);
                u.push(du);
                v.push(dv);
            }
        }
        Self::new(h, w, u, v)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.w + x;
        (self.u[i], self.v[i])
    }

    /// Both components negated.
    pub fn negated(&self) -> FlowField {
        FlowField {
            h: self.h,
            w: self.w,
            u: self.u.iter().map(|v| -v).collect(),
            v: self.v.iter().map(|v| -v).collect(),
        }
    }
}

/// Per-pixel validity weight for a backward-flow correspondence.
///
/// `1` means the token may be pulled from the previous frame; `0` means the
/// pixel is occluded and must keep the current frame's token.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    h: usize,
    w: usize,
    m: Vec<f32>,
}

impl OcclusionMask {
    pub fn new(h: usize, w: usize, m: Vec<f32>) -> Result<Self> {
        check_dim("h", h)?;
        check_dim("w", w)?;
        if m.len() != h * w {
            return Err(Error::invalid(format!(
                "mask length {} != h*w = {}",
                m.len(),
                h * w
            )));
        }
        check_finite("mask", &m)?;
        if let Some(pos) = m.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid(format!(
                "mask value {} at index {pos} outside [0, 1]",
                m[pos]
            )));
        }
        Ok(Self { h, w, m })
    }

    pub fn filled(h: usize, w: usize, value: f32) -> Result<Self> {
        Self::new(h, w, vec![value; h * w])
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn values(&self) -> &[f32] {
        &self.m
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.m[y * self.w + x]
    }
}

/// A whole clip: `n` frames of `h x w` pixels with `c` channels,
/// frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f32>,
}

impl VideoTensor {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        check_dim("n", n)?;
        check_dim("h", h)?;
        check_dim("w", w)?;
        check_dim("c", c)?;
        if data.len() != n * h * w * c {
            return Err(Error::invalid(format!(
                "video data length {} != n*h*w*c = {}",
                data.len(),
                n * h * w * c
            )));
        }
        check_finite("video data", &data)?;
        Ok(Self { n, h, w, c, data })
    }

    /// Assemble a video from per-frame grids of identical shape.
    pub fn from_frames(frames: &[TokenGrid]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("video needs at least one frame"))?;
        let mut data = Vec::with_capacity(frames.len() * first.values().len());
        for (i, f) in frames.iter().enumerate() {
            if !f.same_shape(first) {
                return Err(Error::shape(format!("frame {i} shape differs from frame 0")));
            }
            data.extend_from_slice(f.values());
        }
        VideoTensor::new(frames.len(), first.h(), first.w(), first.d(), data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// Copy frame `i` out as a token grid with `d = c`.
    pub fn frame(&self, i: usize) -> Result<TokenGrid> {
        if i >= self.n {
            return Err(Error::invalid(format!("frame index {i} out of range (n = {})", self.n)));
        }
        let len = self.h * self.w * self.c;
        TokenGrid::new(self.h, self.w, self.c, self.data[i * len..(i + 1) * len].to_vec())
    }

    #[inline]
    pub fn get(&self, i: usize, y: usize, x: usize, ch: usize) -> f32 {
        self.data[((i * self.h + y) * self.w + x) * self.c + ch]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_lengths() {
        assert!(TokenGrid::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(FlowField::new(2, 2, vec![0.0; 4], vec![0.0; 3]).is_err());
        assert!(OcclusionMask::new(2, 2, vec![0.0; 5]).is_err());
        assert!(VideoTensor::new(2, 2, 2, 1, vec![0.0; 7]).is_err());
    }

    #[test]
    fn rejects_non_finite_and_zero_dims() {
        assert!(TokenGrid::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(TokenGrid::new(0, 1, 1, vec![]).is_err());
        assert!(FlowField::new(1, 1, vec![f32::INFINITY], vec![0.0]).is_err());
        assert!(OcclusionMask::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn mask_range_enforced() {
        assert!(OcclusionMask::new(1, 2, vec![0.0, 1.0]).is_ok());
        assert!(OcclusionMask::new(1, 2, vec![-0.1, 0.5]).is_err());
        assert!(OcclusionMask::new(1, 2, vec![0.5, 1.1]).is_err());
    }

    #[test]
    fn video_frame_roundtrip() {
        let frames = vec![
            TokenGrid::from_fn(2, 3, 2, |y, x, ch| (y * 6 + x * 2 + ch) as f32).unwrap(),
            TokenGrid::from_fn(2, 3, 2, |y, x, ch| -((y * 6 + x * 2 + ch) as f32)).unwrap(),
        ];
        let video = VideoTensor::from_frames(&frames).unwrap();
        assert_eq!(video.frame(0).unwrap(), frames[0]);
        assert_eq!(video.frame(1).unwrap(), frames[1]);
        assert!(video.frame(2).is_err());
    }

    proptest! {
        // Element (y, x, ch) lives at offset (y*w + x)*d + ch.
        #[test]
        fn grid_set_get_offset(h in 1usize..6, w in 1usize..6, d in 1usize..5, seed in 0u64..1000) {
            let mut rng = seed;
            let mut next = move || {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((rng >> 33) as f32) / (u32::MAX as f32)
            };
            let mut data = vec![0.0f32; h * w * d];
            let y = (next() * h as f32) as usize % h;
            let x = (next() * w as f32) as usize % w;
            let ch = (next() * d as f32) as usize % d;
            let marker = next() + 2.0;
            data[(y * w + x) * d + ch] = marker;
            let grid = TokenGrid::new(h, w, d, data).unwrap();
            prop_assert_eq!(grid.get(y, x, ch), marker);
            prop_assert_eq!(grid.values()[grid.offset(y, x, ch)], marker);
        }
    }
}
