//! Fitting rendered tables into a fixed patch budget and cutting them into
//! `P × P` patches.
//!
//! Two fitting strategies are provided. [`fit_resize`] rescales (up or down)
//! to the largest patch grid that fits the budget. [`gamma_fit`] never
//! shrinks an image below `gamma` of its size: if that is not enough, the
//! image is shrunk to `gamma` and the columns that still overflow the budget
//! are cut off on the right.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::image::Image;

pub const PATCH_MAGIC: &[u8; 4] = b"TPX1";
/// Padding shade for partial patches.
pub const PAD_GRAY: u8 = 255;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("scale {0} is outside (0, 1]")]
    BadScale(f64),
    #[error("bad fit config: {0}")]
    BadConfig(&'static str),
    #[error("not a patch file")]
    BadMagic,
    #[error("patch file ends early")]
    TruncatedFile,
    #[error("patch grid {rows}x{cols} does not fit 16-bit positions")]
    PositionOverflow { rows: u32, cols: u32 },
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for PatchError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            PatchError::TruncatedFile
        } else {
            PatchError::Io(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_patches: u32,
    pub patch: u32,
    pub gamma: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_patches: 2048,
            patch: 16,
            gamma: 0.39,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), PatchError> {
        if self.max_patches == 0 {
            return Err(PatchError::BadConfig("max_patches must be >= 1"));
        }
        if self.patch == 0 {
            return Err(PatchError::BadConfig("patch must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(PatchError::BadConfig("gamma must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Largest pixel count a fitted image can reach: `max_patches · P²`.
    pub fn pixel_budget(&self) -> u64 {
        u64::from(self.max_patches) * u64::from(self.patch) * u64::from(self.patch)
    }

    /// Patches needed to cover a `width × height` image after padding.
    pub fn patches_for(&self, width: u32, height: u32) -> u64 {
        let p = self.patch;
        u64::from(width.div_ceil(p)) * u64::from(height.div_ceil(p))
    }

    /// Uniform scale whose output area equals the pixel budget.
    pub fn fit_scale(&self, width: u32, height: u32) -> f64 {
        (self.pixel_budget() as f64 / (f64::from(width) * f64::from(height))).sqrt()
    }
}

/// Source footprint of each destination index along one axis, as
/// `(first source index, weights)`.
///
/// Coordinates are scaled by `src · dst`, which makes every overlap an
/// integer and every footprint total exactly `src`. Sums of such weights
/// times 8-bit values stay far below 2^53, so `f64` accumulation is exact.
fn axis_weights(src: u32, dst: u32) -> Vec<(usize, Vec<f64>)> {
    let (n, m) = (u64::from(src), u64::from(dst));
    (0..m)
        .map(|i| {
            let (lo, hi) = (i * n, (i + 1) * n);
            let first = lo / m;
            let last = hi.div_ceil(m).min(n);
            let weights = (first..last)
                .map(|j| (hi.min((j + 1) * m) - lo.max(j * m)) as f64)
                .collect();
            (first as usize, weights)
        })
        .collect()
}

/// Area-weighted box filter to exactly `dst_w × dst_h`.
///
/// The horizontal pass accumulates weighted `f64` sums per source row. The
/// vertical pass combines them and divides by the footprint area once, so
/// the only rounding step is that division. Results are rounded half-up and
/// clamped to `[0, 255]`.
pub fn resize_to(img: &Image, dst_w: u32, dst_h: u32) -> Image {
    assert!(dst_w > 0 && dst_h > 0, "empty target size");
    if (dst_w, dst_h) == (img.width(), img.height()) {
        return img.clone();
    }
    let xw = axis_weights(img.width(), dst_w);
    let yw = axis_weights(img.height(), dst_h);
    let area = f64::from(img.width()) * f64::from(img.height());

    let dw = dst_w as usize;
    let mut horiz = vec![0.0f64; img.height() as usize * dw];
    for y in 0..img.height() {
        let src = img.row(y);
        let out = &mut horiz[y as usize * dw..(y as usize + 1) * dw];
        for (o, (first, weights)) in out.iter_mut().zip(&xw) {
            *o = weights
                .iter()
                .zip(&src[*first..])
                .map(|(w, &p)| w * f64::from(p))
                .sum();
        }
    }

    let mut pixels = vec![0u8; dw * dst_h as usize];
    let mut acc = vec![0.0f64; dw];
    for (y, (first, weights)) in yw.iter().enumerate() {
        acc.fill(0.0);
        for (k, w) in weights.iter().enumerate() {
            let src = &horiz[(first + k) * dw..(first + k + 1) * dw];
            for (a, &v) in acc.iter_mut().zip(src) {
                *a += w * v;
            }
        }
        let out = &mut pixels[y * dw..(y + 1) * dw];
        for (o, a) in out.iter_mut().zip(&acc) {
            let v = a / area;
            *o = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Image::from_pixels(dst_w, dst_h, pixels).expect("sized above")
}

/// Shrinks by `s` in `(0, 1]` to `floor(s·w) × floor(s·h)`, at least 1×1.
pub fn resize(img: &Image, s: f64) -> Result<Image, PatchError> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(PatchError::BadScale(s));
    }
    let (w, h) = scaled_dims(img, s);
    Ok(resize_to(img, w, h))
}

fn scaled_dims(img: &Image, s: f64) -> (u32, u32) {
    let w = ((s * f64::from(img.width())).floor() as u32).max(1);
    let h = ((s * f64::from(img.height())).floor() as u32).max(1);
    (w, h)
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub image: Image,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub scale: f64,
}

/// Patch grid `(rows, cols)` that [`fit_resize`] targets for a
/// `width × height` source.
///
/// The grid is `floor(s·h/P) × floor(s·w/P)` with `s = sqrt(budget / (h·w))`,
/// each side at least 1. When one side is forced up to 1 the other side is
/// capped so the product still respects `max_patches`.
pub fn fit_grid(width: u32, height: u32, cfg: &FitConfig) -> (u32, u32) {
    let s = cfg.fit_scale(width, height);
    let p = f64::from(cfg.patch);
    let max = u64::from(cfg.max_patches);
    let mut rows = ((s * f64::from(height) / p).floor() as u64).max(1);
    let mut cols = ((s * f64::from(width) / p).floor() as u64).max(1);
    while rows * cols > max {
        if cols == 1 {
            rows = max;
        } else if rows == 1 {
            cols = max;
        } else if rows >= cols {
            rows -= 1;
        } else {
            cols -= 1;
        }
    }
    (rows as u32, cols as u32)
}

/// Rescales to the largest patch grid within budget (see [`fit_grid`]).
pub fn fit_resize(img: &Image, cfg: &FitConfig) -> Result<Fitted, PatchError> {
    cfg.validate()?;
    let (rows, cols) = fit_grid(img.width(), img.height(), cfg);
    Ok(Fitted {
        image: resize_to(img, cols * cfg.patch, rows * cfg.patch),
        grid_rows: rows,
        grid_cols: cols,
        scale: cfg.fit_scale(img.width(), img.height()),
    })
}

#[derive(Debug, Clone)]
pub struct GammaFit {
    pub image: Image,
    pub scale_used: f64,
    pub truncated: bool,
    /// Size after scaling, before truncation.
    pub scaled_width: u32,
    pub scaled_height: u32,
}

impl GammaFit {
    /// Share of the scaled image removed by truncation.
    pub fn discarded_fraction(&self) -> f64 {
        let kept = f64::from(self.image.width()) * f64::from(self.image.height());
        let scaled = f64::from(self.scaled_width) * f64::from(self.scaled_height);
        1.0 - kept / scaled
    }

    /// Source-image pixels whose content was cut off by truncation.
    pub fn discarded_source_pixels(&self, src_width: u32, src_height: u32) -> f64 {
        self.discarded_fraction() * f64::from(src_width) * f64::from(src_height)
    }
}

/// Shrinks by `max(gamma, s_fit)` and then truncates from the right (and, if
/// a single patch column is still too tall, from the bottom) until the
/// padded patch grid fits the budget.
pub fn gamma_fit(img: &Image, cfg: &FitConfig) -> Result<GammaFit, PatchError> {
    cfg.validate()?;
    let max = u64::from(cfg.max_patches);
    if cfg.patches_for(img.width(), img.height()) <= max {
        return Ok(GammaFit {
            image: img.clone(),
            scale_used: 1.0,
            truncated: false,
            scaled_width: img.width(),
            scaled_height: img.height(),
        });
    }

    let s_fit = cfg.fit_scale(img.width(), img.height());
    if cfg.gamma <= s_fit {
        let fitted = fit_resize(img, cfg)?;
        return Ok(GammaFit {
            scaled_width: fitted.image.width(),
            scaled_height: fitted.image.height(),
            image: fitted.image,
            scale_used: s_fit,
            truncated: false,
        });
    }

    let scaled = resize(img, cfg.gamma)?;
    let (w, h) = (scaled.width(), scaled.height());
    let mut out = GammaFit {
        image: scaled,
        scale_used: cfg.gamma,
        truncated: false,
        scaled_width: w,
        scaled_height: h,
    };
    if cfg.patches_for(w, h) <= max {
        return Ok(out);
    }

    let p = cfg.patch;
    let rows_needed = u64::from(h.div_ceil(p));
    let (keep_w, keep_h) = if rows_needed <= max {
        let cols = (max / rows_needed) as u32;
        (w.min(cols * p), h)
    } else {
        (w.min(p), h.min(cfg.max_patches * p))
    };
    out.image = out.image.crop(keep_w, keep_h);
    out.truncated = true;
    Ok(out)
}

/// Row-major `P × P` patches with their grid positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSeq {
    pub patch: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub patches: Vec<Vec<u8>>,
    pub positions: Vec<(u32, u32)>,
}

impl PatchSeq {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// The padded image the patches were cut from.
    pub fn reassemble(&self) -> Image {
        let p = self.patch as usize;
        let w = self.grid_cols as usize * p;
        let mut pixels = vec![PAD_GRAY; w * self.grid_rows as usize * p];
        for (block, &(pr, pc)) in self.patches.iter().zip(&self.positions) {
            for dy in 0..p {
                let start = (pr as usize * p + dy) * w + pc as usize * p;
                pixels[start..start + p].copy_from_slice(&block[dy * p..(dy + 1) * p]);
            }
        }
        Image::from_pixels(w as u32, self.grid_rows * self.patch, pixels).expect("sized above")
    }

    pub fn encoded_len(&self) -> usize {
        16 + self.patches.len() * (4 + (self.patch * self.patch) as usize)
    }
}

/// Pads right and bottom with white to multiples of `p`, then cuts the image
/// into row-major blocks.
pub fn extract_patches(img: &Image, p: u32) -> PatchSeq {
    assert!(p >= 1, "patch size must be positive");
    let grid_cols = img.width().div_ceil(p);
    let grid_rows = img.height().div_ceil(p);
    let pu = p as usize;
    let mut patches = Vec::with_capacity((grid_rows * grid_cols) as usize);
    let mut positions = Vec::with_capacity(patches.capacity());
    for pr in 0..grid_rows {
        for pc in 0..grid_cols {
            let mut block = vec![PAD_GRAY; pu * pu];
            let x0 = pc * p;
            let x1 = (x0 + p).min(img.width());
            for dy in 0..p {
                let y = pr * p + dy;
                if y >= img.height() {
                    break;
                }
                let src = &img.row(y)[x0 as usize..x1 as usize];
                block[dy as usize * pu..dy as usize * pu + src.len()].copy_from_slice(src);
            }
            patches.push(block);
            positions.push((pr, pc));
        }
    }
    PatchSeq {
        patch: p,
        grid_rows,
        grid_cols,
        patches,
        positions,
    }
}

/// `TPX1` file: magic, little-endian `u32` patch size, grid rows and grid
/// columns, then per patch a `u16` row, a `u16` column and `P²` bytes.
pub fn write_patches<W: Write>(seq: &PatchSeq, mut sink: W) -> Result<(), PatchError> {
    if seq.grid_rows > u32::from(u16::MAX) + 1 || seq.grid_cols > u32::from(u16::MAX) + 1 {
        return Err(PatchError::PositionOverflow {
            rows: seq.grid_rows,
            cols: seq.grid_cols,
        });
    }
    sink.write_all(PATCH_MAGIC)?;
    for v in [seq.patch, seq.grid_rows, seq.grid_cols] {
        sink.write_all(&v.to_le_bytes())?;
    }
    for (block, &(r, c)) in seq.patches.iter().zip(&seq.positions) {
        sink.write_all(&(r as u16).to_le_bytes())?;
        sink.write_all(&(c as u16).to_le_bytes())?;
        sink.write_all(block)?;
    }
    Ok(())
}

pub fn read_patches<R: Read>(mut source: R) -> Result<PatchSeq, PatchError> {
    let mut magic = [0u8; 4];
    source.read_exact(&mut magic)?;
    if &magic != PATCH_MAGIC {
        return Err(PatchError::BadMagic);
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 3];
    for h in &mut header {
        source.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word);
    }
    let [patch, grid_rows, grid_cols] = header;
    let n = grid_rows as usize * grid_cols as usize;
    let size = patch as usize * patch as usize;
    let mut patches = Vec::with_capacity(n.min(1 << 16));
    let mut positions = Vec::with_capacity(n.min(1 << 16));
    let mut half = [0u8; 2];
    for _ in 0..n {
        source.read_exact(&mut half)?;
        let r = u16::from_le_bytes(half);
        source.read_exact(&mut half)?;
        let c = u16::from_le_bytes(half);
        let mut block = vec![0u8; size];
        source.read_exact(&mut block)?;
        patches.push(block);
        positions.push((u32::from(r), u32::from(c)));
    }
    Ok(PatchSeq {
        patch,
        grid_rows,
        grid_cols,
        patches,
        positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> Image {
        let pixels = (0..w * h).map(|i| ((i * 7) % 256) as u8).collect();
        Image::from_pixels(w, h, pixels).unwrap()
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gradient(37, 11);
        assert_eq!(resize(&img, 1.0).unwrap(), img);
        let gray = Image::filled(101, 57, 93);
        for s in [0.9, 0.5, 0.33, 0.01] {
            let out = resize(&gray, s).unwrap();
            assert!(out.pixels().iter().all(|&p| p == 93), "s = {s}");
        }
    }

    #[test]
    fn resize_rounds_half_up() {
        let img = Image::from_pixels(2, 2, vec![0, 0, 255, 255]).unwrap();
        let out = resize(&img, 0.5).unwrap();
        assert_eq!((out.width(), out.height(), out.pixels()), (1, 1, &[128u8][..]));
    }

    #[test]
    fn resize_rejects_bad_scale() {
        let img = gradient(4, 4);
        for s in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(resize(&img, s), Err(PatchError::BadScale(_))));
        }
    }

    #[test]
    fn fit_square_image() {
        let img = Image::filled(1024, 1024, 255);
        let fitted = fit_resize(&img, &FitConfig::default()).unwrap();
        assert_eq!((fitted.grid_rows, fitted.grid_cols), (45, 45));
        assert_eq!((fitted.image.width(), fitted.image.height()), (720, 720));
        assert!((fitted.scale - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fit_keeps_exact_budget_image() {
        let img = gradient(64 * 16, 32 * 16);
        let fitted = fit_resize(&img, &FitConfig::default()).unwrap();
        assert_eq!((fitted.grid_rows, fitted.grid_cols), (32, 64));
        assert_eq!(fitted.image, img);
    }

    #[test]
    fn fit_caps_needle_images() {
        let img = Image::filled(1, 10_000, 0);
        let fitted = fit_resize(&img, &FitConfig::default()).unwrap();
        assert_eq!((fitted.grid_rows, fitted.grid_cols), (2048, 1));
        let img = Image::filled(10_000, 1, 0);
        let fitted = fit_resize(&img, &FitConfig::default()).unwrap();
        assert_eq!((fitted.grid_rows, fitted.grid_cols), (1, 2048));
    }

    #[test]
    fn gamma_zero_only_scales() {
        let img = Image::filled(4000, 2000, 255);
        let cfg = FitConfig {
            gamma: 0.0,
            ..FitConfig::default()
        };
        let out = gamma_fit(&img, &cfg).unwrap();
        assert!(!out.truncated);
        assert_eq!(out.discarded_fraction(), 0.0);
        assert!(cfg.patches_for(out.image.width(), out.image.height()) <= 2048);
    }

    #[test]
    fn gamma_truncates_wide_image() {
        let img = Image::filled(4000, 2000, 255);
        let out = gamma_fit(&img, &FitConfig::default()).unwrap();
        assert!(out.truncated);
        assert_eq!(out.scale_used, 0.39);
        assert_eq!((out.scaled_width, out.scaled_height), (1560, 780));
        assert_eq!((out.image.width(), out.image.height()), (656, 780));
    }

    #[test]
    fn gamma_leaves_small_images() {
        let img = gradient(100, 100);
        let out = gamma_fit(&img, &FitConfig::default()).unwrap();
        assert_eq!(out.image, img);
        assert_eq!((out.scale_used, out.truncated), (1.0, false));
    }

    #[test]
    fn gamma_truncates_from_top_when_too_tall() {
        let img = Image::filled(16, 100_000, 255);
        let cfg = FitConfig {
            gamma: 1.0,
            ..FitConfig::default()
        };
        let out = gamma_fit(&img, &cfg).unwrap();
        assert!(out.truncated);
        assert_eq!((out.image.width(), out.image.height()), (16, 2048 * 16));
    }

    #[test]
    fn patches_cover_padded_image() {
        let img = gradient(32, 32);
        let seq = extract_patches(&img, 16);
        assert_eq!(seq.positions, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);

        let img = gradient(33, 32);
        let seq = extract_patches(&img, 16);
        assert_eq!((seq.grid_rows, seq.grid_cols, seq.len()), (2, 3, 6));
        assert!(seq.patches[2][1..16].iter().all(|&p| p == PAD_GRAY));
        let back = seq.reassemble();
        assert_eq!((back.width(), back.height()), (48, 32));
        assert_eq!(back.crop(33, 32), img);
    }

    #[test]
    fn patch_file_round_trip_and_errors() {
        let seq = extract_patches(&gradient(32, 32), 16);
        let mut buf = Vec::new();
        write_patches(&seq, &mut buf).unwrap();
        assert_eq!(buf.len(), seq.encoded_len());
        assert_eq!(read_patches(&buf[..]).unwrap(), seq);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_patches(&bad[..]), Err(PatchError::BadMagic)));
        assert!(matches!(
            read_patches(&buf[..buf.len() - 1]),
            Err(PatchError::TruncatedFile)
        ));
        assert!(matches!(read_patches(&buf[..2]), Err(PatchError::TruncatedFile)));
    }

    #[test]
    fn full_budget_file_size() {
        let seq = extract_patches(&Image::filled(64 * 16, 32 * 16, 0), 16);
        assert_eq!(seq.len(), 2048);
        assert_eq!(seq.encoded_len(), 16 + 2048 * (256 + 4));
    }
}
