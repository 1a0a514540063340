//! Image standardization: bicubic resize, zero-pad to square, percentile
//! intensity clipping, normalization to `[0, 1]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Parameters of the standardization chain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Length of the longer side after resizing (and the final square side).
    pub target_side: usize,
    /// Lower intensity percentile, in `[0, 100)`.
    pub clip_low_pct: f64,
    /// Upper intensity percentile, in `(clip_low_pct, 100]`.
    pub clip_high_pct: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_side: 512,
            clip_low_pct: 1.0,
            clip_high_pct: 95.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_side < 8 {
            return Err(Error::Config(format!(
                "target_side must be >= 8, got {}",
                self.target_side
            )));
        }
        if !(0.0..100.0).contains(&self.clip_low_pct)
            || self.clip_high_pct > 100.0
            || !self.clip_low_pct.is_finite()
            || !self.clip_high_pct.is_finite()
            || self.clip_low_pct >= self.clip_high_pct
        {
            return Err(Error::Config(format!(
                "percentile bounds must satisfy 0 <= low < high <= 100, got {} / {}",
                self.clip_low_pct, self.clip_high_pct
            )));
        }
        Ok(())
    }
}

/// Where the original pixels sit inside a padded square image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadInfo {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl PadInfo {
    /// Foreground mask over the padded image: true for original pixels.
    pub fn foreground_mask(&self, side: usize) -> Vec<bool> {
        let mut mask = vec![false; side * side];
        for y in self.top..self.top + self.height {
            for x in self.left..self.left + self.width {
                mask[y * side + x] = true;
            }
        }
        mask
    }
}

/// Result of [`clip_normalize`].
#[derive(Debug, Clone)]
pub struct ClipOutcome<T> {
    pub image: Tensor<T>,
    pub p_low: f64,
    pub p_high: f64,
    /// True when the foreground was constant (`p_low == p_high`), in which
    /// case the output is all zeros.
    pub degenerate: bool,
}

/// A fully standardized image plus any warnings raised along the way.
#[derive(Debug, Clone)]
pub struct Preprocessed<T> {
    /// `[target_side, target_side]` image with values in `[0, 1]`.
    pub image: Tensor<T>,
    pub warnings: Vec<String>,
}

// Catmull-Rom cubic kernel (a = -0.5), the dominant bicubic convention.
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

// Sample positions and weights for one output coordinate under the
// half-pixel-center mapping with clamp-replicated edges.
fn tap_positions(dst: usize, src_len: usize, scale: f64) -> ([usize; 4], [f64; 4]) {
    let src = (dst as f64 + 0.5) * scale - 0.5;
    let base = src.floor();
    let frac = src - base;
    let mut idx = [0usize; 4];
    let mut w = [0f64; 4];
    for (tap, offset) in (-1i64..=2).enumerate() {
        let pos = base as i64 + offset;
        idx[tap] = pos.clamp(0, src_len as i64 - 1) as usize;
        w[tap] = cubic_weight(offset as f64 - frac);
    }
    (idx, w)
}

/// Bicubic resize of a `[H, W]` image so the longer side equals
/// `target_side`; the shorter side is rounded preserving aspect ratio
/// (minimum 1).
pub fn resize_bicubic<T: Scalar>(img: &Tensor<T>, target_side: usize) -> Result<Tensor<T>> {
    if img.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "resize expects [H, W], got {:?}",
            img.shape()
        )));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    if h < 2 || w < 2 {
        return Err(Error::Config(format!(
            "degenerate image {h}x{w}; both sides must be >= 2"
        )));
    }
    if target_side == 0 {
        return Err(Error::Config("target side must be positive".into()));
    }
    let (new_h, new_w) = if h >= w {
        let short = ((w as f64 * target_side as f64 / h as f64).round() as usize).max(1);
        (target_side, short)
    } else {
        let short = ((h as f64 * target_side as f64 / w as f64).round() as usize).max(1);
        (short, target_side)
    };
    Ok(resize_bicubic_to(img, new_h, new_w))
}

/// Separable bicubic resampling to an explicit output size.
pub fn resize_bicubic_to<T: Scalar>(img: &Tensor<T>, new_h: usize, new_w: usize) -> Tensor<T> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    // Horizontal pass: [h, w] -> [h, new_w].
    let scale_x = w as f64 / new_w as f64;
    let mut horiz = vec![0f64; h * new_w];
    for ox in 0..new_w {
        let (idx, wt) = tap_positions(ox, w, scale_x);
        for y in 0..h {
            let row = &img.data()[y * w..(y + 1) * w];
            let mut acc = 0f64;
            for tap in 0..4 {
                acc += wt[tap] * row[idx[tap]].to_f64_lossy();
            }
            horiz[y * new_w + ox] = acc;
        }
    }
    // Vertical pass: [h, new_w] -> [new_h, new_w].
    let scale_y = h as f64 / new_h as f64;
    let mut out = vec![T::zero(); new_h * new_w];
    for oy in 0..new_h {
        let (idx, wt) = tap_positions(oy, h, scale_y);
        for ox in 0..new_w {
            let mut acc = 0f64;
            for tap in 0..4 {
                acc += wt[tap] * horiz[idx[tap] * new_w + ox];
            }
            out[oy * new_w + ox] = T::from_f64_lossy(acc);
        }
    }
    Tensor::new(vec![new_h, new_w], out).expect("resize output shape")
}

/// Zero-pads the short axis symmetrically to `target_side x target_side`;
/// the odd extra pixel goes to the bottom/right.
pub fn pad_to_square<T: Scalar>(
    img: &Tensor<T>,
    target_side: usize,
) -> Result<(Tensor<T>, PadInfo)> {
    if img.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "pad expects [H, W], got {:?}",
            img.shape()
        )));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    if h > target_side || w > target_side {
        return Err(Error::Config(format!(
            "input {h}x{w} larger than target {target_side}"
        )));
    }
    if h.max(w) != target_side {
        return Err(Error::Config(format!(
            "longer side of {h}x{w} must already equal target {target_side}"
        )));
    }
    let top = (target_side - h) / 2;
    let left = (target_side - w) / 2;
    let mut out = Tensor::zeros(vec![target_side, target_side]);
    for y in 0..h {
        for x in 0..w {
            out.set2(top + y, left + x, img.at2(y, x));
        }
    }
    Ok((
        out,
        PadInfo {
            top,
            left,
            height: h,
            width: w,
        },
    ))
}

/// Linear-interpolation percentile of pre-sorted values.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo].to_f64_lossy() * (1.0 - frac)
        + sorted[hi.min(sorted.len() - 1)].to_f64_lossy() * frac
}

/// Clamps intensities to the `[p_low, p_high]` percentile range of the
/// foreground pixels and maps that range affinely onto `[0, 1]`.
///
/// Percentiles are computed over `foreground` pixels only (all pixels when
/// `None`); pixels outside the mask come out as 0. A constant foreground is
/// degenerate: the output is all zeros and the outcome is flagged.
pub fn clip_normalize<T: Scalar>(
    img: &Tensor<T>,
    cfg: &PreprocessConfig,
    foreground: Option<&[bool]>,
) -> Result<ClipOutcome<T>> {
    cfg.validate()?;
    if !img.all_finite() {
        return Err(Error::Config("image contains non-finite values".into()));
    }
    if let Some(mask) = foreground {
        if mask.len() != img.numel() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries for {} pixels",
                mask.len(),
                img.numel()
            )));
        }
    }
    let in_mask = |i: usize| foreground.is_none_or(|m| m[i]);
    let mut values: Vec<T> = img
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| in_mask(*i))
        .map(|(_, &v)| v)
        .collect();
    if values.is_empty() {
        return Err(Error::Config("foreground mask selects no pixels".into()));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let p_low = percentile_sorted(&values, cfg.clip_low_pct);
    let p_high = percentile_sorted(&values, cfg.clip_high_pct);

    let mut out = img.zeros_like();
    let degenerate = p_high <= p_low;
    if !degenerate {
        let lo = T::from_f64_lossy(p_low);
        let hi = T::from_f64_lossy(p_high);
        let span = T::from_f64_lossy(p_high - p_low);
        for (i, &v) in img.data().iter().enumerate() {
            if in_mask(i) {
                let clamped = v.max(lo).min(hi);
                out.data_mut()[i] = (clamped - lo) / span;
            }
        }
    }
    Ok(ClipOutcome {
        image: out,
        p_low,
        p_high,
        degenerate,
    })
}

/// The full standardization chain: resize, pad to square, percentile clip
/// and normalize over the pre-padding (foreground) pixels.
pub fn preprocess_image<T: Scalar>(
    img: &Tensor<T>,
    cfg: &PreprocessConfig,
) -> Result<Preprocessed<T>> {
    cfg.validate()?;
    let resized = resize_bicubic(img, cfg.target_side)?;
    let (padded, pad) = pad_to_square(&resized, cfg.target_side)?;
    let mask = pad.foreground_mask(cfg.target_side);
    let clipped = clip_normalize(&padded, cfg, Some(&mask))?;
    let mut warnings = Vec::new();
    if clipped.degenerate {
        warnings.push(format!(
            "constant image: percentile range is empty at {:.6}; output forced to zeros",
            clipped.p_low
        ));
    }
    Ok(Preprocessed {
        image: clipped.image,
        warnings,
    })
}

/// Adapter between the preprocessing side and a model's input side:
/// square-to-square bicubic resize with output clamped back to `[0, 1]`.
pub fn resize_square<T: Scalar>(img: &Tensor<T>, side: usize) -> Result<Tensor<T>> {
    if img.rank() != 2 || img.shape()[0] != img.shape()[1] {
        return Err(Error::ShapeMismatch(format!(
            "adapter expects a square image, got {:?}",
            img.shape()
        )));
    }
    if img.shape()[0] == side {
        return Ok(img.clone());
    }
    // Bicubic overshoot is clamped so downstream code can rely on [0, 1].
    Ok(resize_bicubic_to(img, side, side).map(|v| v.max(T::zero()).min(T::one())))
}

/// `[S, S]` image to `[1, S, S]` single-channel model input.
pub fn to_model_input<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    if img.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected [H, W], got {:?}",
            img.shape()
        )));
    }
    img.reshaped(vec![1, img.shape()[0], img.shape()[1]])
}
