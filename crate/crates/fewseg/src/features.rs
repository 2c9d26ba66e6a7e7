//! Handcrafted local features, per-location linear embeddings, and the
//! prediction head.
//!
//! Images are reduced to a coarse grid: each `stride x stride` block yields
//! six channels computed from the block's pixels. The channels are fixed
//! and training never touches them; everything learnable lives in the three
//! weight tensors of [`ModelParams`]. Keeping the backbone deterministic
//! and tiny makes the whole pipeline checkable against finite differences.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::transform::{FeatureMap, Mask, ProbabilityMap, RealMap};
use rand::Rng;

/// Channels produced per grid block:
/// 0 mean intensity, 1 mean horizontal gradient, 2 mean vertical gradient,
/// 3 intensity standard deviation, 4 mean red-green opponent,
/// 5 mean blue-yellow opponent. Opponent channels are zero for grayscale.
pub const BASE_CHANNELS: usize = 6;

/// Raster image with values in `[0, 1]`, channel-last like [`FeatureMap`].
/// One channel (grayscale) or three (RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be nonzero, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                context: "Image::from_vec",
                expected: (height * width, channels),
                got: (data.len(), 1),
            });
        }
        if let Some(&bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "image values must lie in [0, 1], found {bad}"
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// The learnable state: embedding weights `w_e`, projection weights `w_f`
/// (both `BASE_CHANNELS x dim`, applied per grid location, no bias) and the
/// logistic head `w_h` (one weight per projected channel plus a bias in the
/// last slot). `stride` is carried along so a parameter file is enough to
/// run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub stride: usize,
    pub w_e: Matrix,
    pub w_f: Matrix,
    pub w_h: Vec<f64>,
}

impl ModelParams {
    pub fn new(stride: usize, w_e: Matrix, w_f: Matrix, w_h: Vec<f64>) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if w_e.rows() != BASE_CHANNELS {
            return Err(Error::DimensionMismatch {
                context: "ModelParams w_e",
                expected: (BASE_CHANNELS, w_e.cols()),
                got: (w_e.rows(), w_e.cols()),
            });
        }
        if w_f.rows() != BASE_CHANNELS {
            return Err(Error::DimensionMismatch {
                context: "ModelParams w_f",
                expected: (BASE_CHANNELS, w_f.cols()),
                got: (w_f.rows(), w_f.cols()),
            });
        }
        if w_h.len() != w_f.cols() + 1 {
            return Err(Error::DimensionMismatch {
                context: "ModelParams w_h",
                expected: (w_f.cols() + 1, 1),
                got: (w_h.len(), 1),
            });
        }
        Ok(ModelParams {
            stride,
            w_e,
            w_f,
            w_h,
        })
    }

    /// Fresh parameters: `w_e` and `w_f` uniform on
    /// `[-1/sqrt(BASE_CHANNELS), 1/sqrt(BASE_CHANNELS)]` drawn row-major,
    /// `w_e` first, then `w_f`; the head starts at zero so an untrained
    /// model predicts 0.5 everywhere.
    pub fn init<R: Rng>(stride: usize, embed_dim: usize, query_dim: usize, rng: &mut R) -> Result<Self> {
        if embed_dim == 0 || query_dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dimensions must be at least 1".into(),
            ));
        }
        let bound = 1.0 / (BASE_CHANNELS as f64).sqrt();
        let draw = |rng: &mut R, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        let w_e = Matrix::from_vec(
            BASE_CHANNELS,
            embed_dim,
            draw(rng, BASE_CHANNELS * embed_dim),
        )?;
        let w_f = Matrix::from_vec(
            BASE_CHANNELS,
            query_dim,
            draw(rng, BASE_CHANNELS * query_dim),
        )?;
        ModelParams::new(stride, w_e, w_f, vec![0.0; query_dim + 1])
    }

    pub fn embed_dim(&self) -> usize {
        self.w_e.cols()
    }

    pub fn query_dim(&self) -> usize {
        self.w_f.cols()
    }
}

/// Reflects an out-of-range index back into `0..n` (mirror with edge
/// repeat), for padding images whose sides do not divide by the stride.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Intensity plane padded by reflection to `ph x pw`.
fn padded_plane(img: &Image, plane: impl Fn(usize, usize) -> f64, ph: usize, pw: usize) -> Vec<f64> {
    let mut out = vec![0.0; ph * pw];
    for y in 0..ph {
        let sy = reflect(y as isize, img.height);
        for x in 0..pw {
            let sx = reflect(x as isize, img.width);
            out[y * pw + x] = plane(sy, sx);
        }
    }
    out
}

/// Reduces an image to its `BASE_CHANNELS`-deep feature grid.
///
/// The grid is `ceil(h/stride) x ceil(w/stride)`; the image is padded by
/// reflection when the stride does not divide a side. Gradients are central
/// differences of the intensity plane with clamped neighbours, block
/// statistics are plain means and a two-pass standard deviation, all
/// accumulated in a fixed scan order.
pub fn extract_base_features(img: &Image, stride: usize) -> FeatureMap {
    assert!(stride >= 1, "stride must be at least 1");
    let gh = img.height.div_ceil(stride);
    let gw = img.width.div_ceil(stride);
    let (ph, pw) = (gh * stride, gw * stride);

    let intensity = if img.channels == 1 {
        padded_plane(img, |y, x| img.get(y, x, 0), ph, pw)
    } else {
        padded_plane(
            img,
            |y, x| (img.get(y, x, 0) + img.get(y, x, 1) + img.get(y, x, 2)) / 3.0,
            ph,
            pw,
        )
    };
    let (opp_rg, opp_by) = if img.channels == 3 {
        (
            Some(padded_plane(
                img,
                |y, x| img.get(y, x, 0) - img.get(y, x, 1),
                ph,
                pw,
            )),
            Some(padded_plane(
                img,
                |y, x| img.get(y, x, 2) - (img.get(y, x, 0) + img.get(y, x, 1)) / 2.0,
                ph,
                pw,
            )),
        )
    } else {
        (None, None)
    };

    let area = (stride * stride) as f64;
    let mut out = FeatureMap::zeros(gh, gw, BASE_CHANNELS);
    for by in 0..gh {
        for bx in 0..gw {
            let mut sum_i = 0.0;
            let mut sum_gx = 0.0;
            let mut sum_gy = 0.0;
            let mut sum_rg = 0.0;
            let mut sum_by = 0.0;
            for dy in 0..stride {
                let y = by * stride + dy;
                for dx in 0..stride {
                    let x = bx * stride + dx;
                    sum_i += intensity[y * pw + x];
                    let xl = x.saturating_sub(1);
                    let xr = (x + 1).min(pw - 1);
                    let yu = y.saturating_sub(1);
                    let yd = (y + 1).min(ph - 1);
                    sum_gx += (intensity[y * pw + xr] - intensity[y * pw + xl]) / 2.0;
                    sum_gy += (intensity[yd * pw + x] - intensity[yu * pw + x]) / 2.0;
                    if let (Some(rg), Some(by_)) = (&opp_rg, &opp_by) {
                        sum_rg += rg[y * pw + x];
                        sum_by += by_[y * pw + x];
                    }
                }
            }
            let mean = sum_i / area;
            let mut var = 0.0;
            for dy in 0..stride {
                let y = by * stride + dy;
                for dx in 0..stride {
                    let x = bx * stride + dx;
                    let d = intensity[y * pw + x] - mean;
                    var += d * d;
                }
            }
            out.set(by, bx, 0, mean);
            out.set(by, bx, 1, sum_gx / area);
            out.set(by, bx, 2, sum_gy / area);
            out.set(by, bx, 3, (var / area).sqrt());
            out.set(by, bx, 4, sum_rg / area);
            out.set(by, bx, 5, sum_by / area);
        }
    }
    out
}

/// Reduces an image-resolution mask to the feature grid.
///
/// A block becomes foreground when at least half of its pixels are. If that
/// leaves no foreground at all while the input mask had some, the rule
/// falls back to marking every block that touches any foreground pixel, so
/// a non-empty mask never silently becomes empty.
pub fn downsample_mask(mask: &Mask, stride: usize) -> Result<Mask> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if stride == 1 {
        return Ok(mask.clone());
    }
    let gh = mask.height().div_ceil(stride);
    let gw = mask.width().div_ceil(stride);
    let (ph, pw) = (gh * stride, gw * stride);
    let mut counts = vec![0usize; gh * gw];
    for y in 0..ph {
        let sy = reflect(y as isize, mask.height());
        for x in 0..pw {
            let sx = reflect(x as isize, mask.width());
            counts[(y / stride) * gw + (x / stride)] += mask.get(sy, sx) as usize;
        }
    }
    let area = stride * stride;
    let majority: Vec<u8> = counts
        .iter()
        .map(|&c| if 2 * c >= area { 1 } else { 0 })
        .collect();
    let data = if majority.iter().all(|&v| v == 0) && mask.foreground_count() > 0 {
        counts.iter().map(|&c| if c > 0 { 1 } else { 0 }).collect()
    } else {
        majority
    };
    Mask::from_vec(gh, gw, data)
}

/// Applies a `channels x dim` weight matrix to every grid location. No bias,
/// so a zeroed location embeds to the zero vector.
pub fn embed(f: &FeatureMap, w: &Matrix) -> Result<FeatureMap> {
    if w.rows() != f.channels() {
        return Err(Error::DimensionMismatch {
            context: "embed",
            expected: (f.channels(), w.cols()),
            got: (w.rows(), w.cols()),
        });
    }
    let dim = w.cols();
    let mut out = FeatureMap::zeros(f.height(), f.width(), dim);
    for i in 0..f.locations() {
        let row = f.at_index(i);
        for d in 0..dim {
            let mut acc = 0.0;
            for (c, &v) in row.iter().enumerate() {
                acc += v * w.get(c, d);
            }
            out.data_mut()[i * dim + d] = acc;
        }
    }
    Ok(out)
}

/// Projects query features into the space read by the prediction head.
/// Same per-location linear map as [`embed`], kept separate because the two
/// weight tensors play different roles.
pub fn project_query(f: &FeatureMap, w_f: &Matrix) -> Result<FeatureMap> {
    embed(f, w_f)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Head logits and probabilities on the feature grid. `w_h` holds one
/// weight per channel and the bias in the final slot.
pub(crate) fn head_grid(f: &FeatureMap, w_h: &[f64]) -> Result<(RealMap, RealMap)> {
    if w_h.len() != f.channels() + 1 {
        return Err(Error::DimensionMismatch {
            context: "head_grid",
            expected: (f.channels() + 1, 1),
            got: (w_h.len(), 1),
        });
    }
    let bias = w_h[f.channels()];
    let mut z = RealMap::zeros(f.height(), f.width());
    let mut p = RealMap::zeros(f.height(), f.width());
    for i in 0..f.locations() {
        let row = f.at_index(i);
        let mut acc = 0.0;
        for (c, &v) in row.iter().enumerate() {
            acc += v * w_h[c];
        }
        acc += bias;
        z.data_mut()[i] = acc;
        p.data_mut()[i] = sigmoid(acc);
    }
    Ok((z, p))
}

/// Per-location logistic prediction upsampled to `out_h x out_w`.
pub fn predict_head(
    f: &FeatureMap,
    w_h: &[f64],
    out_h: usize,
    out_w: usize,
) -> Result<ProbabilityMap> {
    let (_, p) = head_grid(f, w_h)?;
    Ok(bilinear_upsample(&p, out_h, out_w))
}

/// Source interpolation stencil for axis position `i` of `out` samples over
/// `inn` inputs, corners aligned.
fn lerp_axis(i: usize, out: usize, inn: usize) -> (usize, usize, f64) {
    if out <= 1 || inn <= 1 {
        return (0, 0, 0.0);
    }
    let src = i as f64 * ((inn - 1) as f64 / (out - 1) as f64);
    let lo = (src.floor() as usize).min(inn - 1);
    let hi = (lo + 1).min(inn - 1);
    (lo, hi, src - lo as f64)
}

/// Bilinear resampling with aligned corners. Equal sizes pass values
/// through bitwise; output extremes never exceed the input extremes.
pub fn bilinear_upsample(m: &RealMap, out_h: usize, out_w: usize) -> RealMap {
    assert!(out_h >= 1 && out_w >= 1, "output dimensions must be nonzero");
    let mut out = RealMap::zeros(out_h, out_w);
    for y in 0..out_h {
        let (y0, y1, ty) = lerp_axis(y, out_h, m.height());
        for x in 0..out_w {
            let (x0, x1, tx) = lerp_axis(x, out_w, m.width());
            let top = m.get(y0, x0) * (1.0 - tx) + m.get(y0, x1) * tx;
            let bot = m.get(y1, x0) * (1.0 - tx) + m.get(y1, x1) * tx;
            out.set(y, x, top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Adjoint of [`bilinear_upsample`]: scatters an output-sized gradient back
/// onto the `in_h x in_w` grid with the same stencil weights.
pub(crate) fn bilinear_upsample_adjoint(grad_out: &RealMap, in_h: usize, in_w: usize) -> RealMap {
    let mut out = RealMap::zeros(in_h, in_w);
    for y in 0..grad_out.height() {
        let (y0, y1, ty) = lerp_axis(y, grad_out.height(), in_h);
        for x in 0..grad_out.width() {
            let (x0, x1, tx) = lerp_axis(x, grad_out.width(), in_w);
            let g = grad_out.get(y, x);
            out.set(y0, x0, out.get(y0, x0) + g * (1.0 - tx) * (1.0 - ty));
            out.set(y0, x1, out.get(y0, x1) + g * tx * (1.0 - ty));
            out.set(y1, x0, out.get(y1, x0) + g * (1.0 - tx) * ty);
            out.set(y1, x1, out.get(y1, x1) + g * tx * ty);
        }
    }
    out
}
