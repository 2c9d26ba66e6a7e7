//! Relationship matrices and their linear transformation into attention.
//!
//! The pipeline relates every local embedding of a query image to every
//! foreground embedding of a support image through cosine similarity,
//! collecting the results in a relationship matrix `R` (rows index query
//! locations, columns index support locations, both flattened row-major as
//! `i = y * width + x`). Multiplying `R` by the right inverse of the
//! flattened support mask turns each query row into a single attention
//! value: the mean similarity to the support foreground. If `R` were the
//! ideal outer product of the two masks, this recovers the query mask
//! exactly, which is what the tests pin down.

use crate::error::{Error, Result};
use crate::features::{self, ModelParams};
use crate::linalg::{self, Matrix};
use crate::train::Episode;

/// Binary segmentation mask. `data[y * width + x]` is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    /// Validates that every value is 0 or 1 and dimensions are nonzero.
    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dimensions must be nonzero, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                context: "Mask::from_vec",
                expected: (height, width),
                got: (data.len(), 1),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "mask values must be 0 or 1, found {bad}"
            )));
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        assert!(v <= 1, "mask values must be 0 or 1");
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Flattened row-major copy as reals, for mask algebra.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Complement mask (foreground and background swapped).
    pub fn inverted(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }
}

/// Dense feature grid, channel-last: `data[(y * width + x) * channels + c]`.
///
/// Also carries per-location embeddings, in which case `channels` is the
/// embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Per-location embeddings are feature maps whose channel axis is the
/// embedding dimension.
pub type Embedding = FeatureMap;

impl FeatureMap {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map dimensions must be nonzero, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                context: "FeatureMap::from_vec",
                expected: (height * width, channels),
                got: (data.len(), 1),
            });
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
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

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Channel vector at one grid location.
    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    /// Channel vector at a flattened location index.
    pub fn at_index(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Single-channel real-valued grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Attention over the query feature grid, in `[0, 1]` once normalized.
pub type AttentionMap = RealMap;

/// Per-pixel foreground probabilities in `(0, 1)`.
pub type ProbabilityMap = RealMap;

impl RealMap {
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "map dimensions must be nonzero, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                context: "RealMap::from_vec",
                expected: (height, width),
                got: (data.len(), 1),
            });
        }
        Ok(RealMap {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        RealMap {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Strictly-greater thresholding. Ties go to background, so an
    /// untrained head that outputs 0.5 everywhere predicts no foreground.
    pub fn binarize(&self, threshold: f64) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| if v > threshold { 1 } else { 0 })
                .collect(),
        }
    }
}

/// Raw attention next to its min-max normalized form. The raw map is kept
/// because the normalization is not invertible and tests exercise both.
#[derive(Debug, Clone)]
pub struct Attention {
    pub raw: AttentionMap,
    pub normalized: AttentionMap,
}

/// Zeroes every channel outside the mask foreground.
pub fn mask_features(f: &FeatureMap, g: &Mask) -> Result<FeatureMap> {
    if f.height != g.height || f.width != g.width {
        return Err(Error::DimensionMismatch {
            context: "mask_features",
            expected: (f.height, f.width),
            got: (g.height, g.width),
        });
    }
    let mut out = f.clone();
    for y in 0..f.height {
        for x in 0..f.width {
            if g.get(y, x) == 0 {
                let base = (y * f.width + x) * f.channels;
                for c in 0..f.channels {
                    out.data[base + c] = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// Pairwise cosine similarities between query and support embeddings.
///
/// Row `i` is query location `i`, column `j` is support location `j`.
/// Locations with near-zero embedding norm (masked-out support background)
/// contribute zero similarity.
pub fn relationship_matrix(e_q: &Embedding, e_s: &Embedding) -> Result<Matrix> {
    if e_q.channels != e_s.channels {
        return Err(Error::DimensionMismatch {
            context: "relationship_matrix",
            expected: (e_q.channels, e_q.channels),
            got: (e_s.channels, e_s.channels),
        });
    }
    let n_q = e_q.locations();
    let n_s = e_s.locations();
    let mut r = Matrix::zeros(n_q, n_s);
    for i in 0..n_q {
        let qi = e_q.at_index(i);
        for j in 0..n_s {
            r.set(i, j, linalg::cosine_similarity(qi, e_s.at_index(j))?);
        }
    }
    Ok(r)
}

/// Ideal relationship matrix: the outer product of the flattened query and
/// support masks. Entry `(i, j)` is 1 exactly when both locations are
/// foreground.
pub fn truth_relationship(g_q: &Mask, g_s: &Mask) -> Matrix {
    let q = g_q.to_f64();
    let s = g_s.to_f64();
    let mut out = Matrix::zeros(q.len(), s.len());
    for (i, &qi) in q.iter().enumerate() {
        for (j, &sj) in s.iter().enumerate() {
            out.set(i, j, qi * sj);
        }
    }
    out
}

/// Collapses a relationship matrix to an attention map over the query grid.
///
/// Multiplies `R` by the right inverse of the flattened support mask, then
/// min-max normalizes. `query_h * query_w` must equal the row count of `r`.
/// An all-background support mask has no right inverse and is rejected.
pub fn attention_from_relationship(
    r: &Matrix,
    g_s: &Mask,
    query_h: usize,
    query_w: usize,
) -> Result<Attention> {
    let n_s = g_s.height * g_s.width;
    if r.cols() != n_s {
        return Err(Error::DimensionMismatch {
            context: "attention_from_relationship",
            expected: (r.rows(), n_s),
            got: (r.rows(), r.cols()),
        });
    }
    if r.rows() != query_h * query_w {
        return Err(Error::DimensionMismatch {
            context: "attention_from_relationship",
            expected: (query_h * query_w, n_s),
            got: (r.rows(), r.cols()),
        });
    }
    let ginv = linalg::right_inverse_row(&g_s.to_f64())?;
    let raw_col = r.matmul(&ginv)?;
    let norm_col = linalg::minmax_normalize(&raw_col);
    Ok(Attention {
        raw: RealMap::from_vec(query_h, query_w, raw_col.data().to_vec())?,
        normalized: RealMap::from_vec(query_h, query_w, norm_col.data().to_vec())?,
    })
}

/// Scales every channel of the query features by the attention value at the
/// same location.
pub fn filter_query_features(f: &FeatureMap, a: &AttentionMap) -> Result<FeatureMap> {
    if f.height != a.height || f.width != a.width {
        return Err(Error::DimensionMismatch {
            context: "filter_query_features",
            expected: (f.height, f.width),
            got: (a.height, a.width),
        });
    }
    let mut out = f.clone();
    for y in 0..f.height {
        for x in 0..f.width {
            let w = a.get(y, x);
            let base = (y * f.width + x) * f.channels;
            for c in 0..f.channels {
                out.data[base + c] *= w;
            }
        }
    }
    Ok(out)
}

/// Pixelwise mean of k attention maps.
///
/// Each pixel reduces its k values sorted ascending, offset from the
/// smallest: `v[0] + sum(v[i] - v[0]) / k`. Sorting makes the result
/// bitwise invariant under reordering of the input list, and the offset
/// form makes the mean of k identical maps return the map unchanged, which
/// the k-shot degenerate case relies on.
pub fn average_attention(maps: &[AttentionMap]) -> Result<AttentionMap> {
    let first = maps.first().ok_or(Error::EmptyList("attention map list"))?;
    for m in maps.iter().skip(1) {
        if m.height != first.height || m.width != first.width {
            return Err(Error::DimensionMismatch {
                context: "average_attention",
                expected: (first.height, first.width),
                got: (m.height, m.width),
            });
        }
    }
    let k = maps.len() as f64;
    let mut out = RealMap::zeros(first.height, first.width);
    let mut vals = vec![0.0; maps.len()];
    for i in 0..first.data.len() {
        for (slot, m) in vals.iter_mut().zip(maps) {
            *slot = m.data[i];
        }
        vals.sort_by(f64::total_cmp);
        let base = vals[0];
        let mut acc = 0.0;
        for &v in &vals {
            acc += v - base;
        }
        out.data[i] = base + acc / k;
    }
    Ok(out)
}

/// Everything the forward pass produces for one episode, kept around so the
/// loss gradients can be accumulated without recomputation.
pub(crate) struct ShotForward {
    /// Support mask reduced to the feature grid.
    pub g_s: Mask,
    /// Support base features with the background zeroed before embedding.
    pub f_s_masked: FeatureMap,
    /// Embeddings of the masked support features.
    pub e_s: Embedding,
    /// Query-by-support cosine relationship matrix.
    pub r: Matrix,
    pub a_raw: AttentionMap,
    pub a_norm: AttentionMap,
}

pub(crate) struct EpisodeForward {
    pub f_q: FeatureMap,
    pub e_q: Embedding,
    /// Query features projected into the prediction space.
    pub fhat_q: FeatureMap,
    pub shots: Vec<ShotForward>,
    pub a_avg: AttentionMap,
    /// `fhat_q` scaled pointwise by the averaged attention.
    pub filtered_q: FeatureMap,
    /// Sigmoid of the head logits on the feature grid.
    pub p_grid: RealMap,
    /// Prediction upsampled to the query image resolution.
    pub prob: ProbabilityMap,
}

pub(crate) fn forward_episode(ep: &Episode, params: &ModelParams) -> Result<EpisodeForward> {
    if ep.support.is_empty() {
        return Err(Error::EmptyList("episode support set"));
    }
    let stride = params.stride;
    let f_q = features::extract_base_features(&ep.query, stride);
    let e_q = features::embed(&f_q, &params.w_e)?;
    let fhat_q = features::project_query(&f_q, &params.w_f)?;
    let (gh, gw) = (f_q.height(), f_q.width());

    let mut shots = Vec::with_capacity(ep.support.len());
    for (img, mask) in &ep.support {
        let f_s = features::extract_base_features(img, stride);
        let g_s = features::downsample_mask(mask, stride)?;
        if g_s.foreground_count() == 0 {
            return Err(Error::EmptyMask);
        }
        let f_s_masked = mask_features(&f_s, &g_s)?;
        let e_s = features::embed(&f_s_masked, &params.w_e)?;
        let r = relationship_matrix(&e_q, &e_s)?;
        let att = attention_from_relationship(&r, &g_s, gh, gw)?;
        shots.push(ShotForward {
            g_s,
            f_s_masked,
            e_s,
            r,
            a_raw: att.raw,
            a_norm: att.normalized,
        });
    }

    let norm_maps: Vec<AttentionMap> = shots.iter().map(|s| s.a_norm.clone()).collect();
    let a_avg = average_attention(&norm_maps)?;
    let filtered_q = filter_query_features(&fhat_q, &a_avg)?;
    let (_z_grid, p_grid) = features::head_grid(&filtered_q, &params.w_h)?;
    let prob = features::bilinear_upsample(&p_grid, ep.query.height(), ep.query.width());

    Ok(EpisodeForward {
        f_q,
        e_q,
        fhat_q,
        shots,
        a_avg,
        filtered_q,
        p_grid,
        prob,
    })
}

/// Runs the full pipeline on one episode: features, per-shot relationship
/// and attention, k-shot averaging, query filtering, and the prediction
/// head. Returns the averaged attention (feature grid) and the probability
/// map (query image resolution).
pub fn transform_episode(
    ep: &Episode,
    params: &ModelParams,
) -> Result<(AttentionMap, ProbabilityMap)> {
    let fwd = forward_episode(ep, params)?;
    Ok((fwd.a_avg, fwd.prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fmap(h: usize, w: usize, c: usize, vals: &[f64]) -> FeatureMap {
        FeatureMap::from_vec(h, w, c, vals.to_vec()).unwrap()
    }

    #[test]
    fn mask_rejects_nonbinary() {
        assert!(matches!(
            Mask::from_vec(1, 2, vec![0, 3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mask_features_zeroes_background() {
        let f = fmap(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = Mask::from_vec(1, 2, vec![1, 0]).unwrap();
        let out = mask_features(&f, &g).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn mask_features_identity_on_full_mask() {
        let f = fmap(2, 2, 3, &(0..12).map(|i| i as f64).collect::<Vec<_>>());
        let g = Mask::from_vec(2, 2, vec![1, 1, 1, 1]).unwrap();
        assert_eq!(mask_features(&f, &g).unwrap(), f);
    }

    #[test]
    fn relationship_frozen_two_locations() {
        let e_q = fmap(1, 2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let e_s = fmap(1, 2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = relationship_matrix(&e_q, &e_s).unwrap();
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert!((r.get(0, 0) - 0.0).abs() < 1e-12);
        assert!((r.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((r.get(1, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((r.get(1, 1) - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn truth_relationship_outer_product() {
        let g_q = Mask::from_vec(2, 1, vec![1, 0]).unwrap();
        let g_s = Mask::from_vec(1, 2, vec![1, 1]).unwrap();
        let t = truth_relationship(&g_q, &g_s);
        assert_eq!(t.data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn attention_is_row_mean_over_support_foreground() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = Matrix::from_vec(4, 4, vals.clone()).unwrap();
        let g_s = Mask::from_vec(2, 2, vec![1, 0, 1, 0]).unwrap();
        let att = attention_from_relationship(&r, &g_s, 2, 2).unwrap();
        for i in 0..4 {
            let want = (vals[i * 4] + vals[i * 4 + 2]) / 2.0;
            assert!((att.raw.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rejects_empty_support_mask() {
        let r = Matrix::zeros(4, 4);
        let g_s = Mask::zeros(2, 2);
        assert!(matches!(
            attention_from_relationship(&r, &g_s, 2, 2),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn exact_recovery_from_ideal_relationship() {
        // R built from the mask outer product must reproduce the query mask.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (h, w) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let (hs, ws) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let g_q = random_mask(&mut rng, h, w, false);
            let g_s = random_mask(&mut rng, hs, ws, true);
            let r = truth_relationship(&g_q, &g_s);
            let att = attention_from_relationship(&r, &g_s, h, w).unwrap();
            for (a, b) in att.raw.data().iter().zip(g_q.to_f64()) {
                assert!((a - b).abs() < 1e-6, "raw attention {a} vs mask {b}");
            }
        }
    }

    #[test]
    fn filter_scales_all_channels() {
        let f = fmap(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let a = RealMap::from_vec(1, 2, vec![0.5, 0.0]).unwrap();
        let out = filter_query_features(&f, &a).unwrap();
        assert_eq!(out.data(), &[0.5, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn average_of_two_maps() {
        let a = RealMap::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let b = RealMap::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let avg = average_attention(&[a, b]).unwrap();
        assert_eq!(avg.data(), &[0.5, 0.5]);
    }

    #[test]
    fn average_of_identical_maps_is_bitwise_identity() {
        let m = RealMap::from_vec(2, 2, vec![0.12345, 0.99, 0.0, 1.0 / 3.0]).unwrap();
        let avg = average_attention(&[m.clone(), m.clone(), m.clone(), m.clone(), m.clone()])
            .unwrap();
        assert_eq!(avg.data(), m.data());
    }

    #[test]
    fn average_rejects_empty_list() {
        assert!(matches!(
            average_attention(&[]),
            Err(Error::EmptyList(_))
        ));
    }

    fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, require_fg: bool) -> Mask {
        loop {
            let data: Vec<u8> = (0..h * w).map(|_| rng.gen_range(0..=1)).collect();
            let m = Mask::from_vec(h, w, data).unwrap();
            if !require_fg || m.foreground_count() > 0 {
                return m;
            }
        }
    }

    proptest! {
        /// The relationship-to-attention map is linear in R: attention of
        /// (R1 + R2) equals the sum of the attentions, up to accumulation
        /// error.
        #[test]
        fn attention_linear_in_relationship(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4usize;
            let a_vals: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b_vals: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sum_vals: Vec<f64> = a_vals.iter().zip(&b_vals).map(|(a, b)| a + b).collect();
            let g_s = random_mask(&mut rng, 2, 2, true);
            let ra = Matrix::from_vec(n, n, a_vals).unwrap();
            let rb = Matrix::from_vec(n, n, b_vals).unwrap();
            let rs = Matrix::from_vec(n, n, sum_vals).unwrap();
            let aa = attention_from_relationship(&ra, &g_s, 2, 2).unwrap().raw;
            let ab = attention_from_relationship(&rb, &g_s, 2, 2).unwrap().raw;
            let asum = attention_from_relationship(&rs, &g_s, 2, 2).unwrap().raw;
            for i in 0..n {
                let lhs = asum.data()[i];
                let rhs = aa.data()[i] + ab.data()[i];
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }

        /// Permuting support locations together with the mask permutes
        /// nothing observable: raw attention is equivariant.
        #[test]
        fn attention_permutation_equivariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_q = 4usize;
            let n_s = 6usize;
            let vals: Vec<f64> = (0..n_q * n_s).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = Matrix::from_vec(n_q, n_s, vals).unwrap();
            let g = random_mask(&mut rng, 1, n_s, true);

            let mut perm: Vec<usize> = (0..n_s).collect();
            for i in (1..n_s).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let mut r_p = Matrix::zeros(n_q, n_s);
            let mut g_p = Mask::zeros(1, n_s);
            for (new, &old) in perm.iter().enumerate() {
                for i in 0..n_q {
                    r_p.set(i, new, r.get(i, old));
                }
                g_p.set(0, new, g.get(0, old));
            }

            let base = attention_from_relationship(&r, &g, 2, 2).unwrap().raw;
            let permuted = attention_from_relationship(&r_p, &g_p, 2, 2).unwrap().raw;
            for i in 0..n_q {
                prop_assert!((base.data()[i] - permuted.data()[i]).abs() <= 1e-9);
            }
        }

        /// Reordering the shot list does not change the averaged map at all.
        #[test]
        fn average_reorder_invariant_bitwise(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(2..=5);
            let maps: Vec<RealMap> = (0..k)
                .map(|_| {
                    RealMap::from_vec(
                        2,
                        3,
                        (0..6).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            let mut shuffled = maps.clone();
            for i in (1..k).rev() {
                let j = rng.gen_range(0..=i);
                shuffled.swap(i, j);
            }
            let a = average_attention(&maps).unwrap();
            let b = average_attention(&shuffled).unwrap();
            prop_assert_eq!(a.data(), b.data());
        }

        /// The averaged map stays inside the per-pixel [min, max] envelope.
        #[test]
        fn average_within_bounds(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..=5);
            let maps: Vec<RealMap> = (0..k)
                .map(|_| {
                    RealMap::from_vec(
                        2,
                        2,
                        (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            let avg = average_attention(&maps).unwrap();
            for i in 0..4 {
                let lo = maps.iter().map(|m| m.data()[i]).fold(f64::INFINITY, f64::min);
                let hi = maps.iter().map(|m| m.data()[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(avg.data()[i] >= lo - 1e-15 && avg.data()[i] <= hi + 1e-15);
            }
        }
    }
}
