//! Training objective and its analytic gradients.
//!
//! Three pieces, summed over pixels (not averaged; the learning rate
//! absorbs the scale):
//!
//! * mask loss: cross-entropy between the upsampled prediction and the
//!   query ground truth,
//! * attention loss: cross-entropy between the upsampled attention map and
//!   the same ground truth,
//! * relationship loss: squared distance between the cosine relationship
//!   matrix and the outer product of the two masks, averaged over shots so
//!   duplicating a support pair changes nothing.
//!
//! The backward pass is written by hand and checked against central
//! differences. Two subgradient choices matter and are pinned by tests:
//! probabilities are clamped to `[eps, 1-eps]` with zero gradient outside,
//! and the min/max normalization backpropagates with the argmin/argmax
//! locations held fixed (valid almost everywhere).

use crate::error::{Error, Result};
use crate::features::{self, ModelParams, BASE_CHANNELS};
use crate::linalg::{Matrix, EPS_FLAT, EPS_NORM};
use crate::train::Episode;
use crate::transform::{self, AttentionMap, FeatureMap, Mask, ProbabilityMap, RealMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probabilities are clamped to `[EPS_P, 1 - EPS_P]` inside the
/// cross-entropy terms so a hard 0 or 1 cannot produce an infinite loss.
pub const EPS_P: f64 = 1e-7;

/// Scale factors for the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_m: f64,
    pub lambda_a: f64,
    pub lambda_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_m: 1.0,
            lambda_a: 1.0,
            lambda_r: 1.0,
        }
    }
}

/// Gradients with the same shapes as the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub w_e: Matrix,
    pub w_f: Matrix,
    pub w_h: Vec<f64>,
}

/// Loss values for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub loss_m: f64,
    pub loss_a: f64,
    pub loss_r: f64,
    pub total: f64,
}

fn clamp_p(v: f64) -> f64 {
    v.clamp(EPS_P, 1.0 - EPS_P)
}

/// Summed binary cross-entropy over aligned pixel slices.
fn bce_sum(probs: &[f64], mask: &[u8]) -> f64 {
    let mut acc = 0.0;
    for (&p, &y) in probs.iter().zip(mask) {
        let c = clamp_p(p);
        acc -= if y == 1 { c.ln() } else { (1.0 - c).ln() };
    }
    acc
}

/// Derivative of the clamped cross-entropy w.r.t. the probability; zero in
/// the clamped region.
fn bce_grad(p: f64, y: u8) -> f64 {
    if p <= EPS_P || p >= 1.0 - EPS_P {
        return 0.0;
    }
    (p - y as f64) / (p * (1.0 - p))
}

/// Pixel-summed cross-entropy between a probability map and a mask of the
/// same size.
pub fn loss_m(m: &ProbabilityMap, y: &Mask) -> Result<f64> {
    if m.height() != y.height() || m.width() != y.width() {
        return Err(Error::DimensionMismatch {
            context: "loss_m",
            expected: (y.height(), y.width()),
            got: (m.height(), m.width()),
        });
    }
    Ok(bce_sum(m.data(), y.data()))
}

/// Squared Frobenius distance between a relationship matrix and its target.
pub fn loss_r(r: &Matrix, r_truth: &Matrix) -> Result<f64> {
    if r.rows() != r_truth.rows() || r.cols() != r_truth.cols() {
        return Err(Error::DimensionMismatch {
            context: "loss_r",
            expected: (r_truth.rows(), r_truth.cols()),
            got: (r.rows(), r.cols()),
        });
    }
    let mut acc = 0.0;
    for (a, b) in r.data().iter().zip(r_truth.data()) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc)
}

/// Cross-entropy between the attention map (upsampled to the mask's
/// resolution) and the mask. The attention is expected to be normalized.
pub fn loss_a(a: &AttentionMap, y: &Mask) -> Result<f64> {
    let up = features::bilinear_upsample(a, y.height(), y.width());
    if up.height() != y.height() || up.width() != y.width() {
        return Err(Error::DimensionMismatch {
            context: "loss_a",
            expected: (y.height(), y.width()),
            got: (up.height(), up.width()),
        });
    }
    Ok(bce_sum(up.data(), y.data()))
}

/// Weighted sum of the three terms.
pub fn total_loss(l_m: f64, l_a: f64, l_r: f64, w: &LossWeights) -> f64 {
    w.lambda_m * l_m + w.lambda_a * l_a + w.lambda_r * l_r
}

/// Forward losses for one episode. Requires the episode's query mask.
pub fn episode_losses(ep: &Episode, params: &ModelParams, w: &LossWeights) -> Result<LossBreakdown> {
    let y_img = ep
        .query_mask
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("episode has no query mask".into()))?;
    let fwd = transform::forward_episode(ep, params)?;
    let g_q = features::downsample_mask(y_img, params.stride)?;
    let lm = bce_sum(fwd.prob.data(), y_img.data());
    let ma = features::bilinear_upsample(&fwd.a_avg, y_img.height(), y_img.width());
    let la = bce_sum(ma.data(), y_img.data());
    let kf = fwd.shots.len() as f64;
    let mut lr = 0.0;
    for shot in &fwd.shots {
        let rt = transform::truth_relationship(&g_q, &shot.g_s);
        lr += loss_r(&shot.r, &rt)?;
    }
    lr /= kf;
    Ok(LossBreakdown {
        loss_m: lm,
        loss_a: la,
        loss_r: lr,
        total: total_loss(lm, la, lr, w),
    })
}

fn row_norms(e: &FeatureMap) -> Vec<f64> {
    (0..e.locations())
        .map(|i| {
            let mut s = 0.0;
            for &v in e.at_index(i) {
                s += v * v;
            }
            s.sqrt()
        })
        .collect()
}

/// Total loss and its exact gradients for one episode.
///
/// Backpropagates through the head, the attention gating of the query
/// features, the shot mean, the min/max normalization (argmin/argmax
/// pinned), the right-inverse linear map, cosine similarity, and the two
/// per-location embeddings. The base features are fixed, so gradients stop
/// at the three weight tensors.
pub fn grad_total_loss(
    ep: &Episode,
    params: &ModelParams,
    w: &LossWeights,
) -> Result<(LossBreakdown, GradientSet)> {
    let y_img = ep
        .query_mask
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("episode has no query mask".into()))?;
    let fwd = transform::forward_episode(ep, params)?;
    let g_q = features::downsample_mask(y_img, params.stride)?;

    let (gh, gw) = (fwd.a_avg.height(), fwd.a_avg.width());
    let n_q = gh * gw;
    let de = params.embed_dim();
    let df = params.query_dim();
    let kf = fwd.shots.len() as f64;

    // Forward loss values (reusing the same intermediates as the gradient).
    let lm = bce_sum(fwd.prob.data(), y_img.data());
    let ma = features::bilinear_upsample(&fwd.a_avg, y_img.height(), y_img.width());
    let la = bce_sum(ma.data(), y_img.data());
    let mut truths = Vec::with_capacity(fwd.shots.len());
    let mut lr = 0.0;
    for shot in &fwd.shots {
        let rt = transform::truth_relationship(&g_q, &shot.g_s);
        lr += loss_r(&shot.r, &rt)?;
        truths.push(rt);
    }
    lr /= kf;
    let breakdown = LossBreakdown {
        loss_m: lm,
        loss_a: la,
        loss_r: lr,
        total: total_loss(lm, la, lr, w),
    };

    let mut g_we = Matrix::zeros(BASE_CHANNELS, de);
    let mut g_wf = Matrix::zeros(BASE_CHANNELS, df);
    let mut g_wh = vec![0.0; df + 1];

    // Mask loss: image-resolution BCE, back through the upsampling and the
    // sigmoid to the grid logits.
    let mut d_prob = RealMap::zeros(y_img.height(), y_img.width());
    for i in 0..d_prob.data().len() {
        let g = w.lambda_m * bce_grad(fwd.prob.data()[i], y_img.data()[i]);
        d_prob.data_mut()[i] = g;
    }
    let d_pgrid = features::bilinear_upsample_adjoint(&d_prob, gh, gw);
    let mut d_z = vec![0.0; n_q];
    for (i, dz) in d_z.iter_mut().enumerate() {
        let p = fwd.p_grid.data()[i];
        *dz = d_pgrid.data()[i] * p * (1.0 - p);
    }

    // Head weights and bias.
    for (c, g) in g_wh.iter_mut().take(df).enumerate() {
        let mut acc = 0.0;
        for (i, &dz) in d_z.iter().enumerate() {
            acc += dz * fwd.filtered_q.at_index(i)[c];
        }
        *g = acc;
    }
    g_wh[df] = d_z.iter().sum();

    // Through the attention gate: filtered = fhat * a_avg, product rule on
    // both factors.
    let mut d_a_avg = vec![0.0; n_q];
    for (i, d_avg) in d_a_avg.iter_mut().enumerate() {
        let fh = fwd.fhat_q.at_index(i);
        let dz = d_z[i];
        let mut da = 0.0;
        for (&wh, &f) in params.w_h.iter().take(df).zip(fh) {
            da += dz * wh * f;
        }
        *d_avg = da;
    }
    // w_f gradient: d fhat[i][d] = d_z[i] * w_h[d] * a_avg[i].
    for c0 in 0..BASE_CHANNELS {
        for d in 0..df {
            let mut acc = 0.0;
            for (i, &dz) in d_z.iter().enumerate() {
                acc += fwd.f_q.at_index(i)[c0] * dz * params.w_h[d] * fwd.a_avg.data()[i];
            }
            g_wf.set(c0, d, acc);
        }
    }

    // Attention loss: image-resolution BCE on the upsampled attention map.
    let mut d_ma = RealMap::zeros(y_img.height(), y_img.width());
    for i in 0..d_ma.data().len() {
        d_ma.data_mut()[i] = w.lambda_a * bce_grad(ma.data()[i], y_img.data()[i]);
    }
    let d_from_loss_a = features::bilinear_upsample_adjoint(&d_ma, gh, gw);
    for (d_avg, &g) in d_a_avg.iter_mut().zip(d_from_loss_a.data()) {
        *d_avg += g;
    }

    // Per-shot: through the mean, the normalization, the right-inverse map,
    // cosine similarity, and the embeddings.
    let q_norms = row_norms(&fwd.e_q);
    let mut d_eq = vec![0.0; n_q * de];
    let lr_coef = w.lambda_r * 2.0 / kf;

    for (shot, rt) in fwd.shots.iter().zip(&truths) {
        let n_s = shot.g_s.height() * shot.g_s.width();
        let raw = shot.a_raw.data();
        let norm = shot.a_norm.data();

        // Shot mean: every shot receives 1/k of the averaged gradient.
        // Min/max normalization with pinned extremum locations.
        let mut p_idx = 0;
        let mut q_idx = 0;
        for i in 1..n_q {
            if raw[i] < raw[p_idx] {
                p_idx = i;
            }
            if raw[i] > raw[q_idx] {
                q_idx = i;
            }
        }
        let spread = raw[q_idx] - raw[p_idx];
        let mut d_araw = vec![0.0; n_q];
        if spread >= EPS_FLAT {
            let mut u_sum = 0.0;
            let mut v_sum = 0.0;
            for i in 0..n_q {
                let u = d_a_avg[i] / kf;
                u_sum += u;
                v_sum += u * norm[i];
            }
            for i in 0..n_q {
                d_araw[i] = (d_a_avg[i] / kf) / spread;
            }
            d_araw[p_idx] += (v_sum - u_sum) / spread;
            d_araw[q_idx] -= v_sum / spread;
        }

        // Right inverse of the support mask row: a fixed linear map.
        let count = shot.g_s.foreground_count() as f64;
        let ginv: Vec<f64> = shot.g_s.data().iter().map(|&b| b as f64 / count).collect();

        let s_norms = row_norms(&shot.e_s);
        let mut d_es = vec![0.0; n_s * de];
        for i in 0..n_q {
            let nq = q_norms[i];
            let eq_row = fwd.e_q.at_index(i);
            for j in 0..n_s {
                let mut g = d_araw[i] * ginv[j];
                g += lr_coef * (shot.r.get(i, j) - rt.get(i, j));
                if g == 0.0 {
                    continue;
                }
                let ns = s_norms[j];
                if nq < EPS_NORM || ns < EPS_NORM {
                    continue;
                }
                let es_row = shot.e_s.at_index(j);
                let c = shot.r.get(i, j);
                let denom = nq * ns;
                for d in 0..de {
                    d_eq[i * de + d] += g * (es_row[d] / denom - c * eq_row[d] / (nq * nq));
                    d_es[j * de + d] += g * (eq_row[d] / denom - c * es_row[d] / (ns * ns));
                }
            }
        }
        // Support embeddings come from the masked features.
        for c0 in 0..BASE_CHANNELS {
            for d in 0..de {
                let mut acc = 0.0;
                for j in 0..n_s {
                    acc += shot.f_s_masked.at_index(j)[c0] * d_es[j * de + d];
                }
                let cur = g_we.get(c0, d);
                g_we.set(c0, d, cur + acc);
            }
        }
    }
    // Query embeddings are shared by every shot; fold once.
    for c0 in 0..BASE_CHANNELS {
        for d in 0..de {
            let mut acc = 0.0;
            for i in 0..n_q {
                acc += fwd.f_q.at_index(i)[c0] * d_eq[i * de + d];
            }
            let cur = g_we.get(c0, d);
            g_we.set(c0, d, cur + acc);
        }
    }

    Ok((
        breakdown,
        GradientSet {
            w_e: g_we,
            w_f: g_wf,
            w_h: g_wh,
        },
    ))
}

/// Central-difference relative error of every analytic gradient entry,
/// maximised over the whole parameter set. `eps` must be positive.
pub fn finite_diff_check(
    ep: &Episode,
    params: &ModelParams,
    w: &LossWeights,
    eps: f64,
) -> Result<f64> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite difference step must be positive and finite, got {eps}"
        )));
    }
    let (_, analytic) = grad_total_loss(ep, params, w)?;
    let f = |p: &ModelParams| -> Result<f64> { Ok(episode_losses(ep, p, w)?.total) };
    max_rel_err(&f, params, &analytic, eps)
}

/// Relative error between analytic gradients and central differences of an
/// arbitrary scalar function of the parameters.
fn max_rel_err(
    f: &dyn Fn(&ModelParams) -> Result<f64>,
    params: &ModelParams,
    analytic: &GradientSet,
    eps: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut probe = |set: &mut dyn FnMut(&mut ModelParams, f64), base: f64, ana: f64| -> Result<()> {
        let mut hi = params.clone();
        set(&mut hi, base + eps);
        let mut lo = params.clone();
        set(&mut lo, base - eps);
        let num = (f(&hi)? - f(&lo)?) / (2.0 * eps);
        let rel = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
        Ok(())
    };
    for idx in 0..params.w_e.data().len() {
        let base = params.w_e.data()[idx];
        probe(
            &mut |p, v| p.w_e.data_mut()[idx] = v,
            base,
            analytic.w_e.data()[idx],
        )?;
    }
    for idx in 0..params.w_f.data().len() {
        let base = params.w_f.data()[idx];
        probe(
            &mut |p, v| p.w_f.data_mut()[idx] = v,
            base,
            analytic.w_f.data()[idx],
        )?;
    }
    for idx in 0..params.w_h.len() {
        let base = params.w_h[idx];
        probe(&mut |p, v| p.w_h[idx] = v, base, analytic.w_h[idx])?;
    }
    Ok(worst)
}

/// Deterministic random episode and parameters for gradient checking:
/// 8x8 RGB images, disc masks, stride 1, 4-dimensional embeddings. Odd
/// seeds use two support shots to cover the k-shot averaging path.
pub fn gradcheck_fixture(seed: u64) -> (Episode, ModelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 8;
    let w = 8;
    let image = |rng: &mut ChaCha8Rng| -> crate::features::Image {
        let data: Vec<f64> = (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        crate::features::Image::from_vec(h, w, 3, data).unwrap()
    };
    let disc = |rng: &mut ChaCha8Rng| -> Mask {
        let cy = rng.gen_range(2..=5) as f64;
        let cx = rng.gen_range(2..=5) as f64;
        let r = rng.gen_range(2..=3) as f64;
        let mut m = Mask::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                if dy * dy + dx * dx <= r * r {
                    m.set(y, x, 1);
                }
            }
        }
        m
    };
    let k = 1 + (seed % 2) as usize;
    let support = (0..k).map(|_| (image(&mut rng), disc(&mut rng))).collect();
    let query = image(&mut rng);
    let query_mask = disc(&mut rng);
    let episode = Episode::new(support, query, Some(query_mask), 0).unwrap();

    let de = 4;
    let df = 4;
    let w_e = Matrix::from_vec(
        BASE_CHANNELS,
        de,
        (0..BASE_CHANNELS * de)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect(),
    )
    .unwrap();
    let w_f = Matrix::from_vec(
        BASE_CHANNELS,
        df,
        (0..BASE_CHANNELS * df)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect(),
    )
    .unwrap();
    let w_h: Vec<f64> = (0..df + 1).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let params = ModelParams::new(1, w_e, w_f, w_h).unwrap();
    (episode, params)
}
