//! Episodic training and evaluation.
//!
//! An episode is k annotated support pairs plus one query image drawn from
//! a single class. Training samples episodes from the training classes and
//! takes one Adam step per episode on the summed loss; evaluation samples
//! episodes from classes the model never saw, thresholds the predicted
//! probability map, and scores it against the held-back query annotation.
//!
//! Everything is driven by one seeded ChaCha stream in a fixed order, so a
//! given dataset, config, and seed reproduce the same parameters bit for
//! bit.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{Image, ModelParams};
use crate::losses::{self, GradientSet, LossBreakdown, LossWeights};
use crate::metrics::{self, MetricsReport};
use crate::transform::{self, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One few-shot task: k support pairs, a query, and (when known) the query
/// ground truth. `class_id` indexes the dataset the episode came from.
#[derive(Debug, Clone)]
pub struct Episode {
    pub support: Vec<(Image, Mask)>,
    pub query: Image,
    pub query_mask: Option<Mask>,
    pub class_id: usize,
}

impl Episode {
    /// Validates shape agreement and that every support mask marks at
    /// least one foreground pixel.
    pub fn new(
        support: Vec<(Image, Mask)>,
        query: Image,
        query_mask: Option<Mask>,
        class_id: usize,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyList("episode support set"));
        }
        for (img, mask) in &support {
            if img.height() != mask.height() || img.width() != mask.width() {
                return Err(Error::DimensionMismatch {
                    context: "episode support pair",
                    expected: (img.height(), img.width()),
                    got: (mask.height(), mask.width()),
                });
            }
            if mask.foreground_count() == 0 {
                return Err(Error::EmptyMask);
            }
        }
        if let Some(m) = &query_mask {
            if m.height() != query.height() || m.width() != query.width() {
                return Err(Error::DimensionMismatch {
                    context: "episode query pair",
                    expected: (query.height(), query.width()),
                    got: (m.height(), m.width()),
                });
            }
        }
        Ok(Episode {
            support,
            query,
            query_mask,
            class_id,
        })
    }

    pub fn shots(&self) -> usize {
        self.support.len()
    }
}

fn default_learning_rate() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_episodes() -> usize {
    2000
}
fn default_seed() -> u64 {
    1
}
fn default_shots() -> usize {
    1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_dim() -> usize {
    16
}
fn default_stride() -> usize {
    4
}

/// Training hyperparameters. Deserializes from JSON; every field has a
/// default, unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_lambda")]
    pub lambda_m: f64,
    #[serde(default = "default_lambda")]
    pub lambda_a: f64,
    #[serde(default = "default_lambda")]
    pub lambda_r: f64,
    #[serde(default = "default_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_dim")]
    pub query_dim: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config must deserialize")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if !(1..=5).contains(&self.shots) {
            return bad(format!("shots must lie in 1..=5, got {}", self.shots));
        }
        for (name, v) in [
            ("lambda_m", self.lambda_m),
            ("lambda_a", self.lambda_a),
            ("lambda_r", self.lambda_r),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.embed_dim == 0 || self.query_dim == 0 {
            return bad("embedding dimensions must be at least 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_m: self.lambda_m,
            lambda_a: self.lambda_a,
            lambda_r: self.lambda_r,
        }
    }

    /// Reads a JSON config file. Missing fields take defaults; unknown or
    /// malformed content is a format error, out-of-range values are config
    /// errors.
    pub fn from_json_file(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Adam optimizer state over the three parameter tensors. Update order is
/// fixed: `w_e` row-major, then `w_f`, then `w_h`.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(cfg: &TrainConfig, n_params: usize) -> Adam {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    fn step(&mut self, params: &mut ModelParams, g: &GradientSet) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let pairs = params
            .w_e
            .data_mut()
            .iter_mut()
            .zip(g.w_e.data().iter())
            .chain(params.w_f.data_mut().iter_mut().zip(g.w_f.data().iter()))
            .chain(params.w_h.iter_mut().zip(g.w_h.iter()));
        for (i, (theta, &grad)) in pairs.enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            *theta -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Draws one episode: a uniformly random class, then k+1 distinct images
/// from it (first k as support, last as query, its mask kept as ground
/// truth). Pairs with empty masks are never candidates.
pub fn sample_training_episode<R: Rng>(ds: &Dataset, k: usize, rng: &mut R) -> Result<Episode> {
    if !(1..=5).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "shots must lie in 1..=5, got {k}"
        )));
    }
    if ds.classes.is_empty() {
        return Err(Error::EmptyList("dataset class list"));
    }
    let class_id = rng.gen_range(0..ds.classes.len());
    let class = &ds.classes[class_id];
    let mut eligible: Vec<usize> = (0..class.pairs.len())
        .filter(|&i| class.pairs[i].1.foreground_count() > 0)
        .collect();
    if eligible.len() < k + 1 {
        return Err(Error::InsufficientImages {
            class: class.name.clone(),
            have: eligible.len(),
            need: k + 1,
        });
    }
    // Partial Fisher-Yates: the first k+1 slots become the draw.
    for i in 0..=k {
        let j = rng.gen_range(i..eligible.len());
        eligible.swap(i, j);
    }
    let support = eligible[..k]
        .iter()
        .map(|&i| class.pairs[i].clone())
        .collect();
    let (q_img, q_mask) = class.pairs[eligible[k]].clone();
    Episode::new(support, q_img, Some(q_mask), class_id)
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub episode: usize,
    pub losses: LossBreakdown,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
}

/// Runs episodic training: init from the config seed, then one sampled
/// episode and one Adam step per iteration.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg.stride, cfg.embed_dim, cfg.query_dim, &mut rng)?;
    let n_params = params.w_e.data().len() + params.w_f.data().len() + params.w_h.len();
    let mut adam = Adam::new(cfg, n_params);
    let weights = cfg.weights();
    let mut trace = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let ep = sample_training_episode(ds, cfg.shots, &mut rng)?;
        let (losses, grads) = losses::grad_total_loss(&ep, &params, &weights)?;
        adam.step(&mut params, &grads);
        trace.push(TraceRow { episode, losses });
    }
    Ok(TrainOutcome { params, trace })
}

/// Samples `pairs` episodes from the evaluation set, thresholds the
/// predictions, and aggregates metrics. `train_classes` is checked against
/// the evaluation classes: any overlap breaks the few-shot contract and is
/// rejected.
pub fn evaluate(
    test: &Dataset,
    train_classes: &[String],
    params: &ModelParams,
    k: usize,
    pairs: usize,
    seed: u64,
    threshold: f64,
) -> Result<MetricsReport> {
    if pairs == 0 {
        return Err(Error::InvalidArgument("pairs must be at least 1".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie strictly between 0 and 1, got {threshold}"
        )));
    }
    for class in &test.classes {
        if train_classes.contains(&class.name) {
            return Err(Error::InvalidArgument(format!(
                "evaluation class {:?} appears in the training classes",
                class.name
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut preds = Vec::with_capacity(pairs);
    let mut gts = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let ep = sample_training_episode(test, k, &mut rng)?;
        let (_, prob) = transform::transform_episode(&ep, params)?;
        let pred = prob.binarize(threshold);
        let gt = ep.query_mask.as_ref().expect("sampled episodes carry ground truth");
        let iou = metrics::foreground_iou(&pred, gt)?;
        let entry = per_class
            .entry(test.classes[ep.class_id].name.clone())
            .or_insert((0.0, 0));
        entry.0 += iou;
        entry.1 += 1;
        preds.push(pred);
        gts.push(gt.clone());
    }
    let per_class_iou: BTreeMap<String, f64> = per_class
        .into_iter()
        .map(|(name, (sum, n))| (name, sum / n as f64))
        .collect();
    let class_means: Vec<f64> = per_class_iou.values().copied().collect();
    Ok(MetricsReport {
        miou: metrics::miou(&class_means)?,
        fb_iou: metrics::fb_iou(&preds, &gts)?,
        per_class_iou,
        pairs_evaluated: pairs,
        shots: k,
        attention_mode: format!("A_{k}-shot"),
        seed,
        threshold,
    })
}
