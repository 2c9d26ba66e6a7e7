//! Few-shot segmentation by transforming local relationship matrices into
//! attention maps.
//!
//! Given k annotated support images and one unlabeled query image of an
//! unseen class, the pipeline segments the query in four steps:
//!
//! 1. **Local features** — both images are reduced to a coarse grid of
//!    handcrafted per-block descriptors ([`features`]), and the support
//!    features are zeroed outside the annotated foreground.
//! 2. **Relationship matrix** — pairwise cosine similarities between every
//!    query location and every support location ([`transform`]).
//! 3. **Linear transformation to attention** — multiplying the relationship
//!    matrix by the Moore–Penrose right inverse of the flattened support
//!    mask collapses it to a query-shaped attention map; an idealized
//!    relationship matrix recovers the query mask exactly. k-shot episodes
//!    average the per-shot maps.
//! 4. **Prediction** — the attention gates learned query features, a linear
//!    head scores each location, and the result is upsampled to a pixelwise
//!    probability map.
//!
//! Training minimizes a three-part objective — mask loss, attention loss,
//! and relationship loss ([`losses`]) — with hand-derived analytic
//! gradients, verified against finite differences, over episodes sampled
//! from classes disjoint from the evaluation classes ([`train`]).
//! Everything is deterministic under a seed: same data, config, and seed
//! reproduce parameters and metrics bit for bit.
//!
//! # Where to start
//!
//! Each major capability has a runnable walkthrough under `examples/`:
//!
//! ```text
//! cargo run --release -p fewseg --example exact_recovery      # step-3 identity on random masks
//! cargo run --release -p fewseg --example attention_pipeline  # one episode end to end
//! cargo run --release -p fewseg --example kshot_averaging     # 5-shot vs 1-shot behavior
//! cargo run --release -p fewseg --example gradient_check      # analytic vs numeric gradients
//! cargo run --release -p fewseg --example generate_dataset    # synthetic shapes corpus on disk
//! cargo run --release -p fewseg --example train_synthetic     # short episodic training run
//! cargo run --release -p fewseg --example evaluate_split      # held-out-class evaluation
//! ```
//!
//! The same functionality is scriptable through the `fewseg` binary
//! (subcommands `synth`, `train`, `attend`, `eval`, `gradcheck`,
//! `splits`); see [`cli`].

pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod train;
pub mod transform;

pub use error::{Error, Result};
