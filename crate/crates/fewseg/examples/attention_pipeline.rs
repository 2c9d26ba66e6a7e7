//! Walks one support/query episode through every stage of the pipeline,
//! printing the shapes and a picture of the attention map at the end.
//!
//! Stages, in order:
//!   1. handcrafted local features on a coarse grid for both images,
//!   2. support features zeroed outside the annotated foreground,
//!   3. learned embeddings and the query-by-support cosine relationship
//!      matrix,
//!   4. the right-inverse linear transformation that collapses the matrix
//!      to a query-shaped attention map, followed by min-max normalization,
//!   5. attention-gated query features through the logistic head, upsampled
//!      to a pixelwise probability map.
//!
//! The parameters here are freshly initialized, not trained, so the head
//! output is uninformative. The attention map is already structured,
//! though: random embeddings roughly preserve the cosine geometry of the
//! handcrafted features, and the support figure and query figure share
//! color and texture.

use fewseg::data::{generate_synthetic_dataset, SynthConfig};
use fewseg::features::{self, ModelParams};
use fewseg::train::Episode;
use fewseg::transform::{self, RealMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ten-level ASCII ramp, dark to bright.
fn render(m: &RealMap) -> String {
    const RAMP: &[u8] = b" .:-=+*#%@";
    let mut out = String::new();
    for y in 0..m.height() {
        out.push_str("    ");
        for x in 0..m.width() {
            let v = m.get(y, x).clamp(0.0, 1.0);
            let idx = ((v * (RAMP.len() - 1) as f64).round() as usize).min(RAMP.len() - 1);
            out.push(RAMP[idx] as char);
        }
        out.push('\n');
    }
    out
}

fn main() {
    // Two pairs of one synthetic class: the first annotates the support,
    // the second plays the unlabeled query (its mask is kept for scoring).
    let ds = generate_synthetic_dataset(&SynthConfig {
        seed: 11,
        per_class: 2,
        ..SynthConfig::default()
    })
    .expect("valid config");
    let class = &ds.classes[0];
    let (s_img, s_mask) = class.pairs[0].clone();
    let (q_img, q_mask) = class.pairs[1].clone();
    println!("class `{}`: support + query, {}x{} pixels", class.name, q_img.height(), q_img.width());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::init(4, 16, 16, &mut rng).expect("valid dims");

    // Stage 1-2: local features, support foreground zeroed.
    let f_s = features::extract_base_features(&s_img, params.stride);
    let f_q = features::extract_base_features(&q_img, params.stride);
    let g_s = features::downsample_mask(&s_mask, params.stride).expect("positive stride");
    let f_s_masked = transform::mask_features(&f_s, &g_s).expect("same grid");
    println!(
        "features: {}x{} grid, {} channels per location (stride {})",
        f_q.height(),
        f_q.width(),
        f_q.channels(),
        params.stride
    );

    // Stage 3: embeddings and the relationship matrix.
    let e_s = features::embed(&f_s_masked, &params.w_e).expect("dims agree");
    let e_q = features::embed(&f_q, &params.w_e).expect("dims agree");
    let r = transform::relationship_matrix(&e_q, &e_s).expect("same embed dim");
    println!(
        "relationship matrix: {} query locations x {} support locations",
        r.rows(),
        r.cols()
    );

    // Stage 4: right-inverse transform + normalization.
    let attn = transform::attention_from_relationship(&r, &g_s, f_q.height(), f_q.width())
        .expect("support mask non-empty");
    let a = transform::average_attention(&[attn.normalized]).expect("one map");

    // Stage 5: gate the projected query features, score, upsample.
    let fhat_q = features::project_query(&f_q, &params.w_f).expect("dims agree");
    let filtered = transform::filter_query_features(&fhat_q, &a).expect("same grid");
    let prob = features::predict_head(&filtered, &params.w_h, q_img.height(), q_img.width())
        .expect("head matches channels");
    println!(
        "probability map: {}x{} pixels (value range {:.3}..{:.3})",
        prob.height(),
        prob.width(),
        prob.data().iter().cloned().fold(f64::INFINITY, f64::min),
        prob.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );

    // The whole pipeline again through the one-call entry point; the
    // attention half must agree bitwise.
    let ep = Episode::new(
        vec![(s_img, s_mask)],
        q_img.clone(),
        Some(q_mask.clone()),
        0,
    )
    .expect("valid episode");
    let (a_avg, _prob) = transform::transform_episode(&ep, &params).expect("episode runs");
    assert_eq!(a_avg.data(), a.data(), "staged and one-call paths agree");

    // How much does the (untrained) attention already know about the query
    // figure? Compare its mean over true-foreground and true-background
    // grid cells.
    let g_q = features::downsample_mask(&q_mask, params.stride).expect("positive stride");
    let (mut fg_sum, mut fg_n, mut bg_sum, mut bg_n) = (0.0, 0usize, 0.0, 0usize);
    for (i, &g) in g_q.data().iter().enumerate() {
        if g == 1 {
            fg_sum += a.data()[i];
            fg_n += 1;
        } else {
            bg_sum += a.data()[i];
            bg_n += 1;
        }
    }
    let (fg_mean, bg_mean) = (fg_sum / fg_n as f64, bg_sum / bg_n as f64);

    println!("\nquery mask on the feature grid:");
    print!(
        "{}",
        render(&RealMap::from_vec(g_q.height(), g_q.width(), g_q.to_f64()).unwrap())
    );
    println!("attention map (untrained embeddings):");
    print!("{}", render(&a));
    println!("mean attention on figure {fg_mean:.3} vs background {bg_mean:.3}");
    assert!(
        fg_mean > bg_mean,
        "attention should already prefer the figure before any training"
    );
    println!("attention localizes the figure before the head is trained");
}
