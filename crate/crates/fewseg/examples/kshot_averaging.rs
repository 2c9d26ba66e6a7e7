//! How multi-shot episodes combine evidence: each support produces its own
//! attention map over the query grid, and the episode uses their per-pixel
//! mean.
//!
//! Two properties are shown:
//!   * degenerate 5-shot — the same support repeated five times — produces
//!     an attention map bitwise identical to the 1-shot map, so adding
//!     copies of what you already know changes nothing;
//!   * genuine 5-shot with five different supports produces a different,
//!     smoother map — support-specific quirks are averaged out — that still
//!     rates the figure above the background.

use fewseg::data::{generate_synthetic_dataset, SynthConfig};
use fewseg::features::{downsample_mask, ModelParams};
use fewseg::train::Episode;
use fewseg::transform::{transform_episode, AttentionMap, Mask};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mean attention over true-figure and true-background grid cells.
fn contrast(a: &AttentionMap, g_q: &Mask) -> (f64, f64) {
    let (mut fg, mut nf, mut bg, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (i, &g) in g_q.data().iter().enumerate() {
        if g == 1 {
            fg += a.data()[i];
            nf += 1;
        } else {
            bg += a.data()[i];
            nb += 1;
        }
    }
    (fg / nf as f64, bg / nb as f64)
}

fn main() {
    let ds = generate_synthetic_dataset(&SynthConfig {
        seed: 21,
        per_class: 6,
        ..SynthConfig::default()
    })
    .expect("valid config");
    let class = &ds.classes[0];
    let supports: Vec<_> = class.pairs[..5].to_vec();
    let (q_img, q_mask) = class.pairs[5].clone();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ModelParams::init(4, 16, 16, &mut rng).expect("valid dims");
    let g_q = downsample_mask(&q_mask, params.stride).expect("positive stride");

    // 1-shot with the first support.
    let one = Episode::new(
        supports[..1].to_vec(),
        q_img.clone(),
        Some(q_mask.clone()),
        0,
    )
    .expect("valid episode");
    let (a1, _) = transform_episode(&one, &params).expect("episode runs");

    // Degenerate 5-shot: the same support five times.
    let copies = Episode::new(
        vec![supports[0].clone(); 5],
        q_img.clone(),
        Some(q_mask.clone()),
        0,
    )
    .expect("valid episode");
    let (a_copies, _) = transform_episode(&copies, &params).expect("episode runs");
    assert_eq!(
        a1.data(),
        a_copies.data(),
        "averaging five copies must reproduce the single map bitwise"
    );
    println!("5 identical supports == 1-shot: attention maps bitwise equal");

    // Genuine 5-shot: five different annotated examples of the class.
    let five = Episode::new(supports, q_img, Some(q_mask), 0).expect("valid episode");
    let (a5, _) = transform_episode(&five, &params).expect("episode runs");
    assert_ne!(
        a1.data(),
        a5.data(),
        "five distinct supports should produce a different map"
    );

    let (fg1, bg1) = contrast(&a1, &g_q);
    let (fg5, bg5) = contrast(&a5, &g_q);
    println!("1-shot attention:  figure mean {fg1:.3}, background mean {bg1:.3}, gap {:.3}", fg1 - bg1);
    println!("5-shot attention:  figure mean {fg5:.3}, background mean {bg5:.3}, gap {:.3}", fg5 - bg5);
    assert!(fg5 > bg5, "5-shot attention should still prefer the figure");
    println!("distinct supports average into a map that still localizes the figure");
}
