//! Verifies the hand-derived analytic gradients of the full training
//! objective against central finite differences.
//!
//! The objective is the weighted sum of the mask loss, the attention loss,
//! and the relationship loss; its gradient runs backward through the head,
//! the attention gating, the shot mean, the min-max normalization, the
//! right-inverse linear map, the cosine similarities, and both embeddings.
//! Every parameter entry is perturbed by ±eps and the centered difference
//! quotient is compared against the analytic value; the relative error is
//! maximised over the whole parameter set.
//!
//! Ten random fixtures are checked (alternating 1-shot and 2-shot so the
//! shot-averaging path is exercised). A correct gradient shows errors
//! around 1e-7, far below the 1e-3 alarm threshold; a single wrong term in
//! the derivation typically pushes it past 1e-1.

use fewseg::losses::{finite_diff_check, gradcheck_fixture, LossWeights};

fn main() {
    let eps = 1e-5;
    let tolerance = 1e-3;
    let weights = LossWeights::default();
    let mut worst = 0.0f64;

    println!("seed  shots  max relative error");
    for seed in 0..10u64 {
        let (episode, params) = gradcheck_fixture(seed);
        let err = finite_diff_check(&episode, &params, &weights, eps).expect("fixture is valid");
        println!("{seed:>4}  {:>5}  {err:.3e}", episode.shots());
        if err > worst {
            worst = err;
        }
    }

    println!("\nworst over 10 fixtures: {worst:.3e} (threshold {tolerance:.0e})");
    assert!(
        worst < tolerance,
        "analytic gradients disagree with finite differences"
    );
    println!("analytic gradients match finite differences");
}
