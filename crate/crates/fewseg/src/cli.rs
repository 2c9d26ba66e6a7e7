//! Command-line surface.
//!
//! One subcommand per pipeline stage:
//!
//! | command    | purpose                                                    |
//! |------------|------------------------------------------------------------|
//! | `synth`    | write a seeded synthetic-shapes dataset to a directory    |
//! | `train`    | episodic training on the non-held-out classes             |
//! | `attend`   | attention + prediction maps for one support/query episode |
//! | `eval`     | held-out-class metrics (per-class IoU, mIoU, FB-IoU)      |
//! | `gradcheck`| analytic-vs-numeric gradient comparison                    |
//! | `splits`   | print a benchmark split's train/test class lists          |
//!
//! Exit codes: 0 success, 2 usage error (bad flags, invalid split or
//! config), 3 data or format error (IO, malformed files, non-binary
//! masks), 4 numeric or model error (shape mismatches, empty masks,
//! undersized classes, failed gradient check). Human-readable results go
//! to stdout, diagnostics to stderr. Every command that takes a seed is
//! bit-reproducible.

use crate::data::{self, Dataset, ShapeKind, SynthConfig, TensorRecord};
use crate::error::{Error, Result};
use crate::features;
use crate::losses::{self, LossWeights};
use crate::train::{self, TrainConfig};
use crate::transform;
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Parser, Debug)]
#[command(
    name = "fewseg",
    version,
    about = "Few-shot segmentation via relationship matrices and attention maps"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic shapes dataset on disk
    Synth {
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Generator seed
        #[arg(long)]
        seed: u64,
        /// Square image side length
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Comma-separated shape classes (default: all six)
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        /// Images per class
        #[arg(long = "per-class", default_value_t = 40)]
        per_class: usize,
        /// Additive image noise amplitude in [0, 1)
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
    /// Train on a dataset directory, holding out one class
    Train {
        /// Dataset directory (layout: <root>/<class>/<index>.ppm + <index>_mask.pgm)
        #[arg(long)]
        data: PathBuf,
        /// Index of the class to hold out for evaluation
        #[arg(long)]
        split: usize,
        /// JSON config file; omitted fields take their defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output parameter file (FST1)
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV path (default: <out>.loss.csv)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Produce attention and prediction maps for one episode
    Attend {
        /// Support pairs as IMG,MASK[,IMG,MASK...], 1 to 5 pairs
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        support: Vec<PathBuf>,
        /// Query image
        #[arg(long)]
        query: PathBuf,
        /// Trained parameter file (FST1)
        #[arg(long)]
        params: PathBuf,
        /// Output attention map (PGM, query resolution); a raw FST1
        /// sidecar is written next to it as <out-attn>.fst
        #[arg(long = "out-attn")]
        out_attn: PathBuf,
        /// Optional output probability map (PGM)
        #[arg(long = "out-pred")]
        out_pred: Option<PathBuf>,
    },
    /// Evaluate trained parameters on a held-out class
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Index of the held-out class (must match training)
        #[arg(long)]
        split: usize,
        #[arg(long)]
        params: PathBuf,
        /// Support shots per episode (1 or 5)
        #[arg(long, default_value_t = 1)]
        shots: usize,
        /// Number of evaluation episodes
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Foreground threshold on the probability map
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also write the report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare analytic gradients against finite differences
    Gradcheck {
        /// Fixture seed
        #[arg(long)]
        seed: u64,
        /// Finite-difference step size
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Print the train/test class lists of a benchmark split
    Splits {
        /// Split index in 0..=3
        #[arg(long)]
        i: usize,
    },
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidSplit(_) | Error::InvalidConfig(_) | Error::InvalidArgument(_) => 2,
        Error::Io(_) | Error::Format(_) | Error::NonBinaryMask { .. } => 3,
        Error::DimensionMismatch { .. }
        | Error::EmptyMask
        | Error::EmptyList(_)
        | Error::InsufficientImages { .. } => 4,
    }
}

/// Parses `args` (including the program name) and runs one subcommand,
/// returning the process exit code. Kept separate from `main` so tests can
/// drive the full CLI in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and exit 0; real
            // parse errors print to stderr and exit 2.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Synth {
            out,
            seed,
            size,
            classes,
            per_class,
            noise,
        } => cmd_synth(&out, seed, size, classes.as_deref(), per_class, noise),
        Command::Train {
            data,
            split,
            config,
            out,
            trace,
        } => cmd_train(&data, split, config.as_deref(), &out, trace.as_deref()),
        Command::Attend {
            support,
            query,
            params,
            out_attn,
            out_pred,
        } => cmd_attend(&support, &query, &params, &out_attn, out_pred.as_deref()),
        Command::Eval {
            data,
            split,
            params,
            shots,
            pairs,
            seed,
            threshold,
            json,
        } => cmd_eval(
            &data,
            split,
            &params,
            shots,
            pairs,
            seed,
            threshold,
            json.as_deref(),
        ),
        Command::Gradcheck { seed, eps } => cmd_gradcheck(seed, eps),
        Command::Splits { i } => cmd_splits(i),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn cmd_synth(
    out: &Path,
    seed: u64,
    size: usize,
    classes: Option<&[String]>,
    per_class: usize,
    noise: f64,
) -> Result<i32> {
    let classes = match classes {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<ShapeKind>())
            .collect::<Result<Vec<_>>>()?,
        None => ShapeKind::ALL.to_vec(),
    };
    let cfg = SynthConfig {
        size,
        classes,
        per_class,
        noise,
        seed,
    };
    let ds = data::generate_synthetic_dataset(&cfg)?;
    ds.save_to_dir(out)?;
    println!(
        "wrote {} classes × {} pairs ({} images) to {}",
        ds.classes.len(),
        per_class,
        ds.total_pairs(),
        out.display()
    );
    Ok(0)
}

fn cmd_train(
    data: &Path,
    split: usize,
    config: Option<&Path>,
    out: &Path,
    trace: Option<&Path>,
) -> Result<i32> {
    let ds = Dataset::load_from_dir(data)?;
    let (train_ds, test_ds) = ds.split_holdout(split)?;
    let cfg = match config {
        Some(path) => TrainConfig::from_json_file(path)?,
        None => TrainConfig::default(),
    };
    let outcome = train::train(&train_ds, &cfg)?;
    data::save_params(out, &outcome.params)?;

    let trace_path = match trace {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(format!("{}.loss.csv", out.display())),
    };
    let mut csv = String::from("episode,loss_m,loss_a,loss_r,total\n");
    for row in &outcome.trace {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.episode, row.losses.loss_m, row.losses.loss_a, row.losses.loss_r, row.losses.total
        ));
    }
    std::fs::write(&trace_path, csv)?;

    let last = outcome.trace.last().expect("episodes >= 1");
    println!(
        "trained {} episodes on {} classes (held out: {}); final total loss {:.6}",
        outcome.trace.len(),
        train_ds.classes.len(),
        test_ds.classes[0].name,
        last.losses.total
    );
    println!("params -> {}", out.display());
    println!("trace  -> {}", trace_path.display());
    Ok(0)
}

fn cmd_attend(
    support: &[PathBuf],
    query: &Path,
    params_path: &Path,
    out_attn: &Path,
    out_pred: Option<&Path>,
) -> Result<i32> {
    if support.is_empty() || !support.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "--support takes IMG,MASK pairs; got {} paths",
            support.len()
        )));
    }
    let shots = support.len() / 2;
    if shots > 5 {
        return Err(Error::InvalidArgument(format!(
            "at most 5 support pairs are allowed, got {shots}"
        )));
    }
    let params = data::load_params(params_path)?;
    let mut pairs = Vec::with_capacity(shots);
    for chunk in support.chunks_exact(2) {
        let img = data::load_image(&chunk[0])?;
        let mask = data::load_mask(&chunk[1], false)?;
        pairs.push((img, mask));
    }
    let query_img = data::load_image(query)?;
    let (qh, qw) = (query_img.height(), query_img.width());
    let episode = train::Episode::new(pairs, query_img, None, 0)?;

    let fwd = transform::forward_episode(&episode, &params)?;
    let attn_full = features::bilinear_upsample(&fwd.a_avg, qh, qw);
    data::save_map(out_attn, &attn_full)?;

    // Raw per-shot and averaged grids go into an FST1 sidecar for
    // quantitative inspection; the PGM above is for eyeballs.
    let mut tensors = Vec::with_capacity(fwd.shots.len() + 1);
    for (s, shot) in fwd.shots.iter().enumerate() {
        tensors.push(TensorRecord::new(
            format!("attention_raw_shot{s}"),
            vec![shot.a_raw.height(), shot.a_raw.width()],
            shot.a_raw.data().iter().map(|&v| v as f32).collect(),
        )?);
    }
    tensors.push(TensorRecord::new(
        "attention_avg",
        vec![fwd.a_avg.height(), fwd.a_avg.width()],
        fwd.a_avg.data().iter().map(|&v| v as f32).collect(),
    )?);
    let sidecar = PathBuf::from(format!("{}.fst", out_attn.display()));
    data::write_tensors(&sidecar, &tensors)?;

    println!("attention ({shots}-shot) -> {}", out_attn.display());
    println!("raw tensors -> {}", sidecar.display());
    if let Some(pred_path) = out_pred {
        data::save_map(pred_path, &fwd.prob)?;
        println!("prediction -> {}", pred_path.display());
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    data_dir: &Path,
    split: usize,
    params_path: &Path,
    shots: usize,
    pairs: usize,
    seed: u64,
    threshold: f64,
    json: Option<&Path>,
) -> Result<i32> {
    if shots != 1 && shots != 5 {
        return Err(Error::InvalidArgument(format!(
            "--shots must be 1 or 5, got {shots}"
        )));
    }
    let ds = Dataset::load_from_dir(data_dir)?;
    let (train_ds, test_ds) = ds.split_holdout(split)?;
    let params = data::load_params(params_path)?;
    let report = train::evaluate(
        &test_ds,
        &train_ds.class_names(),
        &params,
        shots,
        pairs,
        seed,
        threshold,
    )?;
    print!("{}", report.render_table());
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
        std::fs::write(path, text + "\n")?;
        println!("json -> {}", path.display());
    }
    Ok(0)
}

fn cmd_gradcheck(seed: u64, eps: f64) -> Result<i32> {
    let (episode, params) = losses::gradcheck_fixture(seed);
    let weights = LossWeights::default();
    let err = losses::finite_diff_check(&episode, &params, &weights, eps)?;
    if err < GRADCHECK_TOLERANCE {
        println!("max_rel_err = {err:.3e} < {GRADCHECK_TOLERANCE:e}: ok");
        Ok(0)
    } else {
        eprintln!(
            "gradient check failed: max_rel_err = {err:.3e} >= {GRADCHECK_TOLERANCE:e}"
        );
        Ok(4)
    }
}

fn cmd_splits(i: usize) -> Result<i32> {
    let (train, test) = data::pascal5i_split(i)?;
    println!("split {i}");
    println!("train: {}", train.join(", "));
    println!("test:  {}", test.join(", "));
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_error_variants() {
        assert_eq!(exit_code_for(&Error::InvalidSplit(9)), 2);
        assert_eq!(exit_code_for(&Error::InvalidConfig("x".into())), 2);
        assert_eq!(exit_code_for(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(
            exit_code_for(&Error::Io(std::io::Error::from(
                std::io::ErrorKind::NotFound
            ))),
            3
        );
        assert_eq!(exit_code_for(&Error::Format("x".into())), 3);
        assert_eq!(exit_code_for(&Error::NonBinaryMask { value: 7 }), 3);
        assert_eq!(
            exit_code_for(&Error::DimensionMismatch {
                context: "t",
                expected: (1, 1),
                got: (2, 2)
            }),
            4
        );
        assert_eq!(exit_code_for(&Error::EmptyMask), 4);
        assert_eq!(exit_code_for(&Error::EmptyList("t")), 4);
        assert_eq!(
            exit_code_for(&Error::InsufficientImages {
                class: "c".into(),
                have: 1,
                need: 2
            }),
            4
        );
    }

    #[test]
    fn splits_runs_in_process() {
        assert_eq!(run(["fewseg", "splits", "--i", "0"]), 0);
        assert_eq!(run(["fewseg", "splits", "--i", "4"]), 2);
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(run(["fewseg", "splits", "--split", "0"]), 2);
        assert_eq!(run(["fewseg", "nonsense"]), 2);
    }
}
