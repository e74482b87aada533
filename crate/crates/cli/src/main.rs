use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hint_core::data::{
    generate_mask, load_image, load_mask, save_image, Bucket, Dataset, MaskSpec,
};
use hint_core::nn::Module;
use hint_core::train::config::describe;
use hint_core::train::trainer::{evaluate, inpaint, write_eval_csv, BucketMetrics, StepLog};
use hint_core::train::{run_ablation, train, TrainConfig, TrainState, Variant};
use hint_core::{selftest, Error, HintModel, Result};

#[derive(Parser)]
#[command(name = "hint", version, about = "Mask-aware inpainting transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file on a directory of images.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a training checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print a log line every this many steps.
        #[arg(long, default_value_t = 10)]
        log_every: u64,
    },
    /// Fill the missing region of one image.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// PGM mask, white = visible.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint per mask bucket.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "small,medium,large")]
        buckets: Vec<String>,
        /// Generated masks per image and bucket.
        #[arg(long, default_value_t = 1)]
        masks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train one variant (or `all`) under the same config and append to ablation.csv.
    Ablate {
        #[arg(long)]
        variant: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in invariant checks.
    Selftest,
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write one mask per image from this bucket.
        #[arg(long)]
        bucket: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Validation(_) | Error::Generation(_) => 2,
        Error::Numerics(_) => 3,
        Error::Io { .. } | Error::Format(_) | Error::Unsupported(_) => 4,
    }
}

fn print_step(s: &StepLog) {
    println!(
        "step {:6}  lr {:.2e}  total {:.5}  l1 {:.5}  style {:.5}  perc {:.5}  adv {:.4}  disc {:.4}",
        s.step, s.lr, s.total, s.l1, s.style, s.perceptual, s.adversarial, s.disc
    );
}

fn print_table(rows: &[BucketMetrics]) {
    println!(
        "{:8} {:>6} {:>9} {:>7} {:>8} {:>10}",
        "bucket", "images", "psnr", "ssim", "l1", "masked_l1"
    );
    for r in rows {
        println!(
            "{:8} {:>6} {:>9.3} {:>7.4} {:>8.5} {:>10.5}",
            r.bucket.as_str(),
            r.images,
            r.psnr,
            r.ssim,
            r.l1,
            r.masked_l1
        );
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let mut c = TrainConfig::load(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            config,
            data,
            out,
            seed,
            resume,
            log_every,
        } => {
            let data = Dataset::load(&data)?;
            let state = match resume {
                Some(ck) => TrainState::load(&ck)?,
                None => TrainState::new(&load_config(&config, seed)?)?,
            };
            println!("{}", describe(&state.config));
            println!(
                "{} images, {} parameters, starting at step {}",
                data.len(),
                state.model.num_parameters(),
                state.step
            );
            let every = log_every.max(1);
            let total = state.config.steps;
            let outcome = train(state, &data, &out, &mut |s| {
                if s.step % every == 0 || s.step == total {
                    print_step(s);
                }
            })?;
            print_table(&outcome.eval);
            println!("wrote {}", out.display());
        }
        Command::Infer {
            ckpt,
            image,
            mask,
            out,
        } => {
            let model = HintModel::load(&ckpt)?;
            let img = load_image(&image)?;
            let m = load_mask(&mask)?;
            save_image(&inpaint(&model, &img, &m)?, &out)?;
        }
        Command::Eval {
            ckpt,
            data,
            buckets,
            masks,
            seed,
            csv,
        } => {
            let model = HintModel::load(&ckpt)?;
            let data = Dataset::load(&data)?;
            let buckets = buckets
                .iter()
                .map(|b| Bucket::parse(b.trim()))
                .collect::<Result<Vec<_>>>()?;
            let rows = evaluate(&model, &data, &buckets, masks, seed)?;
            print_table(&rows);
            if let Some(p) = csv {
                write_eval_csv(&p, &rows)?;
            }
        }
        Command::Ablate {
            variant,
            config,
            data,
            out,
            seed,
        } => {
            let base = load_config(&config, seed)?;
            let data = Dataset::load(&data)?;
            let variants = if variant == "all" {
                Variant::ALL.to_vec()
            } else {
                variant
                    .split(',')
                    .map(|v| Variant::parse(v.trim()))
                    .collect::<Result<_>>()?
            };
            for v in variants {
                let r = run_ablation(&base, v, &data, &out)?;
                println!("{} ({} parameters)", v.name(), r.parameters);
                print_table(&r.eval);
            }
            println!("wrote {}", out.join("ablation.csv").display());
        }
        Command::Selftest => {
            let results = selftest::run_all();
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            if failed > 0 {
                return Err(Error::Numerics(format!("{failed} self-test checks failed")));
            }
        }
        Command::Synth {
            out,
            count,
            size,
            seed,
            bucket,
        } => {
            let mut ds = Dataset::synthetic(count, size, seed);
            if let Some(b) = bucket {
                let b = Bucket::parse(&b)?;
                for (i, s) in ds.samples.iter_mut().enumerate() {
                    s.mask = Some(generate_mask(
                        &MaskSpec::bucket(b, seed ^ (i as u64 + 1)),
                        size,
                        size,
                    )?);
                }
            }
            ds.save(&out)?;
            println!("wrote {count} images to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hint: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
