use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use srp::analysis::image::{gray_image, heat_image, load_input};
use srp::analysis::{
    area_ratio_csv, area_ratio_curve, default_layer, descriptor_similarity, dump_feature_maps,
    gradcam, network_area_ratio_curve, FeatureBranch,
};
use srp::harness::train::{metrics_csv, METRICS_HEADER};
use srp::harness::{
    default_cifar_dir, evaluate, load_cifar, load_test, train, Checkpoint, RunConfig,
};
use srp::srp::{Schedule, SrpConfig};
use srp::{Error, Result};

#[derive(Parser)]
#[command(name = "srp", version, about = "Stochastic region pooling for channel-attention networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write `metrics.csv` and `model.srpc` to the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// CIFAR-10 binary directory (default: $SRP_CIFAR_DIR).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print eval-mode top-1 accuracy on the test split as `top1=<float>`.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use only the first N test records.
        #[arg(long)]
        subset: Option<usize>,
    },
    /// Write a Grad-CAM heatmap as a P6 image.
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        /// 32x32 `.ppm` image or CIFAR batch file.
        #[arg(long)]
        input: PathBuf,
        /// Record index when `--input` is a batch file.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        class: usize,
        /// Convolution output name (default: the last convolution).
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the first channels of one block branch as a grid image.
    DumpFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        block: usize,
        /// `identity` or `residual`.
        #[arg(long, default_value = "residual")]
        branch: String,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo covered-area ratio per block, as CSV.
    AreaRatio {
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 0.6)]
        lambda: f64,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 10000)]
        trials: usize,
        /// Number of attention blocks sharing the feature size.
        #[arg(long, default_value_t = 1)]
        blocks: usize,
        /// `fixed` or `linear`.
        #[arg(long, default_value = "linear")]
        schedule: String,
        /// Use the block sizes and pooling settings of this run config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean pairwise cosine of residual channel descriptors over a probe batch.
    Similarity {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        block: Option<usize>,
        #[arg(long, default_value_t = 256)]
        probe: usize,
        /// Append a CSV row here (header written for a new file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| match e {
        Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            seed,
        } => {
            let mut run = read_config(&config)?;
            if let Some(s) = seed {
                run.train.seed = s;
            }
            let dir = data.unwrap_or_else(default_cifar_dir);
            let cifar = load_cifar(&dir, run.train.train_subset, run.train.test_subset)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
            eprintln!("{METRICS_HEADER}");
            let outcome = train(&run, &cifar, |m| eprintln!("{}", m.csv_line()))?;
            write(&out.join("metrics.csv"), metrics_csv(&outcome.metrics).as_bytes())?;
            Checkpoint {
                model: outcome.model,
                run: run.clone(),
                epoch: run.train.epochs,
                seed: run.train.seed,
            }
            .save(&out.join("model.srpc"))
        }
        Command::Eval {
            checkpoint,
            data,
            subset,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let dir = data.unwrap_or_else(default_cifar_dir);
            let test = load_test(&dir, subset, &ck.model.norm)?;
            println!("top1={}", evaluate(&ck.model, &test)?);
            Ok(())
        }
        Command::Gradcam {
            checkpoint,
            input,
            index,
            class,
            layer,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let image = load_input(&input, index)?;
            let layer = layer.unwrap_or_else(|| default_layer(&ck.model));
            let hm = gradcam(&ck.model, &image, class, &layer)?;
            write(&out, &heat_image(hm.width, hm.height, &hm.values).to_ppm())
        }
        Command::DumpFeatures {
            checkpoint,
            input,
            index,
            block,
            branch,
            count,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let image = load_input(&input, index)?;
            let branch: FeatureBranch = branch.parse()?;
            let grid = dump_feature_maps(&ck.model, &image, block, branch, count)?;
            write(&out, &gray_image(grid.width(), grid.height(), &grid.values).to_ppm())
        }
        Command::AreaRatio {
            height,
            width,
            lambda,
            m,
            trials,
            blocks,
            schedule,
            config,
            seed,
            out,
        } => {
            let rows = match config {
                Some(path) => network_area_ratio_curve(&read_config(&path)?.net, trials, seed)?,
                None => {
                    let cfg = SrpConfig::multi_square()
                        .with_lambda(lambda)
                        .with_regions(m)
                        .with_schedule(schedule.parse::<Schedule>()?);
                    if blocks == 0 || height == 0 || width == 0 {
                        return Err(Error::config("--blocks, --height and --width must be positive"));
                    }
                    area_ratio_curve(&vec![(height, width); blocks], &cfg, trials, seed)?
                }
            };
            write(&out, area_ratio_csv(&rows).as_bytes())
        }
        Command::Similarity {
            checkpoint,
            data,
            block,
            probe,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let dir = data.unwrap_or_else(default_cifar_dir);
            let raw = srp::harness::data::read_batch(
                &dir.join(srp::harness::data::TEST_FILE),
                Some(probe.max(2)),
            )?;
            let block = block.unwrap_or(ck.model.net.blocks().len() - 1);
            let sim = descriptor_similarity(&ck.model, &raw.images, block)?;
            let cfg = &ck.model.net.cfg;
            let row = format!(
                "{},{},{},{},{},{:.6}",
                checkpoint.display(),
                cfg.attention,
                cfg.srp.mode,
                block,
                raw.len(),
                sim
            );
            println!("similarity={sim:.6}");
            if let Some(path) = out {
                let fresh = !path.exists();
                let mut f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
                let mut text = String::new();
                if fresh {
                    text.push_str("checkpoint,attention,srp_mode,block,probe,similarity\n");
                }
                text.push_str(&row);
                text.push('\n');
                f.write_all(text.as_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
