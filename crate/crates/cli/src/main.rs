//! `sgan`: train spatial GAN texture models, generate textures, inspect
//! field sizes and autocorrelation maps.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed files, degenerate input), 3 numeric failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgan_core::analysis::{autocorrelation, write_matrix_dump};
use sgan_core::config::RunConfig;
use sgan_core::fields::{self, make_seamless_plan, make_split_plan, Axis, ChunkGrid, IndexInterval};
use sgan_core::image_io::{load_image, save_gray_rescaled, save_image};
use sgan_core::persist::load_model;
use sgan_core::synthesis::{crop_seamless, generate_grid, seamless_noise, sized_noise, ChunkSchedule};
use sgan_core::trainer::{load_checkpoint, train_loop, Trainer};
use sgan_core::{Error, Tensor};

#[derive(Parser)]
#[command(name = "sgan", version, about = "Spatial GAN texture synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file. Flags override config values.
    Train(TrainArgs),
    /// Generate a texture from a saved model.
    Generate(GenerateArgs),
    /// Print expansion ratio and projective/receptive field sizes.
    Fields(FieldsArgs),
    /// Write the spatial autocorrelation map of an image.
    Autocorr(AutocorrArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of `key = value` lines.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Any config key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Model file written by `train`.
    model: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Produce a texture that tiles without seams.
    #[arg(long)]
    seamless: bool,
    /// Number of row chunks computed independently.
    #[arg(long, default_value_t = 1)]
    chunks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output image (`.png` or `.ppm`).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FieldsArgs {
    /// Number of layers k.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=30))]
    depth: u32,
    /// Noise interval `[a, b)` whose projective field is reported.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    interval: Option<Vec<i64>>,
}

#[derive(Args)]
struct AutocorrArgs {
    image: PathBuf,
    /// Output map image; the matrix dump goes next to it with a `.txt` extension.
    #[arg(short, long)]
    output: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::MissingKey(_) | Error::Divisibility { .. } | Error::Invalid(_) => 1,
        Error::NonFinite { .. } | Error::Graph(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Fields(a) => fields_report(a),
        Command::Autocorr(a) => autocorr(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = RunConfig::load(&a.config)?;
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    let tc = cfg.train_config()?;
    let images = cfg.textures.iter().map(|p| load_image::<f32>(p)).collect::<Result<Vec<_>, _>>()?;
    let paths = cfg.paths();
    let mut trainer = if a.resume {
        let step = paths.latest_step()?;
        let (model, state) = load_checkpoint(&paths, step)?;
        eprintln!("resuming from step {step}");
        Trainer::resume(tc, model, state, images)?
    } else {
        Trainer::new(tc, images)?
    };
    let total = trainer.config.steps;
    let every = trainer.config.checkpoint_every;
    train_loop(&mut trainer, &paths, |l| {
        if l.step % every == 0 || l.step == total {
            eprintln!("step {}/{total}  d_loss {:.4}  g_loss {:.4}", l.step, l.d_loss, l.g_loss);
        }
    })?;
    eprintln!("checkpoints in {}", paths.out_dir.display());
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    let model = load_model(&a.model)?;
    let g = &model.generator;
    let spec = g.spec.clone();
    let (z, seamless) = if a.seamless {
        let plan = make_seamless_plan(a.height, a.width, spec.k, spec.d)?;
        (seamless_noise::<f32>(&plan, a.seed)?, Some(plan))
    } else {
        (sized_noise::<f32>(&spec, a.height, a.width, a.seed)?, None)
    };
    let (l, m) = (z.shape()[0], z.shape()[1]);
    let rows = make_split_plan(l, spec.k, a.chunks.max(1), Axis::Rows)?;
    let grid = ChunkGrid::along(rows, m)?;
    eprintln!("generating {}x{} from {l}x{m} noise in {} chunk(s)", l * spec.ratio(), m * spec.ratio(), grid.rows.chunks.len());
    let mut img = generate_grid(g, &z, &grid, ChunkSchedule::Sequential)?;
    if let Some(plan) = &seamless {
        img = crop_seamless(plan, &img)?;
    }
    save_image(&img, &a.output)
}

fn fields_report(a: FieldsArgs) -> Result<(), Error> {
    let iv = match a.interval.as_deref() {
        Some([x, y]) => IndexInterval::new(*x, *y)?,
        _ => IndexInterval::single(0),
    };
    let k = a.depth;
    let report = format!(
        "depth {k}\nratio {}\npf_size {}\nrf_size {}\ninterval {iv}\npf_interval {}\n",
        fields::ratio(k),
        fields::pf_size(k),
        fields::rf_size(k),
        fields::pf_k_layers(iv, k)
    );
    match std::io::stdout().write_all(report.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn dump_path(output: &Path) -> PathBuf {
    output.with_extension("txt")
}

fn autocorr(a: AutocorrArgs) -> Result<(), Error> {
    let img: Tensor<f64> = load_image(&a.image)?;
    let ac = autocorrelation(&img)?;
    save_gray_rescaled(&ac, &a.output)?;
    let dump = dump_path(&a.output);
    write_matrix_dump(&ac, &dump)?;
    eprintln!("wrote {} and {}", a.output.display(), dump.display());
    Ok(())
}
