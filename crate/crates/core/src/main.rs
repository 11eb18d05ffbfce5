use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fscn::commands::{self, EvalData, MaskSource, TrainArgs};
use fscn::maskgen::{MaskConfig, Preset};
use fscn::Error;

#[derive(Parser)]
#[command(name = "fscn", version, about = "Frequency-spatial inpainting network on the CPU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator/discriminator pair.
    Train {
        /// Config file of dotted key=value lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra key=value overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Bottleneck fusion: fscab, concat or none.
        #[arg(long)]
        fusion: Option<String>,
        /// Frequency loss on or off.
        #[arg(long = "freq-loss")]
        freq_loss: Option<String>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides FSCN_RUN_DIR and run.dir).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Inpaint one image with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Mask image; white pixels are holes.
        #[arg(long, conflicts_with = "mask_preset")]
        mask: Option<PathBuf>,
        #[arg(long, default_value = "medium")]
        mask_preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// SSIM, PSNR and log-spectral distance of composited outputs.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of .ppm images; synthetic textures when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 1_000_003)]
        data_seed: u64,
        #[arg(long, default_value = "thin")]
        mask_preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a hole mask as a PGM image.
    Mask {
        #[arg(long, default_value = "thin")]
        preset: Preset,
        /// Preset file overriding --preset.
        #[arg(long)]
        preset_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        /// Print the preset parameters instead of only writing the mask.
        #[arg(long)]
        show: bool,
    },
    /// Write the centred log-magnitude spectrum of an image.
    Spectrum {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Only run checks whose name contains this.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Train {
            config,
            mut overrides,
            fusion,
            freq_loss,
            iterations,
            seed,
            run_dir,
            resume,
        } => {
            let flags = [
                fusion.map(|v| format!("model.fusion={v}")),
                freq_loss.map(|v| format!("loss.frequency={v}")),
                iterations.map(|v| format!("train.iterations={v}")),
                seed.map(|v| format!("train.seed={v}")),
            ];
            overrides.extend(flags.into_iter().flatten());
            let dir = commands::cmd_train(&TrainArgs {
                config_file: config.as_deref(),
                overrides: &overrides,
                run_dir: run_dir.as_deref(),
                resume: resume.as_deref(),
            })?;
            println!("{}", dir.display());
            Ok(true)
        }
        Command::Infer {
            checkpoint,
            image,
            mask,
            mask_preset,
            seed,
            out_dir,
        } => {
            let source = match &mask {
                Some(p) => MaskSource::File(p),
                None => MaskSource::Preset {
                    preset: mask_preset,
                    seed,
                },
            };
            commands::cmd_infer(&checkpoint, &image, source, &out_dir)?;
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            data,
            count,
            data_seed,
            mask_preset,
            seed,
            out,
        } => {
            let data = match &data {
                Some(d) => EvalData::Dir(d),
                None => EvalData::Synth { seed: data_seed, count },
            };
            let report = commands::cmd_eval(&checkpoint, data, mask_preset, seed, out.as_deref())?;
            print!("{}", report.to_csv());
            Ok(true)
        }
        Command::Mask {
            preset,
            preset_file,
            seed,
            size,
            out,
            show,
        } => {
            let cfg = match &preset_file {
                Some(p) => std::fs::read_to_string(p)
                    .map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?
                    .parse::<MaskConfig>()?,
                None => MaskConfig::preset(preset)?,
            };
            let mask = commands::cmd_mask(&cfg, seed, size, size, &out)?;
            if show {
                print!("{}", cfg.to_text());
            }
            println!("coverage {:.6}", mask.coverage());
            Ok(true)
        }
        Command::Spectrum { image, out } => {
            commands::cmd_spectrum(&image, &out)?;
            Ok(true)
        }
        Command::Gradcheck { seeds, filter } => {
            let reports = commands::cmd_gradcheck(seeds, filter.as_deref())?;
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", reports.len());
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
