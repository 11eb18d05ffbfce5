//! Subcommand implementations behind the `fscn` binary.

use std::path::{Path, PathBuf};

use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::gradcheck::{run_suite, GradCheckConfig, GradCheckReport};
use crate::io::checkpoint::{restore_params, Checkpoint};
use crate::io::dataset::{synth_textures, Dataset, Split};
use crate::io::image::{load_image, save_image};
use crate::maskgen::{generate_mask, Mask, MaskConfig, Preset};
use crate::metrics::MetricReport;
use crate::model::Generator;
use crate::tensor::ParamStore;
use crate::train::{evaluate, image_spectrum, inpaint, run_training, RunLayout, Trainer};

pub const RUN_DIR_ENV: &str = "FSCN_RUN_DIR";

/// Loads the training images a config points at.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let size = cfg.generator.input_size;
    match &cfg.data {
        DataSource::Synth => synth_textures(cfg.data_seed, cfg.data_count, size),
        DataSource::Dir(dir) => Dataset::load_dir(dir, size, Split::Train, cfg.data_seed),
    }
}

/// Output directory: explicit flag, then the environment, then the config.
pub fn resolve_run_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(RUN_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => cfg.run_dir.clone(),
    }
}

pub struct TrainArgs<'a> {
    pub config_file: Option<&'a Path>,
    pub overrides: &'a [String],
    pub run_dir: Option<&'a Path>,
    pub resume: Option<&'a Path>,
}

/// Trains per the resolved config and returns the run directory.
pub fn cmd_train(args: &TrainArgs<'_>) -> Result<PathBuf> {
    let (mut trainer, cfg) = match args.resume {
        Some(ck_path) => {
            let ck = Checkpoint::load(ck_path)?;
            let mut cfg = RunConfig::parse_text(&ck.config_text)?;
            // only the schedule may change on resume
            for o in args.overrides {
                let key = o.split_once('=').map(|(k, _)| k.trim()).unwrap_or("");
                if !matches!(key, "train.iterations" | "train.sample_every" | "train.checkpoint_every" | "run.dir") {
                    return Err(Error::config(format!("{key} cannot be changed when resuming")));
                }
                cfg.apply_override(o)?;
            }
            let mut t = Trainer::from_checkpoint(&ck, load_dataset(&cfg)?)?;
            t.config = cfg.clone();
            (t, cfg)
        }
        None => {
            let mut cfg = match args.config_file {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    RunConfig::parse_text(&text)?
                }
                None => RunConfig::default(),
            };
            for o in args.overrides {
                cfg.apply_override(o)?;
            }
            cfg.validate()?;
            (Trainer::new(cfg.clone(), load_dataset(&cfg)?)?, cfg)
        }
    };
    let dir = resolve_run_dir(args.run_dir, &cfg);
    log::info!("run directory {}", dir.display());
    log::info!("resolved config:\n{}", cfg.to_text());
    let layout = RunLayout::new(&dir);
    run_training(&mut trainer, &layout)?;
    Ok(dir)
}

/// Generator and its parameters from a checkpoint.
pub fn load_generator(path: &Path) -> Result<(Generator, ParamStore, RunConfig)> {
    let ck = Checkpoint::load(path)?;
    let cfg = RunConfig::parse_text(&ck.config_text)?;
    let (gen, mut params) = Generator::init(cfg.generator, 0)?;
    restore_params(&mut params, &ck.generator)?;
    Ok((gen, params, cfg))
}

pub enum MaskSource<'a> {
    File(&'a Path),
    Preset { preset: Preset, seed: u64 },
}

/// Reads a mask image: any pixel above one half (first channel) is a hole.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let t = load_image(path)?;
    let [_, h, w] = *t.shape() else { unreachable!("decoder yields 3×H×W") };
    let plane = crate::tensor::Tensor::from_fn(&[1, h, w], |i| if t.data()[i] > 0.5 { 1.0 } else { 0.0 });
    Mask::from_plane(plane)
}

/// Writes `output.ppm` and `composite.ppm` into `out_dir`.
pub fn cmd_infer(checkpoint: &Path, image: &Path, mask: MaskSource<'_>, out_dir: &Path) -> Result<()> {
    let (gen, params, _) = load_generator(checkpoint)?;
    let img = load_image(image)?;
    let size = gen.spec.input_size;
    let (h, w) = (img.shape()[1], img.shape()[2]);
    if (h, w) != (size, size) {
        return Err(Error::dim(format!(
            "image {} is {h}x{w} but the checkpoint expects {size}x{size}",
            image.display()
        )));
    }
    let mask = match mask {
        MaskSource::File(p) => load_mask(p)?,
        MaskSource::Preset { preset, seed } => generate_mask(&MaskConfig::preset(preset)?, seed, h, w)?,
    };
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::dim(format!(
            "mask is {}x{} but image is {h}x{w}",
            mask.height(),
            mask.width()
        )));
    }
    let (out, comp) = inpaint(&gen, &params, &img, &mask)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_image(&out, &out_dir.join("output.ppm"))?;
    save_image(&comp, &out_dir.join("composite.ppm"))
}

pub enum EvalData<'a> {
    Dir(&'a Path),
    Synth { seed: u64, count: usize },
}

/// Metrics of composited outputs, also written as CSV when `out` is given.
pub fn cmd_eval(checkpoint: &Path, data: EvalData<'_>, preset: Preset, seed: u64, out: Option<&Path>) -> Result<MetricReport> {
    let (gen, params, _) = load_generator(checkpoint)?;
    let size = gen.spec.input_size;
    let ds = match data {
        EvalData::Dir(d) => Dataset::load_dir(d, size, Split::Test, seed)?,
        EvalData::Synth { seed, count } => synth_textures(seed, count, size)?,
    };
    let report = evaluate(&gen, &params, &ds, &MaskConfig::preset(preset)?, seed)?;
    if let Some(p) = out {
        std::fs::write(p, report.to_csv()).map_err(|e| Error::io(p, e))?;
    }
    Ok(report)
}

/// Writes a generated mask as a PGM image (white = hole).
pub fn cmd_mask(config: &MaskConfig, seed: u64, height: usize, width: usize, out: &Path) -> Result<Mask> {
    let mask = generate_mask(config, seed, height, width)?;
    save_image(mask.plane(), out)?;
    Ok(mask)
}

/// Writes the centred log-magnitude spectrum of an image as PGM.
pub fn cmd_spectrum(image: &Path, out: &Path) -> Result<()> {
    let img = load_image(image)?;
    let gray = image_spectrum(&img)?;
    let [h, w] = *gray.shape() else { unreachable!("grayscale is 2-D") };
    save_image(&gray.reshape(&[1, h, w])?, out)
}

pub fn cmd_gradcheck(seeds: u64, filter: Option<&str>) -> Result<Vec<GradCheckReport>> {
    run_suite(seeds, filter, &GradCheckConfig::default())
}
