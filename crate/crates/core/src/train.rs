//! Alternating discriminator/generator training, evaluation and inference.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::checkpoint::{restore_params, Checkpoint, RngState};
use crate::io::image::{save_image, tile_column, tile_row};
use crate::io::Dataset;
use crate::losses::{
    adv_d_loss, adv_g_loss, fm_loss, perceptual_loss, rec_loss, total_loss, LossReport, LossTerms,
    PerceptualExtractor, PERCEPTUAL_SEED,
};
use crate::maskgen::{generate_mask, Mask, MaskConfig};
use crate::metrics::{ImageMetrics, MetricReport};
use crate::model::{composite, Discriminator, Generator, InpaintSample};
use crate::spectral::{dft2, frequency_loss, spectrum_to_grayscale, ComplexSpectrum, LogSpectrumConfig};
use crate::tensor::{AdamState, Graph, ParamStore, Tensor};

/// Stream of the training RNG (batch masks).
const TRAIN_STREAM: u64 = 7;

fn derive(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A batch in network layout.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ground_truth: Tensor,
    pub input: Tensor,
    pub mask: Tensor,
}

impl Batch {
    pub fn from_samples(samples: &[InpaintSample]) -> Result<Self> {
        let gts: Vec<Tensor> = samples.iter().map(|s| s.ground_truth.clone()).collect();
        let ins: Vec<Tensor> = samples.iter().map(|s| s.input.clone()).collect();
        let ms: Vec<Tensor> = samples.iter().map(|s| s.mask.plane().clone()).collect();
        Ok(Self {
            ground_truth: Tensor::stack(&gts)?,
            input: Tensor::stack(&ins)?,
            mask: Tensor::stack(&ms)?,
        })
    }
}

/// Everything that evolves during training.
pub struct Trainer {
    pub config: RunConfig,
    pub generator: Generator,
    pub gen_params: ParamStore,
    pub gen_opt: AdamState,
    pub discriminator: Discriminator,
    pub disc_params: ParamStore,
    pub disc_opt: AdamState,
    pub perceptual: PerceptualExtractor,
    pub masks: MaskConfig,
    pub dataset: Dataset,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

/// Tensors produced by one step, kept for sample grids.
pub struct StepOutput {
    pub report: LossReport,
    pub batch: Batch,
    pub output: Tensor,
    pub spectrum: ComplexSpectrum,
}

impl Trainer {
    pub fn new(config: RunConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::config("training dataset is empty"));
        }
        let size = config.generator.input_size;
        if dataset.size() != Some(size) {
            return Err(Error::dim(format!(
                "dataset images are {:?} pixels wide, model expects {size}",
                dataset.size()
            )));
        }
        let (generator, gen_params) = Generator::init(config.generator, derive(config.seed, 1))?;
        let (discriminator, disc_params) = Discriminator::init(config.discriminator, derive(config.seed, 2))?;
        let gen_opt = AdamState::new(config.gen_adam(), &gen_params);
        let disc_opt = AdamState::new(config.disc_adam(), &disc_params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self {
            masks: config.mask_config()?,
            perceptual: PerceptualExtractor::new(PERCEPTUAL_SEED)?,
            config,
            generator,
            gen_params,
            gen_opt,
            discriminator,
            disc_params,
            disc_opt,
            dataset,
            rng,
            step: 0,
        })
    }

    /// Rebuilds a trainer from a checkpoint; the dataset is supplied again.
    pub fn from_checkpoint(ck: &Checkpoint, dataset: Dataset) -> Result<Self> {
        let config = RunConfig::parse_text(&ck.config_text)?;
        let mut t = Self::new(config, dataset)?;
        restore_params(&mut t.gen_params, &ck.generator)?;
        restore_params(&mut t.disc_params, &ck.discriminator)?;
        t.gen_opt = ck.gen_opt.clone();
        t.disc_opt = ck.disc_opt.clone();
        t.rng = ck.rng.restore();
        t.step = ck.step;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_text: self.config.to_text(),
            step: self.step,
            rng: RngState::capture(&self.rng),
            generator: self.gen_params.clone(),
            discriminator: self.disc_params.clone(),
            gen_opt: self.gen_opt.clone(),
            disc_opt: self.disc_opt.clone(),
        }
    }

    /// Batch `k` takes positions `[k·B, (k+1)·B)` of the concatenated
    /// per-epoch permutations, so it depends only on the step; hole masks
    /// are drawn from the training RNG.
    fn next_batch(&mut self) -> Result<Batch> {
        let n = self.dataset.len() as u64;
        let bs = self.config.batch_size as u64;
        let size = self.config.generator.input_size;
        let mut samples = Vec::with_capacity(bs as usize);
        let mut epoch_cache: Option<(u64, Vec<usize>)> = None;
        for j in 0..bs {
            let pos = self.step * bs + j;
            let epoch = pos / n;
            if epoch_cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
                epoch_cache = Some((epoch, self.dataset.order(epoch)));
            }
            let order = &epoch_cache.as_ref().expect("filled above").1;
            let img = self.dataset.images[order[(pos % n) as usize]].clone();
            let mask = generate_mask(&self.masks, self.rng.random(), size, size)?;
            samples.push(InpaintSample::new(img, mask)?);
        }
        Batch::from_samples(&samples)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self) -> Result<StepOutput> {
        let batch = self.next_batch()?;
        let step = self.step + 1;
        let mut g = Graph::new();
        let gt = g.constant(batch.ground_truth.clone());
        let input = g.constant(batch.input.clone());
        let mask = g.constant(batch.mask.clone());
        let out = self
            .generator
            .forward(&mut g, &self.gen_params.trainable(), input, mask)?;

        // discriminator on the detached fake
        let fake_fixed = g.detach(out.image);
        let d_view = self.disc_params.trainable();
        let d_real = self.discriminator.forward(&mut g, &d_view, gt)?;
        let d_fake = self.discriminator.forward(&mut g, &d_view, fake_fixed)?;
        let l_d = adv_d_loss(&mut g, d_real.logits, d_fake.logits)?;
        let adv_d = g.value(l_d).item()?;
        if !adv_d.is_finite() {
            return Err(Error::NonFinite(format!("discriminator loss at step {step}")));
        }
        self.disc_params.zero_grads();
        g.backward_into(l_d, &mut self.disc_params)?;

        // generator against the updated, frozen discriminator
        let mut disc_next = self.disc_params.clone();
        let mut disc_opt_next = self.disc_opt.clone();
        disc_opt_next.step(&mut disc_next)?;
        let d_view = disc_next.frozen();
        let d_real = self.discriminator.forward(&mut g, &d_view, gt)?;
        let d_fake = self.discriminator.forward(&mut g, &d_view, out.image)?;
        let fre = frequency_loss(&mut g, &out.spectrum, gt, LogSpectrumConfig::default())?;
        let rec = rec_loss(&mut g, gt, out.image, &batch.mask, self.config.whole_image_rec)?;
        let adv_g = adv_g_loss(&mut g, d_fake.logits);
        let fm = fm_loss(&mut g, &d_real.features, &d_fake.features)?;
        let perc = if self.config.perceptual {
            perceptual_loss(&mut g, &self.perceptual, gt, out.image)?
        } else {
            g.constant(Tensor::scalar(0.0))
        };
        let total = total_loss(&mut g, [fre, rec, adv_g, fm, perc], &self.config.weights)?;
        let terms = LossTerms {
            fre: g.value(fre).item()?,
            rec: g.value(rec).item()?,
            adv_g: g.value(adv_g).item()?,
            fm: g.value(fm).item()?,
            perc: g.value(perc).item()?,
        };
        let report = LossReport::new(step, terms, adv_d, &self.config.weights);
        if !report.is_finite() || !g.value(total).item()?.is_finite() {
            return Err(Error::NonFinite(format!("generator losses at step {step}: {report:?}")));
        }
        self.gen_params.zero_grads();
        g.backward_into(total, &mut self.gen_params)?;
        let mut gen_next = self.gen_params.clone();
        let mut gen_opt_next = self.gen_opt.clone();
        gen_opt_next.step(&mut gen_next)?;
        if gen_next.iter().chain(disc_next.iter()).any(|p| !p.value.is_finite()) {
            return Err(Error::NonFinite(format!("parameters after step {step}")));
        }
        self.disc_params = disc_next;
        self.disc_opt = disc_opt_next;
        self.gen_params = gen_next;
        self.gen_opt = gen_opt_next;
        self.step = step;
        let spectrum = out.spectrum.value(&g);
        Ok(StepOutput {
            report,
            output: g.value(out.image).clone(),
            spectrum,
            batch,
        })
    }
}

/// Runs the generator on one holed image and returns `(output, composite)`.
pub fn inpaint(generator: &Generator, params: &ParamStore, image: &Tensor, mask: &Mask) -> Result<(Tensor, Tensor)> {
    let sample = InpaintSample::new(image.clone(), mask.clone())?;
    let batch = Batch::from_samples(std::slice::from_ref(&sample))?;
    let (out, comp) = inpaint_batch(generator, params, &batch)?;
    Ok((out.index_outer(0)?, comp.index_outer(0)?))
}

/// Batched generator pass with frozen parameters.
pub fn inpaint_batch(generator: &Generator, params: &ParamStore, batch: &Batch) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let input = g.constant(batch.input.clone());
    let mask = g.constant(batch.mask.clone());
    let out = generator.forward(&mut g, &params.frozen(), input, mask)?;
    let image = g.value(out.image).clone();
    let comp = composite(&image, &batch.input, &batch.mask)?;
    Ok((image, comp))
}

/// Mask seed of image `i` in an evaluation pass.
pub fn eval_mask_seed(seed: u64, i: usize) -> u64 {
    derive(seed, 1000 + i as u64)
}

/// Metrics of the composited outputs on `dataset`, one seeded mask per image.
pub fn evaluate(
    generator: &Generator,
    params: &ParamStore,
    dataset: &Dataset,
    masks: &MaskConfig,
    seed: u64,
) -> Result<MetricReport> {
    let size = generator.spec.input_size;
    let mut report = MetricReport::default();
    const CHUNK: usize = 8;
    for start in (0..dataset.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(dataset.len());
        let mut samples = Vec::with_capacity(end - start);
        for i in start..end {
            let mask = generate_mask(masks, eval_mask_seed(seed, i), size, size)?;
            samples.push(InpaintSample::new(dataset.images[i].clone(), mask)?);
        }
        let batch = Batch::from_samples(&samples)?;
        let (_, comp) = inpaint_batch(generator, params, &batch)?;
        for (k, i) in (start..end).enumerate() {
            report.push(ImageMetrics::compute(
                dataset.ids[i].clone(),
                &comp.index_outer(k)?,
                &dataset.images[i],
            )?);
        }
    }
    Ok(report)
}

/// Grid with one row per sample (at most four): input, mask, output,
/// composite, predicted spectrum.
pub fn sample_grid(step: &StepOutput) -> Result<Tensor> {
    let b = step.batch.input.shape()[0].min(4);
    let comp = composite(&step.output, &step.batch.input, &step.batch.mask)?;
    let mut rows = Vec::with_capacity(b);
    for i in 0..b {
        let spec = ComplexSpectrum::new(step.spectrum.re.index_outer(i)?, step.spectrum.im.index_outer(i)?)?;
        let gray = spectrum_to_grayscale(&spec)?;
        let [h, w] = *gray.shape() else { unreachable!("grayscale is 2-D") };
        rows.push(tile_row(&[
            step.batch.input.index_outer(i)?,
            step.batch.mask.index_outer(i)?,
            step.output.index_outer(i)?,
            comp.index_outer(i)?,
            gray.reshape(&[1, h, w])?,
        ])?);
    }
    tile_column(&rows)
}

/// Files written by [`run_training`].
#[derive(Clone, Debug)]
pub struct RunLayout {
    pub dir: PathBuf,
}

impl RunLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.txt")
    }

    pub fn losses(&self) -> PathBuf {
        self.dir.join("losses.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.bin")
    }

    pub fn samples(&self) -> PathBuf {
        self.dir.join("samples")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Trains until `config.iterations`, writing the resolved config, the loss
/// CSV, sample grids and checkpoints into `layout`. A non-finite loss stops
/// the run; the last checkpoint written stays untouched.
pub fn run_training(trainer: &mut Trainer, layout: &RunLayout) -> Result<Vec<LossReport>> {
    std::fs::create_dir_all(layout.samples()).map_err(io_err(&layout.samples()))?;
    let cfg_path = layout.config();
    std::fs::write(&cfg_path, trainer.config.to_text()).map_err(io_err(&cfg_path))?;
    let loss_path = layout.losses();
    let resuming = trainer.step > 0 && loss_path.exists();
    let file = if resuming {
        truncate_log(&loss_path, trainer.step)?;
        std::fs::OpenOptions::new().append(true).open(&loss_path)
    } else {
        File::create(&loss_path)
    }
    .map_err(io_err(&loss_path))?;
    let mut log = BufWriter::new(file);
    if !resuming {
        writeln!(log, "{}", LossReport::CSV_HEADER).map_err(io_err(&loss_path))?;
    }
    let mut reports = Vec::new();
    while trainer.step < trainer.config.iterations {
        let out = match trainer.train_step() {
            Ok(o) => o,
            Err(e) => {
                log.flush().map_err(io_err(&loss_path))?;
                return Err(e);
            }
        };
        writeln!(log, "{}", out.report.to_csv_row()).map_err(io_err(&loss_path))?;
        let s = trainer.step;
        if s.is_multiple_of(50) || s == 1 {
            log::info!(
                "step {s}: fre={:.4} rec={:.4} adv_d={:.4} adv_g={:.4} fm={:.4} perc={:.4} total={:.4}",
                out.report.fre,
                out.report.rec,
                out.report.adv_d,
                out.report.adv_g,
                out.report.fm,
                out.report.perc,
                out.report.total
            );
        }
        let last = s == trainer.config.iterations;
        if trainer.config.sample_every > 0 && (s.is_multiple_of(trainer.config.sample_every) || last) {
            save_image(&sample_grid(&out)?, &layout.samples().join(format!("step{s:06}.ppm")))?;
        }
        if (trainer.config.checkpoint_every > 0 && s.is_multiple_of(trainer.config.checkpoint_every)) || last {
            log.flush().map_err(io_err(&loss_path))?;
            trainer.checkpoint().save(&layout.checkpoint())?;
        }
        reports.push(out.report);
    }
    log.flush().map_err(io_err(&loss_path))?;
    Ok(reports)
}

/// Drops log rows after `step` so a resumed run appends cleanly.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            kept.push_str(line);
            kept.push('\n');
            continue;
        }
        let row = LossReport::from_csv_row(line)?;
        if row.step <= step {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(io_err(path))
}

/// Spectrum of an image, for visualization.
pub fn image_spectrum(image: &Tensor) -> Result<Tensor> {
    spectrum_to_grayscale(&dft2(image)?)
}
