//! Run configuration: every tunable as a dotted `key=value` line.

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::maskgen::{MaskConfig, Preset};
use crate::model::{DiscriminatorSpec, FusionMode, GeneratorSpec};
use crate::tensor::{AdamConfig, Real};

/// Where training images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synth,
    Dir(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub weights: LossWeights,
    /// Adds perceptual features to the generator objective.
    pub perceptual: bool,
    /// Supervise every pixel instead of only known ones.
    pub whole_image_rec: bool,
    pub g_lr: Real,
    pub d_lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub adam_eps: Real,
    pub mask_preset: Preset,
    /// Preset file used when `mask_preset` is `custom`.
    pub mask_file: Option<PathBuf>,
    pub data: DataSource,
    pub data_count: usize,
    pub data_seed: u64,
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    pub sample_every: u64,
    pub checkpoint_every: u64,
    pub run_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
            weights: LossWeights::default(),
            perceptual: true,
            whole_image_rec: false,
            g_lr: 1e-3,
            d_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mask_preset: Preset::Thin,
            mask_file: None,
            data: DataSource::Synth,
            data_count: 8,
            data_seed: 0,
            seed: 0,
            iterations: 2000,
            batch_size: 8,
            sample_every: 500,
            checkpoint_every: 500,
            run_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected on/off, got {value:?}"))),
    }
}

fn switch(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 30] = [
        "model.base_channels",
        "model.down_blocks",
        "model.up_blocks",
        "model.freq_blocks",
        "model.fusion",
        "model.input_size",
        "disc.layers",
        "disc.base_channels",
        "loss.frequency",
        "loss.lambda_r",
        "loss.lambda_g",
        "loss.lambda_fm",
        "loss.lambda_p",
        "loss.perceptual",
        "loss.whole_image_rec",
        "optim.g_lr",
        "optim.d_lr",
        "optim.beta1",
        "optim.beta2",
        "optim.eps",
        "mask.preset",
        "mask.file",
        "data.source",
        "data.count",
        "data.seed",
        "train.seed",
        "train.iterations",
        "train.batch_size",
        "train.sample_every",
        "train.checkpoint_every",
    ];

    /// Sets one dotted key. `run.dir` is accepted too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "model.base_channels" => self.generator.base_channels = parse(key, v)?,
            "model.down_blocks" => self.generator.down_blocks = parse(key, v)?,
            "model.up_blocks" => self.generator.up_blocks = parse(key, v)?,
            "model.freq_blocks" => self.generator.freq_blocks = parse(key, v)?,
            "model.fusion" => self.generator.fusion = FusionMode::from_str(v)?,
            "model.input_size" => self.generator.input_size = parse(key, v)?,
            "disc.layers" => self.discriminator.layers = parse(key, v)?,
            "disc.base_channels" => self.discriminator.base_channels = parse(key, v)?,
            "loss.frequency" => self.weights.frequency = if parse_switch(key, v)? { 1.0 } else { 0.0 },
            "loss.lambda_r" => self.weights.rec = parse(key, v)?,
            "loss.lambda_g" => self.weights.adv = parse(key, v)?,
            "loss.lambda_fm" => self.weights.fm = parse(key, v)?,
            "loss.lambda_p" => self.weights.perceptual = parse(key, v)?,
            "loss.perceptual" => self.perceptual = parse_switch(key, v)?,
            "loss.whole_image_rec" => self.whole_image_rec = parse_switch(key, v)?,
            "optim.g_lr" => self.g_lr = parse(key, v)?,
            "optim.d_lr" => self.d_lr = parse(key, v)?,
            "optim.beta1" => self.beta1 = parse(key, v)?,
            "optim.beta2" => self.beta2 = parse(key, v)?,
            "optim.eps" => self.adam_eps = parse(key, v)?,
            "mask.preset" => self.mask_preset = Preset::from_str(v)?,
            "mask.file" => self.mask_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.source" => {
                self.data = match v {
                    "synth" => DataSource::Synth,
                    "" => return Err(Error::config("data.source: empty value")),
                    dir => DataSource::Dir(PathBuf::from(dir)),
                }
            }
            "data.count" => self.data_count = parse(key, v)?,
            "data.seed" => self.data_seed = parse(key, v)?,
            "train.seed" => self.seed = parse(key, v)?,
            "train.iterations" => self.iterations = parse(key, v)?,
            "train.batch_size" => self.batch_size = parse(key, v)?,
            "train.sample_every" => self.sample_every = parse(key, v)?,
            "train.checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "run.dir" => self.run_dir = PathBuf::from(v),
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    /// Parses a config file on top of the defaults.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k, v).map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 || self.data_count == 0 {
            return Err(Error::config("batch size and data count must be positive"));
        }
        if self.mask_preset == Preset::Custom && self.mask_file.is_none() {
            return Err(Error::config("mask.preset=custom needs mask.file"));
        }
        for lr in [self.g_lr, self.d_lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("learning rates must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    pub fn mask_config(&self) -> Result<MaskConfig> {
        match (&self.mask_preset, &self.mask_file) {
            (Preset::Custom, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse()
            }
            (preset, _) => MaskConfig::preset(*preset),
        }
    }

    pub fn gen_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.g_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn disc_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.d_lr,
            ..self.gen_adam()
        }
    }

    /// Every key in a fixed order, excluding the output directory so that the
    /// text (and checkpoints embedding it) do not depend on where a run lives.
    pub fn to_text(&self) -> String {
        let g = &self.generator;
        let w = &self.weights;
        let values: [String; 30] = [
            g.base_channels.to_string(),
            g.down_blocks.to_string(),
            g.up_blocks.to_string(),
            g.freq_blocks.to_string(),
            g.fusion.to_string(),
            g.input_size.to_string(),
            self.discriminator.layers.to_string(),
            self.discriminator.base_channels.to_string(),
            switch(w.frequency != 0.0).to_string(),
            format!("{:?}", w.rec),
            format!("{:?}", w.adv),
            format!("{:?}", w.fm),
            format!("{:?}", w.perceptual),
            switch(self.perceptual).to_string(),
            switch(self.whole_image_rec).to_string(),
            format!("{:?}", self.g_lr),
            format!("{:?}", self.d_lr),
            format!("{:?}", self.beta1),
            format!("{:?}", self.beta2),
            format!("{:?}", self.adam_eps),
            self.mask_preset.to_string(),
            self.mask_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            match &self.data {
                DataSource::Synth => "synth".to_string(),
                DataSource::Dir(p) => p.display().to_string(),
            },
            self.data_count.to_string(),
            self.data_seed.to_string(),
            self.seed.to_string(),
            self.iterations.to_string(),
            self.batch_size.to_string(),
            self.sample_every.to_string(),
            self.checkpoint_every.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("model.fusion", "concat").unwrap();
        cfg.set("loss.frequency", "off").unwrap();
        cfg.set("optim.g_lr", "0.0005").unwrap();
        cfg.set("data.source", "/tmp/images").unwrap();
        let back = RunConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back.to_text(), cfg.to_text());
        assert_eq!(back.generator.fusion, FusionMode::Concat);
        assert_eq!(back.weights.frequency, 0.0);
        assert_eq!(back.data, DataSource::Dir("/tmp/images".into()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse_text("model.base_chanels=8\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(RunConfig::default().apply_override("train.seed").is_err());
        assert!(RunConfig::parse_text("loss.frequency=maybe").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let defaults = RunConfig::default().to_text();
        let mut cfg = RunConfig::default();
        for line in defaults.lines() {
            cfg.apply_override(line).unwrap();
        }
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let mut cfg = RunConfig::default();
        cfg.set("mask.preset", "custom").unwrap();
        assert!(cfg.validate().is_err());
    }
}
