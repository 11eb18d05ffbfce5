//! Seeded irregular hole masks: polygonal brush chains plus boxes.
//!
//! A mask is a binary 1×H×W plane with 1 marking a hole. Generation is a
//! pure function of `(config, seed, H, W)`; empty or full draws are
//! re-rolled from a derived seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const PRESET_VERSION: u32 = 1;
pub const MIN_EXTENT: usize = 16;
const MAX_REROLLS: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Thin,
    Medium,
    Thick,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Thin => "thin",
            Preset::Medium => "medium",
            Preset::Thick => "thick",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thin" => Ok(Preset::Thin),
            "medium" => Ok(Preset::Medium),
            "thick" => Ok(Preset::Thick),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::config(format!(
                "unknown mask preset {other:?} (expected thin, medium, thick or custom)"
            ))),
        }
    }
}

/// Parameters of the mask sampler. Lengths and widths are in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskConfig {
    pub preset: Preset,
    pub chain_probability: f64,
    pub segments_min: u32,
    pub segments_max: u32,
    pub segment_length_max: u32,
    pub segment_width_max: u32,
    pub boxes_min: u32,
    pub boxes_max: u32,
    pub box_side_min: u32,
    pub box_side_max: u32,
}

const THIN: &str = include_str!("../presets/thin.preset");
const MEDIUM: &str = include_str!("../presets/medium.preset");
const THICK: &str = include_str!("../presets/thick.preset");

impl MaskConfig {
    /// Shipped parameters of a named preset.
    pub fn preset(preset: Preset) -> Result<Self> {
        let text = match preset {
            Preset::Thin => THIN,
            Preset::Medium => MEDIUM,
            Preset::Thick => THICK,
            Preset::Custom => {
                return Err(Error::config("the custom preset has no shipped values"))
            }
        };
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("mask config: {m}")));
        if !(0.0..=1.0).contains(&self.chain_probability) {
            return bad("chain_probability must lie in [0, 1]");
        }
        if self.segments_min > self.segments_max {
            return bad("segments_min > segments_max");
        }
        if self.boxes_min > self.boxes_max {
            return bad("boxes_min > boxes_max");
        }
        if self.box_side_min > self.box_side_max {
            return bad("box_side_min > box_side_max");
        }
        if self.segment_length_max < 1 || self.segment_width_max < 1 || self.box_side_min < 1 {
            return bad("lengths and widths must be >= 1");
        }
        let can_draw_chain = self.chain_probability > 0.0 && self.segments_max > 0;
        if !can_draw_chain && self.boxes_max == 0 {
            return bad("config can only produce empty masks");
        }
        Ok(())
    }

    /// Plain-text `key=value` form accepted by [`FromStr`].
    pub fn to_text(&self) -> String {
        format!(
            "version={PRESET_VERSION}\npreset={}\nchain_probability={}\nsegments_min={}\nsegments_max={}\n\
             segment_length_max={}\nsegment_width_max={}\nboxes_min={}\nboxes_max={}\n\
             box_side_min={}\nbox_side_max={}\n",
            self.preset,
            self.chain_probability,
            self.segments_min,
            self.segments_max,
            self.segment_length_max,
            self.segment_width_max,
            self.boxes_min,
            self.boxes_max,
            self.box_side_min,
            self.box_side_max,
        )
    }
}

impl FromStr for MaskConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = MaskConfig {
            preset: Preset::Custom,
            chain_probability: 0.0,
            segments_min: 0,
            segments_max: 0,
            segment_length_max: 1,
            segment_width_max: 1,
            boxes_min: 0,
            boxes_max: 0,
            box_side_min: 1,
            box_side_max: 1,
        };
        let mut seen_version = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("mask preset line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let int = || {
                value.parse::<u32>().map_err(|_| {
                    Error::config(format!("mask preset line {}: {key} expects an integer", lineno + 1))
                })
            };
            match key {
                "version" => {
                    if int()? != PRESET_VERSION {
                        return Err(Error::config(format!(
                            "mask preset version {value} unsupported (expected {PRESET_VERSION})"
                        )));
                    }
                    seen_version = true;
                }
                "preset" => cfg.preset = value.parse()?,
                "chain_probability" => {
                    cfg.chain_probability = value.parse().map_err(|_| {
                        Error::config(format!("mask preset line {}: bad probability", lineno + 1))
                    })?
                }
                "segments_min" => cfg.segments_min = int()?,
                "segments_max" => cfg.segments_max = int()?,
                "segment_length_max" => cfg.segment_length_max = int()?,
                "segment_width_max" => cfg.segment_width_max = int()?,
                "boxes_min" => cfg.boxes_min = int()?,
                "boxes_max" => cfg.boxes_max = int()?,
                "box_side_min" => cfg.box_side_min = int()?,
                "box_side_max" => cfg.box_side_max = int()?,
                other => {
                    return Err(Error::config(format!(
                        "mask preset line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if !seen_version {
            return Err(Error::config("mask preset is missing its version line"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Binary hole mask, `1 = hole`, stored as a 1×H×W plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    plane: Tensor,
}

impl Mask {
    /// Wraps a 1×H×W (or H×W) plane; every value must be 0 or 1.
    pub fn from_plane(plane: Tensor) -> Result<Self> {
        let plane = match *plane.shape() {
            [1, _, _] => plane,
            [h, w] => plane.reshape(&[1, h, w])?,
            _ => {
                return Err(Error::dim(format!(
                    "mask plane must be 1xHxW, got {:?}",
                    plane.shape()
                )))
            }
        };
        if plane.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::contract("mask values must be exactly 0 or 1"));
        }
        Ok(Self { plane })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            plane: Tensor::zeros(&[1, h, w]),
        }
    }

    pub fn plane(&self) -> &Tensor {
        &self.plane
    }

    pub fn height(&self) -> usize {
        self.plane.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.plane.shape()[2]
    }

    /// Fraction of pixels that are holes.
    pub fn coverage(&self) -> Real {
        coverage(self)
    }

    pub fn is_degenerate(&self) -> bool {
        let c = self.coverage();
        c == 0.0 || c == 1.0
    }
}

pub fn coverage(mask: &Mask) -> Real {
    let ones = mask.plane.data().iter().filter(|&&v| v == 1.0).count();
    ones as Real / mask.plane.numel() as Real
}

/// Draws one mask. Identical arguments always give an identical plane.
pub fn generate_mask(config: &MaskConfig, seed: u64, h: usize, w: usize) -> Result<Mask> {
    config.validate()?;
    if h < MIN_EXTENT || w < MIN_EXTENT {
        return Err(Error::config(format!(
            "mask extents {h}x{w} below the {MIN_EXTENT}x{MIN_EXTENT} minimum"
        )));
    }
    if config.boxes_min > 0 && config.box_side_min as usize > h.min(w) {
        return Err(Error::config(format!(
            "box_side_min {} exceeds the smaller image side {}",
            config.box_side_min,
            h.min(w)
        )));
    }
    for attempt in 0..MAX_REROLLS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt));
        let mut canvas = Canvas::new(h, w);
        draw(config, &mut rng, &mut canvas);
        let mask = Mask {
            plane: Tensor::new(&[1, h, w], canvas.pixels)?,
        };
        if !mask.is_degenerate() {
            return Ok(mask);
        }
    }
    Err(Error::config(format!(
        "mask config produced only empty or full masks after {MAX_REROLLS} draws"
    )))
}

fn derive_seed(seed: u64, attempt: u64) -> u64 {
    if attempt == 0 {
        return seed;
    }
    // splitmix64 finalizer over (seed, attempt)
    let mut z = seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Canvas {
    h: usize,
    w: usize,
    pixels: Vec<Real>,
}

impl Canvas {
    fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            pixels: vec![0.0; h * w],
        }
    }

    fn stamp_disc(&mut self, cx: i64, cy: i64, diameter: u32) {
        let r = diameter as f64 / 2.0;
        let reach = r.ceil() as i64;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if ((dx * dx + dy * dy) as f64) > r * r {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
                    self.pixels[y as usize * self.w + x as usize] = 1.0;
                }
            }
        }
    }

    fn stroke(&mut self, from: (i64, i64), to: (i64, i64), width: u32) {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let steps = dx.abs().max(dy.abs());
        if steps == 0 {
            self.stamp_disc(from.0, from.1, width);
            return;
        }
        for s in 0..=steps {
            let x = from.0 + (dx * s + steps / 2 * dx.signum()) / steps;
            let y = from.1 + (dy * s + steps / 2 * dy.signum()) / steps;
            self.stamp_disc(x, y, width);
        }
    }

    fn fill_rect(&mut self, x0: usize, y0: usize, bw: usize, bh: usize) {
        for y in y0..y0 + bh {
            self.pixels[y * self.w + x0..y * self.w + x0 + bw].fill(1.0);
        }
    }
}

fn draw(cfg: &MaskConfig, rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    let (h, w) = (canvas.h as i64, canvas.w as i64);
    if rng.random::<f64>() < cfg.chain_probability {
        let segments = rng.random_range(cfg.segments_min..=cfg.segments_max);
        let mut at = (rng.random_range(0..w), rng.random_range(0..h));
        for _ in 0..segments {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let length = rng.random_range(1..=cfg.segment_length_max) as f64;
            let width = rng.random_range(1..=cfg.segment_width_max);
            let to = (
                (at.0 as f64 + length * angle.cos()).round().clamp(0.0, (w - 1) as f64) as i64,
                (at.1 as f64 + length * angle.sin()).round().clamp(0.0, (h - 1) as f64) as i64,
            );
            canvas.stroke(at, to, width);
            at = to;
        }
    }
    let boxes = rng.random_range(cfg.boxes_min..=cfg.boxes_max);
    for _ in 0..boxes {
        let side = |rng: &mut ChaCha8Rng, limit: usize| {
            (rng.random_range(cfg.box_side_min..=cfg.box_side_max) as usize).min(limit)
        };
        let bw = side(rng, canvas.w);
        let bh = side(rng, canvas.h);
        let x0 = rng.random_range(0..=canvas.w - bw);
        let y0 = rng.random_range(0..=canvas.h - bh);
        canvas.fill_rect(x0, y0, bw, bh);
    }
}
