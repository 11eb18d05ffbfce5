//! In-memory image datasets: synthetic textures and flat PPM directories.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::image::{load_image, save_image};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MANIFEST: &str = "manifest.txt";
pub const SYNTH_SIZES: [usize; 2] = [32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::config(format!("unknown split {s:?}"))),
        }
    }
}

/// Equally sized 3×S×S images in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub ids: Vec<String>,
    pub images: Vec<Tensor>,
    pub shuffle_seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn size(&self) -> Option<usize> {
        self.images.first().map(|t| t.shape()[1])
    }

    /// Deterministic permutation for the given epoch.
    pub fn order(&self, epoch: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.shuffle_seed);
        rng.set_stream(epoch);
        idx.shuffle(&mut rng);
        idx
    }

    /// Reads the manifest (one path per line, relative to `dir`) or, without
    /// one, every `.ppm` file in name order. Images are center-cropped to a
    /// square and resampled to `size`.
    pub fn load_dir(dir: &Path, size: usize, split: Split, shuffle_seed: u64) -> Result<Self> {
        let manifest = dir.join(MANIFEST);
        let paths: Vec<PathBuf> = if manifest.exists() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| dir.join(l))
                .collect()
        } else {
            let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            let mut v = Vec::new();
            for e in entries {
                let p = e.map_err(|e| Error::io(dir, e))?.path();
                if p.extension().is_some_and(|x| x == "ppm") {
                    v.push(p);
                }
            }
            v.sort();
            v
        };
        if paths.is_empty() {
            return Err(Error::config(format!("no images found in {}", dir.display())));
        }
        let mut ids = Vec::with_capacity(paths.len());
        let mut images = Vec::with_capacity(paths.len());
        for p in &paths {
            images.push(crop_resize(&load_image(p)?, size)?);
            ids.push(p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        }
        Ok(Self {
            split,
            ids,
            images,
            shuffle_seed,
        })
    }

    /// Writes every image as `<id>.ppm` plus a manifest.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for (id, img) in self.ids.iter().zip(&self.images) {
            let name = format!("{id}.ppm");
            save_image(img, &dir.join(&name))?;
            manifest.push_str(&name);
            manifest.push('\n');
        }
        let path = dir.join(MANIFEST);
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }
}

/// Center square crop followed by nearest-neighbour resampling to `size`.
pub fn crop_resize(image: &Tensor, size: usize) -> Result<Tensor> {
    let [3, h, w] = *image.shape() else {
        return Err(Error::dim(format!("expected 3×H×W, got {:?}", image.shape())));
    };
    if size == 0 {
        return Err(Error::config("target size must be positive"));
    }
    let side = h.min(w);
    let (y0, x0) = ((h - side) / 2, (w - side) / 2);
    if side == size {
        return Ok(Tensor::from_fn(&[3, size, size], |i| {
            let (c, y, x) = (i / (size * size), (i / size) % size, i % size);
            image.data()[c * h * w + (y0 + y) * w + x0 + x]
        }));
    }
    Ok(Tensor::from_fn(&[3, size, size], |i| {
        let (c, y, x) = (i / (size * size), (i / size) % size, i % size);
        let sy = ((2 * y + 1) * side) / (2 * size);
        let sx = ((2 * x + 1) * side) / (2 * size);
        image.data()[c * h * w + (y0 + sy) * w + x0 + sx]
    }))
}

/// Standard deviation of the per-pixel noise in synthetic textures.
pub const SYNTH_NOISE: Real = 0.04;

/// One texture: three oriented sinusoids with per-channel gains on a
/// random base colour, plus Gaussian pixel noise, clamped to [0, 1].
fn texture(rng: &mut ChaCha8Rng, size: usize) -> Tensor {
    let base: [Real; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.7));
    let waves: Vec<(Real, Real, Real, [Real; 3])> = (0..3)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::PI) as Real;
            let cycles = rng.random_range(1.0..5.0) as Real;
            let phase = rng.random_range(0.0..std::f64::consts::TAU) as Real;
            let gains = std::array::from_fn(|_| rng.random_range(-0.15..0.15) as Real);
            (angle, cycles, phase, gains)
        })
        .collect();
    let n = size as Real;
    let mut data = vec![0.0; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let mut v = base;
            for &(angle, cycles, phase, gains) in &waves {
                let t = (x as Real * angle.cos() + y as Real * angle.sin()) / n;
                let s = (std::f64::consts::TAU as Real * cycles * t + phase).sin();
                for c in 0..3 {
                    v[c] += gains[c] * s;
                }
            }
            for c in 0..3 {
                let z: f64 = rng.sample(StandardNormal);
                data[c * size * size + y * size + x] = (v[c] + SYNTH_NOISE * z as Real).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[3, size, size], data).expect("sized buffer")
}

/// `count` deterministic textures of `size`×`size`; image `i` depends only on
/// `(seed, i)`.
pub fn synth_textures(seed: u64, count: usize, size: usize) -> Result<Dataset> {
    if !SYNTH_SIZES.contains(&size) {
        return Err(Error::config(format!("synthetic textures come in sizes {SYNTH_SIZES:?}, not {size}")));
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        images.push(texture(&mut rng, size));
    }
    Ok(Dataset {
        split: Split::Train,
        ids: (0..count).map(|i| format!("tex{i:04}")).collect(),
        images,
        shuffle_seed: seed,
    })
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;
    use crate::spectral::dft2;

    #[test]
    fn deterministic_and_in_range() {
        let a = synth_textures(3, 4, 32).unwrap();
        let b = synth_textures(3, 4, 32).unwrap();
        assert_eq!(a, b);
        assert!(a.images.iter().all(|t| t.data().iter().all(|v| (0.0..=1.0).contains(v))));
        let c = synth_textures(4, 4, 32).unwrap();
        assert_ne!(a.images[0], c.images[0]);
        // prefix stability: image i does not depend on count
        assert_eq!(synth_textures(3, 2, 32).unwrap().images[1], a.images[1]);
    }

    #[test]
    fn energy_above_half_nyquist() {
        let ds = synth_textures(11, 6, 32).unwrap();
        for img in &ds.images {
            let s = dft2(img).unwrap();
            let n = 32usize;
            let mut high = 0.0;
            for c in 0..3 {
                for u in 0..n {
                    for v in 0..n {
                        let fu = u.min(n - u);
                        let fv = v.min(n - v);
                        if fu.max(fv) > n / 4 {
                            let i = c * n * n + u * n + v;
                            high += s.re.data()[i].powi(2) + s.im.data()[i].powi(2);
                        }
                    }
                }
            }
            assert!(high > 0.0);
        }
    }

    #[test]
    fn unsupported_size_is_rejected() {
        assert!(synth_textures(0, 1, 48).is_err());
    }

    #[test]
    fn order_is_a_seeded_permutation() {
        let ds = synth_textures(1, 8, 32).unwrap();
        let mut o = ds.order(0);
        assert_eq!(o, ds.order(0));
        assert_ne!(o, ds.order(1));
        o.sort();
        assert_eq!(o, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn crop_resize_geometry() {
        let img = Tensor::from_fn(&[3, 4, 6], |i| i as f64);
        let c = crop_resize(&img, 4).unwrap();
        // columns 1..5 of each row survive
        assert_eq!(&c.data()[..4], &[1.0, 2.0, 3.0, 4.0]);
        let d = crop_resize(&img, 2).unwrap();
        assert_eq!(&d.data()[..2], &[8.0, 10.0]);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_textures(5, 3, 32).unwrap();
        let quant = Dataset {
            images: ds.images.iter().map(|t| t.map(|v| (v * 255.0).round() / 255.0)).collect(),
            ..ds
        };
        quant.save_dir(dir.path()).unwrap();
        let back = Dataset::load_dir(dir.path(), 32, Split::Train, 5).unwrap();
        assert_eq!(back.images, quant.images);
        assert_eq!(back.ids, quant.ids);
    }
}
