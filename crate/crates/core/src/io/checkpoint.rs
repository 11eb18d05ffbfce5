//! Binary checkpoints: run configuration, both networks, both optimizers,
//! the training RNG and the step counter.
//!
//! Layout (all integers little-endian):
//! `"FSCN0001"`, config text, step, RNG state, generator store, discriminator
//! store, generator Adam, discriminator Adam, `"END!"`. Strings are a `u64`
//! byte length followed by UTF-8; every value is stored as `f64`.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, AdamState, ParamStore, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"FSCN0001";
const TRAILER: &[u8; 4] = b"END!";

/// Exact position of a ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Resolved run configuration the networks were built from.
    pub config_text: String,
    pub step: u64,
    pub rng: RngState,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }

    #[allow(clippy::unnecessary_cast)]
    fn f64(&mut self, v: Real) {
        self.0.extend((v as f64).to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend(s.as_bytes());
    }

    fn values(&mut self, v: &[Real]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }

    fn store(&mut self, store: &ParamStore) {
        self.str(store.label());
        self.u64(store.len() as u64);
        for p in store.iter() {
            self.str(&p.name);
            self.u32(p.value.ndim() as u32);
            p.value.shape().iter().for_each(|&d| self.u64(d as u64));
            p.value.data().iter().for_each(|&x| self.f64(x));
        }
    }

    fn adam(&mut self, a: &AdamState) {
        let c = a.config;
        [c.lr, c.beta1, c.beta2, c.eps].into_iter().for_each(|x| self.f64(x));
        self.u64(a.step);
        self.u64(a.first_moment.len() as u64);
        for (m, v) in a.first_moment.iter().zip(&a.second_moment) {
            self.values(m);
            self.values(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "file truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    /// A length that must fit in the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.saturating_mul(unit as u64) > remaining {
            return Err(Error::Checkpoint(format!("{what} length {n} exceeds the file")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self, what: &str) -> Result<Real> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")) as Real)
    }

    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.len(1, what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }

    fn values(&mut self, what: &str) -> Result<Vec<Real>> {
        let n = self.len(8, what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }

    fn store(&mut self) -> Result<ParamStore> {
        let label = self.str("store label")?;
        let count = self.len(1, "parameter count")?;
        let mut store = ParamStore::new(label);
        for _ in 0..count {
            let name = self.str("parameter name")?;
            let ndim = self.u32("rank")? as usize;
            if ndim > 8 {
                return Err(Error::Checkpoint(format!("parameter {name} has rank {ndim}")));
            }
            let shape = (0..ndim)
                .map(|_| self.u64("shape").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let numel = match numel {
                Some(n) if n.saturating_mul(8) <= self.bytes.len() - self.pos => n,
                _ => return Err(Error::Checkpoint(format!("parameter {name} shape {shape:?} exceeds the file"))),
            };
            let data = (0..numel).map(|_| self.f64(&name)).collect::<Result<Vec<_>>>()?;
            store
                .insert(name, Tensor::new(&shape, data)?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(store)
    }

    fn adam(&mut self) -> Result<AdamState> {
        let config = AdamConfig {
            lr: self.f64("adam lr")?,
            beta1: self.f64("adam beta1")?,
            beta2: self.f64("adam beta2")?,
            eps: self.f64("adam eps")?,
        };
        let step = self.u64("adam step")?;
        let n = self.len(16, "adam slots")?;
        let mut first_moment = Vec::with_capacity(n);
        let mut second_moment = Vec::with_capacity(n);
        for _ in 0..n {
            first_moment.push(self.values("adam first moment")?);
            second_moment.push(self.values("adam second moment")?);
        }
        Ok(AdamState {
            config,
            step,
            first_moment,
            second_moment,
        })
    }
}

fn check_adam(store: &ParamStore, opt: &AdamState) -> Result<()> {
    let ok = opt.first_moment.len() == store.len()
        && store
            .iter()
            .zip(&opt.first_moment)
            .zip(&opt.second_moment)
            .all(|((p, m), v)| m.len() == p.value.numel() && v.len() == p.value.numel());
    if ok {
        Ok(())
    } else {
        Err(Error::Checkpoint(format!(
            "optimizer state does not match the {} parameters",
            store.label()
        )))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(MAGIC.to_vec());
        w.str(&self.config_text);
        w.u64(self.step);
        w.0.extend(self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend(self.rng.word_pos.to_le_bytes());
        w.store(&self.generator);
        w.store(&self.discriminator);
        w.adam(&self.gen_opt);
        w.adam(&self.disc_opt);
        w.0.extend(TRAILER);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
            return Err(Error::Checkpoint(format!(
                "bad magic {found:?}: not a checkpoint of format {}",
                String::from_utf8_lossy(MAGIC)
            )));
        }
        let mut r = Reader {
            bytes,
            pos: MAGIC.len(),
        };
        let config_text = r.str("config")?;
        let step = r.u64("step")?;
        let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("32 bytes");
        let stream = r.u64("rng stream")?;
        let word_pos = u128::from_le_bytes(r.take(16, "rng position")?.try_into().expect("16 bytes"));
        let generator = r.store()?;
        let discriminator = r.store()?;
        let gen_opt = r.adam()?;
        let disc_opt = r.adam()?;
        if r.take(4, "trailer")? != TRAILER {
            return Err(Error::Checkpoint("missing trailer".into()));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        check_adam(&generator, &gen_opt)?;
        check_adam(&discriminator, &disc_opt)?;
        Ok(Self {
            config_text,
            step,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            generator,
            discriminator,
            gen_opt,
            disc_opt,
        })
    }

    /// Writes to a sibling temporary file, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Copies parameter values by name from `src` into `dst`, requiring identical
/// names, order and shapes.
pub fn restore_params(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Checkpoint(format!(
            "{} has {} parameters, checkpoint has {}",
            dst.label(),
            dst.len(),
            src.len()
        )));
    }
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        if d.name != s.name || d.value.shape() != s.value.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter mismatch: expected {} {:?}, checkpoint has {} {:?}",
                d.name,
                d.value.shape(),
                s.name,
                s.value.shape()
            )));
        }
        d.value = s.value.clone();
        d.grad = None;
    }
    Ok(())
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample() -> Checkpoint {
        let mut g = ParamStore::new("generator");
        g.insert("a.weight", Tensor::from_fn(&[2, 3], |i| i as f64 * 0.1 - 0.2)).unwrap();
        g.insert("a.bias", Tensor::new(&[2], vec![f64::MIN_POSITIVE, -0.0]).unwrap()).unwrap();
        let mut d = ParamStore::new("discriminator");
        d.insert("x", Tensor::scalar(3.5)).unwrap();
        let mut gen_opt = AdamState::new(AdamConfig::default(), &g);
        gen_opt.step = 4;
        gen_opt.first_moment[0][1] = 0.25;
        let disc_opt = AdamState::new(AdamConfig::with_lr(1e-4), &d);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let _: u64 = rng.random();
        Checkpoint {
            config_text: "model.base_channels=4\n".into(),
            step: 12,
            rng: RngState::capture(&rng),
            generator: g,
            discriminator: d,
            gen_opt,
            disc_opt,
        }
    }

    #[test]
    fn byte_identical_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        for (a, b) in ck.generator.iter().zip(back.generator.iter()) {
            assert_eq!(a.name, b.name);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(back.gen_opt, ck.gen_opt);
        assert_eq!(back.rng, ck.rng);
    }

    #[test]
    fn rng_resumes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: [u64; 3] = rng.random();
        let mut resumed = RngState::capture(&rng).restore();
        for _ in 0..10 {
            assert_eq!(rng.random::<u64>(), resumed.random::<u64>());
        }
    }

    #[test]
    fn every_truncation_is_a_clean_error() {
        let bytes = sample().to_bytes();
        for n in 0..bytes.len() {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..n]), Err(Error::Checkpoint(_))), "prefix {n}");
        }
    }

    #[test]
    fn wrong_magic_is_refused() {
        let mut bytes = sample().to_bytes();
        bytes[7] = b'2';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("FSCN0002"), "{err}");
    }

    #[test]
    fn save_and_load_via_rename() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = sample();
        ck.save(&path).unwrap();
        assert!(!dir.path().join("ck.bin.tmp").exists());
        assert_eq!(Checkpoint::load(&path).unwrap().to_bytes(), ck.to_bytes());
    }

    #[test]
    fn restore_checks_names_and_shapes() {
        let ck = sample();
        let mut g = ParamStore::new("generator");
        g.insert("a.weight", Tensor::zeros(&[2, 3])).unwrap();
        g.insert("a.bias", Tensor::zeros(&[2])).unwrap();
        restore_params(&mut g, &ck.generator).unwrap();
        assert_eq!(g.iter().next().unwrap().value, ck.generator.iter().next().unwrap().value);
        let mut bad = ParamStore::new("generator");
        bad.insert("a.weight", Tensor::zeros(&[3, 2])).unwrap();
        bad.insert("a.bias", Tensor::zeros(&[2])).unwrap();
        assert!(restore_params(&mut bad, &ck.generator).is_err());
    }
}
