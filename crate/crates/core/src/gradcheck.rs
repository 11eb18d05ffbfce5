//! Central finite-difference gradient checks against the tape.
//!
//! The numerical side only ever evaluates forward passes; it shares no code
//! with the backward rules it verifies.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, ParamView, Real, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: Real,
    /// Maximum accepted relative error.
    pub tolerance: Real,
    /// Denominator floor: coordinates whose gradients are both below this
    /// magnitude are compared in absolute terms scaled by the floor.
    pub floor: Real,
    /// Coordinates sampled per input tensor (all if the tensor is smaller).
    pub max_coords: usize,
    /// Coordinates whose second difference exceeds this are treated as
    /// straddling a kink (relu, abs) and skipped.
    pub kink_threshold: Real,
    /// Fraction of skipped coordinates above which the check fails.
    pub max_skip_fraction: Real,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-3,
            max_coords: 64,
            kink_threshold: 1e-7,
            max_skip_fraction: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: Real,
    pub max_abs_err: Real,
    pub checked: usize,
    pub skipped: usize,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<4} {:<32} max_rel={:.3e} max_abs={:.3e} checked={} skipped={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_err,
            self.max_abs_err,
            self.checked,
            self.skipped
        )
    }
}

struct Tally {
    max_rel: Real,
    max_abs: Real,
    checked: usize,
    skipped: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            max_rel: 0.0,
            max_abs: 0.0,
            checked: 0,
            skipped: 0,
        }
    }

    fn record(&mut self, cfg: &GradCheckConfig, analytic: Real, f_plus: Real, f_minus: Real, f0: Real) {
        let second = (f_plus + f_minus - 2.0 * f0).abs();
        if second > cfg.kink_threshold * (1.0 + f0.abs()) {
            self.skipped += 1;
            return;
        }
        let numeric = (f_plus - f_minus) / (2.0 * cfg.step);
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(cfg.floor);
        self.max_abs = self.max_abs.max(abs);
        self.max_rel = self.max_rel.max(rel);
        self.checked += 1;
    }

    fn finish(self, name: &str, cfg: &GradCheckConfig) -> GradCheckReport {
        let total = self.checked + self.skipped;
        let skip_ok = total == 0 || (self.skipped as Real) <= cfg.max_skip_fraction * total as Real;
        GradCheckReport {
            name: name.to_owned(),
            max_rel_err: self.max_rel,
            max_abs_err: self.max_abs,
            checked: self.checked,
            skipped: self.skipped,
            passed: self.checked > 0 && skip_ok && self.max_rel < cfg.tolerance,
        }
    }
}

fn coords(n: usize, cfg: &GradCheckConfig, salt: u64) -> Vec<usize> {
    if n <= cfg.max_coords {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx = sample(&mut rng, n, cfg.max_coords).into_vec();
    idx.sort_unstable();
    idx
}

fn scalar(g: &Graph, v: Var) -> Result<Real> {
    let t = g.value(v);
    if t.numel() != 1 {
        return Err(Error::contract(format!(
            "gradient check needs a scalar objective, got {:?}",
            t.shape()
        )));
    }
    Ok(t.data()[0])
}

/// Checks d(f)/d(inputs) for a scalar-valued `f` built on a fresh graph.
pub fn check_inputs<F>(name: &str, inputs: &[Tensor], f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<Real> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar(&g, out)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let f0 = scalar(&g, out)?;
    let grads = g.backward(out)?;
    let mut tally = Tally::new();
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in coords(inputs[k].numel(), cfg, k as u64) {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + cfg.step;
            let fp = eval(&work)?;
            work[k].data_mut()[i] = orig - cfg.step;
            let fm = eval(&work)?;
            work[k].data_mut()[i] = orig;
            tally.record(cfg, analytic.data()[i], fp, fm, f0);
        }
    }
    Ok(tally.finish(name, cfg))
}

/// Checks d(f)/d(parameters) for every parameter of `store`.
pub fn check_params<F>(name: &str, store: &ParamStore, f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, ParamView<'_>) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut g = Graph::new();
    let out = f(&mut g, work.trainable())?;
    let f0 = scalar(&g, out)?;
    let grads = g.backward(out)?;
    drop(g);
    grads.accumulate_into(&mut work);
    let analytic: Vec<Tensor> = work
        .iter()
        .map(|p| p.grad.clone().unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    let mut tally = Tally::new();
    #[allow(clippy::needless_range_loop)]
    for k in 0..work.len() {
        let id = ParamId(k);
        let n = work.get(id).value.numel();
        for i in coords(n, cfg, k as u64) {
            let orig = work.get(id).value.data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + cfg.step;
            let fp = {
                let mut g = Graph::new();
                let v = f(&mut g, work.frozen())?;
                scalar(&g, v)?
            };
            work.get_mut(id).value.data_mut()[i] = orig - cfg.step;
            let fm = {
                let mut g = Graph::new();
                let v = f(&mut g, work.frozen())?;
                scalar(&g, v)?
            };
            work.get_mut(id).value.data_mut()[i] = orig;
            tally.record(cfg, analytic[k].data()[i], fp, fm, f0);
        }
    }
    Ok(tally.finish(name, cfg))
}

/// Named check over one set of random inputs.
type Case = fn(&mut ChaCha8Rng, &GradCheckConfig) -> Result<GradCheckReport>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: Real, hi: Real) -> Tensor {
    use rand::Rng;
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// `Σ w ⊙ x` for a fixed random `w`, turning any tensor into a scalar with
/// a generic upstream gradient.
fn probe(g: &mut Graph, x: Var, w: &Tensor) -> Result<Var> {
    let wv = g.constant(w.clone());
    let p = g.mul(x, wv)?;
    Ok(g.sum(p))
}

macro_rules! unary_case {
    ($name:literal, $shape:expr, $lo:expr, $hi:expr, |$g:ident, $x:ident| $body:expr) => {
        ($name, (|rng: &mut ChaCha8Rng, cfg: &GradCheckConfig| {
            let x = uniform(rng, &$shape, $lo, $hi);
            let w = uniform(rng, &$shape, -1.0, 1.0);
            check_inputs(
                $name,
                &[x],
                |$g: &mut Graph, v: &[Var]| {
                    let $x = v[0];
                    let y: Var = $body?;
                    let w = if $g.shape(y) == w.shape() { w.clone() } else { Tensor::ones($g.shape(y)) };
                    probe($g, y, &w)
                },
                cfg,
            )
        }) as Case)
    };
}

macro_rules! binary_case {
    ($name:literal, $shape:expr, $lo:expr, $hi:expr, |$g:ident, $a:ident, $b:ident| $body:expr) => {
        ($name, (|rng: &mut ChaCha8Rng, cfg: &GradCheckConfig| {
            let a = uniform(rng, &$shape, -1.0, 1.0);
            let b = uniform(rng, &$shape, $lo, $hi);
            let w = uniform(rng, &$shape, -1.0, 1.0);
            check_inputs(
                $name,
                &[a, b],
                |$g: &mut Graph, v: &[Var]| {
                    let ($a, $b) = (v[0], v[1]);
                    let y: Var = $body?;
                    let w = if $g.shape(y) == w.shape() { w.clone() } else { Tensor::ones($g.shape(y)) };
                    probe($g, y, &w)
                },
                cfg,
            )
        }) as Case)
    };
}

fn ok(v: Var) -> Result<Var> {
    Ok(v)
}

fn op_cases() -> Vec<(&'static str, Case)> {
    vec![
        binary_case!("add", [3, 4], -1.0, 1.0, |g, a, b| g.add(a, b)),
        binary_case!("sub", [3, 4], -1.0, 1.0, |g, a, b| g.sub(a, b)),
        binary_case!("mul", [3, 4], -1.0, 1.0, |g, a, b| g.mul(a, b)),
        binary_case!("div", [3, 4], 0.5, 2.0, |g, a, b| g.div(a, b)),
        unary_case!("add_scalar", [5], -1.0, 1.0, |g, x| ok(g.add_scalar(x, 0.3))),
        unary_case!("mul_scalar", [5], -1.0, 1.0, |g, x| ok(g.mul_scalar(x, -1.7))),
        unary_case!("abs", [12], -1.0, 1.0, |g, x| ok(g.abs(x))),
        unary_case!("log1p", [12], -0.5, 2.0, |g, x| ok(g.log1p(x))),
        unary_case!("relu", [12], -1.0, 1.0, |g, x| ok(g.relu(x))),
        unary_case!("leaky_relu", [12], -1.0, 1.0, |g, x| ok(g.leaky_relu(x, 0.2))),
        unary_case!("sigmoid", [12], -4.0, 4.0, |g, x| ok(g.sigmoid(x))),
        unary_case!("softplus", [12], -4.0, 4.0, |g, x| ok(g.softplus(x))),
        unary_case!("sqrt", [12], 0.2, 2.0, |g, x| ok(g.sqrt(x))),
        unary_case!("square", [12], -1.0, 1.0, |g, x| ok(g.square(x))),
        unary_case!("sum", [3, 4], -1.0, 1.0, |g, x| ok(g.sum(x))),
        unary_case!("mean", [3, 4], -1.0, 1.0, |g, x| ok(g.mean(x))),
        unary_case!("sum_axis", [2, 3, 4], -1.0, 1.0, |g, x| g.sum_axis(x, 1)),
        unary_case!("reshape", [2, 6], -1.0, 1.0, |g, x| g.reshape(x, &[3, 4])),
        unary_case!("transpose", [2, 3, 4], -1.0, 1.0, |g, x| g.transpose(x)),
        unary_case!("slice", [2, 5, 3], -1.0, 1.0, |g, x| g.slice(x, 1, 1, 3)),
        unary_case!("upsample_nearest", [1, 2, 3, 3], -1.0, 1.0, |g, x| g.upsample_nearest(x, 2)),
        unary_case!("instance_norm", [2, 3, 4, 4], -1.0, 1.0, |g, x| g.instance_norm(x, 1e-5)),
        unary_case!("dft2.re", [2, 4, 6], -1.0, 1.0, |g, x| g.dft2(x).map(|(re, _)| re)),
        unary_case!("dft2.im", [2, 4, 6], -1.0, 1.0, |g, x| g.dft2(x).map(|(_, im)| im)),
        binary_case!("concat", [2, 3, 2], -1.0, 1.0, |g, a, b| g.concat(&[a, b], 1)),
        ("matmul", |rng, cfg| {
            let a = uniform(rng, &[3, 4], -1.0, 1.0);
            let b = uniform(rng, &[4, 5], -1.0, 1.0);
            let w = uniform(rng, &[3, 5], -1.0, 1.0);
            check_inputs("matmul", &[a, b], |g, v| {
                let y = g.matmul(v[0], v[1])?;
                probe(g, y, &w)
            }, cfg)
        }),
        ("bmm", |rng, cfg| {
            let a = uniform(rng, &[2, 3, 4], -1.0, 1.0);
            let b = uniform(rng, &[2, 4, 2], -1.0, 1.0);
            let w = uniform(rng, &[2, 3, 2], -1.0, 1.0);
            check_inputs("bmm", &[a, b], |g, v| {
                let y = g.bmm(v[0], v[1])?;
                probe(g, y, &w)
            }, cfg)
        }),
        ("normalized_mix", |rng, cfg| {
            let s = uniform(rng, &[2, 4, 4], 0.1, 1.0);
            let v = uniform(rng, &[2, 3, 4], -1.0, 1.0);
            let w = uniform(rng, &[2, 3, 4], -1.0, 1.0);
            check_inputs("normalized_mix", &[s, v], |g, x| {
                let y = g.normalized_mix(x[0], x[1], 1e-8)?;
                probe(g, y, &w)
            }, cfg)
        }),
        ("conv2d", |rng, cfg| {
            let x = uniform(rng, &[2, 3, 5, 5], -1.0, 1.0);
            let k = uniform(rng, &[4, 3, 3, 3], -1.0, 1.0);
            let b = uniform(rng, &[4], -1.0, 1.0);
            let w = uniform(rng, &[2, 4, 5, 5], -1.0, 1.0);
            check_inputs("conv2d", &[x, k, b], |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
                probe(g, y, &w)
            }, cfg)
        }),
        ("conv2d.stride2", |rng, cfg| {
            let x = uniform(rng, &[1, 2, 6, 6], -1.0, 1.0);
            let k = uniform(rng, &[3, 2, 3, 3], -1.0, 1.0);
            let w = uniform(rng, &[1, 3, 3, 3], -1.0, 1.0);
            check_inputs("conv2d.stride2", &[x, k], |g, v| {
                let y = g.conv2d(v[0], v[1], None, 2, 1)?;
                probe(g, y, &w)
            }, cfg)
        }),
        ("conv2d.pointwise", |rng, cfg| {
            let x = uniform(rng, &[2, 3, 4, 4], -1.0, 1.0);
            let k = uniform(rng, &[2, 3, 1, 1], -1.0, 1.0);
            let w = uniform(rng, &[2, 2, 4, 4], -1.0, 1.0);
            check_inputs("conv2d.pointwise", &[x, k], |g, v| {
                let y = g.conv2d(v[0], v[1], None, 1, 0)?;
                probe(g, y, &w)
            }, cfg)
        }),
        ("log_real", |rng, cfg| {
            let x = uniform(rng, &[1, 4, 4], -1.0, 1.0);
            let w = uniform(rng, &[1, 4, 4], -1.0, 1.0);
            check_inputs("log_real", &[x], |g, v| {
                let (re, im) = g.dft2(v[0])?;
                let l = crate::spectral::log_real_var(g, &crate::spectral::SpectrumVar { re, im }, Default::default())?;
                probe(g, l, &w)
            }, cfg)
        }),
        ("frequency_loss", |rng, cfg| {
            let re = uniform(rng, &[2, 4, 4], -3.0, 3.0);
            let im = uniform(rng, &[2, 4, 4], -3.0, 3.0);
            let t = uniform(rng, &[2, 4, 4], 0.0, 1.0);
            check_inputs("frequency_loss", &[re, im, t], |g, v| {
                let pred = crate::spectral::SpectrumVar { re: v[0], im: v[1] };
                crate::spectral::frequency_loss(g, &pred, v[2], Default::default())
            }, cfg)
        }),
    ]
}

fn block_cases() -> Vec<(&'static str, Case)> {
    use crate::blocks::{Fscab, Resample, ResidualBlock, ResidualBlockSpec};
    fn residual(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, name: &str, resample: Resample, out_hw: usize) -> Result<GradCheckReport> {
        let mut store = ParamStore::new("block");
        let block = ResidualBlock::new(&mut store, rng, "res", ResidualBlockSpec::new(2, 3, resample))?;
        let x = uniform(rng, &[2, 2, 4, 4], -1.0, 1.0);
        let w = uniform(rng, &[2, 3, out_hw, out_hw], -1.0, 1.0);
        let by_params = check_params(name, &store, |g, view| {
            let xv = g.constant(x.clone());
            let y = block.forward(g, &view, xv)?;
            probe(g, y, &w)
        }, cfg)?;
        let by_input = check_inputs(name, std::slice::from_ref(&x), |g, v| {
            let y = block.forward(g, &store.frozen(), v[0])?;
            probe(g, y, &w)
        }, cfg)?;
        Ok(merge(name, &[by_params, by_input]))
    }
    vec![
        ("residual", |rng, cfg| residual(rng, cfg, "residual", Resample::None, 4)),
        ("residual.down", |rng, cfg| residual(rng, cfg, "residual.down", Resample::Down2, 2)),
        ("residual.up", |rng, cfg| residual(rng, cfg, "residual.up", Resample::Up2, 8)),
        ("fscab", |rng, cfg| {
            let mut store = ParamStore::new("block");
            let block = Fscab::new(&mut store, rng, "fscab", 3)?;
            let xf = uniform(rng, &[2, 3, 2, 3], -1.0, 1.0);
            let xs = uniform(rng, &[2, 3, 2, 3], -1.0, 1.0);
            let w = uniform(rng, &[2, 3, 2, 3], -1.0, 1.0);
            let by_params = check_params("fscab", &store, |g, view| {
                let (a, b) = (g.constant(xf.clone()), g.constant(xs.clone()));
                let y = block.forward(g, &view, a, b)?;
                probe(g, y, &w)
            }, cfg)?;
            let by_input = check_inputs("fscab", &[xf.clone(), xs.clone()], |g, v| {
                let y = block.forward(g, &store.frozen(), v[0], v[1])?;
                probe(g, y, &w)
            }, cfg)?;
            Ok(merge("fscab", &[by_params, by_input]))
        }),
    ]
}

/// Generator with 8×8 inputs and base width 4.
pub fn micro_generator_spec() -> crate::model::GeneratorSpec {
    crate::model::GeneratorSpec {
        base_channels: 4,
        down_blocks: 2,
        up_blocks: 2,
        freq_blocks: 1,
        fusion: crate::model::FusionMode::Fscab,
        input_size: 8,
    }
}

fn network_cases() -> Vec<(&'static str, Case)> {
    use crate::losses;
    use crate::model::{Discriminator, DiscriminatorSpec, Generator};
    fn micro_disc(rng: &mut ChaCha8Rng) -> Result<(Discriminator, ParamStore)> {
        use rand::Rng;
        Discriminator::init(DiscriminatorSpec { layers: 2, base_channels: 3 }, rng.random())
    }
    vec![
        ("micro_generator", |rng, cfg| {
            use rand::Rng;
            let (gen, store) = Generator::init(micro_generator_spec(), rng.random())?;
            let x = uniform(rng, &[1, 3, 8, 8], 0.0, 1.0);
            let m = Tensor::from_fn(&[1, 1, 8, 8], |i| ((i * 7 + 3) % 5 == 0) as u8 as Real);
            let x = x.zip_map(&Tensor::from_fn(&[1, 3, 8, 8], |i| 1.0 - m.data()[i % 64]), |a, b| a * b)?;
            let w_img = uniform(rng, &[1, 3, 8, 8], -1.0, 1.0);
            let w_spec = uniform(rng, &[1, 3, 8, 8], -0.05, 0.05);
            let cfg = GradCheckConfig {
                tolerance: 1e-3,
                max_coords: cfg.max_coords.min(6),
                ..*cfg
            };
            check_params("micro_generator", &store, |g, view| {
                let (xv, mv) = (g.constant(x.clone()), g.constant(m.clone()));
                let out = gen.forward(g, &view, xv, mv)?;
                let a = probe(g, out.image, &w_img)?;
                let b = probe(g, out.spectrum.re, &w_spec)?;
                let c = probe(g, out.spectrum.im, &w_spec)?;
                let ab = g.add(a, b)?;
                g.add(ab, c)
            }, &cfg)
        }),
        ("micro_discriminator", |rng, cfg| {
            let (d, store) = micro_disc(rng)?;
            let x = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
            let w = uniform(rng, &[2, 1, 2, 2], -1.0, 1.0);
            let by_params = check_params("micro_discriminator", &store, |g, view| {
                let xv = g.constant(x.clone());
                let out = d.forward(g, &view, xv)?;
                probe(g, out.logits, &w)
            }, cfg)?;
            let by_input = check_inputs("micro_discriminator", std::slice::from_ref(&x), |g, v| {
                let out = d.forward(g, &store.frozen(), v[0])?;
                probe(g, out.logits, &w)
            }, cfg)?;
            Ok(merge("micro_discriminator", &[by_params, by_input]))
        }),
        ("rec_loss", |rng, cfg| {
            let gt = uniform(rng, &[2, 3, 4, 4], 0.0, 1.0);
            let out = uniform(rng, &[2, 3, 4, 4], 0.0, 1.0);
            let m = Tensor::from_fn(&[2, 1, 4, 4], |i| (i % 3 == 0) as u8 as Real);
            check_inputs("rec_loss", &[gt, out], |g, v| losses::rec_loss(g, v[0], v[1], &m, false), cfg)
        }),
        ("adv_d_loss", |rng, cfg| {
            let (d, store) = micro_disc(rng)?;
            let real = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
            let fake = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
            let by_params = check_params("adv_d_loss", &store, |g, view| {
                let (r, f) = (g.constant(real.clone()), g.constant(fake.clone()));
                let (dr, df) = (d.forward(g, &view, r)?, d.forward(g, &view, f)?);
                losses::adv_d_loss(g, dr.logits, df.logits)
            }, cfg)?;
            let by_input = check_inputs("adv_d_loss", &[real.clone(), fake.clone()], |g, v| {
                let (dr, df) = (d.forward(g, &store.frozen(), v[0])?, d.forward(g, &store.frozen(), v[1])?);
                losses::adv_d_loss(g, dr.logits, df.logits)
            }, cfg)?;
            Ok(merge("adv_d_loss", &[by_params, by_input]))
        }),
        ("adv_g_loss", |rng, cfg| {
            let (d, store) = micro_disc(rng)?;
            let fake = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
            check_inputs("adv_g_loss", &[fake], |g, v| {
                let df = d.forward(g, &store.frozen(), v[0])?;
                Ok(losses::adv_g_loss(g, df.logits))
            }, cfg)
        }),
        ("fm_loss", |rng, cfg| {
            let (d, store) = micro_disc(rng)?;
            let real = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
            let fake = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
            check_inputs("fm_loss", &[fake], |g, v| {
                let r = g.constant(real.clone());
                let (dr, df) = (d.forward(g, &store.frozen(), r)?, d.forward(g, &store.frozen(), v[0])?);
                losses::fm_loss(g, &dr.features, &df.features)
            }, cfg)
        }),
        ("perceptual_loss", |rng, cfg| {
            let ext = losses::PerceptualExtractor::new(losses::PERCEPTUAL_SEED)?;
            let gt = uniform(rng, &[1, 3, 8, 8], 0.0, 1.0);
            let out = uniform(rng, &[1, 3, 8, 8], 0.0, 1.0);
            check_inputs("perceptual_loss", &[out], |g, v| {
                let t = g.constant(gt.clone());
                losses::perceptual_loss(g, &ext, t, v[0])
            }, cfg)
        }),
    ]
}

fn merge(name: &str, parts: &[GradCheckReport]) -> GradCheckReport {
    GradCheckReport {
        name: name.to_owned(),
        max_rel_err: parts.iter().map(|r| r.max_rel_err).fold(0.0, Real::max),
        max_abs_err: parts.iter().map(|r| r.max_abs_err).fold(0.0, Real::max),
        checked: parts.iter().map(|r| r.checked).sum(),
        skipped: parts.iter().map(|r| r.skipped).sum(),
        passed: parts.iter().all(|r| r.passed),
    }
}

/// Names of every check in [`run_suite`], in order.
pub fn suite_names() -> Vec<&'static str> {
    op_cases()
        .into_iter()
        .chain(block_cases())
        .chain(network_cases())
        .map(|(n, _)| n)
        .collect()
}

/// Runs every operation, block, network and loss check once per seed and
/// merges the seeds into one report per check. `filter` keeps checks whose
/// name contains it.
pub fn run_suite(seeds: u64, filter: Option<&str>, cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let cases = op_cases().into_iter().chain(block_cases()).chain(network_cases());
    let mut out = Vec::new();
    for (name, case) in cases {
        if filter.is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let mut parts = Vec::with_capacity(seeds as usize);
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(name.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
            let cfg = GradCheckConfig { seed, ..*cfg };
            parts.push(case(&mut rng, &cfg)?);
        }
        out.push(merge(name, &parts));
    }
    Ok(out)
}
