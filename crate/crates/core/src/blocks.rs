//! Residual blocks and the frequency-spatial cross-attention block (FSCAB).

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Conv2d;
use crate::tensor::{Graph, ParamStore, ParamView, Real, Tensor, Var};

pub const NORM_EPS: Real = 1e-5;
pub const FSCAB_EPS: Real = 1e-8;
/// Largest H·W accepted by the dense attention.
pub const FSCAB_MAX_POSITIONS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    None,
    Down2,
    Up2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    None,
    Instance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub resample: Resample,
    pub norm: Norm,
}

impl ResidualBlockSpec {
    pub fn new(in_channels: usize, out_channels: usize, resample: Resample) -> Self {
        Self {
            in_channels,
            out_channels,
            resample,
            norm: Norm::Instance,
        }
    }

    pub fn needs_projection(&self) -> bool {
        self.in_channels != self.out_channels || self.resample != Resample::None
    }
}

/// `out = norm(conv(relu(norm(conv(r(x)))))) + skip(r(x))` where `r` is the
/// block's resampling.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub spec: ResidualBlockSpec,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
}

impl ResidualBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        spec: ResidualBlockSpec,
    ) -> Result<Self> {
        let stride = if spec.resample == Resample::Down2 { 2 } else { 1 };
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let conv1 = Conv2d::new(store, rng, &format!("{name}.conv1"), cin, cout, 3, stride, true)?;
        let conv2 = Conv2d::new(store, rng, &format!("{name}.conv2"), cout, cout, 3, 1, true)?;
        let skip = if spec.needs_projection() {
            Some(Conv2d::new(store, rng, &format!("{name}.skip"), cin, cout, 1, stride, true)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            conv1,
            conv2,
            skip,
        })
    }

    fn norm(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.spec.norm {
            Norm::None => Ok(x),
            Norm::Instance => g.instance_norm(x, NORM_EPS),
        }
    }

    pub fn forward(&self, g: &mut Graph, view: &ParamView<'_>, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 4 || shape[1] != self.spec.in_channels {
            return Err(Error::dim(format!(
                "residual block expects {} input channels, got shape {:?}",
                self.spec.in_channels, shape
            )));
        }
        let x = match self.spec.resample {
            Resample::Up2 => g.upsample_nearest(x, 2)?,
            _ => x,
        };
        let h = self.conv1.forward(g, view, x)?;
        let h = self.norm(g, h)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, view, h)?;
        let h = self.norm(g, h)?;
        let skip = match &self.skip {
            Some(conv) => conv.forward(g, view, x)?,
            None => x,
        };
        g.add(h, skip)
    }
}

/// Cross-attention from frequency features onto spatial features with a
/// single 1×1 embedding of the frequency side.
#[derive(Clone, Debug)]
pub struct Fscab {
    pub theta: Conv2d,
    pub eps: Real,
}

impl Fscab {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            theta: Conv2d::new(store, rng, &format!("{name}.theta"), channels, channels, 1, 1, false)?,
            eps: FSCAB_EPS,
        })
    }

    /// Sets the embedding to the identity map (used by tests and examples).
    pub fn set_identity(&self, store: &mut ParamStore) {
        let c = self.theta.in_channels;
        store.get_mut(self.theta.weight).value =
            Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 });
    }

    pub fn forward(&self, g: &mut Graph, view: &ParamView<'_>, freq: Var, spatial: Var) -> Result<Var> {
        let scores = self.scores(g, view, freq, spatial)?;
        fscab_aggregate(g, scores, spatial, self.eps)
    }

    /// B×HW×HW matrix of `relu(cos(theta(xF_i), xS_j))`.
    pub fn scores(&self, g: &mut Graph, view: &ParamView<'_>, freq: Var, spatial: Var) -> Result<Var> {
        if g.shape(freq) != g.shape(spatial) || g.shape(freq).len() != 4 {
            return Err(Error::dim(format!(
                "fscab inputs must share a B×C×H×W shape, got {:?} and {:?}",
                g.shape(freq),
                g.shape(spatial)
            )));
        }
        let embedded = self.theta.forward(g, view, freq)?;
        fscab_scores(g, embedded, spatial, self.eps)
    }
}

fn positions(g: &Graph, x: Var) -> Result<[usize; 4]> {
    let s = g.shape(x);
    let [b, c, h, w] = s else {
        return Err(Error::dim(format!("fscab needs B×C×H×W, got {s:?}")));
    };
    if h * w > FSCAB_MAX_POSITIONS {
        return Err(Error::dim(format!(
            "fscab over {h}x{w} = {} positions exceeds the {FSCAB_MAX_POSITIONS} limit",
            h * w
        )));
    }
    Ok([*b, *c, *h, *w])
}

/// Per-position L2 norms of channel fibers: B×C×N → B×1×N.
fn fiber_norms(g: &mut Graph, fibers: Var) -> Result<Var> {
    let sq = g.square(fibers);
    let sums = g.sum_axis(sq, 1)?;
    Ok(g.sqrt(sums))
}

/// Scores between already-embedded frequency fibers and spatial fibers.
pub fn fscab_scores(g: &mut Graph, embedded_freq: Var, spatial: Var, eps: Real) -> Result<Var> {
    let [b, c, h, w] = positions(g, spatial)?;
    let n = h * w;
    let f = g.reshape(embedded_freq, &[b, c, n])?;
    let s = g.reshape(spatial, &[b, c, n])?;
    let ft = g.transpose(f)?;
    let dots = g.bmm(ft, s)?;
    let nf = fiber_norms(g, f)?;
    let ns = fiber_norms(g, s)?;
    let nft = g.transpose(nf)?;
    let denom = g.bmm(nft, ns)?;
    let denom = g.add_scalar(denom, eps);
    let cos = g.div(dots, denom)?;
    Ok(g.relu(cos))
}

/// `y_i = sum_j s_ij xS_j / (sum_j s_ij + eps)`, reshaped to B×C×H×W.
pub fn fscab_aggregate(g: &mut Graph, scores: Var, spatial: Var, eps: Real) -> Result<Var> {
    let [b, c, h, w] = positions(g, spatial)?;
    let n = h * w;
    if g.shape(scores) != [b, n, n] {
        return Err(Error::dim(format!(
            "fscab scores {:?} do not match {n} positions",
            g.shape(scores)
        )));
    }
    let s = g.reshape(spatial, &[b, c, n])?;
    let y = g.normalized_mix(scores, s, eps)?;
    g.reshape(y, &[b, c, h, w])
}
