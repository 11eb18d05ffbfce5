//! Parameterized layers shared by the networks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamStore, ParamView, Real, Tensor, Var};

/// Square convolution with "same"-style padding of `kernel / 2`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    /// He-normal weights, zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let shape = [out_channels, in_channels, kernel, kernel];
        let w = Tensor::from_fn(&shape, |_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * std) as Real
        });
        let weight = store.insert(format!("{name}.weight"), w)?;
        let bias = if bias {
            Some(store.insert(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
        })
    }

    pub fn forward(&self, g: &mut Graph, view: &ParamView<'_>, x: Var) -> Result<Var> {
        let w = g.param(view, self.weight);
        let b = self.bias.map(|id| g.param(view, id));
        g.conv2d(x, w, b, self.stride, self.kernel / 2)
    }
}
