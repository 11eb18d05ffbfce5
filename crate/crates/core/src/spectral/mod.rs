//! 2-D Fourier analysis of image tensors: transforms, the log-real
//! spectrum used for supervision, the frequency loss, and spectrum
//! visualization.

pub mod fft;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};
use fft::{Direction, Method};

/// Residue above which the imaginary part of an inverse transform is
/// reported before being discarded.
pub const IMAG_RESIDUE_WARN: Real = 1e-9;

/// Stabilizer inside the log of the log-real transform.
pub const LOG_EPS: Real = 1e-8;

/// Real and imaginary planes of a 2-D DFT. Both tensors share a shape
/// whose last two axes are the source extents H, W.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexSpectrum {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() || re.ndim() < 2 {
            return Err(Error::dim(format!(
                "spectrum planes {:?} / {:?} must match and have >= 2 axes",
                re.shape(),
                im.shape()
            )));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn height(&self) -> usize {
        self.shape()[self.shape().len() - 2]
    }

    pub fn width(&self) -> usize {
        self.shape()[self.shape().len() - 1]
    }

    /// Sum of squared magnitudes over all bins.
    pub fn energy(&self) -> Real {
        self.re
            .data()
            .iter()
            .zip(self.im.data())
            .map(|(r, i)| r * r + i * i)
            .sum()
    }
}

/// A spectrum recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct SpectrumVar {
    pub re: Var,
    pub im: Var,
}

impl SpectrumVar {
    pub fn constant(g: &mut Graph, spectrum: &ComplexSpectrum) -> Self {
        Self {
            re: g.constant(spectrum.re.clone()),
            im: g.constant(spectrum.im.clone()),
        }
    }

    pub fn value(&self, g: &Graph) -> ComplexSpectrum {
        ComplexSpectrum {
            re: g.value(self.re).clone(),
            im: g.value(self.im).clone(),
        }
    }
}

/// How a complex bin is collapsed to a magnitude before the log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Magnitude {
    /// `|Re| + |Im|`, the form used for supervision by default.
    #[default]
    L1,
    /// `sqrt(Re^2 + Im^2)`.
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSpectrumConfig {
    pub eps: Real,
    pub magnitude: Magnitude,
}

impl Default for LogSpectrumConfig {
    fn default() -> Self {
        Self {
            eps: LOG_EPS,
            magnitude: Magnitude::L1,
        }
    }
}

/// Non-negative per-bin values `log(1 + mag + eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSpectrum {
    pub values: Tensor,
    pub eps: Real,
}

fn check_plane_shape(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 || shape.contains(&0) {
        return Err(Error::dim(format!(
            "2-D transform needs non-empty trailing H, W axes, got {shape:?}"
        )));
    }
    let n = shape.len();
    Ok((shape[..n - 2].iter().product(), shape[n - 2], shape[n - 1]))
}

/// Forward DFT over the last two axes of a real tensor.
pub fn dft2(image: &Tensor) -> Result<ComplexSpectrum> {
    dft2_with(image, Method::Auto)
}

pub fn dft2_with(image: &Tensor, method: Method) -> Result<ComplexSpectrum> {
    let (planes, h, w) = check_plane_shape(image.shape())?;
    let mut re = image.data().to_vec();
    let mut im = vec![0.0; re.len()];
    fft::transform2_with(&mut re, &mut im, planes, h, w, Direction::Forward, method);
    Ok(ComplexSpectrum {
        re: Tensor::new(image.shape(), re)?,
        im: Tensor::new(image.shape(), im)?,
    })
}

/// Full complex inverse with `1/(H*W)` normalization.
pub fn idft2_complex(spectrum: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    let (planes, h, w) = check_plane_shape(spectrum.shape())?;
    let mut re = spectrum.re.data().to_vec();
    let mut im = spectrum.im.data().to_vec();
    fft::transform2(&mut re, &mut im, planes, h, w, Direction::Inverse);
    let scale = 1.0 / (h * w) as Real;
    re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= scale);
    Ok(ComplexSpectrum {
        re: Tensor::new(spectrum.shape(), re)?,
        im: Tensor::new(spectrum.shape(), im)?,
    })
}

/// Inverse DFT back to a real image; the imaginary residue is dropped.
pub fn idft2(spectrum: &ComplexSpectrum) -> Result<Tensor> {
    let full = idft2_complex(spectrum)?;
    let residue = full.im.data().iter().fold(0.0 as Real, |m, v| m.max(v.abs()));
    if residue > IMAG_RESIDUE_WARN {
        log::warn!("idft2 discarded an imaginary residue of {residue:e}");
    }
    Ok(full.re)
}

fn bin_magnitude(re: Real, im: Real, magnitude: Magnitude) -> Real {
    match magnitude {
        Magnitude::L1 => re.abs() + im.abs(),
        Magnitude::Euclidean => (re * re + im * im).sqrt(),
    }
}

pub fn log_real_transform(spectrum: &ComplexSpectrum, config: LogSpectrumConfig) -> LogSpectrum {
    let values = spectrum
        .re
        .zip_map(&spectrum.im, |r, i| {
            (bin_magnitude(r, i, config.magnitude) + config.eps).ln_1p()
        })
        .expect("spectrum planes share a shape");
    LogSpectrum {
        values,
        eps: config.eps,
    }
}

/// Differentiable log-real transform of a recorded spectrum.
pub fn log_real_var(g: &mut Graph, spectrum: &SpectrumVar, config: LogSpectrumConfig) -> Result<Var> {
    let mag = match config.magnitude {
        Magnitude::L1 => {
            let ar = g.abs(spectrum.re);
            let ai = g.abs(spectrum.im);
            g.add(ar, ai)?
        }
        Magnitude::Euclidean => {
            let r2 = g.square(spectrum.re);
            let i2 = g.square(spectrum.im);
            let s = g.add(r2, i2)?;
            g.sqrt(s)
        }
    };
    let shifted = g.add_scalar(mag, config.eps);
    Ok(g.log1p(shifted))
}

/// Mean absolute difference between the log-real spectra of a predicted
/// spectrum and of `target` (an image, transformed on the graph).
pub fn frequency_loss(
    g: &mut Graph,
    pred: &SpectrumVar,
    target: Var,
    config: LogSpectrumConfig,
) -> Result<Var> {
    let pred_shape = g.shape(pred.re).to_vec();
    if g.shape(target) != pred_shape.as_slice() || g.shape(pred.im) != pred_shape.as_slice() {
        return Err(Error::dim(format!(
            "frequency_loss: predicted spectrum {:?} vs target image {:?}",
            pred_shape,
            g.shape(target)
        )));
    }
    let (tr, ti) = g.dft2(target)?;
    let target_spec = SpectrumVar { re: tr, im: ti };
    let lp = log_real_var(g, pred, config)?;
    let lt = log_real_var(g, &target_spec, config)?;
    let diff = g.sub(lp, lt)?;
    let abs = g.abs(diff);
    Ok(g.mean(abs))
}

/// Grayscale H×W visualization: channel-averaged `log(1 + |F|)`, DC moved
/// to the center, min-max scaled to [0, 1]. A constant map yields zeros.
pub fn spectrum_to_grayscale(spectrum: &ComplexSpectrum) -> Result<Tensor> {
    let (planes, h, w) = check_plane_shape(spectrum.shape())?;
    let mut avg = vec![0.0; h * w];
    for p in 0..planes {
        for (i, slot) in avg.iter_mut().enumerate() {
            let (r, im) = (spectrum.re.data()[p * h * w + i], spectrum.im.data()[p * h * w + i]);
            *slot += bin_magnitude(r, im, Magnitude::Euclidean).ln_1p() / planes as Real;
        }
    }
    let mut shifted = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            shifted[((y + h / 2) % h) * w + (x + w / 2) % w] = avg[y * w + x];
        }
    }
    let lo = shifted.iter().copied().fold(Real::INFINITY, Real::min);
    let hi = shifted.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let range = hi - lo;
    let out = if range > 0.0 {
        shifted.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.0; h * w]
    };
    Tensor::new(&[h, w], out)
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;

    /// Naive double sum over 0-based indices, independent of the fft module.
    fn naive_dft(img: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
        let mut re = vec![0.0; h * w];
        let mut im = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                for y in 0..h {
                    for x in 0..w {
                        let a = -2.0
                            * std::f64::consts::PI
                            * ((y * u) as f64 / h as f64 + (x * v) as f64 / w as f64);
                        re[u * w + v] += img[y * w + x] * a.cos();
                        im[u * w + v] += img[y * w + x] * a.sin();
                    }
                }
            }
        }
        (re, im)
    }

    #[test]
    fn constant_image_has_only_dc() {
        let s = dft2(&Tensor::ones(&[1, 2, 2])).unwrap();
        assert_eq!(s.re.data()[0], 4.0);
        for i in 1..4 {
            assert!(s.re.data()[i].abs() < 1e-15 && s.im.data()[i].abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut img = Tensor::zeros(&[1, 4, 4]);
        img.data_mut()[0] = 1.0;
        let s = dft2(&img).unwrap();
        assert!(s.re.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(s.im.data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn two_by_two_worked_example() {
        let img = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = dft2(&img).unwrap();
        let (nr, ni) = naive_dft(img.data(), 2, 2);
        let expected = [10.0, -2.0, -4.0, 0.0];
        for i in 0..4 {
            assert!((s.re.data()[i] - expected[i]).abs() < 1e-12);
            assert!((nr[i] - expected[i]).abs() < 1e-12);
            assert!(s.im.data()[i].abs() < 1e-12 && ni[i].abs() < 1e-12);
        }
    }

    #[test]
    fn odd_extents_match_naive_oracle() {
        let (h, w) = (3, 5);
        let img: Vec<f64> = (0..h * w).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        let s = dft2(&Tensor::new(&[h, w], img.clone()).unwrap()).unwrap();
        let (nr, ni) = naive_dft(&img, h, w);
        for i in 0..h * w {
            assert!((s.re.data()[i] - nr[i]).abs() < 1e-10);
            assert!((s.im.data()[i] - ni[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_of_zero_and_dc_spectra() {
        let zero = ComplexSpectrum::zeros(&[1, 4, 4]);
        assert!(idft2(&zero).unwrap().data().iter().all(|&v| v == 0.0));
        let mut dc = ComplexSpectrum::zeros(&[1, 4, 4]);
        dc.re.data_mut()[0] = 16.0;
        let img = idft2(&dc).unwrap();
        assert!(img.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn log_real_scalar_cases() {
        let cfg = LogSpectrumConfig::default();
        let bins = |r: f64, i: f64| {
            let s = ComplexSpectrum::new(
                Tensor::new(&[1, 1], vec![r]).unwrap(),
                Tensor::new(&[1, 1], vec![i]).unwrap(),
            )
            .unwrap();
            log_real_transform(&s, cfg).values.data()[0]
        };
        assert!((bins(0.0, 0.0) - 1e-8).abs() < 1e-15);
        assert!((bins(std::f64::consts::E - 1.0, 0.0) - 1.0).abs() < 1e-8);
        assert!((bins(3.0, 4.0) - (8.0f64 + 1e-8).ln()).abs() < 1e-12);
        assert!((bins(3.0, 4.0) - 2.0794415).abs() < 1e-7);
        let euclid = LogSpectrumConfig {
            magnitude: Magnitude::Euclidean,
            ..cfg
        };
        let s = ComplexSpectrum::new(
            Tensor::new(&[1, 1], vec![3.0]).unwrap(),
            Tensor::new(&[1, 1], vec![4.0]).unwrap(),
        )
        .unwrap();
        assert!((log_real_transform(&s, euclid).values.data()[0] - (6.0f64 + 1e-8).ln()).abs() < 1e-12);
    }

    fn loss_value(pred: &ComplexSpectrum, target: &Tensor) -> f64 {
        let mut g = Graph::new();
        let p = SpectrumVar::constant(&mut g, pred);
        let t = g.constant(target.clone());
        let l = frequency_loss(&mut g, &p, t, LogSpectrumConfig::default()).unwrap();
        g.value(l).item().unwrap()
    }

    #[test]
    fn frequency_loss_worked_examples() {
        let target = Tensor::new(&[1, 3, 3], (0..9).map(|i| i as f64 / 9.0).collect()).unwrap();
        assert_eq!(loss_value(&dft2(&target).unwrap(), &target), 0.0);

        let one_pixel = Tensor::new(&[1, 1, 1], vec![std::f64::consts::E - 1.0]).unwrap();
        let zero_spec = ComplexSpectrum::zeros(&[1, 1, 1]);
        assert!((loss_value(&zero_spec, &one_pixel) - 1.0).abs() < 1e-7);

        let ones = ComplexSpectrum::new(Tensor::ones(&[1, 2, 2]), Tensor::zeros(&[1, 2, 2])).unwrap();
        let l = loss_value(&ones, &Tensor::zeros(&[1, 2, 2]));
        assert!((l - 2f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn frequency_loss_rejects_mismatched_extents() {
        let mut g = Graph::new();
        let p = SpectrumVar::constant(&mut g, &ComplexSpectrum::zeros(&[1, 4, 4]));
        let t = g.constant(Tensor::zeros(&[1, 4, 2]));
        assert!(matches!(
            frequency_loss(&mut g, &p, t, LogSpectrumConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn grayscale_of_constant_image_is_a_centered_dot() {
        let s = dft2(&Tensor::full(&[3, 8, 8], 0.4)).unwrap();
        let gray = spectrum_to_grayscale(&s).unwrap();
        assert_eq!(gray.shape(), &[8, 8]);
        for (i, &v) in gray.data().iter().enumerate() {
            if i == 4 * 8 + 4 {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn grayscale_of_zero_spectrum_is_black() {
        let gray = spectrum_to_grayscale(&ComplexSpectrum::zeros(&[1, 4, 4])).unwrap();
        assert!(gray.data().iter().all(|&v| v == 0.0));
    }
}
