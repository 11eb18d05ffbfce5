//! Image-quality metrics that need no pretrained networks.

use crate::error::{Error, Result};
use crate::spectral::{frequency_loss, LogSpectrumConfig, SpectrumVar};
use crate::tensor::{Graph, Real, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: Real = 1.5;
pub const SSIM_K1: Real = 0.01;
pub const SSIM_K2: Real = 0.03;

fn planes(a: &Tensor, b: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let s = a.shape();
    if s.len() < 2 || a.numel() == 0 {
        return Err(Error::dim(format!("{what} needs non-empty H×W planes, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok((a.numel() / (h * w), h, w))
}

fn gaussian_window(size: usize, sigma: Real) -> Vec<Real> {
    let c = (size / 2) as Real;
    let raw: Vec<Real> = (0..size)
        .map(|i| {
            let d = i as Real - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: Real = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of one plane.
fn filter_valid(plane: &[Real], h: usize, w: usize, k: &[Real]) -> Vec<Real> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over valid Gaussian windows, averaged across planes, for
/// values with dynamic range 1.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<Real> {
    let (n, h, w) = planes(a, b, "ssim")?;
    let mut size = SSIM_WINDOW;
    let fit = h.min(w);
    if fit < size {
        size = if fit % 2 == 1 { fit } else { fit - 1 };
        log::warn!("ssim: {h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window, using {size}x{size}");
    }
    let k = gaussian_window(size, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let hw = h * w;
    let mut total = 0.0;
    for p in 0..n {
        let x = &a.data()[p * hw..(p + 1) * hw];
        let y = &b.data()[p * hw..(p + 1) * hw];
        let xx: Vec<Real> = x.iter().map(|v| v * v).collect();
        let yy: Vec<Real> = y.iter().map(|v| v * v).collect();
        let xy: Vec<Real> = x.iter().zip(y).map(|(u, v)| u * v).collect();
        let mx = filter_valid(x, h, w, &k);
        let my = filter_valid(y, h, w, &k);
        let sxx = filter_valid(&xx, h, w, &k);
        let syy = filter_valid(&yy, h, w, &k);
        let sxy = filter_valid(&xy, h, w, &k);
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            let num = (2.0 * ux * uy + c1) * (2.0 * cov + c2);
            let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
            acc += num / den;
        }
        total += acc / mx.len() as Real;
    }
    Ok(total / n as Real)
}

/// Peak signal-to-noise ratio in dB for range-1 images; `+inf` when equal.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<Real> {
    planes(a, b, "psnr")?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<Real>()
        / a.numel() as Real;
    if mse == 0.0 {
        return Ok(Real::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean absolute difference of the log-real spectra of two images. Runs the
/// training frequency loss on a throwaway graph, so the two agree exactly.
pub fn log_spectral_distance(a: &Tensor, b: &Tensor) -> Result<Real> {
    planes(a, b, "log_spectral_distance")?;
    let mut g = Graph::new();
    let av = g.constant(a.clone());
    let (re, im) = g.dft2(av)?;
    let bv = g.constant(b.clone());
    let loss = frequency_loss(&mut g, &SpectrumVar { re, im }, bv, LogSpectrumConfig::default())?;
    g.value(loss).item()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub ssim: Real,
    pub psnr: Real,
    pub lsd: Real,
}

impl ImageMetrics {
    pub fn compute(id: impl Into<String>, pred: &Tensor, gt: &Tensor) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            ssim: ssim(pred, gt)?,
            psnr: psnr(pred, gt)?,
            lsd: log_spectral_distance(pred, gt)?,
        })
    }
}

/// Per-image metrics and their corpus means.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "image_id,ssim,psnr,lsd";

    pub fn push(&mut self, m: ImageMetrics) {
        self.images.push(m);
    }

    fn mean_of(&self, f: impl Fn(&ImageMetrics) -> Real) -> Real {
        if self.images.is_empty() {
            return Real::NAN;
        }
        self.images.iter().map(f).sum::<Real>() / self.images.len() as Real
    }

    pub fn mean_ssim(&self) -> Real {
        self.mean_of(|m| m.ssim)
    }

    /// Infinite per-image values (identical pairs) make this infinite too.
    pub fn mean_psnr(&self) -> Real {
        self.mean_of(|m| m.psnr)
    }

    pub fn mean_lsd(&self) -> Real {
        self.mean_of(|m| m.lsd)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for m in &self.images {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", m.id, m.ssim, m.psnr, m.lsd));
        }
        out.push_str(&format!(
            "mean,{:?},{:?},{:?}\n",
            self.mean_ssim(),
            self.mean_psnr(),
            self.mean_lsd()
        ));
        out
    }
}
