//! Separable 2-D discrete Fourier transforms over interleaved planes.
//!
//! All transforms here are unnormalized:
//! `X(k) = sum_j x(j) * exp(-+ 2*pi*i*j*k/n)` with the sign chosen by
//! [`Direction`]. Callers apply the `1/(H*W)` factor for inverses.

use std::f64::consts::PI;

use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    /// Radix-2 for power-of-two extents, direct summation otherwise.
    #[default]
    Auto,
    /// O(n^2) summation regardless of extent.
    Direct,
}

struct Twiddles {
    cos: Vec<Real>,
    sin: Vec<Real>,
}

impl Twiddles {
    /// `sin` already carries the direction's sign.
    fn new(n: usize, dir: Direction) -> Self {
        let sign = match dir {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let angles = (0..n).map(|t| 2.0 * PI * t as f64 / n as f64);
        Self {
            cos: angles.clone().map(|a| a.cos() as Real).collect(),
            sin: angles.map(|a| (sign * a.sin()) as Real).collect(),
        }
    }
}

fn direct(re: &mut [Real], im: &mut [Real], tw: &Twiddles, out_re: &mut [Real], out_im: &mut [Real]) {
    let n = re.len();
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for j in 0..n {
            let t = (j * k) % n;
            let (c, s) = (tw.cos[t], tw.sin[t]);
            sr += re[j] * c - im[j] * s;
            si += re[j] * s + im[j] * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
    re.copy_from_slice(out_re);
    im.copy_from_slice(out_im);
}

fn radix2(re: &mut [Real], im: &mut [Real], tw: &Twiddles) {
    let n = re.len();
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let (c, s) = (tw.cos[j * step], tw.sin[j * step]);
                let (a, b) = (start + j, start + j + half);
                let vr = re[b] * c - im[b] * s;
                let vi = re[b] * s + im[b] * c;
                re[b] = re[a] - vr;
                im[b] = im[a] - vi;
                re[a] += vr;
                im[a] += vi;
            }
        }
        len *= 2;
    }
}

struct Plan {
    tw: Twiddles,
    fast: bool,
    scratch_re: Vec<Real>,
    scratch_im: Vec<Real>,
}

impl Plan {
    fn new(n: usize, dir: Direction, method: Method) -> Self {
        Self {
            tw: Twiddles::new(n, dir),
            fast: method == Method::Auto && n.is_power_of_two(),
            scratch_re: vec![0.0; n],
            scratch_im: vec![0.0; n],
        }
    }

    fn run(&mut self, re: &mut [Real], im: &mut [Real]) {
        if self.fast {
            radix2(re, im, &self.tw);
        } else {
            direct(re, im, &self.tw, &mut self.scratch_re, &mut self.scratch_im);
        }
    }
}

/// 1-D transform of a single complex sequence, in place.
pub fn transform1(re: &mut [Real], im: &mut [Real], dir: Direction, method: Method) {
    assert_eq!(re.len(), im.len());
    if re.is_empty() {
        return;
    }
    Plan::new(re.len(), dir, method).run(re, im);
}

/// In-place 2-D transform of `planes` consecutive H×W complex planes.
pub fn transform2(re: &mut [Real], im: &mut [Real], planes: usize, h: usize, w: usize, dir: Direction) {
    transform2_with(re, im, planes, h, w, dir, Method::Auto);
}

pub fn transform2_with(
    re: &mut [Real],
    im: &mut [Real],
    planes: usize,
    h: usize,
    w: usize,
    dir: Direction,
    method: Method,
) {
    assert_eq!(re.len(), planes * h * w);
    assert_eq!(im.len(), planes * h * w);
    let mut rows = Plan::new(w, dir, method);
    let mut cols = Plan::new(h, dir, method);
    let mut col_re = vec![0.0; h];
    let mut col_im = vec![0.0; h];
    for p in 0..planes {
        let pr = &mut re[p * h * w..(p + 1) * h * w];
        let pi = &mut im[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            rows.run(&mut pr[y * w..(y + 1) * w], &mut pi[y * w..(y + 1) * w]);
        }
        for x in 0..w {
            for y in 0..h {
                col_re[y] = pr[y * w + x];
                col_im[y] = pi[y * w + x];
            }
            cols.run(&mut col_re, &mut col_im);
            for y in 0..h {
                pr[y * w + x] = col_re[y];
                pi[y * w + x] = col_im[y];
            }
        }
    }
}
