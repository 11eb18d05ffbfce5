//! Raw numeric kernels over flat slices. No tape, no shape bookkeeping
//! beyond what the caller passes in.

use super::Real;

/// `c = a' * b' (+ c if accumulate)` for row-major operands, where `a'` is
/// `a` (m×k) or its transpose when `a` is stored k×m, and likewise for `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    a: &[Real],
    trans_a: bool,
    b: &[Real],
    trans_b: bool,
    c: &mut [Real],
    m: usize,
    k: usize,
    n: usize,
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta: Real = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above pin every operand to exactly the extent
    // implied by (m, k, n) and the chosen strides.
    unsafe {
        raw_gemm(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Sum of `terms` taken in ascending order; the result depends only on the
/// multiset of values. Reorders `terms`.
pub fn canonical_sum(terms: &mut [Real]) -> Real {
    terms.sort_unstable_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

#[cfg(not(feature = "f32"))]
#[allow(clippy::too_many_arguments)]
unsafe fn raw_gemm(
    m: usize,
    k: usize,
    n: usize,
    a: *const Real,
    rsa: isize,
    csa: isize,
    b: *const Real,
    rsb: isize,
    csb: isize,
    beta: Real,
    c: *mut Real,
    rsc: isize,
    csc: isize,
) {
    matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
}

#[cfg(feature = "f32")]
#[allow(clippy::too_many_arguments)]
unsafe fn raw_gemm(
    m: usize,
    k: usize,
    n: usize,
    a: *const Real,
    rsa: isize,
    csa: isize,
    b: *const Real,
    rsb: isize,
    csb: isize,
    beta: Real,
    c: *mut Real,
    rsc: isize,
    csc: isize,
) {
    matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
}

/// Geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        let span_h = height + 2 * padding;
        let span_w = width + 2 * padding;
        if stride == 0 || span_h < kernel || span_w < kernel {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_height: (span_h - kernel) / stride + 1,
            out_width: (span_w - kernel) / stride + 1,
        })
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }
}

/// Unfolds one C×H×W image into a (C·k·k)×(H'·W') patch matrix.
pub(crate) fn im2col(g: &ConvGeom, image: &[Real], cols: &mut [Real]) {
    let k = g.kernel;
    let (oh, ow) = (g.out_height, g.out_width);
    let plane = oh * ow;
    for c in 0..g.channels {
        let src = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src_row = &src[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, slot) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        *slot = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
pub(crate) fn col2im_add(g: &ConvGeom, cols: &[Real], image: &mut [Real]) {
    let k = g.kernel;
    let (oh, ow) = (g.out_height, g.out_width);
    let plane = oh * ow;
    for c in 0..g.channels {
        let dst = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, &v) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Batched convolution forward: input B×C×H×W, weight O×C×k×k.
pub(crate) fn conv2d_forward(
    g: &ConvGeom,
    batch: usize,
    out_channels: usize,
    input: &[Real],
    weight: &[Real],
    bias: Option<&[Real]>,
) -> Vec<Real> {
    let in_stride = g.channels * g.height * g.width;
    let plane = g.col_cols();
    let out_stride = out_channels * plane;
    let mut out = vec![0.0; batch * out_stride];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; g.col_rows() * plane]
    };
    for b in 0..batch {
        let x = &input[b * in_stride..(b + 1) * in_stride];
        let y = &mut out[b * out_stride..(b + 1) * out_stride];
        let patches: &[Real] = if g.is_pointwise() {
            x
        } else {
            im2col(g, x, &mut cols);
            &cols
        };
        gemm(
            weight,
            false,
            patches,
            false,
            y,
            out_channels,
            g.col_rows(),
            plane,
            false,
        );
        if let Some(bias) = bias {
            for (o, &bv) in bias.iter().enumerate() {
                for v in &mut y[o * plane..(o + 1) * plane] {
                    *v += bv;
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<Real>>,
    pub weight: Option<Vec<Real>>,
    pub bias: Option<Vec<Real>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    batch: usize,
    out_channels: usize,
    input: &[Real],
    weight: &[Real],
    grad_out: &[Real],
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> ConvGrads {
    let in_stride = g.channels * g.height * g.width;
    let plane = g.col_cols();
    let out_stride = out_channels * plane;
    let rows = g.col_rows();
    let mut d_input = need_input.then(|| vec![0.0; batch * in_stride]);
    let mut d_weight = need_weight.then(|| vec![0.0; out_channels * rows]);
    let mut d_bias = need_bias.then(|| vec![0.0; out_channels]);
    let mut cols = vec![0.0; rows * plane];
    let mut d_cols = vec![0.0; rows * plane];
    for b in 0..batch {
        let dy = &grad_out[b * out_stride..(b + 1) * out_stride];
        if let Some(db) = d_bias.as_mut() {
            for (o, slot) in db.iter_mut().enumerate() {
                *slot += dy[o * plane..(o + 1) * plane].iter().sum::<Real>();
            }
        }
        if let Some(dw) = d_weight.as_mut() {
            let x = &input[b * in_stride..(b + 1) * in_stride];
            let patches: &[Real] = if g.is_pointwise() {
                x
            } else {
                im2col(g, x, &mut cols);
                &cols
            };
            gemm(dy, false, patches, true, dw, out_channels, plane, rows, true);
        }
        if let Some(dx) = d_input.as_mut() {
            let dx = &mut dx[b * in_stride..(b + 1) * in_stride];
            if g.is_pointwise() {
                gemm(weight, true, dy, false, dx, rows, out_channels, plane, true);
            } else {
                gemm(
                    weight,
                    true,
                    dy,
                    false,
                    &mut d_cols,
                    rows,
                    out_channels,
                    plane,
                    false,
                );
                col2im_add(g, &d_cols, dx);
            }
        }
    }
    ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    }
}

/// Per-plane normalization statistics: returns (normalized, inverse std).
pub(crate) fn instance_norm_forward(
    input: &[Real],
    planes: usize,
    plane: usize,
    eps: Real,
) -> (Vec<Real>, Vec<Real>) {
    let mut out = vec![0.0; input.len()];
    let mut inv_std = vec![0.0; planes];
    for p in 0..planes {
        let x = &input[p * plane..(p + 1) * plane];
        let mean = x.iter().sum::<Real>() / plane as Real;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / plane as Real;
        let s = 1.0 / (var + eps).sqrt();
        inv_std[p] = s;
        for (o, &v) in out[p * plane..(p + 1) * plane].iter_mut().zip(x) {
            *o = (v - mean) * s;
        }
    }
    (out, inv_std)
}

pub(crate) fn instance_norm_backward(
    normalized: &[Real],
    inv_std: &[Real],
    grad_out: &[Real],
    plane: usize,
) -> Vec<Real> {
    let mut dx = vec![0.0; normalized.len()];
    let n = plane as Real;
    for (p, &s) in inv_std.iter().enumerate() {
        let range = p * plane..(p + 1) * plane;
        let y = &normalized[range.clone()];
        let dy = &grad_out[range.clone()];
        let mean_dy = dy.iter().sum::<Real>() / n;
        let mean_dy_y = dy.iter().zip(y).map(|(a, b)| a * b).sum::<Real>() / n;
        for ((d, &g), &yv) in dx[range].iter_mut().zip(dy).zip(y) {
            *d = s * (g - mean_dy - yv * mean_dy_y);
        }
    }
    dx
}

pub(crate) fn upsample_nearest(
    input: &[Real],
    planes: usize,
    height: usize,
    width: usize,
    factor: usize,
) -> Vec<Real> {
    let (oh, ow) = (height * factor, width * factor);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &input[p * height * width..(p + 1) * height * width];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            let row = &src[(y / factor) * width..(y / factor + 1) * width];
            for (x, slot) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *slot = row[x / factor];
            }
        }
    }
    out
}

pub(crate) fn upsample_nearest_backward(
    grad_out: &[Real],
    planes: usize,
    height: usize,
    width: usize,
    factor: usize,
) -> Vec<Real> {
    let (oh, ow) = (height * factor, width * factor);
    let mut dx = vec![0.0; planes * height * width];
    for p in 0..planes {
        let src = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * height * width..(p + 1) * height * width];
        for y in 0..oh {
            for x in 0..ow {
                dst[(y / factor) * width + x / factor] += src[y * ow + x];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[Real], rows: usize, cols: usize) -> Vec<Real> {
        let mut t = vec![0.0; a.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = a[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn gemm_transpose_flags_match_naive_product() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<Real> = (0..m * k).map(|i| i as Real * 0.5 - 2.0).collect();
        let b: Vec<Real> = (0..k * n).map(|i| (i as Real).sin()).collect();
        let expect = naive(&a, &b, m, k, n);
        let at = transpose(&a, m, k);
        let bt = transpose(&b, k, n);
        for (lhs, ta) in [(&a, false), (&at, true)] {
            for (rhs, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(lhs, ta, rhs, tb, &mut c, m, k, n, false);
                for (x, y) in c.iter().zip(&expect) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let g = ConvGeom::new(2, 5, 4, 3, 2, 1).unwrap();
        let x: Vec<Real> = (0..2 * 5 * 4).map(|i| (i as Real * 0.37).cos()).collect();
        let y: Vec<Real> = (0..g.col_rows() * g.col_cols())
            .map(|i| (i as Real * 0.11).sin())
            .collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&g, &x, &mut cols);
        let lhs: Real = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&g, &y, &mut back);
        let rhs: Real = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn output_extent_follows_floor_formula() {
        let g = ConvGeom::new(1, 8, 7, 3, 2, 1).unwrap();
        assert_eq!((g.out_height, g.out_width), (4, 4));
        assert!(ConvGeom::new(1, 2, 2, 5, 1, 0).is_none());
    }
}
