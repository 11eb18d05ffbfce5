//! Vector-Jacobian products for every recorded operation.

use super::graph::{dims4, plane_dims, sigmoid, split_axis, transpose_batched, Graph, Op, Var};
use super::kernels::{self, ConvGeom};
use super::Real;
use crate::error::Result;
use crate::spectral::fft::{self, Direction};

type Contributions = Vec<(Var, Vec<Real>)>;

impl Graph {
    fn data(&self, v: Var) -> &[Real] {
        self.nodes[v.0].value.data()
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients flowing from node `idx` (with upstream gradient `g`) to
    /// each of its inputs that requires one.
    pub(crate) fn node_backward(&self, idx: usize, g: &[Real]) -> Result<Contributions> {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let mut res = Contributions::new();
        let elementwise = |v: Var, f: &dyn Fn(Real, Real) -> Real| -> Vec<Real> {
            self.data(v).iter().zip(g).map(|(&x, &gy)| f(x, gy)).collect()
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                res.push((*a, g.to_vec()));
                res.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                res.push((*a, g.to_vec()));
                if self.wants(*b) {
                    res.push((*b, g.iter().map(|x| -x).collect()));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    res.push((*a, zip_mul(g, self.data(*b))));
                }
                if self.wants(*b) {
                    res.push((*b, zip_mul(g, self.data(*a))));
                }
            }
            Op::Div(a, b) => {
                let bd = self.data(*b);
                if self.wants(*a) {
                    res.push((*a, g.iter().zip(bd).map(|(gy, y)| gy / y).collect()));
                }
                if self.wants(*b) {
                    let ad = self.data(*a);
                    res.push((
                        *b,
                        g.iter()
                            .zip(ad)
                            .zip(bd)
                            .map(|((gy, x), y)| -gy * x / (y * y))
                            .collect(),
                    ));
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => res.push((*a, g.to_vec())),
            Op::MulScalar(a, s) => res.push((*a, g.iter().map(|x| x * s).collect())),
            Op::Abs(a) => res.push((
                *a,
                elementwise(*a, &|x, gy| {
                    if x > 0.0 {
                        gy
                    } else if x < 0.0 {
                        -gy
                    } else {
                        0.0
                    }
                }),
            )),
            Op::Log1p(a) => res.push((*a, elementwise(*a, &|x, gy| gy / (1.0 + x)))),
            Op::Relu(a) => res.push((*a, elementwise(*a, &|x, gy| if x > 0.0 { gy } else { 0.0 }))),
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                res.push((*a, elementwise(*a, &|x, gy| if x > 0.0 { gy } else { s * gy })))
            }
            Op::Sigmoid(a) => res.push((
                *a,
                out.iter().zip(g).map(|(y, gy)| gy * y * (1.0 - y)).collect(),
            )),
            Op::Softplus(a) => res.push((*a, elementwise(*a, &|x, gy| gy * sigmoid(x)))),
            Op::Sqrt(a) => res.push((
                *a,
                out.iter()
                    .zip(g)
                    .map(|(&y, gy)| if y > 0.0 { 0.5 * gy / y } else { 0.0 })
                    .collect(),
            )),
            Op::Square(a) => res.push((*a, elementwise(*a, &|x, gy| 2.0 * x * gy))),
            Op::Sum(a) => res.push((*a, vec![g[0]; self.data(*a).len()])),
            Op::Mean(a) => {
                let n = self.data(*a).len();
                res.push((*a, vec![g[0] / n as Real; n]));
            }
            Op::SumAxis { input, axis } => {
                let shape = self.nodes[input.0].value.shape();
                let (outer, n, inner) = split_axis(shape, *axis);
                let mut d = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for k in 0..n {
                        d[(o * n + k) * inner..(o * n + k + 1) * inner].copy_from_slice(src);
                    }
                }
                res.push((*input, d));
            }
            Op::Transpose(a) => {
                // output is [.., cols, rows]; transposing it back restores the input layout
                let s = node.value.shape();
                let n = s.len();
                let batch = if n == 3 { s[0] } else { 1 };
                res.push((*a, transpose_batched(g, batch, s[n - 2], s[n - 1])));
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for v in inputs {
                    let n = self.nodes[v.0].value.shape()[*axis];
                    if self.wants(*v) {
                        let mut d = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&g[base..base + n * inner]);
                        }
                        res.push((*v, d));
                    }
                    offset += n;
                }
            }
            Op::Slice { input, axis, start } => {
                let shape = self.nodes[input.0].value.shape();
                let (outer, n, inner) = split_axis(shape, *axis);
                let len = node.value.shape()[*axis];
                let mut d = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                res.push((*input, d));
            }
            Op::Upsample { input, factor } => {
                let [b, c, h, w] = dims4("upsample", &self.nodes[input.0].value)?;
                res.push((
                    *input,
                    kernels::upsample_nearest_backward(g, b * c, h, w, *factor),
                ));
            }
            Op::Matmul(a, b) => {
                let (sa, sb) = (
                    self.nodes[a.0].value.shape(),
                    self.nodes[b.0].value.shape(),
                );
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    let mut d = vec![0.0; m * k];
                    kernels::gemm(g, false, self.data(*b), true, &mut d, m, n, k, false);
                    res.push((*a, d));
                }
                if self.wants(*b) {
                    let mut d = vec![0.0; k * n];
                    kernels::gemm(self.data(*a), true, g, false, &mut d, k, m, n, false);
                    res.push((*b, d));
                }
            }
            Op::Bmm(a, b) => {
                let (sa, sb) = (
                    self.nodes[a.0].value.shape(),
                    self.nodes[b.0].value.shape(),
                );
                let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (ad, bd) = (self.data(*a), self.data(*b));
                if self.wants(*a) {
                    let mut d = vec![0.0; bs * m * k];
                    for i in 0..bs {
                        kernels::gemm(
                            &g[i * m * n..(i + 1) * m * n],
                            false,
                            &bd[i * k * n..(i + 1) * k * n],
                            true,
                            &mut d[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                            false,
                        );
                    }
                    res.push((*a, d));
                }
                if self.wants(*b) {
                    let mut d = vec![0.0; bs * k * n];
                    for i in 0..bs {
                        kernels::gemm(
                            &ad[i * m * k..(i + 1) * m * k],
                            true,
                            &g[i * m * n..(i + 1) * m * n],
                            false,
                            &mut d[i * k * n..(i + 1) * k * n],
                            k,
                            m,
                            n,
                            false,
                        );
                    }
                    res.push((*b, d));
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let [b, c, h, w] = dims4("conv2d", &self.nodes[input.0].value)?;
                let [o, _, k, _] = dims4("conv2d", &self.nodes[weight.0].value)?;
                let geom = ConvGeom::new(c, h, w, k, *stride, *padding)
                    .expect("geometry validated in forward");
                let grads = kernels::conv2d_backward(
                    &geom,
                    b,
                    o,
                    self.data(*input),
                    self.data(*weight),
                    g,
                    self.wants(*input),
                    self.wants(*weight),
                    bias.is_some_and(|bv| self.wants(bv)),
                );
                if let Some(d) = grads.input {
                    res.push((*input, d));
                }
                if let Some(d) = grads.weight {
                    res.push((*weight, d));
                }
                if let (Some(bv), Some(d)) = (bias, grads.bias) {
                    res.push((*bv, d));
                }
            }
            Op::InstanceNorm { input, inv_std } => {
                let [_, _, h, w] = dims4("instance_norm", &node.value)?;
                res.push((
                    *input,
                    kernels::instance_norm_backward(out, inv_std, g, h * w),
                ));
            }
            Op::Dft2 { input, imag } => {
                let (planes, h, w) = plane_dims("dft2", node.value.shape())?;
                let (mut re, mut im) = if *imag {
                    (vec![0.0; g.len()], g.to_vec())
                } else {
                    (g.to_vec(), vec![0.0; g.len()])
                };
                fft::transform2(&mut re, &mut im, planes, h, w, Direction::Inverse);
                res.push((*input, re));
            }
            Op::NormalizedMix { scores, values, totals } => {
                let [b, c, n] = *node.value.shape() else { unreachable!("mix output is 3-D") };
                let (sd, vd) = (self.data(*scores), self.data(*values));
                if self.wants(*values) {
                    // dv[c,j] = sum_i g[c,i] s[i,j] / T_i
                    let mut d = vec![0.0; b * c * n];
                    for bi in 0..b {
                        for ch in 0..c {
                            for i in 0..n {
                                let gi = g[(bi * c + ch) * n + i] / totals[bi * n + i];
                                let row = &sd[(bi * n + i) * n..(bi * n + i + 1) * n];
                                let dst = &mut d[(bi * c + ch) * n..(bi * c + ch + 1) * n];
                                for (dv, &s) in dst.iter_mut().zip(row) {
                                    *dv += gi * s;
                                }
                            }
                        }
                    }
                    res.push((*values, d));
                }
                if self.wants(*scores) {
                    // ds[i,j] = (sum_c g[c,i] v[c,j] - sum_c g[c,i] y[c,i]) / T_i
                    let mut d = vec![0.0; b * n * n];
                    for bi in 0..b {
                        for i in 0..n {
                            let t = totals[bi * n + i];
                            let mut gy = 0.0;
                            for ch in 0..c {
                                let k = (bi * c + ch) * n + i;
                                gy += g[k] * out[k];
                            }
                            let dst = &mut d[(bi * n + i) * n..(bi * n + i + 1) * n];
                            for ch in 0..c {
                                let gc = g[(bi * c + ch) * n + i];
                                let fiber = &vd[(bi * c + ch) * n..(bi * c + ch + 1) * n];
                                for (ds, &v) in dst.iter_mut().zip(fiber) {
                                    *ds += gc * v;
                                }
                            }
                            for ds in dst.iter_mut() {
                                *ds = (*ds - gy) / t;
                            }
                        }
                    }
                    res.push((*scores, d));
                }
            }
        }
        Ok(res)
    }
}

fn zip_mul(a: &[Real], b: &[Real]) -> Vec<Real> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}
