use std::collections::HashMap;

use super::kernels::{self, ConvGeom};
use super::{ensure_same_shape, ParamId, ParamStore, ParamView, Real, Tensor};
use crate::error::{Error, Result};
use crate::spectral::fft::{self, Direction};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, Real),
    Abs(Var),
    Log1p(Var),
    Relu(Var),
    LeakyRelu(Var, Real),
    Sigmoid(Var),
    Softplus(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumAxis { input: Var, axis: usize },
    Reshape(Var),
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Upsample { input: Var, factor: usize },
    Matmul(Var, Var),
    Bmm(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    InstanceNorm { input: Var, inv_std: Vec<Real> },
    Dft2 { input: Var, imag: bool },
    NormalizedMix { scores: Var, values: Var, totals: Vec<Real> },
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Append-only recording tape.
///
/// Nodes are stored in creation order, so every operation's inputs precede
/// it and a reverse sweep is a valid topological traversal.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    bindings: Vec<Binding>,
    bound: HashMap<(String, usize, bool), Var>,
}

struct Binding {
    label: String,
    id: ParamId,
    var: Var,
}

/// Result of a backward sweep: one optional gradient per recorded node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    bindings: Vec<(String, ParamId, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adds the gradients of every trainable binding of `store` into the
    /// store's gradient slots.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (label, id, var) in &self.bindings {
            if label != store.label() {
                continue;
            }
            let Some(g) = self.get(*var) else { continue };
            let param = store.get_mut(*id);
            match param.grad.as_mut() {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => param.grad = Some(g.clone()),
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    /// A leaf that takes no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked (used for inputs under test).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Copy of `v`'s value that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Binds a parameter into this graph. Repeated binds of the same
    /// parameter return the same leaf so gradients accumulate once.
    pub fn param(&mut self, view: &ParamView<'_>, id: ParamId) -> Var {
        let key = (view.store.label().to_owned(), id.0, view.trainable);
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let value = view.store.get(id).value.clone();
        let v = self.push(value, Op::Leaf, view.trainable);
        if view.trainable {
            self.bindings.push(Binding {
                label: view.store.label().to_owned(),
                id,
                var: v,
            });
        }
        self.bound.insert(key, v);
        v
    }

    // ---- elementwise -------------------------------------------------

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(Real, Real) -> Real,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        ensure_same_shape(name, ta, tb)?;
        let value = ta.zip_map(tb, f)?;
        Ok(self.push_op(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, s: Real) -> Var {
        let value = self.nodes[a.0].value.map(|x| x + s);
        self.push_op(value, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, s: Real) -> Var {
        let value = self.nodes[a.0].value.map(|x| x * s);
        self.push_op(value, Op::MulScalar(a, s), &[a])
    }

    fn unary(&mut self, a: Var, f: impl Fn(Real) -> Real, op: Op) -> Var {
        let value = self.nodes[a.0].value.map(f);
        self.push_op(value, op, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Real::abs, Op::Abs(a))
    }

    pub fn log1p(&mut self, a: Var) -> Var {
        self.unary(a, Real::ln_1p, Op::Log1p(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: Real) -> Var {
        self.unary(
            a,
            move |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)` evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Square root; the backward rule uses 0 at exactly 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Real::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    // ---- reductions --------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        self.push_op(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.nodes[a.0].value.mean();
        self.push_op(Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Sums over `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let shape = t.shape();
        if axis >= shape.len() {
            return Err(Error::dim(format!("sum_axis: axis {axis} of {shape:?}")));
        }
        let (outer, n, inner) = split_axis(shape, axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &t.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut new_shape = shape.to_vec();
        new_shape[axis] = 1;
        let value = Tensor::new(&new_shape, out)?;
        Ok(self.push_op(value, Op::SumAxis { input: a, axis }, &[a]))
    }

    // ---- structural --------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[a.0].value.clone().reshape(shape)?;
        Ok(self.push_op(value, Op::Reshape(a), &[a]))
    }

    /// Swaps the last two axes of a 2-D or 3-D tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let (batch, rows, cols) = match *t.shape() {
            [r, c] => (1, r, c),
            [b, r, c] => (b, r, c),
            _ => {
                return Err(Error::dim(format!(
                    "transpose needs 2-D or 3-D input, got {:?}",
                    t.shape()
                )))
            }
        };
        let data = transpose_batched(t.data(), batch, rows, cols);
        let mut shape = t.shape().to_vec();
        let n = shape.len();
        shape.swap(n - 1, n - 2);
        let value = Tensor::new(&shape, data)?;
        Ok(self.push_op(value, Op::Transpose(a), &[a]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let base = self.nodes[first.0].value.shape().to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat: axis {axis} of {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.nodes[v.0].value.shape();
            let agree = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !agree {
                return Err(Error::dim(format!(
                    "concat along axis {axis}: {base:?} vs {s:?}"
                )));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = &self.nodes[v.0].value;
                let n = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        Ok(self.push_op(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let shape = t.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "slice [{start}, {}) along axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, n, inner) = split_axis(shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[axis] = len;
        let value = Tensor::new(&new_shape, data)?;
        Ok(self.push_op(value, Op::Slice { input: a, axis, start }, &[a]))
    }

    /// Nearest-neighbour upsampling of a B×C×H×W tensor.
    pub fn upsample_nearest(&mut self, a: Var, factor: usize) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let [b, c, h, w] = dims4("upsample_nearest", t)?;
        if factor == 0 {
            return Err(Error::dim("upsample factor must be positive"));
        }
        let data = kernels::upsample_nearest(t.data(), b * c, h, w, factor);
        let value = Tensor::new(&[b, c, h * factor, w * factor], data)?;
        Ok(self.push_op(value, Op::Upsample { input: a, factor }, &[a]))
    }

    // ---- linear algebra ----------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, k2, n) = match (ta.shape(), tb.shape()) {
            (&[m, k], &[k2, n]) => (m, k, k2, n),
            (sa, sb) => {
                return Err(Error::dim(format!(
                    "matmul needs 2-D operands, got {sa:?} and {sb:?}"
                )))
            }
        };
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul inner extents differ: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(ta.data(), false, tb.data(), false, &mut out, m, k, n, false);
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push_op(value, Op::Matmul(a, b), &[a, b]))
    }

    /// Batched product of B×M×K and B×K×N tensors.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (bs, m, k, n) = match (ta.shape(), tb.shape()) {
            (&[b1, m, k], &[b2, k2, n]) if b1 == b2 && k == k2 => (b1, m, k, n),
            (sa, sb) => {
                return Err(Error::dim(format!(
                    "bmm shapes incompatible: {sa:?} x {sb:?}"
                )))
            }
        };
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            kernels::gemm(
                &ta.data()[i * m * k..(i + 1) * m * k],
                false,
                &tb.data()[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
                false,
            );
        }
        let value = Tensor::new(&[bs, m, n], out)?;
        Ok(self.push_op(value, Op::Bmm(a, b), &[a, b]))
    }

    /// 2-D cross-correlation with zero padding. Input B×C×H×W, weight
    /// O×C×k×k (k odd), optional bias of length O.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let [b, c, h, wd] = dims4("conv2d input", x)?;
        let [o, wc, kh, kw] = dims4("conv2d weight", w)?;
        if wc != c {
            return Err(Error::dim(format!(
                "conv2d: input {:?} has {c} channels, weight {:?} expects {wc}",
                x.shape(),
                w.shape()
            )));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::dim(format!(
                "conv2d kernel must be square with odd extent, got {kh}x{kw}"
            )));
        }
        if let Some(bv) = bias {
            let bs = self.nodes[bv.0].value.shape();
            if bs != [o] {
                return Err(Error::dim(format!("conv2d bias {bs:?} for {o} outputs")));
            }
        }
        let geom = ConvGeom::new(c, h, wd, kh, stride, padding).ok_or_else(|| {
            Error::dim(format!(
                "conv2d output extent < 1 for input {:?}, kernel {kh}, stride {stride}, padding {padding}",
                x.shape()
            ))
        })?;
        let out = kernels::conv2d_forward(
            &geom,
            b,
            o,
            x.data(),
            w.data(),
            bias.map(|bv| self.nodes[bv.0].value.data()),
        );
        let value = Tensor::new(&[b, o, geom.out_height, geom.out_width], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push_op(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            &inputs,
        ))
    }

    /// Normalizes each (batch, channel) plane to zero mean and unit
    /// variance. No affine parameters.
    pub fn instance_norm(&mut self, a: Var, eps: Real) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let [b, c, h, w] = dims4("instance_norm", t)?;
        let (out, inv_std) = kernels::instance_norm_forward(t.data(), b * c, h * w, eps);
        let value = Tensor::new(t.shape(), out)?;
        Ok(self.push_op(value, Op::InstanceNorm { input: a, inv_std }, &[a]))
    }

    /// `out[b,c,i] = sum_j s[b,i,j] v[b,c,j] / (sum_j s[b,i,j] + eps)` for
    /// scores B×N×N and values B×C×N. Each sum is taken over its terms in
    /// sorted order, so relabelling the N positions permutes the output
    /// bit for bit.
    pub fn normalized_mix(&mut self, scores: Var, values: Var, eps: Real) -> Result<Var> {
        let (ts, tv) = (&self.nodes[scores.0].value, &self.nodes[values.0].value);
        let (b, c, n) = match (ts.shape(), tv.shape()) {
            (&[b1, n1, n2], &[b2, c, n3]) if b1 == b2 && n1 == n2 && n2 == n3 => (b1, c, n1),
            (ss, sv) => {
                return Err(Error::dim(format!(
                    "normalized_mix needs B×N×N scores and B×C×N values, got {ss:?} and {sv:?}"
                )))
            }
        };
        let (sd, vd) = (ts.data(), tv.data());
        let mut out = vec![0.0; b * c * n];
        let mut totals = vec![0.0; b * n];
        let mut terms = vec![0.0; n];
        for bi in 0..b {
            let s = &sd[bi * n * n..(bi + 1) * n * n];
            let v = &vd[bi * c * n..(bi + 1) * c * n];
            for i in 0..n {
                let row = &s[i * n..(i + 1) * n];
                terms.copy_from_slice(row);
                let total = kernels::canonical_sum(&mut terms) + eps;
                totals[bi * n + i] = total;
                for ch in 0..c {
                    let fiber = &v[ch * n..(ch + 1) * n];
                    for (t, (&w, &x)) in terms.iter_mut().zip(row.iter().zip(fiber)) {
                        *t = w * x;
                    }
                    out[(bi * c + ch) * n + i] = kernels::canonical_sum(&mut terms) / total;
                }
            }
        }
        let value = Tensor::new(&[b, c, n], out)?;
        Ok(self.push_op(value, Op::NormalizedMix { scores, values, totals }, &[scores, values]))
    }

    /// 2-D DFT over the last two axes of a real tensor; returns the real
    /// and imaginary parts.
    pub fn dft2(&mut self, a: Var) -> Result<(Var, Var)> {
        let t = &self.nodes[a.0].value;
        let (planes, h, w) = plane_dims("dft2", t.shape())?;
        let mut re = t.data().to_vec();
        let mut im = vec![0.0; re.len()];
        fft::transform2(&mut re, &mut im, planes, h, w, Direction::Forward);
        let shape = t.shape().to_vec();
        let vr = self.push_op(
            Tensor::new(&shape, re)?,
            Op::Dft2 {
                input: a,
                imag: false,
            },
            &[a],
        );
        let vi = self.push_op(
            Tensor::new(&shape, im)?,
            Op::Dft2 {
                input: a,
                imag: true,
            },
            &[a],
        );
        Ok((vr, vi))
    }

    // ---- differentiation ---------------------------------------------

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<Real>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                for (input, contribution) in self.node_backward(idx, &g)? {
                    if !self.nodes[input.0].requires_grad {
                        continue;
                    }
                    match grads[input.0].as_mut() {
                        Some(acc) => {
                            for (x, y) in acc.iter_mut().zip(&contribution) {
                                *x += y;
                            }
                        }
                        None => grads[input.0] = Some(contribution),
                    }
                }
            }
            grads[idx] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|data| {
                    Tensor::new(self.nodes[i].value.shape(), data)
                        .expect("gradient shape matches node")
                })
            })
            .collect();
        Ok(Gradients {
            grads,
            bindings: self
                .bindings
                .iter()
                .map(|b| (b.label.clone(), b.id, b.var))
                .collect(),
        })
    }

    /// Runs backward and adds parameter gradients into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(store);
        Ok(grads)
    }
}

pub(crate) fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: Real) -> Real {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn transpose_batched(data: &[Real], batch: usize, rows: usize, cols: usize) -> Vec<Real> {
    let mut out = vec![0.0; data.len()];
    for b in 0..batch {
        let src = &data[b * rows * cols..(b + 1) * rows * cols];
        let dst = &mut out[b * rows * cols..(b + 1) * rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
    out
}

pub(crate) fn dims4(op: &str, t: &Tensor) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::dim(format!(
            "{op} needs a 4-D tensor, got {:?}",
            t.shape()
        ))),
    }
}

/// Splits a shape into (leading planes, H, W).
pub(crate) fn plane_dims(op: &str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 || shape.contains(&0) {
        return Err(Error::dim(format!(
            "{op} needs at least 2 non-empty axes, got {shape:?}"
        )));
    }
    let n = shape.len();
    Ok((shape[..n - 2].iter().product(), shape[n - 2], shape[n - 1]))
}
