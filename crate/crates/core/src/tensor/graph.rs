use std::sync::Arc;

use super::conv::{self, ConvGeometry};
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: NodeId,
        weight: NodeId,
        geom: ConvGeometry,
        batch: usize,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    Relu(NodeId),
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        normalized: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    GlobalAvgPool(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    SumAll(NodeId),
    Gather {
        input: NodeId,
        map: Arc<[u32]>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<T>,
        reduction: Reduction,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Batch statistics produced by a training-mode batch norm, used by the
/// caller to update running averages.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance.
    pub var: Vec<T>,
}

/// A recording of a forward computation. Nodes are appended in evaluation
/// order, which is a topological order, so the backward pass walks them in
/// reverse.
#[derive(Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients from [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// 2-d convolution of an NCHW `input` with an `[out, in, kh, kw]`
    /// `weight`, zero padding `pad` on every side. No bias.
    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        let (&[n, c, h, w], &[o, wc, kh, kw]) = (&xs[..], &ws[..]) else {
            return Err(mismatch("conv2d", &xs, &ws));
        };
        if c != wc || stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(mismatch("conv2d", &xs, &ws));
        }
        let geom = ConvGeometry {
            in_channels: c,
            height: h,
            width: w,
            out_channels: o,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            pad,
        };
        let out = conv::forward(&geom, n, self.value(input).data(), self.value(weight).data());
        let value = Tensor::new([n, o, geom.out_h(), geom.out_w()], out)?;
        let rg = self.any_grad(&[input, weight]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                geom,
                batch: n,
            },
            rg,
        ))
    }

    /// `x W^T + b` for `x: [n, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        let (&[n, i], &[o, wi]) = (&xs[..], &ws[..]) else {
            return Err(mismatch("linear", &xs, &ws));
        };
        if i != wi {
            return Err(mismatch("linear", &xs, &ws));
        }
        let mut out = vec![T::zero(); n * o];
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [o] {
                return Err(mismatch("linear bias", bv.shape(), &[o]));
            }
            for row in out.chunks_exact_mut(o) {
                row.copy_from_slice(bv.data());
            }
        }
        unsafe {
            T::gemm(
                n,
                i,
                o,
                T::one(),
                self.value(input).data().as_ptr(),
                i as isize,
                1,
                self.value(weight).data().as_ptr(),
                1,
                i as isize,
                T::one(),
                out.as_mut_ptr(),
                o as isize,
                1,
            );
        }
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(Tensor::new([n, o], out)?, Op::Linear { input, weight, bias }, rg))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = self.value(input).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.any_grad(&[input]);
        self.push(value, Op::Relu(input), rg)
    }

    /// Training-mode batch norm over the N, H, W axes of an NCHW tensor.
    pub fn batch_norm_train(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<(NodeId, BatchStats<T>)> {
        let (n, c, spatial) = self.bn_dims(input, gamma, beta)?;
        let x = self.value(input).data();
        let count = n * spatial;
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        // Per-slice partial sums in T, combined in f64.
        for ch in 0..c {
            let slices = || (0..n).map(|img| &x[(img * c + ch) * spatial..(img * c + ch + 1) * spatial]);
            let sum: f64 = slices().map(|s| lane_sum(s).as_f64()).sum();
            let m = sum / count as f64;
            let mt = T::from_f64(m);
            let sq: f64 = slices()
                .map(|s| lane_dot_with(s, s, |v, _| (v - mt) * (v - mt)).as_f64())
                .sum();
            mean[ch] = mt;
            var[ch] = T::from_f64(sq / count as f64);
        }
        let unbiased = var
            .iter()
            .map(|&v| {
                if count > 1 {
                    T::from_f64(v.as_f64() * count as f64 / (count - 1) as f64)
                } else {
                    v
                }
            })
            .collect();
        let id = self.bn_apply(input, gamma, beta, &mean, &var, eps, true)?;
        Ok((id, BatchStats { mean, var: unbiased }))
    }

    /// Eval-mode batch norm with fixed statistics: a per-channel affine map.
    pub fn batch_norm_eval(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        var: &[T],
        eps: f64,
    ) -> Result<NodeId> {
        let (_, c, _) = self.bn_dims(input, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(mismatch("batch_norm running stats", &[mean.len(), var.len()], &[c]));
        }
        self.bn_apply(input, gamma, beta, mean, var, eps, false)
    }

    fn bn_dims(&self, input: NodeId, gamma: NodeId, beta: NodeId) -> Result<(usize, usize, usize)> {
        let xs = self.value(input).shape();
        let (n, c, spatial) = match xs {
            [n, c, h, w] => (*n, *c, h * w),
            [n, c] => (*n, *c, 1),
            _ => return Err(mismatch("batch_norm", xs, &[])),
        };
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return Err(mismatch("batch_norm affine", self.value(p).shape(), &[c]));
            }
        }
        Ok((n, c, spatial))
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_apply(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        var: &[T],
        eps: f64,
        batch_stats: bool,
    ) -> Result<NodeId> {
        let (n, c, spatial) = self.bn_dims(input, gamma, beta)?;
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::from_f64(1.0 / (v.as_f64() + eps).sqrt()))
            .collect();
        let x = self.value(input).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut normalized = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for img in 0..n {
            for ch in 0..c {
                let r = (img * c + ch) * spatial..(img * c + ch + 1) * spatial;
                let (m, s, gg, bb) = (mean[ch], inv_std[ch], g[ch], b[ch]);
                for ((o, nv), &xv) in out[r.clone()].iter_mut().zip(&mut normalized[r.clone()]).zip(&x[r]) {
                    let xh = (xv - m) * s;
                    *nv = xh;
                    *o = gg * xh + bb;
                }
            }
        }
        let value = Tensor::new(self.value(input).shape().to_vec(), out)?;
        let rg = self.any_grad(&[input, gamma, beta]);
        Ok(self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            },
            rg,
        ))
    }

    /// Mean over the spatial axes: `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let [n, c, h, w] = xs[..] else {
            return Err(mismatch("global_avg_pool", &xs, &[]));
        };
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let out = self
            .value(input)
            .data()
            .chunks_exact(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::new([n, c], out)?, Op::GlobalAvgPool(input), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "add", |x, y| x + y).map(|v| {
            let rg = self.any_grad(&[a, b]);
            self.push(v, Op::Add(a, b), rg)
        })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "mul", |x, y| x * y).map(|v| {
            let rg = self.any_grad(&[a, b]);
            self.push(v, Op::Mul(a, b), rg)
        })
    }

    fn elementwise(&self, a: NodeId, b: NodeId, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch(op, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let s = self.value(input).data().iter().copied().sum::<T>();
        let rg = self.any_grad(&[input]);
        self.push(Tensor::scalar(s), Op::SumAll(input), rg)
    }

    /// Per-sample gather: for every leading-axis slice, `out[i] = in[map[i]]`.
    /// With a permutation map this is block shuffling; the gradient scatters
    /// back through the same map.
    pub fn gather(&mut self, input: NodeId, map: Arc<[u32]>) -> Result<NodeId> {
        let xs = self.value(input).shape().to_vec();
        let per: usize = xs.iter().skip(1).product();
        if xs.is_empty() || per != map.len() || map.iter().any(|&m| m as usize >= per) {
            return Err(mismatch("gather", &xs, &[map.len()]));
        }
        let src = self.value(input).data();
        let mut out = vec![T::zero(); src.len()];
        for (s, d) in src.chunks_exact(per).zip(out.chunks_exact_mut(per)) {
            for (o, &m) in d.iter_mut().zip(map.iter()) {
                *o = s[m as usize];
            }
        }
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::new(xs, out)?, Op::Gather { input, map }, rg))
    }

    /// Softmax cross-entropy of `[n, classes]` logits against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize], reduction: Reduction) -> Result<NodeId> {
        let ls = self.value(logits).shape().to_vec();
        let [n, k] = ls[..] else {
            return Err(mismatch("softmax_cross_entropy", &ls, &[labels.len()]));
        };
        if n != labels.len() || n == 0 {
            return Err(mismatch("softmax_cross_entropy", &ls, &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![T::zero(); n * k];
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            let row = &z[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
            let denom = exps.iter().copied().sum::<T>();
            for (p, e) in probs[r * k..(r + 1) * k].iter_mut().zip(&exps) {
                *p = *e / denom;
            }
            total += (denom.ln() + max - row[label]).as_f64();
        }
        if reduction == Reduction::Mean {
            total /= n as f64;
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(T::from_f64(total)),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
                reduction,
            },
            rg,
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`. Returns gradients for every
    /// node that requires one; leaves flagged `requires_grad` always get a
    /// (possibly zero) gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                if matches!(node.op, Op::Leaf) {
                    grads[idx] = Some(Tensor::zeros(node.value.shape().to_vec()));
                }
                continue;
            };
            self.backward_node(node, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }
        // Only leaves and the loss keep their gradients.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) && i != loss.0 {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn backward_node(&self, node: &Node<T>, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let dyv = dy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                geom,
                batch,
            } => {
                let mut dx = self.wants(*input).then(|| vec![T::zero(); self.value(*input).len()]);
                let mut dw = self.wants(*weight).then(|| vec![T::zero(); self.value(*weight).len()]);
                conv::backward(
                    geom,
                    *batch,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    dyv,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *input, self.value(*input).shape(), dx);
                }
                if let Some(dw) = dw {
                    accumulate(grads, *weight, self.value(*weight).shape(), dw);
                }
            }
            Op::Linear { input, weight, bias } => {
                let xs = self.value(*input).shape();
                let (n, i) = (xs[0], xs[1]);
                let o = self.value(*weight).shape()[0];
                if self.wants(*input) {
                    // dx[n, i] = dy[n, o] * W[o, i]
                    let mut dx = vec![T::zero(); n * i];
                    unsafe {
                        T::gemm(
                            n,
                            o,
                            i,
                            T::one(),
                            dyv.as_ptr(),
                            o as isize,
                            1,
                            self.value(*weight).data().as_ptr(),
                            i as isize,
                            1,
                            T::zero(),
                            dx.as_mut_ptr(),
                            i as isize,
                            1,
                        );
                    }
                    accumulate(grads, *input, xs, dx);
                }
                if self.wants(*weight) {
                    // dW[o, i] = dy[n, o]^T * x[n, i]
                    let mut dw = vec![T::zero(); o * i];
                    unsafe {
                        T::gemm(
                            o,
                            n,
                            i,
                            T::one(),
                            dyv.as_ptr(),
                            1,
                            o as isize,
                            self.value(*input).data().as_ptr(),
                            i as isize,
                            1,
                            T::zero(),
                            dw.as_mut_ptr(),
                            i as isize,
                            1,
                        );
                    }
                    accumulate(grads, *weight, &[o, i], dw);
                }
                if let Some(b) = bias.filter(|b| self.wants(*b)) {
                    let mut db = vec![T::zero(); o];
                    for row in dyv.chunks_exact(o) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, b, &[o], db);
                }
            }
            Op::Relu(input) => {
                if self.wants(*input) {
                    let dx = node
                        .value
                        .data()
                        .iter()
                        .zip(dyv)
                        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                        .collect();
                    accumulate(grads, *input, node.value.shape(), dx);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            } => {
                let shape = self.value(*input).shape();
                let (n, c) = (shape[0], shape[1]);
                let spatial: usize = shape[2..].iter().product();
                let count = n * spatial;
                let g = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for img in 0..n {
                    for ch in 0..c {
                        let r = (img * c + ch) * spatial..(img * c + ch + 1) * spatial;
                        let (dys, xh) = (&dyv[r.clone()], &normalized[r]);
                        dbeta[ch] += lane_sum(dys);
                        dgamma[ch] += lane_dot(dys, xh);
                    }
                }
                if self.wants(*input) {
                    let mut dx = vec![T::zero(); dyv.len()];
                    let inv_count = T::from_f64(1.0 / count as f64);
                    for img in 0..n {
                        for ch in 0..c {
                            let r = (img * c + ch) * spatial..(img * c + ch + 1) * spatial;
                            let scale = g[ch] * inv_std[ch];
                            let (dys, xh) = (&dyv[r.clone()], &normalized[r.clone()]);
                            let out = &mut dx[r];
                            if *batch_stats {
                                let (mb, mg) = (inv_count * dbeta[ch], inv_count * dgamma[ch]);
                                for ((o, &d), &v) in out.iter_mut().zip(dys).zip(xh) {
                                    *o = scale * (d - mb - v * mg);
                                }
                            } else {
                                for (o, &d) in out.iter_mut().zip(dys) {
                                    *o = scale * d;
                                }
                            }
                        }
                    }
                    accumulate(grads, *input, shape, dx);
                }
                if self.wants(*gamma) {
                    accumulate(grads, *gamma, &[c], dgamma);
                }
                if self.wants(*beta) {
                    accumulate(grads, *beta, &[c], dbeta);
                }
            }
            Op::GlobalAvgPool(input) => {
                if self.wants(*input) {
                    let shape = self.value(*input).shape();
                    let spatial = shape[2] * shape[3];
                    let inv = T::from_f64(1.0 / spatial as f64);
                    let dx = dyv
                        .iter()
                        .flat_map(|&g| std::iter::repeat_n(g * inv, spatial))
                        .collect();
                    accumulate(grads, *input, shape, dx);
                }
            }
            Op::Add(a, b) => {
                for &side in &[*a, *b] {
                    if self.wants(side) {
                        accumulate(grads, side, node.value.shape(), dyv.to_vec());
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let d = dyv.iter().zip(bv).map(|(&g, &y)| g * y).collect();
                    accumulate(grads, *a, node.value.shape(), d);
                }
                if self.wants(*b) {
                    let d = dyv.iter().zip(av).map(|(&g, &x)| g * x).collect();
                    accumulate(grads, *b, node.value.shape(), d);
                }
            }
            Op::SumAll(input) => {
                if self.wants(*input) {
                    let shape = self.value(*input).shape();
                    accumulate(grads, *input, shape, vec![dyv[0]; shape.iter().product()]);
                }
            }
            Op::Gather { input, map } => {
                if self.wants(*input) {
                    let per = map.len();
                    let mut dx = vec![T::zero(); dyv.len()];
                    for (g, d) in dyv.chunks_exact(per).zip(dx.chunks_exact_mut(per)) {
                        for (&v, &m) in g.iter().zip(map.iter()) {
                            d[m as usize] += v;
                        }
                    }
                    accumulate(grads, *input, node.value.shape(), dx);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
                reduction,
            } => {
                if self.wants(*logits) {
                    let k = self.value(*logits).shape()[1];
                    let mut scale = dyv[0];
                    if *reduction == Reduction::Mean {
                        scale *= T::from_f64(1.0 / labels.len() as f64);
                    }
                    let mut dz: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    for (r, &l) in labels.iter().enumerate() {
                        dz[r * k + l] -= scale;
                    }
                    accumulate(grads, *logits, self.value(*logits).shape(), dz);
                }
            }
        }
    }
}

/// Sum with eight interleaved accumulators so the loop vectorizes. The
/// order is fixed, so results are deterministic.
fn lane_sum<T: Element>(xs: &[T]) -> T {
    lane_dot_with(xs, xs, |a, _| a)
}

fn lane_dot<T: Element>(xs: &[T], ys: &[T]) -> T {
    lane_dot_with(xs, ys, |a, b| a * b)
}

#[inline(always)]
fn lane_dot_with<T: Element>(xs: &[T], ys: &[T], f: impl Fn(T, T) -> T) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (xs.chunks_exact(8), ys.chunks_exact(8));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for i in 0..8 {
            acc[i] += f(a[i], b[i]);
        }
    }
    let mut total = T::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        total += f(a, b);
    }
    acc.iter().copied().fold(total, |s, v| s + v)
}

fn accumulate<T: Element>(grads: &mut [Option<Tensor<T>>], id: NodeId, shape: &[usize], delta: Vec<T>) {
    match &mut grads[id.0] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(delta) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor {
                shape: shape.to_vec(),
                data: delta,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_values() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[-1.0, 0.0, 2.0]), false);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1], &[3.0]), true);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn linear_input_gradient_is_weight() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1, 3], &[0.5, -1.0, 2.0]), true);
        let w = g.leaf(t(&[1, 3], &[0.3, -0.2, 0.7]), false);
        let y = g.linear(x, w, None).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.3, -0.2, 0.7]);
        assert!(grads.get(w).is_none());
    }

    #[test]
    fn identity_1x1_conv_is_noop() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| i as f64 * 0.1).collect();
        let x = g.leaf(t(&[2, 3, 4, 4], &data), false);
        let mut eye = vec![0.0; 9];
        for c in 0..3 {
            eye[c * 3 + c] = 1.0;
        }
        let w = g.leaf(t(&[3, 3, 1, 1], &eye), false);
        let y = g.conv2d(x, w, 1, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let mut g = Graph::new();
        let z = g.leaf(t(&[1, 2], &[0.0, 0.0]), false);
        let loss = g.softmax_cross_entropy(z, &[0], Reduction::Mean).unwrap();
        assert!((g.value(loss).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_nonnegative_and_zero_only_at_point_mass() {
        let mut g = Graph::new();
        let z = g.leaf(t(&[2, 3], &[50.0, -50.0, -50.0, 1.0, 2.0, 3.0]), false);
        let l0 = g.softmax_cross_entropy(z, &[0, 0], Reduction::Sum).unwrap();
        assert!(g.value(l0).item().unwrap() > 0.0);
        let z2 = g.leaf(t(&[1, 3], &[800.0, -800.0, -800.0]), false);
        let l1 = g.softmax_cross_entropy(z2, &[0], Reduction::Sum).unwrap();
        assert_eq!(g.value(l1).item().unwrap(), 0.0);
    }

    #[test]
    fn shape_errors_name_the_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::zeros([2, 3]), false);
        let b = g.leaf(Tensor::zeros([3, 2]), false);
        let err = g.add(a, b).unwrap_err();
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[3, 2]"));
        let w = g.leaf(Tensor::zeros([4, 4, 3, 3]), false);
        let x = g.leaf(Tensor::zeros([1, 3, 8, 8]), false);
        assert!(g.conv2d(x, w, 1, 1).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::zeros([2]), true);
        let r = g.relu(a);
        assert!(matches!(g.backward(r), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let b = g.leaf(t(&[2], &[3.0, 4.0]), true);
        let loss = g.sum(a);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn eval_batch_norm_is_affine() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2, 1, 1, 2], &[1.0, 2.0, 3.0, 4.0]), false);
        let gamma = g.leaf(t(&[1], &[2.0]), false);
        let beta = g.leaf(t(&[1], &[0.5]), false);
        let y = g.batch_norm_eval(x, gamma, beta, &[1.0], &[4.0], 0.0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 1.5, 2.5, 3.5]);
    }
}
