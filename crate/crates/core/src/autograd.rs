//! Reverse-mode differentiation over a linear tape of tensor primitives.
//!
//! Nodes are appended in execution order, so the tape is topologically
//! sorted by construction; backward walks it once in reverse. Only nodes that
//! depend on a parameter or a gradient-tracked input carry gradients.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ops::{self, pointwise, ConvSpec, ResizeKind};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor4};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv { x: usize, weight: usize, bias: Option<usize>, spec: ConvSpec },
    Gelu(usize),
    Sigmoid(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Axpy { alpha: T, x: usize, y: usize },
    Concat(Vec<usize>),
    Slice { x: usize, start: usize },
    Resize { x: usize, kind: ResizeKind, scale: usize },
    GlobalAvgPool(usize),
    ChannelScale { x: usize, scale: usize },
    L1 { pred: usize, target: usize },
    Sum(usize),
    Dot { x: usize, weights: Tensor4<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor4<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<usize>,
}

/// Records primitive applications for a later backward pass.
#[derive(Debug)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    leaves: HashMap<usize, Tensor4<T>>,
    params: Vec<(usize, Tensor4<T>)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a leaf (input or parameter) variable.
    pub fn wrt(&self, v: Var) -> Option<&Tensor4<T>> {
        self.leaves.get(&v.0)
    }

    /// Gradient of the parameter at `index` in the bound store.
    pub fn param(&self, index: usize) -> Option<&Tensor4<T>> {
        self.params.iter().find(|(i, _)| *i == index).map(|(_, g)| g)
    }

    /// Adds parameter gradients into the store's gradient slots.
    ///
    /// Gradients accumulate; call [`ParamStore::zero_grad`] first for the
    /// usual reset-then-backward contract.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for (index, grad) in &self.params {
            let (name, param) = store
                .by_index_mut(*index)
                .ok_or_else(|| Error::Usage(format!("parameter index {index} not in store")))?;
            if param.grad.dims() != grad.dims() {
                return Err(Error::Usage(format!("gradient dims mismatch for {name}")));
            }
            param.grad.add_assign(grad)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), recording: true }
    }

    /// A tape that evaluates but refuses [`Tape::backward`].
    pub fn no_grad() -> Self {
        Tape { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor4<T> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.dims()
    }

    fn push(&mut self, value: Tensor4<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = self.recording && inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor4<T>, requires_grad: bool, param: Option<usize>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: requires_grad && self.recording,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is computed for it.
    pub fn input(&mut self, value: Tensor4<T>) -> Var {
        self.leaf(value, false, None)
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn input_with_grad(&mut self, value: Tensor4<T>) -> Var {
        self.leaf(value, true, None)
    }

    /// Binds a stored parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        let index = store
            .index_of(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))?;
        let value = store.by_index(index).expect("index valid").1.value.clone();
        Ok(self.leaf(value, true, Some(index)))
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let value = ops::conv2d(
            self.value(x),
            self.value(weight),
            bias.map(|b| self.value(b)),
            &spec,
        )?;
        let mut inputs = vec![x.0, weight.0];
        inputs.extend(bias.map(|b| b.0));
        Ok(self.push(value, Op::Conv { x: x.0, weight: weight.0, bias: bias.map(|b| b.0), spec }, &inputs))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = ops::gelu(self.value(x));
        self.push(value, Op::Gelu(x.0), &[x.0])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = ops::sigmoid(self.value(x));
        self.push(value, Op::Sigmoid(x.0), &[x.0])
    }

    pub fn add(&mut self, x: Var, y: Var) -> Result<Var> {
        let value = ops::add(self.value(x), self.value(y))?;
        Ok(self.push(value, Op::Add(x.0, y.0), &[x.0, y.0]))
    }

    pub fn mul(&mut self, x: Var, y: Var) -> Result<Var> {
        let value = ops::mul(self.value(x), self.value(y))?;
        Ok(self.push(value, Op::Mul(x.0, y.0), &[x.0, y.0]))
    }

    /// `alpha · x + y`.
    pub fn axpy(&mut self, alpha: T, x: Var, y: Var) -> Result<Var> {
        let value = ops::axpy(alpha, self.value(x), self.value(y))?;
        Ok(self.push(value, Op::Axpy { alpha, x: x.0, y: y.0 }, &[x.0, y.0]))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor4<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = ops::concat_channels(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::Concat(ids.clone()), &ids))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = ops::slice_channels(self.value(x), start, len)?;
        Ok(self.push(value, Op::Slice { x: x.0, start }, &[x.0]))
    }

    pub fn resize(&mut self, kind: ResizeKind, x: Var, scale: usize) -> Result<Var> {
        let value = ops::resize(kind, self.value(x), scale)?;
        Ok(self.push(value, Op::Resize { x: x.0, kind, scale }, &[x.0]))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let value = ops::global_avg_pool(self.value(x));
        self.push(value, Op::GlobalAvgPool(x.0), &[x.0])
    }

    pub fn channel_scale(&mut self, x: Var, scale: Var) -> Result<Var> {
        let value = ops::channel_scale(self.value(x), self.value(scale))?;
        Ok(self.push(value, Op::ChannelScale { x: x.0, scale: scale.0 }, &[x.0, scale.0]))
    }

    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = ops::l1_loss(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor4::scalar(loss), Op::L1 { pred: pred.0, target: target.0 }, &[pred.0, target.0]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.push(Tensor4::scalar(total), Op::Sum(x.0), &[x.0])
    }

    /// Inner product with a constant tensor of the same dims.
    pub fn dot(&mut self, x: Var, weights: Tensor4<T>) -> Result<Var> {
        self.value(x).expect_same_dims(&weights, "dot")?;
        let total: T = self.value(x).data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        Ok(self.push(Tensor4::scalar(total), Op::Dot { x: x.0, weights }, &[x.0]))
    }

    /// Runs reverse accumulation from a scalar node and consumes the tape,
    /// releasing every intermediate value as soon as it is no longer needed.
    pub fn backward(mut self, loss: Var) -> Result<Gradients<T>> {
        if !self.recording {
            return Err(Error::Usage("backward on a tape created without gradient recording".into()));
        }
        let root = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Usage(format!("node {} is not on this tape", loss.0)))?;
        if root.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got dims {:?}",
                root.value.dims()
            )));
        }
        if !root.requires_grad {
            return Err(Error::Usage(
                "backward on an untraced value: loss depends on no parameter or tracked input".into(),
            ));
        }

        let mut grads: Vec<Option<Tensor4<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor4::full(root.value.dims(), T::one()));
        let mut out = Gradients { leaves: HashMap::new(), params: Vec::new() };

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            match op {
                Op::Leaf => {
                    if let Some(p) = self.nodes[i].param {
                        out.params.push((p, g.clone()));
                    }
                    out.leaves.insert(i, g);
                }
                Op::Conv { x, weight, bias, spec } => {
                    let need_dx = self.nodes[x].requires_grad;
                    let cg = ops::conv2d_backward(
                        &self.nodes[x].value,
                        &self.nodes[weight].value,
                        &spec,
                        &g,
                        need_dx,
                    )?;
                    if let Some(dx) = cg.input {
                        self.accumulate(&mut grads, x, dx)?;
                    }
                    self.accumulate(&mut grads, weight, cg.weight)?;
                    if let (Some(b), Some(db)) = (bias, cg.bias) {
                        self.accumulate(&mut grads, b, db)?;
                    }
                }
                Op::Gelu(x) => {
                    let dx = self.nodes[x].value.zip_map(&g, |v, gv| pointwise::gelu_derivative(v) * gv)?;
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::Sigmoid(x) => {
                    let dx = self.nodes[i].value.zip_map(&g, |s, gv| s * (T::one() - s) * gv)?;
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::Add(x, y) => {
                    self.accumulate(&mut grads, x, g.clone())?;
                    self.accumulate(&mut grads, y, g)?;
                }
                Op::Mul(x, y) => {
                    if self.nodes[x].requires_grad {
                        let dx = self.nodes[y].value.zip_map(&g, |a, b| a * b)?;
                        self.accumulate(&mut grads, x, dx)?;
                    }
                    if self.nodes[y].requires_grad {
                        let dy = self.nodes[x].value.zip_map(&g, |a, b| a * b)?;
                        self.accumulate(&mut grads, y, dy)?;
                    }
                }
                Op::Axpy { alpha, x, y } => {
                    self.accumulate(&mut grads, x, g.map(|v| alpha * v))?;
                    self.accumulate(&mut grads, y, g)?;
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let len = self.nodes[p].value.channels();
                        let dp = ops::slice_channels(&g, start, len)?;
                        start += len;
                        self.accumulate(&mut grads, p, dp)?;
                    }
                }
                Op::Slice { x, start } => {
                    let xd = self.nodes[x].value.dims();
                    let [n, c, h, w] = xd;
                    let len = g.channels();
                    let hw = h * w;
                    let mut dx = Tensor4::zeros(xd);
                    for s in 0..n {
                        let dst = &mut dx.data_mut()[(s * c + start) * hw..(s * c + start + len) * hw];
                        dst.copy_from_slice(g.sample(s));
                    }
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::Resize { x, kind, scale } => {
                    let dx = ops::resize_backward(kind, self.nodes[x].value.dims(), scale, &g)?;
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::GlobalAvgPool(x) => {
                    let [n, c, h, w] = self.nodes[x].value.dims();
                    let inv = T::of(1.0 / (h * w) as f64);
                    let dx = Tensor4::from_fn([n, c, h, w], |[s, ch, _, _]| g.at([s, ch, 0, 0]) * inv);
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::ChannelScale { x, scale } => {
                    if self.nodes[x].requires_grad {
                        let dx = ops::channel_scale(&g, &self.nodes[scale].value)?;
                        self.accumulate(&mut grads, x, dx)?;
                    }
                    if self.nodes[scale].requires_grad {
                        let xv = &self.nodes[x].value;
                        let [n, c, _, _] = xv.dims();
                        let ds = Tensor4::from_fn([n, c, 1, 1], |[s, ch, _, _]| {
                            xv.plane(s, ch).iter().zip(g.plane(s, ch)).map(|(&a, &b)| a * b).sum()
                        });
                        self.accumulate(&mut grads, scale, ds)?;
                    }
                }
                Op::L1 { pred, target } => {
                    let up = g.data()[0];
                    let dp = pointwise::l1_loss_grad(&self.nodes[pred].value, &self.nodes[target].value, up);
                    if self.nodes[target].requires_grad {
                        self.accumulate(&mut grads, target, dp.map(|v| -v))?;
                    }
                    self.accumulate(&mut grads, pred, dp)?;
                }
                Op::Sum(x) => {
                    let dx = Tensor4::full(self.nodes[x].value.dims(), g.data()[0]);
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::Dot { x, weights } => {
                    let up = g.data()[0];
                    self.accumulate(&mut grads, x, weights.map(|w| w * up))?;
                }
            }
            // Consumers of node i all sit later on the tape and are done.
            self.nodes[i].value = Tensor4::zeros([0, 0, 0, 0]);
        }
        Ok(out)
    }

    /// Reset-then-backward into a parameter store.
    pub fn backward_into(self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.backward(loss)?;
        store.zero_grad();
        grads.accumulate_into(store)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor4<T>>], target: usize, g: Tensor4<T>) -> Result<()> {
        if !self.nodes[target].requires_grad {
            return Ok(());
        }
        match &mut grads[target] {
            Some(acc) => acc.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input_with_grad(Tensor4::from_fn([1, 2, 3, 3], |[_, c, y, x]| (c + y * x) as f64));
        let s = tape.sum(x);
        let grads = tape.backward(s).unwrap();
        assert!(grads.wrt(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn disconnected_parameter_gets_zero() {
        let mut store = ParamStore::<f64>::new();
        store.insert("used", Tensor4::full([1, 1, 2, 2], 2.0)).unwrap();
        store.insert("unused", Tensor4::full([1, 1, 2, 2], 3.0)).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, "used").unwrap();
        let _q = tape.param(&store, "unused").unwrap();
        let s = tape.sum(p);
        tape.backward_into(s, &mut store).unwrap();
        assert!(store.get("used").unwrap().grad.data().iter().all(|&v| v == 1.0));
        assert!(store.get("unused").unwrap().grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_requires_traced_scalar() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor4::full([1, 1, 2, 2], 1.0));
        let s = tape.sum(x);
        assert!(matches!(tape.backward(s), Err(Error::Usage(_))));

        let mut tape = Tape::<f32>::new();
        let x = tape.input_with_grad(Tensor4::full([1, 1, 2, 2], 1.0));
        let y = tape.gelu(x);
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));

        let mut tape = Tape::<f32>::no_grad();
        let x = tape.input_with_grad(Tensor4::full([1, 1, 2, 2], 1.0));
        let s = tape.sum(x);
        assert!(matches!(tape.backward(s), Err(Error::Usage(_))));
    }

    #[test]
    fn gradients_accumulate_across_calls() {
        let mut store = ParamStore::<f64>::new();
        store.insert("p", Tensor4::full([1, 1, 1, 2], 1.0)).unwrap();
        for _ in 0..2 {
            let mut tape = Tape::new();
            let p = tape.param(&store, "p").unwrap();
            let s = tape.sum(p);
            tape.backward(s).unwrap().accumulate_into(&mut store).unwrap();
        }
        assert!(store.get("p").unwrap().grad.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn shared_node_gradients_add() {
        // d/dx sum(x ⊙ x) = 2x
        let mut tape = Tape::<f64>::new();
        let x = tape.input_with_grad(Tensor4::from_vec([1, 1, 1, 3], vec![1.0, -2.0, 0.5]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }
}
