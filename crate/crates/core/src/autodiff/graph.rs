//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` walks it once in reverse.

use super::conv::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv3d { input: Var, kernel: Var, bias: Var, geom: ConvGeom, cols: Vec<f64> },
    Linear { input: Var, weight: Var, bias: Var },
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    GlobalAvgPool(Var),
    TemporalPool(Var),
    Flatten(Var),
    Sum(Var),
    Concat(Vec<Var>),
    WeightedSum { weights: Var, items: Vec<Var> },
    LogPick { probs: Var, index: usize, clamp: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// One forward computation and its gradient records.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Registers an input. Leaves with `requires_grad` accumulate gradients on `backward`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if `backward` has reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn conv3d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(input), self.shape(kernel), stride, padding)?;
        if self.shape(bias) != [geom.c_out] {
            return Err(Error::dim(format!(
                "conv3d bias must be [{}], got {:?}",
                geom.c_out,
                self.shape(bias)
            )));
        }
        let (out, cols) = conv::forward(&geom, self.data(input), self.data(kernel), self.data(bias));
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(value, Op::Conv3d { input, kernel, bias, geom, cols }, &[input, kernel, bias]))
    }

    /// `weight [m, n] * input [n] + bias [m]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let ws = self.shape(weight);
        let (m, n) = match ws {
            [m, n] => (*m, *n),
            _ => return Err(Error::dim(format!("linear weight must be 2D, got {ws:?}"))),
        };
        if self.shape(input) != [n] {
            return Err(Error::dim(format!(
                "linear expects input [{n}], got {:?}",
                self.shape(input)
            )));
        }
        if self.shape(bias) != [m] {
            return Err(Error::dim(format!("linear bias must be [{m}], got {:?}", self.shape(bias))));
        }
        let x = self.data(input);
        let w = self.data(weight);
        let out: Vec<f64> = (0..m)
            .map(|j| {
                let row = &w[j * n..(j + 1) * n];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.data(bias)[j]
            })
            .collect();
        Ok(self.push(Tensor::vector(out), Op::Linear { input, weight, bias }, &[input, weight, bias]))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = &self.nodes[x.0].value;
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|v| f(*v)).collect())
            .expect("shape preserved");
        self.push(value, op, &[x])
    }

    /// `max(0, x)`; the subgradient at 0 is taken as 0.
    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    /// Max-shifted softmax over all entries of `x`.
    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_values(self.data(x));
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, value).expect("shape preserved"), Op::Softmax(x), &[x])
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Mean over every axis but the first: `[C, ...] -> [C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() < 2 {
            return Err(Error::dim(format!("global_avg_pool needs [C, ...], got {shape:?}")));
        }
        let c = shape[0];
        let per = self.nodes[x.0].value.len() / c;
        let out = self
            .data(x)
            .chunks(per)
            .map(|ch| ch.iter().sum::<f64>() / per as f64)
            .collect();
        Ok(self.push(Tensor::vector(out), Op::GlobalAvgPool(x), &[x]))
    }

    /// Stride-2 average pooling along the first spatial axis of `[C, D, H, W]`.
    /// An odd trailing slice is averaged on its own.
    pub fn temporal_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let [c, d, h, w] = shape[..] else {
            return Err(Error::dim(format!("temporal_pool needs [C, D, H, W], got {shape:?}")));
        };
        let od = d.div_ceil(2);
        let plane = h * w;
        let src = self.data(x);
        let mut out = vec![0.0; c * od * plane];
        for ch in 0..c {
            for z in 0..od {
                let first = 2 * z;
                let count = if first + 1 < d { 2 } else { 1 };
                let dst = &mut out[(ch * od + z) * plane..(ch * od + z + 1) * plane];
                for k in 0..count {
                    let s = &src[(ch * d + first + k) * plane..(ch * d + first + k + 1) * plane];
                    for (o, v) in dst.iter_mut().zip(s) {
                        *o += v / count as f64;
                    }
                }
            }
        }
        let value = Tensor::new(vec![c, od, h, w], out)?;
        Ok(self.push(value, Op::TemporalPool(x), &[x]))
    }

    pub fn flatten(&mut self, x: Var) -> Var {
        let value = Tensor::vector(self.data(x).to_vec());
        self.push(value, Op::Flatten(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Concatenates flattened inputs into one vector.
    pub fn concat(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::usage("concat of an empty list"));
        }
        let out: Vec<f64> = items.iter().flat_map(|v| self.data(*v).iter().copied()).collect();
        Ok(self.push(Tensor::vector(out), Op::Concat(items.to_vec()), items))
    }

    /// `sum_i weights[i] * items[i]` for same-shaped `items`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::usage("weighted_sum of an empty list"));
        }
        if self.nodes[weights.0].value.len() != items.len() {
            return Err(Error::dim(format!(
                "{} weights for {} items",
                self.nodes[weights.0].value.len(),
                items.len()
            )));
        }
        for it in &items[1..] {
            self.check_same(items[0], *it, "weighted_sum")?;
        }
        let shape = self.shape(items[0]).to_vec();
        let mut out = vec![0.0; self.nodes[items[0].0].value.len()];
        for (w, it) in self.data(weights).iter().zip(items) {
            for (o, v) in out.iter_mut().zip(self.data(*it)) {
                *o += w * v;
            }
        }
        let mut inputs = items.to_vec();
        inputs.push(weights);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::WeightedSum { weights, items: items.to_vec() }, &inputs))
    }

    /// `ln(max(probs[index], clamp))` as a scalar.
    pub fn log_pick(&mut self, probs: Var, index: usize, clamp: f64) -> Result<Var> {
        let p = self.data(probs);
        if index >= p.len() {
            return Err(Error::dim(format!("index {index} out of range for {} entries", p.len())));
        }
        let v = p[index].max(clamp).ln();
        Ok(self.push(Tensor::scalar(v), Op::LogPick { probs, index, clamp }, &[probs]))
    }

    /// Back-propagates from a scalar, accumulating into every `requires_grad` leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.propagate(id, g, &mut grads, &mut leaf_grads);
        }
        for (id, g) in leaf_grads {
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(
        &self,
        id: usize,
        g: Vec<f64>,
        grads: &mut [Option<Vec<f64>>],
        leaf_grads: &mut Vec<(usize, Vec<f64>)>,
    ) {
        let node = &self.nodes[id];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        macro_rules! slot {
            ($v:expr) => {{
                let v: Var = $v;
                grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()])
            }};
        }
        match &node.op {
            Op::Leaf => leaf_grads.push((id, g)),
            Op::Conv3d { input, kernel, bias, geom, cols } => {
                if needs(*kernel) {
                    conv::backward_kernel(geom, &g, cols, slot!(*kernel));
                }
                if needs(*bias) {
                    conv::backward_bias(geom, &g, slot!(*bias));
                }
                if needs(*input) {
                    conv::backward_input(geom, &g, self.data(*kernel), slot!(*input));
                }
            }
            Op::Linear { input, weight, bias } => {
                let x = self.data(*input);
                let n = x.len();
                if needs(*weight) {
                    let gw = slot!(*weight);
                    for (j, gj) in g.iter().enumerate() {
                        for (acc, xk) in gw[j * n..(j + 1) * n].iter_mut().zip(x) {
                            *acc += gj * xk;
                        }
                    }
                }
                if needs(*bias) {
                    slot!(*bias).iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                if needs(*input) {
                    let w = self.data(*weight);
                    let gi = slot!(*input);
                    for (j, gj) in g.iter().enumerate() {
                        for (acc, wjk) in gi.iter_mut().zip(&w[j * n..(j + 1) * n]) {
                            *acc += gj * wjk;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xs = self.data(*x);
                let gx = slot!(*x);
                for ((acc, gv), xv) in gx.iter_mut().zip(&g).zip(xs) {
                    if *xv > 0.0 {
                        *acc += gv;
                    }
                }
            }
            Op::Tanh(x) => {
                let ys = node.value.data();
                let gx = slot!(*x);
                for ((acc, gv), y) in gx.iter_mut().zip(&g).zip(ys) {
                    *acc += gv * (1.0 - y * y);
                }
            }
            Op::Softmax(x) => {
                let ys = node.value.data();
                let dot: f64 = g.iter().zip(ys).map(|(a, b)| a * b).sum();
                let gx = slot!(*x);
                for ((acc, gv), y) in gx.iter_mut().zip(&g).zip(ys) {
                    *acc += y * (gv - dot);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if needs(v) {
                        slot!(v).iter_mut().zip(&g).for_each(|(acc, gv)| *acc += gv);
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let other = self.data(*b);
                    let ga = slot!(*a);
                    for ((acc, gv), o) in ga.iter_mut().zip(&g).zip(other) {
                        *acc += gv * o;
                    }
                }
                if needs(*b) {
                    let other = self.data(*a);
                    let gb = slot!(*b);
                    for ((acc, gv), o) in gb.iter_mut().zip(&g).zip(other) {
                        *acc += gv * o;
                    }
                }
            }
            Op::Scale(x, f) => {
                slot!(*x).iter_mut().zip(&g).for_each(|(acc, gv)| *acc += gv * f);
            }
            Op::GlobalAvgPool(x) => {
                let gx = slot!(*x);
                let per = gx.len() / g.len();
                for (ch, gv) in gx.chunks_mut(per).zip(&g) {
                    let share = gv / per as f64;
                    ch.iter_mut().for_each(|acc| *acc += share);
                }
            }
            Op::TemporalPool(x) => {
                let shape = self.shape(*x);
                let (c, d, plane) = (shape[0], shape[1], shape[2] * shape[3]);
                let od = d.div_ceil(2);
                let gx = slot!(*x);
                for ch in 0..c {
                    for z in 0..od {
                        let first = 2 * z;
                        let count = if first + 1 < d { 2 } else { 1 };
                        let src = &g[(ch * od + z) * plane..(ch * od + z + 1) * plane];
                        for k in 0..count {
                            let dst = &mut gx[(ch * d + first + k) * plane..(ch * d + first + k + 1) * plane];
                            for (acc, gv) in dst.iter_mut().zip(src) {
                                *acc += gv / count as f64;
                            }
                        }
                    }
                }
            }
            Op::Flatten(x) => {
                slot!(*x).iter_mut().zip(&g).for_each(|(acc, gv)| *acc += gv);
            }
            Op::Sum(x) => {
                let gv = g[0];
                slot!(*x).iter_mut().for_each(|acc| *acc += gv);
            }
            Op::Concat(items) => {
                let mut offset = 0;
                for it in items {
                    let n = self.nodes[it.0].value.len();
                    if needs(*it) {
                        slot!(*it).iter_mut().zip(&g[offset..offset + n]).for_each(|(acc, gv)| *acc += gv);
                    }
                    offset += n;
                }
            }
            Op::WeightedSum { weights, items } => {
                let w = self.data(*weights).to_vec();
                if needs(*weights) {
                    let dots: Vec<f64> = items
                        .iter()
                        .map(|it| self.data(*it).iter().zip(&g).map(|(a, b)| a * b).sum())
                        .collect();
                    slot!(*weights).iter_mut().zip(dots).for_each(|(acc, d)| *acc += d);
                }
                for (wi, it) in w.iter().zip(items) {
                    if needs(*it) {
                        slot!(*it).iter_mut().zip(&g).for_each(|(acc, gv)| *acc += wi * gv);
                    }
                }
            }
            Op::LogPick { probs, index, clamp } => {
                let p = self.data(*probs)[*index];
                if p > *clamp {
                    slot!(*probs)[*index] += g[0] / p;
                }
            }
        }
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
