//! Define-by-run computation graph with reverse-mode gradients.
//!
//! A [`Graph`] is an append-only list of nodes. Every primitive records its
//! operands, so node indices are already a topological order and
//! [`Graph::backward`] is a single reverse sweep. Graphs are cheap and are
//! rebuilt for every minibatch.

use super::params::ParamSet;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Ln(Var),
    Tanh(Var),
    Abs(Var),
    Powf(Var, f64),
    Clamp(Var, f64, f64),
    SumAxis(Var, usize),
    SumAll(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Tanh(_) => "tanh",
            Op::Abs(_) => "abs",
            Op::Powf(..) => "powf",
            Op::Clamp(..) => "clamp",
            Op::SumAxis(..) => "sum_axis",
            Op::SumAll(_) => "sum",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for the leaf `v` (a constant or bound parameter); zeros when
    /// `v` does not influence the output.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Gradients aligned with `params`, in parameter order. Parameters that
    /// were not bound into the graph, or are frozen, get zeros.
    pub fn for_params(&self, params: &ParamSet) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        for &(node, pidx) in &self.params {
            if !params.get_index(pidx).trainable {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                for (o, v) in out[pidx].data_mut().iter_mut().zip(g.data()) {
                    *o += v;
                }
            }
        }
        out
    }
}

/// `b` broadcasts against `a` when its shape is a suffix of `a`'s shape.
fn broadcastable(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn sum_to_suffix(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape);
    let n = out.len();
    let o = out.data_mut();
    for (i, v) in g.data().iter().enumerate() {
        o[i % n] += v;
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::numeric(op.name()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input. Constants receive gradients too, so inputs can be
    /// differentiated against by reading [`Gradients::get`].
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Const)
    }

    /// Bind every parameter of `params` as a leaf. Returned handles are in
    /// parameter order.
    pub fn bind(&mut self, params: &ParamSet) -> Result<Vec<Var>> {
        params
            .iter()
            .enumerate()
            .map(|(i, p)| self.push(p.value.clone(), Op::Param(i)))
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            0.0,
        );
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcastable(sa, sb) {
            return Err(Error::shape(name, format!("{sa:?} vs {sb:?}")));
        }
        let av = self.value(a);
        let bv = self.value(b).data();
        let n = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv[i % n]))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    /// `a + b`, where `b` may broadcast over the leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| -x);
        self.push(t, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| c * x);
        self.push(t, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x + c);
        self.push(t, Op::AddScalar(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::exp);
        self.push(t, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::ln);
        self.push(t, Op::Ln(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::abs);
        self.push(t, Op::Abs(a))
    }

    /// `a^p` for a constant exponent.
    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x.powf(p));
        self.push(t, Op::Powf(a, p))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.powf(a, 2.0)
    }

    /// Clamp to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(t, Op::Clamp(a, lo, hi))
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("sum_axis", format!("axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        self.push(Tensor::new(new_shape, out)?, Op::SumAxis(a, axis))
    }

    /// Sum of all entries, as a scalar of shape `[]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Mean of all entries.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Concatenate along the last axis. All leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no operands"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", format!("{s:?} vs leading {lead:?}")));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let w = *s.last().ok_or_else(|| Error::shape("slice", "scalar operand"))?;
        if start >= end || end > w {
            return Err(Error::shape("slice", format!("{start}..{end} of width {w}")));
        }
        let rows = self.value(a).len() / w;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&src[r * w + start..r * w + end]);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = end - start;
        self.push(Tensor::new(shape, out)?, Op::Slice(a, start, end))
    }

    /// Split the last axis at `at`.
    pub fn split(&mut self, a: Var, at: usize) -> Result<(Var, Var)> {
        let w = self.value(a).cols();
        Ok((self.slice(a, 0, at)?, self.slice(a, at, w)?))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if !self.shape(output).is_empty() {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got {:?}", self.shape(output)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Const | Op::Param(_)) {
                continue;
            }
            // Intermediate gradients are consumed; only leaves keep theirs.
            let Some(g) = grads[idx].take() else { continue };
            let x = &node.value;
            match &node.op {
                Op::Const | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, &mut ga, 0.0);
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, &mut gb, 0.0);
                    accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    accumulate(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                }
                Op::Add(a, b) => {
                    let gb = sum_to_suffix(&g, self.shape(*b));
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    let gb = sum_to_suffix(&g.map(|v| -v), self.shape(*b));
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let n = bv.len();
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * bv[i % n])
                        .collect();
                    let gb_full: Vec<f64> = g.data().iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                    let gb = sum_to_suffix(&Tensor::new(g.shape().to_vec(), gb_full)?, self.shape(*b));
                    accumulate(&mut grads, *a, Tensor::new(g.shape().to_vec(), ga)?);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Neg(a) => accumulate(&mut grads, *a, g.map(|v| -v)),
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|v| c * v))
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Exp(a) => accumulate(&mut grads, *a, zip(&g, x, |gi, yi| gi * yi)),
                Op::Ln(a) => accumulate(&mut grads, *a, zip(&g, self.value(*a), |gi, ai| gi / ai)),
                Op::Tanh(a) => accumulate(&mut grads, *a, zip(&g, x, |gi, yi| gi * (1.0 - yi * yi))),
                Op::Abs(a) => accumulate(
                    &mut grads,
                    *a,
                    zip(&g, self.value(*a), |gi, ai| {
                        if ai > 0.0 {
                            gi
                        } else if ai < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    }),
                ),
                Op::Powf(a, p) => {
                    let p = *p;
                    let ga = zip(&g, self.value(*a), |gi, ai| {
                        if p == 0.0 {
                            0.0
                        } else if ai == 0.0 && p > 1.0 {
                            0.0
                        } else {
                            gi * p * ai.powf(p - 1.0)
                        }
                    });
                    if !ga.is_finite() {
                        return Err(Error::numeric("powf backward"));
                    }
                    accumulate(&mut grads, *a, ga)
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    accumulate(
                        &mut grads,
                        *a,
                        zip(&g, self.value(*a), |gi, ai| if ai < lo || ai > hi { 0.0 } else { gi }),
                    )
                }
                Op::SumAxis(a, axis) => {
                    let shape = self.shape(*a).to_vec();
                    let outer: usize = shape[..*axis].iter().product();
                    let len = shape[*axis];
                    let inner: usize = shape[axis + 1..].iter().product();
                    let gd = g.data();
                    let mut out = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        for j in 0..len {
                            let base = (o * len + j) * inner;
                            out[base..base + inner].copy_from_slice(&gd[o * inner..(o + 1) * inner]);
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(shape, out)?)
                }
                Op::SumAll(a) => {
                    let gi = g.item();
                    accumulate(&mut grads, *a, Tensor::full(self.shape(*a), gi))
                }
                Op::Concat(parts) => {
                    let total = g.cols();
                    let rows = g.len() / total.max(1);
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut out = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            out.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, p, Tensor::new(self.shape(p).to_vec(), out)?);
                    }
                }
                Op::Slice(a, start, end) => {
                    let shape = self.shape(*a).to_vec();
                    let w = *shape.last().unwrap();
                    let sw = end - start;
                    let rows = g.len() / sw;
                    let mut out = vec![0.0; rows * w];
                    for r in 0..rows {
                        out[r * w + start..r * w + end].copy_from_slice(&g.data()[r * sw..(r + 1) * sw]);
                    }
                    accumulate(&mut grads, *a, Tensor::new(shape, out)?)
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(p) => Some((i, p)),
                _ => None,
            })
            .collect();
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }
}

fn zip(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(g.shape().to_vec(), data).expect("same shape")
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let i2 = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let m = Tensor::matrix(2, 2, vec![1.5, -2.0, 3.0, 0.25]).unwrap();
        let mv = g.constant(m.clone()).unwrap();
        let out = g.matmul(i2, mv).unwrap();
        assert_eq!(g.value(out), &m);
    }

    #[test]
    fn exp_of_ln_is_identity() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.5, 2.0])).unwrap();
        let l = g.ln(x).unwrap();
        let e = g.exp(l).unwrap();
        assert!(g.value(e).max_abs_diff(g.value(x)) < 1e-15);
    }

    #[test]
    fn sum_axis_of_ones() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones(&[3, 4])).unwrap();
        let s = g.sum_axis(x, 0).unwrap();
        assert_eq!(g.value(s).data(), &[3.0; 4]);
        let s = g.sum_axis(x, 1).unwrap();
        assert_eq!(g.value(s).data(), &[4.0; 3]);
    }

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::vector(vec![1.0, -2.0, 3.0])).unwrap();
        let sq = g.mul(w, w).unwrap();
        let out = g.sum(sq).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(w).data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.7)).unwrap();
        let y = g.add(x, x).unwrap();
        let out = g.sum(y).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(x).item(), 2.0);
    }

    #[test]
    fn unrelated_nodes_get_zero_gradient() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let c = g.constant(Tensor::vector(vec![3.0, 4.0])).unwrap();
        let out = g.sum(c).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(w).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(w), Err(Error::Shape { .. })));
    }

    #[test]
    fn shape_mismatch_rejected_before_compute() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(g.matmul(a, b), Err(Error::Shape { .. })));
        let c = g.constant(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(g.add(a, c), Err(Error::Shape { .. })));
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn non_finite_result_names_the_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![-1.0])).unwrap();
        match g.ln(a) {
            Err(Error::Numeric { op, .. }) => assert_eq!(op, "ln"),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn broadcast_add_reduces_gradient_over_batch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[3, 2])).unwrap();
        let b = g.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = g.add(a, b).unwrap();
        let out = g.sum(y).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(b).data(), &[3.0, 3.0]);
    }

    #[test]
    fn concat_then_split_roundtrips() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        let b = g.constant(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let (l, r) = g.split(c, 1).unwrap();
        assert_eq!(g.value(l), g.value(a));
        assert_eq!(g.value(r), g.value(b));
    }
}
