//! Define-by-run reverse-mode tape.
//!
//! Every op appends a node holding its forward value; node indices are a
//! topological order, so backward is a single reverse sweep.

use std::collections::HashMap;
use std::fmt;

use super::kernels::{self, ConvGeom};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

type Deriv = Box<dyn Fn(Scalar) -> Scalar>;

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Scalar),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Silu(Var),
    MatMul(Var, Var),
    Conv1d { x: Var, kernel: Var, dilation: usize },
    Transpose(Var),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    SumSq(Var),
    /// Elementwise user function with its derivative supplied by the caller.
    Map(Var, Deriv),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<Scalar>>>,
    shapes: Vec<Vec<usize>>,
    names: HashMap<String, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(&self.shapes[v.0], g.clone()).expect("grad matches node shape"))
    }

    /// Gradient of a named parameter leaf.
    pub fn named(&self, name: &str) -> Option<Tensor> {
        self.names.get(name).and_then(|&v| self.get(v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.keys().map(String::as_str)
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    consumed: bool,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("params", &self.params.len())
            .field("consumed", &self.consumed)
            .finish()
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Named trainable leaf. Repeated calls with the same name return the
    /// same node so gradients from every use accumulate in one place.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.leaf(t.clone());
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::add(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::sub(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::mul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: Scalar) -> Result<Var> {
        let out = kernels::scale(self.value(a), s)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Scale(a, s), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = kernels::map("tanh", self.value(a), Scalar::tanh)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Tanh(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = kernels::map("sigmoid", self.value(a), kernels::sigmoid)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sigmoid(a), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = kernels::map("relu", self.value(a), |x| x.max(0.0))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Relu(a), rg))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        let out = kernels::map("silu", self.value(a), kernels::silu)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Silu(a), rg))
    }

    /// Elementwise `f` whose backward uses the supplied derivative `df`.
    pub fn map(
        &mut self,
        a: Var,
        f: impl Fn(Scalar) -> Scalar,
        df: impl Fn(Scalar) -> Scalar + 'static,
    ) -> Result<Var> {
        let out = kernels::map("map", self.value(a), f)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Map(a, Box::new(df)), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn conv1d(&mut self, x: Var, kernel: Var, dilation: usize) -> Result<Var> {
        let out = kernels::conv1d(self.value(x), self.value(kernel), dilation)?;
        let rg = self.rg(x) || self.rg(kernel);
        Ok(self.push(out, Op::Conv1d { x, kernel, dilation }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = kernels::transpose(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = kernels::concat_rows(&tensors)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let s = v.data().iter().sum::<Scalar>() / v.len() as Scalar;
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), rg))
    }

    /// Squared L2 norm, `sum(a^2)`.
    pub fn sum_sq(&mut self, a: Var) -> Result<Var> {
        let s = kernels::sum_sq(self.value(a));
        if !s.is_finite() {
            return Err(Error::NonFinite {
                op: "sum_sq".into(),
            });
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s), Op::SumSq(a), rg))
    }

    /// Reverse sweep from a scalar `loss`. The tape can be swept only once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Tape("backward called on a consumed tape".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<Scalar>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        // Interior gradients are not part of the contract; keep leaves only.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[i] = None;
            } else if grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            grads,
            shapes,
            names: self.params.clone(),
        })
    }

    fn propagate(&self, i: usize, g: &[Scalar], grads: &mut [Option<Vec<Scalar>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out_shape = node.value.shape();
        let mut acc = |v: Var, delta: Vec<Scalar>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&delta).for_each(|(e, d)| *e += d),
                slot @ None => *slot = Some(delta),
            }
        };
        let elementwise = |a: Var, f: &dyn Fn(Scalar, Scalar) -> Scalar| -> Vec<Scalar> {
            let x = self.nodes[a.0].value.data();
            let y = node.value.data();
            g.iter()
                .zip(x.iter().zip(y))
                .map(|(&gi, (&xi, &yi))| gi * f(xi, yi))
                .collect()
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, kernels::reduce_to(g, out_shape, self.value(*a).shape()));
                acc(*b, kernels::reduce_to(g, out_shape, self.value(*b).shape()));
            }
            Op::Sub(a, b) => {
                acc(*a, kernels::reduce_to(g, out_shape, self.value(*a).shape()));
                let neg: Vec<_> = g.iter().map(|v| -v).collect();
                acc(*b, kernels::reduce_to(&neg, out_shape, self.value(*b).shape()));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let eb = kernels::expand(tb, out_shape);
                    let ga: Vec<_> = g.iter().zip(&eb).map(|(x, y)| x * y).collect();
                    acc(*a, kernels::reduce_to(&ga, out_shape, ta.shape()));
                }
                if self.rg(*b) {
                    let ea = kernels::expand(ta, out_shape);
                    let gb: Vec<_> = g.iter().zip(&ea).map(|(x, y)| x * y).collect();
                    acc(*b, kernels::reduce_to(&gb, out_shape, tb.shape()));
                }
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|v| v * s).collect()),
            Op::Tanh(a) => acc(*a, elementwise(*a, &|_, y| 1.0 - y * y)),
            Op::Sigmoid(a) => acc(*a, elementwise(*a, &|_, y| y * (1.0 - y))),
            Op::Relu(a) => acc(*a, elementwise(*a, &|x, _| if x > 0.0 { 1.0 } else { 0.0 })),
            Op::Silu(a) => acc(*a, elementwise(*a, &|x, _| kernels::silu_grad(x))),
            Op::Map(a, df) => acc(*a, elementwise(*a, &|x, _| df(x))),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2("matmul")?;
                let n = tb.shape()[1];
                if self.rg(*a) {
                    // dA = dC * B^T
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g, false, tb.data(), true, 0.0, &mut ga);
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    // dB = A^T * dC
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm(k, m, n, ta.data(), true, g, false, 0.0, &mut gb);
                    acc(*b, gb);
                }
            }
            Op::Conv1d {
                x,
                kernel,
                dilation,
            } => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let geom = ConvGeom::new(tx, tk, *dilation)?;
                let rows = geom.in_ch * geom.k;
                let f = geom.frames;
                if self.rg(*kernel) {
                    let cols = geom.im2col(tx.data());
                    let mut gk = vec![0.0; geom.out_ch * rows];
                    kernels::gemm(geom.out_ch, f, rows, g, false, &cols, true, 0.0, &mut gk);
                    acc(*kernel, gk);
                }
                if self.rg(*x) {
                    let mut gcols = vec![0.0; rows * f];
                    kernels::gemm(rows, geom.out_ch, f, tk.data(), true, g, false, 0.0, &mut gcols);
                    acc(*x, geom.col2im(&gcols));
                }
            }
            Op::Transpose(a) => {
                let gt = Tensor::new(out_shape, g.to_vec())?;
                acc(*a, kernels::transpose(&gt)?.into_vec());
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::Sum(a) => acc(*a, vec![g[0]; self.value(*a).len()]),
            Op::Mean(a) => {
                let n = self.value(*a).len();
                acc(*a, vec![g[0] / n as Scalar; n]);
            }
            Op::SumSq(a) => acc(*a, self.value(*a).data().iter().map(|x| 2.0 * x * g[0]).collect()),
        }
        Ok(())
    }
}
