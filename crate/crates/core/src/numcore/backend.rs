//! One network definition, two execution modes: [`Eval`] runs kernels
//! directly with no tape, [`Graph`] records for backward.

use super::graph::{Graph, Var};
use super::kernels;
use super::tensor::{Scalar, Tensor};
use crate::error::Result;

pub trait Backend {
    type Value: Clone;

    fn constant(&mut self, t: Tensor) -> Self::Value;
    fn param(&mut self, name: &str, t: &Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, s: Scalar) -> Result<Self::Value>;
    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn silu(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn conv1d(&mut self, x: &Self::Value, k: &Self::Value, dilation: usize) -> Result<Self::Value>;
    fn transpose(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn concat_rows(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
}

/// Tape-free execution for inference and frozen branches.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl Backend for Eval {
    type Value = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn param(&mut self, _name: &str, t: &Tensor) -> Tensor {
        t.clone()
    }
    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::add(a, b)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::sub(a, b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::mul(a, b)
    }
    fn scale(&mut self, a: &Tensor, s: Scalar) -> Result<Tensor> {
        kernels::scale(a, s)
    }
    fn tanh(&mut self, a: &Tensor) -> Result<Tensor> {
        kernels::map("tanh", a, Scalar::tanh)
    }
    fn sigmoid(&mut self, a: &Tensor) -> Result<Tensor> {
        kernels::map("sigmoid", a, kernels::sigmoid)
    }
    fn silu(&mut self, a: &Tensor) -> Result<Tensor> {
        kernels::map("silu", a, kernels::silu)
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::matmul(a, b)
    }
    fn conv1d(&mut self, x: &Tensor, k: &Tensor, dilation: usize) -> Result<Tensor> {
        kernels::conv1d(x, k, dilation)
    }
    fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        kernels::transpose(a)
    }
    fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let refs: Vec<&Tensor> = parts.iter().collect();
        kernels::concat_rows(&refs)
    }
}

impl Backend for Graph {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        Graph::constant(self, t)
    }
    fn param(&mut self, name: &str, t: &Tensor) -> Var {
        Graph::param(self, name, t)
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        Graph::value(self, *v)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Graph::add(self, *a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Graph::sub(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Graph::mul(self, *a, *b)
    }
    fn scale(&mut self, a: &Var, s: Scalar) -> Result<Var> {
        Graph::scale(self, *a, s)
    }
    fn tanh(&mut self, a: &Var) -> Result<Var> {
        Graph::tanh(self, *a)
    }
    fn sigmoid(&mut self, a: &Var) -> Result<Var> {
        Graph::sigmoid(self, *a)
    }
    fn silu(&mut self, a: &Var) -> Result<Var> {
        Graph::silu(self, *a)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Graph::matmul(self, *a, *b)
    }
    fn conv1d(&mut self, x: &Var, k: &Var, dilation: usize) -> Result<Var> {
        Graph::conv1d(self, *x, *k, dilation)
    }
    fn transpose(&mut self, a: &Var) -> Result<Var> {
        Graph::transpose(self, *a)
    }
    fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        Graph::concat_rows(self, parts)
    }
}
