//! Forward kernels and the gradient helpers the tape uses.
//!
//! Broadcasting rule: both operands must have the same rank, and every
//! dimension must either match or be 1 on one side. A size-1 dimension is
//! repeated to the other operand's size. Nothing else is broadcast.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let err = || Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() != b.len() {
        return Err(err());
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(err()),
        })
        .collect()
}

/// Strides for reading `shape` as if it were broadcast up to `out` (0 on expanded dims).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        strides[d] = if shape[d] == 1 && out[d] != 1 { 0 } else { acc };
        acc *= shape[d];
    }
    strides
}

/// Visits every output index with the matching flat offsets into `a` and `b`.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out.len();
    let total: usize = out.iter().product();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for flat in 0..total {
        f(flat, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

pub fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(Scalar, Scalar) -> Scalar,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::checked(op, a.shape().to_vec(), data);
    }
    let out = broadcast_shape(op, a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![0.0; out.iter().product()];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(&out, &sa, &sb, |o, i, j| data[o] = f(ad[i], bd[j]));
    Tensor::checked(op, out, data)
}

/// Sums a gradient of broadcast shape `grad.shape()` back down to `target`.
pub fn reduce_to(grad: &[Scalar], out: &[usize], target: &[usize]) -> Vec<Scalar> {
    if out == target {
        return grad.to_vec();
    }
    let st = broadcast_strides(target, out);
    let mut acc = vec![0.0; target.iter().product()];
    for_each_broadcast(out, &st, &st, |o, i, _| acc[i] += grad[o]);
    acc
}

/// Gathers `other` broadcast to `out` (used by mul backward).
pub fn expand(t: &Tensor, out: &[usize]) -> Vec<Scalar> {
    if t.shape() == out {
        return t.data().to_vec();
    }
    let s = broadcast_strides(t.shape(), out);
    let mut data = vec![0.0; out.iter().product()];
    let td = t.data();
    for_each_broadcast(out, &s, &s, |o, i, _| data[o] = td[i]);
    data
}

pub fn map(op: &'static str, a: &Tensor, f: impl Fn(Scalar) -> Scalar) -> Result<Tensor> {
    Tensor::checked(op, a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

pub fn sigmoid(x: Scalar) -> Scalar {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: Scalar) -> Scalar {
    x * sigmoid(x)
}

pub fn silu_grad(x: Scalar) -> Scalar {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers. Transposition
/// is expressed through the strides, so no copies are made.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Scalar],
    a_trans: bool,
    b: &[Scalar],
    b_trans: bool,
    beta: Scalar,
    c: &mut [Scalar],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the three slices, and `c` is exclusively borrowed.
    unsafe {
        #[cfg(not(feature = "f32"))]
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
        #[cfg(feature = "f32")]
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut c);
    Tensor::checked("matmul", vec![m, n], c)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2("transpose")?;
    let d = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::checked("transpose", vec![c, r], out)
}

pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_rows of nothing"))?;
    let (_, cols) = first.dims2("concat_rows")?;
    let mut rows = 0;
    let mut data = Vec::new();
    for p in parts {
        let (r, c) = p.dims2("concat_rows")?;
        if c != cols {
            return Err(Error::Shape {
                op: "concat_rows",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        rows += r;
        data.extend_from_slice(p.data());
    }
    Tensor::checked("concat_rows", vec![rows, cols], data)
}

/// Geometry of a "same"-padded dilated 1-D convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub dilation: usize,
    pub frames: usize,
}

impl ConvGeom {
    pub fn new(x: &Tensor, kernel: &Tensor, dilation: usize) -> Result<Self> {
        let (in_ch, frames) = x.dims2("conv1d")?;
        let (out_ch, kin, k) = match kernel.shape()[..] {
            [o, i, k] => (o, i, k),
            _ => {
                return Err(Error::Shape {
                    op: "conv1d",
                    lhs: x.shape().to_vec(),
                    rhs: kernel.shape().to_vec(),
                })
            }
        };
        if kin != in_ch {
            return Err(Error::Shape {
                op: "conv1d",
                lhs: x.shape().to_vec(),
                rhs: kernel.shape().to_vec(),
            });
        }
        if k % 2 == 0 {
            return Err(Error::invalid(format!(
                "conv1d kernel size must be odd, got {k}"
            )));
        }
        if dilation == 0 {
            return Err(Error::invalid("conv1d dilation must be >= 1"));
        }
        Ok(Self {
            in_ch,
            out_ch,
            k,
            dilation,
            frames,
        })
    }

    /// Frame offset of tap `j` relative to the output frame.
    fn offset(&self, j: usize) -> isize {
        (j as isize - (self.k as isize - 1) / 2) * self.dilation as isize
    }

    /// Zero-padded patch matrix of shape `[in_ch * k, frames]`.
    pub fn im2col(&self, x: &[Scalar]) -> Vec<Scalar> {
        let f = self.frames;
        let mut cols = vec![0.0; self.in_ch * self.k * f];
        for c in 0..self.in_ch {
            let row_in = &x[c * f..(c + 1) * f];
            for j in 0..self.k {
                let off = self.offset(j);
                let row = &mut cols[(c * self.k + j) * f..(c * self.k + j + 1) * f];
                let lo = (-off).max(0) as usize;
                let hi = (f as isize - off).min(f as isize).max(0) as usize;
                for t in lo..hi {
                    row[t] = row_in[(t as isize + off) as usize];
                }
            }
        }
        cols
    }

    /// Adjoint of [`ConvGeom::im2col`].
    pub fn col2im(&self, cols: &[Scalar]) -> Vec<Scalar> {
        let f = self.frames;
        let mut x = vec![0.0; self.in_ch * f];
        for c in 0..self.in_ch {
            for j in 0..self.k {
                let off = self.offset(j);
                let row = &cols[(c * self.k + j) * f..(c * self.k + j + 1) * f];
                let lo = (-off).max(0) as usize;
                let hi = (f as isize - off).min(f as isize).max(0) as usize;
                for t in lo..hi {
                    x[c * f + (t as isize + off) as usize] += row[t];
                }
            }
        }
        x
    }
}

/// Non-causal dilated 1-D convolution, cross-correlation convention (no
/// kernel flip): `y[o, t] = sum_{i, j} w[o, i, j] * x[i, t + (j - (k-1)/2) * d]`
/// with zeros outside the signal, so the frame count is preserved.
pub fn conv1d(x: &Tensor, kernel: &Tensor, dilation: usize) -> Result<Tensor> {
    let g = ConvGeom::new(x, kernel, dilation)?;
    let mut out = vec![0.0; g.out_ch * g.frames];
    if g.k == 1 {
        gemm(g.out_ch, g.in_ch, g.frames, kernel.data(), false, x.data(), false, 0.0, &mut out);
    } else {
        let cols = g.im2col(x.data());
        gemm(g.out_ch, g.in_ch * g.k, g.frames, kernel.data(), false, &cols, false, 0.0, &mut out);
    }
    Tensor::checked("conv1d", vec![g.out_ch, g.frames], out)
}

pub fn sum_sq(a: &Tensor) -> Scalar {
    a.data().iter().map(|v| v * v).sum()
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_broadcast("sub", a, b, |x, y| x - y)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_broadcast("add", a, b, |x, y| x + y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_broadcast("mul", a, b, |x, y| x * y)
}

pub fn scale(a: &Tensor, s: Scalar) -> Result<Tensor> {
    map("scale", a, |x| x * s)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[Scalar]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn add_componentwise() {
        let c = add(&t(&[2], &[1.0, 2.0]), &t(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(c.data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let m = t(&[2, 2], &[0.3, -1.0, 2.5, 7.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(matmul(&eye, &m).unwrap(), m);
        let c = matmul(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), &t(&[2, 1], &[5.0, 6.0])).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn broadcast_bias_over_frames() {
        let h = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[2, 1], &[10.0, 20.0]);
        let y = add(&h, &b).unwrap();
        assert_eq!(y.data(), &[11.0, 12.0, 13.0, 24.0, 25.0, 26.0]);
        let g = reduce_to(y.data(), &[2, 3], &[2, 1]);
        assert_eq!(g, vec![36.0, 75.0]);
    }

    #[test]
    fn broadcast_rejects_rank_or_size_mismatch() {
        let err = add(&t(&[2, 3], &[0.0; 6]), &t(&[3, 2], &[0.0; 6])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
        assert!(add(&t(&[2], &[0.0; 2]), &t(&[2, 1], &[0.0; 2])).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let a = t(&[1], &[Scalar::MAX]);
        assert!(matches!(scale(&a, 10.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[1, 5], &[0.5, -1.0, 2.0, 3.0, 4.0]);
        let y = conv1d(&x, &t(&[1, 1, 1], &[1.0]), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_is_cross_correlation() {
        let x = t(&[1, 5], &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let y = conv1d(&x, &t(&[1, 1, 3], &[1.0, 2.0, 3.0]), 1).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn conv_preserves_frames_with_dilation() {
        let x = Tensor::ones(&[2, 7]);
        let y = conv1d(&x, &Tensor::ones(&[3, 2, 3]), 4).unwrap();
        assert_eq!(y.shape(), &[3, 7]);
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let x = Tensor::ones(&[1, 4]);
        assert!(conv1d(&x, &Tensor::ones(&[1, 1, 2]), 1).is_err());
    }
}
