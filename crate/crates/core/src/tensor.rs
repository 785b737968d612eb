//! Dense row-major tensors with shared storage.

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

/// Geometry of a 2-D convolution over an NHWC batch.
///
/// Describes the *forward* (downsampling) direction; a transposed
/// convolution uses the geometry of the convolution it is the adjoint of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        batch: usize,
        in_h: usize,
        in_w: usize,
        channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Invalid("kernel and stride must be positive".into()));
        }
        let span_h = in_h + 2 * pad;
        let span_w = in_w + 2 * pad;
        if span_h < kernel || span_w < kernel {
            return Err(Error::Invalid(format!(
                "kernel {kernel} larger than padded input {span_h}x{span_w}"
            )));
        }
        Ok(Self {
            batch,
            in_h,
            in_w,
            channels,
            kernel,
            stride,
            pad,
            out_h: (span_h - kernel) / stride + 1,
            out_w: (span_w - kernel) / stride + 1,
        })
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.in_h, self.in_w, self.channels]
    }

    pub fn cols_shape(&self) -> [usize; 2] {
        [
            self.batch * self.out_h * self.out_w,
            self.kernel * self.kernel * self.channels,
        ]
    }

    /// Input pixel (row, col) feeding output (oy, ox) at kernel tap (ky, kx).
    #[inline]
    fn tap(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        let x = (ox * self.stride + kx) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.in_h as isize || x >= self.in_w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Invalid(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![v; n]),
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: Vec::new(),
            data: Arc::new(vec![v]),
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new((0..n).map(&mut f).collect()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access; copies the storage if it is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|a| (*a).clone())
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(shape_err("reshape", shape, &self.shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_err("elementwise", &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: Arc::new(
                self.data
                    .iter()
                    .zip(other.data.iter())
                    .map(|(&a, &b)| f(a, b))
                    .collect(),
            ),
        })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(
                self.data
                    .iter()
                    .map(|v| U::from_f64(v.to_f64_lossy()).unwrap_or_else(U::nan))
                    .collect(),
            ),
        }
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::Invalid(format!("{op} needs a matrix, got shape {other:?}"))),
        }
    }

    /// `op(self) * op(other)` where `op` optionally transposes.
    pub fn matmul(&self, other: &Self, ta: bool, tb: bool) -> Result<Self> {
        let (ar, ac) = self.dims2("matmul")?;
        let (br, bc) = other.dims2("matmul")?;
        let (m, k, rsa, csa) = if ta {
            (ac, ar, 1, ac as isize)
        } else {
            (ar, ac, ac as isize, 1)
        };
        let (k2, n, rsb, csb) = if tb {
            (bc, br, 1, bc as isize)
        } else {
            (br, bc, bc as isize, 1)
        };
        if k != k2 {
            return Err(shape_err("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &self.data,
            rsa,
            csa,
            &other.data,
            rsb,
            csb,
            T::zero(),
            &mut out,
        );
        Self::new(&[m, n], out)
    }

    /// Generic axis permutation; `perm[i]` names the source axis of output axis `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Invalid(format!("bad permutation {perm:?} for rank {rank}")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut src_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            src_strides[i] = src_strides[i + 1] * self.shape[i + 1];
        }
        let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let n = self.len();
        let mut out = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..n {
            out.push(self.data[offset]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                offset += strides[ax];
                if idx[ax] < out_shape[ax] {
                    break;
                }
                offset -= strides[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
        Self::new(&out_shape, out)
    }

    /// Column sums of a matrix: `[r, c] -> [c]`.
    pub fn sum_rows(&self) -> Result<Self> {
        let (r, c) = self.dims2("sum_rows")?;
        let mut out = vec![T::zero(); c];
        for row in self.data.chunks_exact(c.max(1)).take(r) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        Self::new(&[c], out)
    }

    /// Row sums of a matrix: `[r, c] -> [r]`.
    pub fn sum_cols(&self) -> Result<Self> {
        let (r, c) = self.dims2("sum_cols")?;
        let out = if c == 0 {
            vec![T::zero(); r]
        } else {
            self.data.chunks_exact(c).map(|row| row.iter().copied().sum()).collect()
        };
        Self::new(&[r], out)
    }

    /// `[c] -> [rows, c]`.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Self> {
        if self.shape.len() != 1 {
            return Err(Error::Invalid("broadcast_rows needs a vector".into()));
        }
        let mut out = Vec::with_capacity(rows * self.len());
        for _ in 0..rows {
            out.extend_from_slice(&self.data);
        }
        Self::new(&[rows, self.len()], out)
    }

    /// `[r] -> [r, cols]`.
    pub fn broadcast_cols(&self, cols: usize) -> Result<Self> {
        if self.shape.len() != 1 {
            return Err(Error::Invalid("broadcast_cols needs a vector".into()));
        }
        let mut out = Vec::with_capacity(cols * self.len());
        for &v in self.data.iter() {
            out.extend(std::iter::repeat_n(v, cols));
        }
        Self::new(&[self.len(), cols], out)
    }

    /// Unfolds NHWC patches into rows: `[n, h, w, c] -> [n*oh*ow, k*k*c]`.
    pub fn im2col(&self, g: &ConvGeom) -> Result<Self> {
        if self.shape != g.input_shape() {
            return Err(shape_err("im2col", &g.input_shape(), &self.shape));
        }
        let [rows, width] = g.cols_shape();
        let c = g.channels;
        let mut out = vec![T::zero(); rows * width];
        let mut row = 0;
        for b in 0..g.batch {
            let base = b * g.in_h * g.in_w * c;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let dst = &mut out[row * width..(row + 1) * width];
                    for ky in 0..g.kernel {
                        for kx in 0..g.kernel {
                            if let Some((y, x)) = g.tap(oy, ox, ky, kx) {
                                let s = base + (y * g.in_w + x) * c;
                                let d = (ky * g.kernel + kx) * c;
                                dst[d..d + c].copy_from_slice(&self.data[s..s + c]);
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        Self::new(&[rows, width], out)
    }

    /// Adjoint of [`Tensor::im2col`]: scatters-and-adds patch rows back to NHWC.
    pub fn col2im(&self, g: &ConvGeom) -> Result<Self> {
        if self.shape != g.cols_shape() {
            return Err(shape_err("col2im", &g.cols_shape(), &self.shape));
        }
        let [_, width] = g.cols_shape();
        let c = g.channels;
        let mut out = vec![T::zero(); g.batch * g.in_h * g.in_w * c];
        let mut row = 0;
        for b in 0..g.batch {
            let base = b * g.in_h * g.in_w * c;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let src = &self.data[row * width..(row + 1) * width];
                    for ky in 0..g.kernel {
                        for kx in 0..g.kernel {
                            if let Some((y, x)) = g.tap(oy, ox, ky, kx) {
                                let d = base + (y * g.in_w + x) * c;
                                let s = (ky * g.kernel + kx) * c;
                                for (o, &v) in out[d..d + c].iter_mut().zip(&src[s..s + c]) {
                                    *o = *o + v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        Self::new(&g.input_shape(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| i as f64)
    }

    #[test]
    fn permute_matches_index_arithmetic() {
        let t = seq(&[2, 3, 4]);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    let src = t.data()[(a * 3 + b) * 4 + c];
                    let dst = p.data()[(c * 2 + a) * 3 + b];
                    assert_eq!(src, dst);
                }
            }
        }
        assert_eq!(p.permute(&[1, 2, 0]).unwrap(), t);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for any x, y.
        let g = ConvGeom::new(2, 5, 5, 3, 4, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (2, 2));
        let x = Tensor::<f64>::from_fn(&g.input_shape(), |i| ((i * 7919) % 13) as f64 - 6.0);
        let y = Tensor::<f64>::from_fn(&g.cols_shape(), |i| ((i * 104729) % 17) as f64 - 8.0);
        let lhs: f64 = x.im2col(&g).unwrap().data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(y.col2im(&g).unwrap().data()).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn geometry_matches_stride_two_halving() {
        let g = ConvGeom::new(1, 64, 64, 3, 4, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (32, 32));
        let g = ConvGeom::new(1, 4, 4, 512, 4, 1, 0).unwrap();
        assert_eq!((g.out_h, g.out_w), (1, 1));
        assert!(ConvGeom::new(1, 2, 2, 1, 4, 1, 0).is_err());
    }

    #[test]
    fn matmul_transpose_flags() {
        let a = seq(&[2, 3]);
        let b = seq(&[3, 2]);
        let ab = a.matmul(&b, false, false).unwrap();
        let at = a.permute(&[1, 0]).unwrap();
        assert_eq!(at.matmul(&b, true, false).unwrap(), ab);
        let bt = b.permute(&[1, 0]).unwrap();
        assert_eq!(a.matmul(&bt, false, true).unwrap(), ab);
        assert!(a.matmul(&a, false, false).is_err());
    }
}
