//! Eager reverse-mode automatic differentiation.
//!
//! Every op computes its value immediately and records how it was produced.
//! [`Graph::backward`] writes the gradient computation into the same graph
//! using ordinary ops, so gradients are themselves differentiable. The
//! gradient penalty relies on this: it differentiates a function of the
//! critic's input gradient with respect to the critic's parameters.

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ConvGeom, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, T),
    AddScalar(Var, T),
    MulConst(Var, Tensor<T>),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    Exp(Var),
    Ln(Var),
    ClampMin(Var, T),
    Tanh(Var),
    LeakyRelu(Var, T),
    SumAll(Var),
    BroadcastScalar(Var),
    SumRows(Var),
    BroadcastRows(Var),
    SumCols(Var),
    BroadcastCols(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Im2Col(Var, ConvGeom),
    Col2Im(Var, ConvGeom),
    SoftmaxRows(Var),
}

impl<T> Op<T> {
    fn inputs(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul { a, b, .. } => [Some(a), Some(b)],
            Neg(a) | Scale(a, _) | AddScalar(a, _) | MulConst(a, _) | Square(a) | Sqrt(a)
            | Recip(a) | Exp(a) | Ln(a) | ClampMin(a, _) | Tanh(a) | LeakyRelu(a, _)
            | SumAll(a) | BroadcastScalar(a) | SumRows(a) | BroadcastRows(a) | SumCols(a)
            | BroadcastCols(a) | Reshape(a) | Permute(a, _) | Im2Col(a, _) | Col2Im(a, _)
            | SoftmaxRows(a) => [Some(a), None],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Smallest value `sqrt` backward divides by.
const SQRT_FLOOR: f64 = 1e-12;

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Inserts a tensor as a leaf. Leaves are differentiable inputs or
    /// constants depending only on what `backward` is asked for.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.value(v).item()
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), f)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::AddScalar(a, c), |x| x + c)
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, m: Tensor<T>) -> Result<Var> {
        let value = self.value(a).zip_map(&m, |x, y| x * y)?;
        Ok(self.push(value, Op::MulConst(a, m)))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |x| x.sqrt())
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, Op::Recip(a), |x| x.recip())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.ln())
    }

    pub fn clamp_min(&mut self, a: Var, lo: T) -> Var {
        self.unary(a, Op::ClampMin(a, lo), |x| x.max(lo))
    }

    /// `ln(max(x, floor))`.
    pub fn ln_floor(&mut self, a: Var, floor: T) -> Var {
        let c = self.clamp_min(a, floor);
        self.ln(c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > T::zero() { x } else { x * slope })
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.value(a).len()).unwrap_or_else(T::one);
        let s = self.sum_all(a);
        self.scale(s, n.recip())
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn broadcast_scalar(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let src = self.value(a);
        if src.len() != 1 {
            return Err(shape_err("broadcast_scalar", &[], src.shape()));
        }
        let value = Tensor::full(shape, src.item());
        Ok(self.push(value, Op::BroadcastScalar(a)))
    }

    /// `[r, c] -> [c]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sum_rows()?;
        Ok(self.push(value, Op::SumRows(a)))
    }

    /// `[c] -> [rows, c]`.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let value = self.value(a).broadcast_rows(rows)?;
        Ok(self.push(value, Op::BroadcastRows(a)))
    }

    /// `[r, c] -> [r]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sum_cols()?;
        Ok(self.push(value, Op::SumCols(a)))
    }

    /// `[r] -> [r, cols]`.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let value = self.value(a).broadcast_cols(cols)?;
        Ok(self.push(value, Op::BroadcastCols(a)))
    }

    /// Adds a `[c]` vector to every row of an `[r, c]` matrix.
    pub fn add_row_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        let rows = self.shape(x).first().copied().unwrap_or(0);
        let b = self.broadcast_rows(v, rows)?;
        self.add(x, b)
    }

    /// Multiplies every row of an `[r, c]` matrix elementwise by a `[c]` vector.
    pub fn mul_row_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        let rows = self.shape(x).first().copied().unwrap_or(0);
        let b = self.broadcast_rows(v, rows)?;
        self.mul(x, b)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) * op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b), ta, tb)?;
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let value = self.value(a).permute(perm)?;
        Ok(self.push(value, Op::Permute(a, perm.to_vec())))
    }

    pub fn im2col(&mut self, a: Var, geom: ConvGeom) -> Result<Var> {
        let value = self.value(a).im2col(&geom)?;
        Ok(self.push(value, Op::Im2Col(a, geom)))
    }

    pub fn col2im(&mut self, a: Var, geom: ConvGeom) -> Result<Var> {
        let value = self.value(a).col2im(&geom)?;
        Ok(self.push(value, Op::Col2Im(a, geom)))
    }

    /// Row-wise softmax of an `[r, k]` matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let k = match src.shape() {
            &[_, k] if k > 0 => k,
            other => return Err(Error::Invalid(format!("softmax needs [rows, k], got {other:?}"))),
        };
        let mut out = src.data().to_vec();
        for row in out.chunks_exact_mut(k) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z = z + *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        let value = Tensor::new(src.shape(), out)?;
        Ok(self.push(value, Op::SoftmaxRows(a)))
    }

    /// Convolution of an NHWC batch with weights laid out `[k*k*c_in, c_out]`
    /// (patch order: kernel row, kernel column, channel).
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let &[n, h, w, c] = self.shape(x) else {
            return Err(Error::Invalid(format!("conv2d needs NHWC input, got {:?}", self.shape(x))));
        };
        let geom = ConvGeom::new(n, h, w, c, kernel, stride, pad)?;
        let cols = self.im2col(x, geom)?;
        let mut y = self.matmul(cols, weight)?;
        if let Some(b) = bias {
            y = self.add_row_vec(y, b)?;
        }
        let c_out = self.shape(y)[1];
        self.reshape(y, &[n, geom.out_h, geom.out_w, c_out])
    }

    /// Transposed convolution (adjoint of [`Graph::conv2d`] in its input)
    /// with weights laid out `[c_in, k*k*c_out]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let &[n, h, w, c] = self.shape(x) else {
            return Err(Error::Invalid(format!(
                "conv_transpose2d needs NHWC input, got {:?}",
                self.shape(x)
            )));
        };
        let wshape = self.shape(weight).to_vec();
        if wshape.len() != 2 || wshape[0] != c || wshape[1] % (kernel * kernel) != 0 {
            return Err(shape_err("conv_transpose2d weight", &[c, kernel * kernel], &wshape));
        }
        let c_out = wshape[1] / (kernel * kernel);
        let out_h = ((h - 1) * stride + kernel).checked_sub(2 * pad);
        let out_w = ((w - 1) * stride + kernel).checked_sub(2 * pad);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::Invalid("transposed convolution padding too large".into()));
        };
        let geom = ConvGeom::new(n, out_h, out_w, c_out, kernel, stride, pad)?;
        if (geom.out_h, geom.out_w) != (h, w) {
            return Err(Error::Invalid("transposed convolution geometry does not invert".into()));
        }
        let flat = self.reshape(x, &[n * h * w, c])?;
        let cols = self.matmul(flat, weight)?;
        let mut y = self.col2im(cols, geom)?;
        if let Some(b) = bias {
            let flat = self.reshape(y, &[n * out_h * out_w, c_out])?;
            let biased = self.add_row_vec(flat, b)?;
            y = self.reshape(biased, &[n, out_h, out_w, c_out])?;
        }
        Ok(y)
    }

    /// Whether `out` is a function of `input` through recorded ops.
    pub fn depends_on(&self, out: Var, input: Var) -> bool {
        if input.0 > out.0 {
            return false;
        }
        let mut dep = vec![false; out.0 + 1];
        dep[input.0] = true;
        for i in input.0 + 1..=out.0 {
            dep[i] = self.nodes[i].op.inputs().iter().flatten().any(|v| dep[v.0]);
        }
        dep[out.0]
    }

    /// Records the gradient of the one-element `loss` with respect to each
    /// of `wrt` and returns the gradient nodes (same shapes as `wrt`).
    ///
    /// Gradients are ordinary graph nodes and may be differentiated again.
    pub fn backward(&mut self, loss: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", &[], self.shape(loss)));
        }
        let end = loss.0 + 1;
        let mut dep = vec![false; end];
        for w in wrt {
            if w.0 < end {
                dep[w.0] = true;
            }
        }
        for i in 0..end {
            if !dep[i] {
                dep[i] = self.nodes[i].op.inputs().iter().flatten().any(|v| dep[v.0]);
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; end];
        if dep[loss.0] {
            let seed = Tensor::full(self.shape(loss), T::one());
            grads[loss.0] = Some(self.leaf(seed));
        }
        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !dep[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, contrib) in self.backward_op(Var(i), &op, g)? {
                if !dep[input.0] {
                    continue;
                }
                grads[input.0] = Some(match grads[input.0] {
                    Some(prev) => self.add(prev, contrib)?,
                    None => contrib,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Tensor::zeros(self.shape(*w));
                    self.leaf(zeros)
                }
            })
            .collect())
    }

    /// Gradient contributions of node `y = op(...)` given upstream grad `g`.
    fn backward_op(&mut self, y: Var, op: &Op<T>, g: Var) -> Result<Vec<(Var, Var)>> {
        let two = T::one() + T::one();
        Ok(match *op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(a, g), (b, g)],
            Op::Sub(a, b) => {
                let nb = self.neg(g);
                vec![(a, g), (b, nb)]
            }
            Op::Mul(a, b) => {
                let ga = self.mul(g, b)?;
                let gb = self.mul(g, a)?;
                vec![(a, ga), (b, gb)]
            }
            Op::Neg(a) => vec![(a, self.neg(g))],
            Op::Scale(a, c) => vec![(a, self.scale(g, c))],
            Op::AddScalar(a, _) => vec![(a, g)],
            Op::MulConst(a, ref m) => vec![(a, self.mul_const(g, m.clone())?)],
            Op::Square(a) => {
                let a2 = self.scale(a, two);
                vec![(a, self.mul(g, a2)?)]
            }
            Op::Sqrt(a) => {
                let safe = self.clamp_min(y, T::lit(SQRT_FLOOR));
                let r = self.recip(safe);
                let half = self.scale(r, two.recip());
                vec![(a, self.mul(g, half)?)]
            }
            Op::Recip(a) => {
                let y2 = self.square(y);
                let t = self.mul(g, y2)?;
                vec![(a, self.neg(t))]
            }
            Op::Exp(a) => vec![(a, self.mul(g, y)?)],
            Op::Ln(a) => {
                let r = self.recip(a);
                vec![(a, self.mul(g, r)?)]
            }
            Op::ClampMin(a, lo) => {
                let mask = self.value(a).map(|x| if x >= lo { T::one() } else { T::zero() });
                vec![(a, self.mul_const(g, mask)?)]
            }
            Op::Tanh(a) => {
                let y2 = self.square(y);
                let gy2 = self.mul(g, y2)?;
                vec![(a, self.sub(g, gy2)?)]
            }
            Op::LeakyRelu(a, slope) => {
                let mask = self.value(a).map(|x| if x > T::zero() { T::one() } else { slope });
                vec![(a, self.mul_const(g, mask)?)]
            }
            Op::SumAll(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.broadcast_scalar(g, &shape)?)]
            }
            Op::BroadcastScalar(a) => {
                let s = self.sum_all(g);
                let shape = self.shape(a).to_vec();
                vec![(a, self.reshape(s, &shape)?)]
            }
            Op::SumRows(a) => {
                let rows = self.shape(a)[0];
                vec![(a, self.broadcast_rows(g, rows)?)]
            }
            Op::BroadcastRows(a) => vec![(a, self.sum_rows(g)?)],
            Op::SumCols(a) => {
                let cols = self.shape(a)[1];
                vec![(a, self.broadcast_cols(g, cols)?)]
            }
            Op::BroadcastCols(a) => vec![(a, self.sum_cols(g)?)],
            Op::MatMul { a, b, ta, tb } => {
                let ga = if ta {
                    self.matmul_t(b, g, tb, true)?
                } else {
                    self.matmul_t(g, b, false, !tb)?
                };
                let gb = if tb {
                    self.matmul_t(g, a, true, ta)?
                } else {
                    self.matmul_t(a, g, !ta, false)?
                };
                vec![(a, ga), (b, gb)]
            }
            Op::Reshape(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.reshape(g, &shape)?)]
            }
            Op::Permute(a, ref perm) => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                vec![(a, self.permute(g, &inv)?)]
            }
            Op::Im2Col(a, geom) => vec![(a, self.col2im(g, geom)?)],
            Op::Col2Im(a, geom) => vec![(a, self.im2col(g, geom)?)],
            Op::SoftmaxRows(a) => {
                let k = self.shape(y)[1];
                let gy = self.mul(g, y)?;
                let s = self.sum_cols(gy)?;
                let sb = self.broadcast_cols(s, k)?;
                let ys = self.mul(y, sb)?;
                vec![(a, self.sub(gy, ys)?)]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    /// Central differences of a scalar function of one tensor.
    fn numeric_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            let scale = 1.0f64.max(x.abs()).max(y.abs());
            assert!((x - y).abs() <= tol * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn polynomial_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let x2 = g.square(x);
        let e = g.exp(x);
        let p = g.mul(x2, e).unwrap();
        let loss = g.sum_all(p);
        let gx = g.backward(loss, &[x]).unwrap()[0];
        let expect: Vec<f64> = [1.0f64, -2.0, 0.5]
            .iter()
            .map(|&v| (2.0 * v + v * v) * v.exp())
            .collect();
        assert_close(g.value(gx).data(), &expect, 1e-12);
    }

    #[test]
    fn second_derivative_through_backward() {
        // f(x) = sum tanh(x)^3 ; check d/dx of ||df/dx||^2 by finite differences.
        let x0 = t(&[4], &[0.3, -0.7, 1.1, 0.05]);
        let penalty = |x: &Tensor<f64>| -> (f64, Vec<f64>) {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let th = g.tanh(xv);
            let sq = g.square(th);
            let cube = g.mul(sq, th).unwrap();
            let f = g.sum_all(cube);
            let gx = g.backward(f, &[xv]).unwrap()[0];
            let n2 = g.square(gx);
            let p = g.sum_all(n2);
            let gp = g.backward(p, &[xv]).unwrap()[0];
            (g.scalar_value(p), g.value(gp).data().to_vec())
        };
        let (_, analytic) = penalty(&x0);
        let numeric = numeric_grad(|x| penalty(x).0, &x0);
        assert_close(&analytic, &numeric, 1e-6);
    }

    #[test]
    fn matmul_gradients_for_all_transpose_flags() {
        let a0 = Tensor::<f64>::from_fn(&[3, 2], |i| (i as f64 * 0.37).sin());
        let b0 = Tensor::<f64>::from_fn(&[3, 2], |i| (i as f64 * 0.91).cos());
        for (ta, tb) in [(true, false), (false, true)] {
            let run = |a: &Tensor<f64>, b: &Tensor<f64>| {
                let mut g = Graph::new();
                let av = g.leaf(a.clone());
                let bv = g.leaf(b.clone());
                let c = g.matmul_t(av, bv, ta, tb).unwrap();
                let c2 = g.square(c);
                let l = g.sum_all(c2);
                let gr = g.backward(l, &[av, bv]).unwrap();
                (
                    g.scalar_value(l),
                    g.value(gr[0]).data().to_vec(),
                    g.value(gr[1]).data().to_vec(),
                )
            };
            let (_, ga, gb) = run(&a0, &b0);
            assert_close(&ga, &numeric_grad(|a| run(a, &b0).0, &a0), 1e-6);
            assert_close(&gb, &numeric_grad(|b| run(&a0, b).0, &b0), 1e-6);
        }
    }

    #[test]
    fn conv_and_transposed_conv_gradients() {
        let x0 = Tensor::<f64>::from_fn(&[2, 4, 4, 2], |i| ((i * 37) % 11) as f64 / 5.0 - 1.0);
        let w0 = Tensor::<f64>::from_fn(&[4 * 4 * 2, 3], |i| ((i * 13) % 7) as f64 / 7.0 - 0.5);
        let wt0 = Tensor::<f64>::from_fn(&[3, 4 * 4 * 2], |i| ((i * 29) % 5) as f64 / 5.0 - 0.4);
        let run = |x: &Tensor<f64>, w: &Tensor<f64>, wt: &Tensor<f64>| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let wtv = g.leaf(wt.clone());
            let y = g.conv2d(xv, wv, None, 4, 2, 1).unwrap();
            assert_eq!(g.shape(y), &[2, 2, 2, 3]);
            let a = g.leaky_relu(y, 0.2);
            let z = g.conv_transpose2d(a, wtv, None, 4, 2, 1).unwrap();
            assert_eq!(g.shape(z), &[2, 4, 4, 2]);
            let z2 = g.square(z);
            let l = g.sum_all(z2);
            let gr = g.backward(l, &[xv, wv, wtv]).unwrap();
            (g.scalar_value(l), gr.iter().map(|v| g.value(*v).data().to_vec()).collect::<Vec<_>>())
        };
        let (_, gr) = run(&x0, &w0, &wt0);
        assert_close(&gr[0], &numeric_grad(|x| run(x, &w0, &wt0).0, &x0), 1e-5);
        assert_close(&gr[1], &numeric_grad(|w| run(&x0, w, &wt0).0, &w0), 1e-5);
        assert_close(&gr[2], &numeric_grad(|wt| run(&x0, &w0, wt).0, &wt0), 1e-5);
    }

    #[test]
    fn softmax_gradient() {
        let x0 = Tensor::<f64>::from_fn(&[3, 4], |i| (i as f64 * 0.7).sin() * 2.0);
        let wts = Tensor::<f64>::from_fn(&[3, 4], |i| i as f64 - 5.0);
        let run = |x: &Tensor<f64>| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let p = g.softmax_rows(xv).unwrap();
            let lp = g.ln(p);
            let wp = g.mul_const(lp, wts.clone()).unwrap();
            let l = g.sum_all(wp);
            let gx = g.backward(l, &[xv]).unwrap()[0];
            (g.scalar_value(l), g.value(gx).data().to_vec())
        };
        let (_, gx) = run(&x0);
        assert_close(&gx, &numeric_grad(|x| run(x).0, &x0), 1e-6);
    }

    #[test]
    fn unrelated_inputs_get_zero_gradient() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::full(&[2], 1.0));
        let b = g.leaf(Tensor::full(&[3], 2.0));
        let l = g.sum_all(a);
        assert!(g.depends_on(l, a));
        assert!(!g.depends_on(l, b));
        let gr = g.backward(l, &[a, b]).unwrap();
        assert_eq!(g.value(gr[0]).data(), &[1.0, 1.0]);
        assert_eq!(g.value(gr[1]).data(), &[0.0, 0.0, 0.0]);
    }
}
