//! Parameterized networks built from a [`NetworkSpec`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{receptive_field, Layer, NetworkName, NetworkSpec, Shape, LEAKY_SLOPE};
use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Train,
    Inference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Batch-norm running statistics are state, not optimized.
    pub trainable: bool,
}

/// Parameter slots of one layer, as indices into [`NetworkHandle::params`].
#[derive(Clone, Debug, PartialEq, Eq)]
enum Slots {
    None,
    Conv { weight: usize, bias: Option<usize> },
    Norm { gamma: usize, beta: usize, mean: usize, var: usize },
}

#[derive(Clone, Debug)]
pub struct NetworkHandle<T> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    slots: Vec<Slots>,
    mode: Mode,
    track_stats: bool,
}

/// Graph leaves for every parameter of a network, in parameter order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    trainable: Vec<usize>,
}

impl Bound {
    pub fn trainable(&self) -> Vec<Var> {
        self.trainable.iter().map(|&i| self.vars[i]).collect()
    }
}

impl<T: Scalar> NetworkHandle<T> {
    /// Builds a network with weights `N(0, 0.02)`, batch-norm scales
    /// `N(1, 0.02)` and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let shapes = spec.propagate()?;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut draw = |n: usize, mean: f64| -> Vec<T> {
            (0..n).map(|_| T::lit(mean + normal.sample(rng))).collect()
        };
        let mut params = Vec::new();
        let mut slots = Vec::new();
        let mut prev = spec.input;
        for (i, layer) in spec.layers.iter().enumerate() {
            let followed_by_norm = spec.layers.get(i + 1) == Some(&Layer::BatchNorm);
            let mut push = |name: &str, value: Tensor<T>, trainable: bool| {
                params.push(Param { name: format!("l{i}.{name}"), value, trainable });
                params.len() - 1
            };
            let slot = match *layer {
                Layer::Conv { out, kernel, .. } => {
                    let shape = [kernel * kernel * prev.c, out];
                    let weight = push("weight", Tensor::new(&shape, draw(shape[0] * shape[1], 0.0))?, true);
                    let bias = (!followed_by_norm).then(|| push("bias", Tensor::zeros(&[out]), true));
                    Slots::Conv { weight, bias }
                }
                Layer::TransposedConv { out, kernel, .. } => {
                    let shape = [prev.c, kernel * kernel * out];
                    let weight = push("weight", Tensor::new(&shape, draw(shape[0] * shape[1], 0.0))?, true);
                    let bias = (!followed_by_norm).then(|| push("bias", Tensor::zeros(&[out]), true));
                    Slots::Conv { weight, bias }
                }
                Layer::BatchNorm => {
                    let c = prev.c;
                    Slots::Norm {
                        gamma: push("gamma", Tensor::new(&[c], draw(c, 1.0))?, true),
                        beta: push("beta", Tensor::zeros(&[c]), true),
                        mean: push("running_mean", Tensor::zeros(&[c]), false),
                        var: push("running_var", Tensor::full(&[c], T::one()), false),
                    }
                }
                _ => Slots::None,
            };
            slots.push(slot);
            prev = shapes[i];
        }
        Ok(Self { spec, params, slots, mode: Mode::Train, track_stats: true })
    }

    /// Rebuilds a network from stored parameters; names and shapes must
    /// match what `init` would create.
    pub fn from_params(spec: NetworkSpec, stored: Vec<Param<T>>) -> Result<Self> {
        let mut rng = <rand::rngs::SmallRng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::init(spec, &mut rng)?;
        if stored.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} expects {} parameters, found {}",
                net.spec.name,
                net.params.len(),
                stored.len()
            )));
        }
        for (slot, p) in net.params.iter_mut().zip(stored) {
            if slot.name != p.name {
                return Err(Error::Blob { name: p.name, reason: format!("expected `{}`", slot.name) });
            }
            if slot.value.shape() != p.value.shape() {
                return Err(Error::Blob {
                    name: p.name,
                    reason: format!("shape {:?}, expected {:?}", p.value.shape(), slot.value.shape()),
                });
            }
            slot.value = p.value;
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn name(&self) -> NetworkName {
        self.spec.name
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Whether train-mode passes fold batch statistics into the running
    /// averages. Passes made on behalf of another network's update turn
    /// this off so that only a network's own step changes its state.
    pub fn set_track_stats(&mut self, on: bool) {
        self.track_stats = on;
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn param_mut(&mut self, index: usize) -> &mut Param<T> {
        &mut self.params[index]
    }

    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| self.params[i].trainable).collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| g.leaf(p.value.clone())).collect(),
            trainable: self.trainable_indices(),
        }
    }

    fn check_input(&self, g: &Graph<T>, x: Var) -> Result<usize> {
        let shape = g.shape(x);
        let inp = self.spec.input;
        let batch = shape.first().copied().unwrap_or(0);
        if batch == 0 {
            return Err(Error::EmptyBatch);
        }
        let ok = if inp.h == 1 && inp.w == 1 {
            shape == [batch, inp.c] || shape == [batch, inp.c, 1, 1]
        } else if self.spec.name == NetworkName::Discriminator2 {
            shape.len() == 4 && shape[1] == inp.c
        } else {
            shape == [batch, inp.c, inp.h, inp.w]
        };
        if !ok {
            return Err(shape_err("network input", &[batch, inp.c, inp.h, inp.w], shape));
        }
        if self.spec.name == NetworkName::Discriminator2 {
            let rf = receptive_field(&self.spec)?;
            let side = shape[2].min(shape[3]);
            if side < rf {
                return Err(Error::InputTooSmall { needed: rf, got: side });
            }
        }
        Ok(batch)
    }

    /// Runs the whole network. Input is NCHW images (or `[batch, c]`
    /// vectors for latent-input networks); output is NCHW images,
    /// `[batch, c]` vectors, or `[batch]` scores after a global mean.
    pub fn forward(&mut self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        self.forward_until(g, bound, x, self.spec.layers.len())
    }

    /// Output of the feature layer, `[batch, width]`.
    pub fn forward_features(&mut self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        let at = self
            .spec
            .features_at
            .ok_or_else(|| Error::Invalid(format!("{} exports no features", self.spec.name)))?;
        self.forward_until(g, bound, x, at + 1)
    }

    fn forward_until(&mut self, g: &mut Graph<T>, bound: &Bound, x: Var, stop: usize) -> Result<Var> {
        if bound.vars.len() != self.params.len() {
            return Err(Error::Invalid("bound parameters belong to another network".into()));
        }
        let batch = self.check_input(g, x)?;
        let inp = self.spec.input;
        // NHWC internally
        let mut h = if g.shape(x).len() == 4 {
            g.permute(x, &[0, 2, 3, 1])?
        } else {
            g.reshape(x, &[batch, 1, 1, inp.c])?
        };
        let slope = T::lit(LEAKY_SLOPE);
        let mut scalar_out = false;
        for i in 0..stop {
            let layer = self.spec.layers[i];
            h = match (layer, &self.slots[i]) {
                (Layer::Conv { kernel, stride, pad, .. }, &Slots::Conv { weight, bias }) => g.conv2d(
                    h,
                    bound.vars[weight],
                    bias.map(|b| bound.vars[b]),
                    kernel,
                    stride,
                    pad,
                )?,
                (Layer::TransposedConv { kernel, stride, pad, .. }, &Slots::Conv { weight, bias }) => g
                    .conv_transpose2d(h, bound.vars[weight], bias.map(|b| bound.vars[b]), kernel, stride, pad)?,
                (Layer::BatchNorm, &Slots::Norm { gamma, beta, mean, var }) => {
                    self.batch_norm(g, bound, h, [gamma, beta, mean, var])?
                }
                (Layer::LeakyRelu, _) => g.leaky_relu(h, slope),
                (Layer::Tanh, _) => g.tanh(h),
                (Layer::Softmax, _) => {
                    let shape = g.shape(h).to_vec();
                    if shape[1] != 1 || shape[2] != 1 {
                        return Err(Error::Invalid("softmax expects 1x1 spatial input".into()));
                    }
                    let flat = g.reshape(h, &[shape[0], shape[3]])?;
                    let p = g.softmax_rows(flat)?;
                    g.reshape(p, &shape)?
                }
                (Layer::GlobalMean, _) => {
                    let per = g.value(h).len() / batch;
                    let flat = g.reshape(h, &[batch, per])?;
                    let s = g.sum_cols(flat)?;
                    scalar_out = true;
                    g.scale(s, T::from_usize(per).unwrap().recip())
                }
                _ => unreachable!("layer/slot mismatch"),
            };
        }
        if scalar_out {
            return Ok(h);
        }
        let &[n, hh, ww, c] = g.shape(h) else { unreachable!() };
        if hh == 1 && ww == 1 {
            g.reshape(h, &[n, c])
        } else {
            g.permute(h, &[0, 3, 1, 2])
        }
    }

    fn batch_norm(&mut self, g: &mut Graph<T>, bound: &Bound, h: Var, idx: [usize; 4]) -> Result<Var> {
        let [gamma, beta, mean_i, var_i] = idx;
        let shape = g.shape(h).to_vec();
        let c = shape[3];
        let rows = shape[0] * shape[1] * shape[2];
        let flat = g.reshape(h, &[rows, c])?;
        let eps = T::lit(BN_EPS);
        let normalized = match self.mode {
            Mode::Train => {
                let inv_n = T::from_usize(rows).unwrap().recip();
                let sum = g.sum_rows(flat)?;
                let mean = g.scale(sum, inv_n);
                let centered = {
                    let mb = g.broadcast_rows(mean, rows)?;
                    g.sub(flat, mb)?
                };
                let sq = g.square(centered);
                let sq_sum = g.sum_rows(sq)?;
                let var = g.scale(sq_sum, inv_n);
                let shifted = g.add_scalar(var, eps);
                let sd = g.sqrt(shifted);
                let inv = g.recip(sd);
                if self.track_stats {
                    self.update_running(g.value(mean).clone(), g.value(var).clone(), rows, mean_i, var_i);
                }
                g.mul_row_vec(centered, inv)?
            }
            Mode::Inference => {
                let rm = self.params[mean_i].value.clone();
                let inv = self.params[var_i].value.map(|v| (v + eps).sqrt().recip());
                let shift = g.leaf(rm.map(|m| -m));
                let scale = g.leaf(inv);
                let centered = g.add_row_vec(flat, shift)?;
                g.mul_row_vec(centered, scale)?
            }
        };
        let scaled = g.mul_row_vec(normalized, bound.vars[gamma])?;
        let out = g.add_row_vec(scaled, bound.vars[beta])?;
        g.reshape(out, &shape)
    }

    fn update_running(&mut self, mean: Tensor<T>, var: Tensor<T>, n: usize, mean_i: usize, var_i: usize) {
        let m = T::lit(BN_MOMENTUM);
        let keep = T::one() - m;
        let unbias = if n > 1 {
            T::from_usize(n).unwrap() / T::from_usize(n - 1).unwrap()
        } else {
            T::one()
        };
        for (r, &b) in self.params[mean_i].value.data_mut().iter_mut().zip(mean.data()) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.params[var_i].value.data_mut().iter_mut().zip(var.data()) {
            *r = keep * *r + m * b * unbias;
        }
    }

    /// Convenience forward pass returning the output tensor.
    pub fn run(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.leaf(x.clone());
        let y = self.forward(&mut g, &bound, xv)?;
        Ok(g.value(y).clone())
    }

    /// Feature-layer activations for a batch; requires inference mode so
    /// that batch statistics cannot leak between samples.
    pub fn extract_features(&mut self, images: &Tensor<T>) -> Result<Tensor<T>> {
        if self.mode != Mode::Inference {
            return Err(Error::RequiresInference("feature extraction"));
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.leaf(images.clone());
        let f = self.forward_features(&mut g, &bound, xv)?;
        Ok(g.value(f).clone())
    }

    pub fn output_shape(&self) -> Result<Shape> {
        self.spec.output_shape()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::spec::{d1_spec, d2_spec, generator_spec, ArchConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ArchConfig {
        ArchConfig {
            image_side: 8,
            base_width: 3,
            feature_width: 5,
            latent_dim: 4,
            critic_depth: 1,
            critic_width: 3,
            ..Default::default()
        }
    }

    fn images(b: usize, side: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[b, 3, side, side], |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = tiny();
        let mut gen = NetworkHandle::<f64>::init(generator_spec(&cfg), &mut rng).unwrap();
        let z = Tensor::from_fn(&[3, 4], |i| (i as f64).sin());
        let out = gen.run(&z).unwrap();
        assert_eq!(out.shape(), &[3, 3, 8, 8]);
        assert!(out.data().iter().all(|v| v.abs() < 1.0));

        let mut d1 = NetworkHandle::<f64>::init(d1_spec(&cfg), &mut rng).unwrap();
        let p = d1.run(&images(5, 8, 1)).unwrap();
        assert_eq!(p.shape(), &[5, 2]);
        for row in p.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(d1.run(&images(2, 16, 1)).is_err());

        let mut d2 = NetworkHandle::<f64>::init(d2_spec(&cfg), &mut rng).unwrap();
        assert_eq!(d2.run(&images(4, 8, 2)).unwrap().shape(), &[4]);
        assert_eq!(d2.run(&images(2, 12, 2)).unwrap().shape(), &[2]);
        let small = d2_spec(&ArchConfig::default());
        let mut d2full = NetworkHandle::<f64>::init(small, &mut rng).unwrap();
        assert!(matches!(
            d2full.run(&images(1, 16, 3)),
            Err(Error::InputTooSmall { needed: 22, got: 16 })
        ));
    }

    #[test]
    fn features_need_inference_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d1 = NetworkHandle::<f64>::init(d1_spec(&tiny()), &mut rng).unwrap();
        let x = images(3, 8, 5);
        assert!(matches!(d1.extract_features(&x), Err(Error::RequiresInference(_))));
        // give the running statistics something to hold
        d1.run(&x).unwrap();
        d1.set_mode(Mode::Inference);
        let f = d1.extract_features(&x).unwrap();
        assert_eq!(f.shape(), &[3, 5]);
        // one image alone gets the same features as inside the batch
        let first = Tensor::new(&[1, 3, 8, 8], x.data()[..192].to_vec()).unwrap();
        let f1 = d1.extract_features(&first).unwrap();
        assert_eq!(f1.data(), &f.data()[..5]);
    }

    #[test]
    fn running_statistics_follow_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut d1 = NetworkHandle::<f64>::init(d1_spec(&tiny()), &mut rng).unwrap();
        let before = d1.params().iter().find(|p| p.name == "l1.running_mean").unwrap().value.clone();
        d1.run(&images(4, 8, 7)).unwrap();
        let after = &d1.params().iter().find(|p| p.name == "l1.running_mean").unwrap().value;
        assert_ne!(&before, after);
        let frozen = after.clone();
        d1.set_mode(Mode::Inference);
        d1.run(&images(4, 8, 8)).unwrap();
        let still = &d1.params().iter().find(|p| p.name == "l1.running_mean").unwrap().value;
        assert_eq!(&frozen, still);
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = images(4, 8, 10);
        for spec in [d1_spec(&cfg), d2_spec(&cfg)] {
            let net = NetworkHandle::<f64>::init(spec, &mut rng).unwrap();
            let probe = |net: &NetworkHandle<f64>| -> (f64, Vec<Tensor<f64>>) {
                let mut net = net.clone();
                let mut g = Graph::new();
                let b = net.bind(&mut g);
                let xv = g.leaf(x.clone());
                let y = net.forward(&mut g, &b, xv).unwrap();
                // weighted sum so softmax rows do not sum to a constant
                let w = Tensor::from_fn(g.shape(y), |i| (i as f64 * 0.37).cos());
                let yw = g.mul_const(y, w).unwrap();
                let l = g.sum_all(yw);
                let gr = g.backward(l, &b.trainable()).unwrap();
                (g.scalar_value(l), gr.iter().map(|v| g.value(*v).clone()).collect())
            };
            let (_, grads) = probe(&net);
            for (slot, &pi) in net.trainable_indices().iter().enumerate() {
                for k in [0, net.params()[pi].value.len() / 2] {
                    let h = 1e-6;
                    let mut p = net.clone();
                    p.param_mut(pi).value.data_mut()[k] += h;
                    let mut m = net.clone();
                    m.param_mut(pi).value.data_mut()[k] -= h;
                    let fd = (probe(&p).0 - probe(&m).0) / (2.0 * h);
                    let an = grads[slot].data()[k];
                    let scale = fd.abs().max(an.abs()).max(1e-6);
                    assert!((fd - an).abs() / scale < 1e-3, "{}: {an} vs {fd}", net.params()[pi].name);
                }
            }
        }
    }
}
