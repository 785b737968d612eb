//! Scalar training objectives.
//!
//! Every function returns a quantity to *minimize*. Discriminator objectives
//! that are naturally stated as maximizations are negated here.
//!
//! The plain functions operate on validated batch types; [`tape`] holds the
//! same objectives recorded on a [`Graph`] for training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-6;

/// Rows of class posteriors, `[batch, classes]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPosteriorBatch<T> {
    probs: Tensor<T>,
}

impl<T: Scalar> ClassPosteriorBatch<T> {
    pub fn new(probs: Tensor<T>) -> Result<Self> {
        let &[_, k] = probs.shape() else {
            return Err(Error::Invalid(format!(
                "posteriors must be [batch, classes], got {:?}",
                probs.shape()
            )));
        };
        if k < 2 {
            return Err(Error::Invalid(format!("need at least 2 classes, got {k}")));
        }
        for row in probs.data().chunks_exact(k) {
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(Error::Invalid("posterior entries must lie in [0, 1]".into()));
            }
            let s: f64 = row.iter().map(|p| p.to_f64_lossy()).sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Invalid(format!("posterior row sums to {s}, not 1")));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let k = rows.first().map_or(2, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Invalid("ragged posterior rows".into()));
        }
        Self::new(Tensor::new(&[rows.len(), k], rows.concat())?)
    }

    pub fn batch(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.probs.data().chunks_exact(self.classes())
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.probs
    }

    fn non_empty(&self) -> Result<()> {
        if self.batch() == 0 {
            Err(Error::EmptyBatch)
        } else {
            Ok(())
        }
    }
}

/// Real-valued critic outputs, one per image.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticScoreBatch<T> {
    scores: Vec<T>,
}

impl<T: Scalar> CriticScoreBatch<T> {
    pub fn new(scores: Vec<T>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Invalid("critic scores must be finite".into()));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    fn mean(&self) -> Result<T> {
        if self.scores.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(self.scores.iter().copied().sum::<T>() / T::from_usize(self.scores.len()).unwrap())
    }
}

/// Posteriors paired with ground-truth class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch<T> {
    posteriors: ClassPosteriorBatch<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> LabeledBatch<T> {
    pub fn new(posteriors: ClassPosteriorBatch<T>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != posteriors.batch() {
            return Err(shape_err("labeled batch", &[posteriors.batch()], &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= posteriors.classes()) {
            return Err(Error::Invalid(format!(
                "label {bad} out of range for {} classes",
                posteriors.classes()
            )));
        }
        Ok(Self { posteriors, labels })
    }

    pub fn posteriors(&self) -> &ClassPosteriorBatch<T> {
        &self.posteriors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Gradient-penalty weight.
    pub lambda_gp: f64,
    /// Weight of the critic's term in the generator objective.
    pub alpha: f64,
    /// Weight of the supervised cross entropy in the D1 objective.
    pub lambda_ce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            alpha: 0.1,
            lambda_ce: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_gp", self.lambda_gp),
            ("alpha", self.alpha),
            ("lambda_ce", self.lambda_ce),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

fn plogp<T: Scalar>(p: T) -> T {
    p * p.max(T::lit(LOG_FLOOR)).ln()
}

/// Mean per-row entropy, `0 ln 0 = 0`.
pub fn conditional_entropy<T: Scalar>(p: &ClassPosteriorBatch<T>) -> Result<T> {
    p.non_empty()?;
    let total: T = p.rows().map(|row| -row.iter().map(|&v| plogp(v)).sum::<T>()).sum();
    Ok(total / T::from_usize(p.batch()).unwrap())
}

/// Entropy of the batch-averaged posterior.
pub fn marginal_entropy<T: Scalar>(p: &ClassPosteriorBatch<T>) -> Result<T> {
    p.non_empty()?;
    let n = T::from_usize(p.batch()).unwrap();
    let mut mean = vec![T::zero(); p.classes()];
    for row in p.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    Ok(-mean.into_iter().map(|m| plogp(m / n)).sum::<T>())
}

/// Mean of `-ln p[label]` with the log floor applied.
pub fn cross_entropy<T: Scalar>(labeled: &LabeledBatch<T>) -> Result<T> {
    labeled.posteriors.non_empty()?;
    let floor = T::lit(LOG_FLOOR);
    let total: T = labeled
        .posteriors
        .rows()
        .zip(&labeled.labels)
        .map(|(row, &y)| -row[y].max(floor).ln())
        .sum();
    Ok(total / T::from_usize(labeled.labels.len()).unwrap())
}

/// `-H[marginal(real)] + S_r - S_g [+ lambda_ce * CE]`.
pub fn catgan_d1_loss<T: Scalar>(
    real: &ClassPosteriorBatch<T>,
    fake: &ClassPosteriorBatch<T>,
    labeled: Option<&LabeledBatch<T>>,
    w: &LossWeights,
) -> Result<T> {
    if real.classes() != fake.classes() {
        return Err(shape_err("catgan_d1_loss", &[real.classes()], &[fake.classes()]));
    }
    let mut loss = -marginal_entropy(real)? + conditional_entropy(real)? - conditional_entropy(fake)?;
    if let Some(l) = labeled {
        if l.posteriors.classes() != real.classes() {
            return Err(shape_err("catgan_d1_loss labeled", &[real.classes()], &[l.posteriors.classes()]));
        }
        loss = loss + T::lit(w.lambda_ce) * cross_entropy(l)?;
    }
    Ok(loss)
}

/// `-H[marginal(fake)] + S_g`.
pub fn catgan_g_loss<T: Scalar>(fake: &ClassPosteriorBatch<T>) -> Result<T> {
    Ok(-marginal_entropy(fake)? + conditional_entropy(fake)?)
}

/// `mean(d_real) - mean(d_fake) + lambda_gp * gp`.
pub fn wgan_critic_loss<T: Scalar>(
    d_real: &CriticScoreBatch<T>,
    d_fake: &CriticScoreBatch<T>,
    gp: T,
    w: &LossWeights,
) -> Result<T> {
    Ok(d_real.mean()? - d_fake.mean()? + T::lit(w.lambda_gp) * gp)
}

/// `mean(d_real) - mean(d_fake)`, the critic's estimate of the transport distance.
pub fn wasserstein_estimate<T: Scalar>(
    d_real: &CriticScoreBatch<T>,
    d_fake: &CriticScoreBatch<T>,
) -> Result<T> {
    Ok(d_real.mean()? - d_fake.mean()?)
}

pub fn wgan_g_loss<T: Scalar>(d_fake: &CriticScoreBatch<T>) -> Result<T> {
    d_fake.mean()
}

/// `catgan_g_loss + alpha * wgan_g_loss` over the same generated batch.
pub fn combined_g_loss<T: Scalar>(
    fake_posteriors: &ClassPosteriorBatch<T>,
    d_fake: &CriticScoreBatch<T>,
    w: &LossWeights,
) -> Result<T> {
    if fake_posteriors.batch() != d_fake.len() {
        return Err(shape_err("combined_g_loss", &[fake_posteriors.batch()], &[d_fake.len()]));
    }
    Ok(catgan_g_loss(fake_posteriors)? + T::lit(w.alpha) * wgan_g_loss(d_fake)?)
}

/// Where and how the critic's input gradient is penalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpMode {
    /// Mean squared gradient norm at the generated points themselves.
    #[default]
    AsWritten,
    /// Mean of `(norm - 1)^2` at random real/fake interpolates.
    InterpolatedOneCentered,
}

/// A differentiable map from a batch of inputs to one score per input.
pub trait Critic<T: Scalar> {
    fn score(&mut self, g: &mut Graph<T>, inputs: Var) -> Result<Var>;
}

impl<T: Scalar, F> Critic<T> for F
where
    F: FnMut(&mut Graph<T>, Var) -> Result<Var>,
{
    fn score(&mut self, g: &mut Graph<T>, inputs: Var) -> Result<Var> {
        self(g, inputs)
    }
}

/// `x = eps * real + (1 - eps) * fake` with one uniform `eps` per sample.
pub fn interpolate<T: Scalar, R: Rng + ?Sized>(
    real: &Tensor<T>,
    fake: &Tensor<T>,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if real.shape() != fake.shape() {
        return Err(shape_err("interpolate", fake.shape(), real.shape()));
    }
    let batch = real.shape().first().copied().unwrap_or(0);
    if batch == 0 {
        return Err(Error::EmptyBatch);
    }
    let per = real.len() / batch;
    let eps: Vec<T> = (0..batch).map(|_| T::lit(rng.random::<f64>())).collect();
    Ok(Tensor::from_fn(real.shape(), |i| {
        let e = eps[i / per];
        e * real.data()[i] + (T::one() - e) * fake.data()[i]
    }))
}

/// Gradient penalty value; λ is not applied.
pub fn gradient_penalty<T: Scalar, C: Critic<T>, R: Rng + ?Sized>(
    critic: &mut C,
    points: &Tensor<T>,
    mode: GpMode,
    real: Option<&Tensor<T>>,
    rng: &mut R,
) -> Result<T> {
    let at = match mode {
        GpMode::AsWritten => points.clone(),
        GpMode::InterpolatedOneCentered => {
            let real = real.ok_or_else(|| {
                Error::Invalid("interpolated gradient penalty needs a real batch".into())
            })?;
            interpolate(real, points, rng)?
        }
    };
    let mut g = Graph::new();
    let x = g.leaf(at);
    let (gp, _) = tape::gradient_penalty(&mut g, critic, x, mode)?;
    Ok(g.scalar_value(gp))
}

/// The objectives above, recorded on a graph.
pub mod tape {
    use super::*;

    fn batch_of<T: Scalar>(g: &Graph<T>, v: Var) -> Result<usize> {
        match g.shape(v).first() {
            Some(&0) | None => Err(Error::EmptyBatch),
            Some(&b) => Ok(b),
        }
    }

    /// `probs`: `[batch, classes]` node.
    pub fn conditional_entropy<T: Scalar>(g: &mut Graph<T>, probs: Var) -> Result<Var> {
        let b = batch_of(g, probs)?;
        let lp = g.ln_floor(probs, T::lit(LOG_FLOOR));
        let plp = g.mul(probs, lp)?;
        let s = g.sum_all(plp);
        Ok(g.scale(s, -T::from_usize(b).unwrap().recip()))
    }

    pub fn marginal_entropy<T: Scalar>(g: &mut Graph<T>, probs: Var) -> Result<Var> {
        let b = batch_of(g, probs)?;
        let colsum = g.sum_rows(probs)?;
        let mean = g.scale(colsum, T::from_usize(b).unwrap().recip());
        let lp = g.ln_floor(mean, T::lit(LOG_FLOOR));
        let plp = g.mul(mean, lp)?;
        let s = g.sum_all(plp);
        Ok(g.neg(s))
    }

    pub fn cross_entropy<T: Scalar>(g: &mut Graph<T>, probs: Var, labels: &[usize]) -> Result<Var> {
        let b = batch_of(g, probs)?;
        let k = g.shape(probs)[1];
        if labels.len() != b {
            return Err(shape_err("cross_entropy", &[b], &[labels.len()]));
        }
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::Invalid(format!("label out of range for {k} classes")));
        }
        let onehot = Tensor::from_fn(&[b, k], |i| {
            if labels[i / k] == i % k {
                T::one()
            } else {
                T::zero()
            }
        });
        let lp = g.ln_floor(probs, T::lit(LOG_FLOOR));
        let picked = g.mul_const(lp, onehot)?;
        let s = g.sum_all(picked);
        Ok(g.scale(s, -T::from_usize(b).unwrap().recip()))
    }

    /// Labeled term is `(posteriors node, labels)`.
    pub fn catgan_d1_loss<T: Scalar>(
        g: &mut Graph<T>,
        real: Var,
        fake: Var,
        labeled: Option<(Var, &[usize])>,
        w: &LossWeights,
    ) -> Result<Var> {
        if g.shape(real).get(1) != g.shape(fake).get(1) {
            return Err(shape_err("catgan_d1_loss", g.shape(real), g.shape(fake)));
        }
        let hm = marginal_entropy(g, real)?;
        let sr = conditional_entropy(g, real)?;
        let sg = conditional_entropy(g, fake)?;
        let a = g.sub(sr, hm)?;
        let mut loss = g.sub(a, sg)?;
        if let Some((probs, labels)) = labeled {
            let ce = cross_entropy(g, probs, labels)?;
            let wce = g.scale(ce, T::lit(w.lambda_ce));
            loss = g.add(loss, wce)?;
        }
        Ok(loss)
    }

    pub fn catgan_g_loss<T: Scalar>(g: &mut Graph<T>, fake: Var) -> Result<Var> {
        let hm = marginal_entropy(g, fake)?;
        let sg = conditional_entropy(g, fake)?;
        g.sub(sg, hm)
    }

    /// `scores`: `[batch]` node.
    pub fn wasserstein_estimate<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
        batch_of(g, d_real)?;
        batch_of(g, d_fake)?;
        let r = g.mean_all(d_real);
        let f = g.mean_all(d_fake);
        g.sub(r, f)
    }

    pub fn wgan_critic_loss<T: Scalar>(
        g: &mut Graph<T>,
        d_real: Var,
        d_fake: Var,
        gp: Var,
        w: &LossWeights,
    ) -> Result<Var> {
        let wd = wasserstein_estimate(g, d_real, d_fake)?;
        let pen = g.scale(gp, T::lit(w.lambda_gp));
        g.add(wd, pen)
    }

    pub fn wgan_g_loss<T: Scalar>(g: &mut Graph<T>, d_fake: Var) -> Result<Var> {
        batch_of(g, d_fake)?;
        Ok(g.mean_all(d_fake))
    }

    pub fn combined_g_loss<T: Scalar>(
        g: &mut Graph<T>,
        fake_probs: Var,
        d_fake: Var,
        w: &LossWeights,
    ) -> Result<Var> {
        if g.shape(fake_probs).first() != g.shape(d_fake).first() {
            return Err(shape_err("combined_g_loss", g.shape(fake_probs), g.shape(d_fake)));
        }
        let cat = catgan_g_loss(g, fake_probs)?;
        let adv = wgan_g_loss(g, d_fake)?;
        let adv = g.scale(adv, T::lit(w.alpha));
        g.add(cat, adv)
    }

    /// Penalty from per-sample input gradients `[batch, ...]`.
    pub fn penalty_from_gradients<T: Scalar>(g: &mut Graph<T>, grads: Var, mode: GpMode) -> Result<Var> {
        let b = batch_of(g, grads)?;
        let per = g.value(grads).len() / b;
        let flat = g.reshape(grads, &[b, per])?;
        let sq = g.square(flat);
        let norm2 = g.sum_cols(sq)?;
        let per_sample = match mode {
            GpMode::AsWritten => norm2,
            GpMode::InterpolatedOneCentered => {
                let norm = g.sqrt(norm2);
                let dev = g.add_scalar(norm, -T::one());
                g.square(dev)
            }
        };
        Ok(g.mean_all(per_sample))
    }

    /// Records the critic at `points` (a leaf) and the penalty on its input
    /// gradient. Returns `(penalty, scores)`; both stay differentiable in
    /// the critic's parameters.
    pub fn gradient_penalty<T: Scalar, C: Critic<T> + ?Sized>(
        g: &mut Graph<T>,
        critic: &mut C,
        points: Var,
        mode: GpMode,
    ) -> Result<(Var, Var)> {
        let b = batch_of(g, points)?;
        let scores = critic.score(g, points)?;
        if g.shape(scores) != [b] {
            return Err(shape_err("critic output", &[b], g.shape(scores)));
        }
        if !g.depends_on(scores, points) {
            return Err(Error::NotDifferentiable);
        }
        let total = g.sum_all(scores);
        let grads = g.backward(total, &[points])?[0];
        let gp = penalty_from_gradients(g, grads, mode)?;
        Ok((gp, scores))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn post(rows: &[&[f64]]) -> ClassPosteriorBatch<f64> {
        ClassPosteriorBatch::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn scores(v: &[f64]) -> CriticScoreBatch<f64> {
        CriticScoreBatch::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn entropy_examples() {
        close(conditional_entropy(&post(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap(), 0.0);
        close(conditional_entropy(&post(&[&[0.5, 0.5]])).unwrap(), LN2);
        // -(0.25 ln 0.25 + 0.75 ln 0.75)
        close(conditional_entropy(&post(&[&[0.25, 0.75]])).unwrap(), 0.562335);
        close(marginal_entropy(&post(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap(), LN2);
        close(marginal_entropy(&post(&[&[1.0, 0.0], &[1.0, 0.0]])).unwrap(), 0.0);
        close(marginal_entropy(&post(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap(), LN2);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let empty = ClassPosteriorBatch::<f64>::new(Tensor::zeros(&[0, 2])).unwrap();
        assert!(matches!(conditional_entropy(&empty), Err(Error::EmptyBatch)));
        assert!(matches!(marginal_entropy(&empty), Err(Error::EmptyBatch)));
        assert!(matches!(catgan_g_loss(&empty), Err(Error::EmptyBatch)));
        assert!(matches!(wgan_g_loss(&scores(&[])), Err(Error::EmptyBatch)));
    }

    #[test]
    fn invalid_posteriors_rejected() {
        assert!(ClassPosteriorBatch::from_rows(&[vec![0.7, 0.7]]).is_err());
        assert!(ClassPosteriorBatch::from_rows(&[vec![1.0]]).is_err());
        assert!(ClassPosteriorBatch::from_rows(&[vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn d1_loss_examples() {
        let w = LossWeights::default();
        let real = post(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let fake = post(&[&[0.5, 0.5]]);
        close(catgan_d1_loss(&real, &fake, None, &w).unwrap(), -2.0 * LN2);
        let u = post(&[&[0.5, 0.5], &[0.5, 0.5]]);
        close(catgan_d1_loss(&u, &u, None, &w).unwrap(), -LN2);
        let one = post(&[&[1.0, 0.0]]);
        let lab = LabeledBatch::new(one.clone(), vec![0]).unwrap();
        close(catgan_d1_loss(&one, &one, Some(&lab), &w).unwrap(), 0.0);
        let three = ClassPosteriorBatch::from_rows(&[vec![0.2, 0.3, 0.5]]).unwrap();
        assert!(catgan_d1_loss(&real, &three, None, &w).is_err());
    }

    #[test]
    fn zero_ce_weight_matches_unlabeled() {
        let w = LossWeights { lambda_ce: 0.0, ..Default::default() };
        let real = post(&[&[0.9, 0.1], &[0.3, 0.7]]);
        let fake = post(&[&[0.6, 0.4]]);
        let lab = LabeledBatch::new(post(&[&[0.2, 0.8]]), vec![0]).unwrap();
        assert_eq!(
            catgan_d1_loss(&real, &fake, Some(&lab), &w).unwrap(),
            catgan_d1_loss(&real, &fake, None, &w).unwrap()
        );
    }

    #[test]
    fn g_loss_examples() {
        close(catgan_g_loss(&post(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap(), 0.0);
        close(catgan_g_loss(&post(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap(), -LN2);
        close(catgan_g_loss(&post(&[&[0.25, 0.75]])).unwrap(), 0.0);
    }

    #[test]
    fn critic_loss_examples() {
        let w = LossWeights::default();
        close(wgan_critic_loss(&scores(&[1.0, 3.0]), &scores(&[0.0, 2.0]), 0.5, &w).unwrap(), 6.0);
        close(wgan_critic_loss(&scores(&[1.5, 2.0]), &scores(&[1.5, 2.0]), 0.0, &w).unwrap(), 0.0);
        close(wgan_critic_loss(&scores(&[0.0]), &scores(&[0.0]), 1.0, &w).unwrap(), 10.0);
        close(wasserstein_estimate(&scores(&[2.0, 2.0]), &scores(&[1.0, 1.0])).unwrap(), 1.0);
        close(wasserstein_estimate(&scores(&[0.5]), &scores(&[2.5])).unwrap(), -2.0);
        close(wgan_g_loss(&scores(&[1.0, 3.0])).unwrap(), 2.0);
        close(wgan_g_loss(&scores(&[-1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn combined_examples() {
        let w = LossWeights::default();
        let u = post(&[&[0.5, 0.5], &[0.5, 0.5]]);
        close(combined_g_loss(&u, &scores(&[0.0, 0.0]), &w).unwrap(), 0.0);
        let oh = post(&[&[1.0, 0.0], &[0.0, 1.0]]);
        close(combined_g_loss(&oh, &scores(&[10.0, 10.0]), &w).unwrap(), -LN2 + 1.0);
        let w0 = LossWeights { alpha: 0.0, ..w };
        assert_eq!(
            combined_g_loss(&oh, &scores(&[10.0, 10.0]), &w0).unwrap(),
            catgan_g_loss(&oh).unwrap()
        );
        assert!(combined_g_loss(&oh, &scores(&[1.0]), &w).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let lab = |rows: &[&[f64]], y: Vec<usize>| LabeledBatch::new(post(rows), y).unwrap();
        close(cross_entropy(&lab(&[&[1.0, 0.0]], vec![0])).unwrap(), 0.0);
        close(cross_entropy(&lab(&[&[0.5, 0.5]], vec![1])).unwrap(), LN2);
        close(cross_entropy(&lab(&[&[0.25, 0.75]], vec![1])).unwrap(), 0.287682);
        assert!(LabeledBatch::new(post(&[&[0.5, 0.5]]), vec![2]).is_err());
        // floor keeps a confident miss finite
        let miss = cross_entropy(&lab(&[&[1.0, 0.0]], vec![1])).unwrap();
        close(miss, -(LOG_FLOOR.ln()));
    }

    fn linear_critic(coef: Vec<f64>) -> impl FnMut(&mut Graph<f64>, Var) -> Result<Var> {
        move |g: &mut Graph<f64>, x: Var| {
            let b = g.shape(x)[0];
            let flat = g.reshape(x, &[b, coef.len()])?;
            let a = g.leaf(Tensor::new(&[coef.len(), 1], coef.clone())?);
            let s = g.matmul(flat, a)?;
            g.reshape(s, &[b])
        }
    }

    #[test]
    fn penalty_linear_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut coef = vec![0.0; 12];
        coef[0] = 3.0;
        coef[1] = 4.0;
        let pts = Tensor::from_fn(&[5, 3, 2, 2], |i| (i as f64).sin());
        let real = Tensor::from_fn(&[5, 3, 2, 2], |i| (i as f64).cos());
        let mut c = linear_critic(coef);
        let gp = gradient_penalty(&mut c, &pts, GpMode::AsWritten, None, &mut rng).unwrap();
        assert!((gp - 25.0).abs() < 1e-9);
        let gp = gradient_penalty(&mut c, &pts, GpMode::InterpolatedOneCentered, Some(&real), &mut rng).unwrap();
        assert!((gp - 16.0).abs() < 1e-9);

        let mut zero = linear_critic(vec![0.0; 12]);
        let gp = gradient_penalty(&mut zero, &pts, GpMode::AsWritten, None, &mut rng).unwrap();
        assert_eq!(gp, 0.0);
        let gp = gradient_penalty(&mut zero, &pts, GpMode::InterpolatedOneCentered, Some(&real), &mut rng).unwrap();
        assert_eq!(gp, 1.0);
    }

    #[test]
    fn penalty_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = Tensor::<f64>::zeros(&[2, 4]);
        let mut c = linear_critic(vec![1.0; 4]);
        assert!(gradient_penalty(&mut c, &pts, GpMode::InterpolatedOneCentered, None, &mut rng).is_err());
        let wrong = Tensor::<f64>::zeros(&[3, 4]);
        assert!(gradient_penalty(&mut c, &pts, GpMode::InterpolatedOneCentered, Some(&wrong), &mut rng).is_err());
        let mut detached = |g: &mut Graph<f64>, _x: Var| Ok(g.leaf(Tensor::zeros(&[2])));
        assert!(matches!(
            gradient_penalty(&mut detached, &pts, GpMode::AsWritten, None, &mut rng),
            Err(Error::NotDifferentiable)
        ));
    }

    #[test]
    fn tape_losses_match_plain_losses() {
        let rows: Vec<Vec<f64>> = vec![vec![0.1, 0.9], vec![0.55, 0.45], vec![1.0, 0.0]];
        let p = ClassPosteriorBatch::from_rows(&rows).unwrap();
        let q = ClassPosteriorBatch::from_rows(&[vec![0.3, 0.7], vec![0.8, 0.2]]).unwrap();
        let labels = vec![1, 0, 0];
        let w = LossWeights::default();
        let mut g = Graph::new();
        let pv = g.leaf(p.tensor().clone());
        let qv = g.leaf(q.tensor().clone());
        let ce = tape::cross_entropy(&mut g, pv, &labels).unwrap();
        let d1 = tape::catgan_d1_loss(&mut g, pv, qv, Some((pv, &labels)), &w).unwrap();
        let gl = tape::catgan_g_loss(&mut g, qv).unwrap();
        let lab = LabeledBatch::new(p.clone(), labels.clone()).unwrap();
        close(g.scalar_value(ce), cross_entropy(&lab).unwrap());
        close(g.scalar_value(d1), catgan_d1_loss(&p, &q, Some(&lab), &w).unwrap());
        close(g.scalar_value(gl), catgan_g_loss(&q).unwrap());
    }
}
