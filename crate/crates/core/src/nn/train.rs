use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Rows per gradient chunk; chunk boundaries are fixed so the summed
/// gradient is identical with or without the parallel feature.
const GRAD_CHUNK: usize = 16;
/// Rows per forward-only evaluation chunk.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    /// `θ -= lr · mean gradient`.
    #[default]
    Sgd,
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Invalid(format!(
                "unknown optimizer {other:?} (expected sgd or adam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 32,
            seed: 1,
            optimizer: Optimizer::Sgd,
        }
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Mlp) -> Self {
        Self {
            m: net.zero_grad(),
            v: net.zero_grad(),
            step: 0,
        }
    }

    /// Turn a mean gradient into the step to subtract, in place.
    fn direction(&mut self, g: &mut Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let scale = lr * c2.sqrt() / c1;
        let eps = Self::EPS * c2.sqrt();
        let update = |g: &mut f64, m: &mut f64, v: &mut f64| {
            *m = Self::B1 * *m + (1.0 - Self::B1) * *g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * *g * *g;
            *g = scale * *m / (v.sqrt() + eps);
        };
        for ((g, m), v) in g
            .weights
            .iter_mut()
            .zip(&mut self.m.weights)
            .zip(&mut self.v.weights)
        {
            ndarray::Zip::from(g).and(m).and(v).for_each(update);
        }
        for ((g, m), v) in g
            .biases
            .iter_mut()
            .zip(&mut self.m.biases)
            .zip(&mut self.v.biases)
        {
            ndarray::Zip::from(g).and(m).and(v).for_each(update);
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning_rate must be positive".to_string()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid(
                "epochs and batch_size must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Feature rows with one oracle label per resource block.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<Vec<Option<usize>>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<Vec<Option<usize>>>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension {
                what: "dataset rows",
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let (a, b) = self.features.view().split_at(Axis(0), n);
        (
            Dataset {
                features: a.to_owned(),
                labels: self.labels[..n].to_vec(),
            },
            Dataset {
                features: b.to_owned(),
                labels: self.labels[n..].to_vec(),
            },
        )
    }

    fn label_refs(&self, idx: &[usize]) -> Vec<&[Option<usize>]> {
        idx.iter().map(|i| self.labels[*i].as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Entry 0 is the mean per-sample loss of the initial network; entry `e`
    /// is the mean mini-batch loss seen during epoch `e`.
    pub losses: Vec<f64>,
}

/// Mean per-sample cross-entropy (summed over blocks) on `data`.
pub fn mean_loss(net: &Mlp, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let parts = crate::par::map_range(data.len().div_ceil(EVAL_CHUNK), |k| {
        let idx: Vec<usize> = (k * EVAL_CHUNK..((k + 1) * EVAL_CHUNK).min(data.len())).collect();
        net.loss(
            data.features
                .slice(ndarray::s![idx[0]..idx[0] + idx.len(), ..]),
            &data.label_refs(&idx),
        )
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

/// Fraction of labelled blocks where the argmax matches the label.
pub fn accuracy(net: &Mlp, data: &Dataset) -> Result<f64> {
    let group = net.group();
    let (mut hit, mut total) = (0usize, 0usize);
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let probs = net.forward_batch(data.features.slice(ndarray::s![start..end, ..]))?;
        for (row, labels) in probs.rows().into_iter().zip(&data.labels[start..end]) {
            for (g, label) in labels.iter().enumerate() {
                let Some(c) = label else { continue };
                let p = row.slice(ndarray::s![g * group..(g + 1) * group]);
                let mut best = 0;
                for (u, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = u;
                    }
                }
                hit += usize::from(best == *c);
                total += 1;
            }
        }
    }
    Ok(if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    })
}

/// Mini-batch training on the mean per-sample cross-entropy.
pub fn train(net: &mut Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mut losses = vec![mean_loss(net, data)?];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| Adam::new(net));
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.features.select(Axis(0), batch);
            let refs = data.label_refs(batch);
            let (loss, mut grad) = net.batch_loss_and_grad(x.view(), &refs, GRAD_CHUNK)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss in epoch {epoch}")));
            }
            epoch_loss += loss;
            let mean = 1.0 / batch.len() as f64;
            match adam.as_mut() {
                None => net.apply(&grad, cfg.learning_rate * mean),
                Some(opt) => {
                    grad.scale(mean);
                    opt.direction(&mut grad, cfg.learning_rate);
                    net.apply(&grad, 1.0);
                }
            }
        }
        if !net.all_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        losses.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainReport { losses })
}
