use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Feedforward network with ReLU hidden layers and a softmax over each
/// group of `group` consecutive outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    group: usize,
    seed: u64,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    /// Parameters in the order weights(layer 0), biases(layer 0), weights(layer 1), ...
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Softmax probabilities, one row per group.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTensor {
    probs: Array2<f64>,
}

impl OutputTensor {
    pub fn new(probs: Array2<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn rows(&self) -> usize {
        self.probs.nrows()
    }
}

fn check_sizes(sizes: &[usize], group: usize) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Invalid(format!("bad layer sizes {sizes:?}")));
    }
    let out = *sizes.last().unwrap();
    if group == 0 || !out.is_multiple_of(group) {
        return Err(Error::Invalid(format!(
            "output width {out} is not a multiple of softmax group {group}"
        )));
    }
    Ok(())
}

impl Mlp {
    pub fn zeros(sizes: &[usize], group: usize) -> Result<Self> {
        check_sizes(sizes, group)?;
        let weights = sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = sizes[1..].iter().map(|n| Array1::zeros(*n)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            group,
            seed: 0,
            weights,
            biases,
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(sizes: &[usize], group: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, group)?;
        net.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut net.weights {
            let (fan_out, fan_in) = w.dim();
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-s..=s));
        }
        Ok(net)
    }

    pub(crate) fn from_parts(
        sizes: Vec<usize>,
        group: usize,
        seed: u64,
        params: &[f64],
    ) -> Result<Self> {
        let mut net = Self::zeros(&sizes, group)?;
        net.seed = seed;
        if params.len() != net.param_count() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: net.param_count(),
                actual: params.len(),
            });
        }
        for (i, v) in params.iter().enumerate() {
            net.set_param(i, *v);
        }
        if !net.all_finite() {
            return Err(Error::NonFinite("loaded parameters".to_string()));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    fn locate(&self, mut i: usize) -> (usize, Option<(usize, usize)>, usize) {
        for l in 0..self.layers() {
            let w = &self.weights[l];
            if i < w.len() {
                return (l, Some((i / w.ncols(), i % w.ncols())), 0);
            }
            i -= w.len();
            if i < self.biases[l].len() {
                return (l, None, i);
            }
            i -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, i: usize) -> f64 {
        match self.locate(i) {
            (l, Some(rc), _) => self.weights[l][rc],
            (l, None, j) => self.biases[l][j],
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        match self.locate(i) {
            (l, Some(rc), _) => self.weights[l][rc] = v,
            (l, None, j) => self.biases[l][j] = v,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    /// Pre-activations and activations of every layer for a batch.
    /// `acts[0]` is the input, `acts[L]` the raw logits.
    fn activations(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                what: "network input",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers() + 1);
        acts.push(x.to_owned());
        for l in 0..self.layers() {
            let mut z = acts[l].dot(&self.weights[l].t());
            z += &self.biases[l];
            if l + 1 < self.layers() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {} activations", l + 1)));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Row-wise softmax of a batch of logits, reshaped to `[batch * rows, group]`.
    fn softmax_groups(&self, logits: &Array2<f64>) -> Array2<f64> {
        let rows = logits.len() / self.group;
        let mut p = logits
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, self.group))
            .expect("contiguous logits");
        for mut row in p.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        p
    }

    pub fn forward(&self, x: &[f64]) -> Result<OutputTensor> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("1-row view");
        let acts = self.activations(x)?;
        Ok(OutputTensor::new(self.softmax_groups(acts.last().unwrap())))
    }

    /// Probabilities for a batch, `[batch, output_dim]`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let acts = self.activations(x)?;
        let n = x.nrows();
        Ok(self
            .softmax_groups(acts.last().unwrap())
            .into_shape_with_order((n, self.output_dim()))
            .expect("same element count"))
    }

    fn check_labels(&self, n: usize, labels: &[&[Option<usize>]]) -> Result<()> {
        let groups = self.output_dim() / self.group;
        if labels.len() != n || labels.iter().any(|l| l.len() != groups) {
            return Err(Error::Dimension {
                what: "label rows",
                expected: n * groups,
                actual: labels.iter().map(|l| l.len()).sum(),
            });
        }
        Ok(())
    }

    /// Summed cross-entropy of `logits` against `labels`, and optionally
    /// its derivative with respect to the logits.
    fn cross_entropy(
        &self,
        logits: &Array2<f64>,
        labels: &[&[Option<usize>]],
        with_delta: bool,
    ) -> (f64, Array2<f64>) {
        let n = logits.nrows();
        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros(if with_delta {
            (n, self.output_dim())
        } else {
            (0, 0)
        });
        for i in 0..n {
            for (g, label) in labels[i].iter().enumerate() {
                let Some(c) = *label else { continue };
                let z = logits.slice(s![i, g * self.group..(g + 1) * self.group]);
                let max = z.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                loss += lse - z[c];
                if with_delta {
                    let mut d = delta.slice_mut(s![i, g * self.group..(g + 1) * self.group]);
                    d.assign(&z.mapv(|v| (v - lse).exp()));
                    d[c] -= 1.0;
                }
            }
        }
        (loss, delta)
    }

    /// Summed cross-entropy over a batch, without gradients.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[&[Option<usize>]]) -> Result<f64> {
        self.check_labels(x.nrows(), labels)?;
        let acts = self.activations(x)?;
        let (loss, _) = self.cross_entropy(acts.last().unwrap(), labels, false);
        if !loss.is_finite() {
            return Err(Error::NonFinite("cross-entropy loss".to_string()));
        }
        Ok(loss)
    }

    /// Summed cross-entropy over all labelled rows of the batch and its
    /// gradient. `labels[i]` holds one class per softmax group of sample `i`;
    /// `None` rows contribute nothing.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[&[Option<usize>]],
    ) -> Result<(f64, Gradients)> {
        self.check_labels(x.nrows(), labels)?;
        let acts = self.activations(x)?;
        let (loss, mut delta) = self.cross_entropy(acts.last().unwrap(), labels, true);
        if !loss.is_finite() {
            return Err(Error::NonFinite("cross-entropy loss".to_string()));
        }

        let mut gw = Vec::with_capacity(self.layers());
        let mut gb = Vec::with_capacity(self.layers());
        for l in (0..self.layers()).rev() {
            gw.push(delta.t().dot(&acts[l]));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l]);
                prev.zip_mut_with(&acts[l], |d, a| {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok((
            loss,
            Gradients {
                weights: gw,
                biases: gb,
            },
        ))
    }

    /// Gradient-descent step `θ -= lr * g`.
    pub fn apply(&mut self, g: &Gradients, lr: f64) {
        for (w, d) in self.weights.iter_mut().zip(&g.weights) {
            w.scaled_add(-lr, d);
        }
        for (b, d) in self.biases.iter_mut().zip(&g.biases) {
            b.scaled_add(-lr, d);
        }
    }

    /// Zero gradients matching this network.
    pub fn zero_grad(&self) -> Gradients {
        Gradients {
            weights: self
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    /// Sum of per-chunk losses and gradients, reduced in chunk order so the
    /// result does not depend on how chunks were scheduled.
    pub fn batch_loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[&[Option<usize>]],
        chunk: usize,
    ) -> Result<(f64, Gradients)> {
        let n = x.nrows();
        let starts: Vec<usize> = (0..n).step_by(chunk.max(1)).collect();
        let parts = crate::par::map(&starts, |&s| {
            let e = (s + chunk).min(n);
            self.loss_and_grad(x.slice(s![s..e, ..]), &labels[s..e])
        });
        let mut total = 0.0;
        let mut grad = self.zero_grad();
        for p in parts {
            let (l, g) = p?;
            total += l;
            grad.add_assign(&g);
        }
        Ok((total, grad))
    }
}
