//! Desk-scale federated learner: multinomial softmax regression on
//! synthetic Gaussian blobs, split across clients with a tunable amount of
//! label skew.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Bits per transmitted parameter.
pub const BITS_PER_PARAM: u64 = 32;

/// Labelled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sample(&self, k: usize) -> (&[f64], usize) {
        (&self.x[k * self.features..(k + 1) * self.features], self.y[k])
    }
}

/// Class-conditional Gaussian blobs with unit covariance. Class `m` is
/// centred at `separation * e_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub features: usize,
    pub separation: f64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.features < self.classes {
            return Err(invalid("blobs need at least two classes and features >= classes"));
        }
        Ok(())
    }

    fn push_sample<R: Rng + ?Sized>(&self, class: usize, data: &mut Dataset, rng: &mut R) {
        for k in 0..self.features {
            let z: f64 = StandardNormal.sample(rng);
            data.x.push(z + if k == class { self.separation } else { 0.0 });
        }
        data.y.push(class);
    }

    /// Balanced held-out set.
    pub fn test_set<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Dataset {
        let mut d = Dataset {
            features: self.features,
            x: Vec::with_capacity(samples * self.features),
            y: Vec::with_capacity(samples),
        };
        for k in 0..samples {
            self.push_sample(k % self.classes, &mut d, rng);
        }
        d
    }
}

/// Client datasets plus the ratios the divergence bound needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub classes: usize,
    pub gamma: f64,
    pub clients: Vec<Dataset>,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Dataset::len).collect()
    }

    /// `p_i = |D_i| / |D|`.
    pub fn size_ratios(&self) -> Vec<f64> {
        let total: usize = self.sizes().iter().sum();
        self.sizes().iter().map(|&s| s as f64 / total as f64).collect()
    }

    /// `p_{i,m}`.
    pub fn class_ratios(&self, client: usize) -> Vec<f64> {
        let d = &self.clients[client];
        let mut counts = vec![0usize; self.classes];
        for &y in &d.y {
            counts[y] += 1;
        }
        counts.iter().map(|&c| c as f64 / d.len() as f64).collect()
    }

    /// `q_m` over the pooled data.
    pub fn global_class_ratios(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.classes];
        for d in &self.clients {
            for &y in &d.y {
                counts[y] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// Dominant class of a client.
    pub fn dominant_class(&self, client: usize) -> usize {
        client % self.classes
    }
}

/// Label-skewed split. Client `i` draws `round(gamma * n_i)` samples from
/// class `i mod M` and the rest uniformly over all classes.
pub fn partition_synthetic<R: Rng + ?Sized>(
    blobs: &BlobSpec,
    sizes: &[usize],
    gamma: f64,
    rng: &mut R,
) -> Result<Partition> {
    blobs.validate()?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("non-IID degree must lie in [0, 1], got {gamma}")));
    }
    if sizes.contains(&0) {
        return Err(invalid("client dataset sizes must be positive"));
    }
    let clients = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let dominant = i % blobs.classes;
            let skewed = (gamma * n as f64).round() as usize;
            let mut d = Dataset {
                features: blobs.features,
                x: Vec::with_capacity(n * blobs.features),
                y: Vec::with_capacity(n),
            };
            for k in 0..n {
                let class = if k < skewed {
                    dominant
                } else {
                    rng.random_range(0..blobs.classes)
                };
                blobs.push_sample(class, &mut d, rng);
            }
            d
        })
        .collect();
    Ok(Partition {
        classes: blobs.classes,
        gamma,
        clients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip: f64,
    pub local_steps: u32,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !(self.clip >= 0.0) || self.local_steps == 0 || self.batch_size == 0 {
            return Err(invalid(format!("bad training config {self:?}")));
        }
        Ok(())
    }
}

/// Softmax regression weights (`classes x features`, row-major) followed by
/// one bias per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub classes: usize,
    pub features: usize,
    pub params: Vec<f64>,
}

impl Model {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            classes,
            features,
            params: vec![0.0; classes * features + classes],
        }
    }

    pub fn random<R: Rng + ?Sized>(classes: usize, features: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(classes, features);
        for p in &mut m.params {
            let z: f64 = StandardNormal.sample(rng);
            *p = scale * z;
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn bias_offset(&self) -> usize {
        self.classes * self.features
    }

    /// Class probabilities for one input.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let f = self.features;
        let b = self.bias_offset();
        let logits: Vec<f64> = (0..self.classes)
            .map(|m| {
                let w = &self.params[m * f..(m + 1) * f];
                w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.params[b + m]
            })
            .collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    /// Cross-entropy of one labelled input.
    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        -self.predict_proba(x)[y].max(f64::MIN_POSITIVE).ln()
    }

    /// Gradient of [`Model::loss`] with respect to all parameters.
    pub fn sample_gradient(&self, x: &[f64], y: usize) -> Vec<f64> {
        let p = self.predict_proba(x);
        let f = self.features;
        let mut g = vec![0.0; self.params.len()];
        for m in 0..self.classes {
            let r = p[m] - if m == y { 1.0 } else { 0.0 };
            for k in 0..f {
                g[m * f + k] = r * x[k];
            }
            g[self.bias_offset() + m] = r;
        }
        g
    }
}

/// Scales `grad` in place so its L2 norm is at most `bound`.
pub fn clip_gradient(grad: &mut [f64], bound: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > bound {
        let s = if norm > 0.0 { bound / norm } else { 0.0 };
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// `tau` steps of mini-batch SGD with per-sample clipping.
pub fn local_train<R: Rng + ?Sized>(
    model: &Model,
    data: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Model> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    config.validate()?;
    let batch = config.batch_size.min(data.len());
    let mut w = model.clone();
    let mut acc = vec![0.0; w.param_count()];
    for _ in 0..config.local_steps {
        acc.fill(0.0);
        for k in index::sample(rng, data.len(), batch) {
            let (x, y) = data.sample(k);
            let mut g = w.sample_gradient(x, y);
            clip_gradient(&mut g, config.clip);
            acc.iter_mut().zip(&g).for_each(|(a, g)| *a += g);
        }
        let step = config.learning_rate / batch as f64;
        w.params.iter_mut().zip(&acc).for_each(|(p, a)| *p -= step * a);
    }
    Ok(w)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every parameter.
pub fn perturb<R: Rng + ?Sized>(model: &Model, sigma: f64, rng: &mut R) -> Result<Model> {
    if sigma == 0.0 {
        return Ok(model.clone());
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| invalid(format!("noise std {sigma}: {e}")))?;
    let mut out = model.clone();
    out.params.iter_mut().for_each(|p| *p += noise.sample(rng));
    Ok(out)
}

/// Dataset-size weighted average over the uploaded models.
pub fn aggregate(models: &[&Model], sizes: &[usize]) -> Result<Model> {
    let first = models.first().ok_or_else(|| invalid("nothing to aggregate"))?;
    if models.len() != sizes.len() {
        return Err(invalid("one dataset size per model expected"));
    }
    if models.iter().any(|m| m.params.len() != first.params.len()) {
        return Err(invalid("models differ in shape"));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(invalid("aggregation weights sum to zero"));
    }
    if models.len() == 1 {
        return Ok((*first).clone());
    }
    // offsets from the first model vanish when all uploads agree, so the
    // average of identical models is that model bit for bit
    let mut offset = vec![0.0; first.params.len()];
    for (m, &s) in models.iter().zip(sizes).skip(1) {
        let p = s as f64 / total as f64;
        offset
            .iter_mut()
            .zip(m.params.iter().zip(&first.params))
            .for_each(|(o, (w, w0))| *o += p * (w - w0));
    }
    let mut out = (*first).clone();
    out.params.iter_mut().zip(offset).for_each(|(w, o)| *w += o);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

pub fn evaluate(model: &Model, test: &Dataset) -> Evaluation {
    let mut correct = 0usize;
    let mut loss = 0.0;
    for k in 0..test.len() {
        let (x, y) = test.sample(k);
        let p = model.predict_proba(x);
        let pred = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(m, _)| m)
            .unwrap_or(0);
        correct += usize::from(pred == y);
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
    }
    let n = test.len().max(1) as f64;
    Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    }
}

/// Encoded size of a model in bits.
pub fn model_size_bits(model: &Model) -> u64 {
    BITS_PER_PARAM * model.param_count() as u64
}
