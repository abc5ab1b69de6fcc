use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot<R> {
    value: Tensor<R>,
    m: Tensor<R>,
    v: Tensor<R>,
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// uniform(±√(6/(fan_in+fan_out))) for a `[fan_in × fan_out]` matrix
    Xavier,
    Zeros,
    /// uniform(±limit), used for embedding tables
    Uniform(f64),
}

/// Named parameters plus Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<R = f32> {
    slots: BTreeMap<String, Slot<R>>,
    step: u64,
}

impl<R: Real> Default for ParamStore<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self {
            slots: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<R>) -> Result<()> {
        let name = name.into();
        if self.slots.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.slots.insert(name, Slot { value, m, v });
        Ok(())
    }

    /// Initializes parameters from `specs` in name order with one seeded
    /// stream, so the result depends only on the seed and the parameter list.
    pub fn initialize(specs: &[(String, Vec<usize>, Init)], seed: u64) -> Result<Self> {
        let mut sorted: Vec<_> = specs.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for (name, shape, init) in sorted {
            let n: usize = shape.iter().product();
            let data: Vec<R> = match *init {
                Init::Zeros => vec![R::zero(); n],
                Init::Xavier => {
                    let (fan_in, fan_out) = match shape.as_slice() {
                        [a, b] => (*a, *b),
                        [a] => (*a, *a),
                        _ => return Err(Error::shape("initialize", format!("{name}: {shape:?}"))),
                    };
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| R::of(rng.random_range(-limit..limit))).collect()
                }
                Init::Uniform(limit) => (0..n).map(|_| R::of(rng.random_range(-limit..limit))).collect(),
            };
            store.insert(name.clone(), Tensor::new(shape.clone(), data)?)?;
        }
        Ok(store)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor<R>> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), &s.value))
    }

    /// Copies parameter values into another precision. Moments reset.
    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        let mut out = ParamStore::new();
        for (name, slot) in &self.slots {
            out.insert(name.clone(), slot.value.cast()).expect("names are unique");
        }
        out.step = self.step;
        out
    }

    /// One bias-corrected Adam step. `grads` must be keyed exactly like the
    /// parameters.
    pub fn adam_update(&mut self, grads: &BTreeMap<String, Tensor<R>>, cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.slots.len() {
            let missing: Vec<_> = self.slots.keys().filter(|k| !grads.contains_key(*k)).collect();
            let extra: Vec<_> = grads.keys().filter(|k| !self.slots.contains_key(*k)).collect();
            return Err(Error::invalid(format!(
                "gradient keys differ from parameters (missing {missing:?}, extra {extra:?})"
            )));
        }
        for (name, g) in grads {
            let slot = self
                .slots
                .get(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter `{name}`")))?;
            if slot.value.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_update",
                    format!("{name}: param {:?} vs grad {:?}", slot.value.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (R::of(cfg.beta1), R::of(cfg.beta2));
        let c1 = R::of(1.0 - cfg.beta1.powi(t));
        let c2 = R::of(1.0 - cfg.beta2.powi(t));
        let (lr, eps) = (R::of(cfg.lr), R::of(cfg.eps));
        for (name, g) in grads {
            let slot = self.slots.get_mut(name).expect("checked above");
            let Slot { value, m, v } = slot;
            for (((p, mi), vi), &gi) in value
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = b1 * *mi + (R::one() - b1) * gi;
                *vi = b2 * *vi + (R::one() - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<R: Real>(grads: &mut BTreeMap<String, Tensor<R>>, max_norm: f64) -> f64 {
    let norm = grads.values().map(Tensor::sum_squares).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = R::of(max_norm / norm);
        for g in grads.values_mut() {
            g.scale(k);
        }
    }
    norm
}
