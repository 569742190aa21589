use rand::Rng;

use crate::channel::{rng_from_seed, SimRng};
use crate::scalar::Scalar;

use super::graph::Graph;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` where fan_in is the
    /// product of every axis but the last.
    FanIn,
    Uniform(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Coefficient of the `l2 * theta` term added to every gradient.
    pub l2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.005, beta1: 0.9, beta2: 0.98, l2: 1e-4, eps: 1e-8 }
    }
}

struct Slot<T> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
    m: Vec<T>,
    v: Vec<T>,
}

/// Named parameter tensors with their gradient accumulators and Adam moments.
pub struct ParamStore<T> {
    slots: Vec<Slot<T>>,
    rng: SimRng,
    step: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self { slots: Vec::new(), rng: rng_from_seed(seed), step: 0 }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let n: usize = shape.iter().product();
        let bound = match init {
            Init::FanIn => {
                let fan_in: usize = shape[..shape.len().saturating_sub(1)].iter().product();
                Some(1.0 / (fan_in.max(1) as f64).sqrt())
            }
            Init::Uniform(b) => Some(b),
            _ => None,
        };
        let data: Vec<T> = match (init, bound) {
            (Init::Ones, _) => vec![T::one(); n],
            (_, Some(b)) => (0..n).map(|_| T::from_f64_lossy(self.rng.gen_range(-b..=b))).collect(),
            _ => vec![T::zero(); n],
        };
        self.slots.push(Slot {
            name: name.to_string(),
            value: Tensor::from_vec(shape, data).expect("product of shape"),
            grad: vec![T::zero(); n],
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        ParamId(self.slots.len() - 1)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.slots.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.slots[id.0].grad
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for s in &mut self.slots {
            s.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Add the parameter gradients of the last backward sweep of `graph`.
    pub fn accumulate(&mut self, graph: &Graph<T>) {
        for (id, g) in graph.param_grads() {
            for (a, &b) in self.slots[id.0].grad.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    /// One bias-corrected Adam update from the accumulated gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c = |v: f64| T::from_f64_lossy(v);
        let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let (lr, l2, eps) = (c(cfg.lr), c(cfg.l2), c(cfg.eps));
        for s in &mut self.slots {
            for (((p, &g), m), v) in s.value.data_mut().iter_mut().zip(&s.grad).zip(&mut s.m).zip(&mut s.v) {
                let g = g + l2 * *p;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
