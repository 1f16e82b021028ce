//! Parameter storage and the SGD / Adam update rules.

use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::graph::{Bindings, Gradients, Graph};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named trainable tensors. Iteration order is the name order, which keeps
/// every update pass deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<F: Scalar> {
    params: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, mut value: Tensor<F>) {
        value.requires_grad = true;
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// Copies every parameter value into `bindings` under its own name.
    pub fn bind_into(&self, bindings: &mut Bindings<F>) {
        for (name, t) in &self.params {
            bindings.set(name, t.clone());
        }
    }

    /// Accumulates gradients produced by a backward pass into the stored
    /// parameters, matching graph leaves to store entries by name.
    pub fn accumulate_gradients(&mut self, graph: &Graph<F>, grads: &Gradients<F>) -> Result<()> {
        for name in graph.parameter_names() {
            let id = graph.by_name(&name)?;
            if let Some(g) = grads.get(id) {
                let p = self
                    .params
                    .get_mut(&name)
                    .ok_or_else(|| TensorError::UnknownNode(name.clone()))?;
                let buf = p.ensure_grad();
                for (d, &x) in buf.iter_mut().zip(g) {
                    *d += x;
                }
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.zero_grad();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sgd,
    Adam,
}

/// First-order optimizer with per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct Optimizer<F: Scalar> {
    pub method: Method,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    moment1: BTreeMap<String, Tensor<F>>,
    moment2: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            method: Method::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            moment1: BTreeMap::new(),
            moment2: BTreeMap::new(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            method: Method::Adam,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter with `requires_grad`, then
    /// zeroes the gradients. Errors if any such parameter has no gradient.
    pub fn step(&mut self, store: &mut ParamStore<F>) -> Result<()> {
        self.step_count += 1;
        let lr = F::from_f64_c(self.learning_rate);
        match self.method {
            Method::Sgd => {
                for (name, p) in store.params.iter_mut() {
                    if !p.requires_grad {
                        continue;
                    }
                    let grad = p
                        .grad
                        .take()
                        .ok_or_else(|| TensorError::MissingGrad(name.clone()))?;
                    for (v, g) in p.data_mut().iter_mut().zip(&grad) {
                        *v = *v - lr * *g;
                    }
                    p.grad = Some(grad);
                    p.zero_grad();
                }
            }
            Method::Adam => {
                let b1 = F::from_f64_c(self.beta1);
                let b2 = F::from_f64_c(self.beta2);
                let eps = F::from_f64_c(self.epsilon);
                let one = F::one();
                let t = self.step_count as i32;
                let c1 = one - F::from_f64_c(self.beta1.powi(t));
                let c2 = one - F::from_f64_c(self.beta2.powi(t));
                for (name, p) in store.params.iter_mut() {
                    if !p.requires_grad {
                        continue;
                    }
                    let grad = p
                        .grad
                        .take()
                        .ok_or_else(|| TensorError::MissingGrad(name.clone()))?;
                    let m = self
                        .moment1
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(p.shape()));
                    let v2 = self
                        .moment2
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(p.shape()));
                    for (((pv, &g), m), v) in p
                        .data_mut()
                        .iter_mut()
                        .zip(&grad)
                        .zip(m.data_mut())
                        .zip(v2.data_mut())
                    {
                        *m = b1 * *m + (one - b1) * g;
                        *v = b2 * *v + (one - b2) * g * g;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
                    }
                    p.grad = Some(grad);
                    p.zero_grad();
                }
            }
        }
        Ok(())
    }

    /// Moment buffers as named arrays for checkpointing.
    pub fn export_state(&self) -> Vec<(String, Tensor<F>)> {
        let mut out = Vec::new();
        for (name, t) in &self.moment1 {
            out.push((format!("optim.m1.{name}"), t.clone()));
        }
        for (name, t) in &self.moment2 {
            out.push((format!("optim.m2.{name}"), t.clone()));
        }
        out
    }

    pub fn import_state(
        &mut self,
        step_count: u64,
        arrays: &BTreeMap<String, Tensor<F>>,
    ) -> Result<()> {
        self.step_count = step_count;
        self.moment1.clear();
        self.moment2.clear();
        for (name, t) in arrays {
            if let Some(p) = name.strip_prefix("optim.m1.") {
                self.moment1.insert(p.to_string(), t.clone());
            } else if let Some(p) = name.strip_prefix("optim.m2.") {
                self.moment2.insert(p.to_string(), t.clone());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64, grad: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        let mut t = Tensor::scalar(value);
        t.grad = Some(vec![grad]);
        store.insert("p", t);
        // insert resets grad? insert sets requires_grad; keep grad
        store.get_mut("p").unwrap().grad = Some(vec![grad]);
        store
    }

    #[test]
    fn sgd_update_rule() {
        let mut store = one_param(1.0, 2.0);
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut store).unwrap();
        let p = store.get("p").unwrap().data()[0];
        assert!((p - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_no_change() {
        let mut store = one_param(1.5, 0.0);
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut store).unwrap();
        assert_eq!(store.get("p").unwrap().data()[0], 1.5);
    }

    #[test]
    fn adam_single_step_matches_hand_computation() {
        let (p0, g, lr) = (1.0, 0.5, 0.01);
        let mut store = one_param(p0, g);
        let mut opt = Optimizer::adam(lr);
        opt.step(&mut store).unwrap();
        // hand computation of one bias-corrected Adam step
        let m = 0.1 * g;
        let v = 0.001 * g * g;
        let mhat = m / (1.0 - 0.9f64);
        let vhat = v / (1.0 - 0.999f64);
        let expect = p0 - lr * mhat / (vhat.sqrt() + 1e-8);
        let p = store.get("p").unwrap().data()[0];
        assert!((p - expect).abs() < 1e-15, "{p} vs {expect}");
    }

    #[test]
    fn adam_zero_grad_fresh_state_no_change() {
        let mut store = one_param(2.25, 0.0);
        let mut opt = Optimizer::adam(0.1);
        opt.step(&mut store).unwrap();
        assert_eq!(store.get("p").unwrap().data()[0], 2.25);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::scalar(1.0));
        let mut opt = Optimizer::sgd(0.1);
        assert!(matches!(
            opt.step(&mut store),
            Err(TensorError::MissingGrad(_))
        ));
    }

    #[test]
    fn step_counter_increments() {
        let mut store = one_param(1.0, 1.0);
        let mut opt = Optimizer::adam(0.01);
        for expect in 1..=3u64 {
            store.get_mut("p").unwrap().grad = Some(vec![1.0]);
            opt.step(&mut store).unwrap();
            assert_eq!(opt.step_count(), expect);
        }
    }
}
