use std::collections::HashSet;

use crate::autodiff::{Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    /// Excluded from the L2 penalty (biases and normalization parameters).
    pub decay_exempt: bool,
}

/// Ordered parameter collection with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    names: HashSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor, decay_exempt: bool) -> Result<usize> {
        if !self.names.insert(name.to_string()) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        self.params.push(Parameter {
            name: name.to_string(),
            tensor: tensor.with_requires_grad(true),
            decay_exempt,
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn get(&self, index: usize) -> &Parameter {
        &self.params[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Parameter {
        &mut self.params[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Records every parameter as a gradient-tracking leaf, in store order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.tensor.clone())).collect()
    }

    /// Adds the gradients of `vars` (as returned by [`bind`](Self::bind))
    /// into each parameter's gradient buffer. Parameters the output did not
    /// depend on receive zeros.
    pub fn accumulate(&mut self, grads: &mut Gradients, vars: &[Var]) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(vars) {
            match grads.take(*v) {
                Some(d) => p.tensor.accumulate_grad(&d)?,
                None => p.tensor.accumulate_grad(&vec![0.0; p.tensor.len()])?,
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }
}

/// Adam moments and hyperparameters for one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        AdamState {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. The L2 penalty enters the gradient as
/// `2 * l2_factor * w` for parameters that are not decay-exempt. Gradient
/// buffers are zeroed afterwards.
pub fn adam_step(state: &mut AdamState, params: &mut ParamStore, l2_factor: f64) -> Result<()> {
    if state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(Error::OptimizerState(format!(
            "moments for {} parameters, store has {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.tensor.grad().is_none() {
            return Err(Error::OptimizerState(format!("parameter {} has no gradient", p.name)));
        }
        if state.first_moment[i].len() != p.tensor.len() || state.second_moment[i].len() != p.tensor.len() {
            return Err(Error::OptimizerState(format!(
                "moment buffer shape mismatch for {}",
                p.name
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.learning_rate, state.epsilon);
    for (i, p) in params.params.iter_mut().enumerate() {
        let decay = if p.decay_exempt { 0.0 } else { 2.0 * l2_factor };
        let grad = p.tensor.grad().expect("checked above").to_vec();
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (k, w) in p.tensor.data_mut().iter_mut().enumerate() {
            let gk = grad[k] + decay * *w;
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
        p.tensor.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(value: f64, grad: f64, exempt: bool) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[1], vec![value]).unwrap(), exempt).unwrap();
        s.get_mut(0).tensor.accumulate_grad(&[grad]).unwrap();
        s
    }

    /// Scalar Adam written out independently of the store machinery.
    fn scalar_adam(mut w: f64, grads: &[f64], lr: f64) -> Vec<f64> {
        let (mut m, mut v) = (0.0, 0.0);
        let mut trace = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            let t = t as i32 + 1;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9f64.powi(t));
            let vhat = v / (1.0 - 0.999f64.powi(t));
            w -= lr * mhat / (vhat.sqrt() + 1e-8);
            trace.push(w);
        }
        trace
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(0.7, 0.0, false);
        let mut st = AdamState::new(&s, 1e-4);
        adam_step(&mut st, &mut s, 0.0).unwrap();
        assert_eq!(s.get(0).tensor.data(), &[0.7]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02] {
            let mut s = store(1.0, g, false);
            let mut st = AdamState::new(&s, 1e-4);
            adam_step(&mut st, &mut s, 0.0).unwrap();
            let delta = s.get(0).tensor.data()[0] - 1.0;
            assert!((delta + 1e-4 * f64::signum(g)).abs() < 1e-9, "delta {delta}");
            assert_eq!(s.get(0).tensor.grad(), Some(&[0.0][..]));
        }
    }

    #[test]
    fn constant_gradient_is_monotone_and_matches_scalar_oracle() {
        let mut s = store(0.5, 2.0, true);
        let mut st = AdamState::new(&s, 1e-3);
        let mut trace = Vec::new();
        for _ in 0..2 {
            s.get_mut(0).tensor.accumulate_grad(&[0.0]).unwrap();
            adam_step(&mut st, &mut s, 0.0005).unwrap();
            trace.push(s.get(0).tensor.data()[0]);
            s.get_mut(0).tensor.accumulate_grad(&[2.0]).unwrap();
        }
        let oracle = scalar_adam(0.5, &[2.0, 2.0], 1e-3);
        assert!(trace[0] < 0.5 && trace[1] < trace[0]);
        assert_eq!(trace, oracle);
    }

    #[test]
    fn l2_penalty_applies_only_to_non_exempt() {
        let mut decayed = store(1.0, 0.0, false);
        let mut exempt = store(1.0, 0.0, true);
        let mut s1 = AdamState::new(&decayed, 1e-2);
        let mut s2 = AdamState::new(&exempt, 1e-2);
        adam_step(&mut s1, &mut decayed, 0.5).unwrap();
        adam_step(&mut s2, &mut exempt, 0.5).unwrap();
        assert!(decayed.get(0).tensor.data()[0] < 1.0);
        assert_eq!(exempt.get(0).tensor.data()[0], 1.0);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2]).unwrap(), false).unwrap();
        let mut st = AdamState::new(&s, 1e-4);
        assert!(matches!(adam_step(&mut st, &mut s, 0.0), Err(Error::OptimizerState(_))));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[1]).unwrap(), false).unwrap();
        assert!(s.add("w", Tensor::zeros(&[1]).unwrap(), false).is_err());
    }
}
