use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

/// Adam moment buffers bound to one [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ParameterSet, lr: f64) -> Self {
        let zeros = |p: &ParameterSet| {
            p.iter()
                .map(|(n, t)| (n.clone(), vec![0.0; t.numel()]))
                .collect()
        };
        AdamState {
            first: zeros(params),
            second: zeros(params),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn with_defaults(params: &ParameterSet) -> Self {
        Self::new(params, 1e-3)
    }

    /// One bias-corrected Adam update of every parameter, then zeroes the
    /// gradients. Fails before touching anything if a gradient is missing.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        for (name, t) in params.iter() {
            if t.grad.is_none() {
                return Err(Error::usage(format!("parameter `{name}` has no gradient")));
            }
            if !self.first.contains_key(name) {
                return Err(Error::usage(format!(
                    "parameter `{name}` is not bound to this optimizer"
                )));
            }
        }
        if self.first.len() != params.len() {
            return Err(Error::usage(
                "optimizer state has moments for parameters that are not in the set",
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let grad = tensor.grad.take().expect("checked above");
            let m = self.first.get_mut(name).expect("checked above");
            let v = self.second.get_mut(name).expect("checked above");
            let data = tensor.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            tensor.grad = Some(grad);
            tensor.zero_grad();
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut ParameterSet, state: &mut AdamState) -> Result<()> {
    state.step(params)
}
