use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaBeliefConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdaBeliefConfig {
    fn default() -> Self {
        AdaBeliefConfig { beta1: 0.9, beta2: 0.999, eps: 1e-16 }
    }
}

/// AdaBelief: Adam with the second moment tracking `(g - m)^2` instead of `g^2`.
#[derive(Debug, Clone)]
pub struct AdaBelief {
    pub config: AdaBeliefConfig,
    t: u64,
    m: Vec<Matrix>,
    s: Vec<Matrix>,
}

impl AdaBelief {
    pub fn new(config: AdaBeliefConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        AdaBelief { config, t: 0, m: zeros(), s: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Matrix] {
        &self.s
    }

    /// One update of every block; `lrs[i]` is the rate for block `i`.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lrs: &[f64], names: &[&str]) -> Result<()> {
        let n = self.m.len();
        if params.len() != n || grads.len() != n || lrs.len() != n {
            return Err(Error::Parameter(format!(
                "optimizer expects {n} blocks, got {} params / {} grads / {} rates",
                params.len(),
                grads.len(),
                lrs.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.m[i].shape() || params[i].shape() != g.shape() {
                return Err(Error::dim("adabelief", params[i].shape(), g.shape()));
            }
            if !g.is_finite() {
                let block = names.get(i).map_or_else(|| format!("#{i}"), |s| s.to_string());
                return Err(Error::Optimizer { block });
            }
        }

        self.t += 1;
        let AdaBeliefConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..n {
            let lr = lrs[i];
            let m = self.m[i].as_mut_slice();
            let s = self.s[i].as_mut_slice();
            let theta = params[i].as_mut_slice();
            for (((th, mv), sv), g) in theta.iter_mut().zip(m).zip(s).zip(grads[i].as_slice()) {
                *mv = beta1 * *mv + (1.0 - beta1) * g;
                let d = g - *mv;
                *sv = beta2 * *sv + (1.0 - beta2) * d * d + eps;
                let m_hat = *mv / bc1;
                let s_hat = *sv / bc2;
                *th -= lr * m_hat / (s_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
