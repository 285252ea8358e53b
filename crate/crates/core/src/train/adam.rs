use serde::{Deserialize, Serialize};

use crate::tensor::{Mat, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments, one pair per parameter tensor, plus the
/// update count used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Mat<T>>,
    pub v: Vec<Mat<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn zeros(tensors: &[&Mat<T>]) -> Self {
        let z = || tensors.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect();
        AdamState { m: z(), v: z(), t: 0 }
    }

    /// One bias-corrected Adam step on the tensors where `trainable` is set.
    /// Moments of the other tensors are left untouched.
    pub fn update(
        &mut self,
        config: &AdamConfig,
        params: Vec<&mut Mat<T>>,
        grads: Vec<&Mat<T>>,
        lr: f64,
        trainable: &[bool],
    ) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count changed");
        self.t += 1;
        let t = self.t as i32;
        let b1 = T::from_f64_lossy(config.beta1);
        let b2 = T::from_f64_lossy(config.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - config.beta1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - config.beta2.powi(t));
        let eps = T::from_f64_lossy(config.eps);
        let lr = T::from_f64_lossy(lr);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if !trainable[i] {
                continue;
            }
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: Vec<&mut Mat<T>>, max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::from_f64_lossy(max_norm / norm);
        for g in grads {
            g.scale(s);
        }
    }
    norm
}
