use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bias-corrected Adam for gradient *ascent* over a list of flat tensors.
/// Moments are shaped lazily on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        Self::with_decay(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_decay(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(beta1),
            beta2: T::lit(beta2),
            eps: T::lit(eps),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// `params[i] += lr · m̂ / (√v̂ + ε)` for every tensor.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = params.iter().zip(grads).position(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape(format!("tensor {i}: parameter and gradient lengths differ")));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("Adam moments do not match parameters".into()));
        }

        self.step += 1;
        let one = T::one();
        let step = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = one - self.beta1.powi(step);
        let bc2 = one - self.beta2.powi(step);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (one - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] += self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
