//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every parameter from its gradient.
    ///
    /// Moments are allocated on the first call; later calls must pass
    /// parameters with the same sizes in the same order.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::Shape(format!(
                    "parameter {i} has {} values, gradient has {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Shape(
                "parameter list changed shape between Adam steps".into(),
            ));
        }

        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.t as i32));
        let (alpha, eps) = (T::of(c.alpha), T::of(c.epsilon));

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.iter()).zip(m).zip(v) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = *w - alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn first_step_moves_by_alpha_times_sign() {
        for g in [3.0, -0.02] {
            let mut p = scalar(1.0);
            let mut st = AdamState::new(AdamConfig::default());
            st.step(&mut [&mut p], &[&[g]]).unwrap();
            let moved = p.data()[0] - 1.0;
            assert!((moved + 1e-3 * f64::signum(g)).abs() < 1e-9, "moved {moved}");
        }
    }

    #[test]
    fn two_step_trace_matches_hand_unroll() {
        let cfg = AdamConfig {
            alpha: 0.1,
            ..AdamConfig::default()
        };
        let mut p = scalar(0.0);
        let mut st = AdamState::new(cfg);
        st.step(&mut [&mut p], &[&[1.0]]).unwrap();
        st.step(&mut [&mut p], &[&[1.0]]).unwrap();

        let (b1, b2, eps, alpha) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let (mut theta, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= alpha * mh / (vh.sqrt() + eps);
        }
        assert!((p.data()[0] - theta).abs() < 1e-10);
        assert_eq!(st.steps(), 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::<f64>::zeros(&[3]).unwrap();
        let mut st = AdamState::new(AdamConfig::default());
        assert!(matches!(
            st.step(&mut [&mut p], &[&[1.0, 2.0]]),
            Err(Error::Shape(_))
        ));
        st.step(&mut [&mut p], &[&[1.0; 3]]).unwrap();
        let mut q = Tensor::<f64>::zeros(&[4]).unwrap();
        assert!(st.step(&mut [&mut q], &[&[1.0; 4]]).is_err());
    }

    proptest! {
        #[test]
        fn zero_gradient_is_a_fixed_point(vals in prop::collection::vec(-10.0f64..10.0, 1..20), steps in 1usize..5) {
            let mut p = Tensor::new(&[vals.len()], vals.clone()).unwrap();
            let zeros = vec![0.0; vals.len()];
            let mut st = AdamState::new(AdamConfig::default());
            for _ in 0..steps {
                st.step(&mut [&mut p], &[&zeros]).unwrap();
            }
            prop_assert_eq!(p.data(), &vals[..]);
            prop_assert_eq!(st.steps(), steps as u64);
        }
    }
}
