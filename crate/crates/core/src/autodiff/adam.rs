use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Adam hyperparameters. `weight_decay` is applied decoupled from the
/// adaptive step: `θ ← θ − lr·(m̂ / (√v̂ + ε) + γ·θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment buffers, one pair per parameter of the store it was created for.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update of every parameter from its accumulated gradient.
    /// Gradients are left in place; the caller zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            weight_decay: wd,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + eps) + wd * p.data[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", [1, 1], vec![x]);
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_store(1.0);
        s.iter_mut().next().unwrap().grad[0] = 1.0;
        let mut st = AdamState::new(&s, AdamConfig::default());
        st.step(&mut s);
        let x = s.by_name("x").unwrap().data[0];
        assert!((1.0 - x - 0.05).abs() < 1e-6, "{x}");
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = scalar_store(0.7);
        let mut st = AdamState::new(&s, AdamConfig::default());
        for _ in 0..5 {
            st.step(&mut s);
        }
        assert_eq!(s.by_name("x").unwrap().data[0], 0.7);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn minimises_a_parabola() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        for _ in 0..100 {
            let p = s.iter_mut().next().unwrap();
            p.grad[0] = 2.0 * (p.data[0] - 3.0);
            st.step(&mut s);
        }
        // Scalar recurrence written out independently.
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (x - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }
        let got = s.by_name("x").unwrap().data[0];
        assert!((got - x).abs() < 1e-12);
        assert!((got - 3.0).abs() < 0.5, "{got}");
    }

    #[test]
    fn weight_decay_shrinks_norm() {
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut a = scalar_store(2.0);
        let mut b = scalar_store(2.0);
        let mut sa = AdamState::new(&a, cfg);
        let mut sb = AdamState::new(&b, AdamConfig::default());
        for _ in 0..10 {
            sa.step(&mut a);
            sb.step(&mut b);
        }
        assert!(a.l2_norm() < b.l2_norm());
    }
}
