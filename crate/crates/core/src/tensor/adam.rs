use super::{ParamStore, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl AdamConfig {
    pub fn with_lr(lr: Real) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
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

/// Bias-corrected Adam moments for one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<Real>>,
    pub second_moment: Vec<Vec<Real>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<Real>> = store.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Applies one update from the gradients in `store`, then clears them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first_moment.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first_moment.len(),
                store.len()
            )));
        }
        for (i, p) in store.iter().enumerate() {
            let Some(g) = p.grad.as_ref() else {
                return Err(Error::contract(format!("parameter {} has no gradient", p.name)));
            };
            if g.shape() != p.value.shape() || self.first_moment[i].len() != p.value.numel() {
                return Err(Error::contract(format!(
                    "gradient/moment shape mismatch for {}",
                    p.name
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            let grad = p.grad.take().expect("checked above");
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with(value: Real, n: usize) -> ParamStore {
        let mut s = ParamStore::new("t");
        s.insert("w", Tensor::full(&[n], value)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = store_with(0.7, 4);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        store.iter_mut().for_each(|p| p.grad = Some(Tensor::zeros(&[4])));
        adam.step(&mut store).unwrap();
        assert!(store.iter().next().unwrap().value.data().iter().all(|&w| w == 0.7));
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = store_with(0.0, 3);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.001), &store);
        store.iter_mut().for_each(|p| p.grad = Some(Tensor::full(&[3], 0.1)));
        adam.step(&mut store).unwrap();
        // m_hat = 0.1, v_hat = 0.01: update = -lr * 0.1 / (0.1 + 1e-8)
        let expected = -0.001 * 0.1 / (0.1 + 1e-8);
        for &w in store.iter().next().unwrap().value.data() {
            assert!((w - expected).abs() < 1e-15);
            assert!((w + 0.001).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_gradient_update_tends_to_learning_rate() {
        let mut store = store_with(0.0, 1);
        let lr = 0.001;
        let mut adam = AdamState::new(AdamConfig::with_lr(lr), &store);
        // scalar recurrence oracle, written out independently
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 0.0f64);
        let g = 0.3;
        let mut last_step = 0.0;
        for t in 1..=100 {
            let before = store.iter().next().unwrap().value.data()[0];
            store.iter_mut().for_each(|p| p.grad = Some(Tensor::full(&[1], g)));
            adam.step(&mut store).unwrap();
            let after = store.iter().next().unwrap().value.data()[0];
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let upd = lr * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            w -= upd;
            assert!((after - w).abs() < 1e-14);
            last_step = before - after;
        }
        assert!((last_step - lr).abs() < 1e-6 * lr + 1e-10);
        assert_eq!(adam.step, 100);
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let mut store = store_with(1.0, 2);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        assert!(matches!(adam.step(&mut store), Err(Error::Contract(_))));
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn gradients_are_cleared_after_step() {
        let mut store = store_with(1.0, 2);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        store.iter_mut().for_each(|p| p.grad = Some(Tensor::ones(&[2])));
        adam.step(&mut store).unwrap();
        assert!(store.iter().all(|p| p.grad.is_none()));
    }
}
