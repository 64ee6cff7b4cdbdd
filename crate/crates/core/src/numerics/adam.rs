use super::params::Parameterized;
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn update<P: Parameterized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        let n = params.num_params();
        if g.len() != n || self.first_moment.len() != n {
            return Err(Error::contract(format!(
                "adam shapes disagree: params {n}, grads {}, state {}",
                g.len(),
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((m, v), &gi) in self.first_moment.iter_mut().zip(&mut self.second_moment).zip(&g) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
        }
        let (m, v) = (&self.first_moment, &self.second_moment);
        let (lr, eps) = (self.learning_rate, self.epsilon);
        let mut offset = 0;
        params.visit_mut(&mut |_, t| {
            for (k, w) in t.iter_mut().enumerate() {
                let i = offset + k;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += t.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::FlatParams;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut fresh = FlatParams(vec![1.0, -2.0]);
        let mut adam = AdamState::new(2, 1e-3);
        adam.update(&mut fresh, &FlatParams(vec![0.0, 0.0])).unwrap();
        assert_eq!(fresh, FlatParams(vec![1.0, -2.0]));
        assert_eq!(adam.step, 1);

        let mut p = FlatParams(vec![1.0, -2.0]);
        let mut adam = AdamState::new(2, 1e-3);
        adam.update(&mut p, &FlatParams(vec![1.0, 1.0])).unwrap();
        let m_before = adam.first_moment().to_vec();
        let v_before = adam.second_moment().to_vec();
        adam.update(&mut p, &FlatParams(vec![0.0, 0.0])).unwrap();
        for i in 0..2 {
            assert_eq!(adam.first_moment()[i], 0.9 * m_before[i]);
            assert_eq!(adam.second_moment()[i], 0.999 * v_before[i]);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient() {
        let mut p = FlatParams(vec![0.0, 0.0, 0.0]);
        let mut adam = AdamState::new(3, 0.01);
        adam.update(&mut p, &FlatParams(vec![3.0, -0.5, 1e-3])).unwrap();
        for (w, sign) in p.0.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((w.abs() - 0.01).abs() < 1e-6, "{w}");
            assert_eq!(w.signum(), sign);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = FlatParams(vec![0.0; 3]);
        let mut adam = AdamState::new(3, 0.01);
        assert!(adam.update(&mut p, &FlatParams(vec![1.0])).is_err());
    }

    #[test]
    fn quadratic_bowl_loss_decreases() {
        let center = [1.0, -3.0, 0.5, 2.0];
        let loss = |w: &[f64]| w.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        let mut p = FlatParams(vec![0.0; 4]);
        let mut adam = AdamState::new(4, 0.05);
        let mut history = vec![loss(&p.0)];
        for _ in 0..100 {
            let g = FlatParams(p.0.iter().zip(&center).map(|(a, c)| 2.0 * (a - c)).collect());
            adam.update(&mut p, &g).unwrap();
            history.push(loss(&p.0));
        }
        assert!(history.windows(2).all(|w| w[1] < w[0] + 1e-12));
        assert!(history[100] < 0.1 * history[0]);
    }
}
