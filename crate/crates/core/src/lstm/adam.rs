use serde::{Deserialize, Serialize};

/// Adam moment accumulators, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(shapes: &[usize], learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn with_defaults(shapes: &[usize]) -> Self {
        Self::new(shapes, 1e-3, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update applied in place.
///
/// # Panics
/// If the block layout of `params`, `grads` and `state` disagree.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient block count");
    assert_eq!(params.len(), state.first_moment.len(), "parameter/moment block count");
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        assert_eq!(p.len(), g.len());
        assert_eq!(p.len(), m.len());
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / correction1;
            let v_hat = v[j] / correction2;
            p[j] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}
