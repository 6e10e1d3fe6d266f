use super::{MdnNetwork, NetworkGrads, TrainConfig};
use crate::error::{Error, Result};

/// First and second moment estimates for every network parameter, in the
/// canonical flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(net: &MdnNetwork) -> Self {
        let n = net.param_count();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay:
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
pub fn adamw_step(
    net: &mut MdnNetwork,
    state: &mut OptimizerState,
    grads: &NetworkGrads,
    cfg: &TrainConfig,
) -> Result<()> {
    if state.m.len() != net.param_count() || state.v.len() != state.m.len() {
        return Err(Error::validation(
            "optimizer state does not match network parameter count",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1, cfg.beta2);

    let mut idx = 0;
    for (layer, grad) in net.layers_mut().zip(grads.layers()) {
        let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
        let gs = grad.weights.iter().chain(&grad.bias);
        for (p, &g) in params.zip(gs) {
            let m = &mut state.m[idx];
            let v = &mut state.v[idx];
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * *p);
            idx += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkShape, Normalization};

    fn tiny() -> MdnNetwork {
        let mut net =
            MdnNetwork::zeros(NetworkShape::new(1, vec![2], 1), Normalization::identity(1)).unwrap();
        let flat: Vec<f64> = (0..net.param_count()).map(|i| 0.1 * i as f64 - 0.3).collect();
        net.set_flat_params(&flat).unwrap();
        net
    }

    #[test]
    fn single_step_closed_form() {
        let mut net = tiny();
        let before = net.flat_params();
        let mut grads = NetworkGrads::zeros_like(&net);
        let g = 0.37;
        grads.mu.bias[0] = g;
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut state = OptimizerState::new(&net);
        adamw_step(&mut net, &mut state, &grads, &cfg).unwrap();
        // m_hat = g, v_hat = g^2 after one bias-corrected step
        let m_hat = (1.0 - cfg.beta1) * g / (1.0 - cfg.beta1);
        let v_hat = (1.0 - cfg.beta2) * g * g / (1.0 - cfg.beta2);
        let want = -cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        let after = net.flat_params();
        let moved: Vec<usize> = (0..before.len()).filter(|&i| after[i] != before[i]).collect();
        assert_eq!(moved.len(), 1);
        let i = moved[0];
        assert!(((after[i] - before[i]) - want).abs() < 1e-15);
        assert!(want < 0.0);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut net = tiny();
        let before = net.clone();
        let grads = NetworkGrads::zeros_like(&net);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut state = OptimizerState::new(&net);
        for _ in 0..5 {
            adamw_step(&mut net, &mut state, &grads, &cfg).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn identical_parameters_update_identically() {
        let mut net =
            MdnNetwork::zeros(NetworkShape::new(2, vec![2], 1), Normalization::identity(2)).unwrap();
        net.hidden[0].weights = vec![0.5, 0.5, -0.2, 0.1];
        let mut grads = NetworkGrads::zeros_like(&net);
        grads.hidden[0].weights = vec![0.3, 0.3, 0.0, 0.0];
        let cfg = TrainConfig::default();
        let mut state = OptimizerState::new(&net);
        for _ in 0..3 {
            adamw_step(&mut net, &mut state, &grads, &cfg).unwrap();
        }
        assert_eq!(net.hidden[0].weights[0], net.hidden[0].weights[1]);
        assert!(net.hidden[0].weights[0] < 0.5);
    }
}
