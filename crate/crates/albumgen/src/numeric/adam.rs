//! Adam with bias correction, preceded by global-norm gradient clipping.

use super::tensor::Tensor;
use super::NumericError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Maximum global L2 norm of the gradient; larger gradients are rescaled.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

/// First/second moment accumulators, aligned index-for-index with the
/// parameter tensor list they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        AdamState {
            config,
            t: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }
}

/// Scale all gradients by clip_norm/‖g‖ when the global L2 norm exceeds
/// clip_norm. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], clip_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x * x)
        .sum();
    let norm = sq.sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// One clipped, bias-corrected Adam step over a parameter list.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &mut [Tensor],
    state: &mut AdamState,
) -> Result<(), NumericError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NumericError::ShapeMismatch {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len(), state.m.len()],
        });
    }
    for i in 0..params.len() {
        if params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape() {
            return Err(NumericError::ShapeMismatch {
                op: "adam_step",
                lhs: params[i].shape().to_vec(),
                rhs: grads[i].shape().to_vec(),
            });
        }
    }

    clip_global_norm(grads, state.config.clip_norm);

    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps, .. } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);

    for i in 0..params.len() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = grads[i].data();
        let p = params[i].data_mut();
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(shape: &[usize]) -> (Tensor, AdamState) {
        let params = Tensor::filled(shape, 0.5);
        let state = AdamState::new(AdamConfig::default(), &[shape]);
        (params, state)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut p, mut st) = setup(&[2, 2]);
        let before = p.clone();
        let mut grads = vec![Tensor::zeros(&[2, 2])];
        adam_step(&mut [&mut p], &mut grads, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        let (mut p, mut st) = setup(&[1, 4]);
        let before = p.clone();
        let mut grads =
            vec![Tensor::from_vec(&[1, 4], vec![0.3, -0.2, 0.1, 0.05]).unwrap()];
        adam_step(&mut [&mut p], &mut grads, &mut st).unwrap();
        for (a, b) in p.data().iter().zip(before.data()) {
            let step = (a - b).abs();
            // bias-corrected first step is lr * g/(|g| + eps') per coordinate
            assert!((step - st.config.lr).abs() < 1e-6, "step {step}");
        }
    }

    #[test]
    fn clipping_scales_by_norm_ratio() {
        // single gradient of norm 10 against clip 1.0
        let mut grads = vec![Tensor::from_vec(&[1, 2], vec![6.0, 8.0]).unwrap()];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 10.0).abs() < 1e-12);
        assert!((grads[0].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads[0].data()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_clip_below_threshold() {
        let mut grads = vec![Tensor::from_vec(&[1, 2], vec![0.3, 0.4]).unwrap()];
        clip_global_norm(&mut grads, 1.0);
        assert_eq!(grads[0].data(), &[0.3, 0.4]);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let (mut p, mut st) = setup(&[2, 2]);
        let mut grads = vec![Tensor::zeros(&[2, 3])];
        assert!(adam_step(&mut [&mut p], &mut grads, &mut st).is_err());
    }
}
