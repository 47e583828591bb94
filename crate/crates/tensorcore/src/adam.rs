//! Adam with bias correction.

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments for `params` with the usual (0.9, 0.999, 1e-8).
    pub fn new(params: &ParamSet<T>) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamSet<T>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            first_moment: zeros(),
            second_moment: zeros(),
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One Adam update of `params` in place.
///
/// Gradients are checked for non-finite values before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(TensorError::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(TensorError::ParameterMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        let id = ParamId(i);
        if g.shape() != params.get(id).shape() || state.first_moment[i].len() != g.len() {
            return Err(TensorError::ParameterMismatch(format!(
                "gradient for `{}` has shape {:?}",
                params.name(id),
                g.shape()
            )));
        }
        if !g.all_finite() {
            return Err(TensorError::NonFiniteGradient(params.name(id).to_string()));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::from_f64_lossy(1.0 - b1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - b2.powi(t));
    let (b1, b2) = (T::from_f64_lossy(b1), T::from_f64_lossy(b2));
    let (one, lr, eps) = (T::one(), T::from_f64_lossy(lr), T::from_f64_lossy(state.epsilon));

    for (i, g) in grads.iter().enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        let p = params.tensor_data_mut(ParamId(i));
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x.to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = T::from_f64_lossy(max_norm / norm);
        for g in grads.iter_mut() {
            *g = g.map(|x| x * k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.push("p", Tensor::scalar(p));
        ps
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g and v̂ = g² after one step, so Δp = -lr·g/(|g| + ε).
        let mut ps = single(1.0);
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &[Tensor::scalar(1.0)], &mut st, 0.1).unwrap();
        assert!((ps.get(ParamId(0)).item() - 0.9).abs() < 1e-7);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut ps = single(2.0);
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &[Tensor::scalar(1.0)], &mut st, 0.1).unwrap();
        let before = ps.clone();
        let (m0, v0) = (st.first_moment[0][0], st.second_moment[0][0]);
        let mut zero_ps = before.clone();
        let mut zero_st = AdamState::new(&zero_ps);
        adam_step(&mut zero_ps, &[Tensor::scalar(0.0)], &mut zero_st, 0.1).unwrap();
        assert_eq!(zero_ps, before);
        adam_step(&mut ps, &[Tensor::scalar(0.0)], &mut st, 0.1).unwrap();
        assert!(st.first_moment[0][0].abs() < m0.abs());
        assert!(st.second_moment[0][0] < v0);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut ps = single(0.0);
        let mut st = AdamState::new(&ps);
        for _ in 0..50 {
            adam_step(&mut ps, &[Tensor::scalar(-3.0)], &mut st, 0.01).unwrap();
        }
        assert!(ps.get(ParamId(0)).item() > 0.4);
        assert_eq!(st.step_count, 50);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut ps = single(1.0);
        let mut st = AdamState::new(&ps);
        let err = adam_step(&mut ps, &[Tensor::scalar(f64::NAN)], &mut st, 0.1).unwrap_err();
        assert!(err.to_string().contains("`p`"));
        assert_eq!(st.step_count, 0);
        assert_eq!(ps.get(ParamId(0)).item(), 1.0);
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut g: Vec<Tensor<f64>> = vec![Tensor::vector(vec![3.0, 0.0]), Tensor::scalar(4.0)];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].data(), &[3.0, 0.0]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-12 && (g[1].item() - 0.8).abs() < 1e-12);
    }
}
