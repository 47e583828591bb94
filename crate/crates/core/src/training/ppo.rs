use tensorcore::{Scalar, Tensor, Var};

use crate::envs::NUM_ACTIONS;
use crate::error::Result;

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

pub struct PolicyLoss<'t, T: Scalar> {
    /// `−mean(surrogate) − entropy_coef · mean(entropy)`
    pub loss: Var<'t, T>,
    pub surrogate: f64,
    pub entropy: f64,
}

/// PPO actor loss over rows of `logits` (one row per robot-step).
pub fn policy_loss<'t, T: Scalar>(
    logits: Var<'t, T>,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> Result<PolicyLoss<'t, T>> {
    let tape = logits.tape();
    let rows = actions.len();
    let mut mask = vec![0.0; rows * NUM_ACTIONS];
    for (r, &a) in actions.iter().enumerate() {
        mask[r * NUM_ACTIONS + a] = 1.0;
    }
    let mask = tape.constant(Tensor::from_f64(vec![rows, NUM_ACTIONS], &mask)?);
    let old = tape.constant(Tensor::from_f64(vec![rows], old_log_probs)?);
    let adv = tape.constant(Tensor::from_f64(vec![rows], advantages)?);

    let log_p = logits.log_softmax();
    let chosen = log_p.mul(mask)?.sum_rows();
    let ratio = chosen.sub(old)?.exp();
    let unclipped = ratio.mul(adv)?;
    let lo = T::from_f64_lossy(1.0 - clip);
    let hi = T::from_f64_lossy(1.0 + clip);
    let clipped = ratio.clamp(lo, hi).mul(adv)?;
    let surrogate = unclipped.minimum(clipped)?.mean();
    let entropy = logits.softmax().mul(log_p)?.sum_rows().mean().neg();
    let loss = surrogate.neg().sub(entropy.scale(T::from_f64_lossy(entropy_coef)))?;
    Ok(PolicyLoss {
        loss,
        surrogate: surrogate.item().to_f64_lossy(),
        entropy: entropy.item().to_f64_lossy(),
    })
}

/// `mean((V − G)²)`
pub fn value_loss<'t, T: Scalar>(values: Var<'t, T>, returns: &[f64]) -> Result<Var<'t, T>> {
    let g = values.tape().constant(Tensor::from_f64(vec![returns.len()], returns)?);
    let diff = values.sub(g)?;
    Ok(diff.mul(diff)?.mean())
}
