//! Central finite-difference verification of tape gradients.

use crate::error::{Result, TensorError};
use crate::params::{Bound, ParamSet};
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over elements of |analytic − numeric| / max(|analytic|, |numeric|, 1e-8)
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Elements left out of the maximum because the perturbation crossed a
    /// non-differentiable point (e.g. a ReLU switching). See [`is_kink`].
    pub kinks: usize,
}

/// Relative disagreement of forward and backward one-sided differences above
/// which an element is treated as straddling a kink.
pub const KINK_RATIO: f64 = 0.1;

/// Smallest one-sided disagreement for which the one-sided-match test of
/// [`is_kink`] is applied.
pub const KINK_MIN_RATIO: f64 = 1e-3;

/// Whether a non-differentiable point lies inside `[x − h, x + h]`, judged
/// from the analytic slope `a` and the one-sided differences.
///
/// Either the one-sided slopes disagree by more than [`KINK_RATIO`], or they
/// disagree noticeably and `a` matches one of them far better than the
/// midpoint. A smooth function puts `a` halfway between them (their gap is
/// `h·f''`); a kink on one side leaves the other side's slope equal to `a`.
pub fn is_kink(a: f64, fwd: f64, bwd: f64) -> bool {
    let gap = (fwd - bwd).abs();
    let scale = fwd.abs().max(bwd.abs()).max(1e-8);
    if gap > KINK_RATIO * scale {
        return true;
    }
    gap > KINK_MIN_RATIO * scale && (a - fwd).abs().min((a - bwd).abs()) < 0.1 * gap
}

/// Compares tape gradients of `loss_fn` against central differences with
/// half-width `step`, over every scalar element of `params`.
///
/// The numeric side only evaluates forward values on fresh tapes, so it does
/// not depend on any backward rule. Elements whose perturbation crosses a
/// kink are counted in [`GradCheckReport::kinks`] instead of the maximum.
pub fn finite_diff_check<F>(params: &ParamSet<f64>, step: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &Bound<'t, f64>) -> Result<Var<'t, f64>>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(TensorError::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let eval = |ps: &ParamSet<f64>| -> Result<f64> {
        let tape = Tape::new();
        let bound = ps.bind_frozen(&tape);
        let loss = loss_fn(&tape, &bound)?;
        let v = loss.item();
        if !v.is_finite() {
            return Err(TensorError::NonFiniteLoss(v));
        }
        Ok(v)
    };

    let analytic: Vec<f64> = {
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let loss = loss_fn(&tape, &bound)?;
        if !loss.item().is_finite() {
            return Err(TensorError::NonFiniteLoss(loss.item()));
        }
        tape.backward(loss)?;
        bound.grads().into_iter().flat_map(|g| g.into_data()).collect()
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        kinks: 0,
    };
    let base = eval(params)?;
    let mut work = params.clone();
    let mut flat = 0;
    for (name, t) in params.iter() {
        for j in 0..t.len() {
            let orig = t.data()[j];
            *work.element_mut(flat) = orig + step;
            let up = eval(&work)?;
            *work.element_mut(flat) = orig - step;
            let down = eval(&work)?;
            *work.element_mut(flat) = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic[flat];
            let (fwd, bwd) = ((up - base) / step, (base - down) / step);
            if is_kink(a, fwd, bwd) {
                report.kinks += 1;
                flat += 1;
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_parameter = name.to_string();
                report.worst_index = j;
                report.analytic = a;
                report.numeric = numeric;
            }
            report.checked += 1;
            flat += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_half_norm() {
        let mut ps = ParamSet::new();
        let x = ps.push("x", Tensor::vector(vec![3.0, 4.0]));
        let report = finite_diff_check(&ps, 1e-5, |_, b| Ok(b[x].mul(b[x])?.sum().scale(0.5))).unwrap();
        assert!(report.max_relative_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 2);

        let tape = Tape::new();
        let bound = ps.bind(&tape);
        let loss = bound[x].mul(bound[x]).unwrap().sum().scale(0.5);
        tape.backward(loss).unwrap();
        assert_eq!(bound.grads()[0].data(), &[3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_step_and_nonfinite_loss() {
        let mut ps = ParamSet::new();
        let x = ps.push("x", Tensor::vector(vec![-1.0]));
        assert!(finite_diff_check(&ps, 0.0, |_, b| Ok(b[x].sum())).is_err());
        let err = finite_diff_check(&ps, 1e-5, |_, b| Ok(b[x].log().sum())).unwrap_err();
        assert!(matches!(err, TensorError::NonFiniteLoss(_)));
    }

    #[test]
    fn relu_kink_is_flagged_not_compared() {
        let mut ps = ParamSet::new();
        let x = ps.push("x", Tensor::vector(vec![1e-7, 2.0]));
        let report = finite_diff_check(&ps, 1e-5, |_, b| Ok(b[x].relu().sum())).unwrap();
        assert_eq!(report.kinks, 1);
        assert_eq!(report.checked, 1);
        assert!(report.max_relative_error < 1e-9);
    }

    #[test]
    fn kink_signatures() {
        // smooth: a halfway between the one-sided slopes
        assert!(!is_kink(1.0, 1.01, 0.99));
        // slope change near the edge of the stencil
        assert!(is_kink(-0.0576, -0.0627, -0.0576));
        // large disagreement
        assert!(is_kink(0.0, 1.0, 0.0));
        // a wrong gradient is not mistaken for a kink
        assert!(!is_kink(2.0, 1.0, 1.0));
    }
}
