use rand::Rng;
use tensorcore::{RngStream, Scalar, Tensor};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    /// Sample from the softmax distribution (training).
    Soft,
    /// Argmax, lowest index on ties (evaluation).
    Hard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub actions: Vec<usize>,
    /// Log-probability of each chosen action; only for soft selection.
    pub log_probs: Option<Vec<f64>>,
}

/// Row-wise log-softmax in `f64`.
pub fn log_softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    let (rows, _) = logits
        .dims2()
        .ok_or_else(|| Error::NonFinite(format!("logits must be a matrix, got {:?}", logits.shape())))?;
    (0..rows)
        .map(|r| {
            let row: Vec<f64> = logits.row(r).iter().map(|v| v.to_f64_lossy()).collect();
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("logits of robot {r}: {row:?}")));
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            Ok(row.iter().map(|v| v - lse).collect())
        })
        .collect()
}

/// Entropy of a distribution given by its log-probabilities.
pub fn entropy(log_probs: &[f64]) -> f64 {
    -log_probs.iter().map(|l| l.exp() * l).sum::<f64>()
}

pub fn action_select<T: Scalar>(logits: &Tensor<T>, mode: SelectMode, rng: &mut RngStream) -> Result<Selection> {
    let logp = log_softmax_rows(logits)?;
    match mode {
        SelectMode::Hard => Ok(Selection {
            actions: logp
                .iter()
                .map(|row| {
                    let mut best = 0;
                    for (a, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = a;
                        }
                    }
                    best
                })
                .collect(),
            log_probs: None,
        }),
        SelectMode::Soft => {
            let mut actions = Vec::with_capacity(logp.len());
            let mut log_probs = Vec::with_capacity(logp.len());
            for row in &logp {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut choice = row.len() - 1;
                for (a, l) in row.iter().enumerate() {
                    acc += l.exp();
                    if u < acc {
                        choice = a;
                        break;
                    }
                }
                actions.push(choice);
                log_probs.push(row[choice]);
            }
            Ok(Selection {
                actions,
                log_probs: Some(log_probs),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[[f64; 5]]) -> Tensor<f64> {
        Tensor::matrix(rows.len(), 5, rows.concat()).unwrap()
    }

    #[test]
    fn hard_selection_and_ties() {
        let mut rng = RngStream::from_seed(0);
        let s = action_select(
            &logits(&[
                [10.0, 0.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 3.0],
            ]),
            SelectMode::Hard,
            &mut rng,
        )
        .unwrap();
        assert_eq!(s.actions, vec![0, 0, 4]);
        assert!(s.log_probs.is_none());
    }

    #[test]
    fn uniform_soft_frequencies() {
        let mut rng = RngStream::from_seed(42);
        let l = logits(&[[0.0; 5]]);
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            counts[action_select(&l, SelectMode::Soft, &mut rng).unwrap().actions[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn soft_log_prob_matches_softmax() {
        let mut rng = RngStream::from_seed(1);
        let raw = [0.3, -1.2, 2.0, 0.0, 0.7];
        let l = logits(&[raw]);
        let z: f64 = raw.iter().map(|v| v.exp()).sum();
        for _ in 0..100 {
            let s = action_select(&l, SelectMode::Soft, &mut rng).unwrap();
            let a = s.actions[0];
            assert!((s.log_probs.unwrap()[0].exp() - raw[a].exp() / z).abs() < 1e-6);
        }
    }

    #[test]
    fn nan_logits_are_rejected() {
        let l = logits(&[[0.0, f64::NAN, 0.0, 0.0, 0.0]]);
        assert!(action_select(&l, SelectMode::Hard, &mut RngStream::from_seed(0)).is_err());
    }

    #[test]
    fn uniform_entropy_is_ln5() {
        let lp = vec![(0.2f64).ln(); 5];
        assert!((entropy(&lp) - 5f64.ln()).abs() < 1e-12);
    }
}
