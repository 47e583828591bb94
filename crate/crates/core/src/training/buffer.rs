use crate::nets::GraphBatch;

/// One environment step of the whole team.
#[derive(Clone, Debug)]
pub struct Transition {
    /// Inputs the actors saw, one graph for the team.
    pub graph: GraphBatch,
    pub actions: Vec<usize>,
    /// Log-probability of each robot's action under the acting policy.
    pub log_probs: Vec<f64>,
    pub reward: f64,
    /// Centralized value of the state the actions were taken in.
    pub value: f64,
    pub done: bool,
    pub team: usize,
}

/// Fixed-length store of consecutive transitions plus the state that
/// follows the last one.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// State after the final transition, used to bootstrap truncated returns.
    pub next_graph: GraphBatch,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn dones(&self) -> Vec<bool> {
        self.transitions.iter().map(|t| t.done).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.value).collect()
    }

    /// Every state graph in order, followed by `next_graph`.
    pub fn state_graphs(&self) -> Vec<GraphBatch> {
        self.transitions
            .iter()
            .map(|t| t.graph.clone())
            .chain(std::iter::once(self.next_graph.clone()))
            .collect()
    }
}

/// Bootstrapped `n`-step returns.
///
/// `bootstrap[t]` is the value of the state at index `t`; it must have one
/// more entry than `rewards`, the last being the state after the buffer.
/// Sums stop at the first `done` (no bootstrap across an episode boundary)
/// and at the end of the buffer (bootstrap from `bootstrap[len]`).
pub fn n_step_returns(rewards: &[f64], dones: &[bool], bootstrap: &[f64], n: usize, gamma: f64) -> Vec<f64> {
    let len = rewards.len();
    assert_eq!(dones.len(), len);
    assert_eq!(bootstrap.len(), len + 1);
    assert!(n >= 1);
    (0..len)
        .map(|t| {
            let mut g = 0.0;
            let mut discount = 1.0;
            let mut k = t;
            loop {
                g += discount * rewards[k];
                discount *= gamma;
                if dones[k] {
                    break g;
                }
                k += 1;
                if k == t + n || k == len {
                    break g + discount * bootstrap[k];
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub returns: Vec<f64>,
    /// `returns − values`, before normalization.
    pub raw: Vec<f64>,
    /// What the policy update uses: `raw`, optionally normalized to zero mean
    /// and unit variance.
    pub advantages: Vec<f64>,
}

pub fn compute_advantages(
    buffer: &RolloutBuffer,
    bootstrap: &[f64],
    n: usize,
    gamma: f64,
    normalize: bool,
) -> Advantages {
    let returns = n_step_returns(&buffer.rewards(), &buffer.dones(), bootstrap, n, gamma);
    let raw: Vec<f64> = returns.iter().zip(buffer.values()).map(|(g, v)| g - v).collect();
    let advantages = if normalize { normalized(&raw) } else { raw.clone() };
    Advantages {
        returns,
        raw,
        advantages,
    }
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rewards_zero_values_zero_advantage() {
        let g = n_step_returns(&[0.0; 6], &[false; 6], &[0.0; 7], 5, 1.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_episode() {
        assert_eq!(n_step_returns(&[1.0], &[true], &[0.0, 9.0], 5, 1.0), vec![1.0]);
    }

    #[test]
    fn truncates_at_buffer_end_with_bootstrap() {
        let g = n_step_returns(&[1.0, 2.0], &[false, false], &[0.0, 0.0, 10.0], 5, 1.0);
        assert_eq!(g, vec![13.0, 12.0]);
    }

    #[test]
    fn normalization_is_zero_mean_unit_variance() {
        let z = normalized(&[1.0, 2.0, 3.0, 6.0]);
        let mean = z.iter().sum::<f64>() / 4.0;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }
}
