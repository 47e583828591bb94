//! Minimum-separation filter standing in for barrier certificates.
//!
//! Motion is treated as a straight segment over the step, so robots cannot
//! tunnel through each other. For any pair whose closest approach during the
//! step would fall below the separation radius, both displacements are scaled
//! by the largest common factor in `[0, 1]` that keeps them apart. Sweeps
//! repeat until no pair violates; if sweeps run out, offending robots are
//! frozen in place.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    pub min_separation: f64,
    pub bisection_iterations: usize,
    pub max_sweeps: usize,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            min_separation: 0.17,
            bisection_iterations: 20,
            max_sweeps: 10,
        }
    }
}

/// Smallest distance between two robots when both travel the fraction
/// `scale ∈ [0, 1]` of their displacements.
fn closest_approach(pi: [f64; 2], pj: [f64; 2], di: [f64; 2], dj: [f64; 2], scale: f64) -> f64 {
    let dp = [pi[0] - pj[0], pi[1] - pj[1]];
    let dd = [di[0] - dj[0], di[1] - dj[1]];
    let dd2 = dd[0] * dd[0] + dd[1] * dd[1];
    let u = if dd2 > 0.0 {
        (-(dp[0] * dd[0] + dp[1] * dd[1]) / dd2).clamp(0.0, scale)
    } else {
        0.0
    };
    (dp[0] + u * dd[0]).hypot(dp[1] + u * dd[1])
}

fn scaled(d: [f64; 2], s: f64) -> [f64; 2] {
    [d[0] * s, d[1] * s]
}

fn is_moving(d: [f64; 2]) -> bool {
    d[0] != 0.0 || d[1] != 0.0
}

fn violates(p: &[[f64; 2]], d: &[[f64; 2]], i: usize, j: usize, sep: f64) -> bool {
    (is_moving(d[i]) || is_moving(d[j])) && closest_approach(p[i], p[j], d[i], d[j], 1.0) < sep
}

/// Adjusts `proposed` displacements so no pair comes closer than
/// `params.min_separation` during the step.
///
/// Positions are expected to satisfy the separation already; a pair that
/// starts too close is simply frozen.
pub fn safety_filter(positions: &[[f64; 2]], proposed: &[[f64; 2]], params: &SafetyParams) -> Vec<[f64; 2]> {
    let n = positions.len();
    let sep = params.min_separation;
    let mut disp = proposed.to_vec();

    for _ in 0..params.max_sweeps {
        let mut changed = false;
        for i in 0..n {
            for j in i + 1..n {
                if !violates(positions, &disp, i, j, sep) {
                    continue;
                }
                let (pi, pj, di, dj) = (positions[i], positions[j], disp[i], disp[j]);
                let mut lo = 0.0;
                let mut hi = 1.0;
                if closest_approach(pi, pj, di, dj, 0.0) < sep {
                    hi = 0.0;
                }
                for _ in 0..params.bisection_iterations {
                    if hi <= lo {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if closest_approach(pi, pj, di, dj, mid) >= sep {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                disp[i] = scaled(di, lo);
                disp[j] = scaled(dj, lo);
                changed = true;
            }
        }
        if !changed {
            return disp;
        }
    }

    // Sweeps exhausted: freeze anything still in conflict.
    loop {
        let mut frozen = false;
        for i in 0..n {
            for j in i + 1..n {
                if violates(positions, &disp, i, j, sep) {
                    disp[i] = [0.0, 0.0];
                    disp[j] = [0.0, 0.0];
                    frozen = true;
                }
            }
        }
        if !frozen {
            return disp;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::distance;

    #[test]
    fn far_apart_unchanged() {
        let p = [[0.0, 0.0], [1.0, 0.0]];
        let d = [[0.19, 0.0], [0.0, 0.19]];
        assert_eq!(safety_filter(&p, &d, &SafetyParams::default()), d.to_vec());
    }

    #[test]
    fn head_on_pair_is_slowed() {
        let p = [[0.0, 0.0], [0.2, 0.0]];
        let d = [[0.19, 0.0], [-0.19, 0.0]];
        let out = safety_filter(&p, &d, &SafetyParams::default());
        assert!(out[0][0] > 0.0 && out[0][0] < 0.19);
        assert_eq!(out[0][0], -out[1][0]);
        let after = [
            [p[0][0] + out[0][0], p[0][1] + out[0][1]],
            [p[1][0] + out[1][0], p[1][1] + out[1][1]],
        ];
        assert!(distance(after[0], after[1]) >= 0.17);
        // analytic limit: 0.2 − 0.38 s = 0.17
        assert!((out[0][0] / 0.19 - 0.03 / 0.38).abs() < 1e-5);
    }

    #[test]
    fn no_tunnelling_through_a_stationary_robot() {
        // endpoint would be 0.19 m past the obstacle, but the path crosses it
        let p = [[0.0, 0.0], [0.18, 0.0]];
        let d = [[0.0, 0.0], [-0.19, 0.0]];
        let out = safety_filter(&p, &d, &SafetyParams::default());
        assert!(0.18 + out[1][0] >= 0.17 - 1e-12);
    }
}
