#![allow(dead_code)]

use capteam::envs::{EnvKind, RobotSpec, TeamSpec};
use capteam::nets::GraphBatch;
use rand::Rng;
use tensorcore::RngStream;

pub fn random_team(kind: EnvKind, n: usize, rng: &mut RngStream) -> TeamSpec {
    let robots = (0..n)
        .map(|i| {
            let cap = match kind {
                EnvKind::Hmt => vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                EnvKind::Hsn => vec![rng.gen_range(0.2..0.6)],
            };
            RobotSpec::new(cap, Some((i * 7 + 3) % 20))
        })
        .collect();
    TeamSpec::new("random", robots)
}

pub fn random_batch(kind: EnvKind, n: usize, rng: &mut RngStream) -> (TeamSpec, GraphBatch) {
    let team = random_team(kind, n, rng);
    let obs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..kind.base_obs_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let batch = GraphBatch::for_team(&team, &obs).unwrap();
    (team, batch)
}

/// Applies `perm` (new row i = old row perm[i]) to a team's inputs.
pub fn permuted_batch(team: &TeamSpec, batch: &GraphBatch, perm: &[usize]) -> GraphBatch {
    let obs: Vec<Vec<f64>> = perm.iter().map(|&i| batch.observation(i).to_vec()).collect();
    let robots = perm.iter().map(|&i| team.robots[i].clone()).collect();
    GraphBatch::for_team(&TeamSpec::new("perm", robots), &obs).unwrap()
}
