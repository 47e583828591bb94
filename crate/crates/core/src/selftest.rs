//! Oracle suites shared by the `selftest` subcommand and the acceptance run.
//!
//! Each check recomputes its quantity from the formula, independently of the
//! environment code, and compares.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use tensorcore::{finite_diff_check, ParamSet, RngStream, Tape, Tensor, Var};

use crate::envs::geometry::pairwise_overlap;
use crate::envs::hmt::{HmtConfig, HmtEnv, HmtEvent};
use crate::envs::hsn::{HsnConfig, HsnEnv, HsnState};
use crate::envs::{EnvKind, EnvSettings, Environment, RobotSpec, StepInfo, TeamSpec, NUM_ACTIONS};
use crate::error::Result;
use crate::eval::{teams_for, EvalAxis};
use crate::nets::{CriticNet, GraphBatch, PolicyNet, PolicyVariant};
use crate::training::{compute_advantages, make_training_teams, RolloutBuffer, TrainConfig, Trainer, Transition};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn random_team(kind: EnvKind, n: usize, rng: &mut RngStream) -> TeamSpec {
    let robots = (0..n)
        .map(|i| {
            let cap = match kind {
                EnvKind::Hmt => vec![rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)],
                EnvKind::Hsn => vec![rng.gen_range(0.2..=0.6)],
            };
            RobotSpec::new(cap, Some(i % 20))
        })
        .collect();
    TeamSpec::new("random", robots)
}

fn random_batch(kind: EnvKind, n: usize, rng: &mut RngStream) -> (TeamSpec, GraphBatch) {
    let team = random_team(kind, n, rng);
    let obs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..kind.base_obs_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let batch = GraphBatch::for_team(&team, &obs).expect("valid random batch");
    (team, batch)
}

fn readout<'t>(tape: &'t Tape<f64>, out: Var<'t, f64>, w: &[f64]) -> tensorcore::Result<Var<'t, f64>> {
    let shape = out.shape();
    let w = tape.constant(Tensor::new(shape.to_vec(), w.to_vec())?);
    Ok(out.mul(w)?.sum())
}

/// Finite differences for every variant on both environments and for the
/// critic, on 3-robot inputs in f64.
pub fn gradients(seed: u64) -> Result<Check> {
    const TOL: f64 = 1e-4;
    let mut rng = RngStream::from_seed(seed);
    let mut worst = (0.0f64, String::new());
    let (mut checked, mut kinks) = (0, 0);
    let mut note = |label: String, r: &tensorcore::GradCheckReport| {
        checked += r.checked;
        kinks += r.kinks;
        if r.max_relative_error >= worst.0 {
            worst = (r.max_relative_error, label);
        }
    };
    for kind in [EnvKind::Hmt, EnvKind::Hsn] {
        for variant in PolicyVariant::ALL {
            let (_, batch) = random_batch(kind, 3, &mut rng);
            let (net, params) = PolicyNet::init::<f64>(variant, kind, &mut rng);
            let w: Vec<f64> = (0..3 * NUM_ACTIONS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = finite_diff_check(&params, 1e-5, |tape, p| readout(tape, net.logits(p, &batch)?, &w))?;
            note(format!("{kind} {variant}"), &r);
        }
        for variant in PolicyVariant::ALL {
            let parts: Vec<GraphBatch> = (0..2).map(|_| random_batch(kind, 3, &mut rng).1).collect();
            let batch = GraphBatch::stack(&parts)?;
            let (critic, params) = CriticNet::init::<f64>(variant, kind, 3, &mut rng);
            let w: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = finite_diff_check(&params, 1e-5, |tape, p| readout(tape, critic.values(p, &batch)?, &w))?;
            note(format!("{kind} {variant} critic"), &r);
        }
    }
    let passed = worst.0 < TOL && kinks * 1000 < checked;
    Ok(Check::new(
        "gradients",
        passed,
        format!(
            "max rel err {:.2e} ({}) < {TOL:.0e}; {kinks} kinks of {checked} elements",
            worst.0, worst.1
        ),
    ))
}

fn logits_of(net: &PolicyNet, params: &ParamSet<f64>, batch: &GraphBatch) -> Result<Tensor<f64>> {
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let out = net.logits(&p, batch)?.value().clone();
    Ok(out)
}

/// Relabeling robots permutes GNN outputs the same way.
pub fn permutation_equivariance(pairs: usize, seed: u64) -> Result<Check> {
    const TOL: f64 = 1e-6;
    let mut rng = RngStream::from_seed(seed);
    let mut max_dev = 0.0f64;
    for variant in PolicyVariant::ALL.into_iter().filter(|v| v.is_gnn()) {
        let nets = [EnvKind::Hmt, EnvKind::Hsn].map(|kind| (kind, PolicyNet::init::<f64>(variant, kind, &mut rng)));
        for k in 0..pairs {
            let (kind, (net, params)) = &nets[k % 2];
            let n = 2 + k % 7;
            let (team, batch) = random_batch(*kind, n, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let obs: Vec<Vec<f64>> = perm.iter().map(|&i| batch.observation(i).to_vec()).collect();
            let robots = perm.iter().map(|&i| team.robots[i].clone()).collect();
            let permuted = GraphBatch::for_team(&TeamSpec::new("perm", robots), &obs)?;
            let a = logits_of(net, params, &batch)?;
            let b = logits_of(net, params, &permuted)?;
            for (new, &old) in perm.iter().enumerate() {
                for (x, y) in a.row(old).iter().zip(b.row(new)) {
                    max_dev = max_dev.max((x - y).abs());
                }
            }
        }
    }
    Ok(Check::new(
        "permutation equivariance",
        max_dev < TOL,
        format!("{pairs} pairs per GNN variant, max abs deviation {max_dev:.2e} < {TOL:.0e}"),
    ))
}

/// Piecewise pair reward written out from the formula.
fn pair_reward_oracle(pi: [f64; 2], pj: [f64; 2], ci: f64, cj: f64) -> f64 {
    let d = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2)).sqrt() - (ci + cj);
    if d < 0.0 {
        -0.9 * d.abs() + 0.05
    } else {
        -1.1 * d.abs() - 0.05
    }
}

/// Sensor-network reward from the environment's step against the formula.
pub fn hsn_reward(states: usize, seed: u64) -> Result<Check> {
    const TOL: f64 = 1e-9;
    let mut rng = RngStream::from_seed(seed);
    let cfg = HsnConfig::default();
    let a = cfg.arena;
    let mut max_diff = 0.0f64;
    for _ in 0..states {
        let n = rng.gen_range(2..=8);
        let team = random_team(EnvKind::Hsn, n, &mut rng);
        let radii: Vec<f64> = team.robots.iter().map(|r| r.capability[0]).collect();
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(a.x_min..=a.x_max), rng.gen_range(a.y_min..=a.y_max)])
            .collect();
        let mut env = HsnEnv::new(team, cfg.clone())?;
        env.set_state(HsnState {
            positions: positions.clone(),
            step: 0,
        })?;
        // Stop for everyone: positions stay where they were put.
        let got = env.step(&vec![4; n])?.reward;
        let mut want = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                want += pair_reward_oracle(positions[i], positions[j], radii[i], radii[j]);
            }
        }
        max_diff = max_diff.max((got - want).abs());
    }
    let boundary = crate::envs::hsn::hsn_pair_reward([0.0, 0.0], [1.0, 0.0], 0.4, 0.6);
    Ok(Check::new(
        "hsn reward",
        max_diff < TOL && boundary == -0.05,
        format!("{states} states, max |step − formula| {max_diff:.2e} < {TOL:.0e}; touching disks give {boundary}"),
    ))
}

/// Half the time a uniform random action, otherwise a step towards the depot
/// of the robot's larger capacity when empty and towards the site when
/// loaded. Makes deliveries and surpluses common enough to test.
fn directed_action(env: &HmtEnv, i: usize, rng: &mut RngStream) -> usize {
    if rng.gen_bool(0.5) {
        return rng.gen_range(0..NUM_ACTIONS);
    }
    let s = env.state();
    let c = env.config();
    let cap = &env.team().robots[i].capability;
    let zone = if s.carried[i].iter().any(|&x| x > 0.0) {
        &c.construction_site
    } else if cap[0] >= cap[1] {
        &c.lumber_depot
    } else {
        &c.concrete_depot
    };
    let (p, t) = (s.positions[i], zone.center());
    let (dx, dy) = (t[0] - p[0], t[1] - p[1]);
    match (dx.abs() >= dy.abs(), dx < 0.0, dy > 0.0) {
        (true, true, _) => 0,
        (true, false, _) => 1,
        (false, _, true) => 2,
        (false, _, false) => 3,
    }
}

/// Material-transport returns rebuilt from the event log: 0.25 per pickup,
/// 0.75 per dropoff into an open quota, −0.10 per unit of surplus and
/// −0.005 per robot for every step that ends with the quota unfilled.
/// Runs `episodes` uniform-random episodes, then a quarter as many with
/// depot-seeking robots so that dropoffs and surpluses occur.
pub fn hmt_decomposition(episodes: usize, seed: u64) -> Result<Check> {
    const TOL: f64 = 1e-9;
    let mut rng = RngStream::from_seed(seed);
    let mut max_diff = 0.0f64;
    let (mut pickups, mut dropoffs, mut surpluses) = (0, 0, 0);
    let directed = (episodes / 4).max(1);
    for e in 0..episodes + directed {
        let n = 1 + e % 5;
        let team = random_team(EnvKind::Hmt, n, &mut rng);
        let mut env = HmtEnv::new(team, HmtConfig::default())?;
        env.reset(&mut rng)?;
        let (mut logged, mut rebuilt) = (0.0, 0.0);
        loop {
            let actions: Vec<usize> = if e < episodes {
                (0..n).map(|_| rng.gen_range(0..NUM_ACTIONS)).collect()
            } else {
                (0..n).map(|i| directed_action(&env, i, &mut rng)).collect()
            };
            let r = env.step(&actions)?;
            logged += r.reward;
            let StepInfo::Hmt {
                events, quota_filled, ..
            } = &r.info
            else {
                unreachable!("material transport emits material-transport info")
            };
            for ev in events {
                match *ev {
                    HmtEvent::Pickup { .. } => {
                        pickups += 1;
                        rebuilt += 0.25;
                    }
                    HmtEvent::Dropoff { rewarded, surplus, .. } => {
                        if rewarded {
                            dropoffs += 1;
                            rebuilt += 0.75;
                        }
                        if surplus > 0.0 {
                            surpluses += 1;
                        }
                        rebuilt -= 0.10 * surplus;
                    }
                    HmtEvent::TimePenalty { .. } => {}
                }
            }
            if !quota_filled {
                rebuilt -= 0.005 * n as f64;
            }
            if r.done {
                break;
            }
        }
        max_diff = max_diff.max((logged - rebuilt).abs());
    }
    Ok(Check::new(
        "hmt reward decomposition",
        max_diff < TOL,
        format!(
            "{episodes} random and {directed} depot-seeking episodes ({pickups} pickups, {dropoffs} paid dropoffs, \
             {surpluses} with surplus), max |logged − rebuilt| {max_diff:.2e} < {TOL:.0e}"
        ),
    ))
}

/// Monte-Carlo estimate of one pair's intersection area, sampling the
/// overlap of the two bounding boxes.
fn lens_monte_carlo(p: [f64; 2], q: [f64; 2], r1: f64, r2: f64, samples: usize, rng: &mut RngStream) -> f64 {
    let x0 = (p[0] - r1).max(q[0] - r2);
    let x1 = (p[0] + r1).min(q[0] + r2);
    let y0 = (p[1] - r1).max(q[1] - r2);
    let y1 = (p[1] + r1).min(q[1] + r2);
    if x0 >= x1 || y0 >= y1 {
        return 0.0;
    }
    let inside = |c: [f64; 2], x: f64, y: f64, r: f64| (x - c[0]).powi(2) + (y - c[1]).powi(2) <= r * r;
    let mut hits = 0usize;
    for _ in 0..samples {
        let x = rng.gen_range(x0..x1);
        let y = rng.gen_range(y0..y1);
        if inside(p, x, y, r1) && inside(q, x, y, r2) {
            hits += 1;
        }
    }
    (x1 - x0) * (y1 - y0) * hits as f64 / samples as f64
}

/// Summed pairwise overlap against Monte Carlo, plus the two closed-form
/// cases.
pub fn overlap_monte_carlo(configs: usize, samples: usize, seed: u64) -> Result<Check> {
    const REL_TOL: f64 = 0.01;
    let mut rng = RngStream::from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let n = rng.gen_range(2..=4);
        let radii: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..=0.6)).collect();
        // Clustered so that every configuration has some overlap.
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(-0.4..=0.4), rng.gen_range(-0.4..=0.4)])
            .collect();
        let exact = pairwise_overlap(&positions, &radii);
        let mut mc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                mc += lens_monte_carlo(positions[i], positions[j], radii[i], radii[j], samples, &mut rng);
            }
        }
        worst = worst.max((exact - mc).abs() / mc.max(1e-12));
    }
    let disjoint = pairwise_overlap(&[[0.0, 0.0], [1.0, 0.0]], &[0.3, 0.4]);
    let concentric = pairwise_overlap(&[[0.2, -0.1], [0.2, -0.1]], &[0.35, 0.35]);
    let exact_ok = disjoint == 0.0 && concentric == PI * 0.35 * 0.35;
    Ok(Check::new(
        "overlap",
        worst < REL_TOL && exact_ok,
        format!(
            "{configs} configurations, {samples} samples per pair, max rel err {worst:.2e} < {REL_TOL}; disjoint {disjoint}, concentric {concentric:.6} (πr² {:.6})",
            PI * 0.35 * 0.35
        ),
    ))
}

/// Random sensor-network play never brings two robots closer than the
/// safety distance.
pub fn safety(steps: usize, seed: u64) -> Result<Check> {
    const MIN: f64 = 0.17 - 1e-6;
    let mut rng = RngStream::from_seed(seed);
    let mut done = 0;
    let mut closest = f64::INFINITY;
    while done < steps {
        let n = rng.gen_range(2..=10);
        let mut env = HsnEnv::new(random_team(EnvKind::Hsn, n, &mut rng), HsnConfig::default())?;
        env.reset(&mut rng)?;
        for _ in 0..env.horizon() {
            let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..NUM_ACTIONS)).collect();
            env.step(&actions)?;
            let p = &env.state().positions;
            for i in 0..n {
                for j in i + 1..n {
                    closest = closest.min(((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt());
                }
            }
            done += 1;
        }
    }
    Ok(Check::new(
        "safety",
        closest >= MIN,
        format!("{done} random steps, closest pair {closest:.6} m ≥ {MIN:.6} m"),
    ))
}

/// Short training runs repeated with the same seed give identical logs and
/// checkpoint text, and team sampling repeats exactly.
pub fn determinism(steps: u64, seed: u64) -> Result<Check> {
    let run = || -> Result<(crate::training::TrainLog, String)> {
        let config = TrainConfig {
            total_env_steps: Some(steps),
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(
            EnvKind::Hsn,
            PolicyVariant::CaCcGnn,
            make_training_teams(EnvKind::Hsn),
            &EnvSettings::default(),
            config,
            seed,
        )?;
        t.run(|_| Ok(()))?;
        let out = t.into_outcome();
        Ok((out.log, out.model.to_checkpoint().to_text()))
    };
    let (log_a, ckpt_a) = run()?;
    let (log_b, ckpt_b) = run()?;
    let root = RngStream::from_seed(seed);
    let teams_a = teams_for(EnvKind::Hsn, EvalAxis::Composition, 4, 100, &root)?;
    let teams_b = teams_for(EnvKind::Hsn, EvalAxis::Composition, 4, 100, &root)?;
    let new_a = teams_for(EnvKind::Hmt, EvalAxis::NewRobots, 5, 100, &root)?;
    let new_b = teams_for(EnvKind::Hmt, EvalAxis::NewRobots, 5, 100, &root)?;
    let same_log = log_a == log_b;
    let same_ckpt = ckpt_a == ckpt_b;
    let same_teams = teams_a == teams_b && new_a == new_b;
    Ok(Check::new(
        "determinism",
        same_log && same_ckpt && same_teams,
        format!(
            "{steps}-step runs: log identical {same_log} ({} updates), checkpoint identical {same_ckpt} ({} bytes), 100-team samples identical {same_teams}",
            log_a.updates.len(),
            ckpt_a.len()
        ),
    ))
}

/// 5-step returns of a hand-built 8-step buffer with an episode ending at
/// index 3, against direct sums.
pub fn n_step_returns(gamma: f64) -> Result<Check> {
    let rewards = [1.0, -0.5, 2.0, 0.25, 4.0, -1.0, 0.5, 3.0];
    let dones = [false, false, false, true, false, false, false, false];
    let values = [0.5, 1.5, -2.0, 0.75, 1.0, -0.25, 2.5, 0.125];
    let bootstrap = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];
    let team = random_team(EnvKind::Hsn, 2, &mut RngStream::from_seed(0));
    let graph = GraphBatch::for_team(&team, &[vec![0.0, 0.0], vec![1.0, 0.0]])?;
    let transitions = (0..8)
        .map(|t| Transition {
            graph: graph.clone(),
            actions: vec![0, 0],
            log_probs: vec![0.0, 0.0],
            reward: rewards[t],
            value: values[t],
            done: dones[t],
            team: 0,
        })
        .collect();
    let buffer = RolloutBuffer {
        transitions,
        next_graph: graph,
    };
    let adv = compute_advantages(&buffer, &bootstrap, 5, gamma, false);

    // Written out per index: the episode ends at 3, the buffer at 8.
    let g = |k: i32| gamma.powi(k);
    let want = [
        rewards[0] + g(1) * rewards[1] + g(2) * rewards[2] + g(3) * rewards[3],
        rewards[1] + g(1) * rewards[2] + g(2) * rewards[3],
        rewards[2] + g(1) * rewards[3],
        rewards[3],
        rewards[4] + g(1) * rewards[5] + g(2) * rewards[6] + g(3) * rewards[7] + g(4) * bootstrap[8],
        rewards[5] + g(1) * rewards[6] + g(2) * rewards[7] + g(3) * bootstrap[8],
        rewards[6] + g(1) * rewards[7] + g(2) * bootstrap[8],
        rewards[7] + g(1) * bootstrap[8],
    ];
    let mut max_diff = 0.0f64;
    for t in 0..8 {
        max_diff = max_diff.max((adv.returns[t] - want[t]).abs());
        max_diff = max_diff.max((adv.raw[t] - (want[t] - values[t])).abs());
    }
    // Dyadic data with gamma = 1 is exact; otherwise allow summation-order
    // roundoff.
    let tol = if gamma == 1.0 { 0.0 } else { 1e-12 };
    Ok(Check::new(
        "n-step returns",
        max_diff <= tol,
        format!("8-step buffer, done at 3, gamma {gamma}: max |returns − direct sums| {max_diff:.2e} ≤ {tol:.0e}"),
    ))
}

/// The suites run by the `selftest` subcommand.
pub fn run_all(seed: u64) -> Vec<Result<Check>> {
    vec![
        gradients(seed),
        permutation_equivariance(100, seed),
        hsn_reward(1000, seed),
        hmt_decomposition(100, seed),
        overlap_monte_carlo(50, 1_000_000, seed),
        safety(10_000, seed),
        n_step_returns(1.0),
        n_step_returns(0.99),
        determinism(2_048, seed),
    ]
}
