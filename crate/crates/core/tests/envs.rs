use capteam::envs::hmt::{HmtConfig, HmtEnv, HmtEvent};
use capteam::envs::hsn::{HsnConfig, HsnEnv};
use capteam::envs::{Environment, RobotSpec, StepInfo, TeamSpec};
use capteam::selftest;
use proptest::prelude::*;
use tensorcore::RngStream;

fn pair_team() -> TeamSpec {
    TeamSpec::new(
        "pair",
        vec![
            RobotSpec::new(vec![1.0, 0.0], None),
            RobotSpec::new(vec![0.0, 1.0], None),
        ],
    )
}

/// Heads for the depot of its own material when empty, for the site when
/// loaded.
fn greedy(env: &HmtEnv) -> Vec<usize> {
    let s = env.state();
    (0..s.positions.len())
        .map(|i| {
            let p = s.positions[i];
            let loaded = s.carried[i].iter().any(|&c| c > 0.0);
            let target = if loaded {
                [0.8, 0.0]
            } else if env.team().robots[i].capability[0] > 0.0 {
                [-0.8, 0.6]
            } else {
                [-0.8, -0.6]
            };
            let (dx, dy) = (target[0] - p[0], target[1] - p[1]);
            if dx.abs() > 0.1 {
                if dx < 0.0 {
                    0
                } else {
                    1
                }
            } else if dy.abs() > 0.1 {
                if dy > 0.0 {
                    2
                } else {
                    3
                }
            } else {
                4
            }
        })
        .collect()
}

#[test]
fn scripted_team_fills_quota_and_rewards_add_up() {
    let config = HmtConfig {
        fixed_quota: Some([1, 1]),
        ..HmtConfig::default()
    };
    let mut env = HmtEnv::new(pair_team(), config).unwrap();
    let mut rng = RngStream::from_seed(3);
    for _ in 0..10 {
        env.reset(&mut rng).unwrap();
        let (mut total, mut rebuilt, mut steps) = (0.0, 0.0, 0);
        loop {
            let r = env.step(&greedy(&env)).unwrap();
            total += r.reward;
            steps += 1;
            let StepInfo::Hmt {
                events, quota_filled, ..
            } = r.info
            else {
                unreachable!()
            };
            let mut charged = false;
            for e in &events {
                rebuilt += match *e {
                    HmtEvent::Pickup { .. } => 0.25,
                    HmtEvent::Dropoff { rewarded, surplus, .. } => (if rewarded { 0.75 } else { 0.0 }) - 0.1 * surplus,
                    HmtEvent::TimePenalty { robots } => {
                        charged = true;
                        -0.005 * robots as f64
                    }
                };
            }
            assert_eq!(charged, !quota_filled);
            if r.done {
                assert!(quota_filled);
                break;
            }
        }
        assert!(steps < 100, "{steps}");
        assert!((total - rebuilt).abs() < 1e-12);
        // two pickups, two paid dropoffs, time penalty for every step but the last
        assert!((total - (2.0 - 0.01 * (steps - 1) as f64)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hmt_state_invariants_under_random_play(seed in 0u64..1000, n in 1usize..6) {
        let mut rng = RngStream::from_seed(seed);
        use rand::Rng;
        let robots = (0..n)
            .map(|_| RobotSpec::new(vec![rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)], None))
            .collect();
        let team = TeamSpec::new("t", robots);
        let config = HmtConfig::default();
        let arena = config.arena;
        let mut env = HmtEnv::new(team.clone(), config).unwrap();
        env.reset(&mut rng).unwrap();
        let mut delivered = [0.0; 2];
        loop {
            let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let r = env.step(&actions).unwrap();
            let s = env.state();
            for i in 0..n {
                prop_assert!(arena.contains(s.positions[i]));
                let c = s.carried[i];
                prop_assert!(c[0] <= team.robots[i].capability[0] && c[1] <= team.robots[i].capability[1]);
                prop_assert!(c[0] == 0.0 || c[1] == 0.0);
            }
            prop_assert!(s.delivered[0] >= delivered[0] && s.delivered[1] >= delivered[1]);
            delivered = s.delivered;
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn hsn_stays_in_arena_and_apart(seed in 0u64..1000, n in 2usize..9) {
        let mut rng = RngStream::from_seed(seed);
        use rand::Rng;
        let robots = (0..n).map(|_| RobotSpec::new(vec![rng.gen_range(0.2..=0.6)], None)).collect();
        let config = HsnConfig::default();
        let arena = config.arena;
        let mut env = HsnEnv::new(TeamSpec::new("t", robots), config).unwrap();
        env.reset(&mut rng).unwrap();
        for _ in 0..env.horizon() {
            let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let r = env.step(&actions).unwrap();
            let StepInfo::Hsn { min_distance, .. } = r.info else { unreachable!() };
            prop_assert!(min_distance >= 0.17 - 1e-6);
            for p in &env.state().positions {
                prop_assert!(arena.contains(*p));
            }
        }
    }
}

#[test]
fn oracle_suites_pass_at_reduced_size() {
    for check in [
        selftest::hsn_reward(200, 11),
        selftest::hmt_decomposition(20, 11),
        selftest::overlap_monte_carlo(5, 200_000, 11),
        selftest::safety(1_000, 11),
    ] {
        let check = check.unwrap();
        assert!(check.passed, "{}", check.line());
    }
}
