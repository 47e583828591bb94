use capteam::envs::{EnvKind, EnvSettings, RobotSpec, TeamSpec};
use capteam::nets::{log_softmax_rows, PolicyVariant};
use capteam::training::{make_training_teams, n_step_returns, train, TrainConfig, Trainer};
use capteam::{selftest, Error};
use proptest::prelude::*;
use tensorcore::Tape;

fn short(steps: u64) -> TrainConfig {
    TrainConfig {
        total_env_steps: Some(steps),
        ..TrainConfig::default()
    }
}

#[test]
fn rollout_records_match_policy_and_episode_ends() {
    let teams = make_training_teams(EnvKind::Hsn);
    let mut trainer = Trainer::new(
        EnvKind::Hsn,
        PolicyVariant::CaCcGnn,
        teams,
        &EnvSettings::default(),
        TrainConfig::default(),
        4,
    )
    .unwrap();
    let buffer = trainer.collect_rollout().unwrap();
    assert_eq!(buffer.len(), 64);

    let model = trainer.model();
    let tape = Tape::new();
    let p = model.policy_params.bind_frozen(&tape);
    for (t, tr) in buffer.transitions.iter().enumerate() {
        let logp = log_softmax_rows(&model.policy.logits(&p, &tr.graph).unwrap().value()).unwrap();
        assert_eq!(tr.actions.len(), 4);
        for (i, &a) in tr.actions.iter().enumerate() {
            assert!((tr.log_probs[i] - logp[i][a]).abs() < 1e-12);
        }
        // the horizon is 60 steps, so only the 60th transition ends an episode
        assert_eq!(tr.done, t == 59, "step {t}");
        assert_eq!(tr.team, 0);
    }
    assert_eq!(trainer.env_steps(), 64);
}

#[test]
fn teams_rotate_every_ten_episodes() {
    let teams = make_training_teams(EnvKind::Hsn);
    let names: Vec<String> = teams.iter().map(|t| t.name.clone()).collect();
    let out = train(
        EnvKind::Hsn,
        PolicyVariant::CaMlp,
        teams,
        &EnvSettings::default(),
        short(60 * 25),
        1,
    )
    .unwrap();
    assert!(out.log.episodes.len() >= 24);
    for (k, e) in out.log.episodes.iter().enumerate() {
        assert_eq!(e.team, names[(k / 10) % names.len()]);
        assert_eq!(e.length, 60);
    }
}

#[test]
fn training_is_reproducible_per_seed() {
    let run = |seed| {
        train(
            EnvKind::Hmt,
            PolicyVariant::CaCcGnn,
            make_training_teams(EnvKind::Hmt),
            &EnvSettings::default(),
            short(1024),
            seed,
        )
        .unwrap()
    };
    let (a, b, c) = (run(5), run(5), run(6));
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.to_checkpoint().to_text(), b.model.to_checkpoint().to_text());
    assert_ne!(a.model.to_checkpoint().to_text(), c.model.to_checkpoint().to_text());
}

#[test]
fn every_variant_trains_on_both_tasks() {
    for kind in [EnvKind::Hmt, EnvKind::Hsn] {
        for variant in PolicyVariant::ALL {
            let out = train(
                kind,
                variant,
                make_training_teams(kind),
                &EnvSettings::default(),
                short(256),
                0,
            )
            .unwrap_or_else(|e| panic!("{kind} {variant}: {e}"));
            assert_eq!(out.log.updates.len(), 4);
            for u in &out.log.updates {
                assert!(u.policy_loss.is_finite() && u.value_loss.is_finite() && u.entropy.is_finite());
                assert!(u.entropy > 0.0 && u.entropy <= 5f64.ln() + 1e-9);
            }
        }
    }
}

#[test]
fn trainer_rejects_unusable_teams() {
    let settings = EnvSettings::default();
    let anon = TeamSpec::new("anon", vec![RobotSpec::new(vec![0.3], None); 3]);
    let err = Trainer::new(
        EnvKind::Hsn,
        PolicyVariant::IdGnn,
        vec![anon.clone()],
        &settings,
        TrainConfig::default(),
        0,
    );
    assert!(matches!(err, Err(Error::UnsupportedVariant { .. })));

    let small = TeamSpec::new("small", vec![RobotSpec::new(vec![0.3], None); 2]);
    let err = Trainer::new(
        EnvKind::Hsn,
        PolicyVariant::CaGnn,
        vec![anon, small],
        &settings,
        TrainConfig::default(),
        0,
    );
    assert!(matches!(err, Err(Error::TeamSize { expected: 3, found: 2 })));
}

#[test]
fn n_step_oracle_suite_passes() {
    for gamma in [1.0, 0.99] {
        let check = selftest::n_step_returns(gamma).unwrap();
        assert!(check.passed, "{}", check.line());
    }
}

/// Discounted sum written as a truncated geometric series with an episode
/// mask.
fn brute_force(r: &[f64], d: &[bool], v: &[f64], n: usize, gamma: f64) -> Vec<f64> {
    let len = r.len();
    (0..len)
        .map(|t| {
            let end = (t + n).min(len);
            let stop = (t..end).find(|&k| d[k]);
            let last = stop.map_or(end, |k| k + 1);
            let g: f64 = (t..last).map(|k| gamma.powi((k - t) as i32) * r[k]).sum();
            match stop {
                Some(_) => g,
                None => g + gamma.powi((end - t) as i32) * v[end],
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn n_step_returns_match_brute_force(
        data in prop::collection::vec((-2.0f64..2.0, prop::bool::weighted(0.15), -5.0f64..5.0), 1..40),
        last in -5.0f64..5.0,
        n in 1usize..8,
        gamma in 0.5f64..=1.0,
    ) {
        let r: Vec<f64> = data.iter().map(|x| x.0).collect();
        let d: Vec<bool> = data.iter().map(|x| x.1).collect();
        let mut v: Vec<f64> = data.iter().map(|x| x.2).collect();
        v.push(last);
        let got = n_step_returns(&r, &d, &v, n, gamma);
        let want = brute_force(&r, &d, &v, n, gamma);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
