use std::collections::HashMap;

use capteam::envs::{EnvKind, EnvSettings};
use capteam::eval::{evaluate, sample_composition_teams, sample_new_robot_teams, teams_for, EvalAxis};
use capteam::model::Model;
use capteam::nets::PolicyVariant;
use capteam::training::training_pool;
use capteam::Error;
use tensorcore::{RngStream, Tensor};

fn fresh(variant: PolicyVariant, env: EnvKind, seed: u64) -> Model {
    Model::init(variant, env, 4, seed, &RngStream::from_seed(seed))
}

#[test]
fn composition_sampling_is_uniform_over_the_pool() {
    for kind in [EnvKind::Hmt, EnvKind::Hsn] {
        let pool = training_pool(kind);
        let teams = sample_composition_teams(&pool, 4, 2_500, &mut RngStream::from_seed(1)).unwrap();
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for t in &teams {
            for r in &t.robots {
                *counts.entry(r.id_index.unwrap()).or_default() += 1;
            }
        }
        let total = (teams.len() * 4) as f64;
        assert_eq!(counts.len(), pool.len());
        for (id, c) in counts {
            let freq = c as f64 / total;
            assert!(
                (freq - 1.0 / pool.len() as f64).abs() < 0.01,
                "{kind} robot {id}: {freq}"
            );
        }
    }
}

#[test]
fn new_robots_are_drawn_from_the_stated_ranges() {
    let mut rng = RngStream::from_seed(2);
    let hsn = sample_new_robot_teams(EnvKind::Hsn, 5, 200, &mut rng).unwrap();
    let radii: Vec<f64> = hsn
        .iter()
        .flat_map(|t| t.robots.iter().map(|r| r.capability[0]))
        .collect();
    assert!(radii.iter().all(|&r| (0.2..=0.6).contains(&r)));
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    assert!((mean - 0.4).abs() < 0.02, "{mean}");

    let hmt = sample_new_robot_teams(EnvKind::Hmt, 5, 200, &mut rng).unwrap();
    for r in hmt.iter().flat_map(|t| &t.robots) {
        assert_eq!(r.capability.len(), 2);
        assert!(r.capability.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!(r.id_index.is_none());
    }
}

#[test]
fn id_variants_refuse_new_robots() {
    let rng = RngStream::from_seed(3);
    let teams = teams_for(EnvKind::Hsn, EvalAxis::NewRobots, 4, 5, &rng).unwrap();
    for variant in [PolicyVariant::IdMlp, PolicyVariant::IdGnn] {
        let err = evaluate(
            &fresh(variant, EnvKind::Hsn, 0),
            &teams,
            &EnvSettings::default(),
            1,
            &rng,
        );
        assert!(matches!(err, Err(Error::UnsupportedVariant { .. })), "{variant}");
    }
    let ok = evaluate(
        &fresh(PolicyVariant::CaCcGnn, EnvKind::Hsn, 0),
        &teams,
        &EnvSettings::default(),
        1,
        &rng,
    );
    assert!(ok.is_ok());
}

#[test]
fn protocol_size_gives_one_record_per_episode() {
    let rng = RngStream::from_seed(4);
    let teams = teams_for(EnvKind::Hsn, EvalAxis::Composition, 4, 100, &rng).unwrap();
    let model = fresh(PolicyVariant::CaMlp, EnvKind::Hsn, 4);
    let report = evaluate(&model, &teams, &EnvSettings::default(), 10, &rng).unwrap();
    assert_eq!(report.episodes, 1000);
    assert_eq!(report.records.len(), 1000);
    assert_eq!(report.to_csv().lines().count(), 1001);
    let curve = report.pct_fully_connected_by_step.as_ref().unwrap();
    assert_eq!(curve.len(), 60);
    let end = report.pct_connected_end.unwrap();
    assert!((curve[59] - end).abs() < 1e-9);
    assert!(report.pairwise_overlap.unwrap().mean >= 0.0);
}

/// Every robot picks Stop whatever it observes.
fn stop_policy(kind: EnvKind) -> Model {
    let mut model = fresh(PolicyVariant::CaMlp, kind, 0);
    let w = model.policy_params.find("ca_mlp/mlp/3/weight").unwrap();
    let b = model.policy_params.find("ca_mlp/mlp/3/bias").unwrap();
    let shape = model.policy_params.get(w).shape().to_vec();
    *model.policy_params.get_mut(w) = Tensor::zeros(&shape);
    *model.policy_params.get_mut(b) = Tensor::vector(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    model
}

#[test]
fn idle_team_runs_to_the_horizon() {
    let rng = RngStream::from_seed(5);
    let teams = teams_for(EnvKind::Hmt, EvalAxis::Composition, 4, 10, &rng).unwrap();
    let report = evaluate(&stop_policy(EnvKind::Hmt), &teams, &EnvSettings::default(), 2, &rng).unwrap();
    let steps = report.avg_steps.unwrap();
    assert_eq!((steps.mean, steps.std), (500.0, 0.0));
    assert_eq!(report.quota_filled_rate(), Some(0.0));
    assert_eq!(report.pct_lumber_remaining.unwrap().mean, 100.0);
    assert_eq!(report.pct_concrete_remaining.unwrap().mean, 100.0);
    for m in &report.records {
        // time penalty only: 0.005 per robot per step
        assert!((m.episode_return + 0.005 * 4.0 * 500.0).abs() < 1e-9);
    }
}

#[test]
fn hmt_metrics_are_consistent() {
    let rng = RngStream::from_seed(6);
    let teams = teams_for(EnvKind::Hmt, EvalAxis::Train, 4, 0, &rng).unwrap();
    let report = evaluate(
        &fresh(PolicyVariant::CaCcGnn, EnvKind::Hmt, 6),
        &teams,
        &EnvSettings::default(),
        3,
        &rng,
    )
    .unwrap();
    let curve = report.pct_quota_filled_by_step.as_ref().unwrap();
    assert_eq!(curve.len(), 500);
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    let filled = report.records.iter().filter(|m| m.quota_filled == Some(true)).count();
    assert!((report.quota_filled_rate().unwrap() - 100.0 * filled as f64 / report.episodes as f64).abs() < 1e-9);
    for m in &report.records {
        let rem = [m.pct_lumber_remaining.unwrap(), m.pct_concrete_remaining.unwrap()];
        assert!(rem.iter().all(|r| (0.0..=100.0).contains(r)));
        assert_eq!(m.quota_filled == Some(true), m.steps < 500 || rem == [0.0, 0.0]);
    }
}

#[test]
fn evaluation_is_reproducible() {
    let rng = RngStream::from_seed(7);
    let model = fresh(PolicyVariant::CaGnn, EnvKind::Hsn, 7);
    let teams = teams_for(EnvKind::Hsn, EvalAxis::NewRobots, 5, 20, &rng).unwrap();
    let again = teams_for(EnvKind::Hsn, EvalAxis::NewRobots, 5, 20, &rng).unwrap();
    assert_eq!(teams, again);
    let a = evaluate(&model, &teams, &EnvSettings::default(), 3, &rng).unwrap();
    let b = evaluate(&model, &teams, &EnvSettings::default(), 3, &rng).unwrap();
    assert_eq!(a, b);
}

#[test]
fn graph_policies_transfer_across_team_sizes() {
    let rng = RngStream::from_seed(8);
    for variant in [PolicyVariant::CaGnn, PolicyVariant::CaCcGnn, PolicyVariant::CaMlp] {
        let model = fresh(variant, EnvKind::Hsn, 8);
        for size in [3, 5, 8, 10, 15] {
            let teams = teams_for(EnvKind::Hsn, EvalAxis::NewRobots, size, 3, &rng).unwrap();
            let report = evaluate(&model, &teams, &EnvSettings::default(), 1, &rng)
                .unwrap_or_else(|e| panic!("{variant} at size {size}: {e}"));
            assert_eq!(report.episodes, 3);
            assert!(report.avg_return.mean.is_finite());
        }
    }
}
