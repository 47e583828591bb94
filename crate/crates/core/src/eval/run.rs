use rayon::prelude::*;
use tensorcore::{RngStream, Tape};

use super::{EpisodeMetrics, MetricsReport};
use crate::envs::{make_env, EnvSettings, StepInfo, TeamSpec};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nets::{action_select, GraphBatch, SelectMode};

/// Per-step trace of one episode, before aggregation.
#[derive(Clone, Debug)]
pub(crate) struct EpisodeTrace {
    pub metrics: EpisodeMetrics,
    /// HMT: step at which the quota was filled.
    pub filled_at: Option<usize>,
    /// HSN: connectivity after each step.
    pub connected: Vec<bool>,
}

fn check_compatible(model: &Model, teams: &[TeamSpec]) -> Result<()> {
    if teams.is_empty() {
        return Err(Error::InvalidTeam("no evaluation teams".into()));
    }
    for team in teams {
        team.validate(model.env)?;
        if model.variant.uses_ids() && team.ids().is_none() {
            return Err(Error::UnsupportedVariant {
                variant: model.variant.to_string(),
                reason: format!(
                    "team `{}` contains robots without training ids, and there is no way to assign them one",
                    team.name
                ),
            });
        }
    }
    Ok(())
}

fn run_team(
    model: &Model,
    team_idx: usize,
    team: &TeamSpec,
    settings: &EnvSettings,
    episodes: usize,
    mut rng: RngStream,
) -> Result<Vec<EpisodeTrace>> {
    let mut env = make_env(model.env, team.clone(), settings)?;
    let horizon = env.horizon();
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut obs = env.reset(&mut rng)?;
        let mut ret = 0.0;
        let mut steps = 0;
        let mut filled_at = None;
        let mut connected = Vec::new();
        let mut overlap_sum = 0.0;
        let last_info = loop {
            let tape = Tape::new();
            let p = model.policy_params.bind_frozen(&tape);
            let graph = GraphBatch::for_team(team, &obs)?;
            let logits = model.policy.logits(&p, &graph)?;
            let sel = action_select(&logits.value(), SelectMode::Hard, &mut rng)?;
            let r = env.step(&sel.actions)?;
            ret += r.reward;
            steps += 1;
            match &r.info {
                StepInfo::Hmt { quota_filled, .. } => {
                    if *quota_filled && filled_at.is_none() {
                        filled_at = Some(steps);
                    }
                }
                StepInfo::Hsn {
                    overlap, connected: c, ..
                } => {
                    overlap_sum += overlap;
                    connected.push(*c);
                }
            }
            obs = r.observations;
            if r.done || steps >= horizon {
                break r.info;
            }
        };
        let mut m = EpisodeMetrics {
            team_idx,
            episode,
            episode_return: ret,
            steps,
            quota_filled: None,
            pct_lumber_remaining: None,
            pct_concrete_remaining: None,
            overlap: None,
            connected_end: None,
        };
        match last_info {
            StepInfo::Hmt { quota, delivered, .. } => {
                let remaining = |k: usize| {
                    if quota[k] > 0.0 {
                        100.0 * (quota[k] - delivered[k]).max(0.0) / quota[k]
                    } else {
                        0.0
                    }
                };
                m.quota_filled = Some(filled_at.is_some());
                m.pct_lumber_remaining = Some(remaining(0));
                m.pct_concrete_remaining = Some(remaining(1));
            }
            StepInfo::Hsn { .. } => {
                m.overlap = Some(overlap_sum / steps as f64);
                m.connected_end = connected.last().copied();
            }
        }
        out.push(EpisodeTrace {
            metrics: m,
            filled_at,
            connected,
        });
    }
    Ok(out)
}

/// Runs `episodes_per_team` greedy (hard-selection) episodes on every team
/// and aggregates the metrics.
///
/// Teams run in parallel; team `i` draws its randomness from
/// `rng.split_indexed("team", i)`, so the result does not depend on thread
/// count.
pub fn evaluate(
    model: &Model,
    teams: &[TeamSpec],
    settings: &EnvSettings,
    episodes_per_team: usize,
    rng: &RngStream,
) -> Result<MetricsReport> {
    check_compatible(model, teams)?;
    let horizon = make_env(model.env, teams[0].clone(), settings)?.horizon();
    let traces: Vec<Vec<EpisodeTrace>> = teams
        .par_iter()
        .enumerate()
        .map(|(i, team)| {
            run_team(
                model,
                i,
                team,
                settings,
                episodes_per_team,
                rng.split_indexed("team", i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let traces: Vec<EpisodeTrace> = traces.into_iter().flatten().collect();
    Ok(MetricsReport::aggregate(model.env, horizon, &traces))
}
