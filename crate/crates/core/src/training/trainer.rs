use std::collections::VecDeque;

use tensorcore::{adam_step, clip_grad_norm, AdamState, ParamSet, RngStream, Scalar, Tape};

use super::buffer::{compute_advantages, RolloutBuffer, Transition};
use super::log::{EpisodeRecord, TrainLog, UpdateRecord};
use super::ppo::{policy_loss, value_loss};
use super::TrainConfig;
use crate::envs::{make_env, EnvKind, EnvSettings, Environment, StepInfo, TeamSpec};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nets::{action_select, CriticNet, GraphBatch, PolicyVariant, SelectMode};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Training state for one run: environment, shared actor, critic and its
/// frozen bootstrap copy, optimizers and episode bookkeeping.
pub struct Trainer {
    config: TrainConfig,
    teams: Vec<TeamSpec>,
    env: Box<dyn Environment>,
    model: Model,
    target_critic: ParamSet<f32>,
    policy_opt: AdamState<f32>,
    critic_opt: AdamState<f32>,
    env_rng: RngStream,
    action_rng: RngStream,
    obs: Vec<Vec<f64>>,
    team: usize,
    episodes_on_team: usize,
    episode_return: f64,
    episode_len: usize,
    last_refresh: u64,
    recent: VecDeque<f64>,
    reward_stats: RunningStats,
    log: TrainLog,
}

/// Streaming mean and variance (Chan et al. parallel update).
#[derive(Clone, Debug, Default)]
struct RunningStats {
    count: f64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn update(&mut self, xs: &[f64]) {
        let n = xs.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let total = self.count + n;
        let delta = mean - self.mean;
        self.mean += delta * n / total;
        self.m2 += m2 + delta * delta * self.count * n / total;
        self.count = total;
    }

    fn std(&self) -> f64 {
        if self.count > 0.0 {
            (self.m2 / self.count).sqrt()
        } else {
            0.0
        }
    }
}

impl Trainer {
    pub fn new(
        kind: EnvKind,
        variant: PolicyVariant,
        teams: Vec<TeamSpec>,
        settings: &EnvSettings,
        config: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let first = teams
            .first()
            .ok_or_else(|| Error::InvalidTeam("no training teams".into()))?;
        let n = first.len();
        for t in &teams {
            t.validate(kind)?;
            if t.len() != n {
                return Err(Error::TeamSize {
                    expected: n,
                    found: t.len(),
                });
            }
            if variant.uses_ids() && t.ids().is_none() {
                return Err(Error::UnsupportedVariant {
                    variant: variant.to_string(),
                    reason: format!("team `{}` has robots without ids", t.name),
                });
            }
        }
        let root = RngStream::from_seed(seed);
        let model = Model::init(variant, kind, n, seed, &root.split("init"));
        let mut env = make_env(kind, first.clone(), settings)?;
        let mut env_rng = root.split("env");
        let obs = env.reset(&mut env_rng)?;
        Ok(Self {
            target_critic: model.critic_params.clone(),
            policy_opt: AdamState::new(&model.policy_params),
            critic_opt: AdamState::new(&model.critic_params),
            model,
            config,
            teams,
            env,
            env_rng,
            action_rng: root.split("actions"),
            obs,
            team: 0,
            episodes_on_team: 0,
            episode_return: 0.0,
            episode_len: 0,
            last_refresh: 0,
            recent: VecDeque::new(),
            reward_stats: RunningStats::default(),
            log: TrainLog::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn env_steps(&self) -> u64 {
        self.model.env_steps
    }

    pub fn current_team(&self) -> usize {
        self.team
    }

    pub fn total_steps(&self) -> u64 {
        self.config.total_steps(self.model.env)
    }

    fn end_episode(&mut self, quota_filled: Option<bool>) -> Result<()> {
        let record = EpisodeRecord {
            episode: self.log.episodes.len() as u64,
            env_steps: self.model.env_steps,
            team: self.teams[self.team].name.clone(),
            episode_return: self.episode_return,
            length: self.episode_len,
            quota_filled,
        };
        self.recent.push_back(record.episode_return);
        if self.recent.len() > self.config.return_window {
            self.recent.pop_front();
        }
        self.log.episodes.push(record);
        self.episode_return = 0.0;
        self.episode_len = 0;
        self.episodes_on_team += 1;
        if self.episodes_on_team == self.config.resample_every_episodes {
            self.episodes_on_team = 0;
            self.team = (self.team + 1) % self.teams.len();
            self.env.set_team(self.teams[self.team].clone())?;
        }
        self.obs = self.env.reset(&mut self.env_rng)?;
        Ok(())
    }

    /// Steps the environment `buffer_length` times with sampled actions.
    /// Values are filled in by [`Trainer::update`].
    pub fn collect_rollout(&mut self) -> Result<RolloutBuffer> {
        let tape = Tape::new();
        let p = self.model.policy_params.bind_frozen(&tape);
        let mut transitions = Vec::with_capacity(self.config.buffer_length);
        for _ in 0..self.config.buffer_length {
            let graph = GraphBatch::for_team(self.env.team(), &self.obs)?;
            let logits = self.model.policy.logits(&p, &graph)?;
            let selection = action_select(&logits.value(), SelectMode::Soft, &mut self.action_rng)?;
            let step = self.model.env_steps;
            let result = self.env.step(&selection.actions).map_err(|e| Error::Rollout {
                step,
                source: Box::new(e),
            })?;
            if !result.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward at env step {step}")));
            }
            self.model.env_steps += 1;
            self.episode_return += result.reward;
            self.episode_len += 1;
            transitions.push(Transition {
                graph,
                actions: selection.actions,
                log_probs: selection.log_probs.unwrap_or_default(),
                reward: result.reward,
                value: 0.0,
                done: result.done,
                team: self.team,
            });
            if result.done {
                let quota = match result.info {
                    StepInfo::Hmt { quota_filled, .. } => Some(quota_filled),
                    StepInfo::Hsn { .. } => None,
                };
                self.end_episode(quota)?;
            } else {
                self.obs = result.observations;
            }
        }
        Ok(RolloutBuffer {
            transitions,
            next_graph: GraphBatch::for_team(self.env.team(), &self.obs)?,
        })
    }

    fn critic_values(critic: &CriticNet, params: &ParamSet<f32>, batch: &GraphBatch) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let p = params.bind_frozen(&tape);
        let v = critic.values(&p, batch)?;
        let out = v.value().data().iter().map(|x| x.to_f64_lossy()).collect();
        Ok(out)
    }

    /// PPO update from a collected buffer.
    pub fn update(&mut self, buffer: &mut RolloutBuffer) -> Result<UpdateStats> {
        let cfg = self.config.clone();
        let len = buffer.len();
        let states = GraphBatch::stack(&buffer.state_graphs())?;
        let values = Self::critic_values(&self.model.critic, &self.model.critic_params, &states)?;
        for (t, v) in buffer.transitions.iter_mut().zip(&values) {
            t.value = *v;
        }
        if self.model.env_steps - self.last_refresh >= cfg.critic_refresh_interval {
            self.target_critic.assign(&self.model.critic_params)?;
            self.last_refresh = self.model.env_steps;
        }
        let bootstrap = Self::critic_values(&self.model.critic, &self.target_critic, &states)?;
        let adv = if cfg.standardize_rewards {
            self.reward_stats.update(&buffer.rewards());
            let (mean, std) = (self.reward_stats.mean, self.reward_stats.std().max(1e-8));
            let mut scaled = buffer.clone();
            for t in &mut scaled.transitions {
                t.reward = (t.reward - mean) / std;
            }
            compute_advantages(&scaled, &bootstrap, cfg.n_step, cfg.gamma, cfg.normalize_advantages)
        } else {
            compute_advantages(buffer, &bootstrap, cfg.n_step, cfg.gamma, cfg.normalize_advantages)
        };

        let batch = GraphBatch::stack(&states_without_last(buffer))?;
        let mut actions = Vec::new();
        let mut old = Vec::new();
        let mut row_adv = Vec::new();
        for (t, a) in buffer.transitions.iter().zip(&adv.advantages) {
            actions.extend_from_slice(&t.actions);
            old.extend_from_slice(&t.log_probs);
            row_adv.extend(std::iter::repeat_n(*a, t.actions.len()));
        }

        let mut stats = UpdateStats::default();
        for epoch in 0..cfg.epochs {
            let tape = Tape::new();
            let p = self.model.policy_params.bind(&tape);
            let logits = self.model.policy.logits(&p, &batch)?;
            let pl = policy_loss(logits, &actions, &old, &row_adv, cfg.clip, cfg.entropy_coef)?;
            let loss = pl.loss.item().to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "policy loss {loss} at env step {} (epoch {epoch}, surrogate {}, entropy {})",
                    self.model.env_steps, pl.surrogate, pl.entropy
                )));
            }
            tape.backward(pl.loss)?;
            let mut grads = p.grads();
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
            }
            adam_step(&mut self.model.policy_params, &grads, &mut self.policy_opt, cfg.lr)?;

            let tape = Tape::new();
            let c = self.model.critic_params.bind(&tape);
            let v = self.model.critic.values(&c, &batch)?;
            let vl = value_loss(v, &adv.returns)?;
            let vloss = vl.item().to_f64_lossy();
            if !vloss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "value loss {vloss} at env step {} (epoch {epoch})",
                    self.model.env_steps
                )));
            }
            tape.backward(vl)?;
            let mut grads = c.grads();
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
            }
            adam_step(&mut self.model.critic_params, &grads, &mut self.critic_opt, cfg.lr)?;

            stats.policy_loss += loss;
            stats.value_loss += vloss;
            stats.entropy += pl.entropy;
        }
        let k = cfg.epochs as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        debug_assert_eq!(len, buffer.len());
        Ok(stats)
    }

    /// Collects one buffer, updates, and appends to the log.
    pub fn step_update(&mut self) -> Result<&UpdateRecord> {
        let mut buffer = self.collect_rollout()?;
        let stats = self.update(&mut buffer)?;
        let mean_return = (!self.recent.is_empty()).then(|| self.recent.iter().sum::<f64>() / self.recent.len() as f64);
        self.log.updates.push(UpdateRecord {
            update: self.log.updates.len() as u64,
            env_steps: self.model.env_steps,
            team: self.teams[self.team].name.clone(),
            mean_return,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
        });
        Ok(self.log.updates.last().expect("just pushed"))
    }

    /// Runs updates until the step budget is spent. `on_update` is called
    /// after each one, e.g. to write periodic checkpoints.
    pub fn run(&mut self, mut on_update: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        let total = self.total_steps();
        while self.model.env_steps < total {
            self.step_update()?;
            on_update(self)?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            log: self.log,
        }
    }
}

fn states_without_last(buffer: &RolloutBuffer) -> Vec<GraphBatch> {
    buffer.transitions.iter().map(|t| t.graph.clone()).collect()
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
}

/// Trains `variant` on `teams` until `config`'s step budget is used up.
pub fn train(
    kind: EnvKind,
    variant: PolicyVariant,
    teams: Vec<TeamSpec>,
    settings: &EnvSettings,
    config: TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(kind, variant, teams, settings, config, seed)?;
    trainer.run(|_| Ok(()))?;
    Ok(trainer.into_outcome())
}
