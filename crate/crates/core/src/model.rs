//! Actor and critic bundled with the metadata needed to reuse them.
//!
//! A checkpoint holds the actor parameters followed by the critic parameters
//! and these `meta` keys: `variant`, `env`, `obs_layout`, `obs_dim`,
//! `cap_dim`, `team_size`, `seed`, `env_steps`.

use std::path::Path;

use tensorcore::{Checkpoint, ParamSet, RngStream};

use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::nets::{CriticNet, PolicyNet, PolicyVariant};

#[derive(Clone, Debug)]
pub struct Model {
    pub variant: PolicyVariant,
    pub env: EnvKind,
    /// Team size the critic was built for.
    pub team_size: usize,
    pub policy: PolicyNet,
    pub policy_params: ParamSet<f32>,
    pub critic: CriticNet,
    pub critic_params: ParamSet<f32>,
    pub seed: u64,
    pub env_steps: u64,
}

impl Model {
    /// Fresh parameters drawn from `rng`.
    pub fn init(variant: PolicyVariant, env: EnvKind, team_size: usize, seed: u64, rng: &RngStream) -> Self {
        let (policy, policy_params) = PolicyNet::init(variant, env, &mut rng.split("policy"));
        let (critic, critic_params) = CriticNet::init(variant, env, team_size, &mut rng.split("critic"));
        Self {
            variant,
            env,
            team_size,
            policy,
            policy_params,
            critic,
            critic_params,
            seed,
            env_steps: 0,
        }
    }

    fn combined(&self) -> ParamSet<f32> {
        let mut all = ParamSet::new();
        for (name, t) in self.policy_params.iter().chain(self.critic_params.iter()) {
            all.push(name, t.clone());
        }
        all
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.combined())
            .with_meta("variant", self.variant)
            .with_meta("env", self.env)
            .with_meta("obs_layout", self.env.obs_layout())
            .with_meta("obs_dim", self.env.base_obs_dim())
            .with_meta("cap_dim", self.env.capability_dim())
            .with_meta("team_size", self.team_size)
            .with_meta("seed", self.seed)
            .with_meta("env_steps", self.env_steps)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    /// Rebuilds a model, checking that the stored layout matches what this
    /// build produces for the recorded variant and environment.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |key: &str| {
            ckpt.meta(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("meta `{key}` is not an integer")))
        };
        let variant: PolicyVariant = get("variant")?.parse()?;
        let env: EnvKind = get("env")?.parse()?;
        if get("obs_layout")? != env.obs_layout() {
            return Err(Error::Checkpoint(format!(
                "observation layout `{}` does not match this build's `{}`",
                get("obs_layout")?,
                env.obs_layout()
            )));
        }
        if num("obs_dim")? != env.base_obs_dim() as u64 || num("cap_dim")? != env.capability_dim() as u64 {
            return Err(Error::Checkpoint(
                "observation or capability width differs from this build".into(),
            ));
        }
        let team_size = num("team_size")? as usize;
        let mut model = Self::init(variant, env, team_size, num("seed")?, &RngStream::from_seed(0));
        model.env_steps = num("env_steps")?;
        let restored = ckpt.restore_into(&model.combined())?;
        let split = model.policy_params.len();
        for (i, t) in restored.tensors().iter().enumerate() {
            let target = if i < split {
                model.policy_params.get_mut(tensorcore::ParamId(i))
            } else {
                model.critic_params.get_mut(tensorcore::ParamId(i - split))
            };
            *target = t.clone();
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Loads and refuses a checkpoint trained for a different environment or
    /// variant.
    pub fn load_expecting(path: impl AsRef<Path>, env: EnvKind, variant: Option<PolicyVariant>) -> Result<Self> {
        let model = Self::load(path)?;
        if model.env != env {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on {}, not {env}",
                model.env
            )));
        }
        if let Some(v) = variant {
            if v != model.variant {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds variant {}, not {v}",
                    model.variant
                )));
            }
        }
        Ok(model)
    }
}
