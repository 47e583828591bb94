use tensorcore::{Bound, ParamSet, RngStream, Scalar, Tensor, Var};

use super::layers::Mlp;
use super::policy::node_inputs;
use super::{GraphBatch, PolicyVariant, HIDDEN};
use crate::envs::EnvKind;
use crate::error::{Error, Result};

/// Centralized value function over a whole team of fixed size.
///
/// The input is every robot's observation and conditioning (capability or
/// ID, whichever the actor uses) concatenated in team order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CriticNet {
    variant: PolicyVariant,
    env: EnvKind,
    team_size: usize,
    mlp: Mlp,
}

impl CriticNet {
    pub fn new<T: Scalar>(
        variant: PolicyVariant,
        env: EnvKind,
        team_size: usize,
        params: &mut ParamSet<T>,
        rng: &mut RngStream,
    ) -> Self {
        let width = team_size * (env.base_obs_dim() + variant.suffix().width(env));
        let mlp = Mlp::new(params, &format!("{variant}/critic"), &[width, HIDDEN, HIDDEN, 1], rng);
        Self {
            variant,
            env,
            team_size,
            mlp,
        }
    }

    pub fn init<T: Scalar>(
        variant: PolicyVariant,
        env: EnvKind,
        team_size: usize,
        rng: &mut RngStream,
    ) -> (Self, ParamSet<T>) {
        let mut params = ParamSet::new();
        let net = Self::new(variant, env, team_size, &mut params, rng);
        (net, params)
    }

    pub fn team_size(&self) -> usize {
        self.team_size
    }

    /// One value per graph in `batch`, shape `[graphs]`.
    pub fn values<'t, T: Scalar>(&self, p: &Bound<'t, T>, batch: &GraphBatch) -> Result<Var<'t, T>> {
        let n = batch.uniform_graph_size().unwrap_or(0);
        if n != self.team_size {
            return Err(Error::TeamSize {
                expected: self.team_size,
                found: n,
            });
        }
        let (width, data) = node_inputs(self.variant, self.env, batch, Some(self.variant.suffix()))?;
        let tape = p.vars()[0].tape();
        let x = tape.constant(Tensor::from_f64(vec![batch.num_graphs(), n * width], &data)?);
        Ok(self.mlp.forward(p, x)?.sum_rows())
    }
}
