use tensorcore::{Bound, ParamSet, RngStream, Scalar, Tape, Tensor, Var};

use super::layers::{gcn_layer_with, Mlp};
use super::{GraphBatch, PolicyVariant, HIDDEN};
use crate::envs::{EnvKind, ObsSuffix, ID_DIM, NUM_ACTIONS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Arch {
    Mlp(Mlp),
    Gnn { encoder: Mlp, phi: Mlp, action: Mlp },
}

/// Intermediate shapes of one forward pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShapeTrace {
    pub stages: Vec<(&'static str, Vec<usize>)>,
}

impl ShapeTrace {
    pub fn get(&self, stage: &str) -> Option<&[usize]> {
        self.stages
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, shape)| shape.as_slice())
    }
}

/// Layout of a shared policy. Parameters live in a separate [`ParamSet`] so
/// the same layout serves `f32` training and `f64` gradient checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyNet {
    variant: PolicyVariant,
    env: EnvKind,
    arch: Arch,
}

/// Builds the per-node input `[obs ⧺ suffix]` as a row-major matrix.
pub(crate) fn node_inputs(
    variant: PolicyVariant,
    env: EnvKind,
    batch: &GraphBatch,
    suffix: Option<ObsSuffix>,
) -> Result<(usize, Vec<f64>)> {
    check_layout(variant, env, batch)?;
    let width = batch.obs_dim() + suffix.map_or(0, |s| s.width(env));
    let mut data = Vec::with_capacity(batch.num_nodes() * width);
    for i in 0..batch.num_nodes() {
        data.extend_from_slice(batch.observation(i));
        match suffix {
            None => {}
            Some(ObsSuffix::Capability) => data.extend_from_slice(batch.capability(i)),
            Some(ObsSuffix::Id) => {
                let ids = batch.ids().ok_or_else(|| Error::MissingConditioning {
                    variant: variant.to_string(),
                    what: "robot ids",
                })?;
                let mut one_hot = [0.0; ID_DIM];
                one_hot[ids[i]] = 1.0;
                data.extend_from_slice(&one_hot);
            }
        }
    }
    Ok((width, data))
}

fn check_layout(variant: PolicyVariant, env: EnvKind, batch: &GraphBatch) -> Result<()> {
    if batch.obs_dim() != env.base_obs_dim() {
        return Err(Error::Layout {
            expected: format!("{} observations of width {}", env.obs_layout(), env.base_obs_dim()),
            found: batch.obs_dim(),
        });
    }
    if batch.cap_dim() != env.capability_dim() {
        return Err(Error::Layout {
            expected: format!("{env} capabilities of width {}", env.capability_dim()),
            found: batch.cap_dim(),
        });
    }
    if variant.uses_ids() && batch.ids().is_none() {
        return Err(Error::MissingConditioning {
            variant: variant.to_string(),
            what: "robot ids",
        });
    }
    Ok(())
}

impl PolicyNet {
    /// Appends freshly initialised parameters to `params`.
    pub fn new<T: Scalar>(variant: PolicyVariant, env: EnvKind, params: &mut ParamSet<T>, rng: &mut RngStream) -> Self {
        let v = variant.as_str();
        let obs = env.base_obs_dim();
        let cond = variant.suffix().width(env);
        let arch = match variant {
            PolicyVariant::IdMlp | PolicyVariant::CaMlp => Arch::Mlp(Mlp::new(
                params,
                &format!("{v}/mlp"),
                &[obs + cond, HIDDEN, HIDDEN, HIDDEN, NUM_ACTIONS],
                rng,
            )),
            PolicyVariant::IdGnn | PolicyVariant::CaGnn | PolicyVariant::CaCcGnn => {
                let (enc_in, head_extra) = if variant == PolicyVariant::CaGnn {
                    (obs, cond)
                } else {
                    (obs + cond, 0)
                };
                Arch::Gnn {
                    encoder: Mlp::new(params, &format!("{v}/encoder"), &[enc_in, HIDDEN, HIDDEN], rng),
                    phi: Mlp::new(params, &format!("{v}/gcn"), &[HIDDEN, HIDDEN, HIDDEN], rng),
                    action: Mlp::new(
                        params,
                        &format!("{v}/action"),
                        &[2 * HIDDEN + head_extra, HIDDEN, HIDDEN, NUM_ACTIONS],
                        rng,
                    ),
                }
            }
        };
        Self { variant, env, arch }
    }

    /// Layout and parameters, with parameters drawn from `rng`.
    pub fn init<T: Scalar>(variant: PolicyVariant, env: EnvKind, rng: &mut RngStream) -> (Self, ParamSet<T>) {
        let mut params = ParamSet::new();
        let net = Self::new(variant, env, &mut params, rng);
        (net, params)
    }

    pub fn variant(&self) -> PolicyVariant {
        self.variant
    }

    pub fn env(&self) -> EnvKind {
        self.env
    }

    /// Action logits `[nodes, 5]`.
    pub fn logits<'t, T: Scalar>(&self, p: &Bound<'t, T>, batch: &GraphBatch) -> Result<Var<'t, T>> {
        self.forward(p, batch, None)
    }

    /// Shapes of every intermediate for `batch`.
    pub fn trace<T: Scalar>(&self, params: &ParamSet<T>, batch: &GraphBatch) -> Result<ShapeTrace> {
        let tape = Tape::new();
        let p = params.bind_frozen(&tape);
        let mut trace = ShapeTrace::default();
        self.forward(&p, batch, Some(&mut trace))?;
        Ok(trace)
    }

    fn forward<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        batch: &GraphBatch,
        mut trace: Option<&mut ShapeTrace>,
    ) -> Result<Var<'t, T>> {
        let tape = p.vars()[0].tape();
        let mut record = |stage: &'static str, v: Var<'t, T>| {
            if let Some(t) = trace.as_deref_mut() {
                t.stages.push((stage, v.shape()));
            }
        };
        let n = batch.num_nodes();
        let suffix = match self.variant {
            PolicyVariant::CaGnn => None,
            v => Some(v.suffix()),
        };
        let (width, data) = node_inputs(self.variant, self.env, batch, suffix)?;
        let x = tape.constant(Tensor::from_f64(vec![n, width], &data)?);
        record("input", x);

        let logits = match &self.arch {
            Arch::Mlp(mlp) => mlp.forward(p, x)?,
            Arch::Gnn { encoder, phi, action } => {
                let enc = encoder.forward(p, x)?;
                record("encoder", enc);
                let gcn = gcn_layer_with(enc, batch, |h| phi.forward(p, h), |h| h.relu())?;
                record("gcn", gcn);
                let mut parts = vec![enc, gcn];
                if self.variant == PolicyVariant::CaGnn {
                    let cd = batch.cap_dim();
                    let caps: Vec<f64> = (0..n).flat_map(|i| batch.capability(i).to_vec()).collect();
                    parts.push(tape.constant(Tensor::from_f64(vec![n, cd], &caps)?));
                }
                let head_in = Var::concat(&parts, 1)?;
                record("action_input", head_in);
                action.forward(p, head_in)?
            }
        };
        record("logits", logits);
        Ok(logits)
    }
}
