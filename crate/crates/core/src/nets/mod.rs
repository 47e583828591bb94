//! Shared decentralized policies and the centralized critic.
//!
//! Five variants differ in what is appended to each robot's observation and
//! whether robots exchange information through a graph convolution:
//!
//! | variant      | suffix     | graph layer | capabilities seen by         |
//! |--------------|------------|-------------|------------------------------|
//! | `id_mlp`     | one-hot ID | no          | -                            |
//! | `id_gnn`     | one-hot ID | yes         | -                            |
//! | `ca_mlp`     | capability | no          | the whole network            |
//! | `ca_gnn`     | none       | yes         | the action head only         |
//! | `ca_cc_gnn`  | capability | yes         | every layer, neighbours too  |

mod batch;
mod critic;
mod layers;
mod policy;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::ObsSuffix;
use crate::error::{Error, Result};

pub use batch::GraphBatch;
pub use critic::CriticNet;
pub use layers::{gcn_aggregate, gcn_layer_with, Linear, Mlp};
pub use policy::{PolicyNet, ShapeTrace};
pub use select::{action_select, entropy, log_softmax_rows, SelectMode, Selection};

pub const HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    IdMlp,
    IdGnn,
    CaMlp,
    CaGnn,
    CaCcGnn,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 5] = [
        PolicyVariant::IdMlp,
        PolicyVariant::IdGnn,
        PolicyVariant::CaMlp,
        PolicyVariant::CaGnn,
        PolicyVariant::CaCcGnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyVariant::IdMlp => "id_mlp",
            PolicyVariant::IdGnn => "id_gnn",
            PolicyVariant::CaMlp => "ca_mlp",
            PolicyVariant::CaGnn => "ca_gnn",
            PolicyVariant::CaCcGnn => "ca_cc_gnn",
        }
    }

    pub fn uses_ids(self) -> bool {
        matches!(self, PolicyVariant::IdMlp | PolicyVariant::IdGnn)
    }

    pub fn is_gnn(self) -> bool {
        !matches!(self, PolicyVariant::IdMlp | PolicyVariant::CaMlp)
    }

    /// Conditioning appended to observations for the critic, and for the
    /// actor except under `ca_gnn`.
    pub fn suffix(self) -> ObsSuffix {
        if self.uses_ids() {
            ObsSuffix::Id
        } else {
            ObsSuffix::Capability
        }
    }
}

impl fmt::Display for PolicyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}
