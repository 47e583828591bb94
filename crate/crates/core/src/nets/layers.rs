use tensorcore::{Bound, ParamId, ParamSet, RngStream, Scalar, Var};

use super::GraphBatch;
use crate::error::Result;

/// Affine map `x W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut RngStream,
    ) -> Self {
        let (weight, bias) = params.push_linear(prefix, fan_in, fan_out, rng);
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(x.matmul(p[self.weight])?.add(p[self.bias])?)
    }
}

/// Stack of linear layers with ReLU between them and a linear output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`; layers are named `prefix/0`, `prefix/1`, ...
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, widths: &[usize], rng: &mut RngStream) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{prefix}/{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, h)?;
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        Ok(h)
    }
}

/// `out_i = Σ_{j ∈ N(i) ∪ {i}} m_j`.
pub fn gcn_aggregate<'t, T: Scalar>(messages: Var<'t, T>, batch: &GraphBatch) -> Result<Var<'t, T>> {
    let (src, dst) = batch.edges();
    Ok(messages.gather_rows(src)?.scatter_add_rows(dst, batch.num_nodes())?)
}

/// `h_i = σ(Σ_{j ∈ N(i) ∪ {i}} φ(h_j))`.
pub fn gcn_layer_with<'t, T: Scalar>(
    h: Var<'t, T>,
    batch: &GraphBatch,
    phi: impl FnOnce(Var<'t, T>) -> Result<Var<'t, T>>,
    sigma: impl FnOnce(Var<'t, T>) -> Var<'t, T>,
) -> Result<Var<'t, T>> {
    Ok(sigma(gcn_aggregate(phi(h)?, batch)?))
}
