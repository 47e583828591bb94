//! Named parameter collections and their binding onto a tape.

use std::ops::Index;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Position of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered, named set of trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Appends a parameter. Names must be unique.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name `{name}`");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Weight `[fan_in, fan_out]` drawn from U(-√(1/fan_in), √(1/fan_in)) and a
    /// zero bias `[fan_out]`.
    pub fn push_linear(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut RngStream,
    ) -> (ParamId, ParamId) {
        let bound = (1.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
            .collect();
        let w = self.push(
            format!("{prefix}/weight"),
            Tensor::matrix(fan_in, fan_out, data).expect("linear shape"),
        );
        let b = self.push(format!("{prefix}/bias"), Tensor::zeros(&[fan_out]));
        (w, b)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Flat view of element `k` across all parameters.
    pub(crate) fn element_mut(&mut self, mut k: usize) -> &mut T {
        for t in &mut self.tensors {
            if k < t.len() {
                return &mut t.data_mut()[k];
            }
            k -= t.len();
        }
        panic!("parameter element index out of range");
    }

    pub(crate) fn tensor_data_mut(&mut self, id: ParamId) -> &mut [T] {
        self.tensors[id.0].data_mut()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Replaces every value from `other`, which must have identical names
    /// and shapes in the same order.
    pub fn assign(&mut self, other: &ParamSet<T>) -> Result<()> {
        self.check_layout(other)?;
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    pub fn check_layout<U: Scalar>(&self, other: &ParamSet<U>) -> Result<()> {
        if self.names.len() != other.names.len() {
            return Err(TensorError::ParameterMismatch(format!(
                "expected {} parameters, found {}",
                self.names.len(),
                other.names.len()
            )));
        }
        for ((n1, t1), (n2, t2)) in self.iter().zip(other.iter()) {
            if n1 != n2 {
                return Err(TensorError::ParameterMismatch(format!("expected `{n1}`, found `{n2}`")));
            }
            if t1.shape() != t2.shape() {
                return Err(TensorError::ParameterMismatch(format!(
                    "`{n1}` expected shape {:?}, found {:?}",
                    t1.shape(),
                    t2.shape()
                )));
            }
        }
        Ok(())
    }

    /// Records every parameter as a differentiable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.constant(t.clone())).collect(),
        }
    }
}

/// Tape handles for a [`ParamSet`], indexed by [`ParamId`].
pub struct Bound<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    /// Accumulated gradients in parameter order (zeros where unreached).
    pub fn grads(&self) -> Vec<Tensor<T>> {
        self.vars.iter().map(|v| v.tape().grad_or_zeros(*v)).collect()
    }
}

impl<'t, T: Scalar> Index<ParamId> for Bound<'t, T> {
    type Output = Var<'t, T>;

    fn index(&self, id: ParamId) -> &Var<'t, T> {
        &self.vars[id.0]
    }
}
