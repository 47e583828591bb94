//! Line-oriented text checkpoints.
//!
//! ```text
//! tensorcore-checkpoint 1
//! meta variant ca_cc_gnn
//! param policy/encoder/0/weight 3x64 3e1a2b3c bd00ff12 ...
//! ```
//!
//! The first line is the format version. `meta` lines carry free-form
//! `key value` pairs (the value runs to the end of the line). Each `param`
//! line holds the parameter name, its shape with `x` between extents, and the
//! row-major values as IEEE-754 binary32 bit patterns in 8-digit lowercase
//! hex, which round-trips every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: &str = "tensorcore-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(params: &ParamSet<T>) -> Self {
        Self {
            meta: Vec::new(),
            params: params.cast(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_VERSION);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, t) in self.params.iter() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = write!(out, "param {name} {}", dims.join("x"));
            for v in t.data() {
                let _ = write!(out, " {:08x}", v.to_bits());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| TensorError::Checkpoint { line, msg };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, v)) if v.trim_end() == CHECKPOINT_VERSION => {}
            Some((_, v)) => return Err(err(1, format!("unsupported version `{v}`"))),
            None => return Err(err(1, "empty checkpoint".into())),
        }
        let mut meta = Vec::new();
        let mut params = ParamSet::new();
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    if k.is_empty() {
                        return Err(err(ln, "meta line without key".into()));
                    }
                    meta.push((k.to_string(), v.to_string()));
                }
                "param" => {
                    let mut fields = rest.split_ascii_whitespace();
                    let name = fields.next().ok_or_else(|| err(ln, "param line without name".into()))?;
                    let dims = fields.next().ok_or_else(|| err(ln, format!("`{name}` has no shape")))?;
                    let shape = dims
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| err(ln, format!("`{name}` shape `{dims}`: {e}")))?;
                    let data = fields
                        .map(|h| u32::from_str_radix(h, 16).map(f32::from_bits))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| err(ln, format!("`{name}` value: {e}")))?;
                    let tensor = Tensor::new(shape, data).map_err(|e| err(ln, e.to_string()))?;
                    if params.find(name).is_some() {
                        return Err(err(ln, format!("duplicate parameter `{name}`")));
                    }
                    params.push(name, tensor);
                }
                other => return Err(err(ln, format!("unknown record `{other}`"))),
            }
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Copies the stored values into the layout of `expected`, requiring
    /// identical names, order and shapes.
    pub fn restore_into<T: Scalar>(&self, expected: &ParamSet<T>) -> Result<ParamSet<T>> {
        expected.check_layout(&self.params)?;
        Ok(self.params.cast())
    }
}
