//! In-memory embedding sets and the model-role taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which model variant produced a set of features (or a performance value).
///
/// The first four share one architecture and may be compared by MMD².
/// `Specialized` is a different architecture built for the task and only
/// ever appears in performance records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    RandomWeight,
    Pretrained,
    Finetuned,
    TrainedFromScratch,
    Specialized,
}

impl RoleTag {
    pub const ARCHITECTURE_ROLES: [RoleTag; 4] = [
        RoleTag::RandomWeight,
        RoleTag::Pretrained,
        RoleTag::Finetuned,
        RoleTag::TrainedFromScratch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::RandomWeight => "random_weight",
            RoleTag::Pretrained => "pretrained",
            RoleTag::Finetuned => "finetuned",
            RoleTag::TrainedFromScratch => "trained_from_scratch",
            RoleTag::Specialized => "specialized",
        }
    }

    pub fn shares_architecture(self) -> bool {
        self != RoleTag::Specialized
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_weight" => Ok(RoleTag::RandomWeight),
            "pretrained" => Ok(RoleTag::Pretrained),
            "finetuned" => Ok(RoleTag::Finetuned),
            "trained_from_scratch" => Ok(RoleTag::TrainedFromScratch),
            "specialized" => Ok(RoleTag::Specialized),
            other => Err(Error::InvalidValue(format!("unknown role `{other}`"))),
        }
    }
}

/// Storage precision of an embedding set. Arithmetic is always f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub(crate) fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub(crate) fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// `n` feature vectors of dimension `dim`, stored row-major.
///
/// Values are held as `f64`. Sets tagged [`Dtype::F32`] only ever hold
/// values that are exactly representable in `f32`, so saving them back to
/// single precision is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub task_id: String,
    pub model_id: String,
    pub role: Option<RoleTag>,
    n: usize,
    dim: usize,
    dtype: Dtype,
    data: Vec<f64>,
}

impl EmbeddingSet {
    /// Builds a double-precision set, rejecting empty or non-finite input.
    pub fn from_rows_f64(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::validated(n, dim, Dtype::F64, data)
    }

    pub fn from_rows_f32(n: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let data = data.into_iter().map(f64::from).collect();
        Self::validated(n, dim, Dtype::F32, data)
    }

    /// Builds a set from nested rows. All rows must share one length.
    pub fn from_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("row {i}"),
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_rows_f64(rows.len(), dim, data)
    }

    fn validated(n: usize, dim: usize, dtype: Dtype, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySet("n = 0".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidValue("feature dimension must be at least 1".into()));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidValue(format!(
                "data length {} does not equal n·dim = {}·{}",
                data.len(),
                n,
                dim
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / dim,
                pos % dim
            )));
        }
        Ok(EmbeddingSet {
            task_id: String::new(),
            model_id: String::new(),
            role: None,
            n,
            dim,
            dtype,
            data,
        })
    }

    pub fn with_role(mut self, role: RoleTag) -> Self {
        self.role = Some(role);
        self
    }

    pub fn with_task(mut self, task_id: impl Into<String>) -> Self {
        self.task_id = task_id.into();
        self
    }

    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Converts to single-precision storage, rounding each value once.
    pub fn to_f32(&self) -> Result<Self> {
        let data = self.data.iter().map(|&v| v as f32).collect();
        let mut out = Self::from_rows_f32(self.n, self.dim, data)?;
        out.task_id = self.task_id.clone();
        out.model_id = self.model_id.clone();
        out.role = self.role;
        Ok(out)
    }

    /// Row-wise concatenation of two sets with the same dimension.
    pub fn pooled(&self, other: &EmbeddingSet) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                context: "pooling".into(),
                left: self.dim,
                right: other.dim,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self::from_rows_f64(self.n + other.n, self.dim, data)
    }

    /// Adds `offset` to every row.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "translation offset".into(),
                left: self.dim,
                right: offset.len(),
            });
        }
        let data = self
            .rows()
            .flat_map(|row| row.iter().zip(offset).map(|(v, o)| v + o))
            .collect();
        let mut out = Self::from_rows_f64(self.n, self.dim, data)?;
        out.task_id = self.task_id.clone();
        out.model_id = self.model_id.clone();
        out.role = self.role;
        Ok(out)
    }
}
