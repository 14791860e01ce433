//! On-disk formats: EMB1 binary embeddings, embeddings CSV, the task
//! manifest and training-log CSV.
//!
//! EMB1 layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EMB1"
//! 4       2     version (u16) = 1
//! 6       1     dtype (u8): 1 = f32, 2 = f64
//! 7       1     reserved, must be 0
//! 8       8     N (u64)
//! 16      8     d (u64)
//! 24      ...   N·d values, row-major
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{Dtype, EmbeddingSet, RoleTag};
use crate::error::{Error, Result};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u16 = 1;
pub const EMB1_HEADER_LEN: usize = 24;

pub const TRAINING_LOG_HEADER: &str = "epoch,loss,val_metric";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Emb1,
    Csv,
}

impl EmbeddingFormat {
    /// `.csv` files are CSV; everything else is treated as EMB1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Emb1,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let set = match format {
        EmbeddingFormat::Emb1 => decode_emb1(&bytes, path)?,
        EmbeddingFormat::Csv => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::format(path, format!("byte {}", e.valid_up_to()), "not UTF-8"))?;
            parse_embeddings_csv(text, path)?
        }
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(set.with_model(stem))
}

/// Writes EMB1 or CSV depending on the file extension.
pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match EmbeddingFormat::from_path(path) {
        EmbeddingFormat::Emb1 => write_file(path, &encode_emb1(set)),
        EmbeddingFormat::Csv => write_file(path, embeddings_to_csv(set).as_bytes()),
    }
}

pub fn encode_emb1(set: &EmbeddingSet) -> Vec<u8> {
    let dtype = set.dtype();
    let mut out = Vec::with_capacity(EMB1_HEADER_LEN + set.data().len() * dtype.width());
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(0);
    out.extend_from_slice(&(set.n() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u64).to_le_bytes());
    match dtype {
        Dtype::F32 => {
            for &v in set.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in set.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Decodes an EMB1 buffer. `origin` is only used in error messages.
pub fn decode_emb1(bytes: &[u8], origin: &Path) -> Result<EmbeddingSet> {
    let fail = |pos: usize, msg: String| Error::format(origin, format!("byte {pos}"), msg);
    if bytes.len() < EMB1_HEADER_LEN {
        return Err(fail(
            bytes.len(),
            format!("header truncated: {} of {EMB1_HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[0..4] != EMB1_MAGIC {
        return Err(fail(0, "bad magic, expected \"EMB1\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EMB1_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(bytes[6])
        .ok_or_else(|| fail(6, format!("unknown dtype code {}", bytes[6])))?;
    if bytes[7] != 0 {
        return Err(fail(7, "reserved byte must be zero".into()));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if n == 0 {
        return Err(Error::EmptySet(format!("{}: N = 0 in header", origin.display())));
    }
    if dim == 0 {
        return Err(fail(16, "feature dimension d = 0".into()));
    }
    let count = n
        .checked_mul(dim)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| fail(8, format!("N·d overflows: {n}·{dim}")))?;
    let width = dtype.width();
    let payload = &bytes[EMB1_HEADER_LEN..];
    let expected = count
        .checked_mul(width)
        .ok_or_else(|| fail(8, "payload size overflows".into()))?;
    if payload.len() < expected {
        return Err(fail(
            bytes.len(),
            format!(
                "payload truncated: {} of {} values present",
                payload.len() / width,
                count
            ),
        ));
    }
    if payload.len() > expected {
        return Err(fail(
            EMB1_HEADER_LEN + expected,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }

    let (n, dim) = (n as usize, dim as usize);
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "{}: non-finite value at byte {} (row {}, column {})",
            origin.display(),
            EMB1_HEADER_LEN + i * width,
            i / dim,
            i % dim
        )));
    }
    match dtype {
        Dtype::F64 => EmbeddingSet::from_rows_f64(n, dim, data),
        Dtype::F32 => EmbeddingSet::from_rows_f32(n, dim, data.into_iter().map(|v| v as f32).collect()),
    }
}

/// Parses headerless CSV, one sample per line.
pub fn parse_embeddings_csv(text: &str, origin: &Path) -> Result<EmbeddingSet> {
    let mut data = Vec::new();
    let mut dim = None;
    let mut n = 0;
    for (line_no, line) in text.lines().enumerate() {
        let row = line_no + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut width = 0;
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(origin, format!("row {row}, column {}", col + 1), format!("not a number: `{field}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "{}: non-finite value at row {row}, column {}",
                    origin.display(),
                    col + 1
                )));
            }
            data.push(v);
            width += 1;
        }
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::format(
                    origin,
                    format!("row {row}"),
                    format!("ragged row: {width} fields, expected {d}"),
                ))
            }
            Some(_) => {}
        }
        n += 1;
    }
    let dim = dim.ok_or_else(|| Error::EmptySet(format!("{}: no rows", origin.display())))?;
    EmbeddingSet::from_rows_f64(n, dim, data)
}

/// Shortest round-trip decimal form, which never needs more than 17 significant digits.
pub fn embeddings_to_csv(set: &EmbeddingSet) -> String {
    let mut out = String::new();
    for row in set.rows() {
        let line: Vec<String> = match set.dtype() {
            Dtype::F32 => row.iter().map(|&v| (v as f32).to_string()).collect(),
            Dtype::F64 => row.iter().map(|v| v.to_string()).collect(),
        };
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// A performance value is attributed either to a role or to a named model
/// (such as a specialized task-specific network).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ModelRef {
    Role(RoleTag),
    Model(String),
}

impl From<String> for ModelRef {
    fn from(s: String) -> Self {
        match s.parse::<RoleTag>() {
            Ok(role) => ModelRef::Role(role),
            Err(_) => ModelRef::Model(s),
        }
    }
}

impl From<ModelRef> for String {
    fn from(m: ModelRef) -> Self {
        m.to_string()
    }
}

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRef::Role(r) => f.write_str(r.as_str()),
            ModelRef::Model(m) => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceRecord {
    pub role_or_model: ModelRef,
    pub metric_name: String,
    pub value: f64,
}

/// GPU-hours spent fine-tuning and training from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeRecord {
    pub gpu_hours_ft: f64,
    pub gpu_hours_scratch: f64,
}

/// One task entry exactly as written in the manifest document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub task_id: String,
    pub task_kind: String,
    pub metric_name: String,
    pub higher_is_better: bool,
    pub embeddings: BTreeMap<RoleTag, PathBuf>,
    #[serde(default)]
    pub performance: Vec<PerformanceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute: Option<ComputeRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub training_logs: BTreeMap<RoleTag, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDocument {
    pub tasks: Vec<TaskEntry>,
}

impl ManifestDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_json().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: u32,
    pub loss: f64,
    pub val_metric: f64,
}

/// Per-epoch training loss and validation metric.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn new(rows: Vec<LogRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidValue("training log has no rows".into()));
        }
        for (i, w) in rows.windows(2).enumerate() {
            if w[1].epoch <= w[0].epoch {
                return Err(Error::InvalidValue(format!(
                    "epochs not strictly increasing at row {}",
                    i + 2
                )));
            }
        }
        Ok(TrainingLog { rows })
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == TRAINING_LOG_HEADER => {}
            Some((i, header)) => {
                return Err(Error::format(
                    origin,
                    format!("row {}", i + 1),
                    format!("expected header `{TRAINING_LOG_HEADER}`, found `{}`", header.trim()),
                ))
            }
            None => return Err(Error::format(origin, "row 1", "empty training log")),
        }
        let mut rows = Vec::new();
        let mut last_epoch: Option<u32> = None;
        for (i, line) in lines {
            let row_no = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::format(
                    origin,
                    format!("row {row_no}"),
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            }
            let bad = |col: usize| {
                Error::format(origin, format!("row {row_no}, column {col}"), format!("invalid value `{}`", fields[col - 1]))
            };
            let epoch: u32 = fields[0].parse().map_err(|_| bad(1))?;
            let loss: f64 = fields[1].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| bad(2))?;
            let val_metric: f64 = fields[2].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| bad(3))?;
            if last_epoch.is_some_and(|e| epoch <= e) {
                return Err(Error::format(
                    origin,
                    format!("row {row_no}"),
                    "epochs must be strictly increasing",
                ));
            }
            last_epoch = Some(epoch);
            rows.push(LogRow { epoch, loss, val_metric });
        }
        if rows.is_empty() {
            return Err(Error::format(origin, "row 2", "training log has no data rows"));
        }
        Ok(TrainingLog { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::format(path, format!("byte {}", e.utf8_error().valid_up_to()), "not UTF-8"))?;
        Self::parse(&text, path)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRAINING_LOG_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.val_metric));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// A manifest task with every referenced artifact loaded and validated.
#[derive(Debug, Clone)]
pub struct TaskManifest {
    pub task_id: String,
    pub task_kind: String,
    pub metric_name: String,
    pub higher_is_better: bool,
    pub embedding_paths: BTreeMap<RoleTag, PathBuf>,
    pub embeddings: BTreeMap<RoleTag, EmbeddingSet>,
    pub performance: Vec<PerformanceRecord>,
    pub compute: Option<ComputeRecord>,
    pub training_log_paths: BTreeMap<RoleTag, PathBuf>,
    pub training_logs: BTreeMap<RoleTag, TrainingLog>,
}

impl TaskManifest {
    pub fn embedding(&self, role: RoleTag) -> Result<&EmbeddingSet> {
        self.embeddings.get(&role).ok_or_else(|| Error::MissingArtifact {
            task: self.task_id.clone(),
            what: role.as_str().into(),
        })
    }

    pub fn performance_of(&self, target: &ModelRef) -> Option<&PerformanceRecord> {
        self.performance.iter().find(|p| &p.role_or_model == target)
    }

    /// The specialized-model record: role `specialized`, or else the sole
    /// record attributed to a named model.
    pub fn specialized_performance(&self) -> Option<&PerformanceRecord> {
        if let Some(p) = self.performance_of(&ModelRef::Role(RoleTag::Specialized)) {
            return Some(p);
        }
        let mut named = self
            .performance
            .iter()
            .filter(|p| matches!(p.role_or_model, ModelRef::Model(_)));
        match (named.next(), named.next()) {
            (Some(p), None) => Some(p),
            _ => None,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a manifest and every file it references. Relative paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<TaskManifest>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let doc: ManifestDocument = serde_json::from_slice(&bytes).map_err(|e| {
        Error::format(path, format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = std::collections::BTreeSet::new();
    let mut tasks = Vec::with_capacity(doc.tasks.len());
    for (index, entry) in doc.tasks.into_iter().enumerate() {
        if !seen.insert(entry.task_id.clone()) {
            return Err(Error::format(
                path,
                format!("tasks[{index}]"),
                format!("duplicate task_id `{}`", entry.task_id),
            ));
        }
        tasks.push(load_task(entry, base, path, index)?);
    }
    Ok(tasks)
}

fn load_task(entry: TaskEntry, base: &Path, manifest: &Path, index: usize) -> Result<TaskManifest> {
    let task = entry.task_id.clone();
    let mut embeddings = BTreeMap::new();
    let mut embedding_paths = BTreeMap::new();
    for (&role, rel) in &entry.embeddings {
        if !role.shares_architecture() {
            return Err(Error::format(
                manifest,
                format!("tasks[{index}].embeddings"),
                format!("role `{role}` cannot carry embeddings"),
            ));
        }
        let file = resolve(base, rel);
        if !file.is_file() {
            return Err(Error::MissingArtifact {
                task: task.clone(),
                what: format!("{role} embeddings at {}", file.display()),
            });
        }
        let set = load_embeddings(&file, EmbeddingFormat::from_path(&file))?
            .with_role(role)
            .with_task(task.clone());
        embeddings.insert(role, set);
        embedding_paths.insert(role, file);
    }

    let mut dims = embeddings.iter().map(|(r, s)| (*r, s.dim()));
    if let Some((first_role, first_dim)) = dims.next() {
        for (role, dim) in dims {
            if dim != first_dim {
                return Err(Error::DimensionMismatch {
                    context: format!("task `{task}`: {first_role} vs {role}"),
                    left: first_dim,
                    right: dim,
                });
            }
        }
    }

    let mut training_logs = BTreeMap::new();
    let mut training_log_paths = BTreeMap::new();
    for (&role, rel) in &entry.training_logs {
        if !matches!(role, RoleTag::Finetuned | RoleTag::TrainedFromScratch) {
            return Err(Error::format(
                manifest,
                format!("tasks[{index}].training_logs"),
                format!("training logs are only accepted for finetuned and trained_from_scratch, found `{role}`"),
            ));
        }
        let file = resolve(base, rel);
        if !file.is_file() {
            return Err(Error::MissingArtifact {
                task: task.clone(),
                what: format!("{role} training log at {}", file.display()),
            });
        }
        training_logs.insert(role, TrainingLog::load(&file)?);
        training_log_paths.insert(role, file);
    }

    Ok(TaskManifest {
        task_id: entry.task_id,
        task_kind: entry.task_kind,
        metric_name: entry.metric_name,
        higher_is_better: entry.higher_is_better,
        embedding_paths,
        embeddings,
        performance: entry.performance,
        compute: entry.compute,
        training_log_paths,
        training_logs,
    })
}
