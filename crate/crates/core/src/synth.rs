//! Seeded synthetic scenarios with a known alignment structure.
//!
//! Every task gets a fine-tuned set drawn from an isotropic unit Gaussian.
//! The other roles are exact translates of it along the first axis:
//!
//! | role                 | offset          |
//! |----------------------|-----------------|
//! | pretrained           | `shifts[t]`     |
//! | trained_from_scratch | `shifts[t] / 2` |
//! | random_weight        | [`RANDOM_SHIFT`] |
//!
//! Performance is linear in the shift, so a well-behaved pipeline recovers
//! a strongly negative correlation between D2P and RPG.
//!
//! # Generator
//!
//! Streams are `Xoshiro256PlusPlus` seeded through SplitMix64
//! (`seed_from_u64`). Stream `k` of a scenario with seed `s` uses the seed
//! `s + k·0x9E3779B97F4A7C15` (wrapping). Normals come from the Box–Muller
//! transform on two 53-bit uniforms `u1 ∈ (0, 1]`, `u2 ∈ [0, 1)`, using both
//! the cosine and sine branches; `ln`, `sin` and `cos` are the `libm`
//! implementations, so output does not depend on the platform's math library.

use std::fs;
use std::path::{Path, PathBuf};

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSet, RoleTag};
use crate::error::{Error, Result};
use crate::store::{
    save_embeddings, ComputeRecord, LogRow, ManifestDocument, ModelRef, PerformanceRecord, TaskEntry, TrainingLog,
};

/// Offset of the random-weight set from the fine-tuned set.
pub const RANDOM_SHIFT: f64 = 5.0;
/// Reference performance shared by every task.
pub const BASE_PERFORMANCE: f64 = 0.6;
/// A validation level both synthetic curves cross within [`EPOCHS`] at the default shifts.
pub const SUGGESTED_THRESHOLD: f64 = 0.5;
pub const EPOCHS: u32 = 100;

const STREAM_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
const PERFORMANCE_STREAM: u64 = 1 << 32;

const TASK_KINDS: [&str; 5] = [
    "classification",
    "segmentation",
    "super_resolution",
    "distortion_correction",
    "modality_translation",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_tasks: usize,
    pub n: usize,
    pub dim: usize,
    pub shifts: Vec<f64>,
    pub gain_slope: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_tasks: 5,
            n: 256,
            dim: 8,
            shifts: vec![0.1, 0.3, 0.6, 1.0, 1.5],
            gain_slope: 0.1,
            noise_sd: 0.0,
            seed: 42,
        }
    }
}

impl ScenarioSpec {
    /// `n_tasks` shifts: a prefix of the default ladder, or an even spacing
    /// over `[0.1, 1.5]` when more than five tasks are asked for.
    pub fn default_shifts(n_tasks: usize) -> Vec<f64> {
        let ladder = ScenarioSpec::default().shifts;
        if n_tasks <= ladder.len() {
            ladder[..n_tasks].to_vec()
        } else {
            let step = 1.4 / (n_tasks - 1) as f64;
            (0..n_tasks).map(|i| 0.1 + step * i as f64).collect()
        }
    }

    /// Fewer than three tasks is allowed so that downstream correlation can
    /// report the shortfall itself.
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 {
            return Err(Error::InvalidValue("n_tasks must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidValue(format!("n must be at least 2, got {}", self.n)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidValue("dim must be at least 1".into()));
        }
        if self.shifts.len() != self.n_tasks {
            return Err(Error::LengthMismatch {
                left: self.n_tasks,
                right: self.shifts.len(),
            });
        }
        if let Some(s) = self.shifts.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidValue(format!("shift {s} must be finite and nonnegative")));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidValue(format!("noise_sd {} must be nonnegative", self.noise_sd)));
        }
        if !self.gain_slope.is_finite() {
            return Err(Error::InvalidValue("gain_slope must be finite".into()));
        }
        Ok(())
    }

    pub fn task_id(&self, t: usize) -> String {
        format!("t{:02}_{}", t + 1, TASK_KINDS[t % TASK_KINDS.len()])
    }
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream.wrapping_mul(STREAM_STRIDE))
}

/// Standard normal deviates via Box–Muller.
struct NormalStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NormalStream {
    fn new(seed: u64) -> Self {
        NormalStream {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * libm::log(u1)).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }
}

/// `n` draws from N(mean, I).
pub fn gen_gaussian_set(n: usize, dim: usize, mean: &[f64], seed: u64) -> Result<EmbeddingSet> {
    if mean.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "gaussian mean".into(),
            left: dim,
            right: mean.len(),
        });
    }
    let mut normals = NormalStream::new(seed);
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        for m in mean {
            data.push(m + normals.next());
        }
    }
    EmbeddingSet::from_rows_f64(n, dim, data)
}

fn axis_offset(dim: usize, shift: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = shift;
    v
}

fn synthetic_log(final_metric: f64, tau: f64) -> TrainingLog {
    let rows = (1..=EPOCHS)
        .map(|e| {
            let decay = libm::exp(-f64::from(e) / tau);
            LogRow {
                epoch: e,
                loss: decay + 0.05,
                val_metric: final_metric * (1.0 - decay),
            }
        })
        .collect();
    TrainingLog::new(rows).expect("synthetic epochs are increasing")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes a complete scenario under `out_dir` and returns the manifest path.
///
/// Layout: `manifest.json`, `embeddings/<task>_<role>.emb1`,
/// `logs/<task>_<role>.csv`.
pub fn gen_scenario(spec: &ScenarioSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    create_dir(&out_dir.join("embeddings"))?;
    create_dir(&out_dir.join("logs"))?;

    let max_shift = spec.shifts.iter().copied().fold(0.0, f64::max);
    let mut perf_noise = NormalStream::new(stream_seed(spec.seed, PERFORMANCE_STREAM));
    let mut doc = ManifestDocument::default();

    for (t, &shift) in spec.shifts.iter().enumerate() {
        let task_id = spec.task_id(t);
        let zero = vec![0.0; spec.dim];
        let finetuned = gen_gaussian_set(spec.n, spec.dim, &zero, stream_seed(spec.seed, t as u64))?;
        let sets = [
            (RoleTag::Finetuned, finetuned.clone()),
            (RoleTag::Pretrained, finetuned.translated(&axis_offset(spec.dim, shift))?),
            (RoleTag::TrainedFromScratch, finetuned.translated(&axis_offset(spec.dim, shift / 2.0))?),
            (RoleTag::RandomWeight, finetuned.translated(&axis_offset(spec.dim, RANDOM_SHIFT))?),
        ];
        let mut embeddings = std::collections::BTreeMap::new();
        for (role, set) in &sets {
            let rel = PathBuf::from("embeddings").join(format!("{task_id}_{role}.emb1"));
            save_embeddings(set, out_dir.join(&rel))?;
            embeddings.insert(*role, rel);
        }

        let advantage = spec.gain_slope * (max_shift - shift);
        let noise = spec.noise_sd * perf_noise.next();
        let p_ft = BASE_PERFORMANCE + advantage + noise;
        let p_scratch = BASE_PERFORMANCE + advantage / 2.0;
        let metric_name = "score".to_string();
        let record = |who: RoleTag, value: f64| PerformanceRecord {
            role_or_model: ModelRef::Role(who),
            metric_name: metric_name.clone(),
            value,
        };
        let performance = vec![
            record(RoleTag::Finetuned, p_ft),
            record(RoleTag::TrainedFromScratch, p_scratch),
            record(RoleTag::RandomWeight, BASE_PERFORMANCE),
            record(RoleTag::Specialized, BASE_PERFORMANCE),
        ];

        let tau_ft = 2.0 + 8.0 * shift;
        let mut training_logs = std::collections::BTreeMap::new();
        for (role, log) in [
            (RoleTag::Finetuned, synthetic_log(p_ft, tau_ft)),
            (RoleTag::TrainedFromScratch, synthetic_log(p_scratch, 2.0 * tau_ft)),
        ] {
            let rel = PathBuf::from("logs").join(format!("{task_id}_{role}.csv"));
            write_bytes(&out_dir.join(&rel), log.to_csv().as_bytes())?;
            training_logs.insert(role, rel);
        }

        doc.tasks.push(TaskEntry {
            task_id,
            task_kind: TASK_KINDS[t % TASK_KINDS.len()].into(),
            metric_name,
            higher_is_better: true,
            embeddings,
            performance,
            compute: Some(ComputeRecord {
                gpu_hours_ft: 5.0 + 10.0 * shift,
                gpu_hours_scratch: 20.0,
            }),
            training_logs,
        });
    }

    let manifest = out_dir.join("manifest.json");
    doc.save(&manifest)?;
    Ok(manifest)
}
