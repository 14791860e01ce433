//! Task-alignment distances between the fine-tuned model's features and
//! those of its architectural counterparts:
//!
//! * **D2R**: MMD² to the random-weight model,
//! * **D2P**: MMD² to the pretrained model before fine-tuning,
//! * **D2S**: MMD² to the same architecture trained from scratch.
//!
//! A small D2P means fine-tuning barely moved the representation, i.e. the
//! downstream task is well aligned with pretraining.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingSet, RoleTag};
use crate::error::{Error, Result};
use crate::format::{csv_escape, sig};
use crate::kernel::{mmd2_biased, BandwidthMode, Estimator, KernelConfig, MmdResult};
use crate::store::TaskManifest;

pub const ALIGNMENT_CSV_HEADER: &str = "task_id,d2r,d2p,d2s,n,dim,sigma,kernel_mode";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub task_id: String,
    pub d2r: f64,
    pub d2p: f64,
    pub d2s: f64,
    /// Sample count of the fine-tuned set.
    pub n: usize,
    pub dim: usize,
    pub sigma_d2r: f64,
    pub sigma_d2p: f64,
    pub sigma_d2s: f64,
    pub kernel_mode: BandwidthMode,
    pub estimator: Estimator,
    pub saturated: bool,
}

impl AlignmentReport {
    pub fn distance(&self, metric: DistanceMetric) -> f64 {
        match metric {
            DistanceMetric::D2r => self.d2r,
            DistanceMetric::D2p => self.d2p,
            DistanceMetric::D2s => self.d2s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    D2r,
    D2p,
    D2s,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [DistanceMetric::D2r, DistanceMetric::D2p, DistanceMetric::D2s];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::D2r => "d2r",
            DistanceMetric::D2p => "d2p",
            DistanceMetric::D2s => "d2s",
        }
    }

    /// The role compared against the fine-tuned set.
    pub fn counterpart(self) -> RoleTag {
        match self {
            DistanceMetric::D2r => RoleTag::RandomWeight,
            DistanceMetric::D2p => RoleTag::Pretrained,
            DistanceMetric::D2s => RoleTag::TrainedFromScratch,
        }
    }
}

fn check_role(set: &EmbeddingSet, expected: RoleTag) -> Result<()> {
    match set.role {
        Some(found) if found != expected => Err(Error::Role {
            expected: expected.to_string(),
            found: found.to_string(),
        }),
        _ => Ok(()),
    }
}

fn role_pair_distance(
    finetuned: &EmbeddingSet,
    other: &EmbeddingSet,
    other_role: RoleTag,
    kernel: &KernelConfig,
    estimator: Estimator,
) -> Result<MmdResult> {
    check_role(finetuned, RoleTag::Finetuned)?;
    check_role(other, other_role)?;
    if !finetuned.task_id.is_empty() && !other.task_id.is_empty() && finetuned.task_id != other.task_id {
        return Err(Error::TaskMismatch {
            left: finetuned.task_id.clone(),
            right: other.task_id.clone(),
        });
    }
    mmd2_biased(finetuned, other, kernel, estimator)
}

pub fn d2r(
    finetuned: &EmbeddingSet,
    random: &EmbeddingSet,
    kernel: &KernelConfig,
    estimator: Estimator,
) -> Result<MmdResult> {
    role_pair_distance(finetuned, random, RoleTag::RandomWeight, kernel, estimator)
}

pub fn d2p(
    finetuned: &EmbeddingSet,
    pretrained: &EmbeddingSet,
    kernel: &KernelConfig,
    estimator: Estimator,
) -> Result<MmdResult> {
    role_pair_distance(finetuned, pretrained, RoleTag::Pretrained, kernel, estimator)
}

pub fn d2s(
    finetuned: &EmbeddingSet,
    scratch: &EmbeddingSet,
    kernel: &KernelConfig,
    estimator: Estimator,
) -> Result<MmdResult> {
    role_pair_distance(finetuned, scratch, RoleTag::TrainedFromScratch, kernel, estimator)
}

/// D2R, D2P and D2S for one task, all against the same fine-tuned set.
///
/// Under the median heuristic each role pair resolves its own σ from the
/// two sets it compares.
pub fn alignment_report(task: &TaskManifest, kernel: &KernelConfig, estimator: Estimator) -> Result<AlignmentReport> {
    // Check presence up front so the error names the first missing role.
    for role in RoleTag::ARCHITECTURE_ROLES {
        task.embedding(role)?;
    }
    let ft = task.embedding(RoleTag::Finetuned)?;
    let r = d2r(ft, task.embedding(RoleTag::RandomWeight)?, kernel, estimator)?;
    let p = d2p(ft, task.embedding(RoleTag::Pretrained)?, kernel, estimator)?;
    let s = d2s(ft, task.embedding(RoleTag::TrainedFromScratch)?, kernel, estimator)?;
    Ok(AlignmentReport {
        task_id: task.task_id.clone(),
        d2r: r.value,
        d2p: p.value,
        d2s: s.value,
        n: ft.n(),
        dim: ft.dim(),
        sigma_d2r: r.resolved_sigma,
        sigma_d2p: p.resolved_sigma,
        sigma_d2s: s.resolved_sigma,
        kernel_mode: kernel.mode,
        estimator,
        saturated: r.saturated || p.saturated || s.saturated,
    })
}

/// Reports for every task, sorted by `task_id`.
pub fn alignment_reports(
    tasks: &[TaskManifest],
    kernel: &KernelConfig,
    estimator: Estimator,
) -> Result<Vec<AlignmentReport>> {
    let mut reports = tasks
        .par_iter()
        .map(|t| alignment_report(t, kernel, estimator))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(reports)
}

/// CSV with the fixed alignment header. Under the median heuristic the
/// `sigma` column lists the three per-pair bandwidths as `d2r|d2p|d2s`.
pub fn alignment_csv(reports: &[AlignmentReport], digits: usize) -> String {
    let mut out = format!("{ALIGNMENT_CSV_HEADER}\n");
    for r in reports {
        let sigma = match r.kernel_mode {
            BandwidthMode::Fixed => sig(r.sigma_d2r, digits),
            BandwidthMode::MedianHeuristic => format!(
                "{}|{}|{}",
                sig(r.sigma_d2r, digits),
                sig(r.sigma_d2p, digits),
                sig(r.sigma_d2s, digits)
            ),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_escape(&r.task_id),
            sig(r.d2r, digits),
            sig(r.d2p, digits),
            sig(r.d2s, digits),
            r.n,
            r.dim,
            sigma,
            r.kernel_mode.as_str()
        ));
    }
    out
}

/// Human-readable table with distances at four decimals.
pub fn alignment_table(reports: &[AlignmentReport]) -> String {
    let width = reports.iter().map(|r| r.task_id.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}  {:>6}  {:>5}\n", "task", "D2R", "D2P", "D2S", "n", "dim");
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>6}  {:>5}\n",
            r.task_id, r.d2r, r.d2p, r.d2s, r.n, r.dim
        ));
    }
    out
}
