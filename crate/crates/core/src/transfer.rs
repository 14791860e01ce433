//! Relating alignment to fine-tuning benefit: relative performance gain,
//! correlation of distances with gain, compute efficiency and convergence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentReport, DistanceMetric};
use crate::embedding::RoleTag;
use crate::error::{Error, Result};
use crate::format::{csv_escape, sig};
use crate::stats::{pearson_p_two_sided, pearson_r};
use crate::store::{ComputeRecord, ModelRef, TaskManifest, TrainingLog};

pub const RPG_CSV_HEADER: &str = "task_id,reference,rpg_percent";
pub const CORRELATION_CSV_HEADER: &str = "x,y,reference,n_points,r,p_two_sided";
pub const EFFICIENCY_CSV_HEADER: &str = "task_id,gpu_hours_ft,gpu_hours_scratch,ratio";
pub const CONVERGENCE_CSV_HEADER: &str = "task_id,threshold,epochs_ft,epochs_scratch,speedup";
pub const PERF_VS_D2S_HEADER: &str = "task_id,perf_scratch,perf_finetuned,d2s";
pub const DISTANCE_VS_RPG_HEADER: &str = "task_id,metric,distance,rpg_percent,reference";

/// The model a fine-tuned result is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    RandomWeight,
    Specialized,
}

impl Reference {
    pub fn as_str(self) -> &'static str {
        match self {
            Reference::RandomWeight => "random_weight",
            Reference::Specialized => "specialized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpgRecord {
    pub task_id: String,
    pub reference: Reference,
    pub rpg_percent: f64,
}

/// Relative performance gain in percent, `(p_ft − p_ref) / p_ref × 100`.
///
/// Assumes a higher-is-better metric.
pub fn rpg(p_ft: f64, p_ref: f64) -> Result<f64> {
    if !p_ft.is_finite() || !p_ref.is_finite() {
        return Err(Error::InvalidValue(format!(
            "performance values must be finite, got {p_ft} and {p_ref}"
        )));
    }
    if p_ref == 0.0 {
        return Err(Error::DivisionByZero("reference performance is zero".into()));
    }
    Ok((p_ft - p_ref) / p_ref * 100.0)
}

/// RPG of the fine-tuned model over `reference` from a task's performance records.
pub fn rpg_for_task(task: &TaskManifest, reference: Reference) -> Result<RpgRecord> {
    if !task.higher_is_better {
        return Err(Error::UnsupportedMetricDirection {
            metric: task.metric_name.clone(),
        });
    }
    let missing = |what: &str| Error::MissingArtifact {
        task: task.task_id.clone(),
        what: format!("{what} performance record"),
    };
    let ft = task
        .performance_of(&ModelRef::Role(RoleTag::Finetuned))
        .ok_or_else(|| missing("finetuned"))?;
    let reference_record = match reference {
        Reference::RandomWeight => task.performance_of(&ModelRef::Role(RoleTag::RandomWeight)),
        Reference::Specialized => task.specialized_performance(),
    }
    .ok_or_else(|| missing(reference.as_str()))?;
    Ok(RpgRecord {
        task_id: task.task_id.clone(),
        reference,
        rpg_percent: rpg(ft.value, reference_record.value)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub x_name: String,
    pub y_name: String,
    pub reference: Reference,
    pub n_points: usize,
    pub r: f64,
    pub p_two_sided: f64,
}

/// Pearson r (and two-sided p) of each distance against RPG, per reference.
///
/// Tasks are matched by id and visited in ascending id order.
pub fn correlate_alignment_vs_rpg(
    reports: &[AlignmentReport],
    rpgs: &[RpgRecord],
) -> Result<Vec<CorrelationResult>> {
    let by_task: BTreeMap<&str, &AlignmentReport> =
        reports.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut by_reference: BTreeMap<Reference, BTreeMap<&str, f64>> = BTreeMap::new();
    for rec in rpgs {
        by_reference
            .entry(rec.reference)
            .or_default()
            .insert(rec.task_id.as_str(), rec.rpg_percent);
    }
    if by_reference.is_empty() {
        return Err(Error::InsufficientPoints { needed: 3, got: 0 });
    }

    let mut out = Vec::new();
    for (reference, gains) in by_reference {
        let matched: Vec<(&AlignmentReport, f64)> = gains
            .iter()
            .filter_map(|(id, &g)| by_task.get(id).map(|r| (*r, g)))
            .collect();
        if matched.len() < 3 {
            return Err(Error::InsufficientPoints {
                needed: 3,
                got: matched.len(),
            });
        }
        let ys: Vec<f64> = matched.iter().map(|(_, g)| *g).collect();
        for metric in DistanceMetric::ALL {
            let xs: Vec<f64> = matched.iter().map(|(r, _)| r.distance(metric)).collect();
            let r = pearson_r(&xs, &ys).map_err(|e| match e {
                Error::DegenerateSeries(which) => Error::DegenerateSeries(format!(
                    "{} ({} vs rpg)",
                    if which == "x" { metric.as_str() } else { "rpg" },
                    metric.as_str()
                )),
                other => other,
            })?;
            out.push(CorrelationResult {
                x_name: metric.as_str().into(),
                y_name: "rpg".into(),
                reference,
                n_points: xs.len(),
                r,
                p_two_sided: pearson_p_two_sided(r, xs.len())?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    pub task_id: String,
    pub gpu_hours_ft: f64,
    pub gpu_hours_scratch: f64,
    /// Fine-tuning hours over scratch hours, dimensionless.
    pub ratio: f64,
}

pub fn efficiency_ratio(task_id: &str, compute: &ComputeRecord) -> Result<EfficiencyRecord> {
    for (name, v) in [
        ("gpu_hours_ft", compute.gpu_hours_ft),
        ("gpu_hours_scratch", compute.gpu_hours_scratch),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidValue(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(EfficiencyRecord {
        task_id: task_id.into(),
        gpu_hours_ft: compute.gpu_hours_ft,
        gpu_hours_scratch: compute.gpu_hours_scratch,
        ratio: compute.gpu_hours_ft / compute.gpu_hours_scratch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub task_id: String,
    pub threshold: f64,
    pub epochs_ft: Option<u32>,
    pub epochs_scratch: Option<u32>,
    /// `epochs_scratch / epochs_ft`; needs both reached and a nonzero fine-tuning epoch.
    pub speedup: Option<f64>,
}

/// First epoch whose validation metric reaches `threshold`.
pub fn epochs_to_threshold(log: &TrainingLog, threshold: f64) -> Option<u32> {
    log.rows()
        .iter()
        .find(|r| r.val_metric >= threshold)
        .map(|r| r.epoch)
}

pub fn convergence_stats(
    task_id: &str,
    log_ft: &TrainingLog,
    log_scratch: &TrainingLog,
    threshold: f64,
) -> ConvergenceStats {
    let epochs_ft = epochs_to_threshold(log_ft, threshold);
    let epochs_scratch = epochs_to_threshold(log_scratch, threshold);
    let speedup = match (epochs_ft, epochs_scratch) {
        (Some(ft), Some(sc)) if ft > 0 => Some(f64::from(sc) / f64::from(ft)),
        _ => None,
    };
    ConvergenceStats {
        task_id: task_id.into(),
        threshold,
        epochs_ft,
        epochs_scratch,
        speedup,
    }
}

/// Scratch and fine-tuned performance of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfPair {
    pub task_id: String,
    pub perf_scratch: f64,
    pub perf_finetuned: f64,
}

/// Tasks carrying both a fine-tuned and a trained-from-scratch record.
pub fn perf_pairs<'a>(tasks: impl IntoIterator<Item = &'a TaskManifest>) -> Vec<PerfPair> {
    let mut out: Vec<PerfPair> = tasks
        .into_iter()
        .filter_map(|t| {
            let ft = t.performance_of(&ModelRef::Role(RoleTag::Finetuned))?;
            let sc = t.performance_of(&ModelRef::Role(RoleTag::TrainedFromScratch))?;
            Some(PerfPair {
                task_id: t.task_id.clone(),
                perf_scratch: sc.value,
                perf_finetuned: ft.value,
            })
        })
        .collect();
    out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    out
}

/// CSV bodies for the two scatter layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTables {
    /// Scratch vs fine-tuned performance, sized by D2S.
    pub perf_vs_d2s: String,
    /// Each distance against RPG, one row per (task, metric, reference).
    pub distance_vs_rpg: String,
}

pub fn emit_plot_data(
    reports: &[AlignmentReport],
    rpgs: &[RpgRecord],
    perf: &[PerfPair],
    digits: usize,
) -> PlotTables {
    let by_task: BTreeMap<&str, &AlignmentReport> =
        reports.iter().map(|r| (r.task_id.as_str(), r)).collect();

    let mut perf_vs_d2s = format!("{PERF_VS_D2S_HEADER}\n");
    let mut perf_sorted: Vec<&PerfPair> = perf.iter().collect();
    perf_sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    for p in perf_sorted {
        if let Some(r) = by_task.get(p.task_id.as_str()) {
            perf_vs_d2s.push_str(&format!(
                "{},{},{},{}\n",
                csv_escape(&p.task_id),
                sig(p.perf_scratch, digits),
                sig(p.perf_finetuned, digits),
                sig(r.d2s, digits)
            ));
        }
    }

    let mut rows: Vec<(&str, DistanceMetric, Reference, f64, f64)> = Vec::new();
    for g in rpgs {
        if let Some(r) = by_task.get(g.task_id.as_str()) {
            for metric in DistanceMetric::ALL {
                rows.push((&g.task_id, metric, g.reference, r.distance(metric), g.rpg_percent));
            }
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    let mut distance_vs_rpg = format!("{DISTANCE_VS_RPG_HEADER}\n");
    for (task, metric, reference, distance, gain) in rows {
        distance_vs_rpg.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_escape(task),
            metric.as_str(),
            sig(distance, digits),
            sig(gain, digits),
            reference.as_str()
        ));
    }

    PlotTables {
        perf_vs_d2s,
        distance_vs_rpg,
    }
}

pub fn rpg_csv(records: &[RpgRecord], digits: usize) -> String {
    let mut sorted: Vec<&RpgRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.task_id, a.reference).cmp(&(&b.task_id, b.reference)));
    let mut out = format!("{RPG_CSV_HEADER}\n");
    for r in sorted {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_escape(&r.task_id),
            r.reference.as_str(),
            sig(r.rpg_percent, digits)
        ));
    }
    out
}

pub fn correlation_csv(results: &[CorrelationResult], digits: usize) -> String {
    let mut out = format!("{CORRELATION_CSV_HEADER}\n");
    for c in results {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.x_name,
            c.y_name,
            c.reference.as_str(),
            c.n_points,
            sig(c.r, digits),
            sig(c.p_two_sided, digits)
        ));
    }
    out
}

pub fn efficiency_csv(records: &[EfficiencyRecord], digits: usize) -> String {
    let mut sorted: Vec<&EfficiencyRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut out = format!("{EFFICIENCY_CSV_HEADER}\n");
    for e in sorted {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_escape(&e.task_id),
            sig(e.gpu_hours_ft, digits),
            sig(e.gpu_hours_scratch, digits),
            sig(e.ratio, digits)
        ));
    }
    out
}

pub fn convergence_csv(stats: &[ConvergenceStats], digits: usize) -> String {
    let opt = |v: Option<u32>| v.map(|e| e.to_string()).unwrap_or_default();
    let mut sorted: Vec<&ConvergenceStats> = stats.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut out = format!("{CONVERGENCE_CSV_HEADER}\n");
    for s in sorted {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_escape(&s.task_id),
            sig(s.threshold, digits),
            opt(s.epochs_ft),
            opt(s.epochs_scratch),
            s.speedup.map(|v| sig(v, digits)).unwrap_or_default()
        ));
    }
    out
}
