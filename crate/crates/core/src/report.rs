//! The combined analysis: alignment, gains, correlations, efficiency,
//! convergence and plot tables for a whole manifest.
//!
//! Sections that cannot be computed from the available inputs are left
//! empty and explained in [`AnalysisBundle::notices`].

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::alignment::{alignment_csv, alignment_report, AlignmentReport};
use crate::embedding::RoleTag;
use crate::error::{Error, Result};
use crate::format::fixed;
use crate::kernel::{Estimator, KernelConfig};
use crate::store::TaskManifest;
use crate::transfer::{
    convergence_csv, convergence_stats, correlate_alignment_vs_rpg, correlation_csv, efficiency_csv,
    efficiency_ratio, emit_plot_data, perf_pairs, rpg_csv, rpg_for_task, ConvergenceStats, CorrelationResult,
    EfficiencyRecord, PlotTables, Reference, RpgRecord,
};

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub kernel: KernelConfig,
    pub estimator: Estimator,
    pub reference: Reference,
    /// Validation level for epochs-to-threshold; convergence is skipped without it.
    pub threshold: Option<f64>,
    pub digits: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            kernel: KernelConfig::default(),
            estimator: Estimator::BiasedEqualN,
            reference: Reference::Specialized,
            threshold: None,
            digits: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisBundle {
    pub alignment: Vec<AlignmentReport>,
    pub rpg: Vec<RpgRecord>,
    pub correlations: Vec<CorrelationResult>,
    pub efficiency: Vec<EfficiencyRecord>,
    pub convergence: Vec<ConvergenceStats>,
    pub notices: Vec<String>,
    #[serde(skip)]
    pub plots: PlotTables,
}

/// Runs every analysis that the manifest supports. Tasks are processed in
/// ascending `task_id` order.
pub fn analyze(tasks: &[TaskManifest], opts: &ReportOptions) -> AnalysisBundle {
    let mut sorted: Vec<&TaskManifest> = tasks.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut notices = Vec::new();

    let computed: Vec<(String, Result<AlignmentReport>)> = {
        use rayon::prelude::*;
        sorted
            .par_iter()
            .map(|t| (t.task_id.clone(), alignment_report(t, &opts.kernel, opts.estimator)))
            .collect()
    };
    let mut alignment = Vec::new();
    for (id, res) in computed {
        match res {
            Ok(r) => {
                if r.saturated {
                    notices.push(format!(
                        "alignment: kernel saturated for `{id}`; consider --median-heuristic"
                    ));
                }
                alignment.push(r);
            }
            Err(e) => notices.push(format!("alignment: skipped `{id}`: {e}")),
        }
    }

    let mut rpg = Vec::new();
    for t in &sorted {
        match rpg_for_task(t, opts.reference) {
            Ok(r) => rpg.push(r),
            Err(e) => notices.push(format!("rpg: skipped `{}`: {e}", t.task_id)),
        }
    }

    let correlations = if alignment.is_empty() || rpg.is_empty() {
        notices.push("correlation: omitted, needs both alignment and rpg data".into());
        Vec::new()
    } else {
        correlate_alignment_vs_rpg(&alignment, &rpg).unwrap_or_else(|e| {
            notices.push(format!("correlation: omitted: {e}"));
            Vec::new()
        })
    };

    let mut efficiency = Vec::new();
    for t in &sorted {
        if let Some(c) = &t.compute {
            match efficiency_ratio(&t.task_id, c) {
                Ok(e) => efficiency.push(e),
                Err(e) => notices.push(format!("efficiency: skipped `{}`: {e}", t.task_id)),
            }
        }
    }
    if efficiency.is_empty() {
        notices.push("efficiency: omitted, no compute records".into());
    }

    let mut convergence = Vec::new();
    match opts.threshold {
        None => notices.push("convergence: omitted, pass --threshold to enable".into()),
        Some(threshold) => {
            for t in &sorted {
                let ft = t.training_logs.get(&RoleTag::Finetuned);
                let sc = t.training_logs.get(&RoleTag::TrainedFromScratch);
                if let (Some(ft), Some(sc)) = (ft, sc) {
                    convergence.push(convergence_stats(&t.task_id, ft, sc, threshold));
                }
            }
            if convergence.is_empty() {
                notices.push("convergence: omitted, no task has both training logs".into());
            }
        }
    }

    let plots = emit_plot_data(&alignment, &rpg, &perf_pairs(sorted.iter().copied()), opts.digits);

    AnalysisBundle {
        alignment,
        rpg,
        correlations,
        efficiency,
        convergence,
        notices,
        plots,
    }
}

pub const ALIGNMENT_FILE: &str = "alignment.csv";
pub const RPG_FILE: &str = "rpg.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const EFFICIENCY_FILE: &str = "efficiency.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const PERF_VS_D2S_FILE: &str = "plot_perf_vs_d2s.csv";
pub const DISTANCE_VS_RPG_FILE: &str = "plot_distance_vs_rpg.csv";
pub const SUMMARY_FILE: &str = "summary.json";

impl AnalysisBundle {
    /// Writes each non-empty section plus both plot tables and `summary.json`.
    pub fn write_to(&self, dir: impl AsRef<Path>, digits: usize) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        if !self.alignment.is_empty() {
            write(ALIGNMENT_FILE, alignment_csv(&self.alignment, digits))?;
        }
        if !self.rpg.is_empty() {
            write(RPG_FILE, rpg_csv(&self.rpg, digits))?;
        }
        if !self.correlations.is_empty() {
            write(CORRELATION_FILE, correlation_csv(&self.correlations, digits))?;
        }
        if !self.efficiency.is_empty() {
            write(EFFICIENCY_FILE, efficiency_csv(&self.efficiency, digits))?;
        }
        if !self.convergence.is_empty() {
            write(CONVERGENCE_FILE, convergence_csv(&self.convergence, digits))?;
        }
        write(PERF_VS_D2S_FILE, self.plots.perf_vs_d2s.clone())?;
        write(DISTANCE_VS_RPG_FILE, self.plots.distance_vs_rpg.clone())?;
        let mut json = serde_json::to_string_pretty(self).expect("bundle serializes");
        json.push('\n');
        write(SUMMARY_FILE, json)
    }

    /// Display precision: 4 decimals for distances, 2 for ratios and percentages.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        if !self.alignment.is_empty() {
            out.push_str("alignment (MMD²)\n");
            for r in &self.alignment {
                out.push_str(&format!(
                    "  {:<28} D2R {}  D2P {}  D2S {}\n",
                    r.task_id,
                    fixed(r.d2r, 4),
                    fixed(r.d2p, 4),
                    fixed(r.d2s, 4)
                ));
            }
        }
        if !self.rpg.is_empty() {
            out.push_str("relative performance gain\n");
            for r in &self.rpg {
                out.push_str(&format!(
                    "  {:<28} {}% vs {}\n",
                    r.task_id,
                    fixed(r.rpg_percent, 2),
                    r.reference.as_str()
                ));
            }
        }
        if !self.correlations.is_empty() {
            out.push_str("correlation with rpg\n");
            for c in &self.correlations {
                out.push_str(&format!(
                    "  r({}, rpg) = {}  p = {:.4e}  n = {}  [{}]\n",
                    c.x_name,
                    fixed(c.r, 4),
                    c.p_two_sided,
                    c.n_points,
                    c.reference.as_str()
                ));
            }
        }
        if !self.efficiency.is_empty() {
            out.push_str("fine-tuning efficiency (FT/Scratch GPU-hours)\n");
            for e in &self.efficiency {
                out.push_str(&format!("  {:<28} {}\n", e.task_id, fixed(e.ratio, 2)));
            }
        }
        if !self.convergence.is_empty() {
            out.push_str("epochs to threshold (ft / scratch)\n");
            let opt = |v: Option<u32>| v.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
            for c in &self.convergence {
                out.push_str(&format!(
                    "  {:<28} {} / {}  speedup {}\n",
                    c.task_id,
                    opt(c.epochs_ft),
                    opt(c.epochs_scratch),
                    c.speedup.map(|s| fixed(s, 2)).unwrap_or_else(|| "-".into())
                ));
            }
        }
        for n in &self.notices {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}
