//! The `alignscope` command line.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::alignment::{alignment_csv, alignment_reports, alignment_table};
use crate::embedding::{Dtype, EmbeddingSet};
use crate::error::Error;
use crate::format::{csv_escape, fixed, sig};
use crate::kernel::{mmd2_biased, Estimator, KernelConfig};
use crate::report::{analyze, ReportOptions};
use crate::stats::{pearson_p_two_sided, pearson_r};
use crate::store::{load_embeddings, load_manifest, save_embeddings, ComputeRecord, EmbeddingFormat, TaskManifest, TrainingLog};
use crate::synth::{gen_scenario, ScenarioSpec};
use crate::transfer::{
    convergence_csv, convergence_stats, correlate_alignment_vs_rpg, correlation_csv, efficiency_csv, efficiency_ratio,
    rpg, rpg_csv, rpg_for_task, ConvergenceStats, Reference,
};

/// Environment variable capping the worker count (0 or unset = automatic).
pub const THREADS_ENV: &str = "ALIGNSCOPE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitStatus {
    Success = 0,
    DataError = 1,
    Usage = 2,
}

impl From<ExitStatus> for ExitCode {
    fn from(s: ExitStatus) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
enum Failure {
    Data(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "alignscope", version, about = "Pretraining-to-downstream task alignment diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Human,
    Csv,
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    /// Output style.
    #[arg(long, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,
    /// Significant digits for numeric output.
    #[arg(long, default_value_t = 10)]
    digits: usize,
}

#[derive(Debug, Clone, Args)]
struct KernelArgs {
    /// Fixed Gaussian bandwidth σ.
    #[arg(long, conflicts_with = "median_heuristic")]
    sigma: Option<f64>,
    /// Resolve σ from the median pairwise squared distance.
    #[arg(long)]
    median_heuristic: bool,
    /// Allow sets of different sizes (general biased weights).
    #[arg(long)]
    general_n: bool,
}

impl KernelArgs {
    fn kernel(&self) -> Result<KernelConfig, Failure> {
        if self.median_heuristic {
            Ok(KernelConfig::median_heuristic())
        } else {
            KernelConfig::fixed(self.sigma.unwrap_or(1.0)).map_err(|e| Failure::Usage(e.to_string()))
        }
    }

    fn estimator(&self) -> Estimator {
        if self.general_n {
            Estimator::BiasedGeneral
        } else {
            Estimator::BiasedEqualN
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReferenceArg {
    Random,
    Specialized,
}

impl From<ReferenceArg> for Reference {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::Random => Reference::RandomWeight,
            ReferenceArg::Specialized => Reference::Specialized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Squared MMD between two embedding files.
    Mmd {
        file_a: PathBuf,
        file_b: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// D2R, D2P and D2S for every task of a manifest.
    Align {
        manifest: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Relative performance gain, from a manifest or two values.
    Rpg {
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReferenceArg::Specialized)]
        reference: ReferenceArg,
        /// Fine-tuned performance (with --p-ref, instead of a manifest).
        #[arg(long, requires = "p_ref", conflicts_with = "manifest", allow_hyphen_values = true)]
        p_ft: Option<f64>,
        #[arg(long, requires = "p_ft", allow_hyphen_values = true)]
        p_ref: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Pearson correlation of alignment distances with RPG, or of two series.
    Correlate {
        manifest: Option<PathBuf>,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_enum, default_value_t = ReferenceArg::Specialized)]
        reference: ReferenceArg,
        /// Comma-separated x series (with --ys, instead of a manifest).
        #[arg(long, value_delimiter = ',', requires = "ys", conflicts_with = "manifest", allow_hyphen_values = true)]
        xs: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', requires = "xs", allow_hyphen_values = true)]
        ys: Option<Vec<f64>>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fine-tuning over scratch GPU-hour ratios.
    Efficiency {
        manifest: Option<PathBuf>,
        #[arg(long, requires = "scratch_hours", conflicts_with = "manifest")]
        ft_hours: Option<f64>,
        #[arg(long, requires = "ft_hours")]
        scratch_hours: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Epochs to reach a validation threshold, fine-tuned vs scratch.
    Convergence {
        manifest: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        threshold: f64,
        /// Fine-tuning log (with --scratch, instead of a manifest).
        #[arg(long, requires = "scratch", conflicts_with = "manifest")]
        ft: Option<PathBuf>,
        #[arg(long, requires = "ft")]
        scratch: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Full analysis bundle written to a directory.
    Report {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_enum, default_value_t = ReferenceArg::Specialized)]
        reference: ReferenceArg,
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a seeded synthetic scenario.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        tasks: usize,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Per-task shifts; defaults to 0.1,0.3,0.6,1.0,1.5 (truncated or spread to --tasks).
        #[arg(long, value_delimiter = ',')]
        shifts: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
        gain_slope: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Convert embeddings between CSV and EMB1 (by file extension).
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Storage precision of the written file.
        #[arg(long, value_enum)]
        dtype: Option<DtypeArg>,
    },
}

/// Parses arguments, configures workers and runs the selected command.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage.into()
            } else {
                ExitStatus::Success.into()
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitStatus::Usage.into();
    }
    match execute(cli) {
        Ok(()) => ExitStatus::Success.into(),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitStatus::Usage.into()
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitStatus::DataError.into()
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a nonnegative integer, got `{raw}`"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn load_tasks(manifest: &Path) -> Result<Vec<TaskManifest>, Failure> {
    let tasks = load_manifest(manifest)?;
    if tasks.is_empty() {
        return Err(Failure::Usage(format!("manifest {} has no tasks", manifest.display())));
    }
    Ok(tasks)
}

fn load_any(path: &Path) -> Result<EmbeddingSet, Error> {
    load_embeddings(path, EmbeddingFormat::from_path(path))
}

fn execute(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Mmd {
            file_a,
            file_b,
            kernel,
            output,
        } => cmd_mmd(&file_a, &file_b, &kernel, &output),
        Command::Align {
            manifest,
            kernel,
            output,
        } => cmd_align(&manifest, &kernel, &output),
        Command::Rpg {
            manifest,
            reference,
            p_ft,
            p_ref,
            output,
        } => cmd_rpg(manifest.as_deref(), reference.into(), p_ft.zip(p_ref), &output),
        Command::Correlate {
            manifest,
            kernel,
            reference,
            xs,
            ys,
            output,
        } => cmd_correlate(manifest.as_deref(), &kernel, reference.into(), xs.zip(ys), &output),
        Command::Efficiency {
            manifest,
            ft_hours,
            scratch_hours,
            output,
        } => cmd_efficiency(manifest.as_deref(), ft_hours.zip(scratch_hours), &output),
        Command::Convergence {
            manifest,
            threshold,
            ft,
            scratch,
            output,
        } => cmd_convergence(manifest.as_deref(), threshold, ft.zip(scratch), &output),
        Command::Report {
            manifest,
            out,
            kernel,
            reference,
            threshold,
            output,
        } => cmd_report(&manifest, &out, &kernel, reference.into(), threshold, &output),
        Command::Synth {
            out,
            tasks,
            n,
            dim,
            shifts,
            gain_slope,
            noise_sd,
            seed,
        } => {
            let spec = ScenarioSpec {
                n_tasks: tasks,
                n,
                dim,
                shifts: shifts.unwrap_or_else(|| ScenarioSpec::default_shifts(tasks)),
                gain_slope,
                noise_sd,
                seed,
            };
            let manifest = gen_scenario(&spec, &out)?;
            println!("wrote {} tasks to {}", spec.n_tasks, manifest.display());
            Ok(())
        }
        Command::Convert { input, output, dtype } => cmd_convert(&input, &output, dtype),
    }
}

fn cmd_mmd(file_a: &Path, file_b: &Path, kernel: &KernelArgs, out: &OutputArgs) -> CmdResult {
    let config = kernel.kernel()?;
    let a = load_any(file_a)?;
    let b = load_any(file_b)?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: format!("{} (d = {}) vs {} (d = {})", file_a.display(), a.dim(), file_b.display(), b.dim()),
            left: a.dim(),
            right: b.dim(),
        }
        .into());
    }
    let r = mmd2_biased(&a, &b, &config, kernel.estimator())?;
    let d = out.digits;
    let estimator = match r.estimator {
        Estimator::BiasedEqualN => "biased_equal_n",
        Estimator::BiasedGeneral => "biased_general",
    };
    match out.format {
        OutputFormat::Csv => {
            println!("mmd2,n_a,n_b,dim,sigma,kernel_mode,estimator");
            println!(
                "{},{},{},{},{},{},{}",
                sig(r.value, d),
                r.n_a,
                r.n_b,
                r.dim,
                sig(r.resolved_sigma, d),
                config.mode.as_str(),
                estimator
            );
        }
        OutputFormat::Human => {
            println!("mmd2       {}", sig(r.value, d));
            println!("n_a        {}", r.n_a);
            println!("n_b        {}", r.n_b);
            println!("dim        {}", r.dim);
            println!("sigma      {} ({})", sig(r.resolved_sigma, d), config.mode.as_str());
            println!("estimator  {estimator}");
            if r.saturated {
                println!("warning    kernel saturated; consider --median-heuristic");
            }
        }
    }
    Ok(())
}

fn cmd_align(manifest: &Path, kernel: &KernelArgs, out: &OutputArgs) -> CmdResult {
    let config = kernel.kernel()?;
    let tasks = load_tasks(manifest)?;
    let reports = alignment_reports(&tasks, &config, kernel.estimator())?;
    match out.format {
        OutputFormat::Csv => print!("{}", alignment_csv(&reports, out.digits)),
        OutputFormat::Human => print!("{}", alignment_table(&reports)),
    }
    Ok(())
}

fn cmd_rpg(manifest: Option<&Path>, reference: Reference, values: Option<(f64, f64)>, out: &OutputArgs) -> CmdResult {
    let records = match (manifest, values) {
        (_, Some((p_ft, p_ref))) => {
            let v = rpg(p_ft, p_ref)?;
            match out.format {
                OutputFormat::Csv => println!("rpg_percent\n{}", sig(v, out.digits)),
                OutputFormat::Human => println!("RPG = {}%", fixed(v, 2)),
            }
            return Ok(());
        }
        (Some(m), None) => {
            let mut tasks = load_tasks(m)?;
            tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
            tasks
                .iter()
                .map(|t| rpg_for_task(t, reference))
                .collect::<Result<Vec<_>, _>>()?
        }
        (None, None) => return Err(Failure::Usage("rpg needs a manifest or --p-ft/--p-ref".into())),
    };
    match out.format {
        OutputFormat::Csv => print!("{}", rpg_csv(&records, out.digits)),
        OutputFormat::Human => {
            for r in &records {
                println!("{:<28} {:>8}%  vs {}", r.task_id, fixed(r.rpg_percent, 2), r.reference.as_str());
            }
        }
    }
    Ok(())
}

fn cmd_correlate(
    manifest: Option<&Path>,
    kernel: &KernelArgs,
    reference: Reference,
    series: Option<(Vec<f64>, Vec<f64>)>,
    out: &OutputArgs,
) -> CmdResult {
    if let Some((xs, ys)) = series {
        let r = pearson_r(&xs, &ys)?;
        let p = pearson_p_two_sided(r, xs.len())?;
        match out.format {
            OutputFormat::Csv => println!("n_points,r,p_two_sided\n{},{},{}", xs.len(), sig(r, out.digits), sig(p, out.digits)),
            OutputFormat::Human => println!("r = {}  p = {}  n = {}", sig(r, out.digits), sig(p, out.digits), xs.len()),
        }
        return Ok(());
    }
    let Some(m) = manifest else {
        return Err(Failure::Usage("correlate needs a manifest or --xs/--ys".into()));
    };
    let config = kernel.kernel()?;
    let tasks = load_tasks(m)?;
    let reports = alignment_reports(&tasks, &config, kernel.estimator())?;
    let mut gains = Vec::new();
    for t in &tasks {
        gains.push(rpg_for_task(t, reference)?);
    }
    let results = correlate_alignment_vs_rpg(&reports, &gains)?;
    match out.format {
        OutputFormat::Csv => print!("{}", correlation_csv(&results, out.digits)),
        OutputFormat::Human => {
            for c in &results {
                println!(
                    "r({}, rpg) = {}  p = {}  n = {}  [{}]",
                    c.x_name,
                    sig(c.r, out.digits),
                    sig(c.p_two_sided, out.digits),
                    c.n_points,
                    c.reference.as_str()
                );
            }
        }
    }
    Ok(())
}

fn cmd_efficiency(manifest: Option<&Path>, hours: Option<(f64, f64)>, out: &OutputArgs) -> CmdResult {
    let records = match (manifest, hours) {
        (_, Some((ft, scratch))) => vec![efficiency_ratio(
            "-",
            &ComputeRecord {
                gpu_hours_ft: ft,
                gpu_hours_scratch: scratch,
            },
        )?],
        (Some(m), None) => {
            let tasks = load_tasks(m)?;
            let mut v = Vec::new();
            for t in &tasks {
                if let Some(c) = &t.compute {
                    v.push(efficiency_ratio(&t.task_id, c)?);
                }
            }
            v
        }
        (None, None) => return Err(Failure::Usage("efficiency needs a manifest or --ft-hours/--scratch-hours".into())),
    };
    match out.format {
        OutputFormat::Csv => print!("{}", efficiency_csv(&records, out.digits)),
        OutputFormat::Human => {
            let mut sorted: Vec<_> = records.iter().collect();
            sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
            for e in sorted {
                println!(
                    "{:<28} FT {:>8}  Scratch {:>8}  FT/Scratch {}",
                    e.task_id,
                    e.gpu_hours_ft,
                    e.gpu_hours_scratch,
                    fixed(e.ratio, 2)
                );
            }
        }
    }
    Ok(())
}

fn cmd_convergence(
    manifest: Option<&Path>,
    threshold: f64,
    logs: Option<(PathBuf, PathBuf)>,
    out: &OutputArgs,
) -> CmdResult {
    let stats: Vec<ConvergenceStats> = match (manifest, logs) {
        (_, Some((ft, scratch))) => {
            vec![convergence_stats("-", &TrainingLog::load(ft)?, &TrainingLog::load(scratch)?, threshold)]
        }
        (Some(m), None) => {
            let tasks = load_tasks(m)?;
            tasks
                .iter()
                .filter_map(|t| {
                    let ft = t.training_logs.get(&crate::embedding::RoleTag::Finetuned)?;
                    let sc = t.training_logs.get(&crate::embedding::RoleTag::TrainedFromScratch)?;
                    Some(convergence_stats(&t.task_id, ft, sc, threshold))
                })
                .collect()
        }
        (None, None) => return Err(Failure::Usage("convergence needs a manifest or --ft/--scratch".into())),
    };
    match out.format {
        OutputFormat::Csv => print!("{}", convergence_csv(&stats, out.digits)),
        OutputFormat::Human => {
            let opt = |v: Option<u32>| v.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
            let mut sorted: Vec<_> = stats.iter().collect();
            sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
            for s in sorted {
                println!(
                    "{:<28} ft {:>4}  scratch {:>4}  speedup {}",
                    s.task_id,
                    opt(s.epochs_ft),
                    opt(s.epochs_scratch),
                    s.speedup.map(|v| fixed(v, 2)).unwrap_or_else(|| "-".into())
                );
            }
        }
    }
    Ok(())
}

fn cmd_report(
    manifest: &Path,
    out_dir: &Path,
    kernel: &KernelArgs,
    reference: Reference,
    threshold: Option<f64>,
    out: &OutputArgs,
) -> CmdResult {
    let config = kernel.kernel()?;
    let tasks = load_tasks(manifest)?;
    let opts = ReportOptions {
        kernel: config,
        estimator: kernel.estimator(),
        reference,
        threshold,
        digits: out.digits,
    };
    let bundle = analyze(&tasks, &opts);
    bundle.write_to(out_dir, out.digits)?;
    match out.format {
        OutputFormat::Human => print!("{}", bundle.summary_text()),
        OutputFormat::Csv => print!("{}", correlation_csv(&bundle.correlations, out.digits)),
    }
    for n in &bundle.notices {
        eprintln!("note: {n}");
    }
    Ok(())
}

fn cmd_convert(input: &Path, output: &Path, dtype: Option<DtypeArg>) -> CmdResult {
    let set = load_any(input)?;
    let set = match dtype {
        Some(DtypeArg::F32) if set.dtype() != Dtype::F32 => set.to_f32()?,
        Some(DtypeArg::F64) if set.dtype() != Dtype::F64 => {
            EmbeddingSet::from_rows_f64(set.n(), set.dim(), set.data().to_vec())?
        }
        _ => set,
    };
    save_embeddings(&set, output)?;
    eprintln!(
        "converted {} -> {} ({} × {}, {})",
        csv_escape(&input.display().to_string()),
        output.display(),
        set.n(),
        set.dim(),
        match set.dtype() {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    );
    Ok(())
}
