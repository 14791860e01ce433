use std::path::Path;
use std::process::{Command, Output};

use alignscope::{save_embeddings, EmbeddingSet};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alignscope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_threads(args: &[&str], threads: &str) -> Output {
    bin().args(args).env("ALIGNSCOPE_THREADS", threads).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, rows: &[Vec<f64>]) -> String {
    let p = dir.join(name);
    save_embeddings(&EmbeddingSet::from_vecs(rows).unwrap(), &p).unwrap();
    p.to_string_lossy().into_owned()
}

fn synth(dir: &Path, extra: &[&str]) -> String {
    let out = dir.to_string_lossy().into_owned();
    let mut args = vec!["synth", "--out", &out];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("manifest.json").to_string_lossy().into_owned()
}

#[test]
fn mmd_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![vec![0.5, 1.0], vec![-2.0, 3.0], vec![0.0, 0.0]];
    let a = write(dir.path(), "a.emb1", &rows);
    let b = write(dir.path(), "b.csv", &rows);
    let o = run(&["mmd", &a, &b]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("mmd2       0.0000000000\n"), "{}", stdout(&o));
}

#[test]
fn mmd_of_unit_singletons() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.emb1", &[vec![0.0]]);
    let b = write(dir.path(), "b.emb1", &[vec![1.0]]);
    let o = run(&["mmd", &a, &b]);
    assert!(stdout(&o).starts_with("mmd2       1.264241118\n"), "{}", stdout(&o));
    let o = run(&["mmd", &a, &b, "--format", "csv"]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines[0], "mmd2,n_a,n_b,dim,sigma,kernel_mode,estimator");
    assert!(lines[1].starts_with("1.264241118,1,1,1,"));
}

#[test]
fn mmd_dimension_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "wide.emb1", &[vec![0.0; 768]]);
    let b = write(dir.path(), "narrow.emb1", &[vec![0.0; 384]]);
    let o = run(&["mmd", &a, &b]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("wide.emb1") && err.contains("narrow.emb1"), "{err}");
    assert!(err.contains("768") && err.contains("384"), "{err}");
}

#[test]
fn unequal_sizes_need_general_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.emb1", &[vec![0.0], vec![1.0]]);
    let b = write(dir.path(), "b.emb1", &[vec![0.0]]);
    assert_eq!(run(&["mmd", &a, &b]).status.code(), Some(1));
    assert!(run(&["mmd", &a, &b, "--general-n"]).status.success());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["mmd"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["mmd", "a", "b", "--sigma", "0"]).status.code(), Some(2));
    assert_eq!(run(&["mmd", "a", "b", "--sigma", "1", "--median-heuristic"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    std::fs::write(&m, "{\"tasks\": []}").unwrap();
    assert_eq!(run(&["align", m.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_role_in_align_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &["--n", "16"]);
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["tasks"][0]["embeddings"].as_object_mut().unwrap().remove("pretrained");
    std::fs::write(&manifest, serde_json::to_string(&doc).unwrap()).unwrap();
    let o = run(&["align", &manifest]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pretrained"), "{}", stderr(&o));
}

#[test]
fn rpg_and_correlate_from_values() {
    let o = run(&["rpg", "--p-ft", "0.6", "--p-ref", "0.5"]);
    assert_eq!(stdout(&o).trim(), "RPG = 20.00%");
    let o = run(&["rpg", "--p-ft", "0.45", "--p-ref", "0.5"]);
    assert_eq!(stdout(&o).trim(), "RPG = -10.00%");
    assert_eq!(run(&["rpg", "--p-ft", "1", "--p-ref", "0"]).status.code(), Some(1));

    let o = run(&["correlate", "--xs", "1,2,3,4,5", "--ys", "2,1,4,3,5", "--format", "csv"]);
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    assert!(row.starts_with("5,0.8000000000,"), "{row}");
    let o = run(&["correlate", "--xs", "1,2", "--ys", "3,4"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn efficiency_from_hours() {
    let o = run(&["efficiency", "--ft-hours", "9.9", "--scratch-hours", "13.8"]);
    assert!(stdout(&o).trim_end().ends_with("FT/Scratch 0.72"), "{}", stdout(&o));
    let o = run(&["efficiency", "--ft-hours", "1", "--scratch-hours", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn convert_round_trip_preserves_bits() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![vec![0.1, 1.0 / 3.0, -2e-300], vec![1e300, -0.0, 123456.789]];
    let a = write(dir.path(), "a.emb1", &rows);
    let csv = dir.path().join("a.csv");
    let back = dir.path().join("b.emb1");
    assert!(run(&["convert", &a, csv.to_str().unwrap()]).status.success());
    assert!(run(&["convert", csv.to_str().unwrap(), back.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&back).unwrap());
}

#[test]
fn synth_is_byte_identical_and_writes_twenty_sets() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), &["--n", "32"]);
    synth(b.path(), &["--n", "32"]);
    let list = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d.join("embeddings"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        v.sort();
        v
    };
    let (la, lb) = (list(a.path()), list(b.path()));
    assert_eq!(la.len(), 20);
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(
        std::fs::read(a.path().join("manifest.json")).unwrap(),
        std::fs::read(b.path().join("manifest.json")).unwrap()
    );
}

#[test]
fn report_writes_every_section() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("scenario"), &["--noise-sd", "0.02"]);
    let out = dir.path().join("report");
    let o = run(&["report", &manifest, "--out", out.to_str().unwrap(), "--threshold", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "alignment.csv",
        "rpg.csv",
        "correlation.csv",
        "efficiency.csv",
        "convergence.csv",
        "plot_perf_vs_d2s.csv",
        "plot_distance_vs_rpg.csv",
        "summary.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let alignment = std::fs::read_to_string(out.join("alignment.csv")).unwrap();
    assert_eq!(alignment.lines().next().unwrap(), "task_id,d2r,d2p,d2s,n,dim,sigma,kernel_mode");
    assert_eq!(alignment.lines().count(), 6);
    let plot = std::fs::read_to_string(out.join("plot_perf_vs_d2s.csv")).unwrap();
    assert_eq!(plot.lines().count(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["alignment"].as_array().unwrap().len(), 5);
    assert!(stdout(&o).contains("r(d2p, rpg)"));
}

#[test]
fn report_with_two_tasks_notes_the_shortfall() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("s"), &["--tasks", "2", "--n", "16"]);
    let out = dir.path().join("r");
    let o = run(&["report", &manifest, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("correlation"), "{}", stderr(&o));
    assert!(!out.join("correlation.csv").exists());
    let o = run(&["correlate", &manifest]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("s"), &["--n", "300"]);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("r{threads}"));
        let o = run_threads(&["report", &manifest, "--out", out.to_str().unwrap(), "--median-heuristic"], threads);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files = Vec::new();
        for f in ["alignment.csv", "correlation.csv", "summary.json", "plot_distance_vs_rpg.csv"] {
            files.push(std::fs::read(out.join(f)).unwrap());
        }
        outputs.push((stdout(&o), files));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(run_threads(&["mmd", "x", "y"], "lots").status.code(), Some(2));
}
