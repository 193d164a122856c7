//! Acceptance suite: every exit criterion at its pinned tolerance, one
//! PASS/FAIL line each. Runs against the bundles under `data/`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use tailaug::graph::{load_graph, make_splits, pareto_split, preprocess, SplitMode};
use tailaug::trainer::TrainConfig;

/// Serialises the tests so that timings are not shared with each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailaug"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn tailaug");
    assert!(
        out.status.success(),
        "tailaug failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Rows of a TSV file keyed by header name.
fn read_tsv(path: &Path) -> Vec<HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split('\t').map(String::from))
                .collect()
        })
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key]
        .parse()
        .unwrap_or_else(|_| panic!("{key} = {}", row[key]))
}

/// Empty output directory for one command.
fn fresh(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn dataset_statistics() {
    let _g = serial();
    // (name, nodes, edges, features, classes, degree threshold)
    let expected = [
        ("cora", 2485, 10138, 1433, 7, 5),
        ("citeseer", 2120, 7358, 3703, 6, 5),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, n, e, f, c, th) in expected {
        let out = fresh(&format!("analyze-{name}"));
        let start = Instant::now();
        run(bin()
            .args(["analyze", "--bundle"])
            .arg(common::data_dir(name))
            .arg("--out")
            .arg(&out));
        let elapsed = start.elapsed();
        let row = &read_tsv(&out.join("summary.tsv"))[0];
        let got = [
            num(row, "nodes"),
            num(row, "edges"),
            num(row, "features"),
            num(row, "classes"),
            num(row, "degree_threshold"),
        ];
        let want = [n, e, f, c, th].map(f64::from);
        let pass = got == want && elapsed < Duration::from_secs(5);
        ok &= pass;
        details.push(format!(
            "{name} N/|E|/F/C/DegTh = {got:?} (want {want:?}) in {elapsed:.2?}"
        ));
    }
    report("dataset statistics", ok, &details.join("; "));
    assert!(ok);
}

#[test]
fn heterophily_statistics() {
    let _g = serial();
    // (name, head count, head %, tail count, tail %)
    let expected = [
        ("cora", 4, 0.97, 143, 6.89),
        ("citeseer", 16, 4.78, 308, 17.25),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, hc, hp, tc, tp) in expected {
        let out = fresh(&format!("het-{name}"));
        run(bin()
            .args(["analyze", "--bundle"])
            .arg(common::data_dir(name))
            .arg("--out")
            .arg(&out));
        let rows = read_tsv(&out.join("heterophily.tsv"));
        let group = |g: &str| rows.iter().find(|r| r["group"] == g).unwrap().clone();
        let (head, tail) = (group("head"), group("tail"));
        let counts = (
            num(&head, "total_het_count") as usize,
            num(&tail, "total_het_count") as usize,
        );
        let pct = (
            num(&head, "total_het_percent"),
            num(&tail, "total_het_percent"),
        );
        // percentages are quoted to two decimals
        let pass = counts == (hc, tc) && (pct.0 - hp).abs() <= 0.01 && (pct.1 - tp).abs() <= 0.01;
        ok &= pass;
        details.push(format!(
            "{name} head {} ({:.3}%) tail {} ({:.3}%), want {hc} ({hp}%) / {tc} ({tp}%)",
            counts.0, pct.0, counts.1, pct.1
        ));
    }
    report("heterophily statistics", ok, &details.join("; "));
    assert!(ok);
}

struct Trained {
    augmented: f64,
    gcn: f64,
    elapsed: Duration,
    checkpoint: PathBuf,
}

/// Five seeds of both models on one dataset, through the command line.
fn train_both(name: &str) -> Trained {
    let seeds = "0,1,2,3,4";
    let start = Instant::now();
    let mean = |model: &str| {
        let out = fresh(&format!("train-{name}-{model}"));
        run(bin()
            .args(["train", "--bundle"])
            .arg(common::data_dir(name))
            .arg("--out")
            .arg(&out)
            .args(["--seeds", seeds, "--set", &format!("model={model}")]));
        (
            num(&read_tsv(&out.join("summary.tsv"))[0], "mean_test_accuracy"),
            out,
        )
    };
    let (augmented, aug_dir) = mean("augmented");
    let (gcn, _) = mean("gcn");
    Trained {
        augmented: 100.0 * augmented,
        gcn: 100.0 * gcn,
        elapsed: start.elapsed(),
        checkpoint: aug_dir.join("seed-0").join("model.ckpt"),
    }
}

fn trained() -> &'static [(&'static str, f64, Trained)] {
    static RUNS: OnceLock<Vec<(&'static str, f64, Trained)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [("cora", 86.92), ("citeseer", 74.30)]
            .map(|(n, r)| (n, r, train_both(n)))
            .into()
    })
}

#[test]
fn end_to_end_improvement() {
    let _g = serial();
    let runs = trained();
    let gains: Vec<f64> = runs.iter().map(|(_, _, t)| t.augmented - t.gcn).collect();
    let mut ok = gains.iter().all(|&d| d >= 0.0) && gains.iter().any(|&d| d >= 0.5);
    let mut details = Vec::new();
    for (name, reference, t) in runs {
        ok &= (t.augmented - reference).abs() <= 2.5 && t.elapsed <= Duration::from_secs(600);
        details.push(format!(
            "{name} augmented {:.2} vs gcn {:.2} (gain {:+.2}, reference {reference}) in {:.0?}",
            t.augmented,
            t.gcn,
            t.augmented - t.gcn,
            t.elapsed
        ));
    }
    report("end-to-end improvement", ok, &details.join("; "));
    assert!(ok);
}

#[test]
fn augmentation_reduces_heterophily() {
    let _g = serial();
    let mut any = false;
    let mut details = Vec::new();
    for (name, _, t) in trained() {
        let out = fresh(&format!("report-{name}"));
        let stdout = run(bin()
            .args(["augment-report", "--bundle"])
            .arg(common::data_dir(name))
            .arg("--checkpoint")
            .arg(&t.checkpoint)
            .arg("--out")
            .arg(&out));
        let rows = read_tsv(&out.join("total_het.tsv"));
        let total = |g: &str| num(rows.iter().find(|r| r["graph"] == g).unwrap(), "total");
        let (before, after) = (total("original"), total("augmented"));
        let fraction: f64 = stdout
            .lines()
            .find_map(|l| l.strip_prefix("fraction_grid_points_le\t"))
            .unwrap()
            .parse()
            .unwrap();
        let pass = after < before && fraction >= 0.8;
        any |= pass;
        details.push(format!(
            "{name} total-het {before} -> {after}, CDF below original on {:.1}% of grid",
            100.0 * fraction
        ));
    }
    report("augmentation effect", any, &details.join("; "));
    assert!(any);
}

#[test]
fn gradient_suite() {
    let _g = serial();
    let start = Instant::now();
    let results = common::gradient_suite();
    let elapsed = start.elapsed();
    let worst = results
        .iter()
        .cloned()
        .fold(("", 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let ok = results.iter().all(|&(_, e)| e < 1e-4) && elapsed < Duration::from_secs(30);
    report(
        "gradient suite",
        ok,
        &format!(
            "{} checks, worst {} at {:.2e}, {elapsed:.2?}",
            results.len(),
            worst.0,
            worst.1
        ),
    );
    assert!(ok);
}

#[test]
fn structural_invariants() {
    let _g = serial();
    let failures: Vec<String> = (0..200u64)
        .filter_map(|s| common::check_all(s).err().map(|e| format!("seed {s}: {e}")))
        .collect();
    report(
        "structural invariants",
        failures.is_empty(),
        &format!(
            "200 random graphs, {} failing {:?}",
            failures.len(),
            failures.first()
        ),
    );
    assert!(failures.is_empty());
}

#[test]
fn gradient_isolation() {
    let _g = serial();
    let g = preprocess(&load_graph(&common::data_dir("cora")).unwrap()).unwrap();
    let p = pareto_split(&g);
    let split = make_splits(&g, &p, SplitMode::Tail, 0, None).unwrap();
    let result = common::check_gradient_isolation(&g, &p, &split, &TrainConfig::default());
    report(
        "gradient isolation",
        result.is_ok(),
        &result
            .clone()
            .err()
            .unwrap_or_else(|| "no cross-group gradient after one Cora epoch".into()),
    );
    assert!(result.is_ok());
}

/// Metric files of a train output, with wall-clock times removed from the
/// epoch logs.
fn metric_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    for rel in [
        "metrics.tsv",
        "summary.tsv",
        "seed-0/metrics.json",
        "seed-0/predictions.tsv",
    ] {
        files.push((PathBuf::from(rel), fs::read(dir.join(rel)).unwrap()));
    }
    let epochs: Vec<u8> = fs::read_to_string(dir.join("seed-0/epochs.jsonl"))
        .unwrap()
        .lines()
        .flat_map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time");
            let mut s = v.to_string().into_bytes();
            s.push(b'\n');
            s
        })
        .collect();
    files.push((PathBuf::from("seed-0/epochs.jsonl"), epochs));
    files
}

#[test]
fn determinism() {
    let _g = serial();
    let dirs: Vec<PathBuf> = (0..2).map(|i| fresh(&format!("determinism-{i}"))).collect();
    for d in &dirs {
        run(bin()
            .args(["train", "--bundle"])
            .arg(common::data_dir("cora"))
            .arg("--out")
            .arg(d)
            .args([
                "--seeds",
                "0",
                "--set",
                "max_epochs=25",
                "--set",
                "patience=25",
            ]));
    }
    let (a, b) = (metric_files(&dirs[0]), metric_files(&dirs[1]));
    let differing: Vec<_> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    report(
        "determinism",
        differing.is_empty(),
        &format!(
            "{} metric files compared, differing: {differing:?}",
            a.len()
        ),
    );
    assert!(differing.is_empty());
}
