//! Command implementations.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use tailaug::gnn::write_predictions;
use tailaug::graph::{
    cdf_at, degrees, heterophily_report, homophily_cdf, homophily_values, load_graph, load_masks,
    make_splits, pareto_split, preprocess, report_for, AttributedGraph, NodeMasks, NodePartition,
    SplitMode,
};
use tailaug::trainer::{
    evaluate, load_snapshot, log_grid, mean_std, run_experiment, save_snapshot, snapshot_logits,
    sweep as run_sweep, Context as TrainContext, Metrics, TrainConfig, KEYS,
};

use crate::output::{f6, opt6, write_json, write_tsv};
use crate::RunArgs;

struct Loaded {
    raw: AttributedGraph,
    g: AttributedGraph,
    partition: NodePartition,
    masks: Option<NodeMasks>,
}

fn load(bundle: &Path) -> Result<Loaded> {
    let raw = load_graph(bundle)?;
    let g = preprocess(&raw)?;
    let partition = pareto_split(&g);
    let masks = load_masks(bundle)?;
    Ok(Loaded {
        raw,
        g,
        partition,
        masks,
    })
}

fn mkdir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Recorded before any computation so a run can be replayed.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    bundle: PathBuf,
    config: BTreeMap<String, String>,
    seeds: Vec<u64>,
    out: PathBuf,
    tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<BTreeMap<String, String>>,
}

fn manifest(
    command: &str,
    bundle: &Path,
    cfg: &TrainConfig,
    seeds: &[u64],
    out: &Path,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        bundle: bundle.to_path_buf(),
        config: KEYS
            .iter()
            .map(|k| (k.to_string(), cfg.get(k).expect("known key")))
            .collect(),
        seeds: seeds.to_vec(),
        out: out.to_path_buf(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        sweep: None,
    }
}

pub fn analyze(bundle: &Path, out: &Path) -> Result<()> {
    let Loaded {
        raw, g, partition, ..
    } = load(bundle)?;
    mkdir(out)?;
    let deg = degrees(&g);
    let n = g.n_nodes();
    let summary_header = [
        "nodes",
        "edges",
        "undirected_edges",
        "features",
        "classes",
        "degree_threshold",
        "head_nodes",
        "tail_nodes",
        "raw_nodes",
    ];
    let summary = vec![
        n.to_string(),
        g.adjacency().nnz().to_string(),
        g.n_edges().to_string(),
        g.n_features().to_string(),
        g.n_classes().to_string(),
        partition.degree_threshold.to_string(),
        partition.head_nodes.len().to_string(),
        partition.tail_nodes.len().to_string(),
        raw.n_nodes().to_string(),
    ];
    write_tsv(
        &out.join("summary.tsv"),
        &summary_header,
        std::slice::from_ref(&summary),
    )?;

    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in &deg {
        *hist.entry(d).or_default() += 1;
    }
    let mut cum = 0;
    let hist_rows: Vec<Vec<String>> = hist
        .iter()
        .map(|(&d, &c)| {
            cum += c;
            vec![d.to_string(), c.to_string(), f6(cum as f64 / n as f64)]
        })
        .collect();
    write_tsv(
        &out.join("degree_histogram.tsv"),
        &["degree", "count", "cumulative_fraction"],
        &hist_rows,
    )?;

    let rep = heterophily_report(&g, &partition)?;
    let all = rep.total_het_count();
    let het_rows = vec![
        vec![
            "head".into(),
            partition.head_nodes.len().to_string(),
            rep.head_total_het_count.to_string(),
            f6(100.0 * rep.head_total_het_prop),
        ],
        vec![
            "tail".into(),
            partition.tail_nodes.len().to_string(),
            rep.tail_total_het_count.to_string(),
            f6(100.0 * rep.tail_total_het_prop),
        ],
        vec![
            "all".into(),
            n.to_string(),
            all.to_string(),
            f6(100.0 * all as f64 / n as f64),
        ],
    ];
    write_tsv(
        &out.join("heterophily.tsv"),
        &["group", "nodes", "total_het_count", "total_het_percent"],
        &het_rows,
    )?;

    let mut cdf_rows = Vec::new();
    for (name, cdf) in [
        ("head", &rep.head_cdf),
        ("tail", &rep.tail_cdf),
        ("all", &rep.all_cdf),
    ] {
        for &(h, p) in cdf {
            cdf_rows.push(vec![name.to_string(), f6(h), f6(p)]);
        }
    }
    write_tsv(
        &out.join("homophily_cdf.tsv"),
        &["group", "homophily", "cdf"],
        &cdf_rows,
    )?;

    println!("{}", summary_header.join("\t"));
    println!("{}", summary.join("\t"));
    println!("group\tnodes\ttotal_het_count\ttotal_het_percent");
    for r in &het_rows {
        println!("{}", r.join("\t"));
    }
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| anyhow!("invalid seed '{t}'")))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        bail!("--seeds is empty");
    }
    Ok(seeds)
}

fn build_config(run: &RunArgs) -> Result<(TrainConfig, Vec<u64>)> {
    let mut cfg = match &run.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_kv_text(&text)
                .with_context(|| format!("in config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = &run.split {
        cfg.set("split", s)?;
    }
    if !run.ablation.is_empty() {
        let mut all: Vec<String> = cfg.ablations.iter().map(ToString::to_string).collect();
        all.extend(run.ablation.iter().cloned());
        cfg.set("ablation", &all.join(","))?;
    }
    for kv in &run.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got '{kv}'"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let seeds = match (&run.seeds, run.seed) {
        (Some(s), _) => parse_seeds(s)?,
        (None, Some(s)) => vec![s],
        (None, None) => vec![cfg.seed],
    };
    cfg.validate()?;
    Ok((cfg, seeds))
}

const METRIC_HEADER: [&str; 7] = [
    "seed",
    "best_epoch",
    "valid_accuracy",
    "test_accuracy",
    "test_weighted_f1",
    "test_head_accuracy",
    "test_tail_accuracy",
];

fn metric_row(seed: u64, m: &Metrics) -> Vec<String> {
    vec![
        seed.to_string(),
        m.best_epoch.to_string(),
        f6(m.valid_accuracy),
        f6(m.test_accuracy),
        f6(m.test_weighted_f1),
        opt6(m.test_head_accuracy),
        opt6(m.test_tail_accuracy),
    ]
}

pub fn train(run: &RunArgs) -> Result<()> {
    let (cfg, seeds) = build_config(run)?;
    mkdir(&run.out)?;
    write_json(
        &run.out.join("manifest.json"),
        &manifest("train", &run.bundle, &cfg, &seeds, &run.out),
    )?;
    fs::write(run.out.join("config.txt"), cfg.to_kv_text())?;
    let Loaded {
        g,
        partition,
        masks,
        ..
    } = load(&run.bundle)?;

    let mut rows = Vec::new();
    let mut accs = Vec::new();
    let mut f1s = Vec::new();
    for &seed in &seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        let dir = run.out.join(format!("seed-{seed}"));
        mkdir(&dir)?;
        let log_path = dir.join("epochs.jsonl");
        let mut log = BufWriter::new(
            File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
        );
        let mut io_err = None;
        let r = run_experiment(&g, &partition, masks.as_ref(), &c, |e| {
            let line = serde_json::to_string(e).expect("epoch log serialises");
            if let Err(err) = writeln!(log, "{line}") {
                io_err.get_or_insert(err);
            }
        })
        .with_context(|| format!("seed {seed}"))?;
        if let Some(err) = io_err {
            return Err(err).with_context(|| format!("writing {}", log_path.display()));
        }
        log.flush()?;
        save_snapshot(
            &dir.join("model.ckpt"),
            &r.output.best,
            &c,
            g.n_nodes(),
            r.output.best_valid_accuracy,
        )?;
        write_json(&dir.join("metrics.json"), &r.metrics)?;
        let ctx = TrainContext::new(&g, &partition, &r.split, &c)?;
        let (z, _) = snapshot_logits(&ctx, &r.output.best)?;
        write_predictions(&dir.join("predictions.tsv"), &z, g.original_ids())?;
        log::info!("seed {seed}: test accuracy {:.4}", r.metrics.test_accuracy);
        accs.push(r.metrics.test_accuracy);
        f1s.push(r.metrics.test_weighted_f1);
        rows.push(metric_row(seed, &r.metrics));
    }
    write_tsv(&run.out.join("metrics.tsv"), &METRIC_HEADER, &rows)?;
    let (ma, sa) = mean_std(&accs);
    let (mf, sf) = mean_std(&f1s);
    let summary = vec![vec![
        cfg.model.to_string(),
        seeds.len().to_string(),
        f6(ma),
        f6(sa),
        f6(mf),
        f6(sf),
    ]];
    let header = [
        "model",
        "seeds",
        "mean_test_accuracy",
        "std_test_accuracy",
        "mean_test_weighted_f1",
        "std_test_weighted_f1",
    ];
    write_tsv(&run.out.join("summary.tsv"), &header, &summary)?;
    println!("{}", header.join("\t"));
    println!("{}", summary[0].join("\t"));
    Ok(())
}

pub fn eval(bundle: &Path, checkpoint: &Path, out: &Path, split: Option<&str>) -> Result<()> {
    let (snap, side) = load_snapshot(checkpoint)?;
    let Loaded {
        g,
        partition,
        masks,
        ..
    } = load(bundle)?;
    if side.n_nodes != g.n_nodes() {
        return Err(tailaug::Error::Shape(format!(
            "checkpoint was trained on {} nodes, bundle has {}",
            side.n_nodes,
            g.n_nodes()
        ))
        .into());
    }
    let mut cfg = side.config.clone();
    if let Some(s) = split {
        cfg.split = s.parse::<SplitMode>()?;
    }
    mkdir(out)?;
    let ds = make_splits(&g, &partition, cfg.split, cfg.seed, masks.as_ref())?;
    let m = evaluate(&g, &partition, &ds, &cfg, &snap)?;
    write_json(&out.join("metrics.json"), &m)?;
    let header = ["split", "test", "head", "tail", "test_weighted_f1"];
    let row = vec![
        cfg.split.to_string(),
        f6(m.test_accuracy),
        opt6(m.test_head_accuracy),
        opt6(m.test_tail_accuracy),
        f6(m.test_weighted_f1),
    ];
    write_tsv(
        &out.join("metrics.tsv"),
        &header,
        std::slice::from_ref(&row),
    )?;
    println!("{}", header.join("\t"));
    println!("{}", row.join("\t"));
    Ok(())
}

/// Grid on which the two CDFs are compared.
const CDF_GRID_POINTS: usize = 51;

pub fn augment_report(bundle: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let (snap, side) = load_snapshot(checkpoint)?;
    let Loaded {
        g,
        partition,
        masks,
        ..
    } = load(bundle)?;
    if side.n_nodes != g.n_nodes() {
        return Err(tailaug::Error::Shape(format!(
            "checkpoint was trained on {} nodes, bundle has {}",
            side.n_nodes,
            g.n_nodes()
        ))
        .into());
    }
    let cfg = side.config.clone();
    let ds = make_splits(&g, &partition, cfg.split, cfg.seed, masks.as_ref())?;
    let ctx = TrainContext::new(&g, &partition, &ds, &cfg)?;
    let (a2, added) = match &snap.augmentor {
        Some(a) => {
            let aug = ctx.augment(a, snap.epoch)?;
            (aug.adjacency, aug.added_edges)
        }
        None => (g.adjacency().clone(), Vec::new()),
    };
    mkdir(out)?;
    let before = report_for(g.adjacency(), g.labels(), &partition)?;
    let after = report_for(&a2, g.labels(), &partition)?;
    let ids = g.original_ids();
    let edge_rows: Vec<Vec<String>> = added
        .iter()
        .map(|&(u, v)| {
            vec![
                ids[u].to_string(),
                ids[v].to_string(),
                snap.epoch.to_string(),
            ]
        })
        .collect();
    write_tsv(
        &out.join("added_edges.tsv"),
        &["u", "v", "epoch"],
        &edge_rows,
    )?;

    let het_rows: Vec<Vec<String>> = [("original", &before), ("augmented", &after)]
        .iter()
        .map(|(name, r)| {
            vec![
                name.to_string(),
                r.head_total_het_count.to_string(),
                r.tail_total_het_count.to_string(),
                r.total_het_count().to_string(),
            ]
        })
        .collect();
    write_tsv(
        &out.join("total_het.tsv"),
        &["graph", "head", "tail", "total"],
        &het_rows,
    )?;

    let h0 = homophily_values(g.adjacency(), g.labels())?;
    let h1 = homophily_values(&a2, g.labels())?;
    let (c0, c1) = (homophily_cdf(&h0), homophily_cdf(&h1));
    let mut grid: Vec<f64> = c0.iter().chain(&c1).map(|p| p.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|&x| vec![f6(x), f6(cdf_at(&c0, x)), f6(cdf_at(&c1, x))])
        .collect();
    write_tsv(
        &out.join("homophily_cdf.tsv"),
        &["homophily", "cdf_original", "cdf_augmented"],
        &rows,
    )?;
    let mut le = 0;
    let grid_rows: Vec<Vec<String>> = (0..CDF_GRID_POINTS)
        .map(|i| {
            let x = 0.5 * i as f64 / (CDF_GRID_POINTS - 1) as f64;
            let (a, b) = (cdf_at(&c0, x), cdf_at(&c1, x));
            le += usize::from(b <= a);
            vec![f6(x), f6(a), f6(b)]
        })
        .collect();
    write_tsv(
        &out.join("cdf_grid.tsv"),
        &["homophily", "cdf_original", "cdf_augmented"],
        &grid_rows,
    )?;
    println!("graph\thead\ttail\ttotal");
    for r in &het_rows {
        println!("{}", r.join("\t"));
    }
    println!(
        "added_edges\t{}\nfraction_grid_points_le\t{}",
        added.len(),
        f6(le as f64 / CDF_GRID_POINTS as f64)
    );
    Ok(())
}

fn parse_log_grid(grid: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = grid.split(':').collect();
    let [lo, hi, k] = parts[..] else {
        bail!("--log-grid expects lo:hi:k, got '{grid}'");
    };
    Ok(log_grid(lo.parse()?, hi.parse()?, k.parse()?)?)
}

pub fn sweep(run: &RunArgs, key: &str, values: Option<&str>, grid: Option<&str>) -> Result<()> {
    let (cfg, seeds) = build_config(run)?;
    if !KEYS.contains(&key) {
        bail!("unknown config key '{key}'");
    }
    let values: Vec<String> = match (values, grid) {
        (Some(v), _) => v
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        (None, Some(g)) => parse_log_grid(g)?
            .into_iter()
            .map(|x| x.to_string())
            .collect(),
        (None, None) => bail!("sweep needs --values or --log-grid"),
    };
    mkdir(&run.out)?;
    let mut m = manifest("sweep", &run.bundle, &cfg, &seeds, &run.out);
    m.sweep = Some(BTreeMap::from([
        ("key".to_string(), key.to_string()),
        ("values".to_string(), values.join(",")),
    ]));
    write_json(&run.out.join("manifest.json"), &m)?;
    let Loaded {
        g,
        partition,
        masks,
        ..
    } = load(&run.bundle)?;
    let rows = run_sweep(&g, &partition, masks.as_ref(), &cfg, key, &values, &seeds)?;
    let header = [
        "key",
        "value",
        "seeds",
        "mean_test_accuracy",
        "std_test_accuracy",
        "mean_test_weighted_f1",
        "std_test_weighted_f1",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.key.clone(),
                r.value.clone(),
                r.seeds.to_string(),
                f6(r.mean_test_accuracy),
                f6(r.std_test_accuracy),
                f6(r.mean_test_weighted_f1),
                f6(r.std_test_weighted_f1),
            ]
        })
        .collect();
    write_tsv(&run.out.join("sweep.tsv"), &header, &table)?;
    println!("{}", header.join("\t"));
    for r in &table {
        println!("{}", r.join("\t"));
    }
    Ok(())
}
