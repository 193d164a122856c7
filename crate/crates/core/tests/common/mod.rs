//! Random small graphs and the structural checks shared by the property
//! tests and the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tailaug::augmentor::{forge_tails, sample_augmented_edges, SampleOptions};
use tailaug::graph::{degrees, pareto_split, AttributedGraph, NodePartition, TAIL_FRACTION};
use tailaug::numerics::rng::{gaussian, stream, stream_rng};
use tailaug::numerics::{DenseMatrix, SparseMatrix, Tape, Var};

pub type Check = std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

/// Connected graph with a random spanning tree, a few hubs and some extra
/// edges, so that degrees spread out and a head set exists.
pub fn random_graph(seed: u64) -> AttributedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=40);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for _ in 0..rng.random_range(1..=3) {
        let hub = rng.random_range(0..n);
        for u in 0..n {
            if u != hub && rng.random_bool(0.3) {
                edges.push((hub, u));
            }
        }
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.04) {
                edges.push((u, v));
            }
        }
    }
    let adjacency = SparseMatrix::adjacency_from_edges(n, &edges).unwrap();
    let n_classes = rng.random_range(2..=4);
    let labels = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
    let n_features = 6;
    let mut triplets = Vec::new();
    for v in 0..n {
        for f in 0..n_features {
            if rng.random_bool(0.4) {
                triplets.push((v, f, 1.0));
            }
        }
    }
    let features = SparseMatrix::from_triplets(n, n_features, &triplets).unwrap();
    AttributedGraph::new(adjacency, features, labels, n_classes).unwrap()
}

pub fn check_pareto(g: &AttributedGraph, p: &NodePartition) -> Check {
    let deg = degrees(g);
    let n = g.n_nodes() as f64;
    let limit = TAIL_FRACTION * n;
    ensure!(
        p.tail_nodes.len() as f64 > limit,
        "tail {} of {n} nodes",
        p.tail_nodes.len()
    );
    for (v, &d) in deg.iter().enumerate() {
        let in_tail = p.tail_nodes.binary_search(&v).is_ok();
        ensure!(in_tail == (d <= p.degree_threshold), "node {v} misplaced");
    }
    let below = deg.iter().filter(|&&d| d < p.degree_threshold).count();
    ensure!(
        below as f64 <= limit,
        "threshold {} is not the first crossing",
        p.degree_threshold
    );
    Ok(())
}

pub fn check_sampling(g: &AttributedGraph, p: &NodePartition, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    let p2 = gaussian(g.n_nodes(), g.n_classes(), &mut rng).scale(rng.random_range(0.1..3.0));
    let opts = SampleOptions {
        batch_size: rng.random_range(1..=g.n_nodes()),
        rounds: rng.random_range(1..=3),
        temperature: rng.random_range(0.2..2.0),
    };
    let a = g.adjacency();
    let out = sample_augmented_edges(
        &p2,
        a,
        &p.tail_nodes,
        &opts,
        &mut stream_rng(seed, stream::SAMPLE),
    )
    .map_err(|e| e.to_string())?;
    let a2 = &out.adjacency;
    ensure!(a2.is_symmetric(), "A2 not symmetric");
    ensure!(a2.values().iter().all(|&x| x == 1.0), "A2 not binary");
    ensure!(
        (0..g.n_nodes()).all(|v| !a2.contains(v, v)),
        "A2 has a self-loop"
    );
    for (u, v) in a.upper_edges() {
        ensure!(a2.contains(u, v), "edge ({u}, {v}) lost");
    }
    let tail = p.tail_mask(g.n_nodes());
    for &(u, v) in &out.added_edges {
        ensure!(!a.contains(u, v), "added edge ({u}, {v}) already existed");
        ensure!(
            tail[u] || tail[v],
            "added edge ({u}, {v}) has no tail endpoint"
        );
    }
    ensure!(
        a2.nnz() == a.nnz() + 2 * out.added_edges.len(),
        "edge count mismatch"
    );
    Ok(())
}

pub fn check_forge(g: &AttributedGraph, p: &NodePartition, delta: f64, seed: u64) -> Check {
    let f = forge_tails(g, p, delta, seed).map_err(|e| e.to_string())?;
    let expected: usize = p
        .head_nodes
        .iter()
        .map(|&v| (delta * g.degree(v) as f64).floor() as usize)
        .sum();
    let a = g.adjacency();
    for (u, v) in f.adjacency.upper_edges() {
        ensure!(a.contains(u, v), "forged graph gained ({u}, {v})");
    }
    let tail = p.tail_mask(g.n_nodes());
    for &(u, v) in &f.dropped_edges {
        ensure!(!(tail[u] && tail[v]), "tail-only edge ({u}, {v}) dropped");
    }
    ensure!(
        f.adjacency.nnz() + 2 * f.dropped_edges.len() == a.nnz(),
        "dropped edges do not match the graph"
    );
    for v in 0..g.n_nodes() {
        ensure!(
            f.adjacency.row_nnz(v) > 0,
            "node {v} isolated (delta {delta})"
        );
    }
    ensure!(
        f.dropped_edges.len() == expected,
        "dropped {} edges, expected {expected} (delta {delta})",
        f.dropped_edges.len()
    );
    Ok(())
}

pub fn check_softmax_rows(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = (rng.random_range(1..20), rng.random_range(1..12));
    let x = gaussian(r, c, &mut rng).scale(rng.random_range(0.01..300.0));
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let s = tape.softmax_rows(v);
    for row in 0..r {
        let sum: f64 = tape.value(s).row(row).iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-12, "row {row} sums to {sum}");
    }
    Ok(())
}

pub fn check_kl_nonnegative(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = (rng.random_range(1..20), rng.random_range(1..8));
    let scale = rng.random_range(0.01..10.0);
    let mut tape = Tape::new();
    let mu = tape.constant(gaussian(r, c, &mut rng).scale(scale));
    let logvar = tape.constant(gaussian(r, c, &mut rng).scale(scale));
    let kl = tape
        .kl_gaussian_standard(mu, logvar)
        .map_err(|e| e.to_string())?;
    ensure!(tape.scalar(kl) >= 0.0, "gaussian KL {}", tape.scalar(kl));
    let logits = tape.constant(gaussian(r, c, &mut rng).scale(scale));
    let prior = gaussian(r, c, &mut rng).scale(scale);
    let kl = tape
        .kl_categorical_rows(logits, &prior)
        .map_err(|e| e.to_string())?;
    ensure!(tape.scalar(kl) >= 0.0, "categorical KL {}", tape.scalar(kl));
    // identical distributions give zero up to rounding
    let same = tape.constant(prior.clone());
    let kl = tape
        .kl_categorical_rows(same, &prior)
        .map_err(|e| e.to_string())?;
    ensure!(
        tape.scalar(kl).abs() < 1e-12,
        "KL(p, p) = {}",
        tape.scalar(kl)
    );
    Ok(())
}

/// Every structural check on the graph drawn from `seed`.
pub fn check_all(seed: u64) -> Check {
    let g = random_graph(seed);
    let p = pareto_split(&g);
    check_pareto(&g, &p)?;
    check_sampling(&g, &p, seed)?;
    for delta in [0.3, 0.5] {
        check_forge(&g, &p, delta, seed)?;
    }
    check_softmax_rows(seed)?;
    check_kl_nonnegative(seed)?;
    Ok(())
}

/// A 5-node toy graph with two classes and dense features.
pub fn toy_graph() -> AttributedGraph {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)];
    let adjacency = SparseMatrix::adjacency_from_edges(5, &edges).unwrap();
    let features = SparseMatrix::from_triplets(
        5,
        3,
        &[
            (0, 0, 1.0),
            (0, 2, 0.5),
            (1, 1, 1.0),
            (2, 0, 0.3),
            (2, 2, 1.0),
            (3, 1, 0.7),
            (4, 0, 1.0),
            (4, 1, 0.2),
        ],
    )
    .unwrap();
    AttributedGraph::new(adjacency, features, vec![0, 0, 1, 1, 0], 2).unwrap()
}

pub fn dense_features(g: &AttributedGraph) -> DenseMatrix {
    g.features().to_dense()
}

pub fn arc(s: &SparseMatrix) -> Arc<SparseMatrix> {
    Arc::new(s.clone())
}

/// Scalar `Σ v ⊙ R` for a fixed random `R`, so that every entry of `v`
/// reaches the output with its own weight.
fn weighted_sum(t: &mut Tape, v: Var, seed: u64) -> tailaug::Result<Var> {
    let (r, c) = t.value(v).shape();
    let weights = gaussian(r, c, &mut stream_rng(seed, 99));
    let w = t.mul_const(v, weights)?;
    let left = t.constant(DenseMatrix::filled(1, r, 1.0));
    let right = t.constant(DenseMatrix::filled(c, 1, 1.0));
    let rows = t.matmul(left, w)?;
    t.matmul(rows, right)
}

/// Gaussian entries pushed at least 0.2 away from zero, clear of the ReLU kink.
fn away_from_zero(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gaussian(rows, cols, &mut stream_rng(seed, 98)).map(|x| x + 0.2 * x.signum())
}

/// Central-difference relative error for every differentiable operation and
/// every training loss on 5-node toy graphs, with fixed noise and masks.
pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    use tailaug::augmentor::{
        loss_ali_tape, loss_aug_tape, loss_p_tape, AugmentorParams, AugmentorVars, Noise,
    };
    use tailaug::gnn::{gcn_forward_tape, loss_sup, GnnParams};
    use tailaug::numerics::{gradcheck, normalize_adjacency};

    let g = toy_graph();
    let a = Arc::new(normalize_adjacency(g.adjacency()).unwrap());
    let x = arc(g.features());
    let labels = g.labels().to_vec();
    let m = |s: u64| away_from_zero(5, 3, s);
    let sq = |s: u64| away_from_zero(3, 3, s);
    let check = |f: &dyn Fn(&mut Tape, &[Var]) -> tailaug::Result<Var>, inputs: &[DenseMatrix]| {
        gradcheck(f, inputs).unwrap()
    };

    let mut out = Vec::new();
    out.push((
        "spmm",
        check(
            &|t, v| {
                let y = t.spmm(&a, v[0])?;
                weighted_sum(t, y, 1)
            },
            &[m(1)],
        ),
    ));
    out.push((
        "matmul",
        check(
            &|t, v| {
                let y = t.matmul(v[0], v[1])?;
                weighted_sum(t, y, 2)
            },
            &[m(2), sq(3)],
        ),
    ));
    out.push((
        "add",
        check(
            &|t, v| {
                let y = t.add(v[0], v[1])?;
                weighted_sum(t, y, 3)
            },
            &[m(4), m(5)],
        ),
    ));
    out.push((
        "sub",
        check(
            &|t, v| {
                let y = t.sub(v[0], v[1])?;
                weighted_sum(t, y, 4)
            },
            &[m(6), m(7)],
        ),
    ));
    out.push((
        "mul",
        check(
            &|t, v| {
                let y = t.mul(v[0], v[1])?;
                weighted_sum(t, y, 5)
            },
            &[m(8), m(9)],
        ),
    ));
    out.push((
        "mul_const",
        check(
            &|t, v| {
                let y = t.mul_const(v[0], m(10))?;
                weighted_sum(t, y, 6)
            },
            &[m(11)],
        ),
    ));
    out.push((
        "scale",
        check(
            &|t, v| {
                let y = t.scale(v[0], -1.7);
                weighted_sum(t, y, 7)
            },
            &[m(12)],
        ),
    ));
    out.push((
        "relu",
        check(
            &|t, v| {
                let y = t.relu(v[0]);
                weighted_sum(t, y, 8)
            },
            &[m(13)],
        ),
    ));
    out.push((
        "sigmoid",
        check(
            &|t, v| {
                let y = t.sigmoid(v[0]);
                weighted_sum(t, y, 9)
            },
            &[m(14)],
        ),
    ));
    out.push((
        "exp",
        check(
            &|t, v| {
                let y = t.exp(v[0]);
                weighted_sum(t, y, 10)
            },
            &[m(15)],
        ),
    ));
    out.push((
        "softmax_rows",
        check(
            &|t, v| {
                let y = t.softmax_rows(v[0]);
                weighted_sum(t, y, 11)
            },
            &[m(16)],
        ),
    ));
    out.push((
        "fuse",
        check(
            &|t, v| {
                let w = t.sigmoid(v[2]);
                let y = t.fuse(v[0], v[1], w)?;
                weighted_sum(t, y, 12)
            },
            &[m(17), m(18), away_from_zero(5, 1, 19)],
        ),
    ));
    out.push((
        "cross_entropy",
        check(
            &|t, v| t.cross_entropy(v[0], &[0, 2, 1, 1, 0], &[0, 1, 3]),
            &[m(20)],
        ),
    ));
    out.push((
        "inner_product_bce",
        check(&|t, v| t.inner_product_bce(v[0], g.adjacency()), &[m(21)]),
    ));
    out.push((
        "kl_gaussian",
        check(&|t, v| t.kl_gaussian_standard(v[0], v[1]), &[m(22), m(23)]),
    ));
    out.push((
        "kl_categorical",
        check(&|t, v| t.kl_categorical_rows(v[0], &m(24)), &[m(25)]),
    ));

    // L_sup through the two-layer classifier with a fixed dropout mask
    let gnn = GnnParams::init(3, 4, 2, 2, &mut stream_rng(7, 1)).unwrap();
    let weights: Vec<DenseMatrix> = gnn.params().map(|p| p.value.clone()).collect();
    out.push((
        "L_sup",
        check(
            &|t, v| {
                let mut rng = stream_rng(7, 4);
                let z = gcn_forward_tape(t, &a, &x, v, Some((0.5, &mut rng)))?;
                loss_sup(t, z, &labels, &[0, 2, 3])
            },
            &weights,
        ),
    ));

    let aug = AugmentorParams::init(5, 3, 4, 2, 2, 0.0, &mut stream_rng(8, 1)).unwrap();
    let inputs: Vec<DenseMatrix> = aug.params().map(|p| p.value.clone()).collect();
    let unpack = |v: &[Var]| AugmentorVars {
        layers: v[..2].to_vec(),
        mu_head: v[2],
        logvar_head: v[3],
        eps_raw: v[4],
    };
    let forged = SparseMatrix::adjacency_from_edges(5, &[(0, 1), (2, 3), (3, 4)]).unwrap();
    let a1 = Arc::new(normalize_adjacency(&forged).unwrap());
    let augmented =
        SparseMatrix::adjacency_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (1, 4)])
            .unwrap();
    let a2 = Arc::new(normalize_adjacency(&augmented).unwrap());
    let noise = Noise::Sample(gaussian(5, 2, &mut stream_rng(8, 5)));
    let prior = gaussian(5, 2, &mut stream_rng(8, 6));
    out.push((
        "L_aug",
        check(
            &|t, v| loss_aug_tape(t, &a1, g.adjacency(), &x, &unpack(v), &noise),
            &inputs,
        ),
    ));
    out.push((
        "L_p",
        check(
            &|t, v| Ok(loss_p_tape(t, &a, &x, &unpack(v), &labels, &[0, 2, 3])?.0),
            &inputs,
        ),
    ));
    out.push((
        "L_ali",
        check(
            &|t, v| loss_ali_tape(t, &a2, &x, &unpack(v), &prior, &noise),
            &inputs,
        ),
    ));
    out
}

/// A random graph big enough for a tail split with a non-empty head set.
pub fn small_task(seed: u64) -> (AttributedGraph, NodePartition, tailaug::graph::DatasetSplit) {
    use tailaug::graph::{make_splits, SplitMode};
    let g = (seed..)
        .map(random_graph)
        .find(|g| g.n_nodes() >= 30 && !pareto_split(g).head_nodes.is_empty())
        .unwrap();
    let p = pareto_split(&g);
    let split = make_splits(&g, &p, SplitMode::Tail, seed, None).unwrap();
    (g, p, split)
}

/// Runs one epoch's classifier and augmentor updates and checks that each
/// parameter group only receives gradient from its own losses, while both
/// groups do receive gradient from their own.
pub fn check_gradient_isolation(
    g: &AttributedGraph,
    p: &NodePartition,
    split: &tailaug::graph::DatasetSplit,
    config: &tailaug::trainer::TrainConfig,
) -> Check {
    use tailaug::trainer::{augmentor_step, gnn_step, init_params, Context};
    let ctx = Context::new(g, p, split, config).map_err(|e| e.to_string())?;
    let (mut gnn, aug) = init_params(&ctx).map_err(|e| e.to_string())?;
    let mut aug = aug.ok_or("augmented model expected")?;
    let forged = forge_tails(g, p, config.delta_drop, config.seed).map_err(|e| e.to_string())?;
    let a1 = Arc::new(
        tailaug::numerics::normalize_adjacency(&forged.adjacency).map_err(|e| e.to_string())?,
    );
    let (a2, _) = ctx
        .classifier_graph(Some(&aug), 1)
        .map_err(|e| e.to_string())?;
    let (_, audit) = gnn_step(&ctx, &mut gnn, Some(&aug), &a2, 1).map_err(|e| e.to_string())?;
    ensure!(
        !audit.augmentor_nonzero_from_gnn,
        "classifier loss reached augmentor weights"
    );
    let nonzero = |m: &DenseMatrix| m.data().iter().any(|&x| x != 0.0);
    ensure!(
        gnn.params().any(|q| nonzero(&q.grad)),
        "classifier received no gradient"
    );
    let (_, audit) =
        augmentor_step(&ctx, &mut aug, &gnn, &a1, &a2, 1).map_err(|e| e.to_string())?;
    ensure!(
        !audit.gnn_nonzero_from_augmentor,
        "augmentor losses reached classifier weights"
    );
    ensure!(
        aug.params().all(|q| nonzero(&q.grad)),
        "some augmentor weight received no gradient"
    );
    Ok(())
}
