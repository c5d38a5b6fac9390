//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use cfh_core::csbmx::{generate_csbmx, CsbmxParams};
use cfh_core::experiment::{measure, rows_to_csv, run_sweep, SweepConfig, SweepRow};
use cfh_core::graph::{load_graph, LabeledGraph};
use cfh_core::metrics::{
    cfh_report, class_homophily, class_stats, feature_distance, generalized_homophily, BaselineMode,
};
use cfh_core::rng::substream;
use cfh_core::sampling::weighted_sample_without_replacement;
use cfh_core::shuffle::{shuffle_features, ShuffleSpec};
use cfh_core::theory::{
    asymptotic_ber, expected_neighbor_feature, expected_neighbor_quadrature, monte_carlo_neighbor, BerQuery,
};
use cfh_core::Matrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_corpus() -> Vec<LabeledGraph> {
    let mut rng = substream(2024, 0);
    let mut out = Vec::new();
    while out.len() < 200 {
        let n = rng.random_range(4..=64);
        let c = rng.random_range(2..=3);
        let k = rng.random_range(1..=3);
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && rng.random_bool(0.2)).collect())
            .collect();
        let features = Matrix::from_vec(n, k, (0..n * k).map(|_| StandardNormal.sample(&mut rng)).collect());
        let labels: Vec<usize> = (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
        if neighbors.iter().all(Vec::is_empty) {
            continue;
        }
        out.push(LabeledGraph::new(c, neighbors, features, labels, None, true).unwrap());
    }
    out
}

fn bounds(corpus: &[LabeledGraph]) -> Outcome {
    let mut violations = 0;
    let mut values = 0;
    for g in corpus {
        let r = cfh_report(g, BaselineMode::Exact).unwrap();
        for v in r.node_cfh.iter().chain(std::iter::once(&r.graph_cfh)) {
            values += 1;
            if !(-1.0..=1.0).contains(v) {
                violations += 1;
            }
        }
    }
    check(violations == 0, format!("{violations} violations among {values} values"))
}

fn scale_invariance(corpus: &[LabeledGraph]) -> Outcome {
    let mut worst: f64 = 0.0;
    for g in corpus {
        let base = cfh_report(g, BaselineMode::Exact).unwrap();
        for s in [-3.0, 0.5, 1e6] {
            let scaled = g.with_features(g.features().map(|v| v * s)).unwrap();
            let r = cfh_report(&scaled, BaselineMode::Exact).unwrap();
            for (a, b) in base.node_cfh.iter().zip(&r.node_cfh) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((base.graph_cfh - r.graph_cfh).abs());
        }
    }
    check(worst <= 1e-9, format!("max |difference| = {worst:e}"))
}

fn ratio_identity() -> Outcome {
    // Node 0 at 0 with its only neighbor at distance 1 and the remaining
    // node at distance 19: the baseline is (1 + 19) / 2 = 10.
    let g = LabeledGraph::new(
        2,
        vec![vec![1], vec![0], vec![0]],
        Matrix::column(&[0.0, 0.0, 0.0]),
        vec![0, 1, 0],
        None,
        true,
    )
    .unwrap();
    let xc = Matrix::column(&[0.0, 1.0, 19.0]);
    let r = generalized_homophily(&g, &xc, BaselineMode::Exact).unwrap();
    let ok = r.baseline[0] == 10.0 && r.neighbor_distance[0] == 1.0 && (r.node_cfh[0] - 0.9).abs() <= 1e-12;
    check(ok, format!("b = {}, d = {}, node CFH = {}", r.baseline[0], r.neighbor_distance[0], r.node_cfh[0]))
}

fn generator_exactness() -> Outcome {
    let taus = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    let mut problems = Vec::new();
    for d_plus in [5, 10, 15] {
        for d_minus in [0, 5, 10] {
            let mut reference: Option<(f64, Matrix)> = None;
            for tau in taus {
                let p = CsbmxParams::symmetric_1d(2000, 1.0, d_plus, d_minus, tau, 11);
                let g = generate_csbmx(&p).unwrap();
                for i in 0..g.n() {
                    if g.degree(i) != d_plus + d_minus || g.same_class_degree(i) != d_plus {
                        problems.push(format!("degree mismatch at node {i} (d+={d_plus}, d-={d_minus}, tau={tau})"));
                        break;
                    }
                }
                let hc = class_homophily(&g);
                match &reference {
                    None => reference = Some((hc, g.features().clone())),
                    Some((h0, x0)) => {
                        if h0.to_bits() != hc.to_bits() {
                            problems.push(format!("class homophily differs at d+={d_plus}, d-={d_minus}, tau={tau}"));
                        }
                        if x0 != g.features() {
                            problems.push(format!("features differ at d+={d_plus}, d-={d_minus}, tau={tau}"));
                        }
                    }
                }
            }
        }
    }
    let detail = if problems.is_empty() {
        "63 graphs: degrees, same-class counts, class homophily and features all exact".to_string()
    } else {
        problems.join("; ")
    };
    check(problems.is_empty(), detail)
}

fn kendall(x: &[f64], y: &[f64]) -> f64 {
    let (mut concordant, mut discordant, mut tx, mut ty) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
            let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
            if a == 0.0 && b == 0.0 {
                continue;
            } else if a == 0.0 {
                tx += 1.0;
            } else if b == 0.0 {
                ty += 1.0;
            } else if a == b {
                concordant += 1.0;
            } else {
                discordant += 1.0;
            }
        }
    }
    (concordant - discordant) / ((concordant + discordant + tx) * (concordant + discordant + ty)).sqrt()
}

fn cfh_tracks_tau() -> Outcome {
    let taus = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    let means: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            (0..5)
                .map(|s| {
                    let g = generate_csbmx(&CsbmxParams::symmetric_1d(10_000, 1.0, 10, 10, tau, s)).unwrap();
                    cfh_report(&g, BaselineMode::Exact).unwrap().graph_cfh
                })
                .sum::<f64>()
                / 5.0
        })
        .collect();
    let at_zero = means[3].abs();
    let k = kendall(&taus, &means);
    let curve: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    check(
        at_zero < 0.02 && k > 0.9,
        format!("|CFH(tau=0)| = {at_zero:.4}, Kendall = {k:.3}, curve [{}]", curve.join(", ")),
    )
}

fn accuracy_sweep() -> SweepConfig {
    SweepConfig {
        tau: vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5],
        ..SweepConfig::single(1.0, 15, 0.0, 10_000, 5, 7)
    }
}

fn accuracy_vs_tau(rows: &[SweepRow]) -> Outcome {
    let at = |tau: f64| rows.iter().find(|r| (r.tau - tau).abs() < 1e-9).unwrap();
    let zero = at(0.0);
    let drop_pos = zero.acc_mean - at(1.5).acc_mean;
    let drop_neg = zero.acc_mean - at(-1.5).acc_mean;
    let mut monotone = true;
    for side in [1.0, -1.0] {
        let seq: Vec<&SweepRow> = [0.0, 0.5, 1.0, 1.5].iter().map(|&t| at(side * t)).collect();
        for w in seq.windows(2) {
            if w[1].acc_mean > w[0].acc_mean + w[0].acc_std.max(w[1].acc_std) {
                monotone = false;
            }
        }
    }
    let curve: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}±{:.4}", r.tau, r.acc_mean, r.acc_std)).collect();
    check(
        drop_pos >= 0.03 && drop_neg >= 0.03 && monotone,
        format!(
            "drop(+1.5) = {drop_pos:.4}, drop(-1.5) = {drop_neg:.4}, monotone within 1 sd: {monotone}; {}",
            curve.join(" ")
        ),
    )
}

fn theory_agreement() -> Outcome {
    let mut worst_quad: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut cell = 0;
    for x in -3..=3 {
        for &tau in &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            let x = x as f64;
            let closed = expected_neighbor_feature(x, tau);
            worst_quad = worst_quad.max((closed - expected_neighbor_quadrature(x, tau)).abs());
            let mc = monte_carlo_neighbor(x, tau, 100_000, 500 + cell).unwrap();
            worst_z = worst_z.max((closed - mc.mean).abs() / mc.std_error);
            cell += 1;
        }
    }
    let ber = |tau: f64| asymptotic_ber(&BerQuery::new(tau, 0.5, 0.15, 0.05)).unwrap();
    let at_zero = ber(0.0);
    let pos: Vec<f64> = [0.1, 0.5, 1.0, 1.5].iter().map(|&t| ber(t)).collect();
    let neg: Vec<f64> = [-0.1, -0.5, -1.0, -1.5].iter().map(|&t| ber(t)).collect();
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    check(
        worst_quad <= 1e-6 && worst_z <= 4.0 && at_zero == 0.0 && increasing(&pos) && increasing(&neg),
        format!(
            "max |closed - quad| = {worst_quad:e}, max MC z = {worst_z:.2}, BER(0) = {at_zero}, BER+ = {pos:.4?}, BER- = {neg:.4?}"
        ),
    )
}

fn sorted_rows(g: &LabeledGraph, class: usize) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = (0..g.n())
        .filter(|&i| g.labels()[i] == class)
        .map(|i| g.features().row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    rows
}

fn shuffle_removes_cfh() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for seed in 0..5 {
        let g = generate_csbmx(&CsbmxParams::symmetric_1d(10_000, 1.0, 15, 5, 1.5, seed)).unwrap();
        let s = shuffle_features(&g, &ShuffleSpec::classwise(1.0, seed)).unwrap();
        let before = cfh_report(&g, BaselineMode::Exact).unwrap().graph_cfh;
        let after = cfh_report(&s, BaselineMode::Exact).unwrap().graph_cfh;
        let multisets = (0..2).all(|c| sorted_rows(&g, c) == sorted_rows(&s, c));
        let hc = class_homophily(&g).to_bits() == class_homophily(&s).to_bits();
        let fd = |h: &LabeledGraph| {
            let st = class_stats(h).unwrap();
            feature_distance(&st[0], &st[1]).unwrap()
        };
        let fd_same = fd(&g).to_bits() == fd(&s).to_bits();
        let halved = after.abs() <= 0.5 * before.abs();
        ok &= multisets && hc && fd_same && halved;
        details.push(format!("{before:.4}->{after:.4}{}", if multisets && hc && fd_same { "" } else { " (stats changed)" }));
    }
    check(ok, format!("CFH before->after per seed: {}", details.join(", ")))
}

fn sampling_law() -> Outcome {
    let w = [1.0, 2.0, 3.0, 4.0];
    let total: f64 = w.iter().sum();
    let draws = 100_000;
    let mut counts = [[0usize; 4]; 4];
    let mut rng = substream(99, 0);
    for _ in 0..draws {
        let s = weighted_sample_without_replacement(&w, 2, &mut rng).unwrap();
        let (a, b) = (s[0].min(s[1]), s[0].max(s[1]));
        counts[a][b] += 1;
    }
    let mut worst: f64 = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            let p = w[a] / total * w[b] / (total - w[a]) + w[b] / total * w[a] / (total - w[b]);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = counts[a][b] as f64 / draws as f64;
            worst = worst.max((freq - p).abs() / se);
        }
    }
    check(worst <= 4.0, format!("max |z| over 6 subsets = {worst:.2}"))
}

fn cora_dir() -> PathBuf {
    std::env::var_os("CFH_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cora"))
}

fn cora() -> Outcome {
    let dir = cora_dir();
    if !dir.join("meta.json").exists() {
        return Outcome::Skip(format!("no dataset at {} (set CFH_CORA_DIR)", dir.display()));
    }
    let g = match load_graph(&dir) {
        Ok(g) => g,
        Err(e) => return Outcome::Fail(format!("could not load {}: {e}", dir.display())),
    };
    match measure(&g, BaselineMode::Exact) {
        Ok(r) => check(
            (r.graph_cfh - 0.0562).abs() <= 0.003 && (r.class_homophily - 0.7657).abs() <= 0.003,
            format!("graph CFH = {:.4}, class homophily = {:.4}", r.graph_cfh, r.class_homophily),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{id:>2}] {name} ({secs:.1}s): {detail}");
    };

    let t = Instant::now();
    let corpus = random_corpus();
    report(1, "measure bounds", t, bounds(&corpus));
    let t = Instant::now();
    report(2, "scale invariance", t, scale_invariance(&corpus));
    let t = Instant::now();
    report(3, "ratio identity", t, ratio_identity());
    let t = Instant::now();
    report(4, "generator exactness", t, generator_exactness());
    let t = Instant::now();
    report(5, "CFH follows tau", t, cfh_tracks_tau());

    let t = Instant::now();
    let cfg = accuracy_sweep();
    let rows = run_sweep(&cfg).expect("sweep runs");
    let csv = rows_to_csv(&rows);
    report(6, "accuracy peaks at tau = 0", t, accuracy_vs_tau(&rows));

    let t = Instant::now();
    report(7, "theory oracles agree", t, theory_agreement());
    let t = Instant::now();
    report(8, "shuffle removes CFH", t, shuffle_removes_cfh());
    let t = Instant::now();
    report(9, "sampling law", t, sampling_law());

    let t = Instant::now();
    let again = rows_to_csv(&run_sweep(&cfg).expect("sweep runs"));
    report(
        10,
        "pipeline determinism",
        t,
        check(again == csv, format!("{} bytes, identical: {}", csv.len(), again == csv)),
    );

    let t = Instant::now();
    report(11, "Cora spot check", t, cora());

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
