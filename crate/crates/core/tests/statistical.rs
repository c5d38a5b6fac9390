//! Seeded Monte Carlo checks. Tolerances are statistical decisions; seeds
//! are fixed so results are reproducible.

use cfh_core::csbmx::{generate_csbmx, generate_csbmx2, Csbmx2Params, CsbmxParams};
use cfh_core::experiment::{run_shuffle_sweep, ShuffleSweepConfig};
use cfh_core::graph::{class_partition, default_split, load_graph, save_graph, to_undirected};
use cfh_core::metrics::{baseline_estimate, cfh_report, BaselineMode};
use cfh_core::rng::substream;
use cfh_core::sgnn::{evaluate, train_simplified_gnn, ConvolutionSpec, TrainConfig};
use cfh_core::shuffle::pseudo_label_shuffle;
use cfh_core::theory::{expected_neighbor_feature, finite_n_ber_estimate, monte_carlo_neighbor};
use cfh_core::{Matrix, Split};
use rand_distr::{Distribution, StandardNormal};

fn standard_graph(tau: f64, seed: u64) -> cfh_core::LabeledGraph {
    let g = generate_csbmx(&CsbmxParams::symmetric_1d(10_000, 1.0, 15, 5, tau, seed)).unwrap();
    g.with_split(Some(default_split(g.labels(), 2, seed))).unwrap()
}

#[test]
fn impartial_graph_trains_well() {
    let conv = ConvolutionSpec::row_normalized(1);
    let mut total = 0.0;
    for seed in 0..5 {
        let g = standard_graph(0.0, seed);
        let model = train_simplified_gnn(&g, &conv, &TrainConfig { seed, ..Default::default() }).unwrap();
        total += evaluate(&model, &g, &conv, Split::Test).unwrap();
    }
    assert!(total / 5.0 >= 0.85, "mean accuracy {}", total / 5.0);
}

#[test]
fn csbmx_balance_and_symmetrized_degree() {
    let g = generate_csbmx(&CsbmxParams::symmetric_1d(2000, 1.0, 15, 5, 1.0, 4)).unwrap();
    assert_eq!(class_partition(&g).sizes(), vec![1000, 1000]);
    // Symmetrizing merges each node's 20 out-neighbors with its in-neighbors,
    // so degrees start at 20; in-degree is unbounded, and so is the total.
    let mut incoming = vec![Vec::new(); g.n()];
    for i in 0..g.n() {
        for &j in g.neighbors(i) {
            incoming[j].push(i);
        }
    }
    let u = to_undirected(&g);
    for i in 0..u.n() {
        let mut union: Vec<usize> = g.neighbors(i).iter().chain(&incoming[i]).copied().collect();
        union.sort_unstable();
        union.dedup();
        assert_eq!(u.neighbors(i), union.as_slice());
        assert!(u.degree(i) >= 20 && u.degree(i) <= 20 + incoming[i].len(), "node {i}");
    }
}

#[test]
fn saving_a_loaded_graph_is_byte_identical() {
    let g = generate_csbmx(&CsbmxParams::symmetric_1d(500, 1.0, 6, 3, 0.7, 8)).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_graph(&g, a.path()).unwrap();
    save_graph(&load_graph(a.path()).unwrap(), b.path()).unwrap();
    for f in ["edges.tsv", "features.csv", "labels.csv", "meta.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn csbmx2_degrees_and_impartiality() {
    let base = Csbmx2Params {
        n: 10_000,
        c: 10,
        delta: 1.0,
        variance: 1.0,
        r: 0.5,
        alpha: 1.5,
        d_min: 20,
        d_max: 1000,
        tau: 0.0,
        seed: 0,
        population_means: false,
    };
    let mut total = 0.0;
    for seed in 0..5 {
        let g = generate_csbmx2(&Csbmx2Params { seed, ..base.clone() }).unwrap();
        if seed == 0 {
            assert!((0..g.n()).all(|i| (20..=1000).contains(&g.degree(i))));
        }
        total += cfh_report(&g, BaselineMode::Exact).unwrap().graph_cfh;
    }
    assert!((total / 5.0).abs() < 0.02, "mean CFH {}", total / 5.0);
}

#[test]
fn sampled_baseline_is_unbiased() {
    let mut rng = substream(5, 0);
    let n = 1000;
    let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect());
    let exact: f64 = baseline_estimate(&x, BaselineMode::Exact).unwrap().iter().sum::<f64>() / n as f64;
    let estimates: Vec<f64> = (0..20)
        .map(|seed| {
            let b = baseline_estimate(&x, BaselineMode::Sampled { m: 200, seed }).unwrap();
            b.iter().sum::<f64>() / n as f64
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / 20.0;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    let se = sd / 20f64.sqrt();
    assert!((mean - exact).abs() <= 4.0 * se, "mean {mean}, exact {exact}, se {se}");
}

#[test]
fn monte_carlo_error_scaling() {
    let est = monte_carlo_neighbor(1.0, 1.0, 100_000, 17).unwrap();
    assert!((est.mean - expected_neighbor_feature(1.0, 1.0)).abs() <= 4.0 * est.std_error);
    let se: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&s| monte_carlo_neighbor(0.5, -1.0, s, 3).unwrap().std_error)
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1] / 10f64.sqrt();
        assert!((1.0 / 1.5..=1.5).contains(&ratio), "{se:?}");
    }
}

#[test]
fn finite_n_error_rates() {
    let p = |tau: f64, fd: f64| CsbmxParams::symmetric_1d(10_000, fd, 15, 5, tau, 0);
    let impartial = finite_n_ber_estimate(&p(0.0, 1.0), 5, 1).unwrap();
    assert!(impartial.mean < 0.15, "{impartial:?}");
    let biased = finite_n_ber_estimate(&p(1.5, 1.0), 5, 1).unwrap();
    assert!(biased.mean > impartial.mean, "{biased:?} vs {impartial:?}");
    let blind = finite_n_ber_estimate(&p(0.0, 0.0), 5, 1).unwrap();
    assert!((blind.mean - 0.5).abs() <= 0.05, "{blind:?}");
}

#[test]
fn shuffle_sweep_directions() {
    let cfg = ShuffleSweepConfig::new(vec![0.0, 0.5, 1.0], 5, 3);
    let biased = run_shuffle_sweep(&standard_graph(1.5, 2), &cfg).unwrap();
    assert!(biased[2].acc_mean >= biased[0].acc_mean, "{biased:?}");
    assert!(biased[2].graph_cfh.abs() < biased[0].graph_cfh.abs());

    let flat = run_shuffle_sweep(&standard_graph(0.0, 2), &cfg).unwrap();
    for r in &flat[1..] {
        let spread = 2.0 * r.acc_std.max(flat[0].acc_std).max(1e-3);
        assert!((r.acc_mean - flat[0].acc_mean).abs() <= spread, "{flat:?}");
    }
    let baseline_only = run_shuffle_sweep(&standard_graph(0.0, 2), &ShuffleSweepConfig::new(vec![0.0], 1, 3)).unwrap();
    assert_eq!(baseline_only.len(), 1);
}

#[test]
fn pseudo_label_fine_tuning_does_not_hurt() {
    let conv = ConvolutionSpec::row_normalized(1);
    let mut report = Vec::new();
    let mut ok = 0;
    for seed in 0..5 {
        let g = standard_graph(1.5, 10 + seed);
        let out = pseudo_label_shuffle(&g, &conv, &TrainConfig { seed, ..Default::default() }, 0.7, 1.0, seed).unwrap();
        let before = evaluate(&out.initial_model, &g, &conv, Split::Test).unwrap();
        let after = evaluate(&out.fine_tuned, &out.graph, &conv, Split::Test).unwrap();
        report.push((before, after));
        if after >= before - 0.01 {
            ok += 1;
        }
    }
    assert_eq!(ok, 5, "{report:?}");
}
