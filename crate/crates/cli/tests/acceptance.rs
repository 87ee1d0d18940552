//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured values (visible under `--nocapture`).
//!
//! Run with: `cargo test -p quantot-cli --release --test acceptance`

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quantot_core::datasets::{fragmented_hypercube, gaussian_pair};
use quantot_core::estimators::{
    plugin_estimate, quantized_eps_estimate, quantized_estimate, SeedingMethod,
};
use quantot_core::exact::{brute_force_assignment, solve_exact, w2_distance};
use quantot_core::measure::{squared_euclidean_cost, DiscreteMeasure};
use quantot_core::quantize::{
    kmeanspp_seed, lloyd_refine, optimal_quantization_bruteforce, quantize_to_precision,
};
use quantot_core::sinkhorn::approx_solve_with;

use quantot_cli::experiments::ols_slope;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cloud(n: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * scale).collect();
    Array2::from_shape_vec((n, d), v).unwrap()
}

fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// Mean relative error of an estimator closure over `seeds` runs.
fn mean_rel_err(
    reference: f64,
    seeds: std::ops::Range<u64>,
    mut run: impl FnMut(u64) -> f64,
) -> f64 {
    let n = (seeds.end - seeds.start) as f64;
    seeds
        .map(|s| (run(s) - reference).abs() / reference)
        .sum::<f64>()
        / n
}

fn log_log_slope_upper_half(ks: &[usize], errs: &[f64]) -> f64 {
    let start = ks.len() / 2;
    let xs: Vec<f64> = ks[start..].iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = errs[start..].iter().map(|&e| e.ln()).collect();
    ols_slope(&xs, &ys).0
}

#[test]
fn criterion_01_exact_solver_matches_brute_force() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let n = 2 + (seed as usize % 5); // n <= 6
        let d = 1 + (seed as usize % 3); // d <= 3
        let x = random_cloud(n, d, 4.0, &mut r);
        let y = random_cloud(n, d, 4.0, &mut r);
        let oracle = brute_force_assignment(x.view(), y.view()).unwrap();
        let cost = squared_euclidean_cost(x.view(), y.view()).unwrap();
        let a = uniform(n);
        let solved = solve_exact(a.view(), a.view(), &cost).unwrap().cost;
        worst = worst.max((solved - oracle).abs());
        assert!(
            (solved - oracle).abs() <= 1e-9,
            "instance {seed}: solver {solved} vs oracle {oracle}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 5.0,
        "runtime {elapsed:.2}s exceeds the 5 s budget"
    );
    println!("PASS criterion 01: exact = brute force on 100 instances (worst gap {worst:.2e}, {elapsed:.2}s)");
}

#[test]
fn criterion_02_gaussian_closed_form() {
    let pair = gaussian_pair(5, 1e-6).unwrap();
    let reference = 5f64.sqrt();
    let mut sum = 0.0;
    for seed in 0..50u64 {
        sum += plugin_estimate(
            pair.mu.as_ref(),
            pair.nu.as_ref(),
            512,
            &mut rng(1000 + seed),
        )
        .unwrap();
    }
    let mean = sum / 50.0;
    let rel = (mean - reference).abs() / reference;
    assert!(rel <= 0.02, "mean {mean} deviates {rel:.4} from sqrt(5)");
    println!(
        "PASS criterion 02: Gaussian plug-in mean {mean:.6} within {:.3}% of sqrt(5)",
        rel * 100.0
    );
}

#[test]
fn criterion_03_hypercube_closed_form() {
    let pair = fragmented_hypercube(2).unwrap();
    let reference = 8f64.sqrt();
    let mut sum = 0.0;
    for seed in 0..50u64 {
        sum += plugin_estimate(
            pair.mu.as_ref(),
            pair.nu.as_ref(),
            512,
            &mut rng(2000 + seed),
        )
        .unwrap();
    }
    let mean = sum / 50.0;
    let rel = (mean - reference).abs() / reference;
    assert!(rel <= 0.05, "mean {mean} deviates {rel:.4} from sqrt(8)");
    println!(
        "PASS criterion 03: hypercube plug-in mean {mean:.6} within {:.3}% of sqrt(8)",
        rel * 100.0
    );
}

#[test]
fn criterion_04_quantized_improves_on_clusterable_gaussian() {
    let pair = gaussian_pair(5, 1e-4).unwrap();
    let reference = 5f64.sqrt();
    let ks = [8usize, 16, 32, 64, 128];
    let seeds = 0..50u64;
    let mut plugin_means = Vec::new();
    let mut quant_means = Vec::new();
    for (k_idx, &k) in ks.iter().enumerate() {
        let base = 3000 + 100 * k_idx as u64;
        plugin_means.push(mean_rel_err(reference, seeds.clone(), |s| {
            plugin_estimate(pair.mu.as_ref(), pair.nu.as_ref(), k, &mut rng(base + s)).unwrap()
        }));
        quant_means.push(mean_rel_err(reference, seeds.clone(), |s| {
            quantized_estimate(
                pair.mu.as_ref(),
                pair.nu.as_ref(),
                k,
                1.0,
                SeedingMethod::KmeansPlusPlus,
                0,
                &mut rng(50_000 + base + s),
            )
            .unwrap()
        }));
    }
    for (i, &k) in ks.iter().enumerate() {
        if k >= 16 {
            assert!(
                quant_means[i] < plugin_means[i],
                "k={k}: quantized {} not below plug-in {}",
                quant_means[i],
                plugin_means[i]
            );
        }
    }
    let plugin_slope = log_log_slope_upper_half(&ks, &plugin_means);
    let quant_slope = log_log_slope_upper_half(&ks, &quant_means);
    assert!(
        quant_slope <= 1.3 * plugin_slope,
        "slope ratio {:.2} below the required 1.3 (quantized {quant_slope:.3} vs plug-in {plugin_slope:.3})",
        quant_slope / plugin_slope
    );
    println!(
        "PASS criterion 04: quantized below plug-in at every k >= 16; slopes {quant_slope:.3} vs {plugin_slope:.3} (ratio {:.2})",
        quant_slope / plugin_slope
    );
}

#[test]
fn criterion_05_no_fabricated_gain_on_high_dim_hypercube() {
    let pair = fragmented_hypercube(8).unwrap();
    let reference = 8f64.sqrt();
    // Nine k values evenly log-spaced over [1, 100], the protocol behind the
    // published error-vs-k curves; the slope window is the upper half.
    let ks = [1usize, 2, 3, 6, 10, 18, 32, 56, 100];
    let seeds = 0..50u64;
    let mut plugin_means = Vec::new();
    let mut quant_means = Vec::new();
    for (k_idx, &k) in ks.iter().enumerate() {
        let base = 4000 + 100 * k_idx as u64;
        plugin_means.push(mean_rel_err(reference, seeds.clone(), |s| {
            plugin_estimate(pair.mu.as_ref(), pair.nu.as_ref(), k, &mut rng(base + s)).unwrap()
        }));
        quant_means.push(mean_rel_err(reference, seeds.clone(), |s| {
            quantized_estimate(
                pair.mu.as_ref(),
                pair.nu.as_ref(),
                k,
                1.0,
                SeedingMethod::KmeansPlusPlus,
                0,
                &mut rng(60_000 + base + s),
            )
            .unwrap()
        }));
    }
    let plugin_slope = log_log_slope_upper_half(&ks, &plugin_means);
    let quant_slope = log_log_slope_upper_half(&ks, &quant_means);
    let gap = (quant_slope - plugin_slope).abs();
    assert!(
        gap <= 0.25 * plugin_slope.abs(),
        "slopes differ by {gap:.3} (> 25% of plug-in slope {plugin_slope:.3}); quantized {quant_slope:.3}"
    );
    println!(
        "PASS criterion 05: d=8 hypercube slopes agree within 25% (quantized {quant_slope:.3} vs plug-in {plugin_slope:.3})"
    );
}

#[test]
fn criterion_06_kmeanspp_bound() {
    let mut checked = 0;
    for instance in 0..20u64 {
        let mut r = rng(7000 + instance);
        let n = 4 + (instance as usize % 7); // n <= 10
        let d = 1 + (instance as usize % 2);
        let cloud = random_cloud(n, d, 6.0, &mut r);
        let measure = DiscreteMeasure::uniform(cloud).unwrap();
        for k in 1..=3usize.min(n) {
            let opt = optimal_quantization_bruteforce(&measure, k).unwrap();
            let mut mean = 0.0;
            for s in 0..25u64 {
                // 20 instances x 25 seeds = 500 seeded runs per k.
                mean += kmeanspp_seed(&measure, k, &mut rng(8000 + instance * 100 + s))
                    .unwrap()
                    .error;
            }
            mean /= 25.0;
            let bound = 8.0 * ((k as f64).ln() + 2.0) * opt;
            if opt > 0.0 {
                assert!(
                    mean <= bound,
                    "instance {instance}, k={k}: mean {mean} > bound {bound} (opt {opt})"
                );
            } else {
                assert!(
                    mean <= 1e-12,
                    "instance {instance}, k={k}: opt 0 but mean {mean}"
                );
            }
            checked += 1;
        }
    }
    println!("PASS criterion 06: k-means++ expectation bound held on {checked} instance/k pairs");
}

#[test]
fn criterion_07_quantize_to_precision_contract() {
    let mut runs = 0;
    for seed in 0..200u64 {
        let mut r = rng(9000 + seed);
        let n = 5 + (seed as usize % 60);
        let d = 1 + (seed as usize % 4);
        let cloud = random_cloud(n, d, 3.0, &mut r);
        let mut w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let measure = DiscreteMeasure::new(cloud, Array1::from_vec(w)).unwrap();
        for eps in [0.02, 0.1, 0.5, 2.0] {
            let q = quantize_to_precision(&measure, eps, &mut r).unwrap();
            assert!(
                q.error <= eps * eps,
                "seed {seed}, eps {eps}: error {} above budget {}",
                q.error,
                eps * eps
            );
            runs += 1;
        }
    }
    println!("PASS criterion 07: achieved error <= eps^2 in all {runs} quantization runs");
}

#[test]
fn criterion_08_sinkhorn_epsilon_guarantee() {
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..50u64 {
        let mut r = rng(11_000 + seed);
        let n = 20 + (seed as usize % 81); // n <= 100
        let d = 2 + (seed as usize % 3);
        let x = random_cloud(n, d, 1.0, &mut r);
        let y = {
            let mut y = random_cloud(n, d, 1.0, &mut r);
            y.mapv_inplace(|v| v + 0.2);
            y
        };
        let cost = squared_euclidean_cost(x.view(), y.view()).unwrap();
        let a = uniform(n);
        let exact = solve_exact(a.view(), a.view(), &cost).unwrap().cost;
        for frac in [0.01, 0.05, 0.1] {
            let eps = frac * cost.max_entry();
            let report = approx_solve_with(a.view(), a.view(), &cost, eps, 100_000).unwrap();
            let gap = (report.cost - exact).abs();
            assert!(
                gap <= eps,
                "seed {seed}, eps {eps}: |approx - exact| = {gap} exceeds eps"
            );
            worst_ratio = worst_ratio.max(gap / eps);
            // Rounded plans are feasible to 1e-12.
            for (i, row) in report.plan.matrix().outer_iter().enumerate() {
                assert!((row.sum() - a[i]).abs() <= 1e-12);
            }
            for j in 0..n {
                assert!((report.plan.matrix().column(j).sum() - a[j]).abs() <= 1e-12);
            }
        }
    }
    println!(
        "PASS criterion 08: epsilon guarantee held on 150 solves (worst gap/eps {worst_ratio:.3})"
    );
}

/// Shared fixture for criteria 9 and 10: peaked Gaussian clouds (sigma 1e-3,
/// n = 2000) and their exact full-cloud distance.
fn peaked_clouds() -> &'static (DiscreteMeasure, DiscreteMeasure, f64) {
    static CLOUDS: OnceLock<(DiscreteMeasure, DiscreteMeasure, f64)> = OnceLock::new();
    CLOUDS.get_or_init(|| {
        let pair = gaussian_pair(5, 1e-6).unwrap();
        let mut r = rng(12_000);
        let mu = DiscreteMeasure::uniform(pair.mu.draw(2000, &mut r)).unwrap();
        let nu = DiscreteMeasure::uniform(pair.nu.draw(2000, &mut r)).unwrap();
        let exact = w2_distance(&mu, &nu).unwrap();
        (mu, nu, exact)
    })
}

#[test]
fn criterion_09_quantized_eps_pipeline_respects_3eps() {
    let (mu, nu, exact) = peaked_clouds();
    let mut worst: f64 = 0.0;
    for (i, eps) in [0.5, 0.2, 0.1, 0.05, 0.02].into_iter().enumerate() {
        let e = quantized_eps_estimate(mu, nu, eps, &mut rng(13_000 + i as u64)).unwrap();
        let gap = (e.distance - exact).abs();
        assert!(
            gap <= 3.0 * eps,
            "eps {eps}: |estimate - exact| = {gap} exceeds 3 eps = {}",
            3.0 * eps
        );
        worst = worst.max(gap / (3.0 * eps));
    }
    println!(
        "PASS criterion 09: 3-eps guarantee held on all 5 eps values (worst gap/3eps {worst:.4})"
    );
}

#[test]
fn criterion_10_quantized_eps_pipeline_speedup() {
    let (mu, nu, exact) = peaked_clouds();
    let eps = 0.1; // mid-range of the criterion-9 grid
                   // Warm-up both paths once, then time.
    quantized_eps_estimate(mu, nu, eps, &mut rng(14_000)).unwrap();
    let start = Instant::now();
    let est = quantized_eps_estimate(mu, nu, eps, &mut rng(14_001)).unwrap();
    let quantized_time = start.elapsed().as_secs_f64();

    let bare_eps_cost = (3.0 * eps) * (3.0 * eps);
    let cost = squared_euclidean_cost(mu.support(), nu.support()).unwrap();
    approx_solve_with(mu.weights(), nu.weights(), &cost, bare_eps_cost, 10_000).unwrap();
    let start = Instant::now();
    let cost = squared_euclidean_cost(mu.support(), nu.support()).unwrap();
    let bare = approx_solve_with(mu.weights(), nu.weights(), &cost, bare_eps_cost, 10_000).unwrap();
    let bare_time = start.elapsed().as_secs_f64();

    assert!((est.distance - exact).abs() <= 3.0 * eps);
    assert!((bare.cost.max(0.0).sqrt() - exact).abs() <= 3.0 * eps);
    assert!(
        quantized_time <= 0.5 * bare_time,
        "quantized pipeline {quantized_time:.4}s not at least 2x faster than bare solver {bare_time:.4}s"
    );
    println!(
        "PASS criterion 10: quantized {quantized_time:.4}s vs bare {bare_time:.4}s ({:.0}x speedup)",
        bare_time / quantized_time
    );
}

#[test]
fn criterion_11_oversampling_cuts_variance() {
    let pair = gaussian_pair(5, 1.0).unwrap();
    let seeds = 0..50u64;
    for (k_idx, k) in [16usize, 32, 64].into_iter().enumerate() {
        let base = 15_000 + 1000 * k_idx as u64;
        let plugin: Vec<f64> = seeds
            .clone()
            .map(|s| {
                plugin_estimate(pair.mu.as_ref(), pair.nu.as_ref(), k, &mut rng(base + s)).unwrap()
            })
            .collect();
        let quant: Vec<f64> = seeds
            .clone()
            .map(|s| {
                quantized_estimate(
                    pair.mu.as_ref(),
                    pair.nu.as_ref(),
                    k,
                    1.0,
                    SeedingMethod::KmeansPlusPlus,
                    0,
                    &mut rng(70_000 + base + s),
                )
                .unwrap()
            })
            .collect();
        let std = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let sp = std(&plugin);
        let sq = std(&quant);
        assert!(sq <= sp, "k={k}: quantized std {sq} above plug-in std {sp}");
        println!("  criterion 11 at k={k}: std quantized {sq:.5} <= plug-in {sp:.5}");
    }
    println!("PASS criterion 11: quantized estimator std below plug-in at k in {{16, 32, 64}}");
}

#[test]
fn criterion_12_lloyd_refinement_is_marginal() {
    let pair = gaussian_pair(5, 1.0).unwrap();
    let reference = 5f64.sqrt();
    let ks = [8usize, 16, 32, 64];
    let seeds = 0..50u64;
    // Per-run monotonicity of the quantization error under Lloyd.
    for seed in 0..20u64 {
        let mut r = rng(16_000 + seed);
        let cloud = DiscreteMeasure::uniform(pair.mu.draw(500, &mut r)).unwrap();
        let seeded = kmeanspp_seed(&cloud, 16, &mut r).unwrap();
        let refined = lloyd_refine(&cloud, &seeded, 5).unwrap();
        assert!(
            refined.error <= seeded.error + 1e-12,
            "seed {seed}: Lloyd increased quantization error"
        );
    }
    // The refinement buys a bounded improvement: at most 0.20 of mean
    // relative error at every k, on paired seeds so the same samples and
    // seeding are refined.
    for (k_idx, &k) in ks.iter().enumerate() {
        let base = 17_000 + 1000 * k_idx as u64;
        let run = |lloyd_iters: usize, s: u64| {
            quantized_estimate(
                pair.mu.as_ref(),
                pair.nu.as_ref(),
                k,
                1.0,
                SeedingMethod::KmeansPlusPlus,
                lloyd_iters,
                &mut rng(base + s),
            )
            .unwrap()
        };
        let without = mean_rel_err(reference, seeds.clone(), |s| run(0, s));
        let with = mean_rel_err(reference, seeds.clone(), |s| run(5, s));
        let improvement = without - with;
        assert!(
            improvement <= 0.20,
            "k={k}: Lloyd improves mean relative error by {:.3} (> 0.20): {without:.4} -> {with:.4}",
            improvement
        );
        println!(
            "  criterion 12 at k={k}: mean rel err {without:.4} -> {with:.4} (improvement {improvement:.4})"
        );
    }
    println!("PASS criterion 12: Lloyd never hurts quantization error and buys at most 0.20 of mean relative error");
}

#[test]
fn criterion_13_cli_reproducibility() {
    let dir = std::env::temp_dir().join(format!("quantot-acc-{}.d", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    let run = |out: &std::path::Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_quantot"))
            .args([
                "error-vs-k",
                "--dataset",
                "gaussian:d=3,tau=0.01",
                "--k-grid",
                "2,4,8,16",
                "--reps",
                "5",
                "--seed",
                "21",
                "--out",
            ])
            .arg(out)
            .status()
            .expect("binary runs");
        assert!(status.success());
        std::fs::read_to_string(out).unwrap()
    };
    let a = run(&out_a);
    let b = run(&out_b);
    assert_eq!(
        a, b,
        "identical config and seed must reproduce identical CSV"
    );

    // Same for a timing subcommand once wall-time columns are dropped.
    let run_timed = |out: &std::path::Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_quantot"))
            .args([
                "cpu-time",
                "--dataset",
                "gaussian:d=2,tau=0.01",
                "--k-grid",
                "2,4",
                "--kappa",
                "1,0.5",
                "--reps",
                "3",
                "--seed",
                "33",
                "--out",
            ])
            .arg(out)
            .status()
            .expect("binary runs");
        assert!(status.success());
        let text = std::fs::read_to_string(out).unwrap();
        text.lines()
            .map(|l| {
                if l.starts_with('#') {
                    l.to_string()
                } else {
                    l.rsplit_once(',')
                        .map(|(head, _)| head.to_string())
                        .unwrap_or_default()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = run_timed(&out_a);
    let b = run_timed(&out_b);
    assert_eq!(a, b, "error columns of timed runs must match");
    std::fs::remove_dir_all(dir).ok();
    println!("PASS criterion 13: identical config + seed reproduces identical error columns");
}
