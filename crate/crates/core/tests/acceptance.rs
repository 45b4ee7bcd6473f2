//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use robscatter::config::ExperimentConfig;
use robscatter::estimator::{estimate_d_iteration, estimate_matrix_iteration};
use robscatter::experiment::run_convergence_experiment;
use robscatter::histogram::ks_distance;
use robscatter::rmt::{self, DensityOptions, SpectralInputs};
use robscatter::sampling::{sample, Block};
use robscatter::{
    linalg, EstimatorConfig, ModelSpec, ScatterModel, ScatterSpec, TauDistribution, WeightFunction,
    WeightSpec,
};

const ALPHA: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn model(spec: ModelSpec) -> Arc<ScatterModel> {
    Arc::new(ScatterModel::new(spec).expect("valid model"))
}

fn weight(c: f64) -> WeightFunction {
    WeightFunction::new(WeightSpec::student(ALPHA), c).expect("valid weight")
}

fn fixed_point_convergence() -> Outcome {
    let m = model(ModelSpec::three_cluster(100, 500));
    let w = weight(m.aspect_ratio());
    let cfg = EstimatorConfig::default();
    let mut worst_iter = 0;
    let mut worst_res: f64 = 0.0;
    let mut worst_time = Duration::ZERO;
    let mut all = true;
    for seed in 1..=5 {
        let s = sample(&m, seed);
        let t = Instant::now();
        let r = estimate_matrix_iteration(&s, &w, &cfg).expect("estimator runs");
        let elapsed = t.elapsed();
        all &= r.converged
            && r.residual <= 1e-11
            && r.iterations <= 200
            && elapsed.as_secs_f64() < 30.0;
        worst_iter = worst_iter.max(r.iterations);
        worst_res = worst_res.max(r.residual);
        worst_time = worst_time.max(elapsed);
    }
    outcome(
        all,
        format!("5 seeds: max iterations {worst_iter}, max residual {worst_res:.2e}, max time {worst_time:.2?}"),
    )
}

fn route_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut all = true;
    for k in 0..10 {
        let dim = rng.random_range(5..=100);
        let samples = dim * rng.random_range(3..=8);
        let tau = match k % 3 {
            0 => TauDistribution::Gamma {
                shape: 0.5,
                scale: 2.0,
            },
            1 => TauDistribution::InverseChiSquare { dof: 5.0 },
            _ => TauDistribution::Constant { value: 1.0 },
        };
        let scatter = ScatterSpec::Diagonal {
            values: (0..dim).map(|_| rng.random_range(0.5..5.0)).collect(),
        };
        let m = model(ModelSpec {
            dim,
            samples,
            inner_dim: None,
            scatter,
            tau,
        });
        let w = weight(m.aspect_ratio());
        let s = sample(&m, 100 + k);
        let cfg = EstimatorConfig::default();
        let a = estimate_matrix_iteration(&s, &w, &cfg).expect("matrix route");
        let b = estimate_d_iteration(&s, &w, &cfg).expect("d route");
        let gap = linalg::relative_spectral_distance(&a.c_hat, &b.c_hat);
        all &= a.converged && b.converged && gap <= 1e-6;
        worst = worst.max(gap);
    }
    outcome(all, format!("10 fixtures, max relative gap {worst:.2e}"))
}

/// Root of `1 = (1/n) sum u(x_i^2 / c) x_i^2 / c` by bisection.
fn scalar_oracle(xs: &[f64]) -> f64 {
    let u = |t: f64| (1.0 + ALPHA) / (ALPHA + t);
    let f = |c: f64| c - xs.iter().map(|x| u(x * x / c) * x * x).sum::<f64>() / xs.len() as f64;
    let (mut lo, mut hi) = (1e-300_f64, 1.0_f64);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    while f(lo) > 0.0 {
        lo *= 0.5;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn scalar_oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut all = true;
    for k in 0..20 {
        let samples = rng.random_range(5..=60);
        let m = model(ModelSpec {
            dim: 1,
            samples,
            inner_dim: None,
            scatter: ScatterSpec::Diagonal {
                values: vec![rng.random_range(0.1..10.0)],
            },
            tau: TauDistribution::Gamma {
                shape: rng.random_range(0.3..3.0),
                scale: 1.0,
            },
        });
        let w = weight(m.aspect_ratio());
        let s = sample(&m, 500 + k);
        let xs: Vec<f64> = s.x.row(0).iter().copied().collect();
        let oracle = scalar_oracle(&xs);
        let cfg = EstimatorConfig::default();
        let a = estimate_matrix_iteration(&s, &w, &cfg).expect("matrix route");
        let b = estimate_d_iteration(&s, &w, &cfg).expect("d route");
        let ea = (a.c_hat[(0, 0)] - oracle).abs() / oracle;
        let eb = (b.c_hat[(0, 0)] - oracle).abs() / oracle;
        all &= ea <= 1e-9 && eb <= 1e-9;
        worst = worst.max(ea).max(eb);
    }
    outcome(all, format!("20 instances, max relative error {worst:.2e}"))
}

fn gamma_closed_case() -> Outcome {
    let c = 0.2;
    let w = weight(c);
    let taus = vec![1.0; 500];
    let gamma = rmt::solve_gamma(&taus, c, &w, 1e-14).expect("gamma").gamma;
    let err = (gamma - 1.25).abs();
    outcome(
        err <= 1e-10,
        format!("gamma = {gamma:.15}, error {err:.2e}"),
    )
}

fn equivalent_convergence() -> Outcome {
    let mut cfg = ExperimentConfig::three_cluster(50, 250);
    cfg.seeds = (1..=10).collect();
    let sizes = [(50, 250), (100, 500), (200, 1000), (400, 2000)];
    let table = run_convergence_experiment(&cfg, &sizes, 10).expect("experiment");
    let medians: Vec<f64> = table.summary.iter().map(|s| s.median).collect();
    let all_converged = table.rows.iter().all(|r| r.converged);
    let decreasing = medians.windows(2).all(|p| p[1] < p[0]);
    let halved = medians[3] < 0.5 * medians[0];
    outcome(
        all_converged && decreasing && halved,
        format!("medians {medians:.4?}, all converged {all_converged}"),
    )
}

struct FullScale {
    support: Vec<(f64, f64)>,
    ks_estimator: f64,
    ks_equivalent: f64,
    mass: f64,
    lambda_estimator: f64,
    lambda_sample: f64,
    elapsed: Duration,
}

fn full_scale() -> FullScale {
    let t = Instant::now();
    let m = model(ModelSpec::three_cluster(500, 2500));
    let w = weight(m.aspect_ratio());
    let s = sample(&m, 1);
    let r = estimate_matrix_iteration(&s, &w, &EstimatorConfig::default()).expect("estimator");
    assert!(r.converged, "full-scale estimator did not converge");
    let gamma = rmt::solve_gamma(&s.taus, w.c(), &w, 1e-13)
        .expect("gamma")
        .gamma;
    let equivalent = rmt::build_equivalent(&s, gamma, &w).expect("equivalent");
    let inputs = SpectralInputs::new(&s.taus, gamma, m.scatter_eigenvalues(), &w).expect("inputs");
    let opts = DensityOptions {
        lo: 0.0,
        hi: 2.5,
        step: 0.005,
        eta: 1e-4,
        ..Default::default()
    };
    let mut density = rmt::density_on_grid(&inputs, &opts).expect("density");
    let support = rmt::detect_support(&inputs, &mut density, &opts).expect("support");
    let eig_c = linalg::sym_eigenvalues(&r.c_hat);
    let eig_s = linalg::sym_eigenvalues(&equivalent);
    FullScale {
        support,
        ks_estimator: ks_distance(&eig_c, &density).expect("ks"),
        ks_equivalent: ks_distance(&eig_s, &density).expect("ks"),
        mass: density.mass,
        lambda_estimator: eig_c[eig_c.len() - 1],
        lambda_sample: linalg::sym_spectral_norm(&s.sample_covariance()),
        elapsed: t.elapsed(),
    }
}

fn figure_reproduction(f: &FullScale) -> Outcome {
    let pass = f.support.len() == 3 && f.ks_estimator < 0.05 && f.ks_equivalent < 0.05;
    let intervals: Vec<String> = f
        .support
        .iter()
        .map(|(a, b)| format!("[{a:.3}, {b:.3}]"))
        .collect();
    outcome(
        pass,
        format!(
            "support {} ({} intervals), KS estimator {:.4}, KS equivalent {:.4}, {:.1?}",
            intervals.join(" "),
            f.support.len(),
            f.ks_estimator,
            f.ks_equivalent,
            f.elapsed
        ),
    )
}

fn density_mass(f: &FullScale) -> Outcome {
    outcome(
        (0.97..=1.03).contains(&f.mass),
        format!("mass {:.5}", f.mass),
    )
}

fn stieltjes_sanity() -> Outcome {
    let m = model(ModelSpec::three_cluster(500, 2500));
    let w = weight(m.aspect_ratio());
    let s = sample(&m, 3);
    let gamma = rmt::solve_gamma(&s.taus, w.c(), &w, 1e-13)
        .expect("gamma")
        .gamma;
    let inputs = SpectralInputs::new(&s.taus, gamma, m.scatter_eigenvalues(), &w).expect("inputs");
    let far = rmt::solve_stieltjes(Complex64::new(0.0, 1e4), &inputs, 1e-14, None).expect("far");
    let far_err = (Complex64::new(0.0, 1e4) * far.m + 1.0).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut min_im = f64::INFINITY;
    for _ in 0..50 {
        let z = Complex64::new(
            rng.random_range(-1.0..3.0),
            10f64.powf(rng.random_range(-4.0..1.0)),
        );
        let sol = rmt::solve_stieltjes(z, &inputs, 1e-13, None).expect("stieltjes");
        min_im = min_im.min(sol.m.im);
    }

    let id = model(ModelSpec {
        dim: 100,
        samples: 500,
        inner_dim: None,
        scatter: ScatterSpec::Identity,
        tau: TauDistribution::Gamma {
            shape: 0.5,
            scale: 2.0,
        },
    });
    let wi = weight(id.aspect_ratio());
    let si = sample(&id, 4);
    let gi = rmt::solve_gamma(&si.taus, wi.c(), &wi, 1e-13)
        .expect("gamma")
        .gamma;
    let inputs_i =
        SpectralInputs::new(&si.taus, gi, id.scatter_eigenvalues(), &wi).expect("inputs");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = Complex64::new(
            rng.random_range(-0.5..2.0),
            10f64.powf(rng.random_range(-3.0..0.0)),
        );
        let a = rmt::solve_stieltjes(z, &inputs_i, 1e-14, None)
            .expect("coupled")
            .m;
        let b = rmt::identity_case_m(z, &si.taus, gi, wi.c(), &wi, 1e-14).expect("identity");
        worst = worst.max((a - b).norm());
    }
    outcome(
        far_err < 1e-3 && min_im > 0.0 && worst <= 1e-8,
        format!("|z m + 1| = {far_err:.2e}, min Im m over 50 points {min_im:.2e}, identity-case gap {worst:.2e}"),
    )
}

fn quadratic_form_deviation(dim: usize, samples: usize, seed: u64) -> f64 {
    let m = model(ModelSpec {
        dim,
        samples,
        inner_dim: None,
        scatter: ScatterSpec::Identity,
        tau: TauDistribution::Constant { value: 1.0 },
    });
    let s = sample(&m, seed);
    let f = linalg::weighted_gram(&s.z, &vec![1.0; samples]);
    let q = linalg::quadratic_forms(&f, &s.z, dim as f64).expect("F is SPD");
    q.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
}

fn quadratic_form_concentration() -> Outcome {
    let small = quadratic_form_deviation(100, 500, 9);
    let large = quadratic_form_deviation(200, 1000, 9);
    outcome(
        large < small && large < 0.15,
        format!("max deviation {small:.4} at (100, 500), {large:.4} at (200, 1000)"),
    )
}

fn robustness_contrast(f: &FullScale) -> Outcome {
    outcome(
        f.lambda_estimator < f.lambda_sample,
        format!(
            "lambda_max robust {:.4}, sample covariance {:.4}",
            f.lambda_estimator, f.lambda_sample
        ),
    )
}

fn equivariance() -> Outcome {
    let dim = 50;
    let spec = ModelSpec {
        dim,
        samples: 250,
        inner_dim: None,
        scatter: ScatterSpec::Blocks {
            blocks: vec![
                Block {
                    size: 25,
                    value: 1.0,
                },
                Block {
                    size: 25,
                    value: 4.0,
                },
            ],
        },
        tau: TauDistribution::Gamma {
            shape: 0.5,
            scale: 2.0,
        },
    };
    let m = model(spec);
    let w = weight(m.aspect_ratio());
    let s = sample(&m, 11);
    let cfg = EstimatorConfig {
        tol: 1e-13,
        ..Default::default()
    };
    let base = estimate_matrix_iteration(&s, &w, &cfg).expect("base").c_hat;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = DMatrix::from_fn(dim, dim, |i, j| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g / (dim as f64).sqrt() + if i == j { 1.0 } else { 0.0 }
        });
        let moved = estimate_matrix_iteration(&s.transformed(&a), &w, &cfg)
            .expect("moved")
            .c_hat;
        let expected = &a * &base * a.transpose();
        worst = worst.max(linalg::relative_spectral_distance(&moved, &expected));
    }
    outcome(
        worst <= 1e-8,
        format!("5 transforms, max relative gap {worst:.2e}"),
    )
}

fn report(index: usize, name: &str, o: &Outcome, failures: &mut usize) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    if !o.pass {
        *failures += 1;
    }
    println!("criterion {index:>2} [{status}] {name}: {}", o.detail);
}

fn main() {
    let mut failures = 0;
    report(
        1,
        "fixed-point convergence",
        &fixed_point_convergence(),
        &mut failures,
    );
    report(2, "route agreement", &route_agreement(), &mut failures);
    report(
        3,
        "scalar oracle",
        &scalar_oracle_agreement(),
        &mut failures,
    );
    report(4, "gamma closed case", &gamma_closed_case(), &mut failures);
    report(
        5,
        "estimator approaches its equivalent",
        &equivalent_convergence(),
        &mut failures,
    );
    let full = full_scale();
    report(
        6,
        "three-cluster spectrum",
        &figure_reproduction(&full),
        &mut failures,
    );
    report(7, "density mass", &density_mass(&full), &mut failures);
    report(8, "Stieltjes sanity", &stieltjes_sanity(), &mut failures);
    report(
        9,
        "quadratic-form concentration",
        &quadratic_form_concentration(),
        &mut failures,
    );
    report(
        10,
        "robustness contrast",
        &robustness_contrast(&full),
        &mut failures,
    );
    report(11, "affine equivariance", &equivariance(), &mut failures);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
