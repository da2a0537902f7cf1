//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything (about fifteen minutes on a
//! single core, dominated by the n = p = 2000 certification). Pass criterion
//! numbers as arguments to run a subset, e.g. `cargo test --test acceptance -- 1 4`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sparsecert::bnb::{certify, CertifyOptions, Status};
use sparsecert::cli::bench_prox;
use sparsecert::data::{generate_synthetic, SyntheticParams, Task};
use sparsecert::fista::{solve_relaxation, FistaOptions, Termination};
use sparsecert::model::lipschitz_constant;
use sparsecert::oracle::{oracle_g_value, oracle_mip, oracle_prox_gstar, oracle_relaxation};
use sparsecert::perspective::{g_value, safe_lower_bound, EnvelopeParams};
use sparsecert::prox::{prox_g, prox_gstar};
use sparsecert::{DenseMatrix, LossKind, ProblemInstance};

struct Outcome {
    pass: bool,
    detail: String,
    /// Deterministic part of the run, compared bit for bit by criterion 10.
    report: Value,
}

fn outcome(pass: bool, detail: String, report: Value) -> Outcome {
    Outcome { pass, detail, report }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_prox_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, f64, usize, f64) {
    let p = rng.random_range(1..=20);
    let k = rng.random_range(1..=p);
    let m = [0.5, 2.0, 10.0][rng.random_range(0..3)];
    let rho = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let scale = [0.5, 3.0, 30.0][rng.random_range(0..3)];
    let mu = (0..p).map(|_| rng.random_range(-scale..scale)).collect();
    (mu, rho, k, m)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut outputs = Vec::new();
    for _ in 0..1000 {
        let (mu, rho, k, m) = random_prox_case(&mut rng);
        let got = prox_gstar(&mu, rho, k, m).expect("valid prox input");
        worst = worst.max(max_abs_diff(&got, &oracle_prox_gstar(&mu, rho, k, m)));
        outputs.push(bits(&got));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-7 && secs < 60.0,
        format!("1000 cases, max |prox - oracle| = {worst:.2e} (tol 1e-7), {secs:.2} s (limit 60 s)"),
        json!(outputs),
    )
}

fn criterion_2() -> Outcome {
    let sizes = [1_000, 2_000, 4_000, 8_000, 16_000, 32_000, 64_000, 128_000, 256_000, 512_000, 1_024_000];
    let rows = bench_prox(&sizes, 10, 2.0, 1.0, 11, 0).expect("bench runs");
    let medians: Vec<f64> = rows.iter().map(|r| r["median_seconds"].as_f64().unwrap()).collect();
    let worst_growth = medians.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mu: Vec<f64> = (0..100_000).map(|_| rng.random_range(-6.0..6.0)).collect();
    let start = Instant::now();
    let out = prox_gstar(&mu, 1.0, 10, 2.0).expect("valid prox input");
    let single = start.elapsed().as_secs_f64();

    let table: Vec<String> = sizes.iter().zip(&medians).map(|(p, t)| format!("{p}:{:.2}ms", t * 1e3)).collect();
    outcome(
        worst_growth < 3.0 && single < 0.1,
        format!(
            "largest growth per doubling {worst_growth:.2} (limit 3), single call at p=1e5 {:.2} ms (limit 100 ms); medians {}",
            single * 1e3,
            table.join(" ")
        ),
        json!({ "p": sizes, "single_output_checksum": out.iter().sum::<f64>().to_bits() }),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut values = Vec::new();
    for _ in 0..500 {
        let p = rng.random_range(1..=15);
        let k = rng.random_range(1..=p);
        let m = [0.5, 2.0, 10.0][rng.random_range(0..3)];
        // Feasible: |beta_j| <= M z_j with z in the capped simplex.
        let mut z: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = z.iter().sum();
        if total > k as f64 {
            z.iter_mut().for_each(|v| *v *= k as f64 / total);
        }
        let beta: Vec<f64> = z
            .iter()
            .map(|zj| {
                let b = m * zj * rng.random_range(0.0..1.0);
                if rng.random_bool(0.5) { -b } else { b }
            })
            .collect();
        let got = g_value(&beta, &EnvelopeParams::new(k, m));
        let want = oracle_g_value(&beta, k, m);
        worst = worst.max((got - want).abs());
        values.push(got.to_bits());
    }
    let mut class_mismatch = 0;
    for _ in 0..100 {
        let p = rng.random_range(1..=15);
        let k = rng.random_range(1..=p);
        let m = [0.5, 2.0, 10.0][rng.random_range(0..3)];
        let mut beta: Vec<f64> = (0..p).map(|_| rng.random_range(-m..m)).collect();
        if rng.random_bool(0.5) {
            // A single coordinate outside the box.
            let j = rng.random_range(0..p);
            beta[j] = m * rng.random_range(1.05..3.0);
        } else {
            // Inside the box but over the l1 budget k*M.
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            let target = (k as f64 * m * rng.random_range(1.05..2.0)).min(0.999 * m * p as f64);
            if target <= k as f64 * m || l1 == 0.0 {
                beta = vec![m * 1.5; p];
            } else {
                let s = target / l1;
                beta.iter_mut().for_each(|b| *b = (*b * s).clamp(-m, m));
                let now: f64 = beta.iter().map(|b| b.abs()).sum();
                if now <= k as f64 * m * 1.001 {
                    beta[0] = m * 2.0;
                }
            }
        }
        let got = g_value(&beta, &EnvelopeParams::new(k, m));
        let want = oracle_g_value(&beta, k, m);
        if got.is_infinite() != want.is_infinite() || got.is_finite() {
            class_mismatch += 1;
        }
        values.push(got.to_bits());
    }
    outcome(
        worst <= 1e-7 && class_mismatch == 0,
        format!("500 feasible, max |g - oracle| = {worst:.2e} (tol 1e-7); 100 infeasible, {class_mismatch} classification mismatches"),
        json!(values),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    let mut outputs = Vec::new();
    for _ in 0..1000 {
        let (mu, rho, k, m) = random_prox_case(&mut rng);
        let primal = prox_g(&mu, rho, k, m).expect("valid prox input");
        let scaled: Vec<f64> = mu.iter().map(|v| rho * v).collect();
        let dual = prox_gstar(&scaled, rho, k, m).expect("valid prox input");
        for j in 0..mu.len() {
            worst = worst.max((mu[j] - primal[j] - dual[j] / rho).abs());
        }
        outputs.push(bits(&primal));
    }
    outcome(worst <= 1e-12, format!("1000 cases, max Moreau residual {worst:.2e} (tol 1e-12)"), json!(outputs))
}

fn random_glm(rng: &mut ChaCha8Rng, loss: LossKind) -> ProblemInstance {
    let n = rng.random_range(4..=20);
    let p = rng.random_range(2..=12);
    let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = DenseMatrix::from_row_major(n, p, data).unwrap();
    let y: Vec<f64> = match loss {
        LossKind::SquaredError => (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        _ => (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
    };
    let k = rng.random_range(1..=p.min(3));
    let m = [0.5, 2.0, 10.0][rng.random_range(0..3)];
    let lambda2 = [0.1, 0.5, 1.0][rng.random_range(0..3)];
    ProblemInstance::new(x, y, loss, k, m, lambda2).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let losses = [LossKind::SquaredError, LossKind::Logistic, LossKind::SquaredHinge];
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_tight: f64 = 0.0;
    let mut not_converged = 0;
    let mut reports = Vec::new();
    for i in 0..500 {
        let inst = random_glm(&mut rng, losses[i % 3]);
        let (_, mip) = oracle_mip(&inst);
        let opts = FistaOptions { gap_tolerance: 1e-10, record_trace: true, ..FistaOptions::default() };
        let rep = solve_relaxation(&inst, None, None, &opts).expect("solver-grade loss");
        for rec in &rep.trace {
            worst_excess = worst_excess.max(rec.dual - mip);
            if rec.dual > mip + 1e-8 {
                violations += 1;
            }
        }
        let final_bound = safe_lower_bound(&inst, &rep.beta, None).unwrap();
        worst_excess = worst_excess.max(final_bound - mip);
        if final_bound > mip + 1e-8 {
            violations += 1;
        }
        if rep.termination != Termination::Converged {
            not_converged += 1;
        } else {
            worst_tight = worst_tight.max((rep.dual_bound - oracle_relaxation(&inst)).abs());
        }
        reports.push(json!([rep.iterations, rep.dual_bound.to_bits(), bits(&rep.beta)]));
    }
    outcome(
        violations == 0 && worst_tight <= 1e-6 && not_converged == 0,
        format!(
            "500 instances: {violations} bounds above the optimum + 1e-8 (largest bound - optimum {worst_excess:.2e}); \
             |bound - relaxation oracle| <= {worst_tight:.2e} at convergence (tol 1e-6); {not_converged} runs short of gap 1e-10"
        ),
        json!(reports),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let params = SyntheticParams { n: 500, p: 500, k_true: 10, sigma: 0.5, snr: 5.0, task: Task::Classification, seed: 6 };
    let inst = generate_synthetic(&params).unwrap();
    let run = |restart: bool| {
        let opts = FistaOptions { restart, record_trace: true, ..FistaOptions::default() };
        solve_relaxation(&inst, None, None, &opts).unwrap()
    };
    let with = run(true);
    let without = run(false);
    let both_converged = with.termination == Termination::Converged && without.termination == Termination::Converged;
    let ratio = with.iterations as f64 / without.iterations as f64;

    let mut worst_contraction: f64 = 0.0;
    let trace = &with.trace;
    let mut t = 0;
    while t + 50 < trace.len() {
        if trace[t].gap < 1e-1 * trace[t].primal.abs().max(1.0) {
            worst_contraction = worst_contraction.max(trace[t + 50].gap / trace[t].gap);
        }
        t += 50;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        both_converged && ratio <= 1.0 / 3.0 && worst_contraction <= 0.9 && secs < 120.0,
        format!(
            "restart {} vs plain {} iterations (ratio {ratio:.3}, limit 0.333); worst gap(t+50)/gap(t) = {worst_contraction:.3} (limit 0.9); {secs:.1} s",
            with.iterations, without.iterations
        ),
        json!([with.iterations, without.iterations, with.primal_value.to_bits(), without.primal_value.to_bits()]),
    )
}

fn criterion_7() -> Outcome {
    let mut times = Vec::new();
    let mut reports = Vec::new();
    let mut converged = true;
    for n in [1000usize, 2000, 4000] {
        let params = SyntheticParams { n, p: n, k_true: 10, sigma: 0.5, snr: 5.0, task: Task::Regression, seed: 7 };
        let inst = generate_synthetic(&params).unwrap();
        let start = Instant::now();
        let lipschitz = lipschitz_constant(&inst).unwrap();
        let opts = FistaOptions { lipschitz: Some(lipschitz), ..FistaOptions::default() };
        let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
        times.push(start.elapsed().as_secs_f64());
        converged &= rep.termination == Termination::Converged;
        reports.push(json!([rep.iterations, rep.primal_value.to_bits(), rep.dual_bound.to_bits()]));
    }
    let xs: Vec<f64> = [1000f64, 2000.0, 4000.0].iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    outcome(
        converged && slope < 2.0 && times[2] < 600.0,
        format!(
            "times {:.3} / {:.3} / {:.3} s at n=p=1000/2000/4000, log-log slope {slope:.2} (limit 2), largest {:.1} s (limit 600 s)",
            times[0], times[1], times[2], times[2]
        ),
        json!(reports),
    )
}

fn criterion_8() -> Outcome {
    let opts = CertifyOptions::default();
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for seed in 0..20 {
        let params = SyntheticParams { n: 20, p: 8, k_true: 2, sigma: 0.5, snr: 5.0, task: Task::Regression, seed };
        let inst = generate_synthetic(&params).unwrap().with_hyperparameters(2, 2.0, 1.0).unwrap();
        let cert = certify(&inst, &opts).unwrap();
        let (beta, obj) = oracle_mip(&inst);
        let support: Vec<usize> = (0..inst.p()).filter(|&j| beta[j] != 0.0).collect();
        let close = (cert.incumbent_objective - obj).abs() <= 1e-6 * obj.abs().max(1.0);
        if cert.status != Status::Optimal || !close || cert.support != support {
            failures.push(format!("seed {seed}: {:?} {} vs {obj}, {:?} vs {support:?}", cert.status, cert.incumbent_objective, cert.support));
        }
        reports.push(json!([cert.incumbent_objective.to_bits(), cert.nodes_explored, cert.support]));
    }

    let x = DenseMatrix::from_row_major(1, 1, vec![1.0]).unwrap();
    let inst = ProblemInstance::new(x, vec![1.0], LossKind::SquaredError, 1, 2.0, 1.0).unwrap();
    let cert = certify(&inst, &opts).unwrap();
    let one_d = cert.status == Status::Optimal && cert.nodes_explored == 1 && cert.incumbent_objective == 0.5;
    reports.push(json!([cert.incumbent_objective.to_bits(), cert.nodes_explored]));
    outcome(
        failures.is_empty() && one_d,
        format!(
            "{}/20 instances match the enumeration oracle{}; 1-D instance: {:?}, {} node(s), objective {}",
            20 - failures.len(),
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) },
            cert.status,
            cert.nodes_explored,
            cert.incumbent_objective
        ),
        json!(reports),
    )
}

fn criterion_9_instance() -> ProblemInstance {
    let params = SyntheticParams { n: 2000, p: 2000, k_true: 10, sigma: 0.5, snr: 5.0, task: Task::Regression, seed: 0 };
    generate_synthetic(&params).unwrap()
}

fn certificate_report(cert: &sparsecert::bnb::Certificate) -> Value {
    let mut v = serde_json::to_value(cert).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

fn criterion_9() -> Outcome {
    let inst = criterion_9_instance();
    let opts = CertifyOptions { gap_tolerance: 1e-4, time_limit: Some(Duration::from_secs(1800)), ..CertifyOptions::default() };
    let cert = certify(&inst, &opts).unwrap();
    outcome(
        cert.status == Status::Optimal && cert.gap_relative <= 1e-4,
        format!(
            "{:?}, gap {:.2e} (tol 1e-4), {} nodes, {:.0} s (limit 1800 s), support {:?}",
            cert.status, cert.gap_relative, cert.nodes_explored, cert.wall_time_seconds, cert.support
        ),
        certificate_report(&cert),
    )
}

/// The criterion 9 search truncated after a fixed number of nodes; reruns of
/// the full search take as long as the original.
fn criterion_9_prefix() -> Value {
    let inst = criterion_9_instance();
    let opts = CertifyOptions { gap_tolerance: 1e-4, node_limit: Some(2000), time_limit: None, ..CertifyOptions::default() };
    certificate_report(&certify(&inst, &opts).unwrap())
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |c: usize| selected.is_empty() || selected.contains(&c);
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];

    let mut first_reports = Vec::new();
    let mut passed = 0;
    let mut ran = 0;
    for (id, f) in criteria {
        if !wanted(id) {
            continue;
        }
        let o = f();
        println!("criterion {id}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        ran += 1;
        passed += o.pass as usize;
        first_reports.push((id, o.report));
    }

    if wanted(10) {
        let mut differing = Vec::new();
        let mut compared = Vec::new();
        for (id, report) in &first_reports {
            let again = if *id == 9 { None } else { Some(criteria[id - 1].1().report) };
            if let Some(again) = again {
                compared.push(id.to_string());
                if &again != report {
                    differing.push(*id);
                }
            }
        }
        if wanted(9) {
            compared.push("9 (first 2000 nodes)".into());
            if criterion_9_prefix() != criterion_9_prefix() {
                differing.push(9);
            }
        }
        let pass = differing.is_empty() && !compared.is_empty();
        println!(
            "criterion 10: {} reruns of criteria {} {}",
            if pass { "PASS" } else { "FAIL" },
            compared.join(", "),
            if differing.is_empty() { "are bitwise identical".to_string() } else { format!("differ for {differing:?}") }
        );
        ran += 1;
        passed += pass as usize;
    }
    println!("{passed}/{ran} criteria passed");
}
