use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecert::bnb::{certify, CertifyOptions, Status};
use sparsecert::data::{format_instance, generate_synthetic, parse_instance, SyntheticParams, Task};
use sparsecert::fista::{solve_relaxation, FistaOptions};
use sparsecert::oracle::{oracle_mip, oracle_relaxation};
use sparsecert::{DenseMatrix, LossKind, ProblemInstance};

fn random_instance(rng: &mut ChaCha8Rng, loss: LossKind, max_p: usize) -> ProblemInstance {
    let n = rng.random_range(4..=15);
    let p = rng.random_range(2..=max_p);
    let data = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = DenseMatrix::from_row_major(n, p, data).unwrap();
    let y = match loss {
        LossKind::SquaredError => (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        _ => (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
    };
    let k = rng.random_range(1..=p.min(3));
    ProblemInstance::new(x, y, loss, k, rng.random_range(0.5..3.0), rng.random_range(0.1..1.5)).unwrap()
}

const LOSSES: [LossKind; 3] = [LossKind::SquaredError, LossKind::Logistic, LossKind::SquaredHinge];

#[test]
fn composite_optimum_matches_lifted_relaxation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..100 {
        let inst = random_instance(&mut rng, LOSSES[i % 3], 10);
        let opts = FistaOptions { gap_tolerance: 1e-9, ..FistaOptions::default() };
        let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
        let want = oracle_relaxation(&inst);
        assert!((rep.primal_value - want).abs() <= 1e-5, "instance {i}: {} vs {want}", rep.primal_value);
    }
}

#[test]
fn certificates_match_enumeration_for_every_solver_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..30 {
        let inst = random_instance(&mut rng, LOSSES[i % 3], 8);
        let cert = certify(&inst, &CertifyOptions::default()).unwrap();
        let (_, obj) = oracle_mip(&inst);
        assert_eq!(cert.status, Status::Optimal);
        assert!((cert.incumbent_objective - obj).abs() <= 1e-6 * obj.abs().max(1.0), "instance {i}: {} vs {obj}", cert.incumbent_objective);
        assert!(cert.global_lower_bound <= obj + 1e-8);
        assert!(cert.root_lower_bound <= cert.global_lower_bound + 1e-12);
        assert!(cert.support.len() <= inst.k);
    }
}

#[test]
fn certify_survives_an_instance_file_round_trip() {
    let params = SyntheticParams { n: 40, p: 10, k_true: 2, sigma: 0.4, snr: 5.0, task: Task::Classification, seed: 4 };
    let inst = generate_synthetic(&params).unwrap();
    let reread = parse_instance(&format_instance(&inst)).unwrap().into_instance(None, None, None).unwrap();
    assert_eq!(reread.x, inst.x);
    assert_eq!(reread.y, inst.y);
    let a = certify(&inst, &CertifyOptions::default()).unwrap();
    let b = certify(&reread, &CertifyOptions::default()).unwrap();
    assert_eq!(a.incumbent_beta, b.incumbent_beta);
    assert_eq!(a.nodes_explored, b.nodes_explored);
}
