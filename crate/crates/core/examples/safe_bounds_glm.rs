//! Safe lower bounds for every supported loss, evaluated at arbitrary points.
//! Any `beta` yields a valid bound; the bound tightens as `beta` approaches the
//! relaxed optimum.
//!
//! Run with `cargo run --example safe_bounds_glm`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecert::oracle::oracle_mip;
use sparsecert::perspective::safe_lower_bound;
use sparsecert::{DenseMatrix, LossKind, ProblemInstance};

fn main() -> sparsecert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (12, 5);
    let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = DenseMatrix::from_row_major(n, p, data)?;

    let labels = |loss: LossKind, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| match loss {
                LossKind::SquaredError => rng.random_range(-2.0..2.0),
                LossKind::Logistic | LossKind::SquaredHinge => if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                LossKind::Poisson => rng.random_range(0..4) as f64,
                _ => rng.random_range(0.2..3.0),
            })
            .collect()
    };

    for loss in [LossKind::SquaredError, LossKind::Logistic, LossKind::SquaredHinge, LossKind::Poisson, LossKind::Gamma] {
        let y = labels(loss, &mut rng);
        let inst = ProblemInstance::new(x.clone(), y, loss, 2, 1.0, 0.5)?;
        let (_, mip) = oracle_mip(&inst);
        let zero = safe_lower_bound(&inst, &vec![0.0; p], None)?;
        let random: Vec<f64> = (0..p).map(|_| rng.random_range(-0.3..0.3)).collect();
        let at_random = safe_lower_bound(&inst, &random, None)?;
        println!("{:<14} bound at 0 {zero:>10.5}  at random {at_random:>10.5}  exact optimum {mip:>10.5}", loss.name());
    }
    Ok(())
}
