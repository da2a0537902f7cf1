//! Solving the root perspective relaxation of a synthetic regression problem
//! and comparing it with the true support.
//!
//! Run with `cargo run --release --example root_relaxation`.

use sparsecert::data::{generate_synthetic, true_support, SyntheticParams, Task};
use sparsecert::fista::{solve_relaxation, FistaOptions};

fn main() -> sparsecert::Result<()> {
    let params = SyntheticParams { n: 400, p: 600, k_true: 8, sigma: 0.5, snr: 5.0, task: Task::Regression, seed: 7 };
    let inst = generate_synthetic(&params)?;
    let report = solve_relaxation(&inst, None, None, &FistaOptions::default())?;

    println!("termination   {:?}", report.termination);
    println!("iterations    {} ({} restarts)", report.iterations, report.restarts);
    println!("primal        {:.8}", report.primal_value);
    println!("dual bound    {:.8}", report.dual_bound);
    println!("gap           {:.3e}", report.gap);

    let mut order: Vec<usize> = (0..inst.p()).collect();
    order.sort_by(|&a, &b| report.beta[b].abs().total_cmp(&report.beta[a].abs()));
    let mut top: Vec<usize> = order[..inst.k].to_vec();
    top.sort_unstable();
    println!("top-k of relaxed beta  {top:?}");
    println!("true support           {:?}", true_support(params.p, params.k_true));
    Ok(())
}
