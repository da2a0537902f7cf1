//! Function-value restart against plain FISTA on a logistic problem.
//!
//! Run with `cargo run --release --example restart_vs_plain`.

use sparsecert::data::{generate_synthetic, SyntheticParams, Task};
use sparsecert::fista::{solve_relaxation, FistaOptions};

fn main() -> sparsecert::Result<()> {
    let params = SyntheticParams { n: 300, p: 300, k_true: 10, sigma: 0.5, snr: 5.0, task: Task::Classification, seed: 3 };
    let inst = generate_synthetic(&params)?;

    for restart in [true, false] {
        let opts = FistaOptions { restart, record_trace: true, ..FistaOptions::default() };
        let report = solve_relaxation(&inst, None, None, &opts)?;
        println!("restart = {restart}: {} iterations, {} restarts, gap {:.2e}", report.iterations, report.restarts, report.gap);
        for rec in report.trace.iter().step_by(50) {
            println!("  iter {:>5}  primal {:.8}  dual {:.8}  gap {:.2e}", rec.iteration, rec.primal, rec.dual, rec.gap);
        }
    }
    Ok(())
}
