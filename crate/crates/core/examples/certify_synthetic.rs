//! Certifying a sparse regression fit with branch-and-bound and streaming the
//! node log.
//!
//! Run with `cargo run --release --example certify_synthetic`.

use std::time::Duration;

use sparsecert::bnb::{certify_with_log, CertifyOptions, NodeLogRecord};
use sparsecert::data::{generate_synthetic, true_support, SyntheticParams, Task};

fn main() -> sparsecert::Result<()> {
    let params = SyntheticParams { n: 200, p: 300, k_true: 5, sigma: 0.3, snr: 4.0, task: Task::Regression, seed: 11 };
    let inst = generate_synthetic(&params)?;
    let opts = CertifyOptions { gap_tolerance: 1e-4, time_limit: Some(Duration::from_secs(120)), ..CertifyOptions::default() };

    let mut shown = 0;
    let mut log = |rec: &NodeLogRecord| {
        if shown < 10 {
            println!("{}", serde_json::to_string(rec).unwrap());
            shown += 1;
        }
    };
    let cert = certify_with_log(&inst, &opts, &mut log)?;

    println!("status        {:?}", cert.status);
    println!("objective     {:.8}", cert.incumbent_objective);
    println!("lower bound   {:.8}", cert.global_lower_bound);
    println!("gap           {:.3e}", cert.gap_relative);
    println!("root bound    {:.8}", cert.root_lower_bound);
    println!("nodes         {} explored, {} pruned", cert.nodes_explored, cert.nodes_pruned);
    println!("support       {:?}", cert.support);
    println!("true support  {:?}", true_support(params.p, params.k_true));
    Ok(())
}
