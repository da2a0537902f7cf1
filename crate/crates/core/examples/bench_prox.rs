//! Timing the exact prox of `g*` across problem sizes.
//!
//! Run with `cargo run --release --example bench_prox`.

use sparsecert::cli::bench_prox;

fn main() -> sparsecert::Result<()> {
    let sizes = [1_000, 10_000, 100_000, 1_000_000];
    let rows = bench_prox(&sizes, 10, 2.0, 1.0, 11, 0)?;
    let mut prev: Option<f64> = None;
    for row in rows {
        let p = row["p"].as_u64().unwrap();
        let median = row["median_seconds"].as_f64().unwrap();
        let growth = prev.map(|t| format!("x{:.1}", median / t)).unwrap_or_default();
        println!("p = {p:>8}  median {:>9.3} ms  {growth}", median * 1e3);
        prev = Some(median);
    }
    Ok(())
}
