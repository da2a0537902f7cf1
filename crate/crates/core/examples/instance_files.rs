//! Writing a synthetic instance to the text instance format, reading it back
//! and overriding its header hyperparameters.
//!
//! Run with `cargo run --example instance_files`.

use sparsecert::data::{format_instance, generate_synthetic, parse_instance, SyntheticParams, Task};

fn main() -> sparsecert::Result<()> {
    let params = SyntheticParams { n: 4, p: 3, k_true: 1, sigma: 0.5, snr: 5.0, task: Task::Regression, seed: 1 };
    let inst = generate_synthetic(&params)?;
    let text = format_instance(&inst);
    println!("{text}");

    let file = parse_instance(&text)?;
    println!("header k = {:?}, M = {:?}, lambda2 = {:?}", file.k, file.m, file.lambda2);
    let inst = file.into_instance(Some(2), None, Some(0.25))?;
    println!("after overrides: k = {}, M = {}, lambda2 = {}", inst.k, inst.m, inst.lambda2);
    Ok(())
}
