//! Evaluating the convex envelope `g` and its conjugate `g*`.
//!
//! Run with `cargo run --example perspective_envelope`.

use sparsecert::perspective::{g_conjugate, g_value, EnvelopeParams};
use sparsecert::Restriction;

fn main() -> sparsecert::Result<()> {
    let params = EnvelopeParams::new(2, 1.0);

    for beta in [vec![0.5, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.5, 0.5, 0.5], vec![1.0, 1.0, 0.5], vec![1.5, 0.0, 0.0]] {
        println!("g({beta:?}) = {}", g_value(&beta, &params));
    }
    for alpha in [vec![2.0, -0.5, 0.3], vec![0.1, 0.1, 0.1]] {
        println!("g*({alpha:?}) = {}", g_conjugate(&alpha, &params));
    }

    // Fenchel-Young: g(beta) + g*(alpha) >= <alpha, beta>.
    let beta = [0.4, -0.3, 0.2];
    let alpha = [1.0, -2.0, 0.5];
    let lhs = g_value(&beta, &params) + g_conjugate(&alpha, &params);
    let rhs: f64 = beta.iter().zip(&alpha).map(|(b, a)| b * a).sum();
    println!("Fenchel-Young: {lhs:.6} >= {rhs:.6}");

    // At a node the fixed-in coordinates pay beta_j^2 and the fixed-out ones must vanish.
    let node = EnvelopeParams::with_restriction(2, 1.0, Restriction::new(3, 2, &[0], &[2])?);
    println!("node g([0.8, 0.3, 0.0]) = {}", g_value(&[0.8, 0.3, 0.0], &node));
    println!("node g([0.8, 0.3, 0.1]) = {}", g_value(&[0.8, 0.3, 0.1], &node));
    Ok(())
}
