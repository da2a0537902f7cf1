//! Proximal operators of the perspective envelope `g` and its conjugate.
//!
//! Run with `cargo run --example prox_operators`.

use sparsecert::prox::{prox_g, prox_gstar, prox_gstar_node};
use sparsecert::Restriction;

fn main() -> sparsecert::Result<()> {
    let mu = [3.0, -1.5, 0.2, 2.5, -0.1];
    let (k, m, rho) = (2, 1.0, 0.5);

    let nu = prox_gstar(&mu, rho, k, m)?;
    println!("prox of rho*g* at {mu:?}:\n  {nu:?}");

    // prox of g/rho, then the Moreau decomposition mu = prox_{g/rho}(mu) + prox_{rho g*}(rho mu)/rho.
    let beta = prox_g(&mu, rho, k, m)?;
    let scaled: Vec<f64> = mu.iter().map(|v| rho * v).collect();
    let dual = prox_gstar(&scaled, rho, k, m)?;
    let residual = mu
        .iter()
        .zip(&beta)
        .zip(&dual)
        .map(|((mu, b), d)| (mu - b - d / rho).abs())
        .fold(0.0, f64::max);
    println!("prox of g/rho:\n  {beta:?}");
    println!("Moreau residual: {residual:.2e}");

    // Node version: coordinate 1 forced in, coordinate 0 forced out, one more slot free.
    let node = Restriction::new(mu.len(), k, &[1], &[0])?;
    let nu_node = prox_gstar_node(&mu, rho, &node, m)?;
    println!("node prox (fixed in = [1], fixed out = [0]):\n  {nu_node:?}");
    Ok(())
}
