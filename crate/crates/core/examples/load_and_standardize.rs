//! Reading delimited and sparse `label idx:value` datasets, standardizing the
//! columns and fitting a sparse logistic model on the result.
//!
//! Run with `cargo run --release --example load_and_standardize`.

use sparsecert::bnb::{certify, CertifyOptions};
use sparsecert::data::{parse_dataset, standardize, DatasetFormat};
use sparsecert::{LossKind, ProblemInstance};

const CSV: &str = "\
# x1, x2, x3 (constant), x4, label
0.5, 1.0, 3.0, -0.2, 1
1.5, -0.3, 3.0, 0.1, -1
-0.7, 0.8, 3.0, 0.4, 1
2.1, -1.2, 3.0, -0.6, -1
0.1, 0.4, 3.0, 0.9, 1
1.8, 0.2, 3.0, 0.3, -1
";

const SPARSE: &str = "\
+1 1:0.5 2:1.0 4:-0.2
-1 1:1.5 2:-0.3 4:0.1
+1 1:-0.7 2:0.8 4:0.4
";

fn main() -> sparsecert::Result<()> {
    let (x, y) = parse_dataset(CSV, DatasetFormat::Delimited { delimiter: Some(',') })?;
    println!("csv: n = {}, p = {}", x.rows(), x.cols());

    let (xs, stats) = standardize(&x)?;
    println!("kept columns {:?}, dropped constant columns {:?}", stats.kept, stats.dropped);

    let inst = ProblemInstance::new(xs, y, LossKind::Logistic, 1, 2.0, 0.5)?;
    let cert = certify(&inst, &CertifyOptions::default())?;
    let (beta, intercept) = stats.to_original(&cert.incumbent_beta);
    println!("{:?}: objective {:.6}, support {:?}", cert.status, cert.incumbent_objective, cert.support);
    println!("coefficients on the original scale {beta:?}, intercept {intercept:.4}");

    let (xsp, ysp) = parse_dataset(SPARSE, DatasetFormat::SparseIndexValue { features: Some(5) })?;
    println!("sparse: n = {}, p = {}, labels {ysp:?}, row 0 {:?}", xsp.rows(), xsp.cols(), xsp.row(0));
    Ok(())
}
