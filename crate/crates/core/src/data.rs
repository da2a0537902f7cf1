//! Synthetic instances, dataset readers, preprocessing and the instance file format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::model::{LossKind, ProblemInstance};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_M: f64 = 2.0;
pub const DEFAULT_LAMBDA2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            _ => Err(Error::invalid(format!("unknown task '{s}', expected regression or classification"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    /// AR(1) feature correlation, `Σ_{jl} = σ^{|j−l|}`.
    pub sigma: f64,
    pub snr: f64,
    pub task: Task,
    pub seed: u64,
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("n and p must be positive"));
        }
        if self.k_true == 0 || self.k_true > self.p {
            return Err(Error::invalid(format!("k_true = {} must lie in 1..={}", self.k_true, self.p)));
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::invalid(format!("sigma must lie in [0, 1), got {}", self.sigma)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }
}

/// 0-indexed positions of the equally spaced true support.
pub fn true_support(p: usize, k_true: usize) -> Vec<usize> {
    if p.is_multiple_of(k_true) {
        let step = p / k_true;
        (1..=p).filter(|j| j % step == 0).map(|j| j - 1).collect()
    } else {
        (1..=k_true)
            .map(|i| ((i as f64 * p as f64 / k_true as f64).round() as usize).clamp(1, p) - 1)
            .collect()
    }
}

/// Draws an instance with AR(1)-correlated Gaussian rows and an equally
/// spaced ±1 support. The instance carries `k = k_true`, `M = 2`, `λ2 = 1`.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<ProblemInstance> {
    params.validate()?;
    let SyntheticParams { n, p, k_true, sigma, snr, task, seed } = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tail = (1.0 - sigma * sigma).sqrt();
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = if j == 0 { e } else { sigma * prev + tail * e };
            data.push(v);
            prev = v;
        }
    }
    let x = DenseMatrix::from_row_major(n, p, data)?;
    let mut beta_true = vec![0.0; p];
    for j in true_support(p, k_true) {
        beta_true[j] = 1.0;
    }
    let signal = x.mul_vec(&beta_true);
    // the noise variance is ‖Xβ*‖ / SNR, read literally
    let variance = signal.iter().map(|v| v * v).sum::<f64>().sqrt() / snr;
    let noise = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::invalid(format!("noise scale: {e}")))?;
    let eps: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
    let (y, loss) = match task {
        Task::Regression => (signal.iter().zip(&eps).map(|(s, e)| s + e).collect(), LossKind::SquaredError),
        Task::Classification => {
            let y = signal
                .iter()
                .zip(&eps)
                .map(|(s, e)| {
                    let prob = (s + e).clamp(0.0, 1.0);
                    if rng.random::<f64>() < prob {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            (y, LossKind::Logistic)
        }
    };
    let mut inst = ProblemInstance::new(x, y, loss, k_true, DEFAULT_M, DEFAULT_LAMBDA2)?;
    inst.beta_true = Some(beta_true);
    Ok(inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One sample per line, numeric fields separated by `delimiter`
    /// (`None` splits on whitespace), label in the last column.
    Delimited { delimiter: Option<char> },
    /// `label idx:value ...` with 1-based feature indices; `features`
    /// fixes `p`, otherwise the largest index seen is used.
    SparseIndexValue { features: Option<usize> },
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    let field = field.trim();
    field.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("'{field}' is not a number") })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads a dataset as `(X, y)`.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<(DenseMatrix, Vec<f64>)> {
    parse_dataset(&fs::read_to_string(path)?, format)
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<(DenseMatrix, Vec<f64>)> {
    match format {
        DatasetFormat::Delimited { delimiter } => parse_delimited(content_lines(text), delimiter),
        DatasetFormat::SparseIndexValue { features } => parse_sparse(text, features),
    }
}

fn parse_delimited<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    delimiter: Option<char>,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut width = None;
    for (line, l) in lines {
        let fields: Vec<f64> = match delimiter {
            Some(d) => l.split(d).map(|f| parse_number(f, line)).collect::<Result<_>>()?,
            None => l.split_whitespace().map(|f| parse_number(f, line)).collect::<Result<_>>()?,
        };
        if fields.len() < 2 {
            return Err(Error::Parse { line, message: "need at least one feature and a label".into() });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse { line, message: format!("expected {w} fields, found {}", fields.len()) })
            }
            _ => {}
        }
        let (label, row) = fields.split_last().expect("at least two fields");
        data.extend_from_slice(row);
        y.push(*label);
    }
    let Some(w) = width else {
        return Err(Error::invalid("dataset has no rows"));
    };
    Ok((DenseMatrix::from_row_major(y.len(), w - 1, data)?, y))
}

fn parse_sparse(text: &str, features: Option<usize>) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut y = Vec::new();
    let mut max_index = 0;
    for (line, l) in content_lines(text) {
        let mut parts = l.split_whitespace();
        let label = parse_number(parts.next().expect("non-empty line"), line)?;
        let mut row = Vec::new();
        for tok in parts {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line, message: format!("'{tok}' is not idx:value") })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("bad feature index '{idx}'") })?;
            if idx == 0 {
                return Err(Error::Parse { line, message: "feature indices are 1-based".into() });
            }
            if let Some(p) = features {
                if idx > p {
                    return Err(Error::Parse { line, message: format!("feature index {idx} exceeds p = {p}") });
                }
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, parse_number(val, line)?));
        }
        rows.push(row);
        y.push(label);
    }
    if rows.is_empty() {
        return Err(Error::invalid("dataset has no rows"));
    }
    let p = features.unwrap_or(max_index);
    if p == 0 {
        return Err(Error::invalid("dataset has no features"));
    }
    let mut data = vec![0.0; rows.len() * p];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            data[i * p + j] = v;
        }
    }
    Ok((DenseMatrix::from_row_major(rows.len(), p, data)?, y))
}

/// Record of a [`standardize`] call, enough to map coefficients back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub original_columns: usize,
}

impl Standardization {
    /// Coefficients on the original columns plus the intercept implied by centering.
    pub fn to_original(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let mut out = vec![0.0; self.original_columns];
        let mut intercept = 0.0;
        for (i, &j) in self.kept.iter().enumerate() {
            out[j] = beta[i] / self.scales[i];
            intercept -= self.means[i] * out[j];
        }
        (out, intercept)
    }
}

/// Drops constant columns, centers the rest and scales them to unit norm.
pub fn standardize(x: &DenseMatrix) -> Result<(DenseMatrix, Standardization)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid("standardization needs at least two samples"));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..x.cols() {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            dropped.push(j);
            continue;
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let norm = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
        if norm == 0.0 {
            dropped.push(j);
            continue;
        }
        kept.push(j);
        means.push(mean);
        scales.push(norm);
    }
    if kept.is_empty() {
        return Err(Error::invalid("every column is constant"));
    }
    let q = kept.len();
    let mut data = vec![0.0; n * q];
    for (c, &j) in kept.iter().enumerate() {
        for (i, v) in x.column(j).iter().enumerate() {
            data[i * q + c] = (v - means[c]) / scales[c];
        }
    }
    let out = DenseMatrix::from_row_major(n, q, data)?;
    Ok((out, Standardization { kept, dropped, means, scales, original_columns: x.cols() }))
}

/// Header values of an instance file. Hyperparameters are optional so that
/// command-line flags and defaults can fill the gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub loss: LossKind,
    pub k: Option<usize>,
    pub m: Option<f64>,
    pub lambda2: Option<f64>,
    pub beta_true: Option<Vec<f64>>,
}

impl InstanceFile {
    /// Builds the instance with precedence `override > header > default`.
    /// The default `k` is capped at `p`.
    pub fn into_instance(self, k: Option<usize>, m: Option<f64>, lambda2: Option<f64>) -> Result<ProblemInstance> {
        let p = self.x.cols();
        let k = k.or(self.k).unwrap_or(DEFAULT_K.min(p));
        let m = m.or(self.m).unwrap_or(DEFAULT_M);
        let lambda2 = lambda2.or(self.lambda2).unwrap_or(DEFAULT_LAMBDA2);
        let mut inst = ProblemInstance::new(self.x, self.y, self.loss, k, m, lambda2)?;
        inst.beta_true = self.beta_true;
        Ok(inst)
    }
}

/// Serializes an instance: `key value` header lines, a `data` line, then one
/// comma-separated row per sample with the label last.
pub fn format_instance(inst: &ProblemInstance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n {}", inst.n());
    let _ = writeln!(s, "p {}", inst.p());
    let _ = writeln!(s, "loss {}", inst.loss.label());
    let _ = writeln!(s, "k {}", inst.k);
    let _ = writeln!(s, "M {}", inst.m);
    let _ = writeln!(s, "lambda2 {}", inst.lambda2);
    if let Some(b) = &inst.beta_true {
        let parts: Vec<String> = b.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "beta_true {}", parts.join(","));
    }
    s.push_str("data\n");
    for i in 0..inst.n() {
        for v in inst.x.row(i) {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{}", inst.y[i]);
    }
    s
}

pub fn write_instance(path: impl AsRef<Path>, inst: &ProblemInstance) -> Result<()> {
    fs::write(path, format_instance(inst))?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<InstanceFile> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn parse_instance(text: &str) -> Result<InstanceFile> {
    let mut n = None;
    let mut p = None;
    let mut loss = None;
    let mut k = None;
    let mut m = None;
    let mut lambda2 = None;
    let mut beta_true = None;
    let mut data_line = None;
    for (line, l) in content_lines(text) {
        if l == "data" {
            data_line = Some(line);
            break;
        }
        let (key, value) = l
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::Parse { line, message: format!("expected 'key value', found '{l}'") })?;
        let value = value.trim();
        let bad = |what: &str| Error::Parse { line, message: format!("bad {what} '{value}'") };
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("n"))?),
            "p" => p = Some(value.parse::<usize>().map_err(|_| bad("p"))?),
            "loss" => loss = Some(LossKind::parse(value).map_err(|_| bad("loss"))?),
            "k" => k = Some(value.parse::<usize>().map_err(|_| bad("k"))?),
            "M" => m = Some(value.parse::<f64>().map_err(|_| bad("M"))?),
            "lambda2" => lambda2 = Some(value.parse::<f64>().map_err(|_| bad("lambda2"))?),
            "beta_true" => {
                beta_true =
                    Some(value.split(',').map(|f| parse_number(f, line)).collect::<Result<Vec<f64>>>()?)
            }
            _ => return Err(Error::Parse { line, message: format!("unknown header key '{key}'") }),
        }
    }
    let Some(start) = data_line else {
        return Err(Error::invalid("instance file has no 'data' line"));
    };
    let body = content_lines(text).skip_while(|(line, _)| *line <= start);
    let (x, y) = parse_delimited(body, Some(','))?;
    if n.is_some_and(|n| n != x.rows()) || p.is_some_and(|p| p != x.cols()) {
        return Err(Error::invalid(format!(
            "header declares {}x{}, data is {}x{}",
            n.map_or("?".into(), |v| v.to_string()),
            p.map_or("?".into(), |v| v.to_string()),
            x.rows(),
            x.cols()
        )));
    }
    if beta_true.as_ref().is_some_and(|b: &Vec<f64>| b.len() != x.cols()) {
        return Err(Error::invalid("beta_true length does not match p"));
    }
    Ok(InstanceFile { x, y, loss: loss.unwrap_or(LossKind::SquaredError), k, m, lambda2, beta_true })
}

/// Pearson correlation of two equally long slices.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let ca: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let cb: Vec<f64> = b.iter().map(|v| v - mb).collect();
    dot(&ca, &cb) / (dot(&ca, &ca).sqrt() * dot(&cb, &cb).sqrt())
}
