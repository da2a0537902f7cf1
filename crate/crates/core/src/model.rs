//! Problem instances and GLM losses.
//!
//! A loss `F: ℝⁿ → ℝ` is evaluated at the linear predictor `u = X β`. Besides
//! value and gradient, every loss exposes `F*(−ζ)`, the conjugate evaluated
//! at the negated dual point, which is the quantity the Fenchel lower bound
//! consumes. Conjugates return `+∞` outside their effective domain, so a bound
//! built from them degrades to `−∞` rather than becoming invalid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_lambda_max, DenseMatrix};

/// Inflation applied to the power-iteration estimate of `λmax(XᵀX)`.
pub const LAMBDA_MAX_SAFETY: f64 = 1.01;
const POWER_ITER_TOL: f64 = 1e-7;
const POWER_ITER_MAX: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    /// `‖u − y‖²`
    SquaredError,
    /// `Σ log(1 + exp(−yᵢ uᵢ))`, labels in {−1, +1}
    Logistic,
    /// `Σ max(0, 1 − yᵢ uᵢ)²`, labels in {−1, +1}
    SquaredHinge,
    /// `Σ exp(uᵢ) − yᵢ uᵢ`, labels ≥ 0
    Poisson,
    /// `Σ yᵢ exp(−uᵢ) + uᵢ`, labels > 0
    Gamma,
    /// `Σᵢ logsumexp(uᵢ·) − yᵢ·ᵀuᵢ·` with `u`, `y` stored row-major as n × classes.
    Multinomial { classes: usize },
}

impl LossKind {
    /// Losses with a globally Lipschitz gradient; only these can drive the solver.
    pub fn is_solver_grade(self) -> bool {
        matches!(self, LossKind::SquaredError | LossKind::Logistic | LossKind::SquaredHinge)
    }

    /// Bound on the second derivative of the per-sample loss.
    pub(crate) fn curvature(self) -> Option<f64> {
        match self {
            LossKind::SquaredError | LossKind::SquaredHinge => Some(2.0),
            LossKind::Logistic => Some(0.25),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared_error",
            LossKind::Logistic => "logistic",
            LossKind::SquaredHinge => "squared_hinge",
            LossKind::Poisson => "poisson",
            LossKind::Gamma => "gamma",
            LossKind::Multinomial { .. } => "multinomial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "squared_error" | "squared-error" | "linear" => LossKind::SquaredError,
            "logistic" => LossKind::Logistic,
            "squared_hinge" | "squared-hinge" => LossKind::SquaredHinge,
            "poisson" => LossKind::Poisson,
            "gamma" => LossKind::Gamma,
            _ => {
                if let Some(k) = s.strip_prefix("multinomial:") {
                    let classes = k
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad class count in '{s}'")))?;
                    LossKind::Multinomial { classes }
                } else {
                    return Err(Error::invalid(format!("unknown loss '{s}'")));
                }
            }
        })
    }

    pub fn label(self) -> String {
        match self {
            LossKind::Multinomial { classes } => format!("multinomial:{classes}"),
            other => other.name().to_string(),
        }
    }
}

/// Checks that `y` lies in the label domain of `loss` and has a shape compatible with `u_len`.
pub fn validate_labels(loss: LossKind, y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("label {i} is not finite")));
    }
    match loss {
        LossKind::SquaredError => Ok(()),
        LossKind::Logistic | LossKind::SquaredHinge => match y.iter().position(|&v| v != 1.0 && v != -1.0) {
            Some(i) => Err(Error::invalid(format!(
                "{} loss needs labels in {{-1, +1}}, label {i} is {}",
                loss.name(),
                y[i]
            ))),
            None => Ok(()),
        },
        LossKind::Poisson => match y.iter().position(|&v| v < 0.0) {
            Some(i) => Err(Error::invalid(format!("poisson labels must be >= 0, label {i} is {}", y[i]))),
            None => Ok(()),
        },
        LossKind::Gamma => match y.iter().position(|&v| v <= 0.0) {
            Some(i) => Err(Error::invalid(format!("gamma labels must be > 0, label {i} is {}", y[i]))),
            None => Ok(()),
        },
        LossKind::Multinomial { classes } => {
            if classes < 2 || !y.len().is_multiple_of(classes) {
                return Err(Error::invalid("multinomial labels must be an n x classes indicator matrix"));
            }
            for (i, row) in y.chunks(classes).enumerate() {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != classes {
                    return Err(Error::invalid(format!("multinomial label row {i} is not one-hot")));
                }
            }
            Ok(())
        }
    }
}

fn check_shapes(u: &[f64], y: &[f64]) -> Result<()> {
    if u.len() != y.len() {
        return Err(Error::invalid(format!("predictor has {} entries, labels {}", u.len(), y.len())));
    }
    if u.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in predictor"));
    }
    Ok(())
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn log1p_exp(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `x log x` with `0 log 0 = 0`.
#[inline]
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `F(u)`. Labels are validated.
pub fn loss_value(loss: LossKind, u: &[f64], y: &[f64]) -> Result<f64> {
    check_shapes(u, y)?;
    validate_labels(loss, y)?;
    Ok(loss_value_unchecked(loss, u, y))
}

pub(crate) fn loss_value_unchecked(loss: LossKind, u: &[f64], y: &[f64]) -> f64 {
    match loss {
        LossKind::SquaredError => u.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        LossKind::Logistic => u.iter().zip(y).map(|(a, b)| log1p_exp(-a * b)).sum(),
        LossKind::SquaredHinge => u
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let m = (1.0 - a * b).max(0.0);
                m * m
            })
            .sum(),
        LossKind::Poisson => u.iter().zip(y).map(|(a, b)| a.exp() - b * a).sum(),
        LossKind::Gamma => u.iter().zip(y).map(|(a, b)| b * (-a).exp() + a).sum(),
        LossKind::Multinomial { classes } => u
            .chunks(classes)
            .zip(y.chunks(classes))
            .map(|(ur, yr)| logsumexp(ur) - ur.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>())
            .sum(),
    }
}

/// `∇F(u)` for solver-grade losses.
pub fn loss_gradient(loss: LossKind, u: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if !loss.is_solver_grade() {
        return Err(Error::Unsupported(format!(
            "{} loss has no globally Lipschitz gradient; it is available for bounds only",
            loss.name()
        )));
    }
    check_shapes(u, y)?;
    validate_labels(loss, y)?;
    let mut g = vec![0.0; u.len()];
    gradient_into(loss, u, y, &mut g);
    Ok(g)
}

/// `∇F(u)` for every loss, written into `out`. Callers validate shapes.
pub(crate) fn gradient_into(loss: LossKind, u: &[f64], y: &[f64], out: &mut [f64]) {
    match loss {
        LossKind::SquaredError => {
            for ((o, a), b) in out.iter_mut().zip(u).zip(y) {
                *o = 2.0 * (a - b);
            }
        }
        LossKind::Logistic => {
            for ((o, a), b) in out.iter_mut().zip(u).zip(y) {
                *o = -b * sigmoid(-b * a);
            }
        }
        LossKind::SquaredHinge => {
            for ((o, a), b) in out.iter_mut().zip(u).zip(y) {
                *o = -2.0 * b * (1.0 - b * a).max(0.0);
            }
        }
        LossKind::Poisson => {
            for ((o, a), b) in out.iter_mut().zip(u).zip(y) {
                *o = a.exp() - b;
            }
        }
        LossKind::Gamma => {
            for ((o, a), b) in out.iter_mut().zip(u).zip(y) {
                *o = 1.0 - b * (-a).exp();
            }
        }
        LossKind::Multinomial { classes } => {
            for ((o, ur), yr) in out.chunks_mut(classes).zip(u.chunks(classes)).zip(y.chunks(classes)) {
                let lse = logsumexp(ur);
                for ((oi, a), b) in o.iter_mut().zip(ur).zip(yr) {
                    *oi = (a - lse).exp() - b;
                }
            }
        }
    }
}

/// `F*(−ζ)`; `+∞` outside the conjugate's effective domain.
pub fn loss_conjugate_at_neg(loss: LossKind, zeta: &[f64], y: &[f64]) -> Result<f64> {
    check_shapes(zeta, y)?;
    validate_labels(loss, y)?;
    Ok(conjugate_at_neg_unchecked(loss, zeta, y))
}

pub(crate) fn conjugate_at_neg_unchecked(loss: LossKind, zeta: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    match loss {
        LossKind::SquaredError => {
            for (z, b) in zeta.iter().zip(y) {
                total += 0.25 * z * z - b * z;
            }
        }
        LossKind::Logistic => {
            for (z, b) in zeta.iter().zip(y) {
                let r = z / b;
                if !(0.0..=1.0).contains(&r) {
                    return f64::INFINITY;
                }
                total += xlogx(1.0 - r) + xlogx(r);
            }
        }
        LossKind::SquaredHinge => {
            for (z, b) in zeta.iter().zip(y) {
                let t = -b * z;
                if t > 0.0 {
                    return f64::INFINITY;
                }
                total += t + 0.25 * t * t;
            }
        }
        LossKind::Poisson => {
            for (z, b) in zeta.iter().zip(y) {
                let t = b - z;
                if t < 0.0 {
                    return f64::INFINITY;
                }
                total += xlogx(t) - t;
            }
        }
        LossKind::Gamma => {
            // F*(w) = y h((1 − w)/y), evaluated at w = −ζ.
            for (z, b) in zeta.iter().zip(y) {
                let t = (1.0 + z) / b;
                if t < 0.0 {
                    return f64::INFINITY;
                }
                total += b * (xlogx(t) - t);
            }
        }
        LossKind::Multinomial { classes } => {
            for (zr, yr) in zeta.chunks(classes).zip(y.chunks(classes)) {
                let mut sum = 0.0;
                let mut ent = 0.0;
                for (z, b) in zr.iter().zip(yr) {
                    let t = b - z;
                    if t < 0.0 {
                        return f64::INFINITY;
                    }
                    sum += t;
                    ent += xlogx(t);
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return f64::INFINITY;
                }
                total += ent;
            }
        }
    }
    total
}

/// The sparse GLM problem: minimize `F(Xβ) + λ2‖β‖²` subject to `‖β‖₀ ≤ k`, `‖β‖∞ ≤ M`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub loss: LossKind,
    pub k: usize,
    pub m: f64,
    pub lambda2: f64,
    /// Ground-truth coefficients when the instance is synthetic.
    pub beta_true: Option<Vec<f64>>,
}

impl ProblemInstance {
    pub fn new(x: DenseMatrix, y: Vec<f64>, loss: LossKind, k: usize, m: f64, lambda2: f64) -> Result<Self> {
        let inst = Self { x, y, loss, k, m, lambda2, beta_true: None };
        inst.validate()?;
        Ok(inst)
    }

    /// `k = 0` is accepted as the degenerate all-zero model.
    pub fn validate(&self) -> Result<()> {
        if let LossKind::Multinomial { .. } = self.loss {
            return Err(Error::Unsupported(
                "multinomial loss needs matrix-valued coefficients; use the loss functions directly".into(),
            ));
        }
        if self.y.len() != self.x.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                self.y.len(),
                self.x.rows()
            )));
        }
        if self.x.cols() == 0 || self.x.rows() == 0 {
            return Err(Error::invalid("design matrix is empty"));
        }
        if self.k > self.x.cols() {
            return Err(Error::invalid(format!("k = {} exceeds p = {}", self.k, self.x.cols())));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::invalid(format!("box bound M must be positive, got {}", self.m)));
        }
        if !(self.lambda2 > 0.0 && self.lambda2.is_finite()) {
            return Err(Error::invalid(format!("lambda2 must be positive, got {}", self.lambda2)));
        }
        if self.x.row_major_data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix has non-finite entries"));
        }
        validate_labels(self.loss, &self.y)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn with_hyperparameters(mut self, k: usize, m: f64, lambda2: f64) -> Result<Self> {
        self.k = k;
        self.m = m;
        self.lambda2 = lambda2;
        self.validate()?;
        Ok(self)
    }

    /// `F(Xβ) + λ2‖β‖²`, the objective of the sparse problem (no feasibility check).
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let u = self.x.mul_vec(beta);
        loss_value_unchecked(self.loss, &u, &self.y) + self.lambda2 * beta.iter().map(|b| b * b).sum::<f64>()
    }
}

/// Lipschitz constant of `β ↦ Xᵀ∇F(Xβ)`, with `λmax(XᵀX)` from power iteration.
pub fn lipschitz_constant(instance: &ProblemInstance) -> Result<f64> {
    let c = instance.loss.curvature().ok_or_else(|| {
        Error::Unsupported(format!("{} loss has no global Lipschitz constant", instance.loss.name()))
    })?;
    let lmax = gram_lambda_max(&instance.x, POWER_ITER_TOL, POWER_ITER_MAX)?;
    let l = c * LAMBDA_MAX_SAFETY * lmax;
    if !l.is_finite() {
        return Err(Error::Numerical { iteration: 0, detail: format!("Lipschitz constant overflowed (lambda_max = {lmax})") });
    }
    Ok(l)
}
