//! The perspective envelope `g`, its conjugate, and safe Fenchel lower bounds.

use crate::error::{Error, Result};
use crate::model::{conjugate_at_neg_unchecked, gradient_into, ProblemInstance};
use crate::prox::huber;
use crate::support::{CoordStatus, Restriction};

/// Relative slack on the box and budget checks, absorbing prox round-off.
pub const DOMAIN_SLACK: f64 = 1e-9;
/// Largest magnitude tolerated on a fixed-zero coordinate.
pub const FIXED_ZERO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EnvelopeParams {
    pub k: usize,
    pub m: f64,
    pub restriction: Option<Restriction>,
}

impl EnvelopeParams {
    pub fn new(k: usize, m: f64) -> Self {
        Self { k, m, restriction: None }
    }

    pub fn with_restriction(k: usize, m: f64, restriction: Restriction) -> Self {
        Self { k, m, restriction: Some(restriction) }
    }
}

/// `g(β)`, `+∞` outside its domain.
pub fn g_value(beta: &[f64], params: &EnvelopeParams) -> f64 {
    match &params.restriction {
        None => envelope(beta.iter().copied(), params.k, params.m),
        Some(r) => g_value_restricted(beta, r, params.m),
    }
}

pub(crate) fn g_value_restricted(beta: &[f64], r: &Restriction, m: f64) -> f64 {
    let mut fixed = 0.0;
    for (&b, &s) in beta.iter().zip(r.statuses()) {
        match s {
            CoordStatus::Zero => {
                if b.abs() > FIXED_ZERO_SLACK {
                    return f64::INFINITY;
                }
            }
            CoordStatus::One => {
                if b.abs() > m * (1.0 + DOMAIN_SLACK) {
                    return f64::INFINITY;
                }
                fixed += 0.5 * b * b;
            }
            CoordStatus::Free => {}
        }
    }
    fixed + envelope(r.free().iter().map(|&j| beta[j]), r.k_remaining(), m)
}

/// Greedy majorization: the top magnitudes keep their own `zⱼ = 1`, the
/// tail shares the leftover budget and contributes its squared average.
fn envelope(values: impl Iterator<Item = f64>, k: usize, m: f64) -> f64 {
    let mut mags: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut sq = 0.0;
    for v in values {
        let a = v.abs();
        if a == 0.0 {
            continue;
        }
        if !(a <= m * (1.0 + DOMAIN_SLACK)) {
            return f64::INFINITY;
        }
        total += a;
        sq += a * a;
        mags.push(a);
    }
    if mags.is_empty() {
        return 0.0;
    }
    if total > k as f64 * m * (1.0 + DOMAIN_SLACK) {
        return f64::INFINITY;
    }
    if mags.len() <= k {
        return 0.5 * sq;
    }
    mags.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let (top, rest) = mags.split_at_mut(k);
    top.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut tail: f64 = rest.iter().sum();
    let mut j = k;
    loop {
        j -= 1;
        tail += top[j];
        let avg = tail / (k - j) as f64;
        if j == 0 || top[j - 1] >= avg {
            let head: f64 = top[..j].iter().map(|a| a * a).sum();
            return 0.5 * (head + (k - j) as f64 * avg * avg);
        }
    }
}

/// `g*(α) = TopSum_k(H_M(α))`; the node variant adds the fixed-one Huber
/// terms and ignores fixed-zero coordinates.
pub fn g_conjugate(alpha: &[f64], params: &EnvelopeParams) -> f64 {
    match &params.restriction {
        None => top_sum(alpha.iter().map(|&a| huber(a, params.m)).collect(), params.k),
        Some(r) => conjugate_restricted(alpha, r, params.m),
    }
}

pub(crate) fn conjugate_restricted(alpha: &[f64], r: &Restriction, m: f64) -> f64 {
    let fixed: f64 = r.fixed_one().iter().map(|&j| huber(alpha[j], m)).sum();
    fixed + top_sum(r.free().iter().map(|&j| huber(alpha[j], m)).collect(), r.k_remaining())
}

fn top_sum(mut h: Vec<f64>, k: usize) -> f64 {
    if k == 0 || h.is_empty() {
        return 0.0;
    }
    if k < h.len() {
        h.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        h.truncate(k);
    }
    h.iter().sum()
}

/// Scratch space for evaluating the bound from a fitted `u = Xβ̂`.
#[derive(Debug, Clone, Default)]
pub(crate) struct BoundWorkspace {
    zeta: Vec<f64>,
    v: Vec<f64>,
}

impl BoundWorkspace {
    /// `−F*(−ζ) − 2λ2·g*(Xᵀζ/(2λ2))` with `ζ = −∇F(u)`.
    pub(crate) fn bound_at_fit(&mut self, inst: &ProblemInstance, u: &[f64], restriction: &Restriction) -> f64 {
        let n = inst.n();
        self.zeta.resize(n, 0.0);
        gradient_into(inst.loss, u, &inst.y, &mut self.zeta);
        for z in &mut self.zeta {
            *z = -*z;
        }
        let fstar = conjugate_at_neg_unchecked(inst.loss, &self.zeta, &inst.y);
        if !fstar.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.v.resize(inst.p(), 0.0);
        inst.x.tr_mul_vec_into(&self.zeta, &mut self.v);
        let scale = 2.0 * inst.lambda2;
        for v in &mut self.v {
            *v /= scale;
        }
        let gstar = conjugate_restricted(&self.v, restriction, inst.m);
        let bound = -fstar - scale * gstar;
        if bound.is_nan() {
            f64::NEG_INFINITY
        } else {
            bound
        }
    }
}

/// Weak-duality lower bound on the (node) MIP optimum, valid for any finite `β̂`.
pub fn safe_lower_bound(inst: &ProblemInstance, beta_hat: &[f64], node: Option<&Restriction>) -> Result<f64> {
    if beta_hat.len() != inst.p() {
        return Err(Error::invalid(format!("beta has length {}, expected {}", beta_hat.len(), inst.p())));
    }
    if beta_hat.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("beta_hat must be finite"));
    }
    let owned;
    let restriction = match node {
        Some(r) => {
            if r.p() != inst.p() {
                return Err(Error::invalid("node restriction dimension does not match the instance"));
            }
            r
        }
        None => {
            owned = Restriction::unrestricted(inst.p(), inst.k);
            &owned
        }
    };
    let u = inst.x.mul_vec(beta_hat);
    Ok(BoundWorkspace::default().bound_at_fit(inst, &u, restriction))
}
