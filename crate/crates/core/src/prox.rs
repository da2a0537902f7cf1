//! Proximal operators of the perspective envelope `g` and its conjugate
//! `g*(α) = TopSum_k(H_M(α))`.
//!
//! `prox_{ρ g*}` reduces to an isotonic regression with Huber terms on the
//! magnitudes of `μ` sorted in descending order: the `k` leading positions
//! carry weight `ρ`, the rest carry none. A pool-adjacent-violators pass over
//! the sorted magnitudes solves it exactly, each block value being the
//! univariate Huber prox of the block's mean magnitude at the block's mean
//! weight. `prox_{ρ⁻¹ g}` then follows from the Moreau decomposition.

use crate::error::{Error, Result};
use crate::support::{CoordStatus, Restriction};

/// `H_M(x)`: quadratic on `[−M, M]`, linear outside.
#[inline]
pub fn huber(x: f64, m: f64) -> f64 {
    let a = x.abs();
    if a <= m {
        0.5 * a * a
    } else {
        m * a - 0.5 * m * m
    }
}

/// `argmin_ν ½(ν − x)² + w·H_M(ν)` for `x ≥ 0`, `w ≥ 0`.
#[inline]
pub fn huber_prox(x: f64, w: f64, m: f64) -> f64 {
    if x <= m * (1.0 + w) {
        x / (1.0 + w)
    } else {
        x - w * m
    }
}

/// Descending-magnitude ordering of a vector, ties broken by index.
#[derive(Debug, Clone, Default)]
pub struct SortPlan {
    keyed: Vec<(f64, u32)>,
    /// Length of the sorted prefix of `keyed`.
    sorted: usize,
}

fn descending(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl SortPlan {
    pub fn new(mu: &[f64]) -> Self {
        let mut plan = Self::default();
        plan.rebuild(mu.iter().enumerate().map(|(j, &v)| (j, v)));
        plan
    }

    fn rebuild(&mut self, entries: impl Iterator<Item = (usize, f64)>) {
        self.load(entries);
        self.keyed.sort_unstable_by(descending);
        self.sorted = self.keyed.len();
    }

    fn load(&mut self, entries: impl Iterator<Item = (usize, f64)>) {
        self.keyed.clear();
        self.keyed.extend(entries.map(|(j, v)| (v.abs(), j as u32)));
        self.sorted = 0;
    }

    /// Sorts the first `upto` positions; the rest stay unordered.
    fn sort_prefix(&mut self, upto: usize) {
        let upto = upto.min(self.keyed.len());
        if upto <= self.sorted {
            return;
        }
        let tail = &mut self.keyed[self.sorted..];
        let take = upto - self.sorted;
        if take < tail.len() {
            tail.select_nth_unstable_by(take - 1, descending);
        }
        tail[..take].sort_unstable_by(descending);
        self.sorted = upto;
    }

    pub fn len(&self) -> usize {
        self.keyed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyed.is_empty()
    }

    /// Original index at each sorted position.
    pub fn order(&self) -> Vec<usize> {
        self.keyed.iter().map(|&(_, j)| j as usize).collect()
    }

    /// Sorted position of each original index (for the unrestricted plan).
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.keyed.len()];
        for (pos, &(_, j)) in self.keyed.iter().enumerate() {
            inv[j as usize] = pos;
        }
        inv
    }

    pub fn sorted_magnitudes(&self) -> Vec<f64> {
        self.keyed.iter().map(|&(a, _)| a).collect()
    }
}

/// One block of pooled positions `[start, end]` (sorted coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    /// Sum of the Huber weights in the block.
    pub weight_sum: f64,
    /// Sum of the magnitudes in the block.
    pub magnitude_sum: f64,
    pub count: usize,
    pub value: f64,
}

impl Block {
    fn singleton(pos: usize, magnitude: f64, weight: f64, m: f64) -> Self {
        Self {
            start: pos,
            end: pos,
            weight_sum: weight,
            magnitude_sum: magnitude,
            count: 1,
            value: huber_prox(magnitude, weight, m),
        }
    }

    fn absorb(&mut self, left: &Block, m: f64) {
        self.start = left.start;
        self.weight_sum += left.weight_sum;
        self.magnitude_sum += left.magnitude_sum;
        self.count += left.count;
        let n = self.count as f64;
        self.value = huber_prox(self.magnitude_sum / n, self.weight_sum / n, m);
    }
}

/// PAVA working state: a stack of blocks ordered by position.
#[derive(Debug, Clone, Default)]
pub struct BlockPool {
    blocks: Vec<Block>,
    /// Sorted positions at and beyond this index were passed through untouched.
    passthrough_from: usize,
}

impl BlockPool {
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn passthrough_from(&self) -> usize {
        self.passthrough_from
    }

    /// Pools the sorted magnitudes; the first `weighted` positions carry weight `rho`.
    ///
    /// Once a zero-weight position is not absorbed into its predecessor, none
    /// of the (smaller) positions after it can violate the ordering either, so
    /// the pass stops there.
    ///
    /// Returns false if `mags` ran out before the pass could stop.
    fn run(&mut self, mags: impl Iterator<Item = f64>, weighted: usize, rho: f64, m: f64) -> bool {
        self.blocks.clear();
        let mut pos = 0;
        let mut stopped = false;
        for a in mags {
            let w = if pos < weighted { rho } else { 0.0 };
            let mut b = Block::singleton(pos, a, w, m);
            let mut merged = false;
            while let Some(last) = self.blocks.last() {
                if last.value < b.value {
                    b.absorb(last, m);
                    self.blocks.pop();
                    merged = true;
                } else {
                    break;
                }
            }
            self.blocks.push(b);
            pos += 1;
            if pos > weighted && !merged {
                stopped = true;
                break;
            }
        }
        self.passthrough_from = pos;
        stopped
    }
}

/// Reusable buffers for repeated prox evaluations. Not shareable across threads;
/// distinct workspaces are independent.
#[derive(Debug, Clone, Default)]
pub struct ProxWorkspace {
    plan: SortPlan,
    pool: BlockPool,
    scaled: Vec<f64>,
}

impl ProxWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pool(&self) -> &BlockPool {
        &self.pool
    }

    /// `prox_{ρ g*}(μ)` with budget `k`, written into `out`.
    pub fn prox_gstar_into(&mut self, mu: &[f64], rho: f64, k: usize, m: f64, out: &mut [f64]) -> Result<()> {
        let p = mu.len();
        if k == 0 || k > p {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={p}")));
        }
        check_params(rho, m)?;
        if k == p {
            for (o, &v) in out.iter_mut().zip(mu) {
                *o = v.signum() * huber_prox(v.abs(), rho, m);
            }
            fix_zero_signs(mu, out);
            self.pool.blocks.clear();
            return Ok(());
        }
        self.plan.load(mu.iter().copied().enumerate());
        self.pool_and_scatter(mu, rho, k, m, out);
        Ok(())
    }

    /// Node-restricted `prox_{ρ g*}`: fixed-one coordinates get the Huber prox
    /// unconditionally, free coordinates share the remaining budget, and
    /// fixed-zero coordinates pass through unchanged.
    pub fn prox_gstar_restricted_into(
        &mut self,
        mu: &[f64],
        rho: f64,
        restriction: &Restriction,
        m: f64,
        out: &mut [f64],
    ) -> Result<()> {
        check_params(rho, m)?;
        if restriction.p() != mu.len() {
            return Err(Error::invalid("restriction dimension does not match the input"));
        }
        for (j, (&v, o)) in mu.iter().zip(out.iter_mut()).enumerate() {
            *o = match restriction.status(j) {
                CoordStatus::One => v.signum() * huber_prox(v.abs(), rho, m),
                _ => v,
            };
        }
        let free = restriction.free();
        let budget = restriction.k_remaining();
        if budget >= free.len() {
            for &j in free {
                out[j] = mu[j].signum() * huber_prox(mu[j].abs(), rho, m);
            }
        } else if budget > 0 {
            self.plan.load(free.iter().map(|&j| (j, mu[j])));
            self.pool_and_scatter(mu, rho, budget, m, out);
        }
        fix_zero_signs(mu, out);
        Ok(())
    }

    /// `out` must already hold `mu` (or the pass-through value) at every
    /// coordinate the plan does not touch.
    fn pool_and_scatter(&mut self, mu: &[f64], rho: f64, k: usize, m: f64, out: &mut [f64]) {
        // The pass rarely reaches far beyond position k, so only a growing
        // prefix of the magnitudes is sorted.
        let mut prefix = (2 * k).max(k + 64);
        loop {
            self.plan.sort_prefix(prefix);
            let sorted = &self.plan.keyed[..self.plan.sorted];
            let stopped = self.pool.run(sorted.iter().map(|&(a, _)| a), k, rho, m);
            if stopped || self.plan.sorted == self.plan.keyed.len() {
                break;
            }
            prefix *= 2;
        }
        let keyed = &self.plan.keyed;
        for b in &self.pool.blocks {
            for &(_, j) in &keyed[b.start..=b.end] {
                let j = j as usize;
                out[j] = if mu[j] == 0.0 { 0.0 } else { mu[j].signum() * b.value };
            }
        }
        for &(_, j) in &keyed[self.pool.passthrough_from..] {
            out[j as usize] = mu[j as usize];
        }
    }

    /// `prox_{ρ⁻¹ g}(μ) = μ − ρ⁻¹ prox_{ρ g*}(ρ μ)`.
    pub fn prox_g_into(&mut self, mu: &[f64], rho: f64, k: usize, m: f64, out: &mut [f64]) -> Result<()> {
        let mut scaled = std::mem::take(&mut self.scaled);
        scaled.clear();
        scaled.extend(mu.iter().map(|v| rho * v));
        let res = self.prox_gstar_into(&scaled, rho, k, m, out);
        moreau_finish(&scaled, rho, out);
        self.scaled = scaled;
        res
    }

    pub fn prox_g_restricted_into(
        &mut self,
        mu: &[f64],
        rho: f64,
        restriction: &Restriction,
        m: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let mut scaled = std::mem::take(&mut self.scaled);
        scaled.clear();
        scaled.extend(mu.iter().map(|v| rho * v));
        let res = self.prox_gstar_restricted_into(&scaled, rho, restriction, m, out);
        moreau_finish(&scaled, rho, out);
        self.scaled = scaled;
        res
    }
}

fn check_params(rho: f64, m: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    if !(m > 0.0) {
        return Err(Error::invalid(format!("M must be positive, got {m}")));
    }
    Ok(())
}

/// sgn(0) = 0: zero inputs map to zero outputs.
fn fix_zero_signs(mu: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(mu) {
        if v == 0.0 {
            *o = 0.0;
        }
    }
}

/// Turns `out = prox_{ρ g*}(ρμ)` into `(ρμ − out)/ρ`. Pass-through
/// coordinates come out as exact zeros.
fn moreau_finish(scaled: &[f64], rho: f64, out: &mut [f64]) {
    for (o, &s) in out.iter_mut().zip(scaled) {
        *o = (s - *o) / rho;
    }
}

/// `argmin_α ½‖α − μ‖² + ρ·TopSum_k(H_M(α))`.
pub fn prox_gstar(mu: &[f64], rho: f64, k: usize, m: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mu.len()];
    ProxWorkspace::new().prox_gstar_into(mu, rho, k, m, &mut out)?;
    Ok(out)
}

/// `prox_{ρ⁻¹ g}(μ)`.
pub fn prox_g(mu: &[f64], rho: f64, k: usize, m: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mu.len()];
    ProxWorkspace::new().prox_g_into(mu, rho, k, m, &mut out)?;
    Ok(out)
}

pub fn prox_gstar_node(mu: &[f64], rho: f64, restriction: &Restriction, m: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mu.len()];
    ProxWorkspace::new().prox_gstar_restricted_into(mu, rho, restriction, m, &mut out)?;
    Ok(out)
}

pub fn prox_g_node(mu: &[f64], rho: f64, restriction: &Restriction, m: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mu.len()];
    ProxWorkspace::new().prox_g_restricted_into(mu, rho, restriction, m, &mut out)?;
    Ok(out)
}
