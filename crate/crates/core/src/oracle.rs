//! Slow, structurally independent reference implementations.
//!
//! Nothing here calls into `prox` or `perspective`. The prox oracle uses the
//! variational form `TopSum_k(h) = min_t k·t + Σ max(hⱼ − t, 0)` with nested
//! bisections, the envelope oracle solves the KKT system of the defining
//! minimization over `z`, and the relaxation / MIP oracles run a log-barrier
//! Newton method on the lifted `(β, z)` problem and on every support.

use nalgebra::{DMatrix, DVector};

use crate::linalg::dot;
use crate::model::{gradient_into, loss_value_unchecked, LossKind, ProblemInstance};

const BISECTIONS: usize = 200;

fn huber_ref(x: f64, m: f64) -> f64 {
    let a = x.abs();
    if a <= m {
        0.5 * a * a
    } else {
        m * a - 0.5 * m * m
    }
}

fn huber_slope(a: f64, m: f64) -> f64 {
    a.min(m)
}

/// `argmin_{a ≥ 0} ½(a − c)² + ρ·max(H_M(a) − t, 0)` for `c ≥ 0`.
fn shrink_above_level(c: f64, rho: f64, t: f64, m: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, c);
    for _ in 0..BISECTIONS {
        let a = 0.5 * (lo + hi);
        if a <= lo || a >= hi {
            break;
        }
        let active = huber_ref(a, m) >= t;
        let right = (a - c) + if active { rho * huber_slope(a, m) } else { 0.0 };
        if right < 0.0 {
            lo = a;
        } else {
            hi = a;
        }
    }
    0.5 * (lo + hi)
}

/// Fraction of the level-`t` hinge that is active at the optimum.
fn active_fraction(c: f64, a: f64, rho: f64, t: f64, m: f64) -> f64 {
    if c == 0.0 {
        return if t < 0.0 { 1.0 } else { 0.0 };
    }
    ((c - a) / (rho * huber_slope(a, m))).clamp(0.0, 1.0)
}

/// Exact `prox_{ρ TopSum_k ∘ H_M}` of the magnitudes `c` (all ≥ 0).
fn topsum_huber_prox_magnitudes(c: &[f64], rho: f64, k: usize, m: f64) -> Vec<f64> {
    if c.is_empty() {
        return Vec::new();
    }
    if k == 0 {
        return c.to_vec();
    }
    let slope = |t: f64| {
        let active: f64 = c
            .iter()
            .map(|&cj| active_fraction(cj, shrink_above_level(cj, rho, t, m), rho, t, m))
            .sum();
        rho * (k as f64 - active)
    };
    let mut lo = -1.0;
    let mut hi = c.iter().map(|&v| huber_ref(v, m)).fold(0.0, f64::max) + 1.0;
    for _ in 0..BISECTIONS {
        let t = 0.5 * (lo + hi);
        if t <= lo || t >= hi {
            break;
        }
        if slope(t) < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
    }
    let t = 0.5 * (lo + hi);
    c.iter().map(|&cj| shrink_above_level(cj, rho, t, m)).collect()
}

/// `argmin_α ½‖α − μ‖² + ρ·TopSum_k(H_M(α))`.
pub fn oracle_prox_gstar(mu: &[f64], rho: f64, k: usize, m: f64) -> Vec<f64> {
    let c: Vec<f64> = mu.iter().map(|v| v.abs()).collect();
    let a = topsum_huber_prox_magnitudes(&c, rho, k.min(mu.len()), m);
    mu.iter().zip(a).map(|(v, aj)| if *v < 0.0 { -aj } else if *v > 0.0 { aj } else { 0.0 }).collect()
}

/// Node-restricted version: `fixed_zero[j]` coordinates pass through,
/// `fixed_one[j]` coordinates always pay `ρ H_M`, and the remaining free
/// coordinates share the budget `k_remaining`.
pub fn oracle_prox_gstar_node(
    mu: &[f64],
    rho: f64,
    fixed_zero: &[bool],
    fixed_one: &[bool],
    k_remaining: usize,
    m: f64,
) -> Vec<f64> {
    let free: Vec<usize> = (0..mu.len()).filter(|&j| !fixed_zero[j] && !fixed_one[j]).collect();
    let c: Vec<f64> = free.iter().map(|&j| mu[j].abs()).collect();
    let a = topsum_huber_prox_magnitudes(&c, rho, k_remaining.min(free.len()), m);
    let signed = |v: f64, mag: f64| if v < 0.0 { -mag } else if v > 0.0 { mag } else { 0.0 };
    let mut out = mu.to_vec();
    for (j, &v) in mu.iter().enumerate() {
        if fixed_one[j] {
            out[j] = signed(v, shrink_above_level(v.abs(), rho, f64::NEG_INFINITY, m));
        }
    }
    for (&j, aj) in free.iter().zip(a) {
        out[j] = signed(mu[j], aj);
    }
    out
}

/// `g(β) = min { ½ Σ βⱼ²/zⱼ : z ∈ [0,1]ᵖ, Σ z ≤ k, |βⱼ| ≤ M zⱼ }`, `+∞` if infeasible.
///
/// KKT: `zⱼ = clamp(c·|βⱼ|, |βⱼ|/M, 1)` with the scale `c` found by bisection
/// so that the budget binds (or `zⱼ = 1` on the support when it does not).
pub fn oracle_g_value(beta: &[f64], k: usize, m: f64) -> f64 {
    let mags: Vec<f64> = beta.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    if mags.iter().any(|&a| a > m * (1.0 + 1e-9)) {
        return f64::INFINITY;
    }
    let lower: Vec<f64> = mags.iter().map(|&a| (a / m).min(1.0)).collect();
    let kf = k as f64;
    if lower.iter().sum::<f64>() > kf * (1.0 + 1e-9) {
        return f64::INFINITY;
    }
    if mags.len() <= k {
        return 0.5 * mags.iter().map(|a| a * a).sum::<f64>();
    }
    let z_at = |c: f64| -> Vec<f64> {
        mags.iter().zip(&lower).map(|(&a, &l)| (c * a).clamp(l, 1.0)).collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while z_at(hi).iter().sum::<f64>() < kf {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..BISECTIONS {
        let c = 0.5 * (lo + hi);
        if c <= lo || c >= hi {
            break;
        }
        if z_at(c).iter().sum::<f64>() < kf {
            lo = c;
        } else {
            hi = c;
        }
    }
    let z = z_at(0.5 * (lo + hi));
    0.5 * mags.iter().zip(&z).map(|(a, zj)| a * a / zj).sum::<f64>()
}

/// Second derivative of the per-sample loss.
fn loss_curvature(loss: LossKind, u: f64, y: f64) -> f64 {
    match loss {
        LossKind::SquaredError => 2.0,
        LossKind::Logistic => {
            let s = 1.0 / (1.0 + (-(y * u)).exp());
            s * (1.0 - s)
        }
        LossKind::SquaredHinge => {
            if 1.0 - y * u > 0.0 {
                2.0
            } else {
                0.0
            }
        }
        LossKind::Poisson => u.exp(),
        LossKind::Gamma => y * (-u).exp(),
        LossKind::Multinomial { .. } => unimplemented!("multinomial oracle"),
    }
}

/// A convex objective over `x ∈ ℝᵈ` restricted by `A x ≤ b`.
struct BarrierProblem<'a> {
    dim: usize,
    /// (value, gradient, hessian); value `+∞` if undefined.
    eval: Box<dyn Fn(&[f64]) -> (f64, DVector<f64>, DMatrix<f64>) + 'a>,
    value: Box<dyn Fn(&[f64]) -> f64 + 'a>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl BarrierProblem<'_> {
    fn slacks(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut s = Vec::with_capacity(self.rows.len());
        for (a, b) in &self.rows {
            let v = b - a.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
            if !(v > 0.0) {
                return None;
            }
            s.push(v);
        }
        Some(s)
    }

    fn merit(&self, x: &[f64], t: f64) -> f64 {
        match self.slacks(x) {
            Some(s) => t * (self.value)(x) - s.iter().map(|v| v.ln()).sum::<f64>(),
            None => f64::INFINITY,
        }
    }

    /// Log-barrier path following from a strictly feasible `x`.
    fn solve(&self, mut x: Vec<f64>, rel_gap: f64) -> Vec<f64> {
        let m = self.rows.len().max(1) as f64;
        let mut t = 1.0;
        loop {
            for _ in 0..200 {
                let s = self.slacks(&x).expect("iterate stays interior");
                let (_, g0, h0) = (self.eval)(&x);
                let mut g = g0 * t;
                let mut h = h0 * t;
                for ((a, _), si) in self.rows.iter().zip(&s) {
                    for &(i, ci) in a {
                        g[i] += ci / si;
                        for &(j, cj) in a {
                            h[(i, j)] += ci * cj / (si * si);
                        }
                    }
                }
                let step = match h.clone().cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => match h.lu().solve(&(-&g)) {
                        Some(v) => v,
                        None => break,
                    },
                };
                let decrement = -g.dot(&step);
                if !(decrement > 1e-13) {
                    break;
                }
                let base = self.merit(&x, t);
                let mut alpha = 1.0;
                let mut accepted = false;
                while alpha > 1e-20 {
                    let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
                    let v = self.merit(&trial, t);
                    if v <= base - 0.25 * alpha * decrement {
                        x = trial;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            let scale = (self.value)(&x).abs().max(1.0);
            if m / t <= rel_gap * scale {
                return x;
            }
            t *= 8.0;
        }
    }
}

/// Adds `coef · Xᵀ diag(w) X` restricted to `cols` into `h` and `coef · Xᵀ r` into `g`.
fn loss_derivatives(
    inst: &ProblemInstance,
    cols: &[usize],
    coef: &[f64],
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let u = inst.x.mul_sparse(cols, coef);
    let value = loss_value_unchecked(inst.loss, &u, &inst.y);
    let mut r = vec![0.0; u.len()];
    gradient_into(inst.loss, &u, &inst.y, &mut r);
    let w: Vec<f64> = u.iter().zip(&inst.y).map(|(&a, &b)| loss_curvature(inst.loss, a, b)).collect();
    let grad = cols.iter().map(|&j| dot(inst.x.column(j), &r)).collect();
    let mut hess = vec![vec![0.0; cols.len()]; cols.len()];
    for (a, &ja) in cols.iter().enumerate() {
        let ca = inst.x.column(ja);
        for (b, &jb) in cols.iter().enumerate().skip(a) {
            let cb = inst.x.column(jb);
            let v: f64 = (0..u.len()).map(|i| ca[i] * cb[i] * w[i]).sum();
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    (value, grad, hess)
}

/// Box-constrained ridge fit on a fixed support; returns (coefficients, objective).
pub fn oracle_support_fit(inst: &ProblemInstance, support: &[usize]) -> (Vec<f64>, f64) {
    let s = support.len();
    let objective = |b: &[f64]| {
        let u = inst.x.mul_sparse(support, b);
        loss_value_unchecked(inst.loss, &u, &inst.y) + inst.lambda2 * b.iter().map(|v| v * v).sum::<f64>()
    };
    if s == 0 {
        return (Vec::new(), objective(&[]));
    }
    let eval = |b: &[f64]| {
        let (v, g, h) = loss_derivatives(inst, support, b);
        let mut gv = DVector::from_vec(g);
        let mut hm = DMatrix::from_fn(s, s, |i, j| h[i][j]);
        for i in 0..s {
            gv[i] += 2.0 * inst.lambda2 * b[i];
            hm[(i, i)] += 2.0 * inst.lambda2;
        }
        (v + inst.lambda2 * b.iter().map(|x| x * x).sum::<f64>(), gv, hm)
    };
    // unconstrained Newton first: if it lands inside the box it is the answer
    let mut b = vec![0.0; s];
    for _ in 0..100 {
        let (_, g, h) = eval(&b);
        let Some(step) = h.cholesky().map(|c| c.solve(&(-&g))) else { break };
        let decrement = -g.dot(&step);
        let base = objective(&b);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = b.iter().zip(step.iter()).map(|(x, d)| x + alpha * d).collect();
            if objective(&trial) <= base - 0.25 * alpha * decrement || alpha < 1e-12 {
                b = trial;
                break;
            }
            alpha *= 0.5;
        }
        if decrement < 1e-16 {
            break;
        }
    }
    if b.iter().all(|v| v.abs() < inst.m) {
        let obj = objective(&b);
        return (b, obj);
    }
    let mut rows = Vec::with_capacity(2 * s);
    for i in 0..s {
        rows.push((vec![(i, 1.0)], inst.m));
        rows.push((vec![(i, -1.0)], inst.m));
    }
    let problem = BarrierProblem { dim: s, eval: Box::new(eval), value: Box::new(objective), rows };
    let b = problem.solve(vec![0.0; problem.dim], 1e-12);
    let obj = objective(&b);
    (b, obj)
}

fn combinations(p: usize, size: usize, mut f: impl FnMut(&[usize])) {
    if size > p {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let mut i = size;
        while i > 0 && idx[i - 1] == i - 1 + p - size {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive solution of the sparse problem restricted to supports that
/// contain `fixed_one` and avoid `fixed_zero`. Ties prefer smaller supports.
pub fn oracle_mip_node(inst: &ProblemInstance, fixed_one: &[usize], fixed_zero: &[usize]) -> (Vec<f64>, f64) {
    let p = inst.p();
    let free: Vec<usize> = (0..p).filter(|j| !fixed_one.contains(j) && !fixed_zero.contains(j)).collect();
    let budget = inst.k.saturating_sub(fixed_one.len());
    let mut best = (vec![0.0; p], f64::INFINITY);
    for size in 0..=budget.min(free.len()) {
        combinations(free.len(), size, |pick| {
            let mut support: Vec<usize> = fixed_one.to_vec();
            support.extend(pick.iter().map(|&i| free[i]));
            let (coef, obj) = oracle_support_fit(inst, &support);
            if !best.1.is_finite() || obj < best.1 - 1e-12 * best.1.abs().max(1.0) {
                let mut beta = vec![0.0; p];
                for (&j, c) in support.iter().zip(coef) {
                    beta[j] = c;
                }
                best = (beta, obj);
            }
        });
    }
    best
}

/// Exhaustive optimum of the sparse problem.
pub fn oracle_mip(inst: &ProblemInstance) -> (Vec<f64>, f64) {
    oracle_mip_node(inst, &[], &[])
}

/// Optimal value of the lifted perspective relaxation
/// `min F(Xβ) + λ2 Σ βⱼ²/zⱼ` over `z ∈ [0,1]ᵖ, Σz ≤ k, |βⱼ| ≤ M zⱼ`,
/// with `zⱼ` pinned to 1 on `fixed_one` and to 0 on `fixed_zero`.
pub fn oracle_relaxation_node(inst: &ProblemInstance, fixed_one: &[usize], fixed_zero: &[usize]) -> f64 {
    let p = inst.p();
    let budget = inst.k.saturating_sub(fixed_one.len());
    let free: Vec<usize> = if budget == 0 {
        Vec::new()
    } else {
        (0..p).filter(|j| !fixed_one.contains(j) && !fixed_zero.contains(j)).collect()
    };
    let ones: Vec<usize> = fixed_one.to_vec();
    // variables: β over (ones ++ free), then z over free
    let cols: Vec<usize> = ones.iter().chain(free.iter()).copied().collect();
    let nb = cols.len();
    let nz = free.len();
    let dim = nb + nz;
    let lam = inst.lambda2;
    let zero_start = ones.len();

    let objective = |x: &[f64]| {
        let u = inst.x.mul_sparse(&cols, &x[..nb]);
        let mut v = loss_value_unchecked(inst.loss, &u, &inst.y);
        for i in 0..zero_start {
            v += lam * x[i] * x[i];
        }
        for f in 0..nz {
            let b = x[zero_start + f];
            let z = x[nb + f];
            v += lam * b * b / z;
        }
        v
    };
    let eval = |x: &[f64]| {
        let (v0, g0, h0) = loss_derivatives(inst, &cols, &x[..nb]);
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..nb {
            g[i] = g0[i];
            for j in 0..nb {
                h[(i, j)] = h0[i][j];
            }
        }
        let mut v = v0;
        for i in 0..zero_start {
            v += lam * x[i] * x[i];
            g[i] += 2.0 * lam * x[i];
            h[(i, i)] += 2.0 * lam;
        }
        for f in 0..nz {
            let (bi, zi) = (zero_start + f, nb + f);
            let (b, z) = (x[bi], x[zi]);
            v += lam * b * b / z;
            g[bi] += 2.0 * lam * b / z;
            g[zi] -= lam * b * b / (z * z);
            h[(bi, bi)] += 2.0 * lam / z;
            h[(bi, zi)] -= 2.0 * lam * b / (z * z);
            h[(zi, bi)] -= 2.0 * lam * b / (z * z);
            h[(zi, zi)] += 2.0 * lam * b * b / (z * z * z);
        }
        (v, g, h)
    };
    let mut rows = Vec::new();
    for i in 0..zero_start {
        rows.push((vec![(i, 1.0)], inst.m));
        rows.push((vec![(i, -1.0)], inst.m));
    }
    for f in 0..nz {
        let (bi, zi) = (zero_start + f, nb + f);
        rows.push((vec![(bi, 1.0), (zi, -inst.m)], 0.0));
        rows.push((vec![(bi, -1.0), (zi, -inst.m)], 0.0));
        rows.push((vec![(zi, 1.0)], 1.0));
    }
    if nz > 0 {
        rows.push(((nb..dim).map(|i| (i, 1.0)).collect(), budget as f64));
    }
    if dim == 0 {
        return objective(&[]);
    }
    let mut x0 = vec![0.0; dim];
    let z0 = 0.5 * (budget as f64 / nz.max(1) as f64).min(1.0);
    for zi in nb..dim {
        x0[zi] = z0;
    }
    let problem = BarrierProblem { dim, eval: Box::new(eval), value: Box::new(objective), rows };
    let x = problem.solve(x0, 1e-11);
    objective(&x)
}

/// Optimal value of the perspective relaxation at the root.
pub fn oracle_relaxation(inst: &ProblemInstance) -> f64 {
    oracle_relaxation_node(inst, &[], &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn one_dim() -> ProblemInstance {
        ProblemInstance::new(DenseMatrix::from_rows(&[vec![1.0]]).unwrap(), vec![1.0], LossKind::SquaredError, 1, 2.0, 1.0)
            .unwrap()
    }

    #[test]
    fn prox_oracle_examples() {
        let a = oracle_prox_gstar(&[1.0, 0.9], 1.0, 1, 10.0);
        assert!((a[0] - 19.0 / 30.0).abs() < 1e-6 && (a[1] - 19.0 / 30.0).abs() < 1e-6, "{a:?}");
        assert_eq!(oracle_prox_gstar(&[0.0, 0.0], 1.0, 1, 1.0), vec![0.0, 0.0]);
        // k = p decouples into elementwise Huber prox
        let a = oracle_prox_gstar(&[3.0, -1.0], 1.0, 2, 10.0);
        assert!((a[0] - 1.5).abs() < 1e-12 && (a[1] + 0.5).abs() < 1e-12, "{a:?}");
        let a = oracle_prox_gstar(&[1.0, 2.0, 0.5], 1.0, 1, 10.0);
        assert!(a.iter().zip([1.0, 1.0, 0.5]).all(|(x, y)| (x - y).abs() < 1e-9), "{a:?}");
    }

    #[test]
    fn g_oracle_examples() {
        assert!((oracle_g_value(&[1.0, 1.0, 1.0], 2, 2.0) - 2.25).abs() < 1e-12);
        assert!((oracle_g_value(&[3.0, 1.0, 0.0, 0.0], 2, 10.0) - 5.0).abs() < 1e-12);
        assert_eq!(oracle_g_value(&[3.0, 0.0], 1, 2.0), f64::INFINITY);
        assert_eq!(oracle_g_value(&[0.0, 0.0], 1, 2.0), 0.0);
    }

    #[test]
    fn mip_oracle_examples() {
        let (b, obj) = oracle_mip(&one_dim());
        assert!((b[0] - 0.5).abs() < 1e-9 && (obj - 0.5).abs() < 1e-12);
        let inst = ProblemInstance::new(DenseMatrix::identity(2), vec![0.0, 0.0], LossKind::SquaredError, 1, 2.0, 1.0)
            .unwrap();
        let (b, obj) = oracle_mip(&inst);
        assert_eq!(obj, 0.0);
        assert_eq!(b, vec![0.0, 0.0]);
    }

    #[test]
    fn mip_oracle_matches_ridge_normal_equations() {
        // k = p, huge M: ridge solution (XᵀX + λ I) β = Xᵀ y
        let rows = vec![vec![1.0, 0.5, -0.2], vec![0.3, -1.0, 0.8], vec![0.0, 0.4, 1.1], vec![2.0, 0.1, 0.3]];
        let y = vec![1.0, -0.5, 0.7, 2.2];
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let inst = ProblemInstance::new(x.clone(), y.clone(), LossKind::SquaredError, 3, 1e6, 0.7).unwrap();
        let xm = DMatrix::from_fn(4, 3, |i, j| rows[i][j]);
        let a = xm.transpose() * &xm + DMatrix::identity(3, 3) * 0.7;
        let rhs = xm.transpose() * DVector::from_vec(y);
        let want = a.lu().solve(&rhs).unwrap();
        let (b, _) = oracle_mip(&inst);
        for j in 0..3 {
            assert!((b[j] - want[j]).abs() < 1e-9, "{b:?} vs {want}");
        }
    }

    #[test]
    fn relaxation_oracle_examples() {
        assert!((oracle_relaxation(&one_dim()) - 0.5).abs() < 1e-8);
        let inst = ProblemInstance::new(DenseMatrix::identity(2), vec![1.0, 1.0], LossKind::SquaredError, 2, 10.0, 1.0)
            .unwrap();
        assert!((oracle_relaxation(&inst) - 1.0).abs() < 1e-8);
        let inst = ProblemInstance::new(DenseMatrix::identity(2), vec![0.0, 0.0], LossKind::SquaredError, 1, 10.0, 1.0)
            .unwrap();
        assert!(oracle_relaxation(&inst).abs() < 1e-8);
    }

    #[test]
    fn enumerates_all_combinations() {
        let mut seen = Vec::new();
        combinations(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 6);
        let mut n = 0;
        combinations(3, 0, |_| n += 1);
        assert_eq!(n, 1);
        combinations(3, 3, |c| assert_eq!(c, &[0, 1, 2]));
    }
}
