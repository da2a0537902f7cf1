//! Restarted FISTA on the composite relaxation `F(Xβ) + 2λ2·g(β)`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gradient_into, lipschitz_constant, loss_value_unchecked, ProblemInstance};
use crate::perspective::{g_value_restricted, BoundWorkspace};
use crate::prox::ProxWorkspace;
use crate::support::{CoordStatus, Restriction};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FistaOptions {
    pub max_iterations: usize,
    /// Stop once `primal − dual ≤ gap_tolerance · max(1, |primal|)`.
    pub gap_tolerance: f64,
    pub time_limit: Option<Duration>,
    /// Stop as soon as the primal value drops below this (the node cannot be pruned).
    pub early_primal_cutoff: Option<f64>,
    /// Stop as soon as the dual bound reaches this (the node can be pruned).
    pub early_dual_cutoff: Option<f64>,
    pub bound_check_interval: usize,
    /// Function-value restart of the momentum counter.
    pub restart: bool,
    pub record_trace: bool,
    /// Precomputed Lipschitz constant; estimated by power iteration when absent.
    pub lipschitz: Option<f64>,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            gap_tolerance: 1e-6,
            time_limit: None,
            early_primal_cutoff: None,
            early_dual_cutoff: None,
            bound_check_interval: 10,
            restart: true,
            record_trace: false,
            lipschitz: None,
        }
    }
}

impl FistaOptions {
    fn validate(&self) -> Result<()> {
        if !(self.gap_tolerance > 0.0) {
            return Err(Error::invalid("gap tolerance must be positive"));
        }
        if self.bound_check_interval == 0 {
            return Err(Error::invalid("bound check interval must be at least 1"));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("Lipschitz constant must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    IterationLimit,
    TimeLimit,
    PrimalBelowIncumbent,
    DualAboveIncumbent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Composite value of the current iterate.
    pub primal: f64,
    /// Best dual bound so far.
    pub dual: f64,
    pub gap: f64,
    pub restart: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub beta: Vec<f64>,
    pub primal_value: f64,
    pub dual_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub termination: Termination,
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

/// Minimizes the (node-restricted) relaxation.
///
/// The returned `beta` is the best composite iterate seen, `dual_bound` the
/// best safe bound, and `gap` their difference.
pub fn solve_relaxation(
    inst: &ProblemInstance,
    node: Option<&Restriction>,
    warm_start: Option<&[f64]>,
    opts: &FistaOptions,
) -> Result<RelaxationReport> {
    if !inst.loss.is_solver_grade() {
        return Err(Error::Unsupported(format!(
            "{} loss is bound-grade; the relaxation solver needs a Lipschitz gradient",
            inst.loss.name()
        )));
    }
    opts.validate()?;
    let p = inst.p();
    let owned;
    let r = match node {
        Some(r) => {
            if r.p() != p {
                return Err(Error::invalid("node restriction dimension does not match the instance"));
            }
            r
        }
        None => {
            owned = Restriction::unrestricted(p, inst.k);
            &owned
        }
    };
    let lipschitz = match opts.lipschitz {
        Some(l) => l,
        None => lipschitz_constant(inst)?,
    };
    Solver::new(inst, r, lipschitz, opts).run(warm_start)
}

struct Solver<'a> {
    inst: &'a ProblemInstance,
    r: &'a Restriction,
    opts: &'a FistaOptions,
    lipschitz: f64,
    rho: f64,
    prox: ProxWorkspace,
    bounds: BoundWorkspace,
}

impl<'a> Solver<'a> {
    fn new(inst: &'a ProblemInstance, r: &'a Restriction, lipschitz: f64, opts: &'a FistaOptions) -> Self {
        Self {
            inst,
            r,
            opts,
            lipschitz,
            rho: lipschitz / (2.0 * inst.lambda2),
            prox: ProxWorkspace::new(),
            bounds: BoundWorkspace::default(),
        }
    }

    fn composite(&self, beta: &[f64], u: &[f64]) -> f64 {
        loss_value_unchecked(self.inst.loss, u, &self.inst.y)
            + 2.0 * self.inst.lambda2 * g_value_restricted(beta, self.r, self.inst.m)
    }

    fn run(mut self, warm_start: Option<&[f64]>) -> Result<RelaxationReport> {
        let inst = self.inst;
        let (n, p) = (inst.n(), inst.p());
        let start = Instant::now();
        let mut beta = match warm_start {
            Some(w) => {
                if w.len() != p {
                    return Err(Error::invalid(format!("warm start has length {}, expected {p}", w.len())));
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("warm start must be finite"));
                }
                w.to_vec()
            }
            None => vec![0.0; p],
        };
        for (b, s) in beta.iter_mut().zip(self.r.statuses()) {
            if *s == CoordStatus::Zero {
                *b = 0.0;
            }
        }
        let mut u = inst.x.mul_vec(&beta);
        let mut beta_prev = beta.clone();
        let mut u_prev = u.clone();
        let mut gamma = vec![0.0; p];
        let mut u_gamma = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut grad = vec![0.0; p];

        let mut tracked = self.composite(&beta, &u);
        let mut best_primal = tracked;
        let mut best_beta = beta.clone();
        let mut best_dual = f64::NEG_INFINITY;
        let mut phi = 1.0f64;
        let mut restarts = 0;
        let mut trace = Vec::new();
        let inv_l = 1.0 / self.lipschitz;

        let mut iteration = 0;
        let termination = loop {
            if iteration >= self.opts.max_iterations {
                break Termination::IterationLimit;
            }
            iteration += 1;
            let c = phi / (phi + 3.0);
            for j in 0..p {
                gamma[j] = beta[j] + c * (beta[j] - beta_prev[j]);
            }
            for i in 0..n {
                u_gamma[i] = u[i] + c * (u[i] - u_prev[i]);
            }
            gradient_into(inst.loss, &u_gamma, &inst.y, &mut resid);
            inst.x.tr_mul_vec_into(&resid, &mut grad);
            for j in 0..p {
                gamma[j] -= inv_l * grad[j];
            }
            std::mem::swap(&mut beta_prev, &mut beta);
            std::mem::swap(&mut u_prev, &mut u);
            self.prox.prox_g_restricted_into(&gamma, self.rho, self.r, inst.m, &mut beta)?;
            inst.x.mul_vec_sparse_aware_into(&beta, &mut u);

            let fit = loss_value_unchecked(inst.loss, &u, &inst.y);
            if !fit.is_finite() {
                return Err(Error::Numerical { iteration, detail: format!("loss became {fit}; the step 1/L is too long") });
            }
            let value = fit + 2.0 * inst.lambda2 * g_value_restricted(&beta, self.r, inst.m);
            let restarted = value >= tracked;
            if self.opts.restart && restarted {
                phi = 1.0;
                restarts += 1;
            } else {
                phi += 1.0;
            }
            tracked = value;
            if value < best_primal {
                best_primal = value;
                best_beta.copy_from_slice(&beta);
            }

            let check = iteration == 1 || iteration % self.opts.bound_check_interval == 0 || self.opts.record_trace;
            if check {
                let bound = self.bounds.bound_at_fit(inst, &u, self.r);
                if bound.is_nan() {
                    return Err(Error::Numerical { iteration, detail: "dual bound became NaN".into() });
                }
                best_dual = best_dual.max(bound);
            }
            if self.opts.record_trace {
                trace.push(TraceRecord {
                    iteration,
                    primal: value,
                    dual: best_dual,
                    gap: best_primal - best_dual,
                    restart: self.opts.restart && restarted,
                });
            }
            if check {
                if best_primal - best_dual <= self.opts.gap_tolerance * best_primal.abs().max(1.0) {
                    break Termination::Converged;
                }
                if self.opts.early_dual_cutoff.is_some_and(|cut| best_dual >= cut) {
                    break Termination::DualAboveIncumbent;
                }
            }
            if self.opts.early_primal_cutoff.is_some_and(|cut| best_primal < cut) {
                break Termination::PrimalBelowIncumbent;
            }
            if self.opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
                break Termination::TimeLimit;
            }
        };

        // the primal cutoff can fire between bound checks; refresh so the report carries a current bound
        if termination != Termination::Converged && termination != Termination::DualAboveIncumbent {
            let bound = self.bounds.bound_at_fit(inst, &u, self.r);
            if !bound.is_nan() {
                best_dual = best_dual.max(bound);
            }
        }
        Ok(RelaxationReport {
            beta: best_beta,
            primal_value: best_primal,
            dual_bound: best_dual,
            gap: best_primal - best_dual,
            iterations: iteration,
            restarts,
            termination,
            lipschitz: self.lipschitz,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::model::LossKind;
    use crate::oracle;
    use crate::perspective::{g_value, safe_lower_bound, EnvelopeParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(rows: &[Vec<f64>], y: Vec<f64>, loss: LossKind, k: usize, m: f64, l2: f64) -> ProblemInstance {
        ProblemInstance::new(DenseMatrix::from_rows(rows).unwrap(), y, loss, k, m, l2).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, loss: LossKind) -> ProblemInstance {
        let n = rng.random_range(3..12);
        let p = rng.random_range(1..9);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = match loss {
            LossKind::SquaredError => (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            _ => (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
        };
        let k = rng.random_range(1..=p);
        instance(&rows, y, loss, k, rng.random_range(0.3..2.0), rng.random_range(0.1..2.0))
    }

    #[test]
    fn one_dimensional_example() {
        let inst = instance(&[vec![1.0]], vec![1.0], LossKind::SquaredError, 1, 2.0, 1.0);
        let rep = solve_relaxation(&inst, None, None, &FistaOptions::default()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!((rep.primal_value - 0.5).abs() < 1e-6 && rep.gap <= 1e-6, "{rep:?}");
    }

    #[test]
    fn identity_example() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let inst = instance(&rows, vec![1.0, 1.0], LossKind::SquaredError, 2, 10.0, 1.0);
        let rep = solve_relaxation(&inst, None, None, &FistaOptions::default()).unwrap();
        assert!((rep.primal_value - 1.0).abs() < 1e-6);
        assert!((rep.beta[0] - 0.5).abs() < 1e-3 && (rep.beta[1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_labels_stop_at_first_iteration() {
        let rows = vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 3.0]];
        let inst = instance(&rows, vec![0.0; 3], LossKind::SquaredError, 1, 2.0, 1.0);
        let rep = solve_relaxation(&inst, None, None, &FistaOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.beta, vec![0.0, 0.0]);
        assert_eq!(rep.gap, 0.0);
    }

    #[test]
    fn rejects_bound_grade_losses() {
        let inst = instance(&[vec![1.0]], vec![1.0], LossKind::Poisson, 1, 2.0, 1.0);
        assert!(matches!(solve_relaxation(&inst, None, None, &FistaOptions::default()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rejects_bad_options() {
        let inst = instance(&[vec![1.0]], vec![1.0], LossKind::SquaredError, 1, 2.0, 1.0);
        let opts = FistaOptions { bound_check_interval: 0, ..Default::default() };
        assert!(solve_relaxation(&inst, None, None, &opts).is_err());
        let opts = FistaOptions { gap_tolerance: 0.0, ..Default::default() };
        assert!(solve_relaxation(&inst, None, None, &opts).is_err());
        assert!(solve_relaxation(&inst, None, Some(&[1.0, 2.0]), &FistaOptions::default()).is_err());
    }

    #[test]
    fn diverging_step_is_reported() {
        let rows = vec![vec![3.0, 1.0], vec![1.0, 3.0]];
        let inst = instance(&rows, vec![1e3, -1e3], LossKind::SquaredError, 2, 1e300, 1e-3);
        let opts = FistaOptions { lipschitz: Some(1e-3), restart: false, ..Default::default() };
        let err = solve_relaxation(&inst, None, None, &opts).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }), "{err:?}");
    }

    #[test]
    fn matches_relaxation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..40 {
            let loss = [LossKind::SquaredError, LossKind::Logistic, LossKind::SquaredHinge][round % 3];
            let inst = random_instance(&mut rng, loss);
            let opts = FistaOptions { gap_tolerance: 1e-10, ..Default::default() };
            let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
            let want = oracle::oracle_relaxation(&inst);
            assert!((rep.primal_value - want).abs() <= 1e-5 * want.abs().max(1.0), "{loss:?}: {} vs {want}", rep.primal_value);
            assert!(rep.dual_bound <= rep.primal_value + 1e-9);
        }
    }

    #[test]
    fn node_relaxation_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 30 {
            let inst = random_instance(&mut rng, LossKind::SquaredError);
            let p = inst.p();
            if p < 3 || inst.k < 2 {
                continue;
            }
            let r = Restriction::new(p, inst.k, &[0], &[p - 1]).unwrap();
            let opts = FistaOptions { gap_tolerance: 1e-10, ..Default::default() };
            let rep = solve_relaxation(&inst, Some(&r), None, &opts).unwrap();
            let want = oracle::oracle_relaxation_node(&inst, &[0], &[p - 1]);
            assert!((rep.primal_value - want).abs() <= 1e-5 * want.abs().max(1.0), "{} vs {want}", rep.primal_value);
            assert_eq!(rep.beta[p - 1], 0.0);
            checked += 1;
        }
    }

    #[test]
    fn trajectory_bounds_are_valid_and_iterates_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, LossKind::SquaredError);
            let (_, mip) = oracle::oracle_mip(&inst);
            let opts = FistaOptions { gap_tolerance: 1e-9, record_trace: true, ..Default::default() };
            let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
            for rec in &rep.trace {
                assert!(rec.dual <= mip + 1e-8);
                assert!(rec.primal.is_finite(), "iterate left dom g at {}", rec.iteration);
            }
            let params = EnvelopeParams::new(inst.k, inst.m);
            assert!(g_value(&rep.beta, &params).is_finite());
            assert!(safe_lower_bound(&inst, &rep.beta, None).unwrap() <= mip + 1e-8);
        }
    }

    #[test]
    fn cutoffs_fire() {
        let rows = vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![0.3, 0.3]];
        let inst = instance(&rows, vec![1.0, -1.0, 0.5], LossKind::SquaredError, 1, 2.0, 1.0);
        let opts = FistaOptions { early_primal_cutoff: Some(1e9), ..Default::default() };
        let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
        assert_eq!(rep.termination, Termination::PrimalBelowIncumbent);
        assert!(rep.dual_bound.is_finite());
        let opts = FistaOptions { early_dual_cutoff: Some(-1e9), ..Default::default() };
        let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
        assert_eq!(rep.termination, Termination::DualAboveIncumbent);
        let opts = FistaOptions { max_iterations: 3, gap_tolerance: 1e-300, ..Default::default() };
        let rep = solve_relaxation(&inst, None, None, &opts).unwrap();
        assert_eq!(rep.termination, Termination::IterationLimit);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn warm_start_outside_domain_is_accepted() {
        let inst = instance(&[vec![1.0, 0.5]], vec![1.0], LossKind::SquaredError, 1, 2.0, 1.0);
        let rep = solve_relaxation(&inst, None, Some(&[5.0, 5.0]), &FistaOptions::default()).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!(rep.primal_value.is_finite());
    }
}
