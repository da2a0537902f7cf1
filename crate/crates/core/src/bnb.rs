//! Best-first branch-and-bound on top of the relaxation solver.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::rc::Rc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fista::{solve_relaxation, FistaOptions};
use crate::linalg::dot;
use crate::model::{gradient_into, lipschitz_constant, loss_value_unchecked, LossKind, ProblemInstance};
use crate::support::Restriction;

/// Absolute part of the pruning slack.
pub const PRUNE_ABS_TOL: f64 = 1e-8;
/// Relative part of the pruning slack.
pub const PRUNE_REL_TOL: f64 = 1e-9;

const REFIT_MAX_ITER: usize = 2000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Target for `(incumbent − lower bound) / max(1, |incumbent|)`.
    pub gap_tolerance: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub beam_width: usize,
    /// Refit the remaining support for every branching candidate instead of
    /// just zeroing the coordinate.
    pub exact_branching: bool,
    /// Beam search runs at every node up to this depth...
    pub beam_full_depth: usize,
    /// ...and afterwards at depths that are multiples of this stride.
    pub beam_stride: usize,
    pub threads: usize,
    /// Options for the node relaxations. Cutoffs, time limit and Lipschitz
    /// constant are filled in per node.
    pub relaxation: FistaOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-6,
            time_limit: Some(Duration::from_secs(1800)),
            node_limit: None,
            beam_width: 5,
            exact_branching: false,
            beam_full_depth: 3,
            beam_stride: 5,
            threads: 1,
            relaxation: FistaOptions { gap_tolerance: 1e-7, ..FistaOptions::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    /// The tree was exhausted but the residual gap exceeds the tolerance.
    GapLimit,
    TimeLimit,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub status: Status,
    pub incumbent_beta: Vec<f64>,
    pub incumbent_objective: f64,
    pub support: Vec<usize>,
    pub global_lower_bound: f64,
    pub gap_absolute: f64,
    pub gap_relative: f64,
    pub root_lower_bound: f64,
    pub nodes_explored: usize,
    pub nodes_pruned: usize,
    pub max_depth: usize,
    pub wall_time_seconds: f64,
    pub gap_tolerance: f64,
    pub beam_width: usize,
    pub threads: usize,
    pub version: String,
}

/// A branch-and-bound node.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub fixed_one: Vec<usize>,
    pub fixed_zero: Vec<usize>,
    pub depth: usize,
    pub parent_bound: f64,
    /// Sparse warm start shared by siblings.
    pub warm_start: Option<Rc<Vec<(usize, f64)>>>,
}

impl NodeState {
    pub fn root() -> Self {
        Self { fixed_one: Vec::new(), fixed_zero: Vec::new(), depth: 0, parent_bound: f64::NEG_INFINITY, warm_start: None }
    }

    pub fn restriction(&self, p: usize, k: usize) -> Result<Restriction> {
        Restriction::new(p, k, &self.fixed_one, &self.fixed_zero)
    }

    fn warm_vector(&self, p: usize) -> Option<Vec<f64>> {
        self.warm_start.as_ref().map(|w| {
            let mut v = vec![0.0; p];
            for &(j, b) in w.iter() {
                v[j] = b;
            }
            for &j in &self.fixed_zero {
                v[j] = 0.0;
            }
            v
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Branch,
    Prune,
    /// Relaxation solution is itself feasible and matches the bound.
    Close,
    /// Pruned on the inherited bound without solving.
    PruneInherited,
    /// No free coordinate left to branch on.
    Terminal,
}

/// One line of the node log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLogRecord {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub fixed_one_digest: String,
    pub fixed_zero_digest: String,
    pub bound: f64,
    pub primal: Option<f64>,
    pub incumbent: f64,
    pub decision: Decision,
    pub branch_variable: Option<usize>,
}

fn set_digest(indices: &[usize]) -> String {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    // FNV-1a over the sorted index list
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for j in sorted {
        for b in (j as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Fits `F(X_S b) + λ2‖b‖²` over `|b| ≤ M` on a fixed support.
fn refit(inst: &ProblemInstance, support: &[usize], warm: Option<&[f64]>) -> (Vec<f64>, f64) {
    let s = support.len();
    let objective = |b: &[f64]| {
        let u = inst.x.mul_sparse(support, b);
        loss_value_unchecked(inst.loss, &u, &inst.y) + inst.lambda2 * b.iter().map(|v| v * v).sum::<f64>()
    };
    if s == 0 {
        return (Vec::new(), objective(&[]));
    }
    let cols: Vec<&[f64]> = support.iter().map(|&j| inst.x.column(j)).collect();
    let gram = DMatrix::from_fn(s, s, |a, b| dot(cols[a], cols[b]));
    let lmax = gram.clone().symmetric_eigen().eigenvalues.max().max(0.0);
    let curvature = inst.loss.curvature().unwrap_or(2.0);
    let lip = curvature * lmax * 1.01 + 2.0 * inst.lambda2;
    let m = inst.m;
    let clamp = |v: f64| v.clamp(-m, m);

    let mut b: Vec<f64> = match warm {
        Some(w) => w.iter().map(|&v| clamp(v)).collect(),
        None => vec![0.0; s],
    };
    let gradient: Box<dyn Fn(&[f64], &mut [f64])> = if inst.loss == LossKind::SquaredError {
        let c = DVector::from_iterator(s, cols.iter().map(|col| dot(col, &inst.y)));
        let reg = &gram + DMatrix::identity(s, s) * inst.lambda2;
        if let Some(sol) = reg.clone().lu().solve(&c) {
            if sol.iter().all(|v| v.abs() <= m) {
                let coef: Vec<f64> = sol.iter().copied().collect();
                let obj = objective(&coef);
                return (coef, obj);
            }
            b = sol.iter().map(|&v| clamp(v)).collect();
        }
        Box::new(move |b: &[f64], g: &mut [f64]| {
            let bv = DVector::from_column_slice(b);
            let gv = (&reg * bv - &c) * 2.0;
            g.copy_from_slice(gv.as_slice());
        })
    } else {
        let loss = inst.loss;
        Box::new(move |b: &[f64], g: &mut [f64]| {
            let u = inst.x.mul_sparse(support, b);
            let mut r = vec![0.0; u.len()];
            gradient_into(loss, &u, &inst.y, &mut r);
            for (a, gi) in g.iter_mut().enumerate() {
                *gi = dot(cols[a], &r) + 2.0 * inst.lambda2 * b[a];
            }
        })
    };

    // accelerated projected gradient with gradient-based restart
    let mut prev = b.clone();
    let mut y = b.clone();
    let mut g = vec![0.0; s];
    let mut t = 1.0f64;
    for _ in 0..REFIT_MAX_ITER {
        gradient(&y, &mut g);
        let next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| clamp(yi - gi / lip)).collect();
        let moved: f64 = next.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let restart: f64 = (0..s).map(|i| (y[i] - next[i]) * (next[i] - b[i])).sum();
        prev.copy_from_slice(&b);
        b = next;
        if restart > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let c = (t - 1.0) / t_next;
        t = t_next;
        for i in 0..s {
            y[i] = clamp(b[i] + c * (b[i] - prev[i]));
        }
        if moved <= 1e-13 * (1.0 + b.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            break;
        }
    }
    let obj = objective(&b);
    (b, obj)
}

fn scatter(p: usize, support: &[usize], coef: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; p];
    for (&j, &c) in support.iter().zip(coef) {
        beta[j] = c;
    }
    beta
}

struct BeamState {
    support: Vec<usize>,
    coef: Vec<f64>,
    objective: f64,
}

/// Greedy beam search over supports. Returns a feasible `(β, objective)` whose
/// support contains the fixed-one set and avoids the fixed-zero set.
pub fn beam_search_incumbent(inst: &ProblemInstance, node: Option<&Restriction>, beam_width: usize) -> (Vec<f64>, f64) {
    let owned;
    let r = match node {
        Some(r) => r,
        None => {
            owned = Restriction::unrestricted(inst.p(), inst.k);
            &owned
        }
    };
    let p = inst.p();
    let width = beam_width.max(1);
    let ones = r.fixed_one().to_vec();
    let (coef, objective) = refit(inst, &ones, None);
    let mut best = BeamState { support: ones.clone(), coef, objective };
    let mut beam = vec![BeamState { support: best.support.clone(), coef: best.coef.clone(), objective }];
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut resid = vec![0.0; inst.n()];
    let steps = r.k_remaining().min(r.free().len());
    for _ in 0..steps {
        let mut candidates: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for st in &beam {
            let u = inst.x.mul_sparse(&st.support, &st.coef);
            gradient_into(inst.loss, &u, &inst.y, &mut resid);
            let grad = inst.x.tr_mul_vec(&resid);
            let mut scored: Vec<(f64, usize)> = r
                .free()
                .iter()
                .filter(|j| st.support.binary_search(j).is_err())
                .map(|&j| (grad[j].abs(), j))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, j) in scored.iter().take(width) {
                let pos = st.support.binary_search(&j).unwrap_err();
                let mut support = st.support.clone();
                support.insert(pos, j);
                if !seen.insert(support.clone()) {
                    continue;
                }
                let mut warm = st.coef.clone();
                warm.insert(pos, 0.0);
                candidates.push((support, warm));
            }
        }
        if candidates.is_empty() {
            break;
        }
        let mut next: Vec<BeamState> = candidates
            .into_iter()
            .map(|(support, warm)| {
                let (coef, objective) = refit(inst, &support, Some(&warm));
                BeamState { support, coef, objective }
            })
            .collect();
        next.sort_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| a.support.cmp(&b.support)));
        next.truncate(width);
        if next[0].objective < best.objective {
            best = BeamState { support: next[0].support.clone(), coef: next[0].coef.clone(), objective: next[0].objective };
        }
        beam = next;
    }
    (scatter(p, &best.support, &best.coef), best.objective)
}

/// Picks the free coordinate whose removal from `beta` raises `F + λ2‖·‖²` the
/// most. `None` when `beta` has no nonzero free coordinate.
pub fn select_branching_variable(
    inst: &ProblemInstance,
    node: &Restriction,
    beta: &[f64],
    exact_refit: bool,
) -> Option<usize> {
    let candidates: Vec<usize> = node.free().iter().copied().filter(|&j| beta[j] != 0.0).collect();
    if candidates.is_empty() {
        return None;
    }
    if candidates.len() == 1 {
        return Some(candidates[0]);
    }
    let score: Vec<f64> = if exact_refit {
        let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        candidates
            .iter()
            .map(|&j| {
                let rest: Vec<usize> = support.iter().copied().filter(|&i| i != j).collect();
                let warm: Vec<f64> = rest.iter().map(|&i| beta[i]).collect();
                refit(inst, &rest, Some(&warm)).1
            })
            .collect()
    } else {
        let u = inst.x.mul_vec(beta);
        let mut shifted = vec![0.0; u.len()];
        candidates
            .iter()
            .map(|&j| {
                let col = inst.x.column(j);
                for i in 0..u.len() {
                    shifted[i] = u[i] - beta[j] * col[i];
                }
                loss_value_unchecked(inst.loss, &shifted, &inst.y) - inst.lambda2 * beta[j] * beta[j]
            })
            .collect()
    };
    let mut best = 0;
    for i in 1..candidates.len() {
        if score[i] > score[best] {
            best = i;
        }
    }
    Some(candidates[best])
}

struct Open {
    node: NodeState,
    id: usize,
    parent: Option<usize>,
    seq: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    /// Max-heap order: smallest bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .parent_bound
            .total_cmp(&self.node.parent_bound)
            .then(self.node.depth.cmp(&other.node.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn is_feasible(inst: &ProblemInstance, beta: &[f64]) -> bool {
    beta.iter().filter(|b| **b != 0.0).count() <= inst.k && beta.iter().all(|b| b.abs() <= inst.m)
}

struct Search<'a> {
    opts: &'a CertifyOptions,
    incumbent: Vec<f64>,
    incumbent_objective: f64,
}

impl Search<'_> {
    fn offer(&mut self, beta: Vec<f64>, objective: f64) {
        if objective < self.incumbent_objective {
            self.incumbent = beta;
            self.incumbent_objective = objective;
        }
    }

    fn prune_level(&self) -> f64 {
        let inc = self.incumbent_objective;
        let slack = (PRUNE_ABS_TOL + PRUNE_REL_TOL * inc.abs()).max(self.opts.gap_tolerance * inc.abs().max(1.0));
        inc - slack
    }

    fn gap_met(&self, lower: f64) -> bool {
        let inc = self.incumbent_objective;
        inc - lower <= self.opts.gap_tolerance * inc.abs().max(1.0)
    }
}

/// Certifies the sparse problem to the requested relative gap.
pub fn certify(inst: &ProblemInstance, opts: &CertifyOptions) -> Result<Certificate> {
    certify_with_log(inst, opts, &mut |_| {})
}

/// As [`certify`], reporting every processed node to `log`.
pub fn certify_with_log(
    inst: &ProblemInstance,
    opts: &CertifyOptions,
    log: &mut (dyn FnMut(&NodeLogRecord) + Send),
) -> Result<Certificate> {
    if !(opts.gap_tolerance >= 0.0) {
        return Err(Error::invalid("gap tolerance must be non-negative"));
    }
    if opts.threads == 0 {
        return Err(Error::invalid("thread count must be at least 1"));
    }
    if opts.beam_width == 0 || opts.beam_stride == 0 {
        return Err(Error::invalid("beam width and stride must be at least 1"));
    }
    inst.validate()?;
    if !inst.loss.is_solver_grade() {
        return Err(Error::Unsupported(format!("{} loss cannot be certified", inst.loss.name())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_search(inst, opts, log))
}

fn run_search(inst: &ProblemInstance, opts: &CertifyOptions, log: &mut (dyn FnMut(&NodeLogRecord) + Send)) -> Result<Certificate> {
    let start = Instant::now();
    let p = inst.p();
    let lipschitz = match opts.relaxation.lipschitz {
        Some(l) => l,
        None => lipschitz_constant(inst)?,
    };
    let (beta0, obj0) = beam_search_incumbent(inst, None, opts.beam_width);
    let mut search = Search { opts, incumbent: beta0, incumbent_objective: obj0 };

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Open { node: NodeState::root(), id: 0, parent: None, seq });
    let mut next_id = 1;
    let mut closed_min = f64::INFINITY;
    let mut explored = 0;
    let mut pruned = 0;
    let mut max_depth = 0;
    let mut root_bound = f64::NEG_INFINITY;

    let status = loop {
        let open_min = heap.peek().map_or(f64::INFINITY, |o| o.node.parent_bound);
        let lower = open_min.min(closed_min).min(search.incumbent_objective);
        if search.gap_met(lower) {
            break Status::Optimal;
        }
        if heap.is_empty() {
            break Status::GapLimit;
        }
        let elapsed = start.elapsed();
        if opts.time_limit.is_some_and(|t| elapsed >= t) {
            break Status::TimeLimit;
        }
        if opts.node_limit.is_some_and(|n| explored >= n) {
            break Status::NodeLimit;
        }
        let Open { node, id, parent, .. } = heap.pop().expect("heap is non-empty");
        max_depth = max_depth.max(node.depth);
        let r = node.restriction(p, inst.k)?;
        let mut record = NodeLogRecord {
            node: id,
            parent,
            depth: node.depth,
            fixed_one_digest: set_digest(&node.fixed_one),
            fixed_zero_digest: set_digest(&node.fixed_zero),
            bound: node.parent_bound,
            primal: None,
            incumbent: search.incumbent_objective,
            decision: Decision::PruneInherited,
            branch_variable: None,
        };
        if node.parent_bound >= search.prune_level() {
            closed_min = closed_min.min(node.parent_bound);
            pruned += 1;
            log(&record);
            continue;
        }
        explored += 1;

        let beam_here = node.depth <= opts.beam_full_depth || node.depth % opts.beam_stride == 0;
        if beam_here && node.depth > 0 {
            let (b, o) = beam_search_incumbent(inst, Some(&r), opts.beam_width);
            search.offer(b, o);
        }
        let terminal = r.k_remaining() == 0 || r.free().is_empty();
        let level = search.prune_level();
        let mut fopts = opts.relaxation.clone();
        fopts.lipschitz = Some(lipschitz);
        fopts.early_dual_cutoff = Some(level);
        fopts.early_primal_cutoff = if terminal { None } else { Some(level) };
        fopts.record_trace = false;
        if let Some(t) = opts.time_limit {
            fopts.time_limit = Some(t.saturating_sub(start.elapsed()));
        }
        let warm = node.warm_vector(p);
        let rep = solve_relaxation(inst, Some(&r), warm.as_deref(), &fopts)?;
        let bound = rep.dual_bound.max(node.parent_bound);
        if node.depth == 0 {
            root_bound = bound;
        }
        record.bound = bound;
        record.primal = Some(rep.primal_value);

        let relaxed_objective = if is_feasible(inst, &rep.beta) {
            let o = inst.objective(&rep.beta);
            search.offer(rep.beta.clone(), o);
            Some(o)
        } else {
            None
        };
        if !beam_here {
            // refit the largest free coordinates of the relaxation
            let mut free: Vec<usize> = r.free().iter().copied().filter(|&j| rep.beta[j] != 0.0).collect();
            free.sort_by(|&a, &b| rep.beta[b].abs().total_cmp(&rep.beta[a].abs()).then(a.cmp(&b)));
            free.truncate(r.k_remaining());
            let mut support: Vec<usize> = r.fixed_one().to_vec();
            support.extend(free);
            support.sort_unstable();
            let warm: Vec<f64> = support.iter().map(|&j| rep.beta[j]).collect();
            let (coef, o) = refit(inst, &support, Some(&warm));
            search.offer(scatter(p, &support, &coef), o);
        }
        record.incumbent = search.incumbent_objective;

        let tol_abs = opts.gap_tolerance * search.incumbent_objective.abs().max(1.0);
        if bound >= search.prune_level() {
            record.decision = Decision::Prune;
            closed_min = closed_min.min(bound);
            pruned += 1;
        } else if relaxed_objective.is_some_and(|o| o <= bound + tol_abs) {
            record.decision = Decision::Close;
            closed_min = closed_min.min(bound);
        } else if terminal {
            record.decision = Decision::Terminal;
            closed_min = closed_min.min(bound);
        } else {
            let j = select_branching_variable(inst, &r, &rep.beta, opts.exact_branching).unwrap_or_else(|| {
                // no nonzero free coordinate: fall back to the largest gradient-free choice
                *r.free()
                    .iter()
                    .max_by(|&&a, &&b| rep.beta[a].abs().total_cmp(&rep.beta[b].abs()).then(b.cmp(&a)))
                    .expect("non-terminal node has a free coordinate")
            });
            record.decision = Decision::Branch;
            record.branch_variable = Some(j);
            let warm: Rc<Vec<(usize, f64)>> =
                Rc::new(rep.beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(i, b)| (i, *b)).collect());
            if r.fixed_one().len() < inst.k {
                let mut one = node.fixed_one.clone();
                one.push(j);
                seq += 1;
                heap.push(Open {
                    node: NodeState {
                        fixed_one: one,
                        fixed_zero: node.fixed_zero.clone(),
                        depth: node.depth + 1,
                        parent_bound: bound,
                        warm_start: Some(warm.clone()),
                    },
                    id: next_id,
                    parent: Some(id),
                    seq,
                });
                next_id += 1;
            }
            let mut zero = node.fixed_zero.clone();
            zero.push(j);
            seq += 1;
            heap.push(Open {
                node: NodeState {
                    fixed_one: node.fixed_one.clone(),
                    fixed_zero: zero,
                    depth: node.depth + 1,
                    parent_bound: bound,
                    warm_start: Some(warm),
                },
                id: next_id,
                parent: Some(id),
                seq,
            });
            next_id += 1;
        }
        log(&record);
    };

    let open_min = heap.peek().map_or(f64::INFINITY, |o| o.node.parent_bound);
    let lower = open_min.min(closed_min).min(search.incumbent_objective);
    let inc = search.incumbent_objective;
    let gap_absolute = (inc - lower).max(0.0);
    let support = (0..p).filter(|&j| search.incumbent[j] != 0.0).collect();
    Ok(Certificate {
        status,
        incumbent_beta: search.incumbent,
        incumbent_objective: inc,
        support,
        global_lower_bound: lower,
        gap_absolute,
        gap_relative: gap_absolute / inc.abs().max(1.0),
        root_lower_bound: root_bound,
        nodes_explored: explored,
        nodes_pruned: pruned,
        max_depth,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        gap_tolerance: opts.gap_tolerance,
        beam_width: opts.beam_width,
        threads: opts.threads,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}
