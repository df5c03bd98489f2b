//! Continuous-time Markov chain induced by the admission policy.
//!
//! States are enumerated breadth-first from the empty cell by applying
//! [`cac::decide`] to every arrival stream with a positive rate and
//! [`cac::restore_on_departure`] to every departure. The chain is therefore
//! exactly the one the simulator walks.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::cac::{self, AdmissionRequest, RejectReason};
use crate::csvfmt::fmt_num;
use crate::error::CtmcError;
use crate::model::{self, CellConfig, PerClass, RequestKind, ServiceClass, SystemState, TrafficModel};
use crate::scheduler;

pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Reachable states in ascending tuple order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    states: Vec<SystemState>,
    index: HashMap<SystemState, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn index_of(&self, s: &SystemState) -> Option<usize> {
        self.index.get(s).copied()
    }
}

/// Every transition out of `s`: `(target, rate)` per enabled event.
fn successors(s: &SystemState, traffic: &TrafficModel, cfg: &CellConfig, out: &mut Vec<(SystemState, f64)>) {
    out.clear();
    for class in ServiceClass::ALL {
        for kind in RequestKind::ALL {
            let rate = traffic.lambda(class, kind);
            if rate <= 0.0 {
                continue;
            }
            if let Some(next) = cac::decide(s, &AdmissionRequest::new(class, kind), cfg).next_state() {
                out.push((next, rate));
            }
        }
        let n = s.count(class);
        if n > 0 {
            let next = cac::restore_on_departure(s, class, cfg).expect("count checked above");
            out.push((next, n as f64 * traffic.mu[class]));
        }
    }
}

fn check_inputs(cfg: &CellConfig, traffic: &TrafficModel) -> Result<(), CtmcError> {
    let mut v = model::validate(cfg).err().unwrap_or_default();
    v.extend(traffic.validate().err().unwrap_or_default());
    if v.is_empty() {
        Ok(())
    } else {
        Err(CtmcError::InvalidConfig(v))
    }
}

/// Breadth-first closure of the empty state under admissions and departures.
pub fn enumerate_states(
    cfg: &CellConfig,
    traffic: &TrafficModel,
    state_cap: usize,
) -> Result<StateSpace, CtmcError> {
    check_inputs(cfg, traffic)?;
    let start = SystemState::empty(cfg);
    let mut seen: HashMap<SystemState, ()> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    seen.insert(start, ());
    let mut buf = Vec::new();
    while let Some(s) = queue.pop_front() {
        successors(&s, traffic, cfg, &mut buf);
        for &(next, _) in &buf {
            if seen.insert(next, ()).is_none() {
                if seen.len() > state_cap {
                    return Err(CtmcError::StateSpaceTooLarge { cap: state_cap });
                }
                queue.push_back(next);
            }
        }
    }
    let mut states: Vec<SystemState> = seen.into_keys().collect();
    states.sort_unstable();
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(StateSpace { states, index })
}

/// Sparse infinitesimal generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    dimension: usize,
    /// Off-diagonal `(from, to, rate)`, sorted, parallel transitions merged.
    off_diagonal: Vec<(usize, usize, f64)>,
    diagonal: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn off_diagonal(&self) -> &[(usize, usize, f64)] {
        &self.off_diagonal
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `max_i |sum_j Q_ij|`.
    pub fn max_row_sum(&self) -> f64 {
        let mut sums = self.diagonal.clone();
        for &(i, _, r) in &self.off_diagonal {
            sums[i] += r;
        }
        sums.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `||pi Q||_inf`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        self.left_multiply(pi).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `pi Q`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = pi.iter().zip(&self.diagonal).map(|(p, d)| p * d).collect();
        for &(i, j, r) in &self.off_diagonal {
            out[j] += pi[i] * r;
        }
        out
    }
}

pub fn build_generator(space: &StateSpace, traffic: &TrafficModel, cfg: &CellConfig) -> GeneratorMatrix {
    let n = space.len();
    let mut off = Vec::new();
    let mut buf = Vec::new();
    for (i, s) in space.states.iter().enumerate() {
        successors(s, traffic, cfg, &mut buf);
        let start = off.len();
        for &(next, rate) in &buf {
            let j = space
                .index_of(&next)
                .expect("state space is closed under transitions");
            if j != i {
                off.push((i, j, rate));
            }
        }
        off[start..].sort_unstable_by_key(|&(_, j, _)| j);
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(off.len() - start);
        for &e in &off[start..] {
            match merged.last_mut() {
                Some(last) if last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        off.truncate(start);
        off.extend(merged);
    }
    let mut diagonal = vec![0.0; n];
    for &(i, _, r) in &off {
        diagonal[i] -= r;
    }
    GeneratorMatrix {
        dimension: n,
        off_diagonal: off,
        diagonal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Largest dimension solved by sparse LU; larger chains use power iteration.
    pub direct_limit: usize,
    pub power_tolerance: f64,
    pub power_max_iterations: usize,
    /// Bound on `||pi Q||_inf` after the solve.
    pub residual_tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            direct_limit: 50_000,
            power_tolerance: 1e-10,
            power_max_iterations: 1_000_000,
            residual_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    SparseLu,
    PowerIteration { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub method: SolveMethod,
}

/// Solves `pi Q = 0`, `sum pi = 1`.
pub fn solve_stationary(
    gen: &GeneratorMatrix,
    opts: &SolveOptions,
) -> Result<StationaryDistribution, CtmcError> {
    let n = gen.dimension;
    if n == 0 {
        return Err(CtmcError::Singular("empty state space".into()));
    }
    let (mut pi, method) = if n == 1 {
        (vec![1.0], SolveMethod::SparseLu)
    } else if n <= opts.direct_limit {
        (solve_lu(gen)?, SolveMethod::SparseLu)
    } else {
        let (pi, iterations) = solve_power(gen, opts)?;
        (pi, SolveMethod::PowerIteration { iterations })
    };

    if let Some(state) = pi.iter().position(|p| !p.is_finite()) {
        return Err(CtmcError::Singular(format!(
            "non-finite probability at state {state}"
        )));
    }
    let total: f64 = pi.iter().sum();
    if !(total > 0.0) {
        return Err(CtmcError::Singular("non-positive total mass".into()));
    }
    for (state, p) in pi.iter_mut().enumerate() {
        *p /= total;
        if *p < -1e-9 {
            return Err(CtmcError::NegativeProbability { state, value: *p });
        }
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    let residual = gen.residual(&pi);
    if !(residual <= opts.residual_tolerance) {
        return Err(CtmcError::Residual {
            residual,
            tolerance: opts.residual_tolerance,
        });
    }
    Ok(StationaryDistribution { pi, residual, method })
}

/// Solves `M^T x = e_last` where `M` is `Q` with its last column replaced by ones,
/// i.e. every balance equation but one plus normalisation.
///
/// The factorisation is of `M` itself: a dense column leaves the fill-reducing
/// ordering intact, whereas the equivalent dense row in `Q^T` would not.
fn solve_lu(gen: &GeneratorMatrix) -> Result<Vec<f64>, CtmcError> {
    let n = gen.dimension;
    let last = n - 1;
    let mut triplets = Vec::with_capacity(gen.off_diagonal.len() + 2 * n);
    for &(i, j, r) in &gen.off_diagonal {
        if j != last {
            triplets.push(Triplet::new(i, j, r));
        }
    }
    for (i, &d) in gen.diagonal.iter().enumerate().take(last) {
        triplets.push(Triplet::new(i, i, d));
    }
    for i in 0..n {
        triplets.push(Triplet::new(i, last, 1.0));
    }
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| CtmcError::Singular(format!("{e:?}")))?;
    let lu = m.sp_lu().map_err(|e| CtmcError::Singular(format!("{e:?}")))?;
    let mut b = Mat::<f64>::zeros(n, 1);
    b[(last, 0)] = 1.0;
    lu.solve_transpose_in_place(b.as_mut());
    Ok((0..n).map(|i| b[(i, 0)]).collect())
}

/// Power iteration on the uniformised chain `P = I + Q / Lambda`.
fn solve_power(gen: &GeneratorMatrix, opts: &SolveOptions) -> Result<(Vec<f64>, usize), CtmcError> {
    let n = gen.dimension;
    let max_out = gen.diagonal.iter().fold(0.0f64, |m, d| m.max(-d));
    if max_out == 0.0 {
        return Err(CtmcError::Singular("generator has no transitions".into()));
    }
    // A strictly larger uniformisation rate keeps P aperiodic.
    let lambda = max_out * 1.05;
    let mut pi = vec![1.0 / n as f64; n];
    for it in 1..=opts.power_max_iterations {
        let q = gen.left_multiply(&pi);
        let mut change = 0.0f64;
        for (p, dq) in pi.iter_mut().zip(&q) {
            let step = dq / lambda;
            *p += step;
            change = change.max(step.abs());
        }
        if change * lambda <= opts.power_tolerance {
            return Ok((pi, it));
        }
    }
    Err(CtmcError::NotConverged(opts.power_max_iterations))
}

/// Steady-state QoS of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosReport {
    /// New-call blocking probability.
    pub ncbp: PerClass<f64>,
    /// Handoff-call dropping probability.
    pub hcdp: PerClass<f64>,
    /// Connection outage probability.
    pub cop: PerClass<f64>,
    /// Bandwidth utilization.
    pub bu: f64,
    /// Digest of the cell configuration the report was computed for.
    pub config_digest: u64,
}

impl QosReport {
    /// `(name, value)` of every metric in CSV column order.
    pub fn metrics(&self) -> [(&'static str, f64); 10] {
        [
            ("ncbp_ugs", self.ncbp.ugs),
            ("ncbp_rtps", self.ncbp.rtps),
            ("ncbp_nrtps", self.ncbp.nrtps),
            ("hcdp_ugs", self.hcdp.ugs),
            ("hcdp_rtps", self.hcdp.rtps),
            ("hcdp_nrtps", self.hcdp.nrtps),
            ("cop_ugs", self.cop.ugs),
            ("cop_rtps", self.cop.rtps),
            ("cop_nrtps", self.cop.nrtps),
            ("bu", self.bu),
        ]
    }
}

pub fn qos_report(space: &StateSpace, pi: &[f64], cfg: &CellConfig) -> QosReport {
    let mut ncbp = PerClass::splat(0.0);
    let mut hcdp = PerClass::splat(0.0);
    let mut cop = PerClass::splat(0.0);
    let mut bu = 0.0;
    for (s, &p) in space.states.iter().zip(pi) {
        for class in ServiceClass::ALL {
            let new = cac::decide(s, &AdmissionRequest::new(class, RequestKind::New), cfg);
            if let Some(reason) = new.reject_reason() {
                ncbp[class] += p;
                if reason == RejectReason::Outage {
                    cop[class] += p;
                }
            }
            if !cac::decide(s, &AdmissionRequest::new(class, RequestKind::Handoff), cfg).is_admitted() {
                hcdp[class] += p;
            }
        }
        bu += p * s.used_kbps(cfg) as f64 / cfg.total_bandwidth_kbps;
    }
    let unit = |x: f64| x.clamp(0.0, 1.0);
    QosReport {
        ncbp: ncbp.map(|&x| unit(x)),
        hcdp: hcdp.map(|&x| unit(x)),
        cop: cop.map(|&x| unit(x)),
        bu: unit(bu),
        config_digest: cfg.digest(),
    }
}

/// Stationary expectation of the rescheduling metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescheduleSummary {
    pub bu_before: f64,
    pub bu_after: f64,
    /// Fairness is averaged over states holding at least one connection.
    pub jfi_before: f64,
    pub jfi_after: f64,
}

pub fn reschedule_summary(
    space: &StateSpace,
    pi: &[f64],
    cfg: &CellConfig,
    alpha: f64,
) -> Result<RescheduleSummary, CtmcError> {
    let mut acc = RescheduleSummary {
        bu_before: 0.0,
        bu_after: 0.0,
        jfi_before: 0.0,
        jfi_after: 0.0,
    };
    let mut busy = 0.0;
    for (s, &p) in space.states.iter().zip(pi) {
        let r =
            scheduler::reschedule_report(s, cfg, alpha).map_err(|e| CtmcError::Singular(e.to_string()))?;
        acc.bu_before += p * r.before.metrics.utilization;
        acc.bu_after += p * r.after.metrics.utilization;
        if let (Some(b), Some(a)) = (r.before.metrics.jfi, r.after.metrics.jfi) {
            acc.jfi_before += p * b;
            acc.jfi_after += p * a;
            busy += p;
        }
    }
    if busy > 0.0 {
        acc.jfi_before /= busy;
        acc.jfi_after /= busy;
    } else {
        acc.jfi_before = 1.0;
        acc.jfi_after = 1.0;
    }
    Ok(acc)
}

/// Everything produced by one analytic solve.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub space: StateSpace,
    pub generator: GeneratorMatrix,
    pub stationary: StationaryDistribution,
    pub report: QosReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub state_cap: usize,
    pub solve: SolveOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            state_cap: DEFAULT_STATE_CAP,
            solve: SolveOptions::default(),
        }
    }
}

/// Enumerate, build, solve and report.
pub fn analyze(
    cfg: &CellConfig,
    traffic: &TrafficModel,
    opts: &AnalysisOptions,
) -> Result<Analysis, CtmcError> {
    let space = enumerate_states(cfg, traffic, opts.state_cap)?;
    let generator = build_generator(&space, traffic, cfg);
    let stationary = solve_stationary(&generator, &opts.solve)?;
    let report = qos_report(&space, &stationary.pi, cfg);
    Ok(Analysis {
        space,
        generator,
        stationary,
        report,
    })
}

pub const QOS_CSV_HEADER: &str =
    "lambda,mcs,ncbp_ugs,ncbp_rtps,ncbp_nrtps,hcdp_ugs,hcdp_rtps,hcdp_nrtps,cop_ugs,cop_rtps,cop_nrtps,bu";

pub fn qos_csv_row(lambda: f64, mcs: &str, report: &QosReport) -> String {
    let mut line = format!("{},{}", fmt_num(lambda), mcs);
    for (_, v) in report.metrics() {
        line.push(',');
        line.push_str(&fmt_num(v));
    }
    line
}

/// One `n_u,n_r,d_r,n_n,d_n,probability` line per state.
pub fn state_dump_csv(space: &StateSpace, pi: &[f64]) -> String {
    let mut out = String::from("n_u,n_r,d_r,n_n,d_n,probability\n");
    for (s, &p) in space.states.iter().zip(pi) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.n_u,
            s.n_r,
            s.d_r,
            s.n_n,
            s.d_n,
            fmt_num(p)
        );
    }
    out
}
