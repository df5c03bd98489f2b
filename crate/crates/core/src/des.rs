//! Event-driven simulation of the admission policy.
//!
//! Six independent Poisson streams (new and handoff per class) feed
//! [`cac::decide`]; every admitted connection draws an exponential holding time
//! and leaves through [`cac::restore_on_departure`]. Randomness comes from a
//! ChaCha12 stream seeded with `seed_from_u64`, so a seed reproduces the same run
//! on every platform.
//!
//! Blocking, dropping and outage are estimated as rejected over offered
//! arrivals. Confidence half-widths use batch means over the post-warmup events.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cac::{self, AdmissionRequest, RejectReason};
use crate::csvfmt::fmt_num;
use crate::ctmc::{QosReport, StateSpace};
use crate::error::DesError;
use crate::model::{self, CellConfig, PerClass, RequestKind, ServiceClass, SystemState, TrafficModel};
use crate::scheduler;

pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Total events processed, warmup included.
    pub horizon_events: u64,
    /// Leading events excluded from every estimate.
    pub warmup_events: u64,
    pub traffic: TrafficModel,
    pub cell: CellConfig,
    pub alpha: f64,
    pub batches: usize,
}

impl SimConfig {
    /// 10% warmup, 20 batches, alpha 0.5.
    pub fn new(cell: CellConfig, traffic: TrafficModel, seed: u64, horizon_events: u64) -> Self {
        SimConfig {
            seed,
            horizon_events,
            warmup_events: horizon_events / 10,
            traffic,
            cell,
            alpha: scheduler::DEFAULT_ALPHA,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn validate(&self) -> Result<(), DesError> {
        model::validate(&self.cell).map_err(DesError::InvalidCell)?;
        if let Err(v) = self.traffic.validate() {
            return Err(DesError::InvalidConfig(
                v.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join("; "),
            ));
        }
        if self.horizon_events <= self.warmup_events {
            return Err(DesError::InvalidConfig(format!(
                "horizon of {} events must exceed the warmup of {}",
                self.horizon_events, self.warmup_events
            )));
        }
        if self.batches < 2 {
            return Err(DesError::InvalidConfig("at least two batches are needed".into()));
        }
        if self.horizon_events - self.warmup_events < self.batches as u64 {
            return Err(DesError::InvalidConfig(format!(
                "{} measured events cannot fill {} batches",
                self.horizon_events - self.warmup_events,
                self.batches
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DesError::InvalidConfig(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    /// Empirical counterpart of the analytic report.
    pub report: QosReport,
    /// 95% half-widths in [`QosReport::metrics`] order.
    pub half_width: [f64; 10],
    pub bu_before: f64,
    pub bu_after: f64,
    pub jfi_before: f64,
    pub jfi_after: f64,
    pub events_processed: u64,
    pub seed: u64,
    /// Fraction of measured time spent in each state.
    pub occupancy: BTreeMap<SystemState, f64>,
}

impl SimReport {
    /// Total-variation distance between the empirical occupancy and `pi`.
    pub fn tv_distance(&self, space: &StateSpace, pi: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut matched = 0.0;
        for (s, &p) in space.states().iter().zip(pi) {
            let q = self.occupancy.get(s).copied().unwrap_or(0.0);
            matched += q;
            sum += (p - q).abs();
        }
        let total: f64 = self.occupancy.values().sum();
        0.5 * (sum + (total - matched).max(0.0))
    }
}

/// Event time with a total order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn exponential(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn class_index(c: ServiceClass) -> usize {
    match c {
        ServiceClass::Ugs => 0,
        ServiceClass::Rtps => 1,
        ServiceClass::Nrtps => 2,
    }
}

/// Counters of one batch.
#[derive(Debug, Clone, Default)]
struct Tally {
    offered: [[u64; 2]; 3],
    rejected: [[u64; 2]; 3],
    outage: [u64; 3],
    busy_integral: f64,
    elapsed: f64,
}

impl Tally {
    fn metrics(&self) -> [f64; 10] {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut m = [0.0; 10];
        for c in 0..3 {
            m[c] = ratio(self.rejected[c][0], self.offered[c][0]);
            m[3 + c] = ratio(self.rejected[c][1], self.offered[c][1]);
            m[6 + c] = ratio(self.outage[c], self.offered[c][0] + self.offered[c][1]);
        }
        m[9] = if self.elapsed > 0.0 {
            self.busy_integral / self.elapsed
        } else {
            0.0
        };
        m
    }

    fn absorb(&mut self, other: &Tally) {
        for c in 0..3 {
            for k in 0..2 {
                self.offered[c][k] += other.offered[c][k];
                self.rejected[c][k] += other.rejected[c][k];
            }
            self.outage[c] += other.outage[c];
        }
        self.busy_integral += other.busy_integral;
        self.elapsed += other.elapsed;
    }
}

const STREAMS: [(ServiceClass, RequestKind); 6] = [
    (ServiceClass::Ugs, RequestKind::New),
    (ServiceClass::Ugs, RequestKind::Handoff),
    (ServiceClass::Rtps, RequestKind::New),
    (ServiceClass::Rtps, RequestKind::Handoff),
    (ServiceClass::Nrtps, RequestKind::New),
    (ServiceClass::Nrtps, RequestKind::Handoff),
];

pub fn run(cfg: &SimConfig) -> Result<SimReport, DesError> {
    cfg.validate()?;
    let cell = &cfg.cell;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let mut next_arrival = [f64::INFINITY; 6];
    for (slot, &(class, kind)) in STREAMS.iter().enumerate() {
        let rate = cfg.traffic.lambda(class, kind);
        if rate > 0.0 {
            next_arrival[slot] = exponential(&mut rng, rate);
        }
    }
    let mut departures: BinaryHeap<Reverse<(Time, ServiceClass)>> = BinaryHeap::new();

    let measured = cfg.horizon_events - cfg.warmup_events;
    let batch_len = measured / cfg.batches as u64;
    let mut batches = vec![Tally::default(); cfg.batches];
    let mut occupancy: BTreeMap<SystemState, f64> = BTreeMap::new();
    let (mut bu_before, mut bu_after, mut jfi_before, mut jfi_after) = (0.0, 0.0, 0.0, 0.0);
    let (mut sched_samples, mut jfi_samples) = (0u64, 0u64);

    let mut state = SystemState::empty(cell);
    let mut now = 0.0;
    let mut events = 0u64;
    while events < cfg.horizon_events {
        let (slot, t_arr) =
            next_arrival
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |best, (i, &t)| {
                    if t < best.1 {
                        (i, t)
                    } else {
                        best
                    }
                });
        let t_dep = departures.peek().map_or(f64::INFINITY, |Reverse((t, _))| t.0);
        let t_next = t_arr.min(t_dep);
        if !t_next.is_finite() {
            break;
        }

        let measuring = events >= cfg.warmup_events;
        let batch = if measuring {
            (((events - cfg.warmup_events) / batch_len.max(1)) as usize).min(cfg.batches - 1)
        } else {
            0
        };
        if measuring {
            let dt = t_next - now;
            let tally = &mut batches[batch];
            tally.elapsed += dt;
            tally.busy_integral += dt * state.used_kbps(cell) as f64 / cell.total_bandwidth_kbps;
            *occupancy.entry(state).or_insert(0.0) += dt;
        }
        now = t_next;

        if t_arr <= t_dep {
            let (class, kind) = STREAMS[slot];
            next_arrival[slot] = now + exponential(&mut rng, cfg.traffic.lambda(class, kind));
            if measuring {
                let r = scheduler::reschedule_report(&state, cell, cfg.alpha)
                    .expect("simulated states satisfy the cell invariants");
                bu_before += r.before.metrics.utilization;
                bu_after += r.after.metrics.utilization;
                sched_samples += 1;
                if let (Some(b), Some(a)) = (r.before.metrics.jfi, r.after.metrics.jfi) {
                    jfi_before += b;
                    jfi_after += a;
                    jfi_samples += 1;
                }
            }
            let verdict = cac::decide(&state, &AdmissionRequest::new(class, kind), cell);
            let (c, k) = (class_index(class), kind as usize);
            if measuring {
                batches[batch].offered[c][k] += 1;
            }
            match verdict.next_state() {
                Some(next) => {
                    state = next;
                    let hold = exponential(&mut rng, cfg.traffic.mu[class]);
                    departures.push(Reverse((Time(now + hold), class)));
                }
                None if measuring => {
                    batches[batch].rejected[c][k] += 1;
                    if verdict.reject_reason() == Some(RejectReason::Outage) {
                        batches[batch].outage[c] += 1;
                    }
                }
                None => {}
            }
        } else {
            let Reverse((_, class)) = departures.pop().expect("departure time was finite");
            state = cac::restore_on_departure(&state, class, cell)
                .expect("every scheduled departure has a live connection");
        }
        events += 1;
    }

    let mut pooled = Tally::default();
    for b in &batches {
        pooled.absorb(b);
    }
    let point = pooled.metrics();
    let per_batch: Vec<[f64; 10]> = batches.iter().map(Tally::metrics).collect();
    let n = cfg.batches as f64;
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("at least two batches")
        .inverse_cdf(0.975);
    let mut half_width = [0.0; 10];
    for (m, hw) in half_width.iter_mut().enumerate() {
        let mean = per_batch.iter().map(|b| b[m]).sum::<f64>() / n;
        let var = per_batch.iter().map(|b| (b[m] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        *hw = t * (var / n).sqrt();
    }

    let total_time = pooled.elapsed;
    if total_time > 0.0 {
        occupancy.values_mut().for_each(|v| *v /= total_time);
    }
    let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { sum / n as f64 };
    let unit = |x: f64| x.clamp(0.0, 1.0);
    let report = QosReport {
        ncbp: PerClass::new(point[0], point[1], point[2]),
        hcdp: PerClass::new(point[3], point[4], point[5]),
        cop: PerClass::new(point[6], point[7], point[8]),
        bu: unit(point[9]),
        config_digest: cell.digest(),
    };
    Ok(SimReport {
        report,
        half_width,
        bu_before: mean(bu_before, sched_samples),
        bu_after: mean(bu_after, sched_samples),
        jfi_before: if jfi_samples == 0 {
            1.0
        } else {
            mean(jfi_before, jfi_samples)
        },
        jfi_after: if jfi_samples == 0 {
            1.0
        } else {
            mean(jfi_after, jfi_samples)
        },
        events_processed: events,
        seed: cfg.seed,
        occupancy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    pub metric: &'static str,
    pub empirical: f64,
    pub analytic: f64,
    pub difference: f64,
    pub half_width: f64,
    pub within_ci: bool,
}

/// Checks every analytic metric against the empirical 95% interval.
pub fn compare_with_ctmc(sim: &SimReport, analytic: &QosReport) -> Result<Vec<MetricComparison>, DesError> {
    if sim.report.config_digest != analytic.config_digest {
        return Err(DesError::MismatchedConfigs);
    }
    Ok(sim
        .report
        .metrics()
        .iter()
        .zip(analytic.metrics())
        .zip(sim.half_width)
        .map(|(((name, emp), (_, ana)), hw)| {
            let difference = (emp - ana).abs();
            MetricComparison {
                metric: name,
                empirical: *emp,
                analytic: ana,
                difference,
                half_width: hw,
                within_ci: difference <= hw,
            }
        })
        .collect())
}

pub fn sim_csv_header() -> String {
    let names: Vec<&str> = crate::ctmc::QOS_CSV_HEADER.split(',').skip(2).collect();
    let ci: Vec<String> = names.iter().map(|n| format!("ci_{n}")).collect();
    format!("lambda,mcs,{},{},seed", names.join(","), ci.join(","))
}

pub fn sim_csv_row(lambda: f64, mcs: &str, sim: &SimReport) -> String {
    let mut line = crate::ctmc::qos_csv_row(lambda, mcs, &sim.report);
    for hw in sim.half_width {
        line.push(',');
        line.push_str(&fmt_num(hw));
    }
    line.push(',');
    line.push_str(&sim.seed.to_string());
    line
}

pub const COMPARE_CSV_HEADER: &str = "metric,analytic,empirical,difference,half_width,within_ci";

pub fn compare_csv(rows: &[MetricComparison]) -> String {
    let mut out = String::from(COMPARE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.metric,
            fmt_num(r.analytic),
            fmt_num(r.empirical),
            fmt_num(r.difference),
            fmt_num(r.half_width),
            r.within_ci
        ));
    }
    out
}
