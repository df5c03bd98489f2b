//! Sweep drivers and adaptive MCS selection.
//!
//! Every sweep point is an independent CTMC solve; points run in parallel and are
//! reassembled in grid order. An MCS sets the cell bandwidth `B` to its raw data
//! rate.
//!
//! On the E_b/N_0 axis the grid value is the UGS E_b/N_0 and every class is
//! shifted by the same number of dB, so the class spacing of the base
//! configuration is preserved.

use rayon::prelude::*;

use crate::csvfmt::fmt_num;
use crate::ctmc::{self, AnalysisOptions, QosReport, RescheduleSummary};
use crate::error::CtmcError;
use crate::model::{CellConfig, PerClass, ServiceClass, TrafficModel, Violation};
use crate::phy::{self, McsProfile, PhyConfig};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `1, 2, ..., 20` dB.
pub fn default_ebn0_grid() -> Vec<f64> {
    (1..=20).map(f64::from).collect()
}

/// Cell with `B` set to the raw data rate of `mcs`, kbps.
pub fn cell_for_mcs(base: &CellConfig, phy: &PhyConfig, mcs: &McsProfile) -> CellConfig {
    CellConfig {
        total_bandwidth_kbps: phy::raw_data_rate(mcs, phy) / 1e3,
        ..base.clone()
    }
}

/// Cell with UGS at `ebn0_db` and the other classes moved by the same offset.
pub fn cell_at_ebn0(base: &CellConfig, ebn0_db: f64) -> CellConfig {
    base.with_eb_n0_offset(ebn0_db - base.class(ServiceClass::Ugs).eb_n0_db)
}

/// All six arrival streams at `lambda`, service rates from `base`.
pub fn traffic_at(base: &TrafficModel, lambda: f64) -> TrafficModel {
    TrafficModel {
        lambda_new: PerClass::splat(lambda),
        lambda_handoff: PerClass::splat(lambda),
        mu: base.mu,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// UGS E_b/N_0 values, dB, strictly ascending.
    pub ebn0_grid: Vec<f64>,
    pub mcs_set: Vec<McsProfile>,
    pub phy: PhyConfig,
    /// `B` is overwritten per MCS.
    pub cell: CellConfig,
    pub traffic: TrafficModel,
    pub epsilon: f64,
    pub analysis: AnalysisOptions,
}

impl SweepSpec {
    pub fn new(phy: PhyConfig, cell: CellConfig, traffic: TrafficModel) -> Self {
        SweepSpec {
            ebn0_grid: default_ebn0_grid(),
            mcs_set: McsProfile::ALL.to_vec(),
            phy,
            cell,
            traffic,
            epsilon: DEFAULT_EPSILON,
            analysis: AnalysisOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if self.ebn0_grid.is_empty() {
            v.push(Violation("E_b/N_0 grid is empty".into()));
        }
        if self.ebn0_grid.iter().any(|x| !x.is_finite()) {
            v.push(Violation("E_b/N_0 grid values must be finite".into()));
        }
        if self.ebn0_grid.windows(2).any(|w| !(w[0] < w[1])) {
            v.push(Violation("E_b/N_0 grid must be strictly ascending".into()));
        }
        if self.mcs_set.is_empty() {
            v.push(Violation("MCS set is empty".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            v.push(Violation(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mcs: McsProfile,
    pub ebn0_db: f64,
    pub report: QosReport,
}

/// Reports in MCS-major, grid-minor order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub ebn0_grid: Vec<f64>,
    pub mcs_set: Vec<McsProfile>,
    /// Raw data rate per entry of `mcs_set`, bps.
    pub rates_bps: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Reports of one MCS along the grid.
    pub fn series(&self, mcs: &McsProfile) -> Option<&[SweepPoint]> {
        let k = self.mcs_set.iter().position(|m| m == mcs)?;
        let g = self.ebn0_grid.len();
        Some(&self.points[k * g..(k + 1) * g])
    }

    /// Index of the grid point closest to `ebn0_db`; the lower one on a tie.
    pub fn nearest_grid_index(&self, ebn0_db: f64) -> usize {
        let mut best = 0;
        for (i, x) in self.ebn0_grid.iter().enumerate() {
            if (x - ebn0_db).abs() < (self.ebn0_grid[best] - ebn0_db).abs() {
                best = i;
            }
        }
        best
    }
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, CtmcError> {
    spec.validate().map_err(CtmcError::InvalidConfig)?;
    let jobs: Vec<(McsProfile, f64)> = spec
        .mcs_set
        .iter()
        .flat_map(|m| spec.ebn0_grid.iter().map(move |x| (*m, *x)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|(mcs, x)| {
            let cell = cell_at_ebn0(&cell_for_mcs(&spec.cell, &spec.phy, mcs), *x);
            ctmc::analyze(&cell, &spec.traffic, &spec.analysis).map(|a| SweepPoint {
                mcs: *mcs,
                ebn0_db: *x,
                report: a.report,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        ebn0_grid: spec.ebn0_grid.clone(),
        mcs_set: spec.mcs_set.clone(),
        rates_bps: spec
            .mcs_set
            .iter()
            .map(|m| phy::raw_data_rate(m, &spec.phy))
            .collect(),
        points,
    })
}

/// Feasible E_b/N_0 window of one MCS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeRow {
    pub mcs: McsProfile,
    /// Lowest grid point where every class's NCBP is at most epsilon.
    pub min_ebn0_zero_blocking: Option<f64>,
    /// Lowest grid point where every class's HCDP is at most epsilon.
    pub min_ebn0_zero_dropping: Option<f64>,
    /// Highest grid point where every class's COP is at most epsilon.
    pub max_ebn0_zero_outage: Option<f64>,
}

impl RangeRow {
    pub fn has_feasible_window(&self) -> bool {
        matches!(
            (self.min_ebn0_zero_blocking, self.max_ebn0_zero_outage),
            (Some(lo), Some(hi)) if lo <= hi
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingRange {
    pub rows: Vec<RangeRow>,
}

fn all_at_most(p: &PerClass<f64>, eps: f64) -> bool {
    p.iter().all(|(_, v)| *v <= eps)
}

pub fn operating_range(result: &SweepResult, epsilon: f64) -> OperatingRange {
    let rows = result
        .mcs_set
        .iter()
        .map(|mcs| {
            let series = result.series(mcs).expect("mcs comes from the sweep");
            let first =
                |f: &dyn Fn(&QosReport) -> bool| series.iter().find(|p| f(&p.report)).map(|p| p.ebn0_db);
            RangeRow {
                mcs: *mcs,
                min_ebn0_zero_blocking: first(&|r| all_at_most(&r.ncbp, epsilon)),
                min_ebn0_zero_dropping: first(&|r| all_at_most(&r.hcdp, epsilon)),
                max_ebn0_zero_outage: series
                    .iter()
                    .rev()
                    .find(|p| all_at_most(&p.report.cop, epsilon))
                    .map(|p| p.ebn0_db),
            }
        })
        .collect();
    OperatingRange { rows }
}

/// Per-class ceilings on the fed-back QoS metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosTargets {
    pub max_ncbp: PerClass<f64>,
    pub max_hcdp: PerClass<f64>,
    pub max_cop: PerClass<f64>,
}

impl QosTargets {
    pub fn uniform(ncbp: f64, hcdp: f64, cop: f64) -> Self {
        QosTargets {
            max_ncbp: PerClass::splat(ncbp),
            max_hcdp: PerClass::splat(hcdp),
            max_cop: PerClass::splat(cop),
        }
    }

    pub fn met_by(&self, r: &QosReport) -> bool {
        ServiceClass::ALL.iter().all(|&c| {
            r.ncbp[c] <= self.max_ncbp[c] && r.hcdp[c] <= self.max_hcdp[c] && r.cop[c] <= self.max_cop[c]
        })
    }
}

/// Highest-rate MCS whose report at the grid point nearest `current_ebn0_db`
/// meets `targets`; QPSK-1/2 when none does.
///
/// Among MCS with equal raw rate the one with fewer bits per symbol wins.
pub fn select_mcs(current_ebn0_db: f64, targets: &QosTargets, result: &SweepResult) -> McsProfile {
    let g = result.nearest_grid_index(current_ebn0_db);
    let mut best: Option<(f64, McsProfile)> = None;
    for (k, mcs) in result.mcs_set.iter().enumerate() {
        let point = &result.points[k * result.ebn0_grid.len() + g];
        if !targets.met_by(&point.report) {
            continue;
        }
        let rate = result.rates_bps[k];
        let better = match best {
            None => true,
            Some((r, m)) => rate > r || (rate == r && mcs.bits_per_symbol() < m.bits_per_symbol()),
        };
        if better {
            best = Some((rate, *mcs));
        }
    }
    best.map_or(McsProfile::QPSK_1_2, |(_, m)| m)
}

/// One load-sweep point: QoS and rescheduling metrics at a common arrival rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub lambda: f64,
    pub mcs: McsProfile,
    pub report: QosReport,
    pub schedule: RescheduleSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSweepSpec {
    pub lambdas: Vec<f64>,
    pub mcs_set: Vec<McsProfile>,
    pub phy: PhyConfig,
    pub cell: CellConfig,
    /// Service rates; arrival rates come from `lambdas`.
    pub traffic: TrafficModel,
    pub alpha: f64,
    pub analysis: AnalysisOptions,
}

/// Points in MCS-major, load-minor order.
pub fn load_sweep(spec: &LoadSweepSpec) -> Result<Vec<LoadPoint>, CtmcError> {
    if spec.lambdas.is_empty() || spec.mcs_set.is_empty() {
        return Err(CtmcError::InvalidConfig(vec![Violation(
            "load sweep needs at least one arrival rate and one MCS".into(),
        )]));
    }
    let jobs: Vec<(McsProfile, f64)> = spec
        .mcs_set
        .iter()
        .flat_map(|m| spec.lambdas.iter().map(move |l| (*m, *l)))
        .collect();
    jobs.par_iter()
        .map(|(mcs, lambda)| {
            let cell = cell_for_mcs(&spec.cell, &spec.phy, mcs);
            let traffic = traffic_at(&spec.traffic, *lambda);
            let a = ctmc::analyze(&cell, &traffic, &spec.analysis)?;
            let schedule = ctmc::reschedule_summary(&a.space, &a.stationary.pi, &cell, spec.alpha)?;
            Ok(LoadPoint {
                lambda: *lambda,
                mcs: *mcs,
                report: a.report,
                schedule,
            })
        })
        .collect()
}

pub fn load_sweep_csv(points: &[LoadPoint]) -> String {
    let mut out = String::from(ctmc::QOS_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&ctmc::qos_csv_row(p.lambda, &p.mcs.to_string(), &p.report));
        out.push('\n');
    }
    out
}

pub const SCHEDULE_CSV_HEADER: &str = "arrival_rate,mcs,bu_before,bu_after,jfi_before,jfi_after";

pub fn schedule_csv(points: &[LoadPoint]) -> String {
    let mut out = String::from(SCHEDULE_CSV_HEADER);
    out.push('\n');
    for p in points {
        let s = &p.schedule;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_num(p.lambda),
            p.mcs,
            fmt_num(s.bu_before),
            fmt_num(s.bu_after),
            fmt_num(s.jfi_before),
            fmt_num(s.jfi_after)
        ));
    }
    out
}

pub fn ebn0_sweep_csv(result: &SweepResult) -> String {
    let mut out = ctmc::QOS_CSV_HEADER.replacen("lambda", "ebn0_db", 1);
    out.push('\n');
    for p in &result.points {
        out.push_str(&ctmc::qos_csv_row(p.ebn0_db, &p.mcs.to_string(), &p.report));
        out.push('\n');
    }
    out
}

pub const RANGE_CSV_HEADER: &str = "mcs,min_ebn0_blocking_db,min_ebn0_dropping_db,max_ebn0_outage_db";

pub fn range_csv(range: &OperatingRange) -> String {
    let cell = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    let mut out = String::from(RANGE_CSV_HEADER);
    out.push('\n');
    for r in &range.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.mcs,
            cell(r.min_ebn0_zero_blocking),
            cell(r.min_ebn0_zero_dropping),
            cell(r.max_ebn0_zero_outage)
        ));
    }
    out
}
