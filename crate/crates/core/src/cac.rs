//! SINR-based call admission control.
//!
//! A request passes three gates in order: the SINR outage check, the rtPS
//! delay-guarantee check and the bandwidth check. A request that clears the first
//! two but does not fit is admitted through adaptive degradation of the
//! degradable classes when that frees enough bandwidth.

use crate::error::CacError;
use crate::model::{CellConfig, OutageModel, RequestKind, ServiceClass, ServiceClassParams, SystemState};

/// A connection request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdmissionRequest {
    pub class: ServiceClass,
    pub kind: RequestKind,
}

impl AdmissionRequest {
    pub fn new(class: ServiceClass, kind: RequestKind) -> Self {
        AdmissionRequest { class, kind }
    }
}

/// Why a request was turned away. Reports the first failing gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Outage,
    DelayViolation,
    NoBandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissionVerdict {
    Admit(SystemState),
    AdmitWithDegradation(SystemState),
    Reject(RejectReason),
}

impl AdmissionVerdict {
    pub fn is_admitted(&self) -> bool {
        !matches!(self, AdmissionVerdict::Reject(_))
    }

    pub fn next_state(&self) -> Option<SystemState> {
        match *self {
            AdmissionVerdict::Admit(s) | AdmissionVerdict::AdmitWithDegradation(s) => Some(s),
            AdmissionVerdict::Reject(_) => None,
        }
    }

    pub fn reject_reason(&self) -> Option<RejectReason> {
        match *self {
            AdmissionVerdict::Reject(r) => Some(r),
            _ => None,
        }
    }
}

/// `SINR_th = (Eb/N0) * MRTR / W`, linear.
pub fn sinr_threshold(params: &ServiceClassParams, channel_bandwidth_hz: f64) -> Result<f64, CacError> {
    if !(channel_bandwidth_hz > 0.0) {
        return Err(CacError::NonPositiveBandwidth(channel_bandwidth_hz));
    }
    Ok(threshold(params, channel_bandwidth_hz))
}

fn threshold(params: &ServiceClassParams, w: f64) -> f64 {
    params.eb_n0_linear() * params.mrtr_kbps as f64 * 1e3 / w
}

/// Noise-normalised signal term `(Eb/N0) * r / W` of one connection.
fn normalized_signal(params: &ServiceClassParams, rate_kbps: u32, w: f64) -> f64 {
    params.eb_n0_linear() * rate_kbps as f64 * 1e3 / w
}

/// Noise-normalised SINR seen by a candidate of `class` in `state`:
/// its own `(Eb/N0) r / W` over the summed interference of the admitted
/// connections plus one. Rates are the current per-class allocations.
pub fn measured_sinr(class: ServiceClass, state: &SystemState, cfg: &CellConfig) -> f64 {
    let w = cfg.channel_bandwidth_hz;
    let signal = normalized_signal(cfg.class(class), state.allocation(class, cfg), w);
    signal / (normalized_interference(state, cfg) + 1.0)
}

/// `sum_x n_x (Eb/N0)_x r_x / W` over admitted connections.
pub fn normalized_interference(state: &SystemState, cfg: &CellConfig) -> f64 {
    let w = cfg.channel_bandwidth_hz;
    ServiceClass::ALL
        .iter()
        .map(|&c| state.count(c) as f64 * normalized_signal(cfg.class(c), state.allocation(c, cfg), w))
        .sum()
}

/// `(Eb/N0)_i / sum_x n_x (Eb/N0)_x`; infinite in an empty cell.
pub fn aggregate_sinr(class: ServiceClass, state: &SystemState, cfg: &CellConfig) -> f64 {
    let load: f64 = ServiceClass::ALL
        .iter()
        .map(|&c| state.count(c) as f64 * cfg.class(c).eb_n0_linear())
        .sum();
    if load == 0.0 {
        f64::INFINITY
    } else {
        cfg.class(class).eb_n0_linear() / load
    }
}

/// Whether a candidate of `class` would fall below its SINR threshold.
pub fn in_outage(class: ServiceClass, state: &SystemState, cfg: &CellConfig) -> bool {
    let sinr = match cfg.outage_model {
        OutageModel::Aggregate => aggregate_sinr(class, state, cfg),
        OutageModel::Normalized => measured_sinr(class, state, cfg),
    };
    sinr < threshold(cfg.class(class), cfg.channel_bandwidth_hz)
}

/// Right-hand side of the rtPS token-bucket delay bound, bits:
/// `[(m - 1)(1 + C_NRT / C_rtPS) - 1] r f`.
///
/// `None` when there is no rtPS connection to protect.
pub fn delay_bound_bits(state_after: &SystemState, cfg: &CellConfig) -> Option<f64> {
    if state_after.n_r == 0 {
        return None;
    }
    let rt = cfg.class(ServiceClass::Rtps);
    let m = cfg.latency_frames().unwrap_or(1.0).round();
    let c_rt = state_after.n_r as f64 * state_after.d_r as f64;
    let ugs = state_after.n_u as f64 * cfg.mstr(ServiceClass::Ugs) as f64;
    // Whatever the real-time classes leave is the non-real-time share; never negative.
    let c_nrt = (cfg.total_bandwidth_kbps - ugs - c_rt).max(0.0);
    Some(((m - 1.0) * (1.0 + c_nrt / c_rt) - 1.0) * rt.token_rate_kbps * cfg.frame_duration_ms)
}

/// Token-bucket delay guarantee for the rtPS connections of `state_after`.
pub fn delay_guarantee_ok(state_after: &SystemState, cfg: &CellConfig) -> bool {
    match delay_bound_bits(state_after, cfg) {
        None => true,
        Some(rhs) => cfg.class(ServiceClass::Rtps).bucket_size_bits <= rhs,
    }
}

/// State after adding one connection of `class`, allocations untouched.
fn with_candidate(state: &SystemState, class: ServiceClass) -> SystemState {
    let mut s = *state;
    s.set_count(class, state.count(class) + 1);
    s
}

/// Finds the admission state with the fewest total grid steps of degradation.
///
/// New requests may only lower the nrtPS allocation; handoff requests may lower
/// nrtPS and rtPS. Among equally small degradations the one that takes more from
/// nrtPS wins. Returns `None` when even degrading to MRTR does not fit.
pub fn degrade_to_fit(state: &SystemState, req: &AdmissionRequest, cfg: &CellConfig) -> Option<SystemState> {
    let base = with_candidate(state, req.class);
    let step = cfg.degradation_step_kbps;
    let max_n = if base.n_n > 0 {
        (base.d_n - cfg.mrtr(ServiceClass::Nrtps)) / step
    } else {
        0
    };
    let max_r = if req.kind == RequestKind::Handoff && base.n_r > 0 {
        (base.d_r - cfg.mrtr(ServiceClass::Rtps)) / step
    } else {
        0
    };
    for total in 0..=max_r + max_n {
        for r_steps in 0..=total.min(max_r) {
            let n_steps = total - r_steps;
            if n_steps > max_n {
                continue;
            }
            let candidate = SystemState {
                d_r: base.d_r - r_steps * step,
                d_n: base.d_n - n_steps * step,
                ..base
            };
            if candidate.fits(cfg) {
                return Some(candidate);
            }
        }
    }
    None
}

/// Releases one connection of `departed` and hands the freed bandwidth back,
/// rtPS first, then nrtPS, in whole grid steps.
pub fn restore_on_departure(
    state: &SystemState,
    departed: ServiceClass,
    cfg: &CellConfig,
) -> Result<SystemState, CacError> {
    let n = state.count(departed);
    if n == 0 {
        return Err(CacError::Underflow(departed));
    }
    let mut s = *state;
    s.set_count(departed, n - 1);
    let mut s = s.canonical(cfg);

    let step = cfg.degradation_step_kbps;
    let mut slack = cfg.total_bandwidth_kbps - s.used_kbps(cfg) as f64;
    for class in [ServiceClass::Rtps, ServiceClass::Nrtps] {
        let count = s.count(class);
        let current = s.allocation(class, cfg);
        let mstr = cfg.mstr(class);
        if count == 0 || current >= mstr || slack <= 0.0 {
            continue;
        }
        let per_step = (count * step) as f64;
        let affordable = (slack / per_step).floor() as u32;
        let raise = affordable.min((mstr - current) / step);
        let new_alloc = current + raise * step;
        match class {
            ServiceClass::Rtps => s.d_r = new_alloc,
            _ => s.d_n = new_alloc,
        }
        slack -= raise as f64 * per_step;
    }
    debug_assert!(s.fits(cfg));
    Ok(s)
}

/// Full admission decision: outage, then delay, then bandwidth (with degradation).
pub fn decide(state: &SystemState, req: &AdmissionRequest, cfg: &CellConfig) -> AdmissionVerdict {
    if in_outage(req.class, state, cfg) {
        return AdmissionVerdict::Reject(RejectReason::Outage);
    }
    let after = with_candidate(state, req.class);
    if !delay_guarantee_ok(&after, cfg) {
        return AdmissionVerdict::Reject(RejectReason::DelayViolation);
    }
    if after.fits(cfg) {
        return AdmissionVerdict::Admit(after);
    }
    match degrade_to_fit(state, req, cfg) {
        Some(s) => AdmissionVerdict::AdmitWithDegradation(s),
        None => AdmissionVerdict::Reject(RejectReason::NoBandwidth),
    }
}

/// [`decide`] with the state and configuration checked first.
pub fn decide_checked(
    state: &SystemState,
    req: &AdmissionRequest,
    cfg: &CellConfig,
) -> Result<AdmissionVerdict, CacError> {
    if let Err(v) = crate::model::validate(cfg) {
        return Err(CacError::InvalidState(format!(
            "{state} under an invalid configuration ({})",
            v.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join("; ")
        )));
    }
    state.check(cfg).map_err(CacError::InvalidState)?;
    Ok(decide(state, req, cfg))
}
