//! Subscriber-station rescheduling of polling bandwidth and Jain's fairness index.
//!
//! UGS is served first at its fixed rate. What remains, `B_poll`, is split between
//! rtPS and nrtPS in proportion to `n_r * alpha` and `n_n`.

use crate::error::SchedulerError;
use crate::model::{CellConfig, ServiceClass, SystemState};

/// Default weight of rtPS against nrtPS in the polling split.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// `alpha = max MPDU delay / rtPS latency`.
pub fn compute_alpha(max_mpdu_delay_ms: f64, rtps_latency_ms: f64) -> Result<f64, SchedulerError> {
    if !(max_mpdu_delay_ms > 0.0 && rtps_latency_ms > 0.0)
        || !max_mpdu_delay_ms.is_finite()
        || !rtps_latency_ms.is_finite()
    {
        return Err(SchedulerError::NonPositiveDuration {
            max_mpdu_delay: max_mpdu_delay_ms,
            latency: rtps_latency_ms,
        });
    }
    if max_mpdu_delay_ms > rtps_latency_ms {
        return Err(SchedulerError::DelayExceedsLatency {
            max_mpdu_delay: max_mpdu_delay_ms,
            latency: rtps_latency_ms,
        });
    }
    Ok(max_mpdu_delay_ms / rtps_latency_ms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInput {
    /// `B`, kbps.
    pub total_bandwidth_kbps: f64,
    pub n_ugs: u32,
    /// `B_U`, kbps.
    pub ugs_rate_kbps: f64,
    pub n_rt: u32,
    pub n_nrt: u32,
    pub max_mpdu_delay_ms: f64,
    pub rtps_max_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleResult {
    pub b_poll: f64,
    pub alpha: f64,
    pub b_rt_total: f64,
    pub b_nrt_total: f64,
}

/// Splits the polling bandwidth, with alpha derived from the MPDU delay.
pub fn allocate(input: &ScheduleInput) -> Result<ScheduleResult, SchedulerError> {
    let alpha = compute_alpha(input.max_mpdu_delay_ms, input.rtps_max_latency_ms)?;
    allocate_with_alpha(
        input.total_bandwidth_kbps,
        input.n_ugs as f64 * input.ugs_rate_kbps,
        input.n_rt,
        input.n_nrt,
        alpha,
    )
}

/// Splits `B - ugs_reserved` between rtPS and nrtPS.
///
/// The two shares always add up to `b_poll` exactly: the larger one is obtained
/// by subtraction, which is exact for operands within a factor of two.
pub fn allocate_with_alpha(
    total_kbps: f64,
    ugs_reserved_kbps: f64,
    n_rt: u32,
    n_nrt: u32,
    alpha: f64,
) -> Result<ScheduleResult, SchedulerError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SchedulerError::InvalidAlpha(alpha));
    }
    if !(total_kbps.is_finite() && total_kbps >= 0.0) {
        return Err(SchedulerError::InvalidRate(total_kbps));
    }
    if !(ugs_reserved_kbps.is_finite() && ugs_reserved_kbps >= 0.0) {
        return Err(SchedulerError::InvalidRate(ugs_reserved_kbps));
    }
    if ugs_reserved_kbps > total_kbps {
        return Err(SchedulerError::UgsOvercommit {
            reserved: ugs_reserved_kbps,
            total: total_kbps,
        });
    }
    let b_poll = total_kbps - ugs_reserved_kbps;
    let w_rt = n_rt as f64 * alpha;
    let w_nrt = n_nrt as f64;
    let weight = w_rt + w_nrt;
    let (b_rt_total, b_nrt_total) = if weight == 0.0 {
        (0.0, 0.0)
    } else if w_rt >= w_nrt {
        let rt = b_poll * (w_rt / weight);
        (rt, b_poll - rt)
    } else {
        let nrt = b_poll * (w_nrt / weight);
        (b_poll - nrt, nrt)
    };
    Ok(ScheduleResult {
        b_poll,
        alpha,
        b_rt_total,
        b_nrt_total,
    })
}

/// Jain's fairness index `(sum r)^2 / (n sum r^2)`, in `[1/n, 1]`.
pub fn jain_fairness(rates: &[f64]) -> Result<f64, SchedulerError> {
    if rates.is_empty() {
        return Err(SchedulerError::EmptyRates);
    }
    if let Some(&bad) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(SchedulerError::InvalidRate(bad));
    }
    let max = rates.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(SchedulerError::AllZeroRates);
    }
    let n = rates.len() as f64;
    // Normalising by the maximum keeps the squares in range for any input scale.
    let (sum, sum_sq) = rates
        .iter()
        .map(|r| r / max)
        .fold((0.0, 0.0), |(s, q), x| (s + x, q + x * x));
    Ok((sum * sum / (n * sum_sq)).clamp(1.0 / n, 1.0))
}

/// Utilization and fairness of one set of per-connection rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationMetrics {
    /// Allocated over total bandwidth.
    pub utilization: f64,
    /// `None` when no connection is present.
    pub jfi: Option<f64>,
}

/// Per-connection rates (kbps) of each class and the metrics they produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub rate_kbps: [f64; 3],
    pub metrics: AllocationMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescheduleReport {
    /// Rates granted by admission control.
    pub before: Allocation,
    /// Rates after the polling bandwidth is redistributed.
    pub after: Allocation,
}

fn metrics(state: &SystemState, rates: [f64; 3], total_kbps: f64) -> AllocationMetrics {
    let mut flat = Vec::with_capacity(state.total_connections() as usize);
    let mut used = 0.0;
    for (i, class) in ServiceClass::ALL.iter().enumerate() {
        let n = state.count(*class);
        used += n as f64 * rates[i];
        flat.extend(std::iter::repeat_n(rates[i], n as usize));
    }
    AllocationMetrics {
        utilization: used / total_kbps,
        jfi: jain_fairness(&flat).ok(),
    }
}

/// Compares the admission-granted allocation with the rescheduled one.
///
/// Rescheduling hands each polling class an equal per-flow share of its pool,
/// capped at the class MSTR; what a capped class cannot use goes to the other.
pub fn reschedule_report(
    state: &SystemState,
    cfg: &CellConfig,
    alpha: f64,
) -> Result<RescheduleReport, SchedulerError> {
    state.check(cfg).map_err(SchedulerError::InvalidState)?;
    let total = cfg.total_bandwidth_kbps;
    let b_u = cfg.mstr(ServiceClass::Ugs) as f64;
    let before_rates = [b_u, state.d_r as f64, state.d_n as f64];

    let split = allocate_with_alpha(total, state.n_u as f64 * b_u, state.n_r, state.n_n, alpha)?;
    let cap_r = cfg.mstr(ServiceClass::Rtps) as f64;
    let cap_n = cfg.mstr(ServiceClass::Nrtps) as f64;
    let (n_r, n_n) = (state.n_r as f64, state.n_n as f64);

    let mut rt = if state.n_r > 0 {
        (split.b_rt_total / n_r).min(cap_r)
    } else {
        0.0
    };
    let mut nrt = 0.0;
    if state.n_n > 0 {
        let pool = split.b_nrt_total + (split.b_rt_total - n_r * rt).max(0.0);
        nrt = (pool / n_n).min(cap_n);
    }
    if state.n_r > 0 && rt < cap_r {
        let pool = split.b_rt_total + (split.b_nrt_total - n_n * nrt).max(0.0);
        rt = (pool / n_r).min(cap_r);
    }
    let after_rates = [
        b_u,
        if state.n_r > 0 { rt } else { before_rates[1] },
        if state.n_n > 0 { nrt } else { before_rates[2] },
    ];

    Ok(RescheduleReport {
        before: Allocation {
            rate_kbps: before_rates,
            metrics: metrics(state, before_rates, total),
        },
        after: Allocation {
            rate_kbps: after_rates,
            metrics: metrics(state, after_rates, total),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_examples() {
        assert_eq!(compute_alpha(10.5, 21.0).unwrap(), 0.5);
        assert_eq!(compute_alpha(21.0, 21.0).unwrap(), 1.0);
        for l in [0.3, 1.0, 7.0, 1e6] {
            assert_eq!(compute_alpha(l, 2.0 * l).unwrap(), 0.5);
        }
        assert!(compute_alpha(0.0, 21.0).is_err());
        assert!(compute_alpha(1.0, -1.0).is_err());
        assert!(matches!(
            compute_alpha(22.0, 21.0),
            Err(SchedulerError::DelayExceedsLatency { .. })
        ));
    }

    #[test]
    fn allocate_example() {
        let input = ScheduleInput {
            total_bandwidth_kbps: 10_000.0,
            n_ugs: 4,
            ugs_rate_kbps: 256.0,
            n_rt: 2,
            n_nrt: 3,
            max_mpdu_delay_ms: 10.5,
            rtps_max_latency_ms: 21.0,
        };
        let r = allocate(&input).unwrap();
        assert_eq!(r.alpha, 0.5);
        assert_eq!(r.b_poll, 8976.0);
        assert!((r.b_rt_total - 2244.0).abs() < 1e-9);
        assert!((r.b_nrt_total - 6732.0).abs() < 1e-9);
        assert_eq!(r.b_rt_total + r.b_nrt_total, r.b_poll);
    }

    #[test]
    fn one_sided_splits() {
        let r = allocate_with_alpha(10_000.0, 1024.0, 0, 3, 0.5).unwrap();
        assert_eq!((r.b_rt_total, r.b_nrt_total), (0.0, 8976.0));
        let r = allocate_with_alpha(10_000.0, 1024.0, 2, 0, 0.5).unwrap();
        assert_eq!((r.b_rt_total, r.b_nrt_total), (8976.0, 0.0));
        let r = allocate_with_alpha(10_000.0, 1024.0, 0, 0, 0.5).unwrap();
        assert_eq!((r.b_poll, r.b_rt_total, r.b_nrt_total), (8976.0, 0.0, 0.0));
    }

    #[test]
    fn ugs_overcommit_is_an_error() {
        assert!(matches!(
            allocate_with_alpha(1000.0, 1024.0, 1, 1, 0.5),
            Err(SchedulerError::UgsOvercommit { .. })
        ));
    }

    #[test]
    fn fairness_examples() {
        assert_eq!(jain_fairness(&[3.0; 4]).unwrap(), 1.0);
        assert_eq!(jain_fairness(&[5.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!((jain_fairness(&[2.0, 4.0]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(jain_fairness(&[]), Err(SchedulerError::EmptyRates));
        assert_eq!(jain_fairness(&[0.0, 0.0]), Err(SchedulerError::AllZeroRates));
        assert!(jain_fairness(&[1.0, -1.0]).is_err());
        assert!(jain_fairness(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn nothing_to_reschedule_without_polling_connections() {
        let cfg = CellConfig::with_default_classes(10_000.0);
        let s = SystemState {
            n_u: 3,
            ..SystemState::empty(&cfg)
        };
        let r = reschedule_report(&s, &cfg, 0.5).unwrap();
        assert_eq!(r.before, r.after);
        let empty = reschedule_report(&SystemState::empty(&cfg), &cfg, 0.5).unwrap();
        assert_eq!(empty.before.metrics.jfi, None);
        assert_eq!(empty.before.metrics.utilization, 0.0);
    }

    #[test]
    fn degraded_state_gains_fairness() {
        let cfg = CellConfig::with_default_classes(10_000.0);
        let s = SystemState {
            n_u: 0,
            n_r: 1,
            d_r: 512,
            n_n: 1,
            d_n: 256,
        };
        let r = reschedule_report(&s, &cfg, 0.5).unwrap();
        // before: (512 + 256)^2 / (2 (512^2 + 256^2))
        assert!((r.before.metrics.jfi.unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(r.after.rate_kbps, [256.0, 1024.0, 1024.0]);
        assert_eq!(r.after.metrics.jfi, Some(1.0));
        assert!(r.after.metrics.utilization > r.before.metrics.utilization);
    }

    #[test]
    fn capped_pool_spills_to_the_other_class() {
        let cfg = CellConfig::with_default_classes(2048.0);
        let s = SystemState {
            n_u: 0,
            n_r: 1,
            d_r: 512,
            n_n: 1,
            d_n: 1024,
        };
        let r = reschedule_report(&s, &cfg, 0.5).unwrap();
        // pools: rt = 2048/3 = 682.67, nrt = 1365.33 -> capped at 1024, residue to rtPS.
        assert_eq!(r.after.rate_kbps[2], 1024.0);
        assert!((r.after.rate_kbps[1] - 1024.0).abs() < 1e-9);
        assert!((r.after.metrics.utilization - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_state_is_rejected() {
        let cfg = CellConfig::with_default_classes(1000.0);
        let s = SystemState {
            n_u: 4,
            ..SystemState::empty(&cfg)
        };
        assert!(matches!(
            reschedule_report(&s, &cfg, 0.5),
            Err(SchedulerError::InvalidState(_))
        ));
    }
}
