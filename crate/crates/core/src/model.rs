//! Shared vocabulary: service classes, traffic, cell configuration and the
//! five-component system state `(n_u, n_r, d_r, n_n, d_n)`.
//!
//! Bandwidth quantities are kbps throughout. Per-connection allocations of the
//! degradable classes (rtPS, nrtPS) live on a grid `mrtr + k * step` so the set of
//! reachable states is finite.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Service classes admitted by the CAC. ertPS is folded into rtPS and BE is not
/// admission-controlled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceClass {
    Ugs,
    Rtps,
    Nrtps,
}

impl ServiceClass {
    pub const ALL: [ServiceClass; 3] = [ServiceClass::Ugs, ServiceClass::Rtps, ServiceClass::Nrtps];

    pub fn name(self) -> &'static str {
        match self {
            ServiceClass::Ugs => "ugs",
            ServiceClass::Rtps => "rtps",
            ServiceClass::Nrtps => "nrtps",
        }
    }

    /// Whether per-connection bandwidth may be lowered toward MRTR.
    pub fn is_degradable(self) -> bool {
        !matches!(self, ServiceClass::Ugs)
    }
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceClass::Ugs => "UGS",
            ServiceClass::Rtps => "rtPS",
            ServiceClass::Nrtps => "nrtPS",
        })
    }
}

/// One value per service class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerClass<T> {
    pub ugs: T,
    pub rtps: T,
    pub nrtps: T,
}

impl<T> PerClass<T> {
    pub fn new(ugs: T, rtps: T, nrtps: T) -> Self {
        PerClass { ugs, rtps, nrtps }
    }

    pub fn from_fn(mut f: impl FnMut(ServiceClass) -> T) -> Self {
        PerClass {
            ugs: f(ServiceClass::Ugs),
            rtps: f(ServiceClass::Rtps),
            nrtps: f(ServiceClass::Nrtps),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerClass<U> {
        PerClass {
            ugs: f(&self.ugs),
            rtps: f(&self.rtps),
            nrtps: f(&self.nrtps),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ServiceClass, &T)> {
        [
            (ServiceClass::Ugs, &self.ugs),
            (ServiceClass::Rtps, &self.rtps),
            (ServiceClass::Nrtps, &self.nrtps),
        ]
        .into_iter()
    }
}

impl<T: Clone> PerClass<T> {
    pub fn splat(value: T) -> Self {
        PerClass {
            ugs: value.clone(),
            rtps: value.clone(),
            nrtps: value,
        }
    }
}

impl<T> Index<ServiceClass> for PerClass<T> {
    type Output = T;

    fn index(&self, class: ServiceClass) -> &T {
        match class {
            ServiceClass::Ugs => &self.ugs,
            ServiceClass::Rtps => &self.rtps,
            ServiceClass::Nrtps => &self.nrtps,
        }
    }
}

impl<T> IndexMut<ServiceClass> for PerClass<T> {
    fn index_mut(&mut self, class: ServiceClass) -> &mut T {
        match class {
            ServiceClass::Ugs => &mut self.ugs,
            ServiceClass::Rtps => &mut self.rtps,
            ServiceClass::Nrtps => &mut self.nrtps,
        }
    }
}

/// QoS contract of one service class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceClassParams {
    pub class: ServiceClass,
    /// Maximum sustained traffic rate, kbps.
    pub mstr_kbps: u32,
    /// Minimum reserved traffic rate, kbps.
    pub mrtr_kbps: u32,
    /// Token bucket size, bits.
    pub bucket_size_bits: f64,
    /// Maximum latency, ms. Only rtPS carries one.
    pub max_latency_ms: Option<f64>,
    pub eb_n0_db: f64,
    /// Token arrival rate, kbps.
    pub token_rate_kbps: f64,
}

impl ServiceClassParams {
    /// UGS 256/256 kbps, 64-bit bucket, 3.6 dB.
    pub fn default_ugs() -> Self {
        ServiceClassParams {
            class: ServiceClass::Ugs,
            mstr_kbps: 256,
            mrtr_kbps: 256,
            bucket_size_bits: 64.0,
            max_latency_ms: None,
            eb_n0_db: 3.6,
            token_rate_kbps: 256.0,
        }
    }

    /// rtPS 1024/512 kbps, 10240-bit bucket, 21 ms latency, 6.3 dB.
    pub fn default_rtps() -> Self {
        ServiceClassParams {
            class: ServiceClass::Rtps,
            mstr_kbps: 1024,
            mrtr_kbps: 512,
            bucket_size_bits: 10_240.0,
            max_latency_ms: Some(21.0),
            eb_n0_db: 6.3,
            token_rate_kbps: 512.0,
        }
    }

    /// nrtPS 1024/256 kbps, 10240-bit bucket, 8.1 dB.
    pub fn default_nrtps() -> Self {
        ServiceClassParams {
            class: ServiceClass::Nrtps,
            mstr_kbps: 1024,
            mrtr_kbps: 256,
            bucket_size_bits: 10_240.0,
            max_latency_ms: None,
            eb_n0_db: 8.1,
            token_rate_kbps: 256.0,
        }
    }

    /// Linear E_b/N_0.
    pub fn eb_n0_linear(&self) -> f64 {
        db_to_linear(self.eb_n0_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// How the SINR outage gate of the admission controller is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutageModel {
    /// `(Eb/N0)_i / sum_x n_x (Eb/N0)_x` against the threshold, the form used by
    /// the blocking/dropping/outage condition table.
    #[default]
    Aggregate,
    /// Noise-normalised form `(Eb/N0)_i r_i / W / (sum_x n_x (Eb/N0)_x r_x / W + 1)`.
    ///
    /// With `r_i = MRTR` this is strictly below the threshold for UGS whenever
    /// any connection is present, so a UGS request is only ever admitted into
    /// an empty cell.
    Normalized,
}

impl OutageModel {
    pub fn name(self) -> &'static str {
        match self {
            OutageModel::Aggregate => "aggregate",
            OutageModel::Normalized => "normalized",
        }
    }
}

/// Static description of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    /// `B`, kbps. Normally the raw data rate of the active MCS.
    pub total_bandwidth_kbps: f64,
    /// `f`, ms.
    pub frame_duration_ms: f64,
    /// `W`, Hz.
    pub channel_bandwidth_hz: f64,
    pub classes: PerClass<ServiceClassParams>,
    /// Allocation grid quantum, kbps.
    pub degradation_step_kbps: u32,
    pub outage_model: OutageModel,
}

impl CellConfig {
    /// Default QoS parameters, 1 ms frames, 20 MHz channel, 64 kbps grid.
    pub fn with_default_classes(total_bandwidth_kbps: f64) -> Self {
        CellConfig {
            total_bandwidth_kbps,
            frame_duration_ms: 1.0,
            channel_bandwidth_hz: 20e6,
            classes: PerClass::new(
                ServiceClassParams::default_ugs(),
                ServiceClassParams::default_rtps(),
                ServiceClassParams::default_nrtps(),
            ),
            degradation_step_kbps: 64,
            outage_model: OutageModel::default(),
        }
    }

    pub fn class(&self, class: ServiceClass) -> &ServiceClassParams {
        &self.classes[class]
    }

    pub fn mstr(&self, class: ServiceClass) -> u32 {
        self.classes[class].mstr_kbps
    }

    pub fn mrtr(&self, class: ServiceClass) -> u32 {
        self.classes[class].mrtr_kbps
    }

    /// Number of grid points between MRTR and MSTR inclusive.
    pub fn grid_points(&self, class: ServiceClass) -> u32 {
        if !class.is_degradable() {
            return 1;
        }
        (self.mstr(class) - self.mrtr(class)) / self.degradation_step_kbps + 1
    }

    /// `m = L / f` for rtPS.
    pub fn latency_frames(&self) -> Option<f64> {
        self.classes
            .rtps
            .max_latency_ms
            .map(|l| l / self.frame_duration_ms)
    }

    /// Shifts every class's E_b/N_0 by the same number of dB.
    pub fn with_eb_n0_offset(&self, offset_db: f64) -> Self {
        let mut cfg = self.clone();
        for class in ServiceClass::ALL {
            cfg.classes[class].eb_n0_db += offset_db;
        }
        cfg
    }

    /// Stable digest of the configuration, used to pair reports.
    pub fn digest(&self) -> u64 {
        // FNV-1a over the Debug rendering: stable within a build, which is all we
        // need to pair reports produced in the same process.
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// A broken configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks every invariant of a cell configuration and lists all violations.
pub fn validate(cfg: &CellConfig) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut bad = |msg: String| out.push(Violation(msg));

    if !(cfg.total_bandwidth_kbps.is_finite() && cfg.total_bandwidth_kbps > 0.0) {
        bad(format!(
            "total bandwidth must be positive, got {} kbps",
            cfg.total_bandwidth_kbps
        ));
    }
    if !(cfg.frame_duration_ms.is_finite() && cfg.frame_duration_ms > 0.0) {
        bad(format!(
            "frame duration must be positive, got {} ms",
            cfg.frame_duration_ms
        ));
    }
    if !(cfg.channel_bandwidth_hz.is_finite() && cfg.channel_bandwidth_hz > 0.0) {
        bad(format!(
            "channel bandwidth must be positive, got {} Hz",
            cfg.channel_bandwidth_hz
        ));
    }
    if cfg.degradation_step_kbps == 0 {
        bad("degradation step must be positive".into());
    }

    for (slot, p) in cfg.classes.iter() {
        if p.class != slot {
            bad(format!("{slot} slot holds parameters for {}", p.class));
        }
        if p.mrtr_kbps == 0 {
            bad(format!("{slot}: MRTR must be positive"));
        }
        if p.mrtr_kbps > p.mstr_kbps {
            bad(format!(
                "{slot}: MRTR {} kbps exceeds MSTR {} kbps",
                p.mrtr_kbps, p.mstr_kbps
            ));
        }
        if slot == ServiceClass::Ugs && p.mstr_kbps != p.mrtr_kbps {
            bad(format!(
                "UGS is fixed-rate: MSTR {} kbps must equal MRTR {} kbps",
                p.mstr_kbps, p.mrtr_kbps
            ));
        }
        if !p.eb_n0_db.is_finite() {
            bad(format!("{slot}: E_b/N_0 must be finite"));
        }
        if !(p.token_rate_kbps.is_finite() && p.token_rate_kbps > 0.0) {
            bad(format!("{slot}: token rate must be positive"));
        }
        if !(p.bucket_size_bits.is_finite() && p.bucket_size_bits >= 0.0) {
            bad(format!("{slot}: bucket size must be non-negative"));
        }
        match (slot, p.max_latency_ms) {
            (ServiceClass::Rtps, None) => bad("rtPS: maximum latency is required".into()),
            (ServiceClass::Rtps, Some(l)) => {
                if !(l > cfg.frame_duration_ms) {
                    bad(format!(
                        "rtPS: latency {l} ms must exceed the frame duration {} ms",
                        cfg.frame_duration_ms
                    ));
                } else {
                    let m = l / cfg.frame_duration_ms;
                    if (m - m.round()).abs() > 1e-9 * m.max(1.0) {
                        bad(format!("rtPS: latency / frame duration = {m} must be an integer"));
                    }
                }
            }
            (_, Some(_)) => bad(format!("{slot}: only rtPS carries a maximum latency")),
            (_, None) => {}
        }
        if slot.is_degradable()
            && cfg.degradation_step_kbps > 0
            && p.mrtr_kbps <= p.mstr_kbps
            && (p.mstr_kbps - p.mrtr_kbps) % cfg.degradation_step_kbps != 0
        {
            bad(format!(
                "{slot}: degradation step {} kbps does not divide the MSTR-MRTR span {} kbps",
                cfg.degradation_step_kbps,
                p.mstr_kbps - p.mrtr_kbps
            ));
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Poisson arrival rates (per second) and exponential service rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficModel {
    pub lambda_new: PerClass<f64>,
    pub lambda_handoff: PerClass<f64>,
    pub mu: PerClass<f64>,
}

impl TrafficModel {
    /// All six arrival streams at `lambda`, every class served at `mu`.
    pub fn uniform(lambda: f64, mu: f64) -> Self {
        TrafficModel {
            lambda_new: PerClass::splat(lambda),
            lambda_handoff: PerClass::splat(lambda),
            mu: PerClass::splat(mu),
        }
    }

    /// Only UGS traffic, split between new and handoff streams.
    pub fn ugs_only(lambda_new: f64, lambda_handoff: f64, mu: f64) -> Self {
        TrafficModel {
            lambda_new: PerClass::new(lambda_new, 0.0, 0.0),
            lambda_handoff: PerClass::new(lambda_handoff, 0.0, 0.0),
            mu: PerClass::splat(mu),
        }
    }

    pub fn lambda(&self, class: ServiceClass, kind: RequestKind) -> f64 {
        match kind {
            RequestKind::New => self.lambda_new[class],
            RequestKind::Handoff => self.lambda_handoff[class],
        }
    }

    /// Mean of the six arrival rates; the label used in sweep output.
    pub fn nominal_rate(&self) -> f64 {
        let total: f64 = ServiceClass::ALL
            .iter()
            .map(|&c| self.lambda_new[c] + self.lambda_handoff[c])
            .sum();
        total / 6.0
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        for class in ServiceClass::ALL {
            for (name, v) in [
                ("new arrival rate", self.lambda_new[class]),
                ("handoff arrival rate", self.lambda_handoff[class]),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    out.push(Violation(format!(
                        "{class}: {name} must be non-negative, got {v}"
                    )));
                }
            }
            let mu = self.mu[class];
            if !(mu.is_finite() && mu > 0.0) {
                out.push(Violation(format!(
                    "{class}: service rate must be positive, got {mu}"
                )));
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// Whether a connection request originates in the cell or is handed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RequestKind {
    New,
    Handoff,
}

impl RequestKind {
    pub const ALL: [RequestKind; 2] = [RequestKind::New, RequestKind::Handoff];
}

/// CTMC state: connection counts and the current per-connection allocation of
/// the degradable classes, kbps.
///
/// When a degradable class has no connections its allocation is pinned to MSTR so
/// that logically identical states compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    pub n_u: u32,
    pub n_r: u32,
    pub d_r: u32,
    pub n_n: u32,
    pub d_n: u32,
}

impl SystemState {
    pub fn empty(cfg: &CellConfig) -> Self {
        SystemState {
            n_u: 0,
            n_r: 0,
            d_r: cfg.mstr(ServiceClass::Rtps),
            n_n: 0,
            d_n: cfg.mstr(ServiceClass::Nrtps),
        }
    }

    pub fn count(&self, class: ServiceClass) -> u32 {
        match class {
            ServiceClass::Ugs => self.n_u,
            ServiceClass::Rtps => self.n_r,
            ServiceClass::Nrtps => self.n_n,
        }
    }

    pub fn set_count(&mut self, class: ServiceClass, n: u32) {
        match class {
            ServiceClass::Ugs => self.n_u = n,
            ServiceClass::Rtps => self.n_r = n,
            ServiceClass::Nrtps => self.n_n = n,
        }
    }

    /// Per-connection allocation of a class, kbps.
    pub fn allocation(&self, class: ServiceClass, cfg: &CellConfig) -> u32 {
        match class {
            ServiceClass::Ugs => cfg.mstr(ServiceClass::Ugs),
            ServiceClass::Rtps => self.d_r,
            ServiceClass::Nrtps => self.d_n,
        }
    }

    pub fn total_connections(&self) -> u32 {
        self.n_u + self.n_r + self.n_n
    }

    /// `n_u B_U + n_r d_r + n_n d_n`, kbps.
    pub fn used_kbps(&self, cfg: &CellConfig) -> u64 {
        ServiceClass::ALL
            .iter()
            .map(|&c| self.count(c) as u64 * self.allocation(c, cfg) as u64)
            .sum()
    }

    pub fn fits(&self, cfg: &CellConfig) -> bool {
        self.used_kbps(cfg) as f64 <= cfg.total_bandwidth_kbps
    }

    /// Pins allocations of empty classes to MSTR.
    pub fn canonical(mut self, cfg: &CellConfig) -> Self {
        if self.n_r == 0 {
            self.d_r = cfg.mstr(ServiceClass::Rtps);
        }
        if self.n_n == 0 {
            self.d_n = cfg.mstr(ServiceClass::Nrtps);
        }
        self
    }

    /// Budget, bounds, grid and placeholder invariants.
    pub fn check(&self, cfg: &CellConfig) -> Result<(), String> {
        if !self.fits(cfg) {
            return Err(format!(
                "{self} uses {} kbps of {} kbps",
                self.used_kbps(cfg),
                cfg.total_bandwidth_kbps
            ));
        }
        for (class, d, n) in [
            (ServiceClass::Rtps, self.d_r, self.n_r),
            (ServiceClass::Nrtps, self.d_n, self.n_n),
        ] {
            let (lo, hi) = (cfg.mrtr(class), cfg.mstr(class));
            if n == 0 && d != hi {
                return Err(format!("{self}: empty {class} must carry its MSTR placeholder"));
            }
            if d < lo || d > hi {
                return Err(format!("{self}: {class} allocation {d} outside [{lo}, {hi}]"));
            }
            if (hi - d) % cfg.degradation_step_kbps != 0 {
                return Err(format!("{self}: {class} allocation {d} is off the grid"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.n_u, self.n_r, self.d_r, self.n_n, self.d_n
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_classes_validate_for_every_mcs_bandwidth() {
        for b in [15_584.4, 31_168.8, 70_129.9] {
            assert_eq!(validate(&CellConfig::with_default_classes(b)), Ok(()));
        }
    }

    #[test]
    fn mrtr_above_mstr_is_reported() {
        let mut cfg = CellConfig::with_default_classes(10_000.0);
        cfg.classes.nrtps.mrtr_kbps = 2048;
        let errs = validate(&cfg).unwrap_err();
        assert!(errs.iter().any(|v| v.0.contains("exceeds MSTR")), "{errs:?}");
    }

    #[test]
    fn non_dividing_grid_is_reported() {
        let mut cfg = CellConfig::with_default_classes(10_000.0);
        cfg.degradation_step_kbps = 100;
        let errs = validate(&cfg).unwrap_err();
        assert!(errs
            .iter()
            .any(|v| v.0.contains("rtPS") && v.0.contains("does not divide")));
        assert!(errs
            .iter()
            .any(|v| v.0.contains("nrtPS") && v.0.contains("does not divide")));
    }

    #[test]
    fn latency_must_be_whole_frames() {
        let mut cfg = CellConfig::with_default_classes(10_000.0);
        cfg.classes.rtps.max_latency_ms = Some(20.5);
        assert!(validate(&cfg).is_err());
        cfg.classes.rtps.max_latency_ms = Some(0.5);
        assert!(validate(&cfg).is_err());
        cfg.classes.rtps.max_latency_ms = None;
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn ugs_must_be_fixed_rate() {
        let mut cfg = CellConfig::with_default_classes(10_000.0);
        cfg.classes.ugs.mstr_kbps = 512;
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn violations_are_all_listed() {
        let mut cfg = CellConfig::with_default_classes(-1.0);
        cfg.frame_duration_ms = 0.0;
        cfg.classes.ugs.mrtr_kbps = 0;
        let errs = validate(&cfg).unwrap_err();
        assert!(errs.len() >= 3, "{errs:?}");
    }

    #[test]
    fn canonical_placeholder_collapses_empty_classes() {
        let cfg = CellConfig::with_default_classes(10_000.0);
        let a = SystemState {
            n_u: 1,
            n_r: 0,
            d_r: 512,
            n_n: 0,
            d_n: 256,
        }
        .canonical(&cfg);
        assert_eq!(
            a,
            SystemState {
                n_u: 1,
                ..SystemState::empty(&cfg)
            }
        );
        assert!(a.check(&cfg).is_ok());
        let off_grid = SystemState {
            n_u: 0,
            n_r: 1,
            d_r: 600,
            n_n: 0,
            d_n: 1024,
        };
        assert!(off_grid.check(&cfg).is_err());
    }

    #[test]
    fn used_bandwidth_counts_allocations() {
        let cfg = CellConfig::with_default_classes(10_000.0);
        let s = SystemState {
            n_u: 4,
            n_r: 2,
            d_r: 768,
            n_n: 3,
            d_n: 512,
        };
        assert_eq!(s.used_kbps(&cfg), 4 * 256 + 2 * 768 + 3 * 512);
    }
}
