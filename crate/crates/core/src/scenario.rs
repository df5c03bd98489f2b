//! Flat `key = value` scenario files.
//!
//! One assignment per line, `#` starts a comment. Keys are listed in
//! [`KEYS`]; anything else is an error. `lambda` and `mu` set every arrival or
//! service rate at once and are applied before the per-class keys, so
//! `lambda = 1` together with `rtps.lambda_new = 2` means what it says.
//!
//! Overrides (`key=value` strings) are applied after the file and before
//! validation.

use std::collections::BTreeMap;

use crate::amc;
use crate::ctmc::AnalysisOptions;
use crate::des::DEFAULT_BATCHES;
use crate::error::ScenarioError;
use crate::model::{self, CellConfig, OutageModel, ServiceClass, TrafficModel, Violation};
use crate::phy::{self, McsProfile, PhyConfig};
use crate::scheduler::DEFAULT_ALPHA;

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "mcs",
    "channel_bandwidth_hz",
    "fft_size",
    "sampling_factor",
    "cyclic_prefix",
    "total_bandwidth_kbps",
    "frame_duration_ms",
    "degradation_step_kbps",
    "outage_model",
    "alpha",
    "lambda",
    "mu",
    "ugs.mstr_kbps",
    "ugs.mrtr_kbps",
    "ugs.bucket_size_bits",
    "ugs.eb_n0_db",
    "ugs.token_rate_kbps",
    "ugs.lambda_new",
    "ugs.lambda_handoff",
    "ugs.mu",
    "rtps.mstr_kbps",
    "rtps.mrtr_kbps",
    "rtps.bucket_size_bits",
    "rtps.max_latency_ms",
    "rtps.eb_n0_db",
    "rtps.token_rate_kbps",
    "rtps.lambda_new",
    "rtps.lambda_handoff",
    "rtps.mu",
    "nrtps.mstr_kbps",
    "nrtps.mrtr_kbps",
    "nrtps.bucket_size_bits",
    "nrtps.eb_n0_db",
    "nrtps.token_rate_kbps",
    "nrtps.lambda_new",
    "nrtps.lambda_handoff",
    "nrtps.mu",
    "seed",
    "events",
    "warmup_events",
    "batches",
    "state_cap",
    "direct_solve_limit",
    "load_grid",
    "ebn0_grid",
    "epsilon",
    "mcs_set",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mcs: McsProfile,
    pub phy: PhyConfig,
    /// Replaces the MCS raw data rate as `B` when set.
    pub total_bandwidth_override_kbps: Option<f64>,
    pub cell: CellConfig,
    pub traffic: TrafficModel,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub events: u64,
    /// Defaults to a tenth of `events`.
    pub warmup_events: Option<u64>,
    pub batches: usize,
    pub analysis: AnalysisOptions,
    pub load_grid: Vec<f64>,
    pub ebn0_grid: Vec<f64>,
    pub epsilon: f64,
    pub mcs_set: Vec<McsProfile>,
}

impl Default for Scenario {
    /// QPSK-1/2 on a 20 MHz, FFT 2048, 1/32 cyclic-prefix PHY; default classes,
    /// 1 ms frames, 64 kbps grid; every arrival stream at 1/s, service rate 0.2/s.
    fn default() -> Self {
        let phy = PhyConfig::wimax_default();
        let mcs = McsProfile::QPSK_1_2;
        Scenario {
            mcs,
            phy,
            total_bandwidth_override_kbps: None,
            cell: CellConfig::with_default_classes(phy::raw_data_rate(&mcs, &phy) / 1e3),
            traffic: TrafficModel::uniform(1.0, 0.2),
            alpha: DEFAULT_ALPHA,
            seed: None,
            events: 1_000_000,
            warmup_events: None,
            batches: DEFAULT_BATCHES,
            analysis: AnalysisOptions::default(),
            load_grid: (1..=10).map(f64::from).collect(),
            ebn0_grid: amc::default_ebn0_grid(),
            epsilon: amc::DEFAULT_EPSILON,
            mcs_set: McsProfile::ALL.to_vec(),
        }
    }
}

/// Splits `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String), ScenarioError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ScenarioError::MalformedOverride(text.to_string())),
    }
}

fn invalid(key: &str, value: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        message: message.into(),
    }
}

fn num(key: &str, value: &str) -> Result<f64, ScenarioError> {
    value
        .parse::<f64>()
        .map_err(|_| invalid(key, value, "expected a number"))
}

fn int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ScenarioError> {
    value
        .parse::<T>()
        .map_err(|_| invalid(key, value, "expected a non-negative integer"))
}

fn fraction(key: &str, value: &str) -> Result<(u32, u32), ScenarioError> {
    let bad = || invalid(key, value, "expected a fraction such as 8/7");
    match value.split_once('/') {
        Some((n, d)) => Ok((
            n.trim().parse().map_err(|_| bad())?,
            d.trim().parse().map_err(|_| bad())?,
        )),
        None => Ok((value.parse().map_err(|_| bad())?, 1)),
    }
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, ScenarioError> {
    value.split(',').map(|x| num(key, x.trim())).collect()
}

fn mcs(key: &str, value: &str) -> Result<McsProfile, ScenarioError> {
    value
        .parse()
        .map_err(|e: crate::error::PhyError| invalid(key, value, e.to_string()))
}

/// Applies shortcut keys before per-class ones; otherwise keeps the given order.
fn precedence(key: &str) -> u8 {
    match key {
        "lambda" | "mu" => 0,
        _ => 1,
    }
}

impl Scenario {
    /// Parses a scenario file, applies `overrides` and validates the result.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Scenario, ScenarioError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ScenarioError::Syntax {
                    line: i + 1,
                    message: "missing key".into(),
                });
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(ScenarioError::Syntax {
                    line: i + 1,
                    message: format!("`{key}` is assigned twice"),
                });
            }
        }
        for (k, v) in overrides {
            entries.insert(k.clone(), v.clone());
        }
        if let Some(k) = entries.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ScenarioError::UnknownKey(k.clone()));
        }

        let mut ordered: Vec<(&String, &String)> = entries.iter().collect();
        ordered.sort_by_key(|(k, _)| precedence(k));

        let mut s = Scenario::default();
        let mut phy_parts = (
            s.phy.channel_bandwidth_hz(),
            s.phy.fft_size(),
            (8u32, 7u32),
            (1u32, 32u32),
        );
        for (key, value) in ordered {
            s.apply(key, value, &mut phy_parts)?;
        }
        s.phy = PhyConfig::new(phy_parts.0, phy_parts.1, phy_parts.2, phy_parts.3)?;
        s.cell.channel_bandwidth_hz = phy_parts.0 as f64;
        s.cell.total_bandwidth_kbps = s
            .total_bandwidth_override_kbps
            .unwrap_or_else(|| phy::raw_data_rate(&s.mcs, &s.phy) / 1e3);
        s.validate().map_err(ScenarioError::Invalid)?;
        Ok(s)
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        phy_parts: &mut (u64, u32, (u32, u32), (u32, u32)),
    ) -> Result<(), ScenarioError> {
        if let Some((class, field)) = key.split_once('.') {
            let class = match class {
                "ugs" => ServiceClass::Ugs,
                "rtps" => ServiceClass::Rtps,
                _ => ServiceClass::Nrtps,
            };
            let p = &mut self.cell.classes[class];
            match field {
                "mstr_kbps" => p.mstr_kbps = int(key, value)?,
                "mrtr_kbps" => p.mrtr_kbps = int(key, value)?,
                "bucket_size_bits" => p.bucket_size_bits = num(key, value)?,
                "max_latency_ms" => p.max_latency_ms = Some(num(key, value)?),
                "eb_n0_db" => p.eb_n0_db = num(key, value)?,
                "token_rate_kbps" => p.token_rate_kbps = num(key, value)?,
                "lambda_new" => self.traffic.lambda_new[class] = num(key, value)?,
                "lambda_handoff" => self.traffic.lambda_handoff[class] = num(key, value)?,
                _ => self.traffic.mu[class] = num(key, value)?,
            }
            return Ok(());
        }
        match key {
            "mcs" => self.mcs = mcs(key, value)?,
            "channel_bandwidth_hz" => phy_parts.0 = int(key, value)?,
            "fft_size" => phy_parts.1 = int(key, value)?,
            "sampling_factor" => phy_parts.2 = fraction(key, value)?,
            "cyclic_prefix" => phy_parts.3 = fraction(key, value)?,
            "total_bandwidth_kbps" => self.total_bandwidth_override_kbps = Some(num(key, value)?),
            "frame_duration_ms" => self.cell.frame_duration_ms = num(key, value)?,
            "degradation_step_kbps" => self.cell.degradation_step_kbps = int(key, value)?,
            "outage_model" => {
                self.cell.outage_model = match value {
                    "aggregate" => OutageModel::Aggregate,
                    "normalized" => OutageModel::Normalized,
                    _ => return Err(invalid(key, value, "expected `aggregate` or `normalized`")),
                }
            }
            "alpha" => self.alpha = num(key, value)?,
            "lambda" => {
                let l = num(key, value)?;
                self.traffic = amc::traffic_at(&self.traffic, l);
            }
            "mu" => self.traffic.mu = model::PerClass::splat(num(key, value)?),
            "seed" => self.seed = Some(int(key, value)?),
            "events" => self.events = int(key, value)?,
            "warmup_events" => self.warmup_events = Some(int(key, value)?),
            "batches" => self.batches = int(key, value)?,
            "state_cap" => self.analysis.state_cap = int(key, value)?,
            "direct_solve_limit" => self.analysis.solve.direct_limit = int(key, value)?,
            "load_grid" => self.load_grid = list(key, value)?,
            "ebn0_grid" => self.ebn0_grid = list(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            _ => {
                self.mcs_set = if value == "all" {
                    McsProfile::ALL.to_vec()
                } else {
                    value
                        .split(',')
                        .map(|m| mcs(key, m.trim()))
                        .collect::<Result<_, _>>()?
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut v = model::validate(&self.cell).err().unwrap_or_default();
        v.extend(self.traffic.validate().err().unwrap_or_default());
        let mut bad = |m: String| v.push(Violation(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.events <= self.warmup() {
            bad(format!(
                "events ({}) must exceed warmup_events ({})",
                self.events,
                self.warmup()
            ));
        }
        if self.batches < 2 {
            bad("batches must be at least 2".into());
        }
        if self.analysis.state_cap == 0 {
            bad("state_cap must be positive".into());
        }
        for (name, grid) in [("load_grid", &self.load_grid), ("ebn0_grid", &self.ebn0_grid)] {
            if grid.is_empty()
                || grid.iter().any(|x| !x.is_finite())
                || grid.windows(2).any(|w| !(w[0] < w[1]))
            {
                bad(format!(
                    "{name} must be a non-empty, strictly ascending list of finite values"
                ));
            }
        }
        if self.load_grid.iter().any(|x| *x < 0.0) {
            bad("load_grid values must be non-negative".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.mcs_set.is_empty() {
            bad("mcs_set must not be empty".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_events.unwrap_or(self.events / 10)
    }

    /// Sweep specification over `ebn0_grid` and `mcs_set`.
    pub fn sweep_spec(&self) -> amc::SweepSpec {
        amc::SweepSpec {
            ebn0_grid: self.ebn0_grid.clone(),
            mcs_set: self.mcs_set.clone(),
            phy: self.phy,
            cell: self.cell.clone(),
            traffic: self.traffic,
            epsilon: self.epsilon,
            analysis: self.analysis,
        }
    }

    /// Load sweep over `load_grid` and `mcs_set`.
    pub fn load_sweep_spec(&self) -> amc::LoadSweepSpec {
        amc::LoadSweepSpec {
            lambdas: self.load_grid.clone(),
            mcs_set: self.mcs_set.clone(),
            phy: self.phy,
            cell: self.cell.clone(),
            traffic: self.traffic,
            alpha: self.alpha,
            analysis: self.analysis,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Scenario::parse(text, &[])
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(parse("# nothing\n\n").unwrap(), Scenario::default());
    }

    #[test]
    fn bandwidth_follows_the_mcs() {
        let s = parse("mcs = 64QAM-3/4\n").unwrap();
        assert!((s.cell.total_bandwidth_kbps - 70_129.87).abs() < 0.01);
        let s = parse("mcs = 64QAM-3/4\ntotal_bandwidth_kbps = 3000\n").unwrap();
        assert_eq!(s.cell.total_bandwidth_kbps, 3000.0);
    }

    #[test]
    fn shortcuts_apply_before_class_keys() {
        let s = parse("rtps.lambda_new = 2\nlambda = 0.5 # all streams\nmu = 0.1\nugs.mu = 0.3").unwrap();
        assert_eq!(s.traffic.lambda_new.rtps, 2.0);
        assert_eq!(s.traffic.lambda_new.ugs, 0.5);
        assert_eq!(s.traffic.lambda_handoff.rtps, 0.5);
        assert_eq!(s.traffic.mu.ugs, 0.3);
        assert_eq!(s.traffic.mu.nrtps, 0.1);
    }

    #[test]
    fn overrides_win_and_are_validated() {
        let o = vec![parse_override("degradation_step_kbps=256").unwrap()];
        let s = Scenario::parse("degradation_step_kbps = 64", &o).unwrap();
        assert_eq!(s.cell.degradation_step_kbps, 256);
        let o = vec![parse_override("degradation_step_kbps = 100").unwrap()];
        assert!(matches!(Scenario::parse("", &o), Err(ScenarioError::Invalid(_))));
        assert!(matches!(
            parse_override("novalue"),
            Err(ScenarioError::MalformedOverride(_))
        ));
    }

    #[test]
    fn syntax_and_key_errors() {
        assert!(matches!(
            parse("mcs QPSK-1/2"),
            Err(ScenarioError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse("a = 1\na = 2"),
            Err(ScenarioError::UnknownKey(_)) | Err(ScenarioError::Syntax { .. })
        ));
        assert!(matches!(
            parse("alpha = 1\nalpha = 1"),
            Err(ScenarioError::Syntax { line: 2, .. })
        ));
        assert!(matches!(parse("bogus = 1"), Err(ScenarioError::UnknownKey(k)) if k == "bogus"));
        assert!(matches!(
            parse("rtps.colour = 1"),
            Err(ScenarioError::UnknownKey(_))
        ));
        assert!(matches!(
            parse("alpha = x"),
            Err(ScenarioError::InvalidValue { .. })
        ));
        assert!(matches!(
            parse("mcs = 8PSK-1/2"),
            Err(ScenarioError::InvalidValue { .. })
        ));
        assert!(matches!(parse("cyclic_prefix = 1/3"), Err(ScenarioError::Phy(_))));
    }

    #[test]
    fn lists_and_models() {
        let s =
            parse("ebn0_grid = 1, 5, 9\nmcs_set = QPSK-1/2, 64QAM-3/4\noutage_model = normalized").unwrap();
        assert_eq!(s.ebn0_grid, vec![1.0, 5.0, 9.0]);
        assert_eq!(s.mcs_set, vec![McsProfile::QPSK_1_2, McsProfile::QAM64_3_4]);
        assert_eq!(s.cell.outage_model, OutageModel::Normalized);
        assert!(parse("ebn0_grid = 3, 2").is_err());
    }
}
