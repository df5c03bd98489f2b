//! OFDMA physical-layer rate calculator.
//!
//! Symbol timing follows the usual WiMAX OFDMA recipe: the sampling frequency is
//! the channel bandwidth scaled by the sampling factor, the useful symbol time is
//! `FFT size / Fs`, and the cyclic prefix adds a fraction `G` of that time. The raw
//! rate is `N * b * c / T` where `N` is the number of used sub-carriers for the
//! FFT size.
//!
//! Every ratio (sampling factor, coding rate, cyclic prefix) is kept as an exact
//! fraction so the whole rate is an exact rational number; conversion to `f64`
//! happens only at the very end.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::PhyError;

/// Exact rational used for all PHY arithmetic.
pub type Rational = Ratio<u128>;

/// Constellation used on each sub-carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qpsk => "QPSK",
            Modulation::Qam16 => "16QAM",
            Modulation::Qam64 => "64QAM",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A modulation plus convolutional coding rate.
///
/// Only the seven WiMAX combinations are constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct McsProfile {
    modulation: Modulation,
    coding_rate: (u32, u32),
}

impl McsProfile {
    pub const QPSK_1_2: McsProfile = McsProfile::raw(Modulation::Qpsk, 1, 2);
    pub const QPSK_3_4: McsProfile = McsProfile::raw(Modulation::Qpsk, 3, 4);
    pub const QAM16_1_2: McsProfile = McsProfile::raw(Modulation::Qam16, 1, 2);
    pub const QAM16_3_4: McsProfile = McsProfile::raw(Modulation::Qam16, 3, 4);
    pub const QAM64_1_2: McsProfile = McsProfile::raw(Modulation::Qam64, 1, 2);
    pub const QAM64_2_3: McsProfile = McsProfile::raw(Modulation::Qam64, 2, 3);
    pub const QAM64_3_4: McsProfile = McsProfile::raw(Modulation::Qam64, 3, 4);

    /// All supported profiles, in ascending raw-rate order.
    pub const ALL: [McsProfile; 7] = [
        McsProfile::QPSK_1_2,
        McsProfile::QPSK_3_4,
        McsProfile::QAM16_1_2,
        McsProfile::QAM16_3_4,
        McsProfile::QAM64_1_2,
        McsProfile::QAM64_2_3,
        McsProfile::QAM64_3_4,
    ];

    const fn raw(modulation: Modulation, num: u32, den: u32) -> Self {
        McsProfile {
            modulation,
            coding_rate: (num, den),
        }
    }

    pub fn new(modulation: Modulation, coding_num: u32, coding_den: u32) -> Result<Self, PhyError> {
        let candidate = McsProfile::raw(modulation, coding_num, coding_den);
        Self::ALL
            .iter()
            .copied()
            .find(|p| {
                p.modulation == modulation
                    && Ratio::new(p.coding_rate.0, p.coding_rate.1)
                        == Ratio::new(coding_num, coding_den.max(1))
            })
            .ok_or_else(|| PhyError::UnsupportedMcs(candidate.to_string()))
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.modulation.bits_per_symbol()
    }

    pub fn coding_rate(&self) -> Rational {
        Rational::new(self.coding_rate.0 as u128, self.coding_rate.1 as u128)
    }

    /// Coding rate rendered as `num/den`.
    pub fn coding_rate_label(&self) -> String {
        format!("{}/{}", self.coding_rate.0, self.coding_rate.1)
    }

    /// Information bits carried per sub-carrier per symbol (`b * c`).
    pub fn bits_per_subcarrier(&self) -> Rational {
        self.coding_rate() * Rational::from_integer(self.bits_per_symbol() as u128)
    }
}

impl fmt::Display for McsProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}/{}",
            self.modulation, self.coding_rate.0, self.coding_rate.1
        )
    }
}

impl FromStr for McsProfile {
    type Err = PhyError;

    /// Accepts `QPSK-1/2`, `16QAM-3/4`, `64qam_2/3` and similar spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PhyError::UnsupportedMcs(s.to_string());
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        let (m, rate) = norm.split_once('-').ok_or_else(bad)?;
        let modulation = match m {
            "QPSK" => Modulation::Qpsk,
            "16QAM" | "QAM16" => Modulation::Qam16,
            "64QAM" | "QAM64" => Modulation::Qam64,
            _ => return Err(bad()),
        };
        let (num, den) = rate.split_once('/').ok_or_else(bad)?;
        let num: u32 = num.trim().parse().map_err(|_| bad())?;
        let den: u32 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        McsProfile::new(modulation, num, den)
    }
}

/// Number of used sub-carriers for an FFT size, or `None` for unsupported sizes.
pub fn used_subcarriers(fft_size: u32) -> Option<u32> {
    match fft_size {
        2048 => Some(1440),
        1024 => Some(720),
        512 => Some(360),
        128 => Some(72),
        _ => None,
    }
}

/// Cyclic-prefix fractions allowed by the standard.
pub const CYCLIC_PREFIXES: [(u32, u32); 4] = [(1, 32), (1, 16), (1, 8), (1, 4)];

/// OFDMA PHY configuration. Validated on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhyConfig {
    channel_bandwidth_hz: u64,
    fft_size: u32,
    sampling_factor: (u32, u32),
    cyclic_prefix: (u32, u32),
}

impl PhyConfig {
    pub fn new(
        channel_bandwidth_hz: u64,
        fft_size: u32,
        sampling_factor: (u32, u32),
        cyclic_prefix: (u32, u32),
    ) -> Result<Self, PhyError> {
        if channel_bandwidth_hz == 0 {
            return Err(PhyError::InvalidConfig(
                "channel bandwidth must be positive".into(),
            ));
        }
        if used_subcarriers(fft_size).is_none() {
            return Err(PhyError::InvalidConfig(format!(
                "unsupported FFT size {fft_size} (expected 128, 512, 1024 or 2048)"
            )));
        }
        if sampling_factor.0 == 0 || sampling_factor.1 == 0 {
            return Err(PhyError::InvalidConfig(
                "sampling factor must be a positive fraction".into(),
            ));
        }
        if cyclic_prefix.1 == 0
            || !CYCLIC_PREFIXES
                .iter()
                .any(|&(n, d)| Ratio::new(n, d) == Ratio::new(cyclic_prefix.0, cyclic_prefix.1))
        {
            return Err(PhyError::InvalidConfig(format!(
                "unsupported cyclic prefix {}/{} (expected 1/32, 1/16, 1/8 or 1/4)",
                cyclic_prefix.0, cyclic_prefix.1
            )));
        }
        Ok(PhyConfig {
            channel_bandwidth_hz,
            fft_size,
            sampling_factor,
            cyclic_prefix,
        })
    }

    /// 20 MHz, FFT 2048, sampling factor 8/7, cyclic prefix 1/32.
    pub fn wimax_default() -> Self {
        PhyConfig::new(20_000_000, 2048, (8, 7), (1, 32)).expect("default PHY config is valid")
    }

    pub fn with_cyclic_prefix(&self, cyclic_prefix: (u32, u32)) -> Result<Self, PhyError> {
        PhyConfig::new(
            self.channel_bandwidth_hz,
            self.fft_size,
            self.sampling_factor,
            cyclic_prefix,
        )
    }

    pub fn with_channel_bandwidth(&self, channel_bandwidth_hz: u64) -> Result<Self, PhyError> {
        PhyConfig::new(
            channel_bandwidth_hz,
            self.fft_size,
            self.sampling_factor,
            self.cyclic_prefix,
        )
    }

    pub fn channel_bandwidth_hz(&self) -> u64 {
        self.channel_bandwidth_hz
    }

    pub fn fft_size(&self) -> u32 {
        self.fft_size
    }

    pub fn used_subcarriers(&self) -> u32 {
        used_subcarriers(self.fft_size).expect("validated on construction")
    }

    pub fn sampling_factor(&self) -> Rational {
        Rational::new(self.sampling_factor.0 as u128, self.sampling_factor.1 as u128)
    }

    pub fn cyclic_prefix(&self) -> Rational {
        Rational::new(self.cyclic_prefix.0 as u128, self.cyclic_prefix.1 as u128)
    }

    pub fn cyclic_prefix_label(&self) -> String {
        format!("{}/{}", self.cyclic_prefix.0, self.cyclic_prefix.1)
    }

    /// Sampling frequency in Hz.
    pub fn sampling_frequency(&self) -> Rational {
        self.sampling_factor() * Rational::from_integer(self.channel_bandwidth_hz as u128)
    }

    /// Useful symbol time `Tb` in seconds.
    pub fn useful_symbol_time(&self) -> Rational {
        Rational::from_integer(self.fft_size as u128) / self.sampling_frequency()
    }

    /// Guard time `Tg = G * Tb` in seconds.
    pub fn guard_time(&self) -> Rational {
        self.cyclic_prefix() * self.useful_symbol_time()
    }

    /// Exact OFDMA symbol duration `T = Tb + Tg` in seconds.
    pub fn symbol_duration_exact(&self) -> Rational {
        self.useful_symbol_time() + self.guard_time()
    }
}

/// OFDMA symbol duration in seconds.
pub fn symbol_duration(cfg: &PhyConfig) -> f64 {
    to_f64(cfg.symbol_duration_exact())
}

/// Exact raw data rate in bit/s.
pub fn raw_data_rate_exact(mcs: &McsProfile, cfg: &PhyConfig) -> Rational {
    Rational::from_integer(cfg.used_subcarriers() as u128) * mcs.bits_per_subcarrier()
        / cfg.symbol_duration_exact()
}

/// Raw data rate `N * b * c / T` in bit/s.
pub fn raw_data_rate(mcs: &McsProfile, cfg: &PhyConfig) -> f64 {
    to_f64(raw_data_rate_exact(mcs, cfg))
}

/// Exact spectrum efficiency in bit/s/Hz.
pub fn spectrum_efficiency_exact(mcs: &McsProfile, cfg: &PhyConfig) -> Rational {
    raw_data_rate_exact(mcs, cfg) / Rational::from_integer(cfg.channel_bandwidth_hz as u128)
}

/// Raw data rate divided by the channel bandwidth, in bit/s/Hz.
pub fn spectrum_efficiency(mcs: &McsProfile, cfg: &PhyConfig) -> f64 {
    to_f64(spectrum_efficiency_exact(mcs, cfg))
}

/// One row of the rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub mcs: McsProfile,
    pub phy: PhyConfig,
    pub rate_bps: Rational,
    pub efficiency: Rational,
}

impl RateRow {
    pub fn rate_mbps(&self) -> f64 {
        to_f64(self.rate_bps) / 1e6
    }

    pub fn efficiency(&self) -> f64 {
        to_f64(self.efficiency)
    }

    /// Rate in Mbps, rounded half-up to four decimals.
    pub fn rate_mbps_label(&self) -> String {
        format_fixed4(self.rate_bps / Rational::from_integer(1_000_000))
    }

    pub fn efficiency_label(&self) -> String {
        format_fixed4(self.efficiency)
    }
}

/// Every MCS crossed with every cyclic prefix, holding bandwidth, FFT size and
/// sampling factor from `base`. Rows are grouped by MCS in ascending rate order.
pub fn rate_table(base: &PhyConfig) -> Vec<RateRow> {
    let mut rows = Vec::with_capacity(McsProfile::ALL.len() * CYCLIC_PREFIXES.len());
    for mcs in McsProfile::ALL {
        for cp in CYCLIC_PREFIXES {
            let phy = base
                .with_cyclic_prefix(cp)
                .expect("standard cyclic prefixes are valid");
            rows.push(RateRow {
                mcs,
                phy,
                rate_bps: raw_data_rate_exact(&mcs, &phy),
                efficiency: spectrum_efficiency_exact(&mcs, &phy),
            });
        }
    }
    rows
}

pub const RATE_TABLE_HEADER: &str = "modulation,coding_rate,cyclic_prefix,rate_mbps,efficiency";

/// Renders the rate table as CSV, header included, newline-terminated.
pub fn rate_table_csv(rows: &[RateRow]) -> String {
    let mut out = String::from(RATE_TABLE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.mcs.modulation(),
            row.mcs.coding_rate_label(),
            row.phy.cyclic_prefix_label(),
            row.rate_mbps_label(),
            row.efficiency_label()
        ));
    }
    out
}

fn to_f64(r: Rational) -> f64 {
    // Split off the integer part so large numerators keep full precision.
    let int = r.numer() / r.denom();
    let frac = r.numer() % r.denom();
    int as f64 + frac as f64 / *r.denom() as f64
}

/// Exact half-up rounding to four decimals.
fn format_fixed4(r: Rational) -> String {
    let scaled = r * Rational::from_integer(10_000);
    let rounded = (scaled.numer() * 2 + scaled.denom()) / (scaled.denom() * 2);
    format!("{}.{:04}", rounded / 10_000, rounded % 10_000)
}
