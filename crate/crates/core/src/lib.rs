//! Cross-layer QoS analysis for OFDMA broadband wireless access cells.
//!
//! The crate is layered bottom-up:
//!
//! * [`phy`] computes OFDMA symbol durations, raw data rates and spectrum
//!   efficiencies per modulation-and-coding scheme.
//! * [`model`] holds the service-class, traffic and system-state vocabulary.
//! * [`cac`] decides admissions with an SINR outage gate, an rtPS delay bound and
//!   adaptive bandwidth degradation.
//! * [`scheduler`] splits polling bandwidth between rtPS and nrtPS and measures
//!   fairness.
//! * [`ctmc`] enumerates the Markov chain induced by the admission policy, solves
//!   it and reports blocking, dropping, outage and utilization.
//! * [`des`] simulates the same policy event by event as an independent check.
//! * [`amc`] sweeps E_b/N_0 over the MCS set and picks an MCS from QoS targets.
//! * [`scenario`] reads the flat `key = value` scenario format.

pub mod amc;
pub mod cac;
pub mod ctmc;
pub mod des;
pub mod error;
pub mod model;
pub mod phy;
pub mod scenario;
pub mod scheduler;

mod csvfmt;

pub use csvfmt::fmt_num;
pub use error::{CacError, CtmcError, DesError, PhyError, ScenarioError, SchedulerError};
pub use model::{
    CellConfig, OutageModel, PerClass, RequestKind, ServiceClass, ServiceClassParams, SystemState,
    TrafficModel, Violation,
};
