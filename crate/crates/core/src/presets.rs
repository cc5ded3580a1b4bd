//! Built-in parameter sets.
//!
//! `transducer1`/`transducer2` and `qubit1`/`qubit2` are the two near-term
//! performance sets used by the worked link examples. The device rows are
//! published single-number summaries of existing transducers; they carry
//! only a total efficiency and are not wired into the protocol formulas.

use serde::Serialize;

use crate::error::{LinkError, Result};
use crate::model::{StorageQubitParams, TransducerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransducerType {
    /// Electro-opto-mechanical.
    Emo,
    /// Electro-optic.
    Eo,
    /// Rare-earth ion.
    Rei,
}

/// How a published total efficiency should be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Approx,
    UpperBound,
    MuchLessThan,
}

/// Informational record of a demonstrated device.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceRecord {
    pub name: &'static str,
    pub kind: TransducerType,
    pub eta_tot: f64,
    pub eta_tot_bound: Bound,
    pub t_rep_us: f64,
    /// Repetition time limited by the bandwidth rather than measured.
    pub t_rep_bandwidth_limited: bool,
    pub bandwidth_mhz: f64,
    pub n_add: f64,
    pub eta_per_uw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Preset {
    Transducer(TransducerParams),
    Qubit(StorageQubitParams),
    Device(DeviceRecord),
}

pub const TRANSDUCER_PRESETS: [&str; 2] = ["transducer1", "transducer2"];
pub const QUBIT_PRESETS: [&str; 2] = ["qubit1", "qubit2"];

#[allow(clippy::too_many_arguments)]
const fn device(
    name: &'static str,
    kind: TransducerType,
    eta_tot: f64,
    eta_tot_bound: Bound,
    t_rep_us: f64,
    t_rep_bandwidth_limited: bool,
    bandwidth_mhz: f64,
    n_add: f64,
    eta_per_uw: Option<f64>,
) -> DeviceRecord {
    DeviceRecord {
        name,
        kind,
        eta_tot,
        eta_tot_bound,
        t_rep_us,
        t_rep_bandwidth_limited,
        bandwidth_mhz,
        n_add,
        eta_per_uw,
    }
}

use Bound::*;
use TransducerType::*;

/// Demonstrated devices. For `eo_2025` the noise is microwave-output
/// referred; `emo_2024a` lists its pulsed efficiency-per-power figure.
pub const DEVICES: [DeviceRecord; 8] = [
    device("emo_2024a", Emo, 3e-6, Approx, 10.0, false, 15.0, 6.0, Some(0.05)),
    device("emo_2023", Emo, 1e-4, Approx, 5.9, false, 1.5, 2.0, None),
    device("emo_2022", Emo, 0.38, Approx, 5000.0, true, 2.2e-4, 3.2, Some(16.0)),
    device("emo_2024b", Emo, 6e-3, UpperBound, 20.0, false, 5.5, 0.14, None),
    device("emo_2024c", Emo, 8e-3, UpperBound, 11.2, true, 8.9e-2, 0.94, Some(5.0)),
    device("eo_2025", Eo, 1e-3, UpperBound, 1.0, false, 30.0, 0.12, Some(0.05)),
    device("eo_2024", Eo, 1e-4, MuchLessThan, 6e-5, true, 17_000.0, 23.0, Some(1e-7)),
    device("rei_2025", Rei, 3.4e-5, Approx, 10_000.0, false, 0.5, 1.24, Some(1e-5)),
];

pub fn all_names() -> Vec<String> {
    TRANSDUCER_PRESETS
        .iter()
        .chain(QUBIT_PRESETS.iter())
        .copied()
        .chain(DEVICES.iter().map(|d| d.name))
        .map(String::from)
        .collect()
}

fn not_found(name: &str) -> LinkError {
    LinkError::NotFound {
        name: name.to_string(),
        valid: all_names(),
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "transducer1" => Ok(Preset::Transducer(TransducerParams {
            name: "transducer1".into(),
            eta_mw: 0.8,
            p_mo: 0.01,
            eta_det: 0.5,
            n_th: 0.1,
            t_rep_us: 1.0,
            bandwidth_mhz: Some(10.0),
            eta_per_uw: None,
        })),
        "transducer2" => Ok(Preset::Transducer(TransducerParams {
            name: "transducer2".into(),
            eta_mw: 0.95,
            p_mo: 0.1,
            eta_det: 0.5,
            n_th: 0.01,
            t_rep_us: 1.0,
            bandwidth_mhz: Some(10.0),
            eta_per_uw: None,
        })),
        "qubit1" => Ok(Preset::Qubit(StorageQubitParams::new(500.0, 200.0))),
        "qubit2" => Ok(Preset::Qubit(StorageQubitParams::new(1e5, 2500.0))),
        _ => DEVICES
            .iter()
            .find(|d| d.name == name)
            .cloned()
            .map(Preset::Device)
            .ok_or_else(|| not_found(name)),
    }
}

/// Look up a transducer preset; device records do not qualify.
pub fn transducer(name: &str) -> Result<TransducerParams> {
    match preset(name)? {
        Preset::Transducer(t) => Ok(t),
        _ => Err(LinkError::Config(format!(
            "preset `{name}` is not a transducer parameter set"
        ))),
    }
}

pub fn qubit(name: &str) -> Result<StorageQubitParams> {
    match preset(name)? {
        Preset::Qubit(q) => Ok(q),
        _ => Err(LinkError::Config(format!(
            "preset `{name}` is not a storage qubit parameter set"
        ))),
    }
}
