//! Parameter types for a single inter-module link and their invariants.
//!
//! Every type here is a plain value. Construction does not validate; call
//! [`validate`] on a complete [`LinkConfig`] to collect every broken rule at
//! once.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One transducer channel: efficiency split, added noise and attempt period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerParams {
    pub name: String,
    /// Microwave loading / heralding efficiency between qubit and transducer.
    pub eta_mw: f64,
    /// Microwave-optical conversion (or pair scattering) probability.
    pub p_mo: f64,
    /// Optical detection chain efficiency.
    pub eta_det: f64,
    /// Added thermal noise, mean photon number.
    pub n_th: f64,
    /// Attempt period.
    pub t_rep_us: f64,
    #[serde(default)]
    pub bandwidth_mhz: Option<f64>,
    #[serde(default)]
    pub eta_per_uw: Option<f64>,
}

impl TransducerParams {
    /// Total qubit-to-detector efficiency.
    pub fn eta_tot(&self) -> f64 {
        self.eta_mw * self.p_mo * self.eta_det
    }

    /// Copy of these parameters with `p_mo` replaced.
    pub fn with_p_mo(&self, p_mo: f64) -> Self {
        Self {
            p_mo,
            ..self.clone()
        }
    }
}

/// Storage qubit holding the heralded pair until delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageQubitParams {
    pub t1_us: f64,
    pub t2_us: f64,
    /// Effective coherence time. Falls back to `t2_us` when absent.
    #[serde(default)]
    pub t_coh_us: Option<f64>,
}

impl StorageQubitParams {
    pub fn new(t1_us: f64, t2_us: f64) -> Self {
        Self {
            t1_us,
            t2_us,
            t_coh_us: None,
        }
    }

    pub fn t_coh(&self) -> f64 {
        self.t_coh_us.unwrap_or(self.t2_us)
    }

    /// Fill in the default coherence time so the value serializes explicitly.
    pub fn materialized(&self) -> Self {
        Self {
            t_coh_us: Some(self.t_coh()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    /// Qubit-cavity optical memory replacing the beamsplitter.
    SpinCavity,
    /// Catch-and-release memories with microwave parity heralding.
    CatchRelease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    pub kind: MemoryKind,
    /// Store-and-re-emit efficiency.
    pub eta_mem: f64,
    pub lifetime_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonBasis {
    OnePhoton,
    TwoPhoton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpMode {
    Upconversion,
    Tms,
}

/// Which of the four heralding protocols a link runs, plus its free knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub basis: PhotonBasis,
    pub pump: PumpMode,
    /// Qubit emission probability; one-photon upconversion only.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Deliberately reduced conversion probability.
    #[serde(default)]
    pub p_mo_override: Option<f64>,
    /// Calibration value that replaces the formula heralding probability.
    #[serde(default)]
    pub p_her_override: Option<f64>,
}

impl ProtocolSpec {
    pub fn new(basis: PhotonBasis, pump: PumpMode) -> Self {
        Self {
            basis,
            pump,
            alpha: None,
            p_mo_override: None,
            p_her_override: None,
        }
    }

    pub fn one_photon_tms() -> Self {
        Self::new(PhotonBasis::OnePhoton, PumpMode::Tms)
    }

    pub fn one_photon_upconversion(alpha: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::new(PhotonBasis::OnePhoton, PumpMode::Upconversion)
        }
    }

    pub fn two_photon_upconversion() -> Self {
        Self::new(PhotonBasis::TwoPhoton, PumpMode::Upconversion)
    }

    pub fn two_photon_tms() -> Self {
        Self::new(PhotonBasis::TwoPhoton, PumpMode::Tms)
    }

    /// Short name: `1p-tms`, `2p-upconversion`, ...
    pub fn short_name(&self) -> &'static str {
        match (self.basis, self.pump) {
            (PhotonBasis::OnePhoton, PumpMode::Upconversion) => "1p-upconversion",
            (PhotonBasis::OnePhoton, PumpMode::Tms) => "1p-tms",
            (PhotonBasis::TwoPhoton, PumpMode::Upconversion) => "2p-upconversion",
            (PhotonBasis::TwoPhoton, PumpMode::Tms) => "2p-tms",
        }
    }

    /// Parse a short name back into basis and pump.
    pub fn parse_short_name(name: &str) -> Option<(PhotonBasis, PumpMode)> {
        match name {
            "1p-upconversion" => Some((PhotonBasis::OnePhoton, PumpMode::Upconversion)),
            "1p-tms" => Some((PhotonBasis::OnePhoton, PumpMode::Tms)),
            "2p-upconversion" => Some((PhotonBasis::TwoPhoton, PumpMode::Upconversion)),
            "2p-tms" => Some((PhotonBasis::TwoPhoton, PumpMode::Tms)),
            _ => None,
        }
    }
}

/// How protocol and thermal infidelity combine into the heralded fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityModel {
    /// Thermal false heralds leave a fidelity-1/2 state: `1 - i_prot - i_th/2`.
    #[default]
    ThermalHalf,
    /// `1 - i_prot - i_th`.
    LinearSum,
}

impl FidelityModel {
    /// Weight applied to the thermal infidelity.
    pub fn thermal_weight(self) -> f64 {
        match self {
            FidelityModel::ThermalHalf => 0.5,
            FidelityModel::LinearSum => 1.0,
        }
    }
}

fn one() -> u32 {
    1
}

fn unit_multiplier() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeliveryPolicy {
    /// Fixed delivery time, also the timeout for attempts.
    pub t_del_us: f64,
    #[serde(default = "one")]
    pub n_parallel: u32,
    #[serde(default)]
    pub distill_rounds: u32,
    #[serde(default)]
    pub fidelity_model: FidelityModel,
    /// Divides the coherence time; 2.0 models independent decay on both sides.
    #[serde(default = "unit_multiplier")]
    pub decoherence_multiplier: f64,
}

impl DeliveryPolicy {
    pub fn new(t_del_us: f64) -> Self {
        Self {
            t_del_us,
            n_parallel: 1,
            distill_rounds: 0,
            fidelity_model: FidelityModel::ThermalHalf,
            decoherence_multiplier: 1.0,
        }
    }

    pub fn with_parallel(mut self, n: u32) -> Self {
        self.n_parallel = n;
        self
    }

    pub fn with_distill_rounds(mut self, rounds: u32) -> Self {
        self.distill_rounds = rounds;
        self
    }
}

/// Full description of one inter-module link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub transducer: TransducerParams,
    pub qubit: StorageQubitParams,
    pub protocol: ProtocolSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryParams>,
    pub policy: DeliveryPolicy,
}

impl LinkConfig {
    /// Transducer with the protocol's `p_mo` override applied.
    pub fn effective_transducer(&self) -> TransducerParams {
        match self.protocol.p_mo_override {
            Some(p) => self.transducer.with_p_mo(p),
            None => self.transducer.clone(),
        }
    }

    /// Copy with every optional default written out.
    pub fn materialized(&self) -> Self {
        Self {
            qubit: self.qubit.materialized(),
            ..self.clone()
        }
    }
}

/// Derived analytics for one link at its configured delivery time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub p_her: f64,
    pub i_prot: f64,
    pub i_th: f64,
    pub f_her: f64,
    pub eta_link: f64,
    pub p_success: f64,
    pub f_del: f64,
}

/// One broken invariant: the dotted field path and the rule it broke.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.rule)
    }
}

pub const MAX_DISTILL_ROUNDS: u32 = 10;

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn check_probability(out: &mut Vec<Violation>, field: &str, x: f64) {
    if !unit_interval(x) {
        out.push(Violation::new(field, "out of [0,1]"));
    }
}

fn check_positive(out: &mut Vec<Violation>, field: &str, x: f64) {
    // NaN fails here too.
    if !(x > 0.0) {
        out.push(Violation::new(field, "must be > 0"));
    }
}

pub fn validate_transducer(t: &TransducerParams, prefix: &str) -> Vec<Violation> {
    let mut v = Vec::new();
    check_probability(&mut v, &format!("{prefix}eta_mw"), t.eta_mw);
    check_probability(&mut v, &format!("{prefix}p_mo"), t.p_mo);
    check_probability(&mut v, &format!("{prefix}eta_det"), t.eta_det);
    if !(t.n_th >= 0.0) {
        v.push(Violation::new(format!("{prefix}n_th"), "must be >= 0"));
    }
    check_positive(&mut v, &format!("{prefix}t_rep_us"), t.t_rep_us);
    v
}

pub fn validate_qubit(q: &StorageQubitParams, prefix: &str) -> Vec<Violation> {
    let mut v = Vec::new();
    check_positive(&mut v, &format!("{prefix}t1_us"), q.t1_us);
    check_positive(&mut v, &format!("{prefix}t2_us"), q.t2_us);
    if let Some(t) = q.t_coh_us {
        check_positive(&mut v, &format!("{prefix}t_coh_us"), t);
    }
    v
}

/// Collect every invariant the configuration breaks. Empty means valid.
pub fn validate(config: &LinkConfig) -> Vec<Violation> {
    let mut v = validate_transducer(&config.transducer, "transducer.");
    v.extend(validate_qubit(&config.qubit, "qubit."));

    let p = &config.protocol;
    let needs_alpha = p.basis == PhotonBasis::OnePhoton && p.pump == PumpMode::Upconversion;
    match (needs_alpha, p.alpha) {
        (true, None) => v.push(Violation::new(
            "protocol.alpha",
            "required for one-photon upconversion",
        )),
        (true, Some(a)) if !(a > 0.0 && a <= 1.0) => {
            v.push(Violation::new("protocol.alpha", "out of (0,1]"))
        }
        (false, Some(_)) => v.push(Violation::new(
            "protocol.alpha",
            "only allowed for one-photon upconversion",
        )),
        _ => {}
    }
    if let Some(pmo) = p.p_mo_override {
        if !(pmo > 0.0 && pmo <= config.transducer.p_mo) {
            v.push(Violation::new(
                "protocol.p_mo_override",
                "out of (0, transducer.p_mo]",
            ));
        }
    }
    if let Some(ph) = p.p_her_override {
        check_probability(&mut v, "protocol.p_her_override", ph);
    }

    if let Some(m) = &config.memory {
        check_probability(&mut v, "memory.eta_mem", m.eta_mem);
        check_positive(&mut v, "memory.lifetime_us", m.lifetime_us);
        let compatible = match m.kind {
            MemoryKind::SpinCavity => {
                p.basis == PhotonBasis::TwoPhoton && p.pump == PumpMode::Upconversion
            }
            MemoryKind::CatchRelease => p.basis == PhotonBasis::TwoPhoton && p.pump == PumpMode::Tms,
        };
        if !compatible {
            let rule = match m.kind {
                MemoryKind::SpinCavity => "spin_cavity requires two-photon upconversion",
                MemoryKind::CatchRelease => "catch_release requires two-photon tms",
            };
            v.push(Violation::new("memory.kind", rule));
        }
        if config.policy.t_del_us > m.lifetime_us {
            v.push(Violation::new(
                "policy.t_del_us",
                "exceeds memory.lifetime_us",
            ));
        }
    }

    let pol = &config.policy;
    if !(pol.t_del_us >= config.transducer.t_rep_us) {
        v.push(Violation::new("policy.t_del_us", "must be >= transducer.t_rep_us"));
    }
    if pol.n_parallel < 1 {
        v.push(Violation::new("policy.n_parallel", "must be >= 1"));
    }
    if pol.distill_rounds > MAX_DISTILL_ROUNDS {
        v.push(Violation::new("policy.distill_rounds", "must be <= 10"));
    }
    if !(pol.decoherence_multiplier > 0.0) {
        v.push(Violation::new("policy.decoherence_multiplier", "must be > 0"));
    }
    v
}

/// Validate and turn any violation into an error.
pub fn ensure_valid(config: &LinkConfig) -> crate::Result<()> {
    let v = validate(config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(crate::LinkError::Invalid(v))
    }
}
