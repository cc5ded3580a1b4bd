//! Architecture-level resource arithmetic: how many links, transducers and
//! communication qubits a processor needs for a given way of connecting
//! modules, and the rate/fidelity/link-count trade-off surface.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delivery::{self, LinkModel};
use crate::distill::{calibrated_distill, pairs_for_rounds};
use crate::error::{LinkError, Result};
use crate::model::{LinkConfig, Violation};

/// Link infidelity below which lattice-surgery error correction is possible.
pub const LINK_ERROR_THRESHOLD: f64 = 0.1;

/// Largest transducer count that fits a single module.
pub const MODULE_TRANSDUCER_CEILING: u64 = 10_000;

/// Envelope of a near-term cryostat.
pub const LINKS_PER_CRYOSTAT: (u64, u64) = (10, 100);
pub const TRANSDUCERS_PER_LINK: (u64, u64) = (10, 100);
pub const TRANSDUCERS_PER_CRYOSTAT: (u64, u64) = (100, 10_000);

/// Circuit-cutting budget used when an architecture does not specify one.
pub const DEFAULT_CIRCUIT_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    LatticeSurgery,
    SparseLinks,
    GraphState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub architecture: Architecture,
    pub qubits_per_processor: u64,
    pub clock_cycle_us: f64,
    pub transducer_budget: u64,
    pub target_link_fidelity: f64,
    /// Code distance; sets the pipe width of graph-state architectures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_distance: Option<u32>,
    /// Number of links for sparse-link architectures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse_links: Option<u64>,
    /// Circuit executions available to error mitigation / circuit cutting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_budget: Option<u64>,
}

impl ArchitectureSpec {
    /// Every broken invariant, with fields prefixed by `architecture.`.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |field: &str, rule: &str| {
            v.push(Violation {
                field: format!("architecture.{field}"),
                rule: rule.to_string(),
            })
        };
        if self.qubits_per_processor < 1 {
            push("qubits_per_processor", "must be >= 1");
        }
        if !(self.clock_cycle_us > 0.0) {
            push("clock_cycle_us", "must be > 0");
        }
        if self.transducer_budget < 1 {
            push("transducer_budget", "must be >= 1");
        }
        if !(self.target_link_fidelity > 0.5 && self.target_link_fidelity < 1.0) {
            push("target_link_fidelity", "out of (0.5,1)");
        }
        match self.architecture {
            Architecture::GraphState if self.code_distance.unwrap_or(0) < 1 => {
                push("code_distance", "required (>= 1) for graph_state")
            }
            Architecture::SparseLinks if self.sparse_links.unwrap_or(0) < 1 => {
                push("sparse_links", "required (>= 1) for sparse_links")
            }
            _ => {}
        }
        if self.circuit_budget == Some(0) {
            push("circuit_budget", "must be >= 1");
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(LinkError::Invalid(v))
        }
    }
}

/// Square-lattice edge length of an `n`-qubit processor, `ceil(sqrt(n))`.
pub fn edge_qubit_count(n_qubits: u64) -> u64 {
    let mut r = (n_qubits as f64).sqrt() as u64;
    while r * r > n_qubits {
        r -= 1;
    }
    if r * r < n_qubits {
        r += 1;
    }
    r.max(1)
}

/// Channels per inter-module pipe in a graph-state architecture.
pub fn graph_state_pipe_width(code_distance: u32) -> u32 {
    code_distance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryostatCheck {
    pub links: u64,
    pub transducers_per_link: u64,
    pub total_transducers: u64,
    pub links_in_envelope: bool,
    pub per_link_in_envelope: bool,
    pub total_in_envelope: bool,
}

fn within(x: u64, (lo, hi): (u64, u64)) -> bool {
    (lo..=hi).contains(&x)
}

pub fn cryostat_budget_check(links: u64, transducers_per_link: u64) -> CryostatCheck {
    let total = links.saturating_mul(transducers_per_link);
    CryostatCheck {
        links,
        transducers_per_link,
        total_transducers: total,
        links_in_envelope: within(links, LINKS_PER_CRYOSTAT),
        per_link_in_envelope: within(transducers_per_link, TRANSDUCERS_PER_LINK),
        total_in_envelope: within(total, TRANSDUCERS_PER_CRYOSTAT),
    }
}

/// Classical circuit cutting against error-mitigated quantum links, both
/// costing `gamma^k` circuits for `k` links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitCutComparison {
    pub infidelity: f64,
    pub circuit_budget: u64,
    pub gamma_quantum: f64,
    pub gamma_classical: f64,
    /// `None` when perfect links need no repetition at all.
    pub k_quantum: Option<u64>,
    pub k_classical: u64,
    pub advantage: bool,
    /// Provenance of the quantum overhead curve; always `"calibrated"`.
    pub gamma_model: String,
}

/// Infidelity at which quantum and classical scaling break even.
pub const BREAK_EVEN_INFIDELITY: f64 = 0.30;

const LOG10_GAMMA_CLASSICAL: f64 = 0.5;

/// `log10(gamma)` of a quantum link, piecewise linear in infidelity through
/// (0, 0), (0.1, 0.1) and (0.3, 0.5), extended linearly above 0.3. This is
/// a calibrated model, not a derived one.
fn log10_gamma_quantum(infidelity: f64) -> f64 {
    if infidelity <= 0.1 {
        infidelity
    } else {
        0.1 + 2.0 * (infidelity - 0.1)
    }
}

fn max_links(circuit_budget: u64, log10_gamma: f64) -> u64 {
    let k = (circuit_budget as f64).log10() / log10_gamma;
    // absorb rounding in exact ratios such as 5 / 0.1
    (k + 1e-9).floor().max(0.0) as u64
}

pub fn circuit_cut_comparison(infidelity: f64, circuit_budget: u64) -> Result<CircuitCutComparison> {
    if !(0.0..1.0).contains(&infidelity) {
        return Err(LinkError::Domain(format!(
            "infidelity {infidelity} outside [0, 1)"
        )));
    }
    if circuit_budget < 1 {
        return Err(LinkError::Domain("circuit budget must be >= 1".to_string()));
    }
    let lq = log10_gamma_quantum(infidelity);
    Ok(CircuitCutComparison {
        infidelity,
        circuit_budget,
        gamma_quantum: 10f64.powf(lq),
        gamma_classical: 10f64.powf(LOG10_GAMMA_CLASSICAL),
        k_quantum: (lq > 0.0).then(|| max_links(circuit_budget, lq)),
        k_classical: max_links(circuit_budget, LOG10_GAMMA_CLASSICAL),
        advantage: infidelity < BREAK_EVEN_INFIDELITY,
        gamma_model: "calibrated".to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub architecture: Architecture,
    pub links: u64,
    pub transducers_per_link: u64,
    pub total_transducers: u64,
    /// Communication qubits (one per transducer) plus one storage qubit per link.
    pub qubits_consumed: u64,
    pub feasible: bool,
    pub limiting_factor: String,
    pub t_del_us: f64,
    /// `t_del / clock_cycle`; lattice surgery only.
    pub speedup: Option<f64>,
    pub link_fidelity: f64,
    pub below_link_error_threshold: bool,
    pub exceeds_module_ceiling: bool,
    pub cryostat: CryostatCheck,
    pub circuit_cut: Option<CircuitCutComparison>,
}

/// Fidelity after the configured rounds of calibrated distillation.
pub fn distilled_fidelity(f_del: f64, rounds: u32) -> f64 {
    if rounds == 0 || f_del <= 0.5 {
        f_del
    } else {
        calibrated_distill(f_del, rounds).unwrap_or(f_del)
    }
}

/// Delivery time meeting `target` after distillation: the configured time
/// if it already does, otherwise the shortest grid time that does.
fn delivery_time_for(config: &LinkConfig, target: f64) -> Result<(f64, f64)> {
    let rounds = config.policy.distill_rounds;
    let metrics = delivery::delivered_fidelity(config)?;
    let f = distilled_fidelity(metrics.f_del, rounds);
    if f >= target {
        return Ok((config.policy.t_del_us, f));
    }
    let t = delivery::min_time_to_fidelity_by(config, target, |f| distilled_fidelity(f, rounds))?;
    let mut at = config.clone();
    at.policy.t_del_us = t;
    let f = distilled_fidelity(delivery::delivered_fidelity(&at)?.f_del, rounds);
    Ok((t, f))
}

fn assemble(
    spec: &ArchitectureSpec,
    links: u64,
    transducers_per_link: u64,
    t_del_us: f64,
    speedup: Option<f64>,
    link_fidelity: f64,
    circuit_cut: Option<CircuitCutComparison>,
) -> PlanReport {
    let total = links.saturating_mul(transducers_per_link);
    let qubits = links.saturating_mul(transducers_per_link + 1);
    let over_budget = total > spec.transducer_budget;
    let over_qubits = qubits > spec.qubits_per_processor;
    let limiting_factor = match (over_budget, over_qubits) {
        (false, false) => "none",
        (true, false) => "transducer_budget",
        (false, true) => "processor_qubits",
        (true, true) => "transducer_budget+processor_qubits",
    };
    PlanReport {
        architecture: spec.architecture,
        links,
        transducers_per_link,
        total_transducers: total,
        qubits_consumed: qubits,
        feasible: !over_budget && !over_qubits,
        limiting_factor: limiting_factor.to_string(),
        t_del_us,
        speedup,
        link_fidelity,
        below_link_error_threshold: 1.0 - link_fidelity < LINK_ERROR_THRESHOLD,
        exceeds_module_ceiling: total > MODULE_TRANSDUCER_CEILING,
        cryostat: cryostat_budget_check(links, transducers_per_link),
        circuit_cut,
    }
}

/// Links at every edge qubit, delivered every error-correction clock cycle.
/// The speed-up comes entirely from extra parallel channels.
pub fn lattice_surgery_plan(spec: &ArchitectureSpec, config: &LinkConfig) -> Result<PlanReport> {
    spec.validate()?;
    let (t_del, fidelity) = delivery_time_for(config, spec.target_link_fidelity)?;
    let speedup = t_del / spec.clock_cycle_us;
    let per_link = u64::from(config.policy.n_parallel)
        * (speedup - 1e-9).ceil().max(1.0) as u64
        * pairs_for_rounds(config.policy.distill_rounds);
    let links = edge_qubit_count(spec.qubits_per_processor);
    Ok(assemble(spec, links, per_link, t_del, Some(speedup), fidelity, None))
}

/// Plan for whichever architecture the spec names.
pub fn plan(spec: &ArchitectureSpec, config: &LinkConfig) -> Result<PlanReport> {
    spec.validate()?;
    match spec.architecture {
        Architecture::LatticeSurgery => lattice_surgery_plan(spec, config),
        Architecture::SparseLinks | Architecture::GraphState => {
            let (t_del, fidelity) = delivery_time_for(config, spec.target_link_fidelity)?;
            let per_link = u64::from(config.policy.n_parallel)
                * pairs_for_rounds(config.policy.distill_rounds);
            let (links, cut) = match spec.architecture {
                Architecture::SparseLinks => {
                    let budget = spec.circuit_budget.unwrap_or(DEFAULT_CIRCUIT_BUDGET);
                    let infidelity = (1.0 - fidelity).clamp(0.0, 1.0 - f64::EPSILON);
                    (
                        spec.sparse_links.unwrap_or(0),
                        Some(circuit_cut_comparison(infidelity, budget)?),
                    )
                }
                _ => (
                    u64::from(graph_state_pipe_width(spec.code_distance.unwrap_or(1))),
                    None,
                ),
            };
            Ok(assemble(spec, links, per_link, t_del, None, fidelity, cut))
        }
    }
}

/// One design point of the trade-off surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub n_links: u64,
    pub n_parallel: u32,
    pub distill_rounds: u32,
    pub t_del_us: f64,
    /// Deliveries per microsecond, `1 / t_del`.
    pub rate_per_us: f64,
    pub f_del: f64,
}

impl TradeoffPoint {
    /// `self` is at least as good in every objective and better in one.
    pub fn dominates(&self, other: &TradeoffPoint) -> bool {
        let ge = self.n_links >= other.n_links
            && self.rate_per_us >= other.rate_per_us
            && self.f_del >= other.f_del;
        let gt = self.n_links > other.n_links
            || self.rate_per_us > other.rate_per_us
            || self.f_del > other.f_del;
        ge && gt
    }

    fn objectives_cmp(&self, other: &TradeoffPoint) -> Ordering {
        self.n_links
            .cmp(&other.n_links)
            .then(self.rate_per_us.total_cmp(&other.rate_per_us))
            .then(self.f_del.total_cmp(&other.f_del))
    }
}

pub const TRADEOFF_MAX_ROUNDS: u32 = 4;

/// Every `(n_parallel, distill_rounds)` that fits the budget at least once,
/// evaluated at its optimal delivery time.
pub fn tradeoff_grid(budget: u64, template: &LinkConfig) -> Result<Vec<TradeoffPoint>> {
    if budget < 1 {
        return Err(LinkError::Domain("transducer budget must be >= 1".to_string()));
    }
    let max_parallel = u32::try_from(budget).unwrap_or(u32::MAX);
    let per_n: Vec<Vec<TradeoffPoint>> = (1..=max_parallel)
        .into_par_iter()
        .map(|n_parallel| {
            let mut config = template.clone();
            config.policy.n_parallel = n_parallel;
            config.policy.distill_rounds = 0;
            let opt = delivery::optimum_of(&LinkModel::new(&config)?)?;
            Ok((0..=TRADEOFF_MAX_ROUNDS)
                .filter_map(|rounds| {
                    let n_links = budget / (u64::from(n_parallel) * pairs_for_rounds(rounds));
                    (n_links >= 1).then(|| TradeoffPoint {
                        n_links,
                        n_parallel,
                        distill_rounds: rounds,
                        t_del_us: opt.t_del_us,
                        rate_per_us: 1.0 / opt.t_del_us,
                        f_del: distilled_fidelity(opt.f_del, rounds),
                    })
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

/// Non-dominated subset under maximization of links, rate and fidelity.
///
/// Points are visited in decreasing lexicographic order; anything that
/// dominates a point precedes it in that order, so each candidate only has
/// to be checked against the front accepted so far.
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.objectives_cmp(a));
    let mut front: Vec<TradeoffPoint> = Vec::new();
    for p in sorted {
        if !front.iter().any(|f| f.dominates(&p)) {
            front.push(p);
        }
    }
    front
}

/// Pareto-optimal design points for a transducer budget.
pub fn tradeoff_surface(budget: u64, template: &LinkConfig) -> Result<Vec<TradeoffPoint>> {
    Ok(pareto_front(&tradeoff_grid(budget, template)?))
}
