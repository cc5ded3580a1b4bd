//! On-demand delivery: repeated heralding attempts on `N` parallel channels
//! until a herald or the timeout, storage decoherence until the fixed delivery
//! time, and a fidelity-1/2 classical fallback when nothing heralds.
//!
//! Heralds only occur at integer multiples of `t_rep`. A pair heralded in
//! round `k` is stored for `t_del - k t_rep` and its fidelity relaxes toward
//! 1/2 with the effective coherence time.

use serde::{Deserialize, Serialize};

use crate::error::{LinkError, Result};
use crate::model::{ensure_valid, LinkConfig, LinkMetrics};
use crate::protocol::{self, ProtocolAnalytics};

/// Fidelity of the classical anti-correlated fallback state.
pub const FALLBACK_FIDELITY: f64 = 0.5;

/// Upper bound on delivery-time grid points searched by the optimizers.
pub const MAX_GRID_POINTS: u64 = 1_000_000;

/// Per-link quantities that do not depend on the delivery time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub analytics: ProtocolAnalytics,
    /// Heralding probability actually used (formula or calibration override).
    pub p_her: f64,
    /// Heralded fidelity from the configured fidelity model.
    pub f_her: f64,
    pub n_parallel: u32,
    pub t_rep_us: f64,
    pub t_coh_us: f64,
    /// Coherence time after the decoherence multiplier.
    pub t_decay_us: f64,
    /// Longest admissible delivery time (memory lifetime), if bounded.
    pub t_max_us: Option<f64>,
}

impl LinkModel {
    /// Build the model, validating everything except the delivery time.
    pub fn new(config: &LinkConfig) -> Result<Self> {
        let mut probe = config.clone();
        probe.policy.t_del_us = config.transducer.t_rep_us;
        ensure_valid(&probe)?;

        let analytics = protocol::analyze(
            &config.transducer,
            &config.protocol,
            config.memory.as_ref(),
        )?;
        let f_her = protocol::heralded_fidelity(&analytics, config.policy.fidelity_model)?;
        let t_coh_us = config.qubit.t_coh();
        Ok(Self {
            p_her: config.protocol.p_her_override.unwrap_or(analytics.p_her),
            analytics,
            f_her,
            n_parallel: config.policy.n_parallel,
            t_rep_us: config.transducer.t_rep_us,
            t_coh_us,
            t_decay_us: t_coh_us / config.policy.decoherence_multiplier,
            t_max_us: config.memory.as_ref().map(|m| m.lifetime_us),
        })
    }

    /// Probability that at least one of the parallel channels heralds in a round.
    pub fn round_probability(&self) -> f64 {
        parallel_speedup(self.p_her, self.n_parallel).exact
    }

    /// Fidelity of heralded pairs as delivered. A pair worse than the
    /// fallback is replaced by the fallback.
    pub fn delivered_herald_fidelity(&self) -> f64 {
        self.f_her.max(FALLBACK_FIDELITY)
    }

    /// Fidelity of a pair that has been stored for `tau_us`.
    pub fn stored_fidelity(&self, tau_us: f64) -> f64 {
        let f0 = self.delivered_herald_fidelity();
        FALLBACK_FIDELITY + (f0 - FALLBACK_FIDELITY) * (-tau_us / self.t_decay_us).exp()
    }

    pub fn eta_link(&self) -> f64 {
        self.t_coh_us * self.p_her / self.t_rep_us
    }

    /// Number of attempt rounds that fit in `t_del_us`.
    pub fn rounds_for(&self, t_del_us: f64) -> u64 {
        let k = t_del_us / self.t_rep_us;
        // tolerate representation error in e.g. 0.3 / 0.1
        (k + 1e-9).floor().max(0.0) as u64
    }

    /// Probability of a herald within `rounds` rounds.
    pub fn success_probability(&self, rounds: u64) -> f64 {
        let miss = 1.0 - self.round_probability();
        1.0 - miss.powf(rounds as f64)
    }

    /// Delivered fidelity with `rounds` attempts and delivery at `rounds t_rep`.
    pub fn fidelity_after(&self, rounds: u64) -> f64 {
        self.fidelity_at(rounds, rounds as f64 * self.t_rep_us)
    }

    /// Delivered fidelity with `rounds` attempts and delivery at `t_del_us`,
    /// evaluated as the direct sum over the round of the first herald.
    pub fn fidelity_at(&self, rounds: u64, t_del_us: f64) -> f64 {
        let q = self.round_probability();
        let miss = 1.0 - q;
        let mut total = 0.0;
        let mut reach = 1.0;
        for k in 1..=rounds {
            let tau = t_del_us - k as f64 * self.t_rep_us;
            total += reach * q * self.stored_fidelity(tau);
            reach *= miss;
            if reach == 0.0 {
                break;
            }
        }
        total + miss.powf(rounds as f64) * FALLBACK_FIDELITY
    }

    /// Largest round count considered by the delivery-time searches.
    pub fn grid_len(&self) -> u64 {
        let by_coherence = (10.0 * self.t_coh_us / self.t_rep_us).ceil();
        let mut n = if by_coherence.is_finite() {
            by_coherence.min(MAX_GRID_POINTS as f64) as u64
        } else {
            MAX_GRID_POINTS
        };
        if let Some(t_max) = self.t_max_us {
            n = n.min(self.rounds_for(t_max));
        }
        n.max(1)
    }

    /// Delivery curve for rounds `1..=len` by the one-step recurrence
    /// `S(K+1) = d S(K) + (1-q)^K q`, `F = 1/2 + (F_her - 1/2) S`.
    pub fn curve(&self, len: u64) -> DeliveryCurve {
        let q = self.round_probability();
        let miss = 1.0 - q;
        let d = (-self.t_rep_us / self.t_decay_us).exp();
        let amplitude = self.delivered_herald_fidelity() - FALLBACK_FIDELITY;
        let mut points = Vec::with_capacity(len as usize);
        let mut s = 0.0;
        let mut reach = 1.0;
        for k in 1..=len {
            s = d * s + reach * q;
            reach *= miss;
            points.push(CurvePoint {
                t_del_us: k as f64 * self.t_rep_us,
                p_success: 1.0 - reach,
                f_del: FALLBACK_FIDELITY + amplitude * s,
            });
        }
        DeliveryCurve { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t_del_us: f64,
    pub p_success: f64,
    pub f_del: f64,
}

/// Delivered fidelity and success probability over a delivery-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeliveryCurve {
    pub points: Vec<CurvePoint>,
}

/// Analytics of one link at its configured delivery time.
///
/// Delivery is unconditional: a fidelity is always returned.
pub fn delivered_fidelity(config: &LinkConfig) -> Result<LinkMetrics> {
    if config.policy.t_del_us < config.transducer.t_rep_us {
        return Err(LinkError::Config(
            "timeout shorter than one attempt".to_string(),
        ));
    }
    ensure_valid(config)?;
    let model = LinkModel::new(config)?;
    let rounds = model.rounds_for(config.policy.t_del_us);
    if rounds < 1 {
        return Err(LinkError::Config(
            "timeout shorter than one attempt".to_string(),
        ));
    }
    Ok(metrics_at(&model, config.policy.t_del_us))
}

pub(crate) fn metrics_at(model: &LinkModel, t_del_us: f64) -> LinkMetrics {
    let rounds = model.rounds_for(t_del_us);
    LinkMetrics {
        p_her: model.p_her,
        i_prot: model.analytics.i_prot,
        i_th: model.analytics.i_th,
        f_her: model.f_her,
        eta_link: model.eta_link(),
        p_success: model.success_probability(rounds),
        f_del: model.fidelity_at(rounds, t_del_us),
    }
}

/// Delivery curve for `rounds` in `1..=len` (defaults to the search grid).
pub fn delivery_curve(config: &LinkConfig, len: Option<u64>) -> Result<DeliveryCurve> {
    let model = LinkModel::new(config)?;
    Ok(model.curve(len.unwrap_or_else(|| model.grid_len())))
}

/// Delivery time and fidelity at the discrete optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryOptimum {
    pub t_del_us: f64,
    pub f_del: f64,
}

/// Maximize the delivered fidelity over `k t_rep`, `k in [1, ceil(10 T_coh / t_rep)]`.
/// The configured delivery time is ignored; ties go to the shorter time.
pub fn optimal_delivery_time(config: &LinkConfig) -> Result<DeliveryOptimum> {
    let model = LinkModel::new(config)?;
    optimum_of(&model)
}

pub(crate) fn optimum_of(model: &LinkModel) -> Result<DeliveryOptimum> {
    if model.p_her <= 0.0 {
        return Err(LinkError::NoOptimum(
            "heralding probability is zero".to_string(),
        ));
    }
    let curve = model.curve(model.grid_len());
    let best = curve
        .points
        .iter()
        .fold(None::<&CurvePoint>, |best, p| match best {
            Some(b) if b.f_del >= p.f_del => Some(b),
            _ => Some(p),
        })
        .expect("grid has at least one point");
    Ok(DeliveryOptimum {
        t_del_us: best.t_del_us,
        f_del: best.f_del,
    })
}

/// Shortest grid delivery time reaching `target`.
pub fn min_time_to_fidelity(config: &LinkConfig, target: f64) -> Result<f64> {
    min_time_to_fidelity_by(config, target, |f| f)
}

/// As [`min_time_to_fidelity`], comparing `transform(f_del)` with the target.
/// Used to account for post-processing such as distillation.
pub fn min_time_to_fidelity_by(
    config: &LinkConfig,
    target: f64,
    transform: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !(target > 0.5 && target < 1.0) {
        return Err(LinkError::Domain(format!(
            "target fidelity {target} outside (0.5, 1)"
        )));
    }
    let model = LinkModel::new(config)?;
    let curve = model.curve(model.grid_len());
    let mut best = f64::NEG_INFINITY;
    for p in &curve.points {
        let f = transform(p.f_del);
        if f >= target {
            return Ok(p.t_del_us);
        }
        best = best.max(f);
    }
    Err(LinkError::Unattainable { target, best })
}

/// Exact and small-probability per-round herald probability over `n` channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelSpeedup {
    pub exact: f64,
    pub approx: f64,
    /// `(approx - exact) / exact`; zero when `exact` is zero.
    pub relative_gap: f64,
}

pub fn parallel_speedup(p_her: f64, n: u32) -> ParallelSpeedup {
    let n = n.max(1);
    let exact = if n == 1 {
        p_her
    } else {
        -(f64::from(n) * (-p_her).ln_1p()).exp_m1()
    };
    let approx = f64::from(n) * p_her;
    let relative_gap = if exact > 0.0 {
        (approx - exact) / exact
    } else {
        0.0
    };
    ParallelSpeedup {
        exact,
        approx,
        relative_gap,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryScenario {
    /// Pair used immediately after the herald, no timeout.
    Probabilistic,
    /// Pair delivered at the fixed delivery time.
    OnDemand,
}

/// Additive split of `1 - F` into its sources. Components sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfidelityBreakdown {
    pub scenario: DeliveryScenario,
    pub t_del_us: Option<f64>,
    pub protocol: f64,
    pub thermal: f64,
    pub decoherence: f64,
    pub fallback: f64,
    pub total: f64,
}

/// Infidelity contributions for probabilistic and on-demand delivery.
pub fn infidelity_breakdown(config: &LinkConfig) -> Result<[InfidelityBreakdown; 2]> {
    let metrics = delivered_fidelity(config)?;
    let model = LinkModel::new(config)?;
    let w = config.policy.fidelity_model.thermal_weight();
    let protocol = model.analytics.i_prot;
    let thermal = w * model.analytics.i_th;
    let probabilistic = InfidelityBreakdown {
        scenario: DeliveryScenario::Probabilistic,
        t_del_us: None,
        protocol,
        thermal,
        decoherence: 0.0,
        fallback: 0.0,
        total: 1.0 - model.f_her,
    };
    let ps = metrics.p_success;
    let heralded_mean = ps * model.delivered_herald_fidelity() + (1.0 - ps) * FALLBACK_FIDELITY;
    let on_demand = InfidelityBreakdown {
        scenario: DeliveryScenario::OnDemand,
        t_del_us: Some(config.policy.t_del_us),
        protocol: ps * protocol,
        thermal: ps * thermal,
        decoherence: heralded_mean - metrics.f_del,
        fallback: (1.0 - ps) * (1.0 - FALLBACK_FIDELITY),
        total: 1.0 - metrics.f_del,
    };
    Ok([probabilistic, on_demand])
}
