//! Closed-form heralding probability and infidelity for the four heralding
//! protocols and their optical-memory variants.
//!
//! All expressions are first order in `alpha`, `p_mo` and `n_th`. Heralding
//! probabilities are clamped to `[0, 1]` so absurd inputs stay in range; no
//! higher-order resummation is attempted.

use serde::{Deserialize, Serialize};

use crate::error::{LinkError, Result};
use crate::model::{
    FidelityModel, MemoryKind, MemoryParams, PhotonBasis, ProtocolSpec, PumpMode,
    TransducerParams,
};

/// Identifies which closed-form expression produced a set of analytics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaId {
    OnePhotonUpconversion,
    OnePhotonTms,
    TwoPhotonUpconversion,
    TwoPhotonTms,
    SpinCavityTwoPhotonUpconversion,
    CatchReleaseTwoPhotonTms,
}

impl FormulaId {
    pub fn base(spec: &ProtocolSpec) -> Self {
        match (spec.basis, spec.pump) {
            (PhotonBasis::OnePhoton, PumpMode::Upconversion) => FormulaId::OnePhotonUpconversion,
            (PhotonBasis::OnePhoton, PumpMode::Tms) => FormulaId::OnePhotonTms,
            (PhotonBasis::TwoPhoton, PumpMode::Upconversion) => FormulaId::TwoPhotonUpconversion,
            (PhotonBasis::TwoPhoton, PumpMode::Tms) => FormulaId::TwoPhotonTms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolAnalytics {
    pub p_her: f64,
    pub i_prot: f64,
    pub i_th: f64,
    pub formula_id: FormulaId,
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Transducer with the protocol's `p_mo` override applied, if any.
fn effective(t: &TransducerParams, p: &ProtocolSpec) -> TransducerParams {
    match p.p_mo_override {
        Some(pmo) => t.with_p_mo(pmo),
        None => t.clone(),
    }
}

fn alpha(p: &ProtocolSpec) -> Result<f64> {
    p.alpha.ok_or_else(|| {
        LinkError::Config("one-photon upconversion requires `alpha`".to_string())
    })
}

/// Heralding probability per attempt for a single channel without memory.
pub fn herald_probability(t: &TransducerParams, p: &ProtocolSpec) -> Result<f64> {
    let t = effective(t, p);
    let eta_tot = t.eta_tot();
    let p_her = match FormulaId::base(p) {
        FormulaId::OnePhotonUpconversion => 2.0 * alpha(p)? * eta_tot,
        FormulaId::OnePhotonTms => {
            // eta_tot / eta_mw without dividing by a possibly zero eta_mw
            2.0 * t.p_mo * t.eta_det
        }
        FormulaId::TwoPhotonUpconversion | FormulaId::TwoPhotonTms => eta_tot * eta_tot / 2.0,
        _ => unreachable!("base formula ids only"),
    };
    Ok(clamp_probability(p_her))
}

/// Heralding probability when an optical memory removes the need for both
/// photons to arrive in the same attempt.
pub fn herald_probability_with_memory(
    t: &TransducerParams,
    p: &ProtocolSpec,
    m: &MemoryParams,
) -> Result<f64> {
    let t = effective(t, p);
    let p_her = match (m.kind, p.basis, p.pump) {
        (MemoryKind::SpinCavity, PhotonBasis::TwoPhoton, PumpMode::Upconversion) => {
            t.eta_tot() * m.eta_mem / 2.0
        }
        (MemoryKind::CatchRelease, PhotonBasis::TwoPhoton, PumpMode::Tms) => {
            t.eta_tot() * t.eta_mw * m.eta_mem * m.eta_mem / 2.0
        }
        (kind, _, _) => {
            return Err(LinkError::Config(format!(
                "{kind:?} memory is incompatible with protocol {}",
                p.short_name()
            )))
        }
    };
    Ok(clamp_probability(p_her))
}

/// Infidelity inherent to the protocol, independent of transducer noise.
pub fn protocol_infidelity(t: &TransducerParams, p: &ProtocolSpec) -> Result<f64> {
    let t = effective(t, p);
    Ok(match FormulaId::base(p) {
        FormulaId::OnePhotonUpconversion => alpha(p)?,
        FormulaId::TwoPhotonUpconversion => 0.0,
        FormulaId::OnePhotonTms => t.eta_mw * t.p_mo + (1.0 - t.eta_mw),
        FormulaId::TwoPhotonTms => 2.0 / 3.0 * t.p_mo * (1.0 - t.eta_mw),
        _ => unreachable!("base formula ids only"),
    })
}

/// Infidelity from thermal noise photons producing false heralds.
pub fn thermal_infidelity(t: &TransducerParams, p: &ProtocolSpec) -> Result<f64> {
    let n_th = t.n_th;
    Ok(match FormulaId::base(p) {
        FormulaId::OnePhotonUpconversion => {
            let a = alpha(p)?;
            let denom = a * t.eta_mw;
            if n_th == 0.0 {
                0.0
            } else if denom > 0.0 {
                n_th / denom
            } else {
                return Err(LinkError::DivisionDomain(
                    "n_th / (alpha * eta_mw) with alpha * eta_mw = 0".to_string(),
                ));
            }
        }
        FormulaId::TwoPhotonUpconversion => {
            if n_th == 0.0 {
                0.0
            } else if t.eta_mw > 0.0 {
                6.0 * n_th / t.eta_mw
            } else {
                return Err(LinkError::DivisionDomain(
                    "6 n_th / eta_mw with eta_mw = 0".to_string(),
                ));
            }
        }
        FormulaId::OnePhotonTms => 2.0 * n_th * t.eta_mw * t.eta_mw,
        FormulaId::TwoPhotonTms => 2.0 * n_th,
        _ => unreachable!("base formula ids only"),
    })
}

/// Heralding probability and both infidelity components in one call.
///
/// With a memory the heralding probability follows the memory formula; the
/// infidelities are those of the underlying two-photon protocol.
pub fn analyze(
    t: &TransducerParams,
    p: &ProtocolSpec,
    m: Option<&MemoryParams>,
) -> Result<ProtocolAnalytics> {
    let (p_her, formula_id) = match m {
        Some(m) => {
            let id = match m.kind {
                MemoryKind::SpinCavity => FormulaId::SpinCavityTwoPhotonUpconversion,
                MemoryKind::CatchRelease => FormulaId::CatchReleaseTwoPhotonTms,
            };
            (herald_probability_with_memory(t, p, m)?, id)
        }
        None => (herald_probability(t, p)?, FormulaId::base(p)),
    };
    Ok(ProtocolAnalytics {
        p_her,
        i_prot: protocol_infidelity(t, p)?,
        i_th: thermal_infidelity(t, p)?,
        formula_id,
    })
}

/// Fidelity of a freshly heralded pair.
pub fn heralded_fidelity(a: &ProtocolAnalytics, model: FidelityModel) -> Result<f64> {
    let sum = a.i_prot + model.thermal_weight() * a.i_th;
    if !(sum <= 0.75) || sum < 0.0 {
        return Err(LinkError::ModelDomain { sum });
    }
    Ok((1.0 - sum).clamp(0.25, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::transducer;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn example3_protocol() -> ProtocolSpec {
        ProtocolSpec {
            p_mo_override: Some(0.02),
            ..ProtocolSpec::one_photon_tms()
        }
    }

    #[test]
    fn herald_probability_examples() {
        let t1 = transducer("transducer1").unwrap();
        let t2 = transducer("transducer2").unwrap();
        let p = herald_probability(&t1, &ProtocolSpec::one_photon_tms()).unwrap();
        assert!(close(p, 0.01, 1e-15));
        let p = herald_probability(&t2, &example3_protocol()).unwrap();
        assert!(close(p, 0.02, 1e-15));
        let mut dead = t1.clone();
        dead.p_mo = 0.0;
        for spec in [
            ProtocolSpec::one_photon_tms(),
            ProtocolSpec::one_photon_upconversion(0.1),
            ProtocolSpec::two_photon_tms(),
            ProtocolSpec::two_photon_upconversion(),
        ] {
            assert_eq!(herald_probability(&dead, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn missing_alpha_is_config_error() {
        let t1 = transducer("transducer1").unwrap();
        let spec = ProtocolSpec::new(PhotonBasis::OnePhoton, PumpMode::Upconversion);
        assert!(matches!(
            herald_probability(&t1, &spec),
            Err(LinkError::Config(_))
        ));
    }

    #[test]
    fn memory_examples() {
        let t2 = transducer("transducer2").unwrap();
        let spin = MemoryParams {
            kind: MemoryKind::SpinCavity,
            eta_mem: 1.0,
            lifetime_us: 1000.0,
        };
        let spec = ProtocolSpec::two_photon_upconversion();
        let p = herald_probability_with_memory(&t2, &spec, &spin).unwrap();
        assert!(close(p, 0.02375, 1e-15));

        let dead = MemoryParams { eta_mem: 0.0, ..spin.clone() };
        assert_eq!(herald_probability_with_memory(&t2, &spec, &dead).unwrap(), 0.0);

        let without = herald_probability(&t2, &spec).unwrap();
        let boost = herald_probability_with_memory(&t2, &spec, &MemoryParams { eta_mem: 0.8, ..spin.clone() })
            .unwrap()
            / without;
        assert!(close(boost, 0.8 / t2.eta_tot(), 1e-12 * boost));

        assert!(matches!(
            herald_probability_with_memory(&t2, &ProtocolSpec::two_photon_tms(), &spin),
            Err(LinkError::Config(_))
        ));
    }

    #[test]
    fn infidelity_examples() {
        let t1 = transducer("transducer1").unwrap();
        let t2 = transducer("transducer2").unwrap();
        let spec = ProtocolSpec::one_photon_tms();
        assert!(close(protocol_infidelity(&t1, &spec).unwrap(), 0.208, 1e-12));
        assert!(close(thermal_infidelity(&t1, &spec).unwrap(), 0.128, 1e-12));
        assert_eq!(
            protocol_infidelity(&t2, &ProtocolSpec::two_photon_upconversion()).unwrap(),
            0.0
        );
        assert!(close(
            protocol_infidelity(&t2, &example3_protocol()).unwrap(),
            0.069,
            1e-12
        ));
        assert!(close(
            thermal_infidelity(&t2, &ProtocolSpec::two_photon_upconversion()).unwrap(),
            0.06 / 0.95,
            1e-15
        ));
    }

    #[test]
    fn noiseless_transducer_has_no_thermal_infidelity() {
        let mut t = transducer("transducer1").unwrap();
        t.n_th = 0.0;
        for spec in [
            ProtocolSpec::one_photon_tms(),
            ProtocolSpec::one_photon_upconversion(0.1),
            ProtocolSpec::two_photon_tms(),
            ProtocolSpec::two_photon_upconversion(),
        ] {
            assert_eq!(thermal_infidelity(&t, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_alpha_thermal_is_division_error() {
        let t = transducer("transducer1").unwrap();
        let spec = ProtocolSpec::one_photon_upconversion(0.0);
        assert!(matches!(
            thermal_infidelity(&t, &spec),
            Err(LinkError::DivisionDomain(_))
        ));
    }

    #[test]
    fn heralded_fidelity_models() {
        let a = ProtocolAnalytics {
            p_her: 0.01,
            i_prot: 0.208,
            i_th: 0.128,
            formula_id: FormulaId::OnePhotonTms,
        };
        let f = heralded_fidelity(&a, FidelityModel::ThermalHalf).unwrap();
        assert!(close(f, 0.728, 1e-12));
        let f = heralded_fidelity(&a, FidelityModel::LinearSum).unwrap();
        assert!(close(f, 0.664, 1e-12));
        let perfect = ProtocolAnalytics { i_prot: 0.0, i_th: 0.0, ..a };
        assert_eq!(heralded_fidelity(&perfect, FidelityModel::ThermalHalf).unwrap(), 1.0);
        let ex3 = ProtocolAnalytics { i_prot: 0.069, i_th: 0.018, ..a };
        assert!(close(heralded_fidelity(&ex3, FidelityModel::ThermalHalf).unwrap(), 0.922, 1e-12));
        let bad = ProtocolAnalytics { i_prot: 0.7, i_th: 0.2, ..a };
        match heralded_fidelity(&bad, FidelityModel::ThermalHalf) {
            Err(LinkError::ModelDomain { sum }) => assert!(close(sum, 0.8, 1e-12)),
            other => panic!("{other:?}"),
        }
    }

    fn specs() -> impl Strategy<Value = ProtocolSpec> {
        prop_oneof![
            Just(ProtocolSpec::one_photon_tms()),
            (0.01f64..1.0).prop_map(ProtocolSpec::one_photon_upconversion),
            Just(ProtocolSpec::two_photon_tms()),
            Just(ProtocolSpec::two_photon_upconversion()),
        ]
    }

    fn transducers() -> impl Strategy<Value = TransducerParams> {
        (0.01f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.5).prop_map(|(eta_mw, p_mo, eta_det, n_th)| {
            TransducerParams {
                name: "random".into(),
                eta_mw,
                p_mo,
                eta_det,
                n_th,
                t_rep_us: 1.0,
                bandwidth_mhz: None,
                eta_per_uw: None,
            }
        })
    }

    proptest! {
        #[test]
        fn herald_probability_monotone_in_efficiencies(
            t in transducers(), spec in specs(), bump in 0.0f64..0.5, which in 0usize..3,
        ) {
            let mut up = t.clone();
            match which {
                0 => up.eta_mw = (t.eta_mw + bump).min(1.0),
                1 => up.p_mo = (t.p_mo + bump).min(1.0),
                _ => up.eta_det = (t.eta_det + bump).min(1.0),
            }
            let lo = herald_probability(&t, &spec).unwrap();
            let hi = herald_probability(&up, &spec).unwrap();
            prop_assert!(hi >= lo - 1e-15);
        }

        #[test]
        fn herald_probability_monotone_in_alpha(t in transducers(), a in 0.01f64..0.5, bump in 0.0f64..0.5) {
            let lo = herald_probability(&t, &ProtocolSpec::one_photon_upconversion(a)).unwrap();
            let hi = herald_probability(&t, &ProtocolSpec::one_photon_upconversion(a + bump)).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn herald_probability_monotone_in_eta_mem(t in transducers(), e in 0.0f64..1.0, bump in 0.0f64..1.0) {
            for (kind, spec) in [
                (MemoryKind::SpinCavity, ProtocolSpec::two_photon_upconversion()),
                (MemoryKind::CatchRelease, ProtocolSpec::two_photon_tms()),
            ] {
                let m = MemoryParams { kind, eta_mem: e, lifetime_us: 1.0 };
                let up = MemoryParams { eta_mem: (e + bump).min(1.0), ..m.clone() };
                prop_assert!(
                    herald_probability_with_memory(&t, &spec, &up).unwrap()
                        >= herald_probability_with_memory(&t, &spec, &m).unwrap()
                );
            }
        }

        #[test]
        fn thermal_infidelity_monotone_in_noise(t in transducers(), spec in specs(), bump in 0.0f64..0.5) {
            let up = TransducerParams { n_th: t.n_th + bump, ..t.clone() };
            prop_assert!(thermal_infidelity(&up, &spec).unwrap() >= thermal_infidelity(&t, &spec).unwrap());
        }

        #[test]
        fn two_photon_pumps_agree(t in transducers()) {
            prop_assert_eq!(
                herald_probability(&t, &ProtocolSpec::two_photon_tms()).unwrap(),
                herald_probability(&t, &ProtocolSpec::two_photon_upconversion()).unwrap()
            );
        }

        #[test]
        fn memory_boost_matches_increase_column(
            eta_mw in 0.05f64..1.0, p_mo in 0.05f64..1.0, eta_det in 0.05f64..1.0, eta_mem in 0.0f64..1.0,
        ) {
            let t = TransducerParams {
                name: "r".into(), eta_mw, p_mo, eta_det, n_th: 0.0, t_rep_us: 1.0,
                bandwidth_mhz: None, eta_per_uw: None,
            };
            let spin = MemoryParams { kind: MemoryKind::SpinCavity, eta_mem, lifetime_us: 1.0 };
            let spec = ProtocolSpec::two_photon_upconversion();
            let ratio = herald_probability_with_memory(&t, &spec, &spin).unwrap()
                / herald_probability(&t, &spec).unwrap();
            let expected = eta_mem / t.eta_tot();
            prop_assert!((ratio - expected).abs() <= 1e-12 * expected.max(1.0));

            let cr = MemoryParams { kind: MemoryKind::CatchRelease, ..spin };
            let spec = ProtocolSpec::two_photon_tms();
            let ratio = herald_probability_with_memory(&t, &spec, &cr).unwrap()
                / herald_probability(&t, &spec).unwrap();
            let expected = eta_mem * eta_mem * eta_mw / t.eta_tot();
            prop_assert!((ratio - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}
