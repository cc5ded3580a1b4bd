//! Entanglement distillation.
//!
//! Two models are provided. [`calibrated_distill`] encodes the planning rule
//! "one order of magnitude less infidelity per 16 consumed pairs" and is the
//! default for resource arithmetic. [`recurrence_round`] is a physical
//! recurrence step (bilateral rotations, bilateral CNOT, parity post-selection)
//! on Bell-diagonal states.

use serde::{Deserialize, Serialize};

use crate::error::{LinkError, Result};

/// Weights over the Bell basis, ordered `[Phi+, Psi-, Psi+, Phi-]`.
/// The first entry is the fidelity to the target pair `Phi+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellDiagonalState {
    pub p: [f64; 4],
}

const NORMALIZATION_TOL: f64 = 1e-12;

impl BellDiagonalState {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|x| !(*x >= 0.0)) {
            return Err(LinkError::Domain(format!(
                "Bell-diagonal weights must be non-negative: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LinkError::Domain(format!(
                "Bell-diagonal weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { p })
    }

    /// Werner state: fidelity `f`, remaining weight spread evenly.
    pub fn werner(f: f64) -> Self {
        let rest = (1.0 - f) / 3.0;
        Self {
            p: [f, rest, rest, rest],
        }
    }

    pub fn fidelity(&self) -> f64 {
        self.p[0]
    }

    /// Depolarize onto the Werner state with the same fidelity.
    pub fn twirled(&self) -> Self {
        Self::werner(self.fidelity())
    }
}

/// Result of one recurrence step on two input pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillationOutcome {
    pub state: BellDiagonalState,
    pub success_probability: f64,
    pub pairs_consumed: u64,
    pub rounds: u32,
}

/// One recurrence step. Both sides rotate their halves by `+pi/2` (Alice)
/// and `-pi/2` (Bob) about X, apply CNOT from pair `a` onto pair `b`, measure
/// pair `b` in Z and keep `a` when the outcomes agree.
///
/// With `a = (A, B, C, D)` and `b = (A', B', C', D')`:
///
/// ```text
/// N  = (A + B)(A' + B') + (C + D)(C' + D')
/// A" = (A A' + B B') / N      B" = (C D' + D C') / N
/// C" = (C C' + D D') / N      D" = (A B' + B A') / N
/// ```
pub fn recurrence_round(
    a: &BellDiagonalState,
    b: &BellDiagonalState,
) -> Result<DistillationOutcome> {
    let [a0, a1, a2, a3] = a.p;
    let [b0, b1, b2, b3] = b.p;
    let n = (a0 + a1) * (b0 + b1) + (a2 + a3) * (b2 + b3);
    if !(n > 0.0) {
        return Err(LinkError::DegenerateInput(
            "parity post-selection never succeeds for these inputs".to_string(),
        ));
    }
    let out = [
        (a0 * b0 + a1 * b1) / n,
        (a2 * b3 + a3 * b2) / n,
        (a2 * b2 + a3 * b3) / n,
        (a0 * b1 + a1 * b0) / n,
    ];
    Ok(DistillationOutcome {
        state: BellDiagonalState { p: out },
        success_probability: n.min(1.0),
        pairs_consumed: 2,
        rounds: 1,
    })
}

fn check_input_fidelity(f_in: f64) -> Result<()> {
    if f_in > 0.5 && f_in <= 1.0 {
        Ok(())
    } else {
        Err(LinkError::Domain(format!(
            "input fidelity {f_in} outside (0.5, 1]"
        )))
    }
}

fn check_rounds(rounds: u32) -> Result<()> {
    if rounds > crate::model::MAX_DISTILL_ROUNDS {
        Err(LinkError::Domain(format!(
            "{rounds} distillation rounds exceeds the limit of {}",
            crate::model::MAX_DISTILL_ROUNDS
        )))
    } else {
        Ok(())
    }
}

/// Pairs consumed by `rounds` nested rounds.
pub fn pairs_for_rounds(rounds: u32) -> u64 {
    1u64 << rounds
}

/// Calibrated rule: each four rounds (16 pairs) cut the infidelity tenfold,
/// applied uniformly at any starting fidelity.
pub fn calibrated_distill(f_in: f64, rounds: u32) -> Result<f64> {
    check_input_fidelity(f_in)?;
    check_rounds(rounds)?;
    Ok(1.0 - (1.0 - f_in) * 10f64.powf(-f64::from(rounds) / 4.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    #[default]
    Calibrated,
    Recurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedDistillation {
    pub mode: DistillMode,
    pub f_in: f64,
    pub rounds: u32,
    pub f_out: f64,
    /// Nominal consumption, `2^rounds`.
    pub pairs: u64,
    /// Consumption including discarded failures, `2^rounds / prod(p_i)`.
    pub expected_pairs: f64,
    /// Success probability of each round (all ones in calibrated mode).
    pub round_success: Vec<f64>,
}

/// Iterate distillation `rounds` times starting from fidelity `f_in`.
pub fn nested_distill(f_in: f64, rounds: u32, mode: DistillMode) -> Result<NestedDistillation> {
    check_input_fidelity(f_in)?;
    check_rounds(rounds)?;
    let pairs = pairs_for_rounds(rounds);
    match mode {
        DistillMode::Calibrated => Ok(NestedDistillation {
            mode,
            f_in,
            rounds,
            f_out: calibrated_distill(f_in, rounds)?,
            pairs,
            expected_pairs: pairs as f64,
            round_success: vec![1.0; rounds as usize],
        }),
        DistillMode::Recurrence => {
            let mut state = BellDiagonalState::werner(f_in);
            let mut round_success = Vec::with_capacity(rounds as usize);
            for _ in 0..rounds {
                let twirled = state.twirled();
                let out = recurrence_round(&twirled, &twirled)?;
                round_success.push(out.success_probability);
                state = out.state;
            }
            let product: f64 = round_success.iter().product();
            Ok(NestedDistillation {
                mode,
                f_in,
                rounds,
                f_out: state.fidelity(),
                pairs,
                expected_pairs: pairs as f64 / product,
                round_success,
            })
        }
    }
}
