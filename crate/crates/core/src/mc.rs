//! Seeded Monte Carlo oracle for the analytic delivery and protocol models.
//!
//! Every trial draws from its own ChaCha8 stream keyed by `(seed, trial
//! index)`, and trials are reduced in fixed-size chunks merged in index
//! order, so results are bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::delivery::{LinkModel, FALLBACK_FIDELITY};
use crate::distill::{nested_distill, DistillMode};
use crate::error::{LinkError, Result};
use crate::model::{
    ensure_valid, LinkConfig, MemoryKind, MemoryParams, PhotonBasis, ProtocolSpec, PumpMode,
    TransducerParams,
};

/// Trials per reduction chunk. Fixed so the merge order never depends on
/// the thread pool.
const CHUNK: u64 = 4096;

/// Maximum number of per-trial rows kept for CSV dumps.
pub const MAX_RECORDS: u64 = 1_000_000;

fn stream_key(seed: u64) -> [u8; 32] {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

fn trial_rng(key: &[u8; 32], trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(trial);
    rng
}

/// Outcome of one delivery trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub herald_round: Option<u64>,
    pub winning_channel: Option<u32>,
    pub stored_us: Option<f64>,
    pub delivered_fidelity: f64,
}

fn simulate_trial(
    model: &LinkModel,
    rounds: u64,
    t_del_us: f64,
    rng: &mut ChaCha8Rng,
    trial: u64,
) -> TrialRecord {
    for k in 1..=rounds {
        for channel in 0..model.n_parallel {
            if rng.gen::<f64>() < model.p_her {
                let tau = t_del_us - k as f64 * model.t_rep_us;
                return TrialRecord {
                    trial,
                    herald_round: Some(k),
                    winning_channel: Some(channel),
                    stored_us: Some(tau),
                    delivered_fidelity: model.stored_fidelity(tau),
                };
            }
        }
    }
    TrialRecord {
        trial,
        herald_round: None,
        winning_channel: None,
        stored_us: None,
        delivered_fidelity: FALLBACK_FIDELITY,
    }
}

/// Running moments plus herald-round histogram for a block of trials.
#[derive(Debug, Clone)]
struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    histogram: Vec<u64>,
    failures: u64,
}

impl Accumulator {
    fn new(rounds: u64) -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            histogram: vec![0; rounds as usize],
            failures: 0,
        }
    }

    fn push(&mut self, r: &TrialRecord) {
        self.n += 1;
        let delta = r.delivered_fidelity - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (r.delivered_fidelity - self.mean);
        match r.herald_round {
            Some(k) => self.histogram[(k - 1) as usize] += 1,
            None => self.failures += 1,
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        self.failures += other.failures;
        self
    }
}

/// Summary of a delivery Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub n_trials: u64,
    pub seed: u64,
    pub t_del_us: f64,
    pub rounds: u64,
    pub n_parallel: u32,
    pub p_her: f64,
    pub mean_f_del: f64,
    /// Sample standard deviation over trials divided by `sqrt(n_trials)`.
    pub std_error: f64,
    pub p_success: f64,
    /// Binomial standard error of `p_success`.
    pub p_success_std_error: f64,
    /// Trials whose first herald came in round `k`, at index `k - 1`.
    pub herald_histogram: Vec<u64>,
    pub failures: u64,
}

impl McStats {
    /// Histogram mass plus failure mass; one by construction.
    pub fn total_mass(&self) -> f64 {
        let heralded: u64 = self.herald_histogram.iter().sum();
        (heralded + self.failures) as f64 / self.n_trials as f64
    }
}

fn prepare(config: &LinkConfig, n_trials: u64) -> Result<(LinkModel, u64)> {
    if n_trials < 1 {
        return Err(LinkError::Config("n_trials must be >= 1".to_string()));
    }
    if config.policy.t_del_us < config.transducer.t_rep_us {
        return Err(LinkError::Config(
            "timeout shorter than one attempt".to_string(),
        ));
    }
    ensure_valid(config)?;
    let model = LinkModel::new(config)?;
    let rounds = model.rounds_for(config.policy.t_del_us);
    Ok((model, rounds))
}

fn run_chunks(
    model: &LinkModel,
    rounds: u64,
    t_del_us: f64,
    n_trials: u64,
    key: &[u8; 32],
) -> Accumulator {
    let n_chunks = n_trials.div_ceil(CHUNK);
    let partials: Vec<Accumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(rounds);
            let end = ((c + 1) * CHUNK).min(n_trials);
            for trial in c * CHUNK..end {
                let mut rng = trial_rng(key, trial);
                acc.push(&simulate_trial(model, rounds, t_del_us, &mut rng, trial));
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(Accumulator::new(rounds), Accumulator::merge)
}

/// Simulate `n_trials` independent deliveries of the configured link.
pub fn run_trials(config: &LinkConfig, n_trials: u64, seed: u64) -> Result<McStats> {
    let (model, rounds) = prepare(config, n_trials)?;
    let t_del = config.policy.t_del_us;
    let acc = run_chunks(&model, rounds, t_del, n_trials, &stream_key(seed));
    Ok(finish(config, &model, rounds, seed, acc))
}

fn finish(config: &LinkConfig, model: &LinkModel, rounds: u64, seed: u64, acc: Accumulator) -> McStats {
    let n = acc.n as f64;
    let variance = if acc.n > 1 { acc.m2 / (n - 1.0) } else { 0.0 };
    let p_success = (acc.n - acc.failures) as f64 / n;
    McStats {
        n_trials: acc.n,
        seed,
        t_del_us: config.policy.t_del_us,
        rounds,
        n_parallel: model.n_parallel,
        p_her: model.p_her,
        mean_f_del: acc.mean,
        std_error: (variance / n).sqrt(),
        p_success,
        p_success_std_error: (p_success * (1.0 - p_success) / n).sqrt(),
        herald_histogram: acc.histogram,
        failures: acc.failures,
    }
}

/// Like [`run_trials`] but also returns every trial, for CSV dumps.
/// Bounded to [`MAX_RECORDS`] trials.
pub fn run_trials_with_records(
    config: &LinkConfig,
    n_trials: u64,
    seed: u64,
) -> Result<(McStats, Vec<TrialRecord>)> {
    if n_trials > MAX_RECORDS {
        return Err(LinkError::Config(format!(
            "per-trial dump limited to {MAX_RECORDS} trials"
        )));
    }
    let (model, rounds) = prepare(config, n_trials)?;
    let t_del = config.policy.t_del_us;
    let key = stream_key(seed);
    let records: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|trial| simulate_trial(&model, rounds, t_del, &mut trial_rng(&key, trial), trial))
        .collect();
    let acc = records
        .chunks(CHUNK as usize)
        .map(|chunk| {
            let mut acc = Accumulator::new(rounds);
            chunk.iter().for_each(|r| acc.push(r));
            acc
        })
        .fold(Accumulator::new(rounds), Accumulator::merge);
    Ok((finish(config, &model, rounds, seed, acc), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Pearson chi-square of the herald-round histogram (plus the failure bin)
/// against the truncated geometric law with per-round probability `q`.
/// Adjacent bins are pooled until each expects at least five counts.
pub fn geometric_chi_square(stats: &McStats, q: f64) -> ChiSquareTest {
    let n = stats.n_trials as f64;
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(stats.herald_histogram.len() + 1);
    let mut reach = 1.0;
    for &count in &stats.herald_histogram {
        cells.push((count as f64, n * reach * q));
        reach *= 1.0 - q;
    }
    cells.push((stats.failures as f64, n * reach));

    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut current = (0.0, 0.0);
    for (obs, exp) in cells {
        current.0 += obs;
        current.1 += exp;
        if current.1 >= 5.0 {
            pooled.push(current);
            current = (0.0, 0.0);
        }
    }
    if current.1 > 0.0 || current.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += current.0;
                last.1 += current.1;
            }
            None => pooled.push(current),
        }
    }

    let statistic: f64 = pooled
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = pooled.len().saturating_sub(1) as u64;
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map(|d| d.sf(statistic))
            .unwrap_or(f64::NAN)
    };
    ChiSquareTest {
        statistic,
        dof,
        p_value,
    }
}

/// Summary of a nested-distillation Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillMcStats {
    pub n_trials: u64,
    pub seed: u64,
    pub f_in: f64,
    pub rounds: u32,
    /// Fidelity of every successful output (post-selection makes it fixed).
    pub output_fidelity: f64,
    pub mean_pairs: f64,
    pub pairs_std_error: f64,
    /// Closed-form `2^rounds / prod(p_i)` for comparison.
    pub expected_pairs: f64,
    pub round_attempts: Vec<u64>,
    pub round_successes: Vec<u64>,
    pub round_success_rate: Vec<f64>,
    pub round_success_probability: Vec<f64>,
}

struct DistillCounters {
    attempts: Vec<u64>,
    successes: Vec<u64>,
}

/// Pairs consumed to produce one pair at `level`, retrying failed rounds.
fn produce(level: usize, probs: &[f64], rng: &mut ChaCha8Rng, c: &mut DistillCounters) -> u64 {
    if level == 0 {
        return 1;
    }
    let mut consumed = 0;
    loop {
        consumed += produce(level - 1, probs, rng, c);
        consumed += produce(level - 1, probs, rng, c);
        c.attempts[level - 1] += 1;
        if rng.gen::<f64>() < probs[level - 1] {
            c.successes[level - 1] += 1;
            return consumed;
        }
    }
}

/// Sample nested recurrence distillation with stochastic round success.
pub fn run_distill_trials(f_in: f64, rounds: u32, n_trials: u64, seed: u64) -> Result<DistillMcStats> {
    if n_trials < 1 {
        return Err(LinkError::Config("n_trials must be >= 1".to_string()));
    }
    let closed = nested_distill(f_in, rounds, DistillMode::Recurrence)?;
    let probs = closed.round_success.clone();
    let key = stream_key(seed);
    let r = rounds as usize;

    type Partial = (u64, f64, f64, Vec<u64>, Vec<u64>);
    let n_chunks = n_trials.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut c = DistillCounters {
                attempts: vec![0; r],
                successes: vec![0; r],
            };
            let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
            let end = ((chunk + 1) * CHUNK).min(n_trials);
            for trial in chunk * CHUNK..end {
                let mut rng = trial_rng(&key, trial);
                let x = produce(r, &probs, &mut rng, &mut c) as f64;
                n += 1;
                let delta = x - mean;
                mean += delta / n as f64;
                m2 += delta * (x - mean);
            }
            (n, mean, m2, c.attempts, c.successes)
        })
        .collect();

    let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    let mut attempts = vec![0u64; r];
    let mut successes = vec![0u64; r];
    for (pn, pmean, pm2, pa, ps) in partials {
        let total = n + pn;
        let delta = pmean - mean;
        mean += delta * pn as f64 / total as f64;
        m2 += pm2 + delta * delta * n as f64 * pn as f64 / total as f64;
        n = total;
        attempts.iter_mut().zip(pa).for_each(|(a, b)| *a += b);
        successes.iter_mut().zip(ps).for_each(|(a, b)| *a += b);
    }
    let variance = if n > 1 { m2 / (n as f64 - 1.0) } else { 0.0 };
    Ok(DistillMcStats {
        n_trials: n,
        seed,
        f_in,
        rounds,
        output_fidelity: closed.f_out,
        mean_pairs: mean,
        pairs_std_error: (variance / n as f64).sqrt(),
        expected_pairs: closed.expected_pairs,
        round_success_rate: attempts
            .iter()
            .zip(&successes)
            .map(|(a, s)| if *a > 0 { *s as f64 / *a as f64 } else { 0.0 })
            .collect(),
        round_attempts: attempts,
        round_successes: successes,
        round_success_probability: probs,
    })
}

/// Empirical herald rate of the physical event chain behind each heralding
/// formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldStats {
    pub n_trials: u64,
    pub heralds: u64,
    pub rate: f64,
    pub std_error: f64,
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// One attempt of the photon-level event chain.
///
/// One-photon protocols herald on exactly one detector click from the two
/// sides; two-photon protocols need both photons and a distinguishable Bell
/// outcome (a fair coin). With a memory, one photon is taken from storage
/// and re-emitted instead of crossing the full chain in the same attempt.
fn herald_attempt(
    t: &TransducerParams,
    p: &ProtocolSpec,
    m: Option<&MemoryParams>,
    rng: &mut ChaCha8Rng,
) -> bool {
    let eta_tot = t.eta_tot();
    match (p.basis, p.pump, m) {
        (_, _, Some(mem)) => {
            let arrives = bernoulli(rng, eta_tot);
            let released = match mem.kind {
                MemoryKind::SpinCavity => bernoulli(rng, mem.eta_mem),
                MemoryKind::CatchRelease => {
                    let parity = bernoulli(rng, t.eta_mw);
                    let left = bernoulli(rng, mem.eta_mem);
                    let right = bernoulli(rng, mem.eta_mem);
                    parity && left && right
                }
            };
            let bell = bernoulli(rng, 0.5);
            arrives && released && bell
        }
        (PhotonBasis::OnePhoton, pump, None) => {
            let mut clicks = 0;
            for _side in 0..2 {
                let emitted_and_detected = match pump {
                    PumpMode::Upconversion => {
                        let emit = bernoulli(rng, p.alpha.unwrap_or(0.0));
                        emit && bernoulli(rng, eta_tot)
                    }
                    PumpMode::Tms => {
                        let pair = bernoulli(rng, t.p_mo);
                        pair && bernoulli(rng, t.eta_det)
                    }
                };
                clicks += u32::from(emitted_and_detected);
            }
            clicks == 1
        }
        (PhotonBasis::TwoPhoton, pump, None) => {
            let mut both = true;
            for _side in 0..2 {
                let ok = match pump {
                    PumpMode::Upconversion => bernoulli(rng, eta_tot),
                    PumpMode::Tms => {
                        let pair = bernoulli(rng, t.p_mo);
                        let absorbed = bernoulli(rng, t.eta_mw);
                        let detected = bernoulli(rng, t.eta_det);
                        pair && absorbed && detected
                    }
                };
                both &= ok;
            }
            let bell = bernoulli(rng, 0.5);
            both && bell
        }
    }
}

/// Estimate the per-attempt heralding probability by sampling the event chain.
pub fn run_herald_trials(
    t: &TransducerParams,
    p: &ProtocolSpec,
    m: Option<&MemoryParams>,
    n_trials: u64,
    seed: u64,
) -> Result<HeraldStats> {
    if n_trials < 1 {
        return Err(LinkError::Config("n_trials must be >= 1".to_string()));
    }
    let t = match p.p_mo_override {
        Some(pmo) => t.with_p_mo(pmo),
        None => t.clone(),
    };
    let key = stream_key(seed);
    let heralds: u64 = (0..n_trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let end = ((chunk + 1) * CHUNK).min(n_trials);
            (chunk * CHUNK..end)
                .filter(|&trial| herald_attempt(&t, p, m, &mut trial_rng(&key, trial)))
                .count() as u64
        })
        .sum();
    let rate = heralds as f64 / n_trials as f64;
    Ok(HeraldStats {
        n_trials,
        heralds,
        rate,
        std_error: (rate * (1.0 - rate) / n_trials as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delivery::delivered_fidelity;
    use crate::model::DeliveryPolicy;
    use crate::presets::{qubit, transducer};
    use crate::protocol;

    fn example1() -> LinkConfig {
        LinkConfig {
            transducer: transducer("transducer1").unwrap(),
            qubit: qubit("qubit1").unwrap(),
            protocol: ProtocolSpec::one_photon_tms(),
            memory: None,
            policy: DeliveryPolicy::new(88.0),
        }
    }

    #[test]
    fn matches_analytic_example1() {
        let c = example1();
        let stats = run_trials(&c, 100_000, 11).unwrap();
        let m = delivered_fidelity(&c).unwrap();
        assert!((stats.mean_f_del - m.f_del).abs() < 3.0 * stats.std_error);
        assert!((stats.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn certain_herald() {
        let mut c = example1();
        c.protocol.p_her_override = Some(1.0);
        let stats = run_trials(&c, 1000, 3).unwrap();
        assert_eq!(stats.herald_histogram[0], 1000);
        assert_eq!(stats.p_success, 1.0);
    }

    #[test]
    fn no_herald_is_pure_fallback() {
        let mut c = example1();
        c.transducer.p_mo = 0.0;
        let stats = run_trials(&c, 5000, 3).unwrap();
        assert_eq!(stats.mean_f_del, 0.5);
        assert_eq!(stats.std_error, 0.0);
        assert_eq!(stats.p_success, 0.0);
    }

    #[test]
    fn same_seed_same_result() {
        let c = example1();
        let a = run_trials(&c, 20_000, 7).unwrap();
        let b = run_trials(&c, 20_000, 7).unwrap();
        assert_eq!(a, b);
        let other = run_trials(&c, 20_000, 8).unwrap();
        assert_ne!(a.mean_f_del, other.mean_f_del);
    }

    #[test]
    fn records_agree_with_stats() {
        let c = example1();
        let (stats, records) = run_trials_with_records(&c, 10_000, 5).unwrap();
        assert_eq!(stats, run_trials(&c, 10_000, 5).unwrap());
        for r in &records {
            match r.herald_round {
                Some(k) => {
                    let tau = r.stored_us.unwrap();
                    assert!((tau - (88.0 - k as f64)).abs() < 1e-12);
                }
                None => assert_eq!(r.delivered_fidelity, 0.5),
            }
        }
        assert!(run_trials_with_records(&c, MAX_RECORDS + 1, 5).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_trials(&example1(), 0, 1).is_err());
    }

    #[test]
    fn histogram_follows_truncated_geometric() {
        let c = example1();
        let stats = run_trials(&c, 100_000, 21).unwrap();
        let q = LinkModel::new(&c).unwrap().round_probability();
        let chi = geometric_chi_square(&stats, q);
        assert!(chi.p_value > 0.001, "{chi:?}");
        // A wrong law is rejected.
        let wrong = geometric_chi_square(&stats, 0.02);
        assert!(wrong.p_value < 0.001);
    }

    #[test]
    fn distill_trials() {
        let s = run_distill_trials(0.91, 1, 100_000, 4).unwrap();
        let p = s.round_success_probability[0];
        let se = (p * (1.0 - p) / s.round_attempts[0] as f64).sqrt();
        assert!((s.round_success_rate[0] - p).abs() < 3.0 * se);
        assert!((s.mean_pairs - s.expected_pairs).abs() < 3.0 * s.pairs_std_error + 1e-12);

        let s = run_distill_trials(0.91, 0, 100, 4).unwrap();
        assert_eq!(s.mean_pairs, 1.0);

        let s = run_distill_trials(1.0, 3, 1000, 4).unwrap();
        assert!(s.round_success_rate.iter().all(|r| *r == 1.0));
        assert_eq!(s.output_fidelity, 1.0);
        assert_eq!(s.mean_pairs, 8.0);
    }

    #[test]
    fn herald_chain_matches_formulas() {
        let t1 = transducer("transducer1").unwrap();
        let t2 = transducer("transducer2").unwrap();
        let cases = [
            (t1.clone(), ProtocolSpec::one_photon_tms(), None),
            (t2.clone(), ProtocolSpec { p_mo_override: Some(0.02), ..ProtocolSpec::one_photon_tms() }, None),
            (t1.clone(), ProtocolSpec::one_photon_upconversion(0.05), None),
            (t2.clone(), ProtocolSpec::two_photon_upconversion(), None),
            (t2.clone(), ProtocolSpec::two_photon_tms(), None),
            (
                t2.clone(),
                ProtocolSpec::two_photon_upconversion(),
                Some(MemoryParams { kind: MemoryKind::SpinCavity, eta_mem: 1.0, lifetime_us: 1e3 }),
            ),
            (
                t2.clone(),
                ProtocolSpec::two_photon_tms(),
                Some(MemoryParams { kind: MemoryKind::CatchRelease, eta_mem: 0.9, lifetime_us: 1e3 }),
            ),
        ];
        for (i, (t, p, m)) in cases.iter().enumerate() {
            let formula = protocol::analyze(t, p, m.as_ref()).unwrap().p_her;
            let mc = run_herald_trials(t, p, m.as_ref(), 100_000, 100 + i as u64).unwrap();
            let se = (formula * (1.0 - formula) / 1e5).sqrt();
            assert!(
                (mc.rate - formula).abs() < 3.0 * se,
                "case {i}: mc {} vs formula {formula}",
                mc.rate
            );
        }
    }
}
