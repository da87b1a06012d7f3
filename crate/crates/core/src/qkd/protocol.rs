//! The two-party protocol run: generate rounds over the (possibly attacked)
//! channel, exchange announcements, run the two-step eavesdropping test, and
//! extract the key.
//!
//! Step I consumes the wrong-context subensembles E5..E8: their CHSH
//! combination must sit near zero, because an entanglement-breaking channel
//! leaves a separable state whose combination can reach ±2. Step II
//! sacrifices a random sacrifice-fraction slice of the correct-context rounds
//! and checks the perfect (anti)correlations round by round. Whatever
//! survives both steps becomes key material.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    chsh_statistic, ChshEstimate, EngineError, EstimateMode, Mode, Partition, RngSpec, RoundRecord,
    Simulator,
};
use crate::observables::{ContextKind, SubensembleLabel, ALL_SUBENSEMBLES};
use crate::quantum::QuantumState;

use super::accounting::{resource_accounting, AccountingRow, ResourceFractions, DEFAULT_BB84_X};
use super::channel::{quantum_channel, EveModel};
use super::sifting::{Party, SiftingMessage};

/// Default fraction of the total resource sacrificed in Step II.
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Default Step-I threshold floor; the resolved threshold is
/// max(floor, 5·std_error) so statistical wobble alone cannot abort.
pub const DEFAULT_TAU1_FLOOR: f64 = 0.2;
/// Default Step-II maximum tolerated error rate.
pub const DEFAULT_TAU2: f64 = 0.05;

/// Stream tag reserved for the Step-II sample selection.
const STEP2_SELECTION_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum QkdError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("insufficient rounds: {0}")]
    InsufficientRounds(String),
    #[error("revealed round {index} belongs to {label}, outside the correct contexts E1..E4")]
    WrongContextReveal { index: u64, label: SubensembleLabel },
    #[error("spot check needs exactly one round per label E1..E4: {0}")]
    SpotCheck(String),
}

pub type Result<T> = std::result::Result<T, QkdError>;

/// Run parameters. `step1_threshold` of `None` resolves to
/// max([`DEFAULT_TAU1_FLOOR`], 5·std_error) once the Step-I estimate exists.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QkdConfig {
    pub n_rounds: u64,
    pub sacrifice_fraction: f64,
    pub step1_threshold: Option<f64>,
    pub step2_max_error_rate: f64,
    pub noise_p: f64,
    pub rng: RngSpec,
}

impl QkdConfig {
    pub fn new(n_rounds: u64, rng: RngSpec) -> Self {
        Self {
            n_rounds,
            sacrifice_fraction: DEFAULT_EPSILON,
            step1_threshold: None,
            step2_max_error_rate: DEFAULT_TAU2,
            noise_p: 0.0,
            rng,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds < 8 {
            return Err(QkdError::InvalidConfig(format!(
                "n_rounds must be at least 8 (one per context), got {}",
                self.n_rounds
            )));
        }
        if !(self.sacrifice_fraction > 0.0 && self.sacrifice_fraction < 1.0) {
            return Err(QkdError::InvalidConfig(format!(
                "sacrifice fraction must lie in (0, 1), got {}",
                self.sacrifice_fraction
            )));
        }
        if let Some(t) = self.step1_threshold {
            if t <= 0.0 || !t.is_finite() {
                return Err(QkdError::InvalidConfig(format!(
                    "step1 threshold must be positive, got {t}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.step2_max_error_rate) {
            return Err(QkdError::InvalidConfig(format!(
                "step2 max error rate must lie in [0, 1), got {}",
                self.step2_max_error_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_p) || !self.noise_p.is_finite() {
            return Err(QkdError::InvalidConfig(format!(
                "noise probability must lie in [0, 1], got {}",
                self.noise_p
            )));
        }
        Ok(())
    }
}

/// End state of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Accept,
    AbortStep1,
    AbortStep2,
}

/// A sacrificed round with both outcomes on the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RevealedRound {
    pub index: u64,
    pub label: SubensembleLabel,
    pub alice_outcome: i8,
    pub bob_outcome: i8,
}

/// Step-I summary: the wrong-context CHSH estimate against its threshold.
#[derive(Clone, Debug, Serialize)]
pub struct Step1Report {
    pub estimate: ChshEstimate,
    pub threshold: f64,
    pub passed: bool,
}

/// Step-II summary: correlation spot checks over the sacrificed rounds.
#[derive(Clone, Debug, Serialize)]
pub struct Step2Report {
    pub revealed_count: u64,
    pub error_count: u64,
    pub error_rate: f64,
    /// Binomial standard error sqrt(r(1-r)/m) of `error_rate`, so the margin
    /// against the threshold is self-describing.
    pub error_rate_std_error: f64,
    pub threshold: f64,
    pub passed: bool,
    /// The four-round CHSH value from the first revealed round of each of
    /// E1..E4; absent when some label was never sacrificed.
    pub iq_spot_check: Option<f64>,
}

/// Everything a run produces. Keys serialize as hex; raw bits, the message
/// transcript, and per-round details stay in memory only.
#[derive(Clone, Debug, Serialize)]
pub struct QkdReport {
    pub verdict: Verdict,
    pub config: QkdConfig,
    pub eve: EveModel,
    pub subensemble_counts: BTreeMap<SubensembleLabel, u64>,
    pub step1: Step1Report,
    pub step2: Option<Step2Report>,
    pub key_len_bits: u64,
    pub key_alice_hex: String,
    pub key_bob_hex: String,
    pub keys_match: bool,
    pub fractions: ResourceFractions,
    pub accounting: Vec<AccountingRow>,
    #[serde(skip)]
    pub transcript: Vec<SiftingMessage>,
    #[serde(skip)]
    pub revealed_rounds: Vec<RevealedRound>,
    #[serde(skip)]
    pub key_rounds: Vec<RoundRecord>,
    #[serde(skip)]
    pub key_bits_alice: Vec<u8>,
    #[serde(skip)]
    pub key_bits_bob: Vec<u8>,
}

/// Count revealed rounds that violate their label's identity: a=b for E1,
/// a=-d for E2, c=b for E3, c=d for E4.
pub fn perfect_correlation_check(revealed: &[RevealedRound]) -> Result<u64> {
    let mut errors = 0u64;
    for r in revealed {
        if r.label.kind() != ContextKind::Correct {
            return Err(QkdError::WrongContextReveal {
                index: r.index,
                label: r.label,
            });
        }
        let expected = if r.label == SubensembleLabel::E2 { -1 } else { 1 };
        if r.alice_outcome * r.bob_outcome != expected {
            errors += 1;
        }
    }
    Ok(errors)
}

/// The CHSH combination from exactly one revealed round per correct context:
/// product(E1) + product(E3) + product(E4) - product(E2).
pub fn four_outcome_iq_check(rounds: &[RevealedRound]) -> Result<f64> {
    if rounds.len() != 4 {
        return Err(QkdError::SpotCheck(format!(
            "expected 4 rounds, got {}",
            rounds.len()
        )));
    }
    let mut product: BTreeMap<SubensembleLabel, f64> = BTreeMap::new();
    for r in rounds {
        if r.label.kind() != ContextKind::Correct {
            return Err(QkdError::SpotCheck(format!(
                "round {} has wrong-context label {}",
                r.index, r.label
            )));
        }
        if product
            .insert(r.label, f64::from(r.alice_outcome * r.bob_outcome))
            .is_some()
        {
            return Err(QkdError::SpotCheck(format!("duplicate label {}", r.label)));
        }
    }
    let get = |l: SubensembleLabel| {
        product
            .get(&l)
            .copied()
            .ok_or_else(|| QkdError::SpotCheck(format!("missing label {l}")))
    };
    Ok(get(SubensembleLabel::E1)?
        + get(SubensembleLabel::E3)?
        + get(SubensembleLabel::E4)?
        - get(SubensembleLabel::E2)?)
}

/// Pack key bits (0/1 values, first bit highest in its byte) into lowercase
/// hex; a trailing partial byte is zero-padded on the low side.
pub fn key_to_hex(bits: &[u8]) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, bit) in bits.iter().enumerate() {
        if *bit != 0 {
            bytes[i / 8] |= 1 << (7 - (i % 8));
        }
    }
    hex::encode(bytes)
}

/// Outcome → bit map shared by both parties.
fn outcome_bit(outcome: i8) -> u8 {
    u8::from(outcome == 1)
}

/// Number of rounds Step II sacrifices: ⌈ε·N⌉, with products that are within
/// 1e-9 of an integer treated as that integer so binary fractions like 0.05
/// do not overshoot by one.
fn reveal_count(epsilon: f64, n_rounds: u64) -> u64 {
    let target = epsilon * n_rounds as f64;
    let snapped = if (target - target.round()).abs() < 1e-9 {
        target.round()
    } else {
        target.ceil()
    };
    (snapped as u64).max(1)
}

fn insufficient(e: EngineError) -> QkdError {
    match e {
        EngineError::EmptySubensemble(label) => QkdError::InsufficientRounds(format!(
            "subensemble {label} is empty; increase n_rounds"
        )),
        other => QkdError::Engine(other),
    }
}

/// Execute a full run: generation, announcements, Step I, Step II, key
/// extraction, accounting.
pub fn run_protocol(cfg: &QkdConfig, eve: &EveModel) -> Result<QkdReport> {
    cfg.validate()?;
    EveModel::new(eve.kind, eve.attack_fraction)
        .map_err(|e| QkdError::InvalidConfig(e.to_string()))?;

    let sim = Simulator::new(Mode::Spacetime, cfg.rng);
    let singlet_rho = sim.apparatus().singlet().to_density();
    let noise_p = cfg.noise_p;
    let eve = *eve;
    let source = move |_j: u64, rng: &mut rand_chacha::ChaCha8Rng| {
        quantum_channel(&singlet_rho, &eve, noise_p, rng).map(QuantumState::Mixed)
    };
    let rounds = sim.simulate_rounds_with(cfg.n_rounds, &source)?;

    // Announcement phase: choices only, never outcomes.
    let mut transcript = vec![
        SiftingMessage::AliceObsAnnouncement {
            choices: rounds.iter().map(|r| r.context.alice()).collect(),
        },
        SiftingMessage::UnitaryAnnouncement {
            choices: rounds
                .iter()
                .map(|r| r.context.unitary().expect("space-time rounds carry a unitary"))
                .collect(),
        },
        SiftingMessage::BobObsAnnouncement {
            choices: rounds.iter().map(|r| r.context.bob()).collect(),
        },
    ];

    let partition = Partition::from_rounds(&rounds)?;
    let subensemble_counts: BTreeMap<SubensembleLabel, u64> = ALL_SUBENSEMBLES
        .iter()
        .map(|l| (*l, partition.bucket(*l).len() as u64))
        .collect();
    let n = cfg.n_rounds as f64;
    let wrong_total: u64 = ALL_SUBENSEMBLES
        .iter()
        .filter(|l| l.kind() == ContextKind::Wrong)
        .map(|l| partition.bucket(*l).len() as u64)
        .sum();

    // Step I: the wrong-context combination must be statistically zero.
    let estimate =
        chsh_statistic(&rounds, EstimateMode::SpacetimeWrong).map_err(insufficient)?;
    let threshold = cfg
        .step1_threshold
        .unwrap_or_else(|| DEFAULT_TAU1_FLOOR.max(5.0 * estimate.std_error));
    let passed = estimate.value.abs() <= threshold;
    let step1 = Step1Report {
        estimate,
        threshold,
        passed,
    };

    let mut correct_rounds = partition.correct_context_rounds();
    correct_rounds.sort_by_key(|r| r.index);
    if correct_rounds.is_empty() {
        return Err(QkdError::InsufficientRounds(
            "no correct-context rounds at all; increase n_rounds".to_string(),
        ));
    }

    if !step1.passed {
        transcript.push(SiftingMessage::Verdict {
            verdict: Verdict::AbortStep1,
        });
        let fractions = ResourceFractions {
            key: 0.0,
            test: wrong_total as f64 / n,
            discard: correct_rounds.len() as f64 / n,
        };
        let accounting =
            resource_accounting(&fractions, cfg.sacrifice_fraction, DEFAULT_BB84_X)?;
        return Ok(QkdReport {
            verdict: Verdict::AbortStep1,
            config: *cfg,
            eve,
            subensemble_counts,
            step1,
            step2: None,
            key_len_bits: 0,
            key_alice_hex: String::new(),
            key_bob_hex: String::new(),
            keys_match: false,
            fractions,
            accounting,
            transcript,
            revealed_rounds: Vec::new(),
            key_rounds: Vec::new(),
            key_bits_alice: Vec::new(),
            key_bits_bob: Vec::new(),
        });
    }

    // Step II: sacrifice ⌈ε·N⌉ correct-context rounds, chosen uniformly.
    let want = reveal_count(cfg.sacrifice_fraction, cfg.n_rounds);
    if want as usize > correct_rounds.len() {
        return Err(QkdError::InsufficientRounds(format!(
            "Step II needs {want} correct-context rounds but only {} exist",
            correct_rounds.len()
        )));
    }
    let mut selection_rng = cfg.rng.substream(STEP2_SELECTION_STREAM).round_rng(0);
    let mut picks =
        rand::seq::index::sample(&mut selection_rng, correct_rounds.len(), want as usize)
            .into_vec();
    picks.sort_unstable();
    let picked: HashSet<usize> = picks.iter().copied().collect();

    let revealed_rounds: Vec<RevealedRound> = picks
        .iter()
        .map(|&i| {
            let r = correct_rounds[i];
            RevealedRound {
                index: r.index,
                label: r.label().expect("correct-context rounds are labelled"),
                alice_outcome: r.alice_outcome,
                bob_outcome: r.bob_outcome,
            }
        })
        .collect();
    transcript.push(SiftingMessage::TestReveal {
        party: Party::Alice,
        outcomes: revealed_rounds
            .iter()
            .map(|r| (r.index, r.alice_outcome))
            .collect(),
    });
    transcript.push(SiftingMessage::TestReveal {
        party: Party::Bob,
        outcomes: revealed_rounds
            .iter()
            .map(|r| (r.index, r.bob_outcome))
            .collect(),
    });

    let error_count = perfect_correlation_check(&revealed_rounds)?;
    let error_rate = error_count as f64 / want as f64;
    let error_rate_std_error = (error_rate * (1.0 - error_rate) / want as f64).sqrt();
    let iq_spot_check = spot_check_rounds(&revealed_rounds)
        .map(|rs| four_outcome_iq_check(&rs))
        .transpose()?;
    let step2_passed = error_rate <= cfg.step2_max_error_rate;
    let step2 = Step2Report {
        revealed_count: want,
        error_count,
        error_rate,
        error_rate_std_error,
        threshold: cfg.step2_max_error_rate,
        passed: step2_passed,
        iq_spot_check,
    };

    let key_rounds: Vec<RoundRecord> = correct_rounds
        .iter()
        .enumerate()
        .filter(|(i, _)| !picked.contains(i))
        .map(|(_, r)| *r)
        .collect();

    if !step2_passed {
        transcript.push(SiftingMessage::Verdict {
            verdict: Verdict::AbortStep2,
        });
        let fractions = ResourceFractions {
            key: 0.0,
            test: (wrong_total + want) as f64 / n,
            discard: key_rounds.len() as f64 / n,
        };
        let accounting =
            resource_accounting(&fractions, cfg.sacrifice_fraction, DEFAULT_BB84_X)?;
        return Ok(QkdReport {
            verdict: Verdict::AbortStep2,
            config: *cfg,
            eve,
            subensemble_counts,
            step1,
            step2: Some(step2),
            key_len_bits: 0,
            key_alice_hex: String::new(),
            key_bob_hex: String::new(),
            keys_match: false,
            fractions,
            accounting,
            transcript,
            revealed_rounds,
            key_rounds: Vec::new(),
            key_bits_alice: Vec::new(),
            key_bits_bob: Vec::new(),
        });
    }

    // Key extraction. Both map {+1 → 1, -1 → 0}; Bob flips his bit on E2
    // rounds, where the outcomes are perfectly anticorrelated.
    let mut key_bits_alice = Vec::with_capacity(key_rounds.len());
    let mut key_bits_bob = Vec::with_capacity(key_rounds.len());
    for r in &key_rounds {
        key_bits_alice.push(outcome_bit(r.alice_outcome));
        let mut bob = outcome_bit(r.bob_outcome);
        if r.label() == Some(SubensembleLabel::E2) {
            bob ^= 1;
        }
        key_bits_bob.push(bob);
    }

    transcript.push(SiftingMessage::Verdict {
        verdict: Verdict::Accept,
    });
    let fractions = ResourceFractions {
        key: key_rounds.len() as f64 / n,
        test: (wrong_total + want) as f64 / n,
        discard: 0.0,
    };
    let accounting = resource_accounting(&fractions, cfg.sacrifice_fraction, DEFAULT_BB84_X)?;
    Ok(QkdReport {
        verdict: Verdict::Accept,
        config: *cfg,
        eve,
        subensemble_counts,
        step1,
        step2: Some(step2),
        key_len_bits: key_bits_alice.len() as u64,
        key_alice_hex: key_to_hex(&key_bits_alice),
        key_bob_hex: key_to_hex(&key_bits_bob),
        keys_match: key_bits_alice == key_bits_bob,
        fractions,
        accounting,
        transcript,
        revealed_rounds,
        key_rounds,
        key_bits_alice,
        key_bits_bob,
    })
}

/// First revealed round of each correct-context label, when all four exist.
fn spot_check_rounds(revealed: &[RevealedRound]) -> Option<[RevealedRound; 4]> {
    let mut first: BTreeMap<SubensembleLabel, RevealedRound> = BTreeMap::new();
    for r in revealed {
        first.entry(r.label).or_insert(*r);
    }
    Some([
        *first.get(&SubensembleLabel::E1)?,
        *first.get(&SubensembleLabel::E2)?,
        *first.get(&SubensembleLabel::E3)?,
        *first.get(&SubensembleLabel::E4)?,
    ])
}
