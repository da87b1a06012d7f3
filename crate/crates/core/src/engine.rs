//! Monte Carlo round generator and statistics.
//!
//! A round draws a two-qubit state from a source, lets Alice measure, in
//! space-time mode lets Bob rotate his qubit with U±y, then lets Bob measure.
//! Randomness is counter-derived: every round seeds its own ChaCha stream
//! from (seed, stream_id, index), so results are bit-identical no matter how
//! rounds are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observables::{
    AliceObservable, Apparatus, BobObservable, ContextChoice, SubensembleLabel, UnitaryChoice,
    ALL_SUBENSEMBLES,
};
use crate::quantum::{measure, KernelError, QuantumState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("round {index} has no subensemble label; space-time rounds are required here")]
    MissingLabel { index: u64 },
    #[error("round {index} is a space-time round; spatial rounds are required here")]
    UnexpectedSpacetimeRound { index: u64 },
    #[error("subensemble {0} is empty; cannot estimate its term")]
    EmptySubensemble(String),
    #[error("round log write failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// splitmix64 finalizer; decorrelates nearby counters.
fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of all randomness for a run. Distinct `stream_id`s give independent
/// streams under the same seed; round `j` of a stream always sees the same
/// generator state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    /// A derived `RngSpec` whose rounds are independent of this one's.
    pub fn substream(self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: mix(self.stream_id ^ mix(tag)),
        }
    }

    /// Fresh generator for one round, a pure function of
    /// (seed, stream_id, index).
    pub fn round_rng(self, index: u64) -> ChaCha8Rng {
        let key = mix(mix(mix(self.seed) ^ self.stream_id) ^ index);
        ChaCha8Rng::seed_from_u64(key)
    }
}

/// Experimental arrangement for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Alice and Bob measure directly; no unitary, no subensembles.
    Spatial,
    /// Bob applies U±y between Alice's measurement and his own.
    Spacetime,
}

/// The choices made in one round; spatial rounds carry no unitary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RoundContext {
    Spatial {
        alice: AliceObservable,
        bob: BobObservable,
    },
    Spacetime(ContextChoice),
}

impl RoundContext {
    pub fn alice(self) -> AliceObservable {
        match self {
            RoundContext::Spatial { alice, .. } => alice,
            RoundContext::Spacetime(ctx) => ctx.alice,
        }
    }

    pub fn bob(self) -> BobObservable {
        match self {
            RoundContext::Spatial { bob, .. } => bob,
            RoundContext::Spacetime(ctx) => ctx.bob,
        }
    }

    pub fn unitary(self) -> Option<UnitaryChoice> {
        match self {
            RoundContext::Spatial { .. } => None,
            RoundContext::Spacetime(ctx) => Some(ctx.unitary),
        }
    }
}

/// Subensemble of a space-time context; the frozen bijection.
pub fn classify(ctx: ContextChoice) -> SubensembleLabel {
    SubensembleLabel::from_context(ctx)
}

/// One completed round. Timestamps are abstract ticks with
/// t_alice = 2j and t_bob = 2j + 1, so Bob's measurement is always strictly
/// later; nothing downstream consumes them beyond the ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: u64,
    pub t_alice: u64,
    pub t_bob: u64,
    pub context: RoundContext,
    pub alice_outcome: i8,
    pub bob_outcome: i8,
}

impl RoundRecord {
    /// Subensemble label; `None` for spatial rounds.
    pub fn label(&self) -> Option<SubensembleLabel> {
        match self.context {
            RoundContext::Spatial { .. } => None,
            RoundContext::Spacetime(ctx) => Some(classify(ctx)),
        }
    }

    /// ±1 product of the two outcomes.
    pub fn product(&self) -> i8 {
        self.alice_outcome * self.bob_outcome
    }
}

/// Supplies the two-qubit state entering round `j`. The generator argument is
/// the round's own stream, already advanced past nothing; sources may draw
/// from it (attack decisions and the like) before the choice draws happen.
pub trait StateSource: Sync {
    fn state_for_round(&self, index: u64, rng: &mut ChaCha8Rng) -> crate::quantum::Result<QuantumState>;
}

/// Noiseless singlet source.
#[derive(Clone, Copy, Debug, Default)]
pub struct SingletSource;

impl StateSource for SingletSource {
    fn state_for_round(&self, _index: u64, _rng: &mut ChaCha8Rng) -> crate::quantum::Result<QuantumState> {
        Ok(QuantumState::Pure(crate::observables::make_singlet()))
    }
}

impl<F> StateSource for F
where
    F: Fn(u64, &mut ChaCha8Rng) -> crate::quantum::Result<QuantumState> + Sync,
{
    fn state_for_round(&self, index: u64, rng: &mut ChaCha8Rng) -> crate::quantum::Result<QuantumState> {
        self(index, rng)
    }
}

/// Runs rounds of one arrangement against one apparatus.
#[derive(Clone, Debug)]
pub struct Simulator {
    apparatus: Apparatus,
    mode: Mode,
    rng: RngSpec,
}

impl Simulator {
    pub fn new(mode: Mode, rng: RngSpec) -> Self {
        Self {
            apparatus: Apparatus::new(),
            mode,
            rng,
        }
    }

    pub fn apparatus(&self) -> &Apparatus {
        &self.apparatus
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn rng_spec(&self) -> RngSpec {
        self.rng
    }

    /// One round from the singlet source.
    pub fn simulate_round(&self, index: u64) -> Result<RoundRecord> {
        self.simulate_round_with(index, &SingletSource)
    }

    /// One round from an arbitrary source. The draw order inside the round
    /// stream is frozen: source draws, Alice's observable, Alice's
    /// measurement, Bob's unitary (space-time only), Bob's observable, Bob's
    /// measurement.
    pub fn simulate_round_with<S: StateSource + ?Sized>(
        &self,
        index: u64,
        source: &S,
    ) -> Result<RoundRecord> {
        let mut rng = self.rng.round_rng(index);
        let state = source.state_for_round(index, &mut rng)?;
        let alice = if rng.gen_bool(0.5) {
            AliceObservable::A
        } else {
            AliceObservable::C
        };
        match self.mode {
            Mode::Spatial => {
                let after_alice = self.measure_side(&state, alice.label(), &mut rng)?;
                let bob = if rng.gen_bool(0.5) {
                    BobObservable::B
                } else {
                    BobObservable::D
                };
                let (a, b, _) = self.finish_bob(after_alice, bob, &mut rng)?;
                Ok(self.record(index, RoundContext::Spatial { alice, bob }, a, b))
            }
            Mode::Spacetime => {
                let (a_outcome, collapsed) =
                    self.measure_side(&state, alice.label(), &mut rng)?;
                let unitary = if rng.gen_bool(0.5) {
                    UnitaryChoice::PlusY
                } else {
                    UnitaryChoice::MinusY
                };
                let rotated = collapsed.evolve(self.apparatus.unitary(unitary))?;
                let bob = if rng.gen_bool(0.5) {
                    BobObservable::B
                } else {
                    BobObservable::D
                };
                let (a, b, _) = self.finish_bob((a_outcome, rotated), bob, &mut rng)?;
                let ctx = ContextChoice { alice, unitary, bob };
                Ok(self.record(index, RoundContext::Spacetime(ctx), a, b))
            }
        }
    }

    /// One space-time round with the choice triple pinned; only the source
    /// and the two measurement draws consume randomness.
    pub fn simulate_round_in_context<S: StateSource + ?Sized>(
        &self,
        index: u64,
        ctx: ContextChoice,
        source: &S,
    ) -> Result<RoundRecord> {
        let mut rng = self.rng.round_rng(index);
        let state = source.state_for_round(index, &mut rng)?;
        let after_alice = self.measure_side(&state, ctx.alice.label(), &mut rng)?;
        let rotated = after_alice.1.evolve(self.apparatus.unitary(ctx.unitary))?;
        let (a, b, _) = self.finish_bob((after_alice.0, rotated), ctx.bob, &mut rng)?;
        Ok(self.record(index, RoundContext::Spacetime(ctx), a, b))
    }

    fn measure_side(
        &self,
        state: &QuantumState,
        label: crate::observables::ObservableLabel,
        rng: &mut ChaCha8Rng,
    ) -> Result<(i8, QuantumState)> {
        let pair = self.apparatus.observable(label).projectors();
        let m = measure(state, pair, rng.gen::<f64>())?;
        Ok((m.outcome, m.collapsed))
    }

    fn finish_bob(
        &self,
        (alice_outcome, state): (i8, QuantumState),
        bob: BobObservable,
        rng: &mut ChaCha8Rng,
    ) -> Result<(i8, i8, QuantumState)> {
        let (b, collapsed) = self.measure_side(&state, bob.label(), rng)?;
        Ok((alice_outcome, b, collapsed))
    }

    fn record(&self, index: u64, context: RoundContext, a: i8, b: i8) -> RoundRecord {
        RoundRecord {
            index,
            t_alice: 2 * index,
            t_bob: 2 * index + 1,
            context,
            alice_outcome: a,
            bob_outcome: b,
        }
    }

    /// `n` rounds from the singlet source, in index order.
    pub fn simulate_rounds(&self, n: u64) -> Result<Vec<RoundRecord>> {
        self.simulate_rounds_with(n, &SingletSource)
    }

    /// `n` rounds in parallel. Per-round generators make the result
    /// independent of the worker count; the output is ordered by index.
    pub fn simulate_rounds_with<S: StateSource>(
        &self,
        n: u64,
        source: &S,
    ) -> Result<Vec<RoundRecord>> {
        (0..n)
            .into_par_iter()
            .map(|j| self.simulate_round_with(j, source))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Partition and statistics
// ---------------------------------------------------------------------------

/// Rounds split by subensemble label.
#[derive(Clone, Debug, Default)]
pub struct Partition {
    buckets: [Vec<RoundRecord>; 8],
}

impl Partition {
    /// Partition space-time rounds; errors on the first spatial round.
    pub fn from_rounds(rounds: &[RoundRecord]) -> Result<Self> {
        let mut p = Partition::default();
        for r in rounds {
            let label = r.label().ok_or(EngineError::MissingLabel { index: r.index })?;
            p.buckets[label.index()].push(*r);
        }
        Ok(p)
    }

    pub fn bucket(&self, label: SubensembleLabel) -> &[RoundRecord] {
        &self.buckets[label.index()]
    }

    pub fn counts(&self) -> [u64; 8] {
        let mut c = [0u64; 8];
        for (i, b) in self.buckets.iter().enumerate() {
            c[i] = b.len() as u64;
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.counts().iter().sum()
    }

    /// Rounds in E1..E4.
    pub fn correct_context_rounds(&self) -> Vec<RoundRecord> {
        ALL_SUBENSEMBLES
            .iter()
            .filter(|l| l.kind() == crate::observables::ContextKind::Correct)
            .flat_map(|l| self.bucket(*l).iter().copied())
            .collect()
    }
}

/// Which CHSH combination to estimate from a round collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    /// Four (Alice, Bob) pairs of the spatial arrangement.
    Spatial,
    /// E1, E3, E4, E2 of the space-time arrangement.
    SpacetimeCorrect,
    /// E5, E7, E8, E6 of the space-time arrangement.
    SpacetimeWrong,
}

/// One signed term of a CHSH combination.
#[derive(Clone, Debug, Serialize)]
pub struct ChshTerm {
    /// "AB", "CB", "CD", "AD" for spatial runs; "E1".."E8" otherwise.
    pub label: String,
    /// +1.0 or -1.0, applied when summing.
    pub sign: f64,
    /// Sample mean of the outcome product within the term's rounds.
    pub expectation: f64,
    pub count: u64,
    /// Standard error of the mean, zero when count < 2.
    pub std_error: f64,
}

/// A CHSH combination estimated from data: value = Σ sign·expectation.
#[derive(Clone, Debug, Serialize)]
pub struct ChshEstimate {
    pub mode: EstimateMode,
    pub value: f64,
    /// Per-term errors combined in quadrature; the four samples are disjoint.
    pub std_error: f64,
    pub terms: Vec<ChshTerm>,
}

/// Sample mean and its standard error for ±1 products.
fn mean_and_se(products: impl ExactSizeIterator<Item = f64>) -> (f64, u64, f64) {
    let n = products.len() as u64;
    if n == 0 {
        return (0.0, 0, 0.0);
    }
    let sum: f64 = products.sum();
    let m = sum / n as f64;
    let se = if n >= 2 {
        // ±1 samples: variance = (1 - m²)·n/(n-1); clamp tiny negatives away
        ((1.0 - m * m).max(0.0) / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, n, se)
}

fn term_from_rounds(label: String, sign: f64, rounds: &[RoundRecord]) -> Result<ChshTerm> {
    if rounds.is_empty() {
        return Err(EngineError::EmptySubensemble(label));
    }
    let (expectation, count, std_error) =
        mean_and_se(rounds.iter().map(|r| f64::from(r.product())));
    Ok(ChshTerm {
        label,
        sign,
        expectation,
        count,
        std_error,
    })
}

/// Estimate the CHSH combination of `mode` from `rounds`. Terms follow the
/// fixed sign pattern (+, +, +, -); every term's round set must be non-empty.
pub fn chsh_statistic(rounds: &[RoundRecord], mode: EstimateMode) -> Result<ChshEstimate> {
    let terms: Vec<ChshTerm> = match mode {
        EstimateMode::Spatial => {
            for r in rounds {
                if r.label().is_some() {
                    return Err(EngineError::UnexpectedSpacetimeRound { index: r.index });
                }
            }
            let pair = |alice: AliceObservable, bob: BobObservable| -> Vec<RoundRecord> {
                rounds
                    .iter()
                    .filter(|r| r.context.alice() == alice && r.context.bob() == bob)
                    .copied()
                    .collect()
            };
            use AliceObservable::{A, C};
            use BobObservable::{B, D};
            [
                ("AB", 1.0, pair(A, B)),
                ("CB", 1.0, pair(C, B)),
                ("CD", 1.0, pair(C, D)),
                ("AD", -1.0, pair(A, D)),
            ]
            .into_iter()
            .map(|(name, sign, set)| term_from_rounds(name.to_string(), sign, &set))
            .collect::<Result<_>>()?
        }
        EstimateMode::SpacetimeCorrect | EstimateMode::SpacetimeWrong => {
            let partition = Partition::from_rounds(rounds)?;
            let labels: [(SubensembleLabel, f64); 4] = if mode == EstimateMode::SpacetimeCorrect {
                [
                    (SubensembleLabel::E1, 1.0),
                    (SubensembleLabel::E3, 1.0),
                    (SubensembleLabel::E4, 1.0),
                    (SubensembleLabel::E2, -1.0),
                ]
            } else {
                [
                    (SubensembleLabel::E5, 1.0),
                    (SubensembleLabel::E7, 1.0),
                    (SubensembleLabel::E8, 1.0),
                    (SubensembleLabel::E6, -1.0),
                ]
            };
            labels
                .into_iter()
                .map(|(label, sign)| {
                    term_from_rounds(label.to_string(), sign, partition.bucket(label))
                })
                .collect::<Result<_>>()?
        }
    };
    let value = terms.iter().map(|t| t.sign * t.expectation).sum();
    let std_error = terms
        .iter()
        .map(|t| t.std_error * t.std_error)
        .sum::<f64>()
        .sqrt();
    Ok(ChshEstimate {
        mode,
        value,
        std_error,
        terms,
    })
}

/// Joint outcome counts indexed `[alice][bob]` with 0 → +1 and 1 → -1.
pub fn joint_counts(rounds: &[RoundRecord]) -> [[u64; 2]; 2] {
    let mut c = [[0u64; 2]; 2];
    for r in rounds {
        let i = usize::from(r.alice_outcome < 0);
        let j = usize::from(r.bob_outcome < 0);
        c[i][j] += 1;
    }
    c
}

// ---------------------------------------------------------------------------
// Round log export
// ---------------------------------------------------------------------------

/// Flat row used for CSV and JSON round logs. Spatial rounds leave
/// `bob_unitary` and `label` empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundRow {
    pub j: u64,
    pub t_alice: u64,
    pub t_bob: u64,
    pub alice_obs: String,
    pub bob_unitary: String,
    pub bob_obs: String,
    pub alice_outcome: i8,
    pub bob_outcome: i8,
    pub label: String,
}

impl From<&RoundRecord> for RoundRow {
    fn from(r: &RoundRecord) -> Self {
        RoundRow {
            j: r.index,
            t_alice: r.t_alice,
            t_bob: r.t_bob,
            alice_obs: format!("{}", r.context.alice().label()),
            bob_unitary: r
                .context
                .unitary()
                .map(|u| u.to_string())
                .unwrap_or_default(),
            bob_obs: format!("{}", r.context.bob().label()),
            alice_outcome: r.alice_outcome,
            bob_outcome: r.bob_outcome,
            label: r.label().map(|l| l.to_string()).unwrap_or_default(),
        }
    }
}

/// Write rounds as CSV with the fixed column set
/// j, t_alice, t_bob, alice_obs, bob_unitary, bob_obs, alice_outcome,
/// bob_outcome, label.
pub fn write_round_log_csv<W: std::io::Write>(writer: W, rounds: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rounds {
        w.serialize(RoundRow::from(r))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::ContextKind;
    use crate::quantum::DensityOp;
    use approx::assert_abs_diff_eq;

    fn spacetime_sim(seed: u64) -> Simulator {
        Simulator::new(Mode::Spacetime, RngSpec::new(seed))
    }

    #[test]
    fn timestamps_are_strictly_ordered() {
        let sim = spacetime_sim(7);
        for j in 0..50 {
            let r = sim.simulate_round(j).unwrap();
            assert_eq!(r.t_alice, 2 * j);
            assert_eq!(r.t_bob, 2 * j + 1);
            assert!(r.t_bob > r.t_alice);
        }
    }

    #[test]
    fn classify_matches_frozen_bijection() {
        use crate::observables::{AliceObservable::*, BobObservable::*, UnitaryChoice::*};
        let cases = [
            ((A, PlusY, B), SubensembleLabel::E1),
            ((C, MinusY, D), SubensembleLabel::E8),
            ((A, MinusY, B), SubensembleLabel::E5),
        ];
        for ((alice, unitary, bob), want) in cases {
            assert_eq!(classify(ContextChoice { alice, unitary, bob }), want);
        }
    }

    #[test]
    fn forced_correct_contexts_are_perfectly_locked() {
        let sim = spacetime_sim(21);
        let singlet = SingletSource;
        for label in [
            SubensembleLabel::E1,
            SubensembleLabel::E2,
            SubensembleLabel::E3,
            SubensembleLabel::E4,
        ] {
            let ctx = label.context();
            let want_product = if label == SubensembleLabel::E2 { -1 } else { 1 };
            for j in 0..500 {
                let r = sim.simulate_round_in_context(j, ctx, &singlet).unwrap();
                assert_eq!(
                    r.product(),
                    want_product,
                    "{label} round {j}: outcomes ({}, {})",
                    r.alice_outcome,
                    r.bob_outcome
                );
            }
        }
    }

    #[test]
    fn maximally_mixed_source_gives_unbiased_bob() {
        let sim = spacetime_sim(3);
        let mixed = |_j: u64, _rng: &mut ChaCha8Rng| {
            Ok(QuantumState::Mixed(DensityOp::maximally_mixed(4).unwrap()))
        };
        let n = 100_000u64;
        let rounds = sim.simulate_rounds_with(n, &mixed).unwrap();
        let plus = rounds.iter().filter(|r| r.bob_outcome == 1).count() as f64;
        let freq = plus / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!(
            (freq - 0.5).abs() <= 5.0 * sigma,
            "Bob's +1 frequency {freq} strays from 1/2"
        );
    }

    #[test]
    fn determinism_same_spec_same_rounds() {
        let a = spacetime_sim(99).simulate_rounds(2_000).unwrap();
        let b = spacetime_sim(99).simulate_rounds(2_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn determinism_is_independent_of_worker_count() {
        let sim = spacetime_sim(1234);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sim.simulate_rounds(3_000))
            .unwrap();
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| sim.simulate_rounds(3_000))
            .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn substreams_decouple() {
        let base = RngSpec::new(5);
        let s1 = base.substream(1);
        let s2 = base.substream(2);
        assert_ne!(s1, s2);
        let r1 = Simulator::new(Mode::Spacetime, s1).simulate_rounds(100).unwrap();
        let r2 = Simulator::new(Mode::Spacetime, s2).simulate_rounds(100).unwrap();
        assert_ne!(r1, r2);
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let sim = spacetime_sim(17);
        let rounds = sim.simulate_rounds(4_000).unwrap();
        let p = Partition::from_rounds(&rounds).unwrap();
        assert_eq!(p.total(), 4_000);
        for label in ALL_SUBENSEMBLES {
            for r in p.bucket(label) {
                assert_eq!(r.label(), Some(label));
            }
        }
    }

    #[test]
    fn partition_of_empty_input_is_eight_empty_buckets() {
        let p = Partition::from_rounds(&[]).unwrap();
        assert_eq!(p.counts(), [0; 8]);
        assert_eq!(p.total(), 0);
    }

    #[test]
    fn partition_rejects_spatial_rounds() {
        let sim = Simulator::new(Mode::Spatial, RngSpec::new(2));
        let rounds = sim.simulate_rounds(10).unwrap();
        assert!(matches!(
            Partition::from_rounds(&rounds),
            Err(EngineError::MissingLabel { .. })
        ));
    }

    #[test]
    fn eight_forced_rounds_fill_every_bucket_once() {
        let sim = spacetime_sim(8);
        let rounds: Vec<RoundRecord> = ALL_SUBENSEMBLES
            .iter()
            .enumerate()
            .map(|(j, l)| {
                sim.simulate_round_in_context(j as u64, l.context(), &SingletSource)
                    .unwrap()
            })
            .collect();
        let p = Partition::from_rounds(&rounds).unwrap();
        assert_eq!(p.counts(), [1; 8]);
    }

    #[test]
    fn bucket_counts_are_multinomial_eighths() {
        let n = 100_000u64;
        let rounds = spacetime_sim(42).simulate_rounds(n).unwrap();
        let p = Partition::from_rounds(&rounds).unwrap();
        let expected = n as f64 / 8.0;
        let sigma = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for (i, c) in p.counts().iter().enumerate() {
            assert!(
                (*c as f64 - expected).abs() <= 5.0 * sigma,
                "bucket {i} count {c} strays from n/8 = {expected}"
            );
        }
    }

    #[test]
    fn correct_context_chsh_is_exactly_four() {
        let rounds = spacetime_sim(1).simulate_rounds(20_000).unwrap();
        let est = chsh_statistic(&rounds, EstimateMode::SpacetimeCorrect).unwrap();
        assert_eq!(est.value, 4.0);
        assert_eq!(est.std_error, 0.0);
        for t in &est.terms {
            assert_eq!(t.sign * t.expectation, 1.0);
            assert_eq!(t.std_error, 0.0);
        }
    }

    #[test]
    fn correct_context_chsh_is_four_with_one_round_per_bucket() {
        let sim = spacetime_sim(10);
        let rounds: Vec<RoundRecord> = ALL_SUBENSEMBLES
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind() == ContextKind::Correct)
            .map(|(j, l)| {
                sim.simulate_round_in_context(j as u64, l.context(), &SingletSource)
                    .unwrap()
            })
            .collect();
        assert_eq!(rounds.len(), 4);
        let est = chsh_statistic(&rounds, EstimateMode::SpacetimeCorrect).unwrap();
        assert_eq!(est.value, 4.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn wrong_context_chsh_is_consistent_with_zero() {
        let rounds = spacetime_sim(5).simulate_rounds(100_000).unwrap();
        let est = chsh_statistic(&rounds, EstimateMode::SpacetimeWrong).unwrap();
        assert!(est.std_error > 0.0);
        assert!(
            est.value.abs() <= 5.0 * est.std_error,
            "wrong-context value {} exceeds 5σ = {}",
            est.value,
            5.0 * est.std_error
        );
    }

    #[test]
    fn spatial_chsh_approaches_tsirelson() {
        let sim = Simulator::new(Mode::Spatial, RngSpec::new(31));
        let rounds = sim.simulate_rounds(100_000).unwrap();
        let est = chsh_statistic(&rounds, EstimateMode::Spatial).unwrap();
        let target = 2.0 * std::f64::consts::SQRT_2;
        assert!(
            (est.value - target).abs() <= 5.0 * est.std_error,
            "spatial CHSH {} strays from 2√2",
            est.value
        );
        assert_eq!(est.terms.len(), 4);
        assert_abs_diff_eq!(
            est.value,
            est.terms.iter().map(|t| t.sign * t.expectation).sum::<f64>(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn chsh_statistic_requires_matching_round_kind() {
        let st = spacetime_sim(3).simulate_rounds(50).unwrap();
        assert!(matches!(
            chsh_statistic(&st, EstimateMode::Spatial),
            Err(EngineError::UnexpectedSpacetimeRound { .. })
        ));
        let sp = Simulator::new(Mode::Spatial, RngSpec::new(3))
            .simulate_rounds(50)
            .unwrap();
        assert!(matches!(
            chsh_statistic(&sp, EstimateMode::SpacetimeCorrect),
            Err(EngineError::MissingLabel { .. })
        ));
    }

    #[test]
    fn chsh_statistic_names_missing_subensemble() {
        let sim = spacetime_sim(10);
        // only E1 present
        let rounds = vec![sim
            .simulate_round_in_context(0, SubensembleLabel::E1.context(), &SingletSource)
            .unwrap()];
        let err = chsh_statistic(&rounds, EstimateMode::SpacetimeCorrect).unwrap_err();
        match err {
            EngineError::EmptySubensemble(name) => assert_eq!(name, "E3"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empirical_joints_match_born_probabilities() {
        use crate::observables::born_joint_probability;
        use crate::quantum::Sign;
        let sim = spacetime_sim(77);
        let rounds = sim.simulate_rounds(100_000).unwrap();
        let p = Partition::from_rounds(&rounds).unwrap();
        for label in ALL_SUBENSEMBLES {
            let bucket = p.bucket(label);
            let counts = joint_counts(bucket);
            let n = bucket.len() as f64;
            for (i, a) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
                for (j, b) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
                    let want = born_joint_probability(sim.apparatus(), label.context(), a, b);
                    let freq = counts[i][j] as f64 / n;
                    let sigma = (want * (1.0 - want) / n).sqrt().max(1e-9);
                    assert!(
                        (freq - want).abs() <= 5.0 * sigma,
                        "{label} joint ({a:?},{b:?}): freq {freq} vs born {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn csv_round_log_has_frozen_header_and_blank_fields_for_spatial() {
        let sim = Simulator::new(Mode::Spatial, RngSpec::new(4));
        let rounds = sim.simulate_rounds(3).unwrap();
        let mut buf = Vec::new();
        write_round_log_csv(&mut buf, &rounds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "j,t_alice,t_bob,alice_obs,bob_unitary,bob_obs,alice_outcome,bob_outcome,label"
        );
        let first = lines.next().unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[4], "");
        assert_eq!(fields[8], "");
    }

    #[test]
    fn csv_round_log_spacetime_row_is_fully_populated() {
        let sim = spacetime_sim(4);
        let rounds = sim.simulate_rounds(5).unwrap();
        let mut buf = Vec::new();
        write_round_log_csv(&mut buf, &rounds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for (line, r) in text.lines().skip(1).zip(&rounds) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], r.index.to_string());
            assert!(["U+y", "U-y"].contains(&fields[4]));
            assert_eq!(fields[8], r.label().unwrap().to_string());
            assert!(["-1", "1"].contains(&fields[6]));
        }
    }
}
