//! The fixed experimental dictionary: the singlet source, Alice's observables
//! A and C, Bob's observables B and D, the context unitaries U₊y and U₋y, and
//! the eight post-selected subensembles E1..E8.
//!
//! Alice measures A = σz⊗1 or C = σx⊗1. Bob measures
//! B = -1⊗(σz+σx)/√2 or D = 1⊗(σz-σx)/√2; the minus sign lives inside B, so
//! its +1 projector is the one whose eigenket carries eigenvalue +1 of the
//! whole signed operator. In the space-time arrangement Bob first applies
//! U₊y = exp(-i(π/8)σy) or its inverse U₋y to his qubit and then measures B
//! or D.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::quantum::{
    Amp, KernelError, ProjectorPair, PureState, QuantumState, Result, Side, Sign, UnitaryOp,
};

/// One of the four dichotomic observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservableLabel {
    A,
    C,
    B,
    D,
}

impl ObservableLabel {
    pub fn side(self) -> Side {
        match self {
            ObservableLabel::A | ObservableLabel::C => Side::Alice,
            ObservableLabel::B | ObservableLabel::D => Side::Bob,
        }
    }
}

impl std::fmt::Display for ObservableLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ObservableLabel::A => "A",
            ObservableLabel::C => "C",
            ObservableLabel::B => "B",
            ObservableLabel::D => "D",
        };
        f.write_str(s)
    }
}

/// Alice's choice of observable for a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AliceObservable {
    A,
    C,
}

impl AliceObservable {
    pub fn label(self) -> ObservableLabel {
        match self {
            AliceObservable::A => ObservableLabel::A,
            AliceObservable::C => ObservableLabel::C,
        }
    }
}

/// Bob's choice of observable for a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BobObservable {
    B,
    D,
}

impl BobObservable {
    pub fn label(self) -> ObservableLabel {
        match self {
            BobObservable::B => ObservableLabel::B,
            BobObservable::D => ObservableLabel::D,
        }
    }
}

/// Bob's context unitary for a round: U₊y rotates by -π/8 about y, U₋y is its
/// inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitaryChoice {
    #[serde(rename = "U+y")]
    PlusY,
    #[serde(rename = "U-y")]
    MinusY,
}

impl std::fmt::Display for UnitaryChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnitaryChoice::PlusY => "U+y",
            UnitaryChoice::MinusY => "U-y",
        })
    }
}

/// The triple of free choices made in one space-time round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextChoice {
    pub alice: AliceObservable,
    pub unitary: UnitaryChoice,
    pub bob: BobObservable,
}

/// Whether a subensemble's unitary matches its observable pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextKind {
    /// E1..E4: the unitary maps Bob's measured eigenket onto the eigenket the
    /// pairing calls for, so outcomes are perfectly (anti)correlated.
    Correct,
    /// E5..E8: the mismatched unitary makes all four joint outcomes equally
    /// likely.
    Wrong,
}

/// Post-selected subensemble label. The bijection with choice triples is
/// frozen:
///
/// | label | Alice | unitary | Bob | kind    |
/// |-------|-------|---------|-----|---------|
/// | E1    | A     | U+y     | B   | correct |
/// | E2    | A     | U-y     | D   | correct |
/// | E3    | C     | U-y     | B   | correct |
/// | E4    | C     | U+y     | D   | correct |
/// | E5    | A     | U-y     | B   | wrong   |
/// | E6    | A     | U+y     | D   | wrong   |
/// | E7    | C     | U+y     | B   | wrong   |
/// | E8    | C     | U-y     | D   | wrong   |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubensembleLabel {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
}

pub const ALL_SUBENSEMBLES: [SubensembleLabel; 8] = [
    SubensembleLabel::E1,
    SubensembleLabel::E2,
    SubensembleLabel::E3,
    SubensembleLabel::E4,
    SubensembleLabel::E5,
    SubensembleLabel::E6,
    SubensembleLabel::E7,
    SubensembleLabel::E8,
];

impl SubensembleLabel {
    /// Zero-based index, E1 -> 0 .. E8 -> 7.
    pub fn index(self) -> usize {
        match self {
            SubensembleLabel::E1 => 0,
            SubensembleLabel::E2 => 1,
            SubensembleLabel::E3 => 2,
            SubensembleLabel::E4 => 3,
            SubensembleLabel::E5 => 4,
            SubensembleLabel::E6 => 5,
            SubensembleLabel::E7 => 6,
            SubensembleLabel::E8 => 7,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        ALL_SUBENSEMBLES.get(i).copied()
    }

    pub fn kind(self) -> ContextKind {
        match self {
            SubensembleLabel::E1
            | SubensembleLabel::E2
            | SubensembleLabel::E3
            | SubensembleLabel::E4 => ContextKind::Correct,
            _ => ContextKind::Wrong,
        }
    }

    /// The choice triple this label stands for.
    pub fn context(self) -> ContextChoice {
        use AliceObservable::{A, C};
        use BobObservable::{B, D};
        use UnitaryChoice::{MinusY, PlusY};
        let (alice, unitary, bob) = match self {
            SubensembleLabel::E1 => (A, PlusY, B),
            SubensembleLabel::E2 => (A, MinusY, D),
            SubensembleLabel::E3 => (C, MinusY, B),
            SubensembleLabel::E4 => (C, PlusY, D),
            SubensembleLabel::E5 => (A, MinusY, B),
            SubensembleLabel::E6 => (A, PlusY, D),
            SubensembleLabel::E7 => (C, PlusY, B),
            SubensembleLabel::E8 => (C, MinusY, D),
        };
        ContextChoice { alice, unitary, bob }
    }

    /// Inverse of [`SubensembleLabel::context`]; total over the 8 triples.
    pub fn from_context(ctx: ContextChoice) -> Self {
        use AliceObservable::{A, C};
        use BobObservable::{B, D};
        use UnitaryChoice::{MinusY, PlusY};
        match (ctx.alice, ctx.unitary, ctx.bob) {
            (A, PlusY, B) => SubensembleLabel::E1,
            (A, MinusY, D) => SubensembleLabel::E2,
            (C, MinusY, B) => SubensembleLabel::E3,
            (C, PlusY, D) => SubensembleLabel::E4,
            (A, MinusY, B) => SubensembleLabel::E5,
            (A, PlusY, D) => SubensembleLabel::E6,
            (C, PlusY, B) => SubensembleLabel::E7,
            (C, MinusY, D) => SubensembleLabel::E8,
        }
    }
}

impl std::fmt::Display for SubensembleLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// The singlet (|01> - |10>)/√2.
pub fn make_singlet() -> PureState {
    PureState::new(vec![
        Amp::new(0.0, 0.0),
        Amp::new(FRAC_1_SQRT_2, 0.0),
        Amp::new(-FRAC_1_SQRT_2, 0.0),
        Amp::new(0.0, 0.0),
    ])
    .expect("singlet amplitudes are normalized by construction")
}

/// Single-qubit eigenket of the labelled observable for the given
/// eigenvalue sign. With θ₁ = 3π/4 and θ₂ = π/4:
///
/// * `|±>_A` are `|0>`, `|1>`; `|±>_C` are `|±>` of σx;
/// * `|+>_B = cos(3π/8)|0> - sin(3π/8)|1>`, `|->_B = cos(π/8)|0> + sin(π/8)|1>`;
/// * `|+>_D = cos(π/8)|0> - sin(π/8)|1>`, `|->_D = cos(3π/8)|0> + sin(3π/8)|1>`.
pub fn eigenket(obs: ObservableLabel, sign: Sign) -> PureState {
    let from_halves = |top: f64, bottom: f64| {
        PureState::new(vec![Amp::new(top, 0.0), Amp::new(bottom, 0.0)])
            .expect("eigenket amplitudes are normalized by construction")
    };
    let t1h = 3.0 * PI / 8.0; // θ₁/2
    let t2h = PI / 8.0; // θ₂/2
    match (obs, sign) {
        (ObservableLabel::A, Sign::Plus) => PureState::ket0(),
        (ObservableLabel::A, Sign::Minus) => PureState::ket1(),
        (ObservableLabel::C, Sign::Plus) => PureState::plus(),
        (ObservableLabel::C, Sign::Minus) => PureState::minus(),
        (ObservableLabel::B, Sign::Plus) => from_halves(t1h.cos(), -t1h.sin()),
        (ObservableLabel::B, Sign::Minus) => from_halves(t2h.cos(), t2h.sin()),
        (ObservableLabel::D, Sign::Plus) => from_halves(t2h.cos(), -t2h.sin()),
        (ObservableLabel::D, Sign::Minus) => from_halves(t1h.cos(), t1h.sin()),
    }
}

/// Bob's context rotation: U₊y = exp(-i(π/8)σy) as a real rotation matrix
/// [[cos π/8, -sin π/8], [sin π/8, cos π/8]], and U₋y its inverse.
pub fn make_unitary(choice: UnitaryChoice) -> UnitaryOp {
    let a = PI / 8.0;
    let (c, s) = (a.cos(), a.sin());
    let m = match choice {
        UnitaryChoice::PlusY => DMatrix::from_row_slice(2, 2, &[
            Amp::new(c, 0.0),
            Amp::new(-s, 0.0),
            Amp::new(s, 0.0),
            Amp::new(c, 0.0),
        ]),
        UnitaryChoice::MinusY => DMatrix::from_row_slice(2, 2, &[
            Amp::new(c, 0.0),
            Amp::new(s, 0.0),
            Amp::new(-s, 0.0),
            Amp::new(c, 0.0),
        ]),
    };
    UnitaryOp::new(m).expect("rotation matrices are unitary by construction")
}

/// A dichotomic observable on the two-qubit space: a label plus its ±1
/// projector pair already embedded on the right side.
#[derive(Clone, Debug)]
pub struct ObservableSpec {
    label: ObservableLabel,
    projectors: ProjectorPair,
}

impl ObservableSpec {
    /// Build the embedded pair-space observable for a label from its
    /// single-qubit eigenkets.
    pub fn new(label: ObservableLabel) -> Self {
        let plus = eigenket(label, Sign::Plus);
        let minus = eigenket(label, Sign::Minus);
        let single = ProjectorPair::from_eigenkets(&plus, &minus)
            .expect("eigenkets are orthonormal by construction");
        let projectors = single
            .embed(label.side())
            .expect("embedding a 2x2 pair cannot fail");
        Self { label, projectors }
    }

    pub fn label(&self) -> ObservableLabel {
        self.label
    }

    /// ±1 projector pair on the 4-dim space.
    pub fn projectors(&self) -> &ProjectorPair {
        &self.projectors
    }

    pub fn eigenvalue(&self, sign: Sign) -> f64 {
        f64::from(sign.value())
    }

    /// The observable as a 4x4 matrix, P₊ - P₋.
    pub fn operator(&self) -> DMatrix<Amp> {
        self.projectors.operator()
    }
}

/// Everything fixed across rounds: the four observables, both context
/// unitaries (embedded on Bob's side), and the singlet source. Building this
/// once avoids re-deriving projectors per round.
#[derive(Clone, Debug)]
pub struct Apparatus {
    obs_a: ObservableSpec,
    obs_c: ObservableSpec,
    obs_b: ObservableSpec,
    obs_d: ObservableSpec,
    u_plus: UnitaryOp,
    u_minus: UnitaryOp,
    singlet: PureState,
}

impl Default for Apparatus {
    fn default() -> Self {
        Self::new()
    }
}

impl Apparatus {
    pub fn new() -> Self {
        let lift = |choice| {
            make_unitary(choice)
                .embed(Side::Bob)
                .expect("2x2 unitary always embeds")
        };
        Self {
            obs_a: ObservableSpec::new(ObservableLabel::A),
            obs_c: ObservableSpec::new(ObservableLabel::C),
            obs_b: ObservableSpec::new(ObservableLabel::B),
            obs_d: ObservableSpec::new(ObservableLabel::D),
            u_plus: lift(UnitaryChoice::PlusY),
            u_minus: lift(UnitaryChoice::MinusY),
            singlet: make_singlet(),
        }
    }

    pub fn observable(&self, label: ObservableLabel) -> &ObservableSpec {
        match label {
            ObservableLabel::A => &self.obs_a,
            ObservableLabel::C => &self.obs_c,
            ObservableLabel::B => &self.obs_b,
            ObservableLabel::D => &self.obs_d,
        }
    }

    /// Context unitary already lifted to the pair space on Bob's side.
    pub fn unitary(&self, choice: UnitaryChoice) -> &UnitaryOp {
        match choice {
            UnitaryChoice::PlusY => &self.u_plus,
            UnitaryChoice::MinusY => &self.u_minus,
        }
    }

    pub fn singlet(&self) -> &PureState {
        &self.singlet
    }
}

fn expect_pair_dim(state: &QuantumState) -> Result<()> {
    if state.dim() == 4 {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch(state.dim(), 4))
    }
}

/// Joint probability of outcomes (a_sign, b_sign) in a space-time round on
/// the singlet: Bob's unitary acts first, then both projectors.
pub fn born_joint_probability(
    app: &Apparatus,
    ctx: ContextChoice,
    a_sign: Sign,
    b_sign: Sign,
) -> f64 {
    born_joint_probability_on(
        app,
        &QuantumState::Pure(app.singlet().clone()),
        ctx,
        a_sign,
        b_sign,
    )
    .expect("singlet input has the right dimension")
}

/// Same as [`born_joint_probability`] for an arbitrary two-qubit input.
pub fn born_joint_probability_on(
    app: &Apparatus,
    state: &QuantumState,
    ctx: ContextChoice,
    a_sign: Sign,
    b_sign: Sign,
) -> Result<f64> {
    expect_pair_dim(state)?;
    let rotated = state.evolve(app.unitary(ctx.unitary))?;
    let pa = app
        .observable(ctx.alice.label())
        .projectors()
        .projector(a_sign);
    let pb = app
        .observable(ctx.bob.label())
        .projectors()
        .projector(b_sign);
    let joint = pa * pb;
    let rho = rotated.to_density();
    Ok((joint * rho.matrix()).trace().re.clamp(0.0, 1.0))
}

/// <(±1)(±1)> over the four joint outcomes of a space-time context on the
/// singlet.
pub fn analytic_expectation(app: &Apparatus, ctx: ContextChoice) -> f64 {
    let mut e = 0.0;
    for a in [Sign::Plus, Sign::Minus] {
        for b in [Sign::Plus, Sign::Minus] {
            let p = born_joint_probability(app, ctx, a, b);
            e += f64::from(a.value()) * f64::from(b.value()) * p;
        }
    }
    e
}

/// Joint probability in the spatial arrangement: no unitary, Alice measures
/// one of {A, C} and Bob one of {B, D} directly on the singlet.
pub fn spatial_joint_probability(
    app: &Apparatus,
    alice: AliceObservable,
    bob: BobObservable,
    a_sign: Sign,
    b_sign: Sign,
) -> f64 {
    let pa = app
        .observable(alice.label())
        .projectors()
        .projector(a_sign);
    let pb = app.observable(bob.label()).projectors().projector(b_sign);
    let rho = app.singlet().to_density();
    ((pa * pb) * rho.matrix()).trace().re.clamp(0.0, 1.0)
}

/// Spatial correlation <alice ⊗ bob> on the singlet.
pub fn spatial_expectation(app: &Apparatus, alice: AliceObservable, bob: BobObservable) -> f64 {
    let mut e = 0.0;
    for a in [Sign::Plus, Sign::Minus] {
        for b in [Sign::Plus, Sign::Minus] {
            e += f64::from(a.value())
                * f64::from(b.value())
                * spatial_joint_probability(app, alice, bob, a, b);
        }
    }
    e
}

/// Per-term breakdown of a CHSH-type combination.
#[derive(Clone, Debug, Serialize)]
pub struct ChshBreakdown {
    /// Terms in the order they enter the sum, with their signs applied
    /// before summing: value = Σ signed terms.
    pub terms: [f64; 4],
    pub value: f64,
}

/// Spatial CHSH `<AB> + <CB> + <CD> - <AD>` on the singlet; equals 2√2.
pub fn spatial_chsh(app: &Apparatus) -> ChshBreakdown {
    use AliceObservable::{A, C};
    use BobObservable::{B, D};
    let terms = [
        spatial_expectation(app, A, B),
        spatial_expectation(app, C, B),
        spatial_expectation(app, C, D),
        -spatial_expectation(app, A, D),
    ];
    ChshBreakdown {
        terms,
        value: terms.iter().sum(),
    }
}

/// Space-time combination over the correct contexts,
/// `<AB>_E1 + <CB>_E3 + <CD>_E4 - <AD>_E2`; equals 4.
pub fn correct_context_chsh(app: &Apparatus) -> ChshBreakdown {
    let e = |l: SubensembleLabel| analytic_expectation(app, l.context());
    let terms = [
        e(SubensembleLabel::E1),
        e(SubensembleLabel::E3),
        e(SubensembleLabel::E4),
        -e(SubensembleLabel::E2),
    ];
    ChshBreakdown {
        terms,
        value: terms.iter().sum(),
    }
}

/// Same combination over the wrong contexts,
/// `<AB>_E5 + <CB>_E7 + <CD>_E8 - <AD>_E6`; equals 0.
pub fn wrong_context_chsh(app: &Apparatus) -> ChshBreakdown {
    let e = |l: SubensembleLabel| analytic_expectation(app, l.context());
    let terms = [
        e(SubensembleLabel::E5),
        e(SubensembleLabel::E7),
        e(SubensembleLabel::E8),
        -e(SubensembleLabel::E6),
    ];
    ChshBreakdown {
        terms,
        value: terms.iter().sum(),
    }
}
