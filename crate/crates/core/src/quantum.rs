//! Exact dense quantum kernel for one and two qubits.
//!
//! States and operators live in dimension 2 or 4. Probabilities are always
//! evaluated analytically from the trace formula; sampling only converts a
//! probability into an outcome via an externally supplied uniform draw. All
//! values are immutable after construction and every operation is a pure
//! function, so everything here is safe to share across workers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Complex amplitude.
pub type Amp = Complex64;

/// Tolerance for algebraic identities (norms, unitarity, traces, projectors).
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for chained analytic results.
pub const CHAINED_TOL: f64 = 1e-9;
/// Eigenvalue floor for the positive-semidefinite check.
pub const PSD_TOL: f64 = 1e-10;
/// Probability below which a collapse branch counts as impossible.
pub const ZERO_BRANCH_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unsupported dimension {0}: the kernel handles dim 2 and 4 only")]
    UnsupportedDim(usize),
    #[error("non-finite amplitude encountered")]
    NonFinite,
    #[error("state norm² deviates from 1 by {0:.3e}")]
    NotNormalized(f64),
    #[error("operator is not unitary (max |U\u{2020}U - 1| entry {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("trace deviates from 1 by {0:.3e}")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("invalid projector pair: {0}")]
    BadProjector(String),
    #[error("collapse onto a branch with probability {0:.3e} requested; this signals a logic bug, not randomness")]
    ZeroProbabilityBranch(f64),
    #[error("noise probability {0} outside [0, 1]")]
    NoiseOutOfRange(f64),
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Which qubit of the pair an operator acts on. Qubit 1 is Alice, qubit 2 is
/// Bob; the 4-dim basis order is |00>, |01>, |10>, |11>.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

/// A measurement branch: `Plus` maps to eigenvalue +1, `Minus` to -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_value(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(KernelError::BadProjector(format!(
                "outcome must be +1 or -1, got {v}"
            ))),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(KernelError::UnsupportedDim(dim))
    }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch(a, b))
    }
}

fn all_finite_vec(v: &DVector<Amp>) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn all_finite_mat(m: &DMatrix<Amp>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn max_abs(m: &DMatrix<Amp>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// 2x2 identity.
pub fn identity(dim: usize) -> DMatrix<Amp> {
    DMatrix::identity(dim, dim)
}

pub fn pauli_x() -> DMatrix<Amp> {
    DMatrix::from_row_slice(2, 2, &[
        Amp::new(0.0, 0.0),
        Amp::new(1.0, 0.0),
        Amp::new(1.0, 0.0),
        Amp::new(0.0, 0.0),
    ])
}

pub fn pauli_y() -> DMatrix<Amp> {
    DMatrix::from_row_slice(2, 2, &[
        Amp::new(0.0, 0.0),
        Amp::new(0.0, -1.0),
        Amp::new(0.0, 1.0),
        Amp::new(0.0, 0.0),
    ])
}

pub fn pauli_z() -> DMatrix<Amp> {
    DMatrix::from_row_slice(2, 2, &[
        Amp::new(1.0, 0.0),
        Amp::new(0.0, 0.0),
        Amp::new(0.0, 0.0),
        Amp::new(-1.0, 0.0),
    ])
}

/// Embed a 2x2 operator on one side of the two-qubit space: `m ⊗ 1` for
/// Alice, `1 ⊗ m` for Bob.
pub fn embed(m: &DMatrix<Amp>, side: Side) -> Result<DMatrix<Amp>> {
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(KernelError::DimensionMismatch(m.nrows(), 2));
    }
    let id = identity(2);
    Ok(match side {
        Side::Alice => m.kronecker(&id),
        Side::Bob => id.kronecker(m),
    })
}

// ---------------------------------------------------------------------------
// Pure states
// ---------------------------------------------------------------------------

/// A normalized pure state of dimension 2 or 4.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: DVector<Amp>,
}

impl PureState {
    /// Build from amplitudes; the vector must have length 2 or 4 and unit
    /// norm within [`ALGEBRAIC_TOL`].
    pub fn new(amps: Vec<Amp>) -> Result<Self> {
        let v = DVector::from_vec(amps);
        check_dim(v.len())?;
        if !all_finite_vec(&v) {
            return Err(KernelError::NonFinite);
        }
        let dev = (v.norm_squared() - 1.0).abs();
        if dev > ALGEBRAIC_TOL {
            return Err(KernelError::NotNormalized(dev));
        }
        Ok(Self { amps: v })
    }

    pub(crate) fn from_vector_trusted(amps: DVector<Amp>) -> Self {
        debug_assert!(amps.len() == 2 || amps.len() == 4);
        debug_assert!((amps.norm_squared() - 1.0).abs() <= 1e-10);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<Amp> {
        &self.amps
    }

    /// |0>
    pub fn ket0() -> Self {
        Self::from_vector_trusted(DVector::from_vec(vec![
            Amp::new(1.0, 0.0),
            Amp::new(0.0, 0.0),
        ]))
    }

    /// |1>
    pub fn ket1() -> Self {
        Self::from_vector_trusted(DVector::from_vec(vec![
            Amp::new(0.0, 0.0),
            Amp::new(1.0, 0.0),
        ]))
    }

    /// |+> = (|0> + |1>)/√2
    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_vector_trusted(DVector::from_vec(vec![Amp::new(h, 0.0), Amp::new(h, 0.0)]))
    }

    /// |-> = (|0> - |1>)/√2
    pub fn minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_vector_trusted(DVector::from_vec(vec![Amp::new(h, 0.0), Amp::new(-h, 0.0)]))
    }

    /// |ψ><ψ| as a density operator.
    pub fn to_density(&self) -> DensityOp {
        let m = &self.amps * self.amps.adjoint();
        DensityOp::from_matrix_trusted(m)
    }

    /// Re-run the constructor checks.
    pub fn validate(&self) -> Result<()> {
        check_dim(self.amps.len())?;
        if !all_finite_vec(&self.amps) {
            return Err(KernelError::NonFinite);
        }
        let dev = (self.amps.norm_squared() - 1.0).abs();
        if dev > ALGEBRAIC_TOL {
            return Err(KernelError::NotNormalized(dev));
        }
        Ok(())
    }
}

/// Kronecker product of two single-qubit states, ordered |q1 q2> with basis
/// |00>, |01>, |10>, |11> (qubit 1 = Alice, qubit 2 = Bob).
pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState> {
    if a.dim() != 2 {
        return Err(KernelError::DimensionMismatch(a.dim(), 2));
    }
    if b.dim() != 2 {
        return Err(KernelError::DimensionMismatch(b.dim(), 2));
    }
    let v = a.amps.kronecker(&b.amps);
    Ok(PureState::from_vector_trusted(DVector::from_iterator(
        4,
        v.iter().copied(),
    )))
}

/// |<a|b>|, insensitive to global phase.
pub fn fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    Ok(a.amps.dotc(&b.amps).norm())
}

// ---------------------------------------------------------------------------
// Density operators
// ---------------------------------------------------------------------------

/// A density operator: Hermitian, trace one, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    matrix: DMatrix<Amp>,
}

impl DensityOp {
    pub fn new(matrix: DMatrix<Amp>) -> Result<Self> {
        let rho = Self { matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_trusted(matrix: DMatrix<Amp>) -> Self {
        debug_assert!(matrix.is_square());
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Amp> {
        &self.matrix
    }

    /// 1/dim.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::from_matrix_trusted(
            identity(dim) * Amp::new(1.0 / dim as f64, 0.0),
        ))
    }

    /// Eigenvalues of the (Hermitian) matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Re-run the constructor checks: square dim 2|4, finite, Hermitian and
    /// trace-1 within [`ALGEBRAIC_TOL`], eigenvalues above -[`PSD_TOL`].
    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if !m.is_square() {
            return Err(KernelError::DimensionMismatch(m.nrows(), m.ncols()));
        }
        check_dim(m.nrows())?;
        if !all_finite_mat(m) {
            return Err(KernelError::NonFinite);
        }
        let asym = max_abs(&(m - m.adjoint()));
        if asym > ALGEBRAIC_TOL {
            return Err(KernelError::NotHermitian(asym));
        }
        let tr = m.trace();
        let tr_dev = (tr.re - 1.0).hypot(tr.im);
        if tr_dev > ALGEBRAIC_TOL {
            return Err(KernelError::BadTrace(tr_dev));
        }
        let min_ev = self
            .eigenvalues()
            .first()
            .copied()
            .unwrap_or(f64::NEG_INFINITY);
        if min_ev < -PSD_TOL {
            return Err(KernelError::NotPsd(min_ev));
        }
        Ok(())
    }
}

/// (1-p)·ρ + p·1/dim.
pub fn depolarize(rho: &DensityOp, p: f64) -> Result<DensityOp> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(KernelError::NoiseOutOfRange(p));
    }
    let dim = rho.dim();
    let m = rho.matrix() * Amp::new(1.0 - p, 0.0)
        + identity(dim) * Amp::new(p / dim as f64, 0.0);
    Ok(DensityOp::from_matrix_trusted(m))
}

/// ρ_a ⊗ ρ_b for two single-qubit density operators.
pub fn tensor_density(a: &DensityOp, b: &DensityOp) -> Result<DensityOp> {
    if a.dim() != 2 || b.dim() != 2 {
        return Err(KernelError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(DensityOp::from_matrix_trusted(
        a.matrix().kronecker(b.matrix()),
    ))
}

/// Alice's reduced state: trace out qubit 2.
pub fn reduced_alice(rho: &DensityOp) -> Result<DensityOp> {
    if rho.dim() != 4 {
        return Err(KernelError::DimensionMismatch(rho.dim(), 4));
    }
    let m = rho.matrix();
    let mut out = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                out[(i, j)] += m[(2 * i + k, 2 * j + k)];
            }
        }
    }
    Ok(DensityOp::from_matrix_trusted(out))
}

/// Bob's reduced state: trace out qubit 1.
pub fn reduced_bob(rho: &DensityOp) -> Result<DensityOp> {
    if rho.dim() != 4 {
        return Err(KernelError::DimensionMismatch(rho.dim(), 4));
    }
    let m = rho.matrix();
    let mut out = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                out[(i, j)] += m[(2 * k + i, 2 * k + j)];
            }
        }
    }
    Ok(DensityOp::from_matrix_trusted(out))
}

// ---------------------------------------------------------------------------
// Unitaries
// ---------------------------------------------------------------------------

/// A unitary operator of dimension 2 or 4.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOp {
    matrix: DMatrix<Amp>,
}

impl UnitaryOp {
    pub fn new(matrix: DMatrix<Amp>) -> Result<Self> {
        let u = Self { matrix };
        u.validate()?;
        Ok(u)
    }

    pub(crate) fn from_matrix_trusted(matrix: DMatrix<Amp>) -> Self {
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::from_matrix_trusted(identity(dim)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Amp> {
        &self.matrix
    }

    /// Lift a 2x2 unitary to the pair space on the given side.
    pub fn embed(&self, side: Side) -> Result<UnitaryOp> {
        Ok(UnitaryOp::from_matrix_trusted(embed(&self.matrix, side)?))
    }

    /// U|ψ>. Norm is preserved within [`ALGEBRAIC_TOL`].
    pub fn apply(&self, s: &PureState) -> Result<PureState> {
        check_same_dim(self.dim(), s.dim())?;
        Ok(PureState::from_vector_trusted(&self.matrix * s.amplitudes()))
    }

    /// UρU†. Trace is preserved within [`ALGEBRAIC_TOL`].
    pub fn apply_density(&self, rho: &DensityOp) -> Result<DensityOp> {
        check_same_dim(self.dim(), rho.dim())?;
        Ok(DensityOp::from_matrix_trusted(
            &self.matrix * rho.matrix() * self.matrix.adjoint(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if !m.is_square() {
            return Err(KernelError::DimensionMismatch(m.nrows(), m.ncols()));
        }
        check_dim(m.nrows())?;
        if !all_finite_mat(m) {
            return Err(KernelError::NonFinite);
        }
        let dev = max_abs(&(m.adjoint() * m - identity(m.nrows())));
        if dev > ALGEBRAIC_TOL {
            return Err(KernelError::NotUnitary(dev));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Projector pairs
// ---------------------------------------------------------------------------

/// Two orthogonal projectors summing to the identity; `plus` carries
/// eigenvalue +1 and `minus` eigenvalue -1.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorPair {
    plus: DMatrix<Amp>,
    minus: DMatrix<Amp>,
}

impl ProjectorPair {
    pub fn new(plus: DMatrix<Amp>, minus: DMatrix<Amp>) -> Result<Self> {
        let pair = Self { plus, minus };
        pair.validate()?;
        Ok(pair)
    }

    pub(crate) fn from_matrices_trusted(plus: DMatrix<Amp>, minus: DMatrix<Amp>) -> Self {
        Self { plus, minus }
    }

    /// Rank-1 pair |plus><plus|, |minus><minus| from two orthonormal kets.
    pub fn from_eigenkets(plus: &PureState, minus: &PureState) -> Result<Self> {
        check_same_dim(plus.dim(), minus.dim())?;
        Self::new(
            plus.amplitudes() * plus.amplitudes().adjoint(),
            minus.amplitudes() * minus.amplitudes().adjoint(),
        )
    }

    /// The σz pair {|0><0|, |1><1|}.
    pub fn sigma_z() -> Self {
        Self::from_matrices_trusted(
            PureState::ket0().to_density().matrix().clone(),
            PureState::ket1().to_density().matrix().clone(),
        )
    }

    /// The σx pair {|+><+|, |-><-|}.
    pub fn sigma_x() -> Self {
        Self::from_matrices_trusted(
            PureState::plus().to_density().matrix().clone(),
            PureState::minus().to_density().matrix().clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.plus.nrows()
    }

    pub fn plus(&self) -> &DMatrix<Amp> {
        &self.plus
    }

    pub fn minus(&self) -> &DMatrix<Amp> {
        &self.minus
    }

    pub fn projector(&self, sign: Sign) -> &DMatrix<Amp> {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    /// Lift a 2x2 pair to the pair space on the given side.
    pub fn embed(&self, side: Side) -> Result<ProjectorPair> {
        Ok(ProjectorPair::from_matrices_trusted(
            embed(&self.plus, side)?,
            embed(&self.minus, side)?,
        ))
    }

    /// (+1)P₊ + (-1)P₋, the observable in operator form.
    pub fn operator(&self) -> DMatrix<Amp> {
        &self.plus - &self.minus
    }

    /// Idempotency, Hermiticity, completeness, and orthogonality within
    /// [`ALGEBRAIC_TOL`].
    pub fn validate(&self) -> Result<()> {
        if self.plus.nrows() != self.minus.nrows() {
            return Err(KernelError::DimensionMismatch(
                self.plus.nrows(),
                self.minus.nrows(),
            ));
        }
        check_dim(self.plus.nrows())?;
        for (name, p) in [("plus", &self.plus), ("minus", &self.minus)] {
            if !all_finite_mat(p) {
                return Err(KernelError::NonFinite);
            }
            let herm = max_abs(&(p - p.adjoint()));
            if herm > ALGEBRAIC_TOL {
                return Err(KernelError::BadProjector(format!(
                    "{name} is not Hermitian (defect {herm:.3e})"
                )));
            }
            let idem = max_abs(&(p * p - p));
            if idem > ALGEBRAIC_TOL {
                return Err(KernelError::BadProjector(format!(
                    "{name} is not idempotent (defect {idem:.3e})"
                )));
            }
        }
        let complete = max_abs(&(&self.plus + &self.minus - identity(self.dim())));
        if complete > ALGEBRAIC_TOL {
            return Err(KernelError::BadProjector(format!(
                "plus + minus differs from identity by {complete:.3e}"
            )));
        }
        let ortho = max_abs(&(&self.plus * &self.minus));
        if ortho > ALGEBRAIC_TOL {
            return Err(KernelError::BadProjector(format!(
                "plus·minus differs from zero by {ortho:.3e}"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

/// A pure or mixed state; operations keep the kind.
#[derive(Clone, Debug)]
pub enum QuantumState {
    Pure(PureState),
    Mixed(DensityOp),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(s) => s.dim(),
            QuantumState::Mixed(r) => r.dim(),
        }
    }

    pub fn to_density(&self) -> DensityOp {
        match self {
            QuantumState::Pure(s) => s.to_density(),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    /// Apply a unitary, preserving the state kind.
    pub fn evolve(&self, u: &UnitaryOp) -> Result<QuantumState> {
        Ok(match self {
            QuantumState::Pure(s) => QuantumState::Pure(u.apply(s)?),
            QuantumState::Mixed(r) => QuantumState::Mixed(u.apply_density(r)?),
        })
    }

    /// <P> for one projector.
    fn branch_probability(&self, p: &DMatrix<Amp>) -> f64 {
        match self {
            QuantumState::Pure(s) => s.amplitudes().dotc(&(p * s.amplitudes())).re,
            QuantumState::Mixed(r) => (p * r.matrix()).trace().re,
        }
    }
}

/// Outcome of a single projective measurement.
#[derive(Clone, Debug)]
pub struct Measurement {
    /// +1 or -1.
    pub outcome: i8,
    /// Analytic probability of the +1 branch, snapped to exactly 0 or 1 when
    /// within [`ZERO_BRANCH_TOL`] of either end.
    pub prob_plus: f64,
    /// Renormalized post-measurement state of the same kind as the input.
    pub collapsed: QuantumState,
}

/// Snap floating-point noise so deterministic branches are exact: values
/// within [`ZERO_BRANCH_TOL`] of 0 or 1 become 0 or 1.
fn snap_probability(p: f64) -> f64 {
    if p < ZERO_BRANCH_TOL {
        0.0
    } else if p > 1.0 - ZERO_BRANCH_TOL {
        1.0
    } else {
        p
    }
}

/// Project onto one branch and renormalize. Errors if the branch carries
/// probability below [`ZERO_BRANCH_TOL`].
pub fn collapse(state: &QuantumState, pair: &ProjectorPair, sign: Sign) -> Result<QuantumState> {
    check_same_dim(state.dim(), pair.dim())?;
    let p = pair.projector(sign);
    match state {
        QuantumState::Pure(s) => {
            let w = p * s.amplitudes();
            let n2 = w.norm_squared();
            if n2 < ZERO_BRANCH_TOL {
                return Err(KernelError::ZeroProbabilityBranch(n2));
            }
            Ok(QuantumState::Pure(PureState::from_vector_trusted(
                w / Amp::new(n2.sqrt(), 0.0),
            )))
        }
        QuantumState::Mixed(r) => {
            let m = p * r.matrix() * p;
            let t = m.trace().re;
            if t < ZERO_BRANCH_TOL {
                return Err(KernelError::ZeroProbabilityBranch(t));
            }
            Ok(QuantumState::Mixed(DensityOp::from_matrix_trusted(
                m / Amp::new(t, 0.0),
            )))
        }
    }
}

/// Born-rule measurement. `draw` is a uniform value in [0, 1); the outcome is
/// +1 iff `draw < prob_plus`, so the draw only converts the analytic
/// probability into an outcome.
pub fn measure(state: &QuantumState, pair: &ProjectorPair, draw: f64) -> Result<Measurement> {
    check_same_dim(state.dim(), pair.dim())?;
    let prob_plus = snap_probability(state.branch_probability(pair.plus()));
    let sign = if draw < prob_plus {
        Sign::Plus
    } else {
        Sign::Minus
    };
    let collapsed = collapse(state, pair, sign)?;
    Ok(Measurement {
        outcome: sign.value(),
        prob_plus,
        collapsed,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Amp {
        Amp::new(re, im)
    }

    #[test]
    fn tensor_of_basis_kets() {
        let t = tensor(&PureState::ket0(), &PureState::ket1()).unwrap();
        let expected = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        for (got, want) in t.amplitudes().iter().zip(expected) {
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn tensor_of_plus_plus_is_uniform() {
        let t = tensor(&PureState::plus(), &PureState::plus()).unwrap();
        for a in t.amplitudes().iter() {
            assert_abs_diff_eq!(a.re, 0.5, epsilon = ALGEBRAIC_TOL);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = ALGEBRAIC_TOL);
        }
    }

    #[test]
    fn tensor_rejects_dim_four_input() {
        let four = PureState::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(
            tensor(&four, &PureState::ket0()),
            Err(KernelError::DimensionMismatch(4, 2))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let psi = PureState::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert_abs_diff_eq!(fidelity(&psi, &psi).unwrap(), 1.0, epsilon = ALGEBRAIC_TOL);
        assert_abs_diff_eq!(
            fidelity(&PureState::ket0(), &PureState::ket1()).unwrap(),
            0.0,
            epsilon = ALGEBRAIC_TOL
        );
        // global phase does not matter
        for phi in [0.3, 1.2, std::f64::consts::PI] {
            let phase = Amp::from_polar(1.0, phi);
            let rotated = PureState::new(psi.amplitudes().iter().map(|a| a * phase).collect())
                .unwrap();
            assert_abs_diff_eq!(fidelity(&rotated, &psi).unwrap(), 1.0, epsilon = ALGEBRAIC_TOL);
        }
    }

    #[test]
    fn identity_unitary_is_a_fixed_point() {
        let u = UnitaryOp::identity(2).unwrap();
        let s = PureState::plus();
        assert_abs_diff_eq!(
            fidelity(&u.apply(&s).unwrap(), &s).unwrap(),
            1.0,
            epsilon = ALGEBRAIC_TOL
        );
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        assert!(matches!(UnitaryOp::new(m), Err(KernelError::NotUnitary(_))));
    }

    #[test]
    fn measure_eigenstate_is_deterministic() {
        let m = measure(
            &QuantumState::Pure(PureState::ket0()),
            &ProjectorPair::sigma_z(),
            0.999_999,
        )
        .unwrap();
        assert_eq!(m.outcome, 1);
        assert_eq!(m.prob_plus, 1.0);
        match m.collapsed {
            QuantumState::Pure(s) => {
                assert_abs_diff_eq!(
                    fidelity(&s, &PureState::ket0()).unwrap(),
                    1.0,
                    epsilon = ALGEBRAIC_TOL
                );
            }
            QuantumState::Mixed(_) => panic!("kind changed"),
        }
    }

    #[test]
    fn collapse_onto_dead_branch_is_an_error() {
        let err = collapse(
            &QuantumState::Pure(PureState::ket0()),
            &ProjectorPair::sigma_z(),
            Sign::Minus,
        )
        .unwrap_err();
        assert!(matches!(err, KernelError::ZeroProbabilityBranch(_)));
    }

    #[test]
    fn depolarize_boundaries() {
        let rho = DensityOp::maximally_mixed(4).unwrap();
        let same = depolarize(&rho, 0.0).unwrap();
        assert_eq!(same.matrix(), rho.matrix());
        assert!(matches!(
            depolarize(&rho, 1.5),
            Err(KernelError::NoiseOutOfRange(_))
        ));
        assert!(matches!(
            depolarize(&rho, -0.1),
            Err(KernelError::NoiseOutOfRange(_))
        ));
    }

    #[test]
    fn density_validation_rejects_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(matches!(DensityOp::new(m), Err(KernelError::NotPsd(_))));
    }

    #[test]
    fn density_validation_rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.3, 0.0), c(0.5, 0.0)]);
        assert!(matches!(DensityOp::new(m), Err(KernelError::NotHermitian(_))));
    }

    #[test]
    fn reduced_states_of_a_product_are_the_factors() {
        let rho_a = PureState::ket0().to_density();
        let rho_b = PureState::plus().to_density();
        let joint = tensor_density(&rho_a, &rho_b).unwrap();
        assert!(max_abs(&(reduced_alice(&joint).unwrap().matrix() - rho_a.matrix())) < ALGEBRAIC_TOL);
        assert!(max_abs(&(reduced_bob(&joint).unwrap().matrix() - rho_b.matrix())) < ALGEBRAIC_TOL);
    }

    #[test]
    fn projector_pair_validation_catches_incomplete_pair() {
        let p0 = PureState::ket0().to_density().matrix().clone();
        let err = ProjectorPair::new(p0.clone(), p0).unwrap_err();
        assert!(matches!(err, KernelError::BadProjector(_)));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Random normalized state of the given dimension.
        fn arb_state(dim: usize) -> impl Strategy<Value = PureState> {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
                .prop_filter_map("norm too small", move |parts| {
                    let amps: Vec<Amp> = parts.iter().map(|(re, im)| c(*re, *im)).collect();
                    let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    if norm < 1e-3 {
                        return None;
                    }
                    let scaled = amps.iter().map(|z| z / Amp::new(norm, 0.0)).collect();
                    PureState::new(scaled).ok()
                })
        }

        /// Random element of U(2) from the phase/rotation parameterization.
        fn arb_unitary2() -> impl Strategy<Value = UnitaryOp> {
            use std::f64::consts::TAU;
            (0.0..TAU, 0.0..TAU, 0.0..TAU, 0.0..TAU).prop_map(|(alpha, beta, gamma, theta)| {
                let g = Amp::from_polar(1.0, alpha);
                let (ct, st) = (theta.cos(), theta.sin());
                let m = DMatrix::from_row_slice(2, 2, &[
                    g * Amp::from_polar(ct, beta),
                    g * Amp::from_polar(st, gamma),
                    g * -Amp::from_polar(st, -gamma),
                    g * Amp::from_polar(ct, -beta),
                ]);
                UnitaryOp::new(m).expect("parameterization covers U(2)")
            })
        }

        /// Random rank-1 projector pair: the σz pair conjugated by a random
        /// unitary.
        fn arb_projector_pair() -> impl Strategy<Value = ProjectorPair> {
            arb_unitary2().prop_map(|u| {
                let z = ProjectorPair::sigma_z();
                ProjectorPair::new(
                    u.matrix() * z.plus() * u.matrix().adjoint(),
                    u.matrix() * z.minus() * u.matrix().adjoint(),
                )
                .expect("conjugation preserves the pair invariants")
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn unitary_preserves_norm_and_overlaps(
                u in arb_unitary2(),
                a in arb_state(2),
                b in arb_state(2),
            ) {
                let ua = u.apply(&a).unwrap();
                let ub = u.apply(&b).unwrap();
                prop_assert!((ua.amplitudes().norm_squared() - 1.0).abs() <= ALGEBRAIC_TOL);
                let before = fidelity(&a, &b).unwrap();
                let after = fidelity(&ua, &ub).unwrap();
                prop_assert!((before - after).abs() <= 1e-9);
            }

            #[test]
            fn measurement_is_a_valid_distribution_and_collapse_renormalizes(
                s in arb_state(2),
                pair in arb_projector_pair(),
                draw in 0.0f64..1.0,
            ) {
                let state = QuantumState::Pure(s);
                let m = measure(&state, &pair, draw).unwrap();
                prop_assert!((0.0..=1.0).contains(&m.prob_plus));
                prop_assert!(m.outcome == 1 || m.outcome == -1);
                match &m.collapsed {
                    QuantumState::Pure(post) => {
                        prop_assert!((post.amplitudes().norm_squared() - 1.0).abs() <= ALGEBRAIC_TOL);
                        // measuring again along the same pair is now deterministic
                        let again = measure(&m.collapsed, &pair, draw).unwrap();
                        prop_assert_eq!(again.outcome, m.outcome);
                        prop_assert!(again.prob_plus == 0.0 || again.prob_plus == 1.0);
                    }
                    QuantumState::Mixed(_) => prop_assert!(false, "kind changed"),
                }
            }

            #[test]
            fn density_operations_preserve_invariants(
                a in arb_state(2),
                b in arb_state(2),
                u in arb_unitary2(),
                p in 0.0f64..=1.0,
                w in 0.0f64..=1.0,
            ) {
                // classical mixture of two pure states is a valid density op
                let rho_m = a.to_density().matrix() * Amp::new(w, 0.0)
                    + b.to_density().matrix() * Amp::new(1.0 - w, 0.0);
                let rho = DensityOp::new(rho_m).unwrap();
                let evolved = u.apply_density(&rho).unwrap();
                evolved.validate().unwrap();
                let pair_rho = tensor_density(&evolved, &a.to_density()).unwrap();
                let noisy = depolarize(&pair_rho, p).unwrap();
                noisy.validate().unwrap();
                reduced_alice(&noisy).unwrap().validate().unwrap();
                reduced_bob(&noisy).unwrap().validate().unwrap();
            }

            #[test]
            fn tensor_is_bilinear(
                a in arb_state(2),
                b in arb_state(2),
                ket in arb_state(2),
                alpha in -1.0f64..1.0,
                beta in -1.0f64..1.0,
            ) {
                // (αa + βb) ⊗ c = α(a ⊗ c) + β(b ⊗ c), compared after the
                // same normalization on both sides
                let combo: DVector<Amp> = a.amplitudes() * Amp::new(alpha, 0.0)
                    + b.amplitudes() * Amp::new(beta, 0.0);
                let norm = combo.norm();
                prop_assume!(norm > 1e-3);
                let left = tensor(
                    &PureState::new(combo.iter().map(|z| z / Amp::new(norm, 0.0)).collect()).unwrap(),
                    &ket,
                )
                .unwrap();
                let right_raw = tensor(&a, &ket).unwrap().amplitudes() * Amp::new(alpha, 0.0)
                    + tensor(&b, &ket).unwrap().amplitudes() * Amp::new(beta, 0.0);
                let right = right_raw / Amp::new(norm, 0.0);
                prop_assert!((left.amplitudes() - right).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn measurement_frequencies_match_prob_plus() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // <+|0><0|+> = 1/2
        let state = QuantumState::Pure(PureState::plus());
        let pair = ProjectorPair::sigma_z();
        let n = 100_000u32;
        let mut plus = 0u32;
        let mut p_analytic = 0.0;
        for _ in 0..n {
            let m = measure(&state, &pair, rng.gen::<f64>()).unwrap();
            p_analytic = m.prob_plus;
            if m.outcome == 1 {
                plus += 1;
            }
        }
        let freq = f64::from(plus) / f64::from(n);
        let sigma = (p_analytic * (1.0 - p_analytic) / f64::from(n)).sqrt();
        assert!((freq - p_analytic).abs() <= 5.0 * sigma);
    }
}
