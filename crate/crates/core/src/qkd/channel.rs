//! The quantum channel between the source and the parties, including the
//! eavesdropper models and depolarizing noise.
//!
//! Eve acts on Bob's qubit while the pair is in transit, before either party
//! measures. Intercept-resend attacks measure Bob's qubit non-selectively in
//! a fixed or per-pair random basis and forward the post-measurement mixture;
//! the break-entanglement attack replaces the pair state by the product of
//! its reduced states. Depolarizing noise applies after Eve.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::quantum::{
    depolarize, embed, reduced_alice, reduced_bob, tensor_density, DensityOp, KernelError,
    ProjectorPair, Result, Side,
};

/// Eavesdropping strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveKind {
    /// Channel acts as the identity.
    None,
    /// Non-selective σz measurement of Bob's qubit, state resent.
    InterceptResendZ,
    /// Per attacked pair, σz or σx is chosen with probability 1/2 each.
    InterceptResendRandom,
    /// Pair state replaced by ρ_A ⊗ ρ_B of its reduced states.
    BreakEntanglement,
}

/// An eavesdropper: a strategy plus the fraction of pairs it touches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EveModel {
    pub kind: EveKind,
    pub attack_fraction: f64,
}

impl EveModel {
    /// The absent eavesdropper.
    pub fn none() -> Self {
        Self {
            kind: EveKind::None,
            attack_fraction: 0.0,
        }
    }

    pub fn new(kind: EveKind, attack_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&attack_fraction) || !attack_fraction.is_finite() {
            return Err(KernelError::NoiseOutOfRange(attack_fraction));
        }
        Ok(Self {
            kind,
            attack_fraction,
        })
    }
}

impl Default for EveModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Non-selective measurement of Bob's qubit: ρ → Σ± (1⊗P±) ρ (1⊗P±).
fn nonselective_bob_measurement(rho: &DensityOp, pair: &ProjectorPair) -> Result<DensityOp> {
    let plus = embed(pair.plus(), Side::Bob)?;
    let minus = embed(pair.minus(), Side::Bob)?;
    let m = &plus * rho.matrix() * &plus + &minus * rho.matrix() * &minus;
    Ok(DensityOp::from_matrix_trusted(m))
}

/// Pass one pair through the channel. Draws consumed from `rng`, in order:
/// the attack decision (only when Eve is present), then the basis choice
/// (only for an attacked intercept-resend-random pair).
pub fn quantum_channel(
    rho: &DensityOp,
    eve: &EveModel,
    noise_p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DensityOp> {
    // fields are public, so re-check the fraction rather than trust the
    // constructor was used
    if !(0.0..=1.0).contains(&eve.attack_fraction) || !eve.attack_fraction.is_finite() {
        return Err(KernelError::NoiseOutOfRange(eve.attack_fraction));
    }
    let after_eve = match eve.kind {
        EveKind::None => rho.clone(),
        kind => {
            let attacked = rng.gen_bool(eve.attack_fraction);
            if !attacked {
                rho.clone()
            } else {
                match kind {
                    EveKind::None => unreachable!("handled above"),
                    EveKind::InterceptResendZ => {
                        nonselective_bob_measurement(rho, &ProjectorPair::sigma_z())?
                    }
                    EveKind::InterceptResendRandom => {
                        let pair = if rng.gen_bool(0.5) {
                            ProjectorPair::sigma_z()
                        } else {
                            ProjectorPair::sigma_x()
                        };
                        nonselective_bob_measurement(rho, &pair)?
                    }
                    EveKind::BreakEntanglement => {
                        tensor_density(&reduced_alice(rho)?, &reduced_bob(rho)?)?
                    }
                }
            }
        }
    };
    depolarize(&after_eve, noise_p)
}
