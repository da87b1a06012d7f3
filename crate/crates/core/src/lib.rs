//! Two-qubit Bell-CHSH simulation with context-dependent unitaries, plus the
//! space-time (ST) quantum key distribution protocol built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! - [`quantum`]: exact dense kernel for dimension-2 and dimension-4 states,
//!   unitaries, projector pairs, and Born-rule measurement with collapse.
//! - [`observables`]: the concrete experiment objects. The singlet, Alice's
//!   observables `A`/`C`, Bob's `B`/`D` with their eigenkets, the rotations
//!   `U±y`, and closed-form joint-probability tables for all eight
//!   measurement contexts `E1`..`E8`.
//! - [`engine`]: seeded Monte Carlo round generation, subensemble
//!   partitioning, and CHSH statistics with standard errors.
//! - [`lhv`]: deterministic local-hidden-variable baselines, with and
//!   without post-selection.
//! - [`qkd`]: the two-party ST-QKD protocol, eavesdropper and noise models,
//!   sifting transcript, and resource accounting.
//!
//! All randomness is counter-derived from an explicit [`engine::RngSpec`], so
//! every run is reproducible bit-for-bit regardless of worker count.

pub mod engine;
pub mod lhv;
pub mod observables;
pub mod qkd;
pub mod quantum;
