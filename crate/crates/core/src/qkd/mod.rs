//! The ST quantum key distribution protocol: a tamperable quantum channel
//! ([`channel`]), the authenticated classical message flow ([`sifting`]), the
//! two-step eavesdropping test with key extraction ([`protocol`]), and the
//! resource-usage comparison table ([`accounting`]).

pub mod accounting;
pub mod channel;
pub mod protocol;
pub mod sifting;

pub use accounting::{
    resource_accounting, AccountingRow, ResourceFractions, DEFAULT_BB84_X,
};
pub use channel::{quantum_channel, EveKind, EveModel};
pub use protocol::{
    four_outcome_iq_check, key_to_hex, perfect_correlation_check, run_protocol, QkdConfig,
    QkdError, QkdReport, RevealedRound, Step1Report, Step2Report, Verdict, DEFAULT_EPSILON,
    DEFAULT_TAU1_FLOOR, DEFAULT_TAU2,
};
pub use sifting::{write_transcript_jsonl, Party, SiftingMessage};
