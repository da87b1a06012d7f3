//! Classical messages exchanged over the authenticated channel.
//!
//! The whole point of the sifting phase is what it does NOT say: choice
//! announcements carry observables and unitaries but never outcomes. Outcomes
//! appear only in test-reveal messages, and only for the rounds sacrificed to
//! the eavesdropping test.

use serde::{Deserialize, Serialize};

use crate::observables::{AliceObservable, BobObservable, UnitaryChoice};

use super::protocol::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

/// One message on the classical channel, in delivery order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum SiftingMessage {
    /// Alice's per-round observable choices, index order.
    AliceObsAnnouncement { choices: Vec<AliceObservable> },
    /// Bob's per-round unitary choices, index order.
    UnitaryAnnouncement { choices: Vec<UnitaryChoice> },
    /// Bob's per-round observable choices, index order.
    BobObsAnnouncement { choices: Vec<BobObservable> },
    /// Outcomes for sacrificed rounds only, as (round index, ±1 outcome).
    TestReveal {
        party: Party,
        outcomes: Vec<(u64, i8)>,
    },
    /// The agreed end state of the run.
    Verdict { verdict: Verdict },
}

impl SiftingMessage {
    /// Round indices whose outcomes this message discloses.
    pub fn disclosed_rounds(&self) -> &[(u64, i8)] {
        match self {
            SiftingMessage::TestReveal { outcomes, .. } => outcomes,
            _ => &[],
        }
    }
}

/// One JSON document per line, one line per message.
pub fn write_transcript_jsonl<W: std::io::Write>(
    mut writer: W,
    transcript: &[SiftingMessage],
) -> std::io::Result<()> {
    for message in transcript {
        serde_json::to_writer(&mut writer, message)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
