use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEDGER_HEADER: &str = "phase,sender,receiver,kind,elements,bytes";
const BYTES_PER_ELEMENT: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Predict,
    Finetune,
    Splitnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Representation,
    ForwardActivation,
    BackwardGradient,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Predict => "predict",
            Phase::Finetune => "finetune",
            Phase::Splitnn => "splitnn",
        })
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PayloadKind::Representation => "representation",
            PayloadKind::ForwardActivation => "forward_activation",
            PayloadKind::BackwardGradient => "backward_gradient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub phase: Phase,
    pub sender: usize,
    pub receiver: usize,
    pub kind: PayloadKind,
    pub elements: u64,
    pub bytes: u64,
}

/// Append-only record of every payload exchanged between parties, counted
/// at 8 bytes per element.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    entries: Vec<LedgerEntry>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, phase: Phase, sender: usize, receiver: usize, kind: PayloadKind, elements: u64) {
        self.entries.push(LedgerEntry {
            phase,
            sender,
            receiver,
            kind,
            elements,
            bytes: elements * BYTES_PER_ELEMENT,
        });
    }

    pub fn extend(&mut self, other: &CommLedger) {
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes).sum()
    }

    pub fn phase_bytes(&self, phase: Phase) -> u64 {
        self.entries.iter().filter(|e| e.phase == phase).map(|e| e.bytes).sum()
    }

    pub fn phase_entries(&self, phase: Phase) -> usize {
        self.entries.iter().filter(|e| e.phase == phase).count()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidInput(format!("ledger csv: {e}"));
        w.write_record(LEDGER_HEADER.split(',')).map_err(err)?;
        for e in &self.entries {
            w.write_record([
                e.phase.to_string(),
                e.sender.to_string(),
                e.receiver.to_string(),
                e.kind.to_string(),
                e.elements.to_string(),
                e.bytes.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("ledger csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(format!("ledger csv: {e}")))
    }
}
