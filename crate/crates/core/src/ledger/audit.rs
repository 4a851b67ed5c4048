//! Line-delimited audit log export, one record per receipt, and offline
//! reconstruction of the block chain from such a log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Address, Block, Digest, Event, Ledger, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub block: Option<u64>,
    pub sender: String,
    pub target: Address,
    pub op: String,
    pub status: String,
    pub events: Vec<Event>,
    pub nonce: u64,
    pub payload: String,
    pub signature: Digest,
    /// Digest of the sealing block; `None` while unsealed or never included.
    pub block_digest: Option<Digest>,
}

impl AuditRecord {
    pub fn transaction(&self) -> Transaction {
        Transaction {
            sender: self.sender.clone(),
            target: self.target,
            op: self.op.clone(),
            payload: self.payload.clone(),
            nonce: self.nonce,
            signature: self.signature,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {seq}: sequence numbers must increase by one")]
    Sequence { seq: u64 },
    #[error("record {seq}: block index {block} goes backwards")]
    BlockOrder { seq: u64, block: u64 },
}

pub fn audit_records(ledger: &Ledger) -> Vec<AuditRecord> {
    let blocks = ledger.blocks();
    ledger
        .log()
        .iter()
        .map(|entry| {
            let r = &entry.receipt;
            AuditRecord {
                seq: r.seq,
                block: r.block,
                sender: r.sender.clone(),
                target: r.target,
                op: r.op.clone(),
                status: r.status.to_string(),
                events: r.events.clone(),
                nonce: entry.tx.nonce,
                payload: entry.tx.payload.clone(),
                signature: entry.tx.signature,
                block_digest: r.block.and_then(|b| blocks.get(b as usize)).map(|b| b.digest),
            }
        })
        .collect()
}

pub fn to_json_lines(records: &[AuditRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("audit records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_json_lines(text: &str) -> Result<Vec<AuditRecord>, AuditError> {
    let mut records: Vec<AuditRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: AuditRecord = serde_json::from_str(line).map_err(|e| AuditError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let expected = records.last().map_or(0, |p| p.seq + 1);
        if r.seq != expected {
            return Err(AuditError::Sequence { seq: r.seq });
        }
        records.push(r);
    }
    Ok(records)
}

/// Rebuilds the chain implied by a log: genesis, then one block per index up
/// to the highest sealed block, with empty blocks where no record landed.
pub fn rebuild_blocks(records: &[AuditRecord]) -> Result<Vec<Block>, AuditError> {
    let mut grouped: BTreeMap<u64, Vec<Transaction>> = BTreeMap::new();
    let mut last = 0;
    for r in records {
        let Some(b) = r.block else { continue };
        if b < last || b == 0 {
            return Err(AuditError::BlockOrder { seq: r.seq, block: b });
        }
        last = b;
        if r.block_digest.is_some() {
            grouped.entry(b).or_default().push(r.transaction());
        }
    }
    let top = grouped.keys().next_back().copied().unwrap_or(0);
    let mut blocks = vec![Block::genesis()];
    for index in 1..=top {
        let prev = blocks.last().expect("genesis").digest;
        blocks.push(Block::new(index, prev, grouped.remove(&index).unwrap_or_default()));
    }
    Ok(blocks)
}

/// Seqs of sealed records whose stored block digest disagrees with the
/// rebuilt chain.
pub fn digest_mismatches(records: &[AuditRecord], blocks: &[Block]) -> Vec<u64> {
    records
        .iter()
        .filter_map(|r| {
            let (b, d) = (r.block?, r.block_digest?);
            let ok = blocks.get(b as usize).is_some_and(|blk| blk.digest == d);
            (!ok).then_some(r.seq)
        })
        .collect()
}
