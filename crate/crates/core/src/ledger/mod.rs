//! A single-validator, append-only, hash-chained ledger.
//!
//! Transactions are authenticated, nonce-checked, and executed atomically
//! against the contract state machines in arrival order. Every submission
//! gets a [`Receipt`] with a global sequence number; transactions that pass
//! authentication are grouped into blocks by [`Ledger::seal_block`].

pub mod audit;
pub mod crypto;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::contracts::{self, Abort, Call, Contract, Env};
pub use crypto::{Address, Digest, Encoder, Identity};

/// Why a transaction was rejected. Ledger-level checks and contract aborts
/// share one vocabulary so receipts stay uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    Auth,
    Nonce,
    NoContract,
    BadPayload,
    WrongContract,
    NoMapping,
    Remap,
    AlreadySet,
    InvalidPlan,
    UnknownAction,
    UnknownQuery,
    Duplicate,
    InFlight,
    Order,
    Precond,
    Effect,
    Actuation,
    FalseCompletion,
    Tag,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Auth => "auth",
            Reason::Nonce => "nonce",
            Reason::NoContract => "no-contract",
            Reason::BadPayload => "bad-payload",
            Reason::WrongContract => "wrong-contract",
            Reason::NoMapping => "no-mapping",
            Reason::Remap => "remap",
            Reason::AlreadySet => "already-set",
            Reason::InvalidPlan => "invalid-plan",
            Reason::UnknownAction => "unknown-action",
            Reason::UnknownQuery => "unknown-query",
            Reason::Duplicate => "duplicate",
            Reason::InFlight => "in-flight",
            Reason::Order => "order",
            Reason::Precond => "precond",
            Reason::Effect => "effect",
            Reason::Actuation => "actuation",
            Reason::FalseCompletion => "false-completion",
            Reason::Tag => "tag",
        }
    }

    pub fn parse(s: &str) -> Option<Reason> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: String,
    pub target: Address,
    pub op: String,
    /// JSON-encoded arguments.
    pub payload: String,
    pub nonce: u64,
    pub signature: Digest,
}

impl Transaction {
    pub fn signed(signer: &Identity, target: Address, call: &Call, nonce: u64) -> Self {
        let mut tx = Transaction {
            sender: signer.id().to_string(),
            target,
            op: call.op().to_string(),
            payload: call.payload(),
            nonce,
            signature: Digest::ZERO,
        };
        tx.signature = signer.sign(&tx.signing_bytes());
        tx
    }

    /// Canonical encoding of the signed fields, in declaration order.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(b"tx");
        enc.str(&self.sender)
            .bytes(&self.target.0)
            .str(&self.op)
            .str(&self.payload)
            .u64(self.nonce);
        enc.finish()
    }

    pub fn digest(&self) -> Digest {
        let mut enc = Encoder::new(b"tx-digest");
        enc.bytes(&self.signing_bytes()).bytes(&self.signature.0);
        enc.digest()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_digest: Digest,
    pub transactions: Vec<Transaction>,
    pub digest: Digest,
}

impl Block {
    pub fn compute_digest(index: u64, prev: &Digest, transactions: &[Transaction]) -> Digest {
        let mut enc = Encoder::new(b"block");
        enc.u64(index).bytes(&prev.0).u64(transactions.len() as u64);
        for tx in transactions {
            enc.bytes(&tx.digest().0);
        }
        enc.digest()
    }

    pub fn genesis() -> Self {
        Self::new(0, Digest::ZERO, Vec::new())
    }

    pub fn new(index: u64, prev_digest: Digest, transactions: Vec<Transaction>) -> Self {
        let digest = Self::compute_digest(index, &prev_digest, &transactions);
        Self {
            index,
            prev_digest,
            transactions,
            digest,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.digest == Self::compute_digest(self.index, &self.prev_digest, &self.transactions)
    }
}

/// Checks digests, indices, and back-links of a block sequence starting at
/// the fixed genesis block.
pub fn verify_blocks(blocks: &[Block]) -> bool {
    let Some(first) = blocks.first() else {
        return false;
    };
    if *first != Block::genesis() {
        return false;
    }
    blocks
        .windows(2)
        .all(|w| w[1].index == w[0].index + 1 && w[1].prev_digest == w[0].digest)
        && blocks.iter().all(Block::is_consistent)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub contract: Address,
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Accepted,
    Rejected { reason: Reason },
}

impl Status {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Status::Accepted)
    }

    pub fn reason(&self) -> Option<Reason> {
        match self {
            Status::Accepted => None,
            Status::Rejected { reason } => Some(*reason),
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Accepted => f.write_str("accepted"),
            Status::Rejected { reason } => write!(f, "rejected:{reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub seq: u64,
    pub tx_digest: Digest,
    pub sender: String,
    pub target: Address,
    pub op: String,
    /// Index of the block that carries the transaction; `None` when it
    /// failed authentication or the nonce check and was never included.
    pub block: Option<u64>,
    pub status: Status,
    pub events: Vec<Event>,
    pub output: Option<Value>,
}

impl Receipt {
    pub fn is_accepted(&self) -> bool {
        self.status.is_accepted()
    }

    pub fn event(&self, name: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub tx: Transaction,
    pub receipt: Receipt,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventFilter {
    pub contract: Option<Address>,
    pub name: Option<String>,
}

impl EventFilter {
    pub fn named(name: &str) -> Self {
        Self {
            contract: None,
            name: Some(name.to_string()),
        }
    }

    fn matches(&self, e: &Event) -> bool {
        self.contract.is_none_or(|c| c == e.contract) && self.name.as_deref().is_none_or(|n| n == e.name)
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    keys: BTreeMap<String, Digest>,
    last_nonce: BTreeMap<String, u64>,
    contracts: BTreeMap<Address, Contract>,
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    log: Vec<LogEntry>,
    next_event_seq: u64,
    check_signatures: bool,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self {
            keys: BTreeMap::new(),
            last_nonce: BTreeMap::new(),
            contracts: BTreeMap::new(),
            blocks: vec![Block::genesis()],
            pending: Vec::new(),
            log: Vec::new(),
            next_event_seq: 0,
            check_signatures: true,
        }
    }

    /// A ledger that skips signature checks, for replaying an exported log
    /// whose signing keys are not available.
    pub fn for_replay() -> Self {
        Self {
            check_signatures: false,
            ..Self::new()
        }
    }

    pub fn register_identity(&mut self, identity: &Identity) {
        self.keys.insert(identity.id().to_string(), identity.key());
    }

    pub fn is_registered(&self, id: &str) -> bool {
        self.keys.contains_key(id)
    }

    /// The next nonce `sender` should use.
    pub fn next_nonce(&self, sender: &str) -> u64 {
        self.last_nonce.get(sender).map_or(0, |n| n + 1)
    }

    pub fn submit(&mut self, tx: Transaction) -> Receipt {
        let seq = self.log.len() as u64;
        let mut receipt = Receipt {
            seq,
            tx_digest: tx.digest(),
            sender: tx.sender.clone(),
            target: tx.target,
            op: tx.op.clone(),
            block: None,
            status: Status::Accepted,
            events: Vec::new(),
            output: None,
        };

        if let Some(reason) = self.admit(&tx) {
            receipt.status = Status::Rejected { reason };
            self.log.push(LogEntry {
                tx,
                receipt: receipt.clone(),
            });
            return receipt;
        }
        self.last_nonce.insert(tx.sender.clone(), tx.nonce);
        receipt.block = Some(self.blocks.len() as u64);

        let snapshot = self.contracts.clone();
        let mut env = Env::new(&mut self.contracts, tx.sender.clone());
        let result = match Call::decode(&tx.op, &tx.payload) {
            Err(_) => Err(Abort::new(Reason::BadPayload)),
            Ok(call) => contracts::execute_transaction(&mut env, tx.target, &tx.sender, tx.nonce, call),
        };
        match result {
            Ok(output) => {
                let raw = env.into_events();
                receipt.events = raw
                    .into_iter()
                    .map(|(contract, name, args)| self.event(contract, name, args))
                    .collect();
                receipt.output = output;
            }
            Err(abort) => {
                drop(env);
                self.contracts = snapshot;
                receipt.status = Status::Rejected { reason: abort.reason };
                if let Some(action) = &abort.action {
                    let args = vec![
                        action.to_string(),
                        abort.reason.to_string(),
                        abort.initiator.clone().unwrap_or_default(),
                    ];
                    let ev = self.event(
                        abort.contract.unwrap_or(tx.target),
                        contracts::EV_ROLLBACK.to_string(),
                        args,
                    );
                    receipt.events.push(ev);
                }
            }
        }
        self.pending.push(tx.clone());
        self.log.push(LogEntry {
            tx,
            receipt: receipt.clone(),
        });
        receipt
    }

    fn admit(&self, tx: &Transaction) -> Option<Reason> {
        if self.check_signatures {
            let Some(key) = self.keys.get(&tx.sender) else {
                return Some(Reason::Auth);
            };
            if crypto::keyed_digest(key, &tx.signing_bytes()) != tx.signature {
                return Some(Reason::Auth);
            }
        }
        if self.last_nonce.get(&tx.sender).is_some_and(|last| tx.nonce <= *last) {
            return Some(Reason::Nonce);
        }
        if tx.target != Address::ZERO && !self.contracts.contains_key(&tx.target) {
            return Some(Reason::NoContract);
        }
        None
    }

    fn event(&mut self, contract: Address, name: String, args: Vec<String>) -> Event {
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        Event {
            seq,
            contract,
            name,
            args,
        }
    }

    /// Appends a block holding every transaction admitted since the last seal.
    pub fn seal_block(&mut self) -> &Block {
        let prev = self.blocks.last().expect("genesis");
        let block = Block::new(prev.index + 1, prev.digest, std::mem::take(&mut self.pending));
        self.blocks.push(block);
        self.blocks.last().expect("just pushed")
    }

    pub fn verify_chain(&self) -> bool {
        verify_blocks(&self.blocks)
    }

    /// Matching events in block order, then intra-block order.
    pub fn query_events(&self, filter: &EventFilter) -> Vec<Event> {
        self.log
            .iter()
            .flat_map(|entry| entry.receipt.events.iter())
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Mutable access for tamper experiments.
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn receipts(&self) -> impl Iterator<Item = &Receipt> {
        self.log.iter().map(|e| &e.receipt)
    }

    pub fn contract(&self, at: &Address) -> Option<&Contract> {
        self.contracts.get(at)
    }

    pub fn contracts(&self) -> &BTreeMap<Address, Contract> {
        &self.contracts
    }
}

/// A named identity together with its nonce counter.
#[derive(Debug, Clone)]
pub struct Signer {
    identity: Identity,
    next_nonce: u64,
}

impl Signer {
    pub fn new(identity: Identity) -> Self {
        Self {
            identity,
            next_nonce: 0,
        }
    }

    pub fn id(&self) -> &str {
        self.identity.id()
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn sign(&mut self, target: Address, call: &Call) -> Transaction {
        let tx = Transaction::signed(&self.identity, target, call, self.next_nonce);
        self.next_nonce += 1;
        tx
    }

    /// Signs and submits in one step.
    pub fn send(&mut self, ledger: &mut Ledger, target: Address, call: &Call) -> Receipt {
        let tx = self.sign(target, call);
        ledger.submit(tx)
    }

    /// Deploys a contract and returns its address.
    pub fn deploy(&mut self, ledger: &mut Ledger, init: contracts::ContractInit) -> Result<Address, Box<Receipt>> {
        let nonce = self.next_nonce;
        let receipt = self.send(ledger, Address::ZERO, &Call::Deploy(init));
        if receipt.is_accepted() {
            Ok(Address::derive(self.id(), nonce))
        } else {
            Err(Box::new(receipt))
        }
    }
}
