//! OracleSC: tracks outstanding data and actuation requests and forwards
//! callbacks from the trusted responder to the requesting contract.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{deliver_oracle_result, Abort, Caller, Contract, Env};
use crate::ledger::{Address, Digest, Encoder, Reason};
use crate::plan::{ActionId, AgentId};
use crate::world::ExecOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryKind {
    /// Read the listed predicates.
    Read,
    /// Invoke the device for `action`, then read the listed predicates.
    Actuate {
        action: ActionId,
        agent: AgentId,
        uri: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub requester: Address,
    pub predicates: Vec<String>,
    pub kind: QueryKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleState {
    pub responder: String,
    pub next_query: u64,
    pub pending: BTreeMap<u64, Query>,
}

impl OracleState {
    pub fn new(responder: String) -> Self {
        Self {
            responder,
            next_query: 0,
            pending: BTreeMap::new(),
        }
    }
}

/// Tag the responder attaches to a callback, standing in for an
/// authenticity proof over the reported data.
pub fn authenticity_tag(
    responder: &str,
    query: u64,
    values: &BTreeMap<String, bool>,
    outcome: Option<ExecOutcome>,
) -> Digest {
    let mut enc = Encoder::new(b"oracle-response");
    enc.str(responder).u64(query);
    for (p, v) in values {
        enc.str(p).bytes(&[u8::from(*v)]);
    }
    enc.str(match outcome {
        None => "",
        Some(ExecOutcome::Succeeded) => "succeeded",
        Some(ExecOutcome::Failed) => "failed",
    });
    enc.digest()
}

/// Registers a query on behalf of `requester` (a nested call from a contract).
pub fn query(
    env: &mut Env<'_>,
    oracle: Address,
    requester: Address,
    predicates: Vec<String>,
    kind: QueryKind,
) -> Result<u64, Abort> {
    if !env.is_deployed(&requester) {
        return Err(Abort::new(Reason::NoContract).at(oracle));
    }
    env.with(oracle, |c, _| {
        let Contract::Oracle(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(oracle));
        };
        let id = s.next_query;
        s.next_query += 1;
        s.pending.insert(
            id,
            Query {
                requester,
                predicates,
                kind,
            },
        );
        Ok(id)
    })
}

pub fn callback(
    env: &mut Env<'_>,
    target: Address,
    caller: &Caller,
    query: u64,
    values: BTreeMap<String, bool>,
    outcome: Option<ExecOutcome>,
    tag: Digest,
) -> Result<(), Abort> {
    let requester = env.with(target, |c, _| {
        let Contract::Oracle(s) = c else {
            return Err(Abort::new(Reason::WrongContract).at(target));
        };
        if *caller != Caller::Identity(s.responder.clone()) {
            return Err(Abort::new(Reason::Auth).at(target));
        }
        if tag != authenticity_tag(&s.responder, query, &values, outcome) {
            return Err(Abort::new(Reason::Tag).at(target));
        }
        let q = s
            .pending
            .remove(&query)
            .ok_or_else(|| Abort::new(Reason::UnknownQuery).at(target))?;
        Ok(q.requester)
    })?;
    deliver_oracle_result(env, requester, query, &values, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_binds_every_field() {
        let v = BTreeMap::from([("p".to_string(), true)]);
        let base = authenticity_tag("oracle", 1, &v, None);
        assert_ne!(base, authenticity_tag("other", 1, &v, None));
        assert_ne!(base, authenticity_tag("oracle", 2, &v, None));
        assert_ne!(base, authenticity_tag("oracle", 1, &v, Some(ExecOutcome::Succeeded)));
        let flipped = BTreeMap::from([("p".to_string(), false)]);
        assert_ne!(base, authenticity_tag("oracle", 1, &flipped, None));
    }
}
