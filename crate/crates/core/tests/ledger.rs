use proptest::prelude::*;

use contractplan::contracts::pipeline::ActionRecord;
use contractplan::contracts::{Call, ContractInit, EV_DEPLOYED};
use contractplan::ledger::audit::{
    audit_records, digest_mismatches, parse_json_lines, rebuild_blocks, to_json_lines, AuditError,
};
use contractplan::ledger::{verify_blocks, Address, Block, EventFilter, Identity, Ledger, Reason, Signer, Status};
use contractplan::plan::{ActionId, ActionSpec, AgentId, Literal};

fn signer(ledger: &mut Ledger, id: &str) -> Signer {
    let identity = Identity::derive(id, 11);
    ledger.register_identity(&identity);
    Signer::new(identity)
}

fn record(id: &str) -> ActionRecord {
    ActionRecord::from_spec(&ActionSpec {
        id: ActionId::from(id),
        agent: AgentId::from("A"),
        precond: vec![],
        effect: vec![Literal::pos("p")],
    })
}

/// Register plus one Act contract hosting `x` and `y`.
fn setup() -> (Ledger, Signer, Address, Address) {
    let mut ledger = Ledger::new();
    let mut deployer = signer(&mut ledger, "deployer");
    let oracle = deployer
        .deploy(
            &mut ledger,
            ContractInit::Oracle {
                responder: "oracle".into(),
            },
        )
        .unwrap();
    let act = deployer
        .deploy(
            &mut ledger,
            ContractInit::Act {
                oracle,
                actions: vec![record("x"), record("y")],
            },
        )
        .unwrap();
    let register = deployer.deploy(&mut ledger, ContractInit::Register).unwrap();
    (ledger, deployer, register, act)
}

fn mapping(ledger: &Ledger, register: Address) -> Vec<ActionId> {
    ledger
        .contract(&register)
        .and_then(|c| c.as_register())
        .map(|r| r.action_to_act.keys().cloned().collect())
        .unwrap_or_default()
}

#[test]
fn accepted_transactions_land_in_the_next_block() {
    let (mut ledger, mut deployer, register, act) = setup();
    let r = deployer.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["x".into()],
            act,
        },
    );
    assert!(r.is_accepted());
    assert_eq!(r.block, Some(1));
    assert_eq!(ledger.pending().len(), 4);
    let block = ledger.seal_block().clone();
    assert_eq!(block.index, 1);
    assert_eq!(block.transactions.len(), 4);
    assert!(ledger.pending().is_empty());
    assert!(ledger.verify_chain());
    let empty = ledger.seal_block().clone();
    assert!(empty.transactions.is_empty());
    assert_eq!(empty.prev_digest, block.digest);
    assert!(ledger.verify_chain());
}

#[test]
fn aborted_transaction_rolls_back_every_write() {
    let (mut ledger, mut deployer, register, act) = setup();
    assert!(deployer
        .send(
            &mut ledger,
            register,
            &Call::SetAct {
                actions: vec!["x".into()],
                act
            }
        )
        .is_accepted());
    let before = ledger.contracts().clone();
    // `y` alone would be fine; `x` is already mapped so the whole call aborts.
    let r = deployer.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["y".into(), "x".into()],
            act,
        },
    );
    assert_eq!(r.status, Status::Rejected { reason: Reason::Remap });
    assert_eq!(ledger.contracts(), &before);
    assert_eq!(mapping(&ledger, register), vec![ActionId::from("x")]);
    // Rejected-by-contract transactions are still ordered on the chain.
    assert_eq!(r.block, Some(1));
}

#[test]
fn bad_signature_and_replayed_nonce_never_reach_a_block() {
    let (mut ledger, mut deployer, register, act) = setup();
    let call = Call::SetAct {
        actions: vec!["x".into()],
        act,
    };

    let mut forged = deployer.sign(register, &call);
    forged.sender = "mallory".into();
    let r = ledger.submit(forged);
    assert_eq!(r.status, Status::Rejected { reason: Reason::Auth });
    assert_eq!(r.block, None);

    let imposter = Identity::derive("deployer", 999);
    let r = ledger.submit(contractplan::ledger::Transaction::signed(
        &imposter, register, &call, 50,
    ));
    assert_eq!(r.status, Status::Rejected { reason: Reason::Auth });

    let tx = deployer.sign(register, &call);
    assert!(ledger.submit(tx.clone()).is_accepted());
    let r = ledger.submit(tx);
    assert_eq!(r.status, Status::Rejected { reason: Reason::Nonce });
    assert_eq!(r.block, None);
    assert_eq!(ledger.pending().len(), 4);
}

#[test]
fn only_the_deployer_may_map_actions() {
    let (mut ledger, _, register, act) = setup();
    let mut other = signer(&mut ledger, "A");
    let r = other.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["x".into()],
            act,
        },
    );
    assert_eq!(r.status.reason(), Some(Reason::Auth));
    assert!(mapping(&ledger, register).is_empty());
}

#[test]
fn calls_to_missing_contracts_are_rejected() {
    let (mut ledger, mut deployer, _, _) = setup();
    let r = deployer.send(
        &mut ledger,
        Address::derive("nobody", 0),
        &Call::GetAct { action: "x".into() },
    );
    assert_eq!(r.status.reason(), Some(Reason::NoContract));
}

#[test]
fn events_are_totally_ordered_and_filterable() {
    let (mut ledger, mut deployer, register, act) = setup();
    deployer.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["x".into()],
            act,
        },
    );
    ledger.seal_block();
    deployer.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["y".into()],
            act,
        },
    );
    let all = ledger.query_events(&EventFilter::default());
    assert!(all.windows(2).all(|w| w[0].seq < w[1].seq));
    let deployed = ledger.query_events(&EventFilter::named(EV_DEPLOYED));
    assert_eq!(deployed.len(), 2);
    assert!(deployed
        .iter()
        .all(|e| e.contract == register && e.args[0] == act.to_string()));
    let by_contract = ledger.query_events(&EventFilter {
        contract: Some(act),
        name: None,
    });
    assert!(by_contract.is_empty());
}

#[test]
fn identical_inputs_give_identical_chains() {
    let build = || {
        let (mut ledger, mut deployer, register, act) = setup();
        deployer.send(
            &mut ledger,
            register,
            &Call::SetAct {
                actions: vec!["x".into(), "y".into()],
                act,
            },
        );
        ledger.seal_block();
        ledger.blocks().to_vec()
    };
    assert_eq!(build(), build());
}

#[test]
fn tampering_is_detected() {
    let (mut ledger, mut deployer, register, act) = setup();
    deployer.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["x".into()],
            act,
        },
    );
    ledger.seal_block();
    ledger.seal_block();
    assert!(ledger.verify_chain());

    let original = ledger.blocks().to_vec();
    ledger.blocks_mut()[1].transactions[0].payload.push(' ');
    assert!(!ledger.verify_chain());

    // Recomputing the tampered block's digest breaks the link to its successor.
    let b = &ledger.blocks()[1];
    let fixed = Block::new(b.index, b.prev_digest, b.transactions.clone());
    ledger.blocks_mut()[1] = fixed;
    assert!(!ledger.verify_chain());

    *ledger.blocks_mut() = original.clone();
    ledger.blocks_mut().swap(1, 2);
    assert!(!ledger.verify_chain());

    *ledger.blocks_mut() = original;
    ledger.blocks_mut().remove(1);
    assert!(!ledger.verify_chain());
    assert!(!verify_blocks(&[]));
}

#[test]
fn audit_log_round_trips_and_rebuilds_the_chain() {
    let (mut ledger, mut deployer, register, act) = setup();
    deployer.send(
        &mut ledger,
        register,
        &Call::SetAct {
            actions: vec!["x".into()],
            act,
        },
    );
    ledger.seal_block();
    ledger.seal_block();
    deployer.send(&mut ledger, register, &Call::GetAct { action: "x".into() });
    ledger.seal_block();

    let records = audit_records(&ledger);
    let text = to_json_lines(&records);
    let parsed = parse_json_lines(&text).unwrap();
    assert_eq!(parsed, records);
    let blocks = rebuild_blocks(&parsed).unwrap();
    assert_eq!(blocks, ledger.blocks());
    assert!(digest_mismatches(&parsed, &blocks).is_empty());

    let mut edited = parsed.clone();
    edited[0].payload = edited[0].payload.replace("oracle", "0racle");
    let rebuilt = rebuild_blocks(&edited).unwrap();
    assert_eq!(digest_mismatches(&edited, &rebuilt), vec![0, 1, 2, 3, 4]);

    let dropped = text.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(parse_json_lines(&dropped), Err(AuditError::Sequence { seq: 1 }));
}

proptest! {
    /// Any prefix of sealed blocks verifies; the block count grows by one
    /// per seal regardless of how many transactions were pending.
    #[test]
    fn chain_grows_one_block_per_seal(batches in proptest::collection::vec(0usize..4, 1..6)) {
        let (mut ledger, mut deployer, register, _) = setup();
        for (i, n) in batches.iter().enumerate() {
            for j in 0..*n {
                deployer.send(&mut ledger, register, &Call::GetAct { action: ActionId::new(format!("{i}-{j}")) });
            }
            let before = ledger.blocks().len();
            let sealed = ledger.seal_block().transactions.len();
            prop_assert_eq!(ledger.blocks().len(), before + 1);
            prop_assert!(sealed >= *n);
        }
        prop_assert!(ledger.verify_chain());
        for k in 1..=ledger.blocks().len() {
            prop_assert!(verify_blocks(&ledger.blocks()[..k]));
        }
    }
}
