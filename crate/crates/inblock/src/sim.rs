//! The simulation loop: a single deterministic block producer on a simulated
//! clock, wiring the mempool, the chain, account balances, and the registry
//! contract together.
//!
//! Nothing here reads a wall clock or an OS random source; given the same
//! genesis, the same submissions, and the same clock advances, two runs
//! produce byte-identical chains, states, and event logs.

use crate::amount::Amount;
use crate::ledger::{
    Account, Chain, ConfirmationStatus, Hash32, Mempool, Payload, SubmitError, Transaction,
};
use crate::registry::{FeeDestination, RegistryConfig, RegistryState};
use crate::sig::{AccountId, Keypair, SchemeKind};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use thiserror::Error;

/// Event log schema version, stamped on every record.
pub const EVENT_SCHEMA: u32 = 1;

/// Simulation parameters. Defaults model a public smart-contract chain of
/// the late 2010s: 17-second blocks, about two minutes from submission to
/// inclusion, and twelve confirming blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Timestamp of the genesis block and initial simulated clock.
    pub genesis_timestamp: u64,
    /// Seconds between consecutive blocks.
    pub block_interval: u64,
    /// Seconds a submitted transaction waits before it may be included
    /// (propagation plus queueing, beyond the current block's spacing).
    pub inclusion_delay: u64,
    /// Blocks that must sit on top of an inclusion before it is final.
    pub confirmation_depth: u64,
    /// Capacity of one block.
    pub max_txs_per_block: usize,
    /// Signature scheme every transaction must verify under.
    pub scheme: SchemeKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            genesis_timestamp: 1_600_000_000,
            block_interval: 17,
            inclusion_delay: 120,
            confirmation_depth: 12,
            max_txs_per_block: 200,
            scheme: SchemeKind::Ed25519,
        }
    }
}

/// Closed-form seconds from submitting an allocation request to its
/// confirmation: the inclusion wait, the block that carries it, and `depth`
/// confirming blocks.
pub fn end_to_end_allocation_latency(
    inclusion_delay: u64,
    block_interval: u64,
    depth: u64,
) -> u64 {
    inclusion_delay + block_interval + depth * block_interval
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("next block allowed at {earliest}, simulated clock is {clock}")]
    TooSoon { earliest: u64, clock: u64 },
    #[error("account already exists")]
    DuplicateAccount,
}

/// One line of the event log: what a block did to the registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub schema: u32,
    pub block_height: u64,
    /// Hex transaction hash; empty for block-level events such as sweeps.
    pub tx_hash: String,
    /// Payload kind, or "expire_sweep".
    pub kind: String,
    /// "ok" or "rejected:<ErrorCode>".
    pub outcome: String,
    pub details: serde_json::Value,
}

/// The whole simulated world: clock, accounts, chain, mempool, and the
/// registry contract state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    config: SimConfig,
    clock: u64,
    accounts: BTreeMap<AccountId, Account>,
    registry_account: AccountId,
    registry: RegistryState,
    chain: Chain,
    mempool: Mempool,
    submit_times: BTreeMap<Hash32, u64>,
    /// Run log; not part of persisted state.
    #[serde(skip)]
    events: Vec<EventRecord>,
}

impl Simulator {
    /// A fresh world at the genesis timestamp. The registry contract lives
    /// at `registry_account`, which is created with a zero balance.
    pub fn new(
        config: SimConfig,
        registry_config: RegistryConfig,
        registry_account: AccountId,
    ) -> Self {
        let clock = config.genesis_timestamp;
        let registry = RegistryState::new(registry_config, clock);
        let chain = Chain::new(clock);
        let mut accounts = BTreeMap::new();
        accounts.insert(
            registry_account,
            Account {
                id: registry_account,
                balance: Amount::zero(),
                nonce: 0,
            },
        );
        Simulator {
            config,
            clock,
            accounts,
            registry_account,
            registry,
            chain,
            mempool: Mempool::new(),
            submit_times: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn registry_account(&self) -> AccountId {
        self.registry_account
    }

    pub fn registry(&self) -> &RegistryState {
        &self.registry
    }

    /// Direct registry access for scenario plumbing (e.g. seeding genesis
    /// oracle samples before any block exists).
    pub fn registry_mut(&mut self) -> &mut RegistryState {
        &mut self.registry
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    /// Mutable chain access for integrity experiments.
    pub fn chain_mut(&mut self) -> &mut Chain {
        &mut self.chain
    }

    pub fn accounts(&self) -> &BTreeMap<AccountId, Account> {
        &self.accounts
    }

    pub fn account(&self, id: &AccountId) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn balance(&self, id: &AccountId) -> Amount {
        self.accounts
            .get(id)
            .map(|a| a.balance.clone())
            .unwrap_or_else(Amount::zero)
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    /// The event log as JSON lines.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn pending_count(&self) -> usize {
        self.mempool.len()
    }

    pub fn create_account(&mut self, id: AccountId, balance: Amount) -> Result<(), SimError> {
        if self.accounts.contains_key(&id) {
            return Err(SimError::DuplicateAccount);
        }
        self.accounts.insert(
            id,
            Account {
                id,
                balance,
                nonce: 0,
            },
        );
        Ok(())
    }

    pub fn advance_clock(&mut self, seconds: u64) {
        self.clock += seconds;
    }

    /// Earliest simulated time the next block may be produced.
    pub fn next_block_time(&self) -> u64 {
        self.chain.tip().timestamp + self.config.block_interval
    }

    /// The nonce a new transaction from this account must carry, counting
    /// transactions still in the mempool.
    pub fn next_nonce(&self, id: &AccountId) -> u64 {
        let confirmed = self.accounts.get(id).map(|a| a.nonce).unwrap_or(0);
        confirmed + self.mempool.pending_from(id) + 1
    }

    /// Queues a signed transaction; the submission time (for the inclusion
    /// delay) is the current simulated clock.
    pub fn submit(&mut self, tx: Transaction) -> Result<Hash32, SubmitError> {
        let hash = self.mempool.submit(&self.accounts, self.config.scheme, tx)?;
        self.submit_times.insert(hash, self.clock);
        Ok(hash)
    }

    /// Signs and queues a registry action: `value` goes to the registry
    /// account alongside the payload. The nonce is chosen automatically.
    pub fn submit_to_registry(
        &mut self,
        keypair: &Keypair,
        value: Amount,
        tip: u64,
        payload: Payload,
    ) -> Result<Hash32, SubmitError> {
        let nonce = self.next_nonce(&keypair.account_id());
        let tx = Transaction::signed(keypair, self.registry_account, value, tip, nonce, payload);
        self.submit(tx)
    }

    /// Signs and queues a plain transfer to a peer.
    pub fn submit_transfer(
        &mut self,
        keypair: &Keypair,
        to: AccountId,
        value: Amount,
        tip: u64,
    ) -> Result<Hash32, SubmitError> {
        let nonce = self.next_nonce(&keypair.account_id());
        let tx = Transaction::signed(keypair, to, value, tip, nonce, Payload::Transfer);
        self.submit(tx)
    }

    /// Produces one block at the current clock, which must have advanced at
    /// least one block interval past the tip. Drains eligible transactions
    /// in priority order, applies their value transfers, executes registry
    /// payloads with the block timestamp as `now`, sweeps expirations, and
    /// appends the block. Returns the new height.
    pub fn produce_block(&mut self) -> Result<u64, SimError> {
        let timestamp = self.clock;
        let earliest = self.next_block_time();
        if timestamp < earliest {
            return Err(SimError::TooSoon {
                earliest,
                clock: timestamp,
            });
        }
        // A transaction needs its inclusion delay plus one block interval
        // to elapse before it can appear in a block.
        let horizon = self.config.inclusion_delay + self.config.block_interval;
        let submit_times = &self.submit_times;
        let txs = self.mempool.drain_where(self.config.max_txs_per_block, |tx| {
            match submit_times.get(&tx.hash()) {
                Some(submitted) => submitted + horizon <= timestamp,
                None => true,
            }
        });
        let height = self.chain.tip().height + 1;
        for tx in &txs {
            let event = self.apply_transaction(tx, timestamp, height);
            self.events.push(event);
        }
        // Reclaim anything whose expiration lies strictly before this block.
        let reclaimed = self.registry.expire_sweep(timestamp);
        if !reclaimed.is_empty() {
            self.events.push(EventRecord {
                schema: EVENT_SCHEMA,
                block_height: height,
                tx_hash: String::new(),
                kind: "expire_sweep".to_string(),
                outcome: "ok".to_string(),
                details: json!({
                    "reclaimed": reclaimed.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                }),
            });
        }
        self.chain
            .append_block(timestamp, txs)
            .expect("clock sits past the tip");
        Ok(height)
    }

    /// Produces `count` blocks, advancing the clock to each block's earliest
    /// legal time when it lags. Returns the final height.
    pub fn produce_blocks(&mut self, count: u64) -> Result<u64, SimError> {
        let mut height = self.chain.height();
        for _ in 0..count {
            let earliest = self.next_block_time();
            if self.clock < earliest {
                self.clock = earliest;
            }
            height = self.produce_block()?;
        }
        Ok(height)
    }

    pub fn confirmation_status(&self, hash: Hash32) -> ConfirmationStatus {
        self.chain
            .confirmation_status(hash, self.config.confirmation_depth)
    }

    /// Seconds from a transaction's submission to the timestamp of the block
    /// that made it confirmed. `None` until that block exists.
    pub fn measured_latency(&self, hash: Hash32) -> Option<u64> {
        let (height, _) = self.chain.find_transaction(hash)?;
        let confirming = self.chain.block(height + self.config.confirmation_depth)?;
        let submitted = *self.submit_times.get(&hash)?;
        Some(confirming.timestamp - submitted)
    }

    /// Sum of every account balance. Transfers only move value, so this is
    /// constant across block production.
    pub fn total_value(&self) -> Amount {
        self.accounts.values().map(|a| a.balance.clone()).sum()
    }

    fn apply_transaction(&mut self, tx: &Transaction, now: u64, height: u64) -> EventRecord {
        let hash = tx.hash();
        // Value moves unconditionally: a rejected registry payload still
        // costs its payment, exactly like a failed contract call costing
        // its fee.
        let sender = self
            .accounts
            .get_mut(&tx.from)
            .expect("admission verified the sender exists");
        debug_assert_eq!(tx.nonce, sender.nonce + 1, "mempool preserves nonce order");
        sender.nonce = tx.nonce;
        sender.balance -= &tx.value;
        debug_assert!(
            !sender.balance.is_negative(),
            "admission reserved the balance"
        );
        self.accounts
            .entry(tx.to)
            .or_insert_with(|| Account {
                id: tx.to,
                balance: Amount::zero(),
                nonce: 0,
            })
            .balance += &tx.value;

        let (outcome, details) = if matches!(tx.payload, Payload::Transfer) {
            (
                "ok".to_string(),
                json!({ "to": tx.to.to_hex(), "value": tx.value.to_string() }),
            )
        } else if tx.to != self.registry_account {
            // A registry payload addressed to a peer account is just a
            // transfer; the contract never sees it.
            (
                "rejected:WrongRecipient".to_string(),
                json!({ "error": "WrongRecipient", "to": tx.to.to_hex() }),
            )
        } else {
            let result = self.dispatch(tx, now);
            self.forward_fee(&tx.value);
            match result {
                Ok(details) => ("ok".to_string(), details),
                Err(err) => {
                    let code = err.code();
                    self.registry.accounting.rejected_crypto += &tx.value;
                    (format!("rejected:{code}"), json!({ "error": code }))
                }
            }
        };
        EventRecord {
            schema: EVENT_SCHEMA,
            block_height: height,
            tx_hash: hash.to_hex(),
            kind: tx.payload.kind().to_string(),
            outcome,
            details,
        }
    }

    /// Runs a registry payload against the contract state, returning the
    /// event details on success.
    fn dispatch(
        &mut self,
        tx: &Transaction,
        now: u64,
    ) -> Result<serde_json::Value, crate::registry::RegistryError> {
        match &tx.payload {
            Payload::Transfer => unreachable!("plain transfers are handled by the caller"),
            Payload::AllocationRequest {
                length,
                growth_proof,
            } => {
                let rec = self.registry.process_allocation_request(
                    tx.from,
                    *length,
                    &tx.value,
                    *growth_proof,
                    now,
                )?;
                Ok(json!({
                    "allocation": rec.id,
                    "prefix": rec.prefix.to_string(),
                    "aggregatable_with": rec.aggregatable_with.map(|p| p.to_string()),
                    "expiration": rec.expiration,
                }))
            }
            Payload::Renewal { allocation } => {
                let rec = self
                    .registry
                    .process_renewal(tx.from, *allocation, &tx.value, now)?;
                Ok(json!({ "allocation": rec.id, "expiration": rec.expiration }))
            }
            Payload::MetadataUpdate {
                allocation,
                pointer,
            } => {
                let rec = self
                    .registry
                    .update_metadata(tx.from, *allocation, pointer, now)?;
                Ok(json!({ "allocation": rec.id, "pointer": rec.metadata_pointer }))
            }
            Payload::RoaRegister { allocation, roa } => {
                self.registry.register_roa(tx.from, *allocation, *roa, now)?;
                Ok(json!({
                    "allocation": allocation,
                    "prefix": roa.prefix.to_string(),
                    "origin_asn": roa.origin_asn,
                    "max_length": roa.max_length,
                }))
            }
            Payload::RoaRevoke { allocation, roa } => {
                self.registry.revoke_roa(tx.from, *allocation, *roa, now)?;
                Ok(json!({
                    "allocation": allocation,
                    "prefix": roa.prefix.to_string(),
                    "origin_asn": roa.origin_asn,
                }))
            }
            Payload::GovernanceResume => {
                self.registry.governance_resume(tx.from)?;
                Ok(json!({}))
            }
            Payload::OracleUpdate { sample } => {
                self.registry.apply_oracle_update(tx.from, sample.clone())?;
                Ok(json!({
                    "kind": sample.kind,
                    "value": sample.value.to_string(),
                    "as_of": sample.as_of,
                }))
            }
        }
    }

    /// Applies the configured fee destination to value the contract account
    /// just received. "Burn" parks it at the all-zeros account id, which no
    /// key can sign for — out of circulation, but still counted, so value
    /// conservation stays checkable.
    fn forward_fee(&mut self, value: &Amount) {
        if value.is_zero() {
            return;
        }
        let sink = match &self.registry.config.fee_destination {
            FeeDestination::Retain => return,
            FeeDestination::Burn => AccountId::zero(),
            FeeDestination::Beneficiary(id) => *id,
        };
        if sink == self.registry_account {
            return;
        }
        let contract = self
            .accounts
            .get_mut(&self.registry_account)
            .expect("contract account exists");
        contract.balance -= value;
        self.accounts
            .entry(sink)
            .or_insert_with(|| Account {
                id: sink,
                balance: Amount::zero(),
                nonce: 0,
            })
            .balance += value;
    }
}
