//! Declarative experiment scripts: a JSON file defines the genesis world
//! (pool, accounts, oracle samples, config overrides) and an ordered list of
//! steps — advance the clock, submit transactions, produce blocks, assert
//! expectations. Running the same scenario twice yields byte-identical
//! chains, event logs, and snapshots: all keys derive from the scenario
//! seed, and time only moves when a step says so.
//!
//! ```json
//! {
//!   "name": "one_allocation",
//!   "genesis": {
//!     "accounts": [
//!       { "name": "registry", "roles": ["registry"] },
//!       { "name": "alice", "balance": "1000" }
//!     ],
//!     "oracle_samples": [
//!       { "kind": "exchange_rate", "value": "200", "as_of": 1600000000, "source_id": "genesis" }
//!     ]
//!   },
//!   "steps": [
//!     { "op": "submit", "label": "first", "from": "alice", "value": "15",
//!       "action": { "kind": "request_allocation", "length": 32 } },
//!     { "op": "advance_clock", "seconds": 120 },
//!     { "op": "produce_blocks", "count": 14 },
//!     { "op": "expect", "expect": { "kind": "allocated", "step": "first" } }
//!   ]
//! }
//! ```

use crate::amount::Amount;
use crate::ledger::{Hash32, Payload};
use crate::oracle::{FixtureProvider, OracleSample};
use crate::prefix::Ipv6Prefix;
use crate::registry::{RegistryConfig, RoaRecord};
use crate::sig::{AccountId, Keypair};
use crate::sim::{SimConfig, Simulator};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    ScenarioParseError(String),
    #[error("scenario is not runnable: {0}")]
    Invalid(String),
    #[error("step {step}: {detail}")]
    StepFailed { step: usize, detail: String },
    #[error("step {step}: expectation failed: {detail}")]
    ExpectationFailed { step: usize, detail: String },
}

/// A complete experiment definition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seeds account key derivation; two scenarios with the same seed and
    /// account names share key material.
    #[serde(default)]
    pub seed: u64,
    pub genesis: Genesis,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genesis {
    /// Partial [`RegistryConfig`] in JSON form, overlaid on the defaults
    /// (and on any host-supplied overrides).
    #[serde(default)]
    pub registry: Value,
    /// Partial [`SimConfig`], same overlay rules.
    #[serde(default)]
    pub sim: Value,
    #[serde(default)]
    pub accounts: Vec<GenesisAccount>,
    /// Oracle samples stored before the first block.
    #[serde(default)]
    pub oracle_samples: Vec<OracleSample>,
    /// Optional oracle fixture file (JSON lines, resolved relative to the
    /// scenario file); every sample in it is stored at genesis, in order.
    #[serde(default)]
    pub oracle_fixture: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisAccount {
    pub name: String,
    #[serde(default)]
    pub balance: Amount,
    #[serde(default)]
    pub roles: Vec<Role>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The account the contract lives at. Exactly one per scenario.
    Registry,
    /// May publish oracle updates.
    Oracle,
    /// May resume a paused registry.
    Supervisor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    AdvanceClock {
        seconds: u64,
    },
    ProduceBlocks {
        count: u64,
    },
    Submit {
        /// Name for later expectations to reference.
        #[serde(default)]
        label: Option<String>,
        from: String,
        #[serde(default)]
        value: Amount,
        #[serde(default)]
        tip: u64,
        action: Action,
    },
    Expect {
        expect: Expectation,
    },
    /// Runs the inner step `count` times. The inner step may not carry a
    /// label (it would not be unique).
    Repeat {
        count: u64,
        step: Box<Step>,
    },
}

/// What a submitted transaction asks for, with names and labels in place of
/// raw ids.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Transfer {
        to: String,
    },
    RequestAllocation {
        length: u8,
        /// Label of an earlier allocation to grow next to.
        #[serde(default)]
        grow_from: Option<String>,
    },
    Renew {
        allocation: String,
    },
    SetMetadata {
        allocation: String,
        pointer: String,
    },
    RegisterRoa {
        allocation: String,
        prefix: Ipv6Prefix,
        origin_asn: u32,
        max_length: u8,
    },
    RevokeRoa {
        allocation: String,
        prefix: Ipv6Prefix,
        origin_asn: u32,
        max_length: u8,
    },
    Resume,
    OracleUpdate {
        sample: OracleSample,
    },
}

/// An assertion over the current world, checked the moment its step runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    /// The labeled submission produced an allocation (optionally with this
    /// exact prefix / aggregatability).
    Allocated {
        step: String,
        #[serde(default)]
        prefix: Option<Ipv6Prefix>,
        #[serde(default)]
        aggregatable: Option<bool>,
    },
    /// The labeled submission's payload was rejected with this error code.
    Rejected {
        step: String,
        error: String,
    },
    Paused {
        value: bool,
    },
    /// The labeled submission is confirmed and its measured submission-to-
    /// confirmation latency is exactly this many seconds.
    ConfirmedLatency {
        step: String,
        seconds: u64,
    },
    /// This holder's allocations aggregate to exactly these routes.
    Routes {
        holder: String,
        routes: Vec<Ipv6Prefix>,
    },
    ActiveAllocations {
        count: usize,
    },
    /// The pool currently holds this exact prefix free.
    FreePrefix {
        prefix: Ipv6Prefix,
    },
    Balance {
        account: String,
        value: Amount,
    },
}

/// A labeled submission, resolved as far as the run got.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedLabel {
    pub tx_hash: Hash32,
    /// The allocation id the transaction created or acted on, once its
    /// block was produced.
    pub allocation: Option<u64>,
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub simulator: Simulator,
    pub labels: BTreeMap<String, ResolvedLabel>,
    pub accounts_by_name: BTreeMap<String, AccountId>,
}

impl ScenarioOutcome {
    /// Per-holder aggregated routes, with genesis account names where the
    /// holder is a named account.
    pub fn routes_report(&self) -> BTreeMap<String, Vec<String>> {
        let names: BTreeMap<AccountId, &String> = self
            .accounts_by_name
            .iter()
            .map(|(name, id)| (*id, name))
            .collect();
        self.simulator
            .registry()
            .routes()
            .into_iter()
            .map(|(holder, routes)| {
                let key = names
                    .get(&holder)
                    .map(|n| (*n).clone())
                    .unwrap_or_else(|| holder.to_hex());
                (key, routes.iter().map(|p| p.to_string()).collect())
            })
            .collect()
    }
}

/// Overlays host configuration (defaults < config file < environment <
/// flags) beneath the scenario's own genesis overrides.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub registry: Value,
    pub sim: Value,
    /// Directory for resolving the scenario's relative fixture paths.
    pub base_dir: Option<PathBuf>,
}

/// Deep-merges `overlay` into `base`: objects merge key-wise, everything
/// else replaces.
pub fn merge_config_values(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(base_map), Value::Object(overlay_map)) => {
            for (key, value) in overlay_map {
                match base_map.get_mut(key) {
                    Some(slot) => merge_config_values(slot, value),
                    None => {
                        base_map.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (base_slot, value) => *base_slot = value.clone(),
    }
}

fn overlay_config<T: Serialize + serde::de::DeserializeOwned>(
    default: &T,
    overlays: &[&Value],
    what: &str,
) -> Result<T, ScenarioError> {
    let mut merged = serde_json::to_value(default)
        .unwrap_or_else(|e| panic!("{what} defaults serialize: {e}"));
    for overlay in overlays {
        if overlay.is_null() {
            continue;
        }
        if !overlay.is_object() {
            return Err(ScenarioError::Invalid(format!(
                "{what} overrides must be a JSON object"
            )));
        }
        merge_config_values(&mut merged, overlay);
    }
    serde_json::from_value(merged)
        .map_err(|e| ScenarioError::Invalid(format!("{what} config: {e}")))
}

impl std::str::FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::ScenarioParseError(e.to_string()))
    }
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioError::ScenarioParseError(format!("reading {}: {e}", path.display()))
        })?;
        text.parse()
    }

    pub fn run(&self, overrides: &RunOverrides) -> Result<ScenarioOutcome, ScenarioError> {
        Runner::start(self, overrides)?.run_steps(&self.steps)
    }
}

/// Scenarios shipped inside the library so the command-line tool can run them
/// by bare name without any files on disk.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    (
        "basic_allocation",
        include_str!("../scenarios/basic_allocation.json"),
    ),
    (
        "aggregation_growth",
        include_str!("../scenarios/aggregation_growth.json"),
    ),
    (
        "expiration_reclaim",
        include_str!("../scenarios/expiration_reclaim.json"),
    ),
    (
        "stockpile_storm",
        include_str!("../scenarios/stockpile_storm.json"),
    ),
];

/// Looks up a bundled scenario by name.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

struct Runner {
    sim: Simulator,
    keys: BTreeMap<String, Keypair>,
    labels: BTreeMap<String, ResolvedLabel>,
    /// Index into the simulator's event log up to which labels have been
    /// resolved.
    events_scanned: usize,
}

impl Runner {
    fn start(scenario: &Scenario, overrides: &RunOverrides) -> Result<Self, ScenarioError> {
        let sim_config: SimConfig = overlay_config(
            &SimConfig::default(),
            &[&overrides.sim, &scenario.genesis.sim],
            "simulation",
        )?;
        let mut registry_config: RegistryConfig = overlay_config(
            &RegistryConfig::default(),
            &[&overrides.registry, &scenario.genesis.registry],
            "registry",
        )?;

        let mut keys = BTreeMap::new();
        let mut registry_holder: Option<String> = None;
        for account in &scenario.genesis.accounts {
            if keys.contains_key(&account.name) {
                return Err(ScenarioError::Invalid(format!(
                    "duplicate account name \"{}\"",
                    account.name
                )));
            }
            let keypair = Keypair::for_account(sim_config.scheme, scenario.seed, &account.name);
            let id = keypair.account_id();
            for role in &account.roles {
                match role {
                    Role::Registry => {
                        if let Some(previous) = &registry_holder {
                            return Err(ScenarioError::Invalid(format!(
                                "both \"{previous}\" and \"{}\" claim the registry role",
                                account.name
                            )));
                        }
                        registry_holder = Some(account.name.clone());
                    }
                    Role::Oracle => {
                        registry_config.oracle_accounts.insert(id);
                    }
                    Role::Supervisor => {
                        registry_config.supervisors.insert(id);
                    }
                }
            }
            keys.insert(account.name.clone(), keypair);
        }
        let registry_name = registry_holder.ok_or_else(|| {
            ScenarioError::Invalid("exactly one account needs the \"registry\" role".to_string())
        })?;

        let registry_account = keys[&registry_name].account_id();
        let mut sim = Simulator::new(sim_config, registry_config, registry_account);
        for account in &scenario.genesis.accounts {
            if account.name == registry_name {
                continue; // created by the simulator, fee balance starts at zero
            }
            sim.create_account(keys[&account.name].account_id(), account.balance.clone())
                .map_err(|e| ScenarioError::Invalid(format!("{}: {e}", account.name)))?;
        }

        for sample in &scenario.genesis.oracle_samples {
            sim.registry_mut()
                .seed_oracle(sample.clone())
                .map_err(|e| ScenarioError::Invalid(format!("genesis oracle sample: {e}")))?;
        }
        if let Some(fixture) = &scenario.genesis.oracle_fixture {
            let path = match &overrides.base_dir {
                Some(dir) if fixture.is_relative() => dir.join(fixture),
                _ => fixture.clone(),
            };
            let provider = FixtureProvider::from_path(&path)
                .map_err(|e| ScenarioError::Invalid(format!("oracle fixture: {e}")))?;
            for sample in provider.samples() {
                sim.registry_mut()
                    .seed_oracle(sample.clone())
                    .map_err(|e| ScenarioError::Invalid(format!("oracle fixture: {e}")))?;
            }
        }

        Ok(Runner {
            sim,
            keys,
            labels: BTreeMap::new(),
            events_scanned: 0,
        })
    }

    fn run_steps(mut self, steps: &[Step]) -> Result<ScenarioOutcome, ScenarioError> {
        for (index, step) in steps.iter().enumerate() {
            self.run_step(index, step)?;
        }
        let accounts_by_name = self
            .keys
            .iter()
            .map(|(name, kp)| (name.clone(), kp.account_id()))
            .collect();
        Ok(ScenarioOutcome {
            simulator: self.sim,
            labels: self.labels,
            accounts_by_name,
        })
    }

    fn run_step(&mut self, index: usize, step: &Step) -> Result<(), ScenarioError> {
        match step {
            Step::AdvanceClock { seconds } => {
                self.sim.advance_clock(*seconds);
                Ok(())
            }
            Step::ProduceBlocks { count } => {
                self.sim
                    .produce_blocks(*count)
                    .map_err(|e| ScenarioError::StepFailed {
                        step: index,
                        detail: e.to_string(),
                    })?;
                self.resolve_labels();
                Ok(())
            }
            Step::Submit {
                label,
                from,
                value,
                tip,
                action,
            } => {
                let hash = self.submit(index, from, value.clone(), *tip, action)?;
                if let Some(label) = label {
                    if self.labels.contains_key(label) {
                        return Err(ScenarioError::Invalid(format!(
                            "duplicate step label \"{label}\""
                        )));
                    }
                    self.labels.insert(
                        label.clone(),
                        ResolvedLabel {
                            tx_hash: hash,
                            allocation: None,
                        },
                    );
                }
                Ok(())
            }
            Step::Expect { expect } => self.check(index, expect),
            Step::Repeat { count, step } => {
                if let Step::Submit { label: Some(_), .. } = step.as_ref() {
                    return Err(ScenarioError::Invalid(
                        "a repeated step may not carry a label".to_string(),
                    ));
                }
                for _ in 0..*count {
                    self.run_step(index, step)?;
                }
                Ok(())
            }
        }
    }

    fn keypair(&self, index: usize, name: &str) -> Result<&Keypair, ScenarioError> {
        self.keys.get(name).ok_or_else(|| ScenarioError::StepFailed {
            step: index,
            detail: format!("unknown account \"{name}\""),
        })
    }

    fn allocation_id(&self, index: usize, label: &str) -> Result<u64, ScenarioError> {
        let resolved = self
            .labels
            .get(label)
            .ok_or_else(|| ScenarioError::StepFailed {
                step: index,
                detail: format!("unknown step label \"{label}\""),
            })?;
        resolved.allocation.ok_or_else(|| ScenarioError::StepFailed {
            step: index,
            detail: format!(
                "step \"{label}\" has no allocation yet (produce its block first)"
            ),
        })
    }

    fn submit(
        &mut self,
        index: usize,
        from: &str,
        value: Amount,
        tip: u64,
        action: &Action,
    ) -> Result<Hash32, ScenarioError> {
        let step_failed = |detail: String| ScenarioError::StepFailed {
            step: index,
            detail,
        };
        let result = match action {
            Action::Transfer { to } => {
                let to = self.keypair(index, to)?.account_id();
                let from = self.keypair(index, from)?.clone();
                self.sim.submit_transfer(&from, to, value, tip)
            }
            action => {
                let payload = match action {
                    Action::Transfer { .. } => unreachable!("handled above"),
                    Action::RequestAllocation { length, grow_from } => {
                        let growth_proof = grow_from
                            .as_ref()
                            .map(|label| self.allocation_id(index, label))
                            .transpose()?;
                        Payload::AllocationRequest {
                            length: *length,
                            growth_proof,
                        }
                    }
                    Action::Renew { allocation } => Payload::Renewal {
                        allocation: self.allocation_id(index, allocation)?,
                    },
                    Action::SetMetadata {
                        allocation,
                        pointer,
                    } => Payload::MetadataUpdate {
                        allocation: self.allocation_id(index, allocation)?,
                        pointer: pointer.clone(),
                    },
                    Action::RegisterRoa {
                        allocation,
                        prefix,
                        origin_asn,
                        max_length,
                    } => Payload::RoaRegister {
                        allocation: self.allocation_id(index, allocation)?,
                        roa: RoaRecord {
                            prefix: *prefix,
                            origin_asn: *origin_asn,
                            max_length: *max_length,
                        },
                    },
                    Action::RevokeRoa {
                        allocation,
                        prefix,
                        origin_asn,
                        max_length,
                    } => Payload::RoaRevoke {
                        allocation: self.allocation_id(index, allocation)?,
                        roa: RoaRecord {
                            prefix: *prefix,
                            origin_asn: *origin_asn,
                            max_length: *max_length,
                        },
                    },
                    Action::Resume => Payload::GovernanceResume,
                    Action::OracleUpdate { sample } => Payload::OracleUpdate {
                        sample: sample.clone(),
                    },
                };
                let from = self.keypair(index, from)?.clone();
                self.sim.submit_to_registry(&from, value, tip, payload)
            }
        };
        result.map_err(|e| step_failed(e.to_string()))
    }

    /// Attaches allocation ids from freshly produced events to their labels.
    fn resolve_labels(&mut self) {
        let events = self.sim.events();
        for event in &events[self.events_scanned..] {
            if event.tx_hash.is_empty() || !event.outcome.starts_with("ok") {
                continue;
            }
            let Some(allocation) = event.details.get("allocation").and_then(Value::as_u64)
            else {
                continue;
            };
            for resolved in self.labels.values_mut() {
                if resolved.allocation.is_none() && resolved.tx_hash.to_hex() == event.tx_hash {
                    resolved.allocation = Some(allocation);
                }
            }
        }
        self.events_scanned = events.len();
    }

    fn check(&self, index: usize, expectation: &Expectation) -> Result<(), ScenarioError> {
        let fail = |detail: String| {
            Err(ScenarioError::ExpectationFailed {
                step: index,
                detail,
            })
        };
        let label_event = |label: &str| -> Result<&crate::sim::EventRecord, ScenarioError> {
            let resolved = self
                .labels
                .get(label)
                .ok_or_else(|| ScenarioError::ExpectationFailed {
                    step: index,
                    detail: format!("unknown step label \"{label}\""),
                })?;
            let hash = resolved.tx_hash.to_hex();
            self.sim
                .events()
                .iter()
                .find(|e| e.tx_hash == hash)
                .ok_or_else(|| ScenarioError::ExpectationFailed {
                    step: index,
                    detail: format!("step \"{label}\" is not in any produced block yet"),
                })
        };
        match expectation {
            Expectation::Allocated {
                step,
                prefix,
                aggregatable,
            } => {
                let event = label_event(step)?;
                if event.outcome != "ok" {
                    return fail(format!(
                        "step \"{step}\": expected an allocation, outcome was {}",
                        event.outcome
                    ));
                }
                if let Some(expected) = prefix {
                    let got = event.details["prefix"].as_str().unwrap_or("");
                    if got != expected.to_string() {
                        return fail(format!(
                            "step \"{step}\": expected prefix {expected}, got {got}"
                        ));
                    }
                }
                if let Some(expected) = aggregatable {
                    let got = !event.details["aggregatable_with"].is_null();
                    if got != *expected {
                        return fail(format!(
                            "step \"{step}\": expected aggregatable={expected}, got {got}"
                        ));
                    }
                }
                Ok(())
            }
            Expectation::Rejected { step, error } => {
                let event = label_event(step)?;
                let expected = format!("rejected:{error}");
                if event.outcome != expected {
                    return fail(format!(
                        "step \"{step}\": expected outcome {expected}, got {}",
                        event.outcome
                    ));
                }
                Ok(())
            }
            Expectation::Paused { value } => {
                let paused = self.sim.registry().paused();
                if paused != *value {
                    return fail(format!("expected paused={value}, registry says {paused}"));
                }
                Ok(())
            }
            Expectation::ConfirmedLatency { step, seconds } => {
                let resolved =
                    self.labels
                        .get(step)
                        .ok_or_else(|| ScenarioError::ExpectationFailed {
                            step: index,
                            detail: format!("unknown step label \"{step}\""),
                        })?;
                match self.sim.measured_latency(resolved.tx_hash) {
                    None => fail(format!("step \"{step}\" is not confirmed yet")),
                    Some(measured) if measured != *seconds => fail(format!(
                        "step \"{step}\": expected latency {seconds} s, measured {measured} s"
                    )),
                    Some(_) => Ok(()),
                }
            }
            Expectation::Routes { holder, routes } => {
                let id = self
                    .keys
                    .get(holder)
                    .map(|kp| kp.account_id())
                    .ok_or_else(|| ScenarioError::ExpectationFailed {
                        step: index,
                        detail: format!("unknown account \"{holder}\""),
                    })?;
                let table = self.sim.registry().routes();
                let got = table.get(&id).cloned().unwrap_or_default();
                if &got != routes {
                    return fail(format!(
                        "expected routes {:?}, got {:?}",
                        routes.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                        got.iter().map(|p| p.to_string()).collect::<Vec<_>>()
                    ));
                }
                Ok(())
            }
            Expectation::ActiveAllocations { count } => {
                let got = self.sim.registry().active_count();
                if got != *count {
                    return fail(format!("expected {count} active allocations, got {got}"));
                }
                Ok(())
            }
            Expectation::FreePrefix { prefix } => {
                if !self.sim.registry().pool().is_free(prefix) {
                    return fail(format!("expected {prefix} to be free in the pool"));
                }
                Ok(())
            }
            Expectation::Balance { account, value } => {
                let id = self
                    .keys
                    .get(account)
                    .map(|kp| kp.account_id())
                    .ok_or_else(|| ScenarioError::ExpectationFailed {
                        step: index,
                        detail: format!("unknown account \"{account}\""),
                    })?;
                let got = self.sim.balance(&id);
                if &got != value {
                    return fail(format!(
                        "expected balance {value} for \"{account}\", got {got}"
                    ));
                }
                Ok(())
            }
        }
    }
}
