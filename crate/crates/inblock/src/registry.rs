//! The registry's bylaws as a deterministic state machine.
//!
//! Every rule an address holder interacts with lives here: fee-bearing
//! allocation (sparse placement or contiguous growth next to a proven
//! holding), yearly renewal, expiration sweeps that return unclaimed space
//! to the pool, voluntary contact metadata, route-origin attestations with a
//! per-block AS-number cap, a sliding-window rate limit that pauses the
//! registry under allocation storms, and supervisor-gated resume. All money
//! math is exact rational arithmetic: fees are denominated in fiat, indexed
//! to a GDP deflator, and converted to the ledger's coin at the oracle
//! exchange rate current when the request executes.
//!
//! The state machine is single-writer and clock-free: every operation takes
//! `now` from its caller (in a simulation, the block timestamp), so replays
//! are bit-identical.

use crate::amount::Amount;
use crate::oracle::{OracleKind, OracleSample};
use crate::pool::{PoolError, PoolState};
use crate::prefix::Ipv6Prefix;
use crate::sig::AccountId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("payment below the required fee: paid {paid}, required {required}")]
    InsufficientFee { paid: Amount, required: Amount },
    #[error("length /{0} is not an allocatable size")]
    UnsupportedLength(u8),
    #[error("no free block of length /{0} remains in the pool")]
    PoolExhausted(u8),
    #[error("registry is paused pending supervisor review")]
    RegistryPaused,
    #[error("growth proof is not a live allocation of the requester at the requested size")]
    InvalidGrowthProof,
    #[error("the experiment has ended; no new allocations")]
    ExperimentEnded,
    #[error("requester does not hold this allocation")]
    NotHolder,
    #[error("allocation expired and can no longer be renewed")]
    AlreadyExpired,
    #[error("no allocation with this id")]
    UnknownAllocation,
    #[error("attestation prefix lies outside the allocation")]
    RoaOutsideAllocation,
    #[error("attestation max length must lie between the prefix length and 128")]
    InvalidMaxLength,
    #[error("allocation already attests the maximum number of distinct origin AS numbers")]
    AsnCapExceeded,
    #[error("no such attestation on this allocation")]
    UnknownRoa,
    #[error("registry is not paused")]
    NotPaused,
    #[error("account is not a configured supervisor")]
    NotSupervisor,
    #[error("account is not a configured oracle")]
    NotOracleAccount,
    #[error("oracle update is not newer than the stored sample")]
    StaleUpdate,
    #[error("exchange rate is missing, non-positive, or stale")]
    InvalidRate,
}

impl RegistryError {
    /// Stable machine-readable code used in event-log outcomes.
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::InsufficientFee { .. } => "InsufficientFee",
            RegistryError::UnsupportedLength(_) => "UnsupportedLength",
            RegistryError::PoolExhausted(_) => "PoolExhausted",
            RegistryError::RegistryPaused => "RegistryPaused",
            RegistryError::InvalidGrowthProof => "InvalidGrowthProof",
            RegistryError::ExperimentEnded => "ExperimentEnded",
            RegistryError::NotHolder => "NotHolder",
            RegistryError::AlreadyExpired => "AlreadyExpired",
            RegistryError::UnknownAllocation => "UnknownAllocation",
            RegistryError::RoaOutsideAllocation => "RoaOutsideAllocation",
            RegistryError::InvalidMaxLength => "InvalidMaxLength",
            RegistryError::AsnCapExceeded => "AsnCapExceeded",
            RegistryError::UnknownRoa => "UnknownRoa",
            RegistryError::NotPaused => "NotPaused",
            RegistryError::NotSupervisor => "NotSupervisor",
            RegistryError::NotOracleAccount => "NotOracleAccount",
            RegistryError::StaleUpdate => "StaleUpdate",
            RegistryError::InvalidRate => "InvalidRate",
        }
    }
}

/// Where collected fees end up after a request is accepted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeeDestination {
    /// Fees accumulate in the registry's own account (recorded, not spent).
    #[default]
    Retain,
    /// Fees are moved to the all-zeros account no key can spend from.
    Burn,
    /// Fees are forwarded to a configured account.
    Beneficiary(AccountId),
}

/// Genesis-time policy knobs. Every field has a sensible default, so partial
/// configuration files and scenario overrides only name what they change.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistryConfig {
    /// The address pool the registry manages.
    pub pool: Ipv6Prefix,
    /// Fiat fee per allocatable prefix length; the key set is also the set
    /// of lengths a request may ask for.
    pub base_fees_fiat: BTreeMap<u8, Amount>,
    /// How long one paid period lasts (a fixed 365-day year by default).
    pub allocation_lifetime_seconds: u64,
    /// How long after genesis new allocations are accepted (five years by
    /// default). Renewals of existing allocations are unaffected.
    pub experiment_duration_seconds: u64,
    /// Sliding window for the allocation-storm safeguard.
    pub rate_limit_window_seconds: u64,
    /// Allocations permitted inside one window before the registry pauses.
    pub rate_limit_max_allocations: u32,
    /// Maximum distinct origin AS numbers attested across one allocation.
    pub asn_cap: u32,
    /// Which allocation sizes the cap applies to (by their fee-schedule
    /// length class).
    pub asn_cap_lengths: BTreeSet<u8>,
    /// Hold-down before an expired prefix may be reallocated.
    pub quarantine_seconds: u64,
    /// Oldest exchange-rate sample a fee conversion will accept.
    pub max_rate_age_seconds: u64,
    pub fee_destination: FeeDestination,
    /// Accounts allowed to resume a paused registry.
    pub supervisors: BTreeSet<AccountId>,
    /// Accounts allowed to post oracle updates.
    pub oracle_accounts: BTreeSet<AccountId>,
}

pub const SECONDS_PER_YEAR: u64 = 31_536_000;

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            pool: "2001:1000::/20".parse().expect("valid default pool"),
            base_fees_fiat: BTreeMap::from([
                (32, Amount::from_u64(3000)),
                (48, Amount::from_u64(300)),
            ]),
            allocation_lifetime_seconds: SECONDS_PER_YEAR,
            experiment_duration_seconds: 5 * SECONDS_PER_YEAR,
            rate_limit_window_seconds: 86_400,
            rate_limit_max_allocations: 100,
            asn_cap: 100,
            asn_cap_lengths: BTreeSet::from([32]),
            quarantine_seconds: 0,
            max_rate_age_seconds: 30 * 86_400,
            fee_destination: FeeDestination::Retain,
            supervisors: BTreeSet::new(),
            oracle_accounts: BTreeSet::new(),
        }
    }
}

/// Fiat fee table indexed by a GDP-style deflator. The fiat price of a block
/// never moves with the coin's exchange rate; only the deflator moves it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeSchedule {
    pub base_fee_fiat: BTreeMap<u8, Amount>,
    pub base_gdp_index: Amount,
    pub current_gdp_index: Amount,
    /// Timestamp of the deflator sample currently in force.
    pub gdp_as_of: u64,
}

impl FeeSchedule {
    pub fn new(base_fee_fiat: BTreeMap<u8, Amount>) -> Self {
        FeeSchedule {
            base_fee_fiat,
            base_gdp_index: Amount::from_u64(1),
            current_gdp_index: Amount::from_u64(1),
            gdp_as_of: 0,
        }
    }

    /// The fiat fee for one block of `length`, at today's deflator.
    pub fn effective_fee(&self, length: u8) -> Result<Amount, RegistryError> {
        let base = self
            .base_fee_fiat
            .get(&length)
            .ok_or(RegistryError::UnsupportedLength(length))?;
        Ok((base * &self.current_gdp_index)
            .checked_div(&self.base_gdp_index)
            .expect("base index is positive"))
    }

    pub fn supports(&self, length: u8) -> bool {
        self.base_fee_fiat.contains_key(&length)
    }

    /// The shortest configured length at or above `length` — the fee class a
    /// block of `length` belongs to. Growth can grant blocks shorter than any
    /// configured length (a /31 granted against /32 requests); such a block
    /// is priced as the equivalent number of blocks of its class.
    pub fn length_class(&self, length: u8) -> Result<u8, RegistryError> {
        self.base_fee_fiat
            .keys()
            .copied()
            .find(|k| *k >= length)
            .ok_or(RegistryError::UnsupportedLength(length))
    }

    /// The fiat fee for one block of `length`, where `length` may sit above
    /// its fee class (shorter prefix): the class fee times the number of
    /// class-sized blocks the prefix spans.
    pub fn fee_for_block(&self, length: u8) -> Result<Amount, RegistryError> {
        let class = self.length_class(length)?;
        Ok(self.effective_fee(class)?.scale_pow2((class - length) as u32))
    }
}

/// Exact coin amount a fiat fee costs at the given exchange-rate sample.
/// The sample must be a positive exchange rate no older than `max_age`.
pub fn required_crypto_amount(
    fee_fiat: &Amount,
    rate: &OracleSample,
    now: u64,
    max_age: u64,
) -> Result<Amount, RegistryError> {
    if rate.kind != OracleKind::ExchangeRate || !rate.value.is_positive() {
        return Err(RegistryError::InvalidRate);
    }
    if now.saturating_sub(rate.as_of) > max_age {
        return Err(RegistryError::InvalidRate);
    }
    fee_fiat
        .checked_div(&rate.value)
        .ok_or(RegistryError::InvalidRate)
}

/// A route-origin attestation: `origin_asn` may announce routes for
/// `prefix` down to `max_length`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoaRecord {
    pub prefix: Ipv6Prefix,
    pub origin_asn: u32,
    pub max_length: u8,
}

/// One live registry entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub id: u64,
    pub prefix: Ipv6Prefix,
    pub holder: AccountId,
    pub created_at: u64,
    pub expiration: u64,
    pub metadata_pointer: Option<String>,
    pub roas: BTreeSet<RoaRecord>,
    /// When the block was granted as contiguous growth: the already-held
    /// aggregate it extends, with which it announces as one shorter route.
    pub aggregatable_with: Option<Ipv6Prefix>,
}

/// Running totals of money that has passed through the registry.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    /// Sum of required fees, in fiat at charge time.
    pub fees_fiat: Amount,
    /// Sum of required fees, in coin actually collected.
    pub fees_crypto: Amount,
    /// Overpayment kept beyond the required fees (no refunds).
    pub surplus_crypto: Amount,
    /// Payments that arrived with requests the registry rejected.
    pub rejected_crypto: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct QuarantineEntry {
    prefix: Ipv6Prefix,
    available_at: u64,
}

/// The complete registry state. All mutation goes through the operation
/// methods; queries borrow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    pub config: RegistryConfig,
    pub fee_schedule: FeeSchedule,
    pool: PoolState,
    allocations: BTreeMap<u64, AllocationRecord>,
    by_prefix: BTreeMap<Ipv6Prefix, u64>,
    next_id: u64,
    rate_window: VecDeque<u64>,
    paused: bool,
    experiment_end: u64,
    oracle_state: BTreeMap<OracleKind, OracleSample>,
    quarantine: Vec<QuarantineEntry>,
    pub accounting: Accounting,
}

impl RegistryState {
    pub fn new(config: RegistryConfig, genesis_time: u64) -> Self {
        let fee_schedule = FeeSchedule::new(config.base_fees_fiat.clone());
        let pool = PoolState::new(config.pool);
        let experiment_end = genesis_time + config.experiment_duration_seconds;
        RegistryState {
            config,
            fee_schedule,
            pool,
            allocations: BTreeMap::new(),
            by_prefix: BTreeMap::new(),
            next_id: 1,
            rate_window: VecDeque::new(),
            paused: false,
            experiment_end,
            oracle_state: BTreeMap::new(),
            quarantine: Vec::new(),
            accounting: Accounting::default(),
        }
    }

    // --- queries -----------------------------------------------------------

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn experiment_end(&self) -> u64 {
        self.experiment_end
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn allocation(&self, id: u64) -> Option<&AllocationRecord> {
        self.allocations.get(&id)
    }

    pub fn allocation_by_prefix(&self, prefix: &Ipv6Prefix) -> Option<&AllocationRecord> {
        self.by_prefix.get(prefix).and_then(|id| self.allocations.get(id))
    }

    pub fn allocations(&self) -> impl Iterator<Item = &AllocationRecord> {
        self.allocations.values()
    }

    pub fn active_count(&self) -> usize {
        self.allocations.len()
    }

    /// The latest stored sample of an oracle kind, if any.
    pub fn oracle_sample(&self, kind: OracleKind) -> Option<&OracleSample> {
        self.oracle_state.get(&kind)
    }

    /// Per-holder route announcements, each holder's blocks merged into the
    /// fewest prefixes (adjacent buddies collapse into their parent,
    /// repeatedly).
    pub fn routes(&self) -> BTreeMap<AccountId, Vec<Ipv6Prefix>> {
        let mut by_holder: BTreeMap<AccountId, BTreeSet<Ipv6Prefix>> = BTreeMap::new();
        for rec in self.allocations.values() {
            by_holder.entry(rec.holder).or_default().insert(rec.prefix);
        }
        by_holder
            .into_iter()
            .map(|(holder, set)| (holder, aggregate_routes(set)))
            .collect()
    }

    // --- allocation --------------------------------------------------------

    /// Grants a new block of `length` against payment of `paid` coins.
    ///
    /// Placement is sparse by default. With `growth_proof` naming an
    /// allocation id the requester holds, placement instead extends that
    /// holding: the block adjacent to the requester's largest fully-held
    /// aggregate around the proven block, granted as a single prefix of the
    /// aggregate's length (which can be shorter than `length`; the fee
    /// scales by the number of `length`-sized blocks granted). When the
    /// adjacent space is taken, growth falls back to a sparse block of
    /// `length`, reported as non-aggregatable.
    pub fn process_allocation_request(
        &mut self,
        requester: AccountId,
        length: u8,
        paid: &Amount,
        growth_proof: Option<u64>,
        now: u64,
    ) -> Result<AllocationRecord, RegistryError> {
        if self.paused {
            return Err(RegistryError::RegistryPaused);
        }
        if now >= self.experiment_end {
            return Err(RegistryError::ExperimentEnded);
        }
        if !self.fee_schedule.supports(length) {
            return Err(RegistryError::UnsupportedLength(length));
        }
        self.flush_quarantine(now);

        // Decide placement before touching money: the granted size sets the
        // fee.
        let plan = match growth_proof {
            Some(proof_id) => {
                let base = self
                    .allocations
                    .get(&proof_id)
                    .ok_or(RegistryError::InvalidGrowthProof)?;
                if base.holder != requester
                    || now > base.expiration
                    || self.fee_schedule.length_class(base.prefix.len())? != length
                {
                    return Err(RegistryError::InvalidGrowthProof);
                }
                let aggregate = self.holder_aggregate(base.holder, base.prefix);
                self.pool
                    .peek_contiguous(aggregate, length)
                    .map_err(|e| Self::map_pool_error(e, length))?
            }
            None => crate::pool::ContiguousGrant {
                prefix: self
                    .pool
                    .peek_sparse(length)
                    .map_err(|e| Self::map_pool_error(e, length))?,
                aggregatable: false,
            },
        };

        // A granted aggregate of length g covers 2^(length-g) blocks of the
        // requested length; the fee scales with it.
        let unit_fee = self.fee_schedule.effective_fee(length)?;
        let required_fiat = unit_fee.scale_pow2((length - plan.prefix.len()) as u32);
        let required = self.required_for(&required_fiat, now)?;
        if paid < &required {
            return Err(RegistryError::InsufficientFee {
                paid: paid.clone(),
                required,
            });
        }

        // Storm safeguard: count recent grants; at the cap, pause instead of
        // granting.
        let window = self.config.rate_limit_window_seconds;
        while let Some(front) = self.rate_window.front() {
            if front + window <= now {
                self.rate_window.pop_front();
            } else {
                break;
            }
        }
        if self.rate_window.len() >= self.config.rate_limit_max_allocations as usize {
            self.paused = true;
            return Err(RegistryError::RegistryPaused);
        }

        // Commit.
        let granted = match growth_proof {
            Some(_) if plan.aggregatable => {
                self.pool
                    .allocate_exact(plan.prefix)
                    .map_err(|e| Self::map_pool_error(e, length))?;
                plan.prefix
            }
            _ => {
                let got = self
                    .pool
                    .allocate_sparse(length)
                    .map_err(|e| Self::map_pool_error(e, length))?;
                debug_assert_eq!(got, plan.prefix);
                got
            }
        };
        let id = self.next_id;
        self.next_id += 1;
        let record = AllocationRecord {
            id,
            prefix: granted,
            holder: requester,
            created_at: now,
            expiration: now + self.config.allocation_lifetime_seconds,
            metadata_pointer: None,
            roas: BTreeSet::new(),
            aggregatable_with: if plan.aggregatable {
                Some(granted.buddy().expect("granted block has positive length"))
            } else {
                None
            },
        };
        self.allocations.insert(id, record.clone());
        self.by_prefix.insert(granted, id);
        self.rate_window.push_back(now);
        self.accounting.fees_fiat += &required_fiat;
        self.accounting.fees_crypto += &required;
        self.accounting.surplus_crypto += &(paid.clone() - required);
        Ok(record)
    }

    /// Extends an allocation by one lifetime from its current expiration
    /// (not from the payment date), against the current fee for its size.
    /// Accepted up to and including the expiration instant, even while the
    /// registry is paused or after the experiment's allocation window ends.
    pub fn process_renewal(
        &mut self,
        requester: AccountId,
        allocation_id: u64,
        paid: &Amount,
        now: u64,
    ) -> Result<AllocationRecord, RegistryError> {
        let required_fiat = {
            let rec = self
                .allocations
                .get(&allocation_id)
                .ok_or(RegistryError::UnknownAllocation)?;
            if rec.holder != requester {
                return Err(RegistryError::NotHolder);
            }
            if now > rec.expiration {
                return Err(RegistryError::AlreadyExpired);
            }
            self.fee_schedule.fee_for_block(rec.prefix.len())?
        };
        let required = self.required_for(&required_fiat, now)?;
        if paid < &required {
            return Err(RegistryError::InsufficientFee {
                paid: paid.clone(),
                required,
            });
        }
        let lifetime = self.config.allocation_lifetime_seconds;
        let rec = self
            .allocations
            .get_mut(&allocation_id)
            .expect("checked above");
        rec.expiration += lifetime;
        let rec = rec.clone();
        self.accounting.fees_fiat += &required_fiat;
        self.accounting.fees_crypto += &required;
        self.accounting.surplus_crypto += &(paid.clone() - required);
        Ok(rec)
    }

    /// Removes every allocation whose expiration lies strictly in the past
    /// and returns its prefix to the pool (after the configured hold-down,
    /// if any). Returns the prefixes reclaimed by this sweep. Idempotent.
    pub fn expire_sweep(&mut self, now: u64) -> Vec<Ipv6Prefix> {
        self.flush_quarantine(now);
        let expired: Vec<u64> = self
            .allocations
            .values()
            .filter(|r| r.expiration < now)
            .map(|r| r.id)
            .collect();
        let mut reclaimed = Vec::new();
        for id in expired {
            let rec = self.allocations.remove(&id).expect("listed above");
            self.by_prefix.remove(&rec.prefix);
            if self.config.quarantine_seconds == 0 {
                self.pool.release(rec.prefix).expect("record mirrors pool");
            } else {
                self.quarantine.push(QuarantineEntry {
                    prefix: rec.prefix,
                    available_at: now + self.config.quarantine_seconds,
                });
            }
            reclaimed.push(rec.prefix);
        }
        reclaimed
    }

    /// Replaces the allocation's voluntary metadata pointer; an empty string
    /// clears it.
    pub fn update_metadata(
        &mut self,
        requester: AccountId,
        allocation_id: u64,
        pointer: &str,
        now: u64,
    ) -> Result<AllocationRecord, RegistryError> {
        let rec = Self::live_record_mut(&mut self.allocations, allocation_id, now)?;
        if rec.holder != requester {
            return Err(RegistryError::NotHolder);
        }
        rec.metadata_pointer = if pointer.is_empty() {
            None
        } else {
            Some(pointer.to_string())
        };
        Ok(rec.clone())
    }

    /// Adds a route-origin attestation. Re-adding an identical attestation
    /// is a no-op. For allocations in a capped length class, the number of
    /// distinct origin AS numbers across the allocation's attestations may
    /// not exceed the configured cap.
    pub fn register_roa(
        &mut self,
        requester: AccountId,
        allocation_id: u64,
        roa: RoaRecord,
        now: u64,
    ) -> Result<AllocationRecord, RegistryError> {
        let capped = {
            let rec = Self::live_record_mut(&mut self.allocations, allocation_id, now)?;
            if rec.holder != requester {
                return Err(RegistryError::NotHolder);
            }
            if !rec.prefix.contains(&roa.prefix) {
                return Err(RegistryError::RoaOutsideAllocation);
            }
            if roa.max_length < roa.prefix.len() || roa.max_length > 128 {
                return Err(RegistryError::InvalidMaxLength);
            }
            match self.fee_schedule.length_class(rec.prefix.len()) {
                Ok(class) => self.config.asn_cap_lengths.contains(&class),
                Err(_) => false,
            }
        };
        let cap = self.config.asn_cap as usize;
        let rec = self
            .allocations
            .get_mut(&allocation_id)
            .expect("checked above");
        if capped && !rec.roas.contains(&roa) {
            let mut asns: BTreeSet<u32> = rec.roas.iter().map(|r| r.origin_asn).collect();
            asns.insert(roa.origin_asn);
            if asns.len() > cap {
                return Err(RegistryError::AsnCapExceeded);
            }
        }
        rec.roas.insert(roa);
        Ok(rec.clone())
    }

    /// Removes a previously registered attestation.
    pub fn revoke_roa(
        &mut self,
        requester: AccountId,
        allocation_id: u64,
        roa: RoaRecord,
        now: u64,
    ) -> Result<AllocationRecord, RegistryError> {
        let rec = Self::live_record_mut(&mut self.allocations, allocation_id, now)?;
        if rec.holder != requester {
            return Err(RegistryError::NotHolder);
        }
        if !rec.roas.remove(&roa) {
            return Err(RegistryError::UnknownRoa);
        }
        Ok(rec.clone())
    }

    /// Clears a pause set by the storm safeguard. Only configured
    /// supervisors may do this; the rate window restarts empty.
    pub fn governance_resume(&mut self, requester: AccountId) -> Result<(), RegistryError> {
        if !self.config.supervisors.contains(&requester) {
            return Err(RegistryError::NotSupervisor);
        }
        if !self.paused {
            return Err(RegistryError::NotPaused);
        }
        self.paused = false;
        self.rate_window.clear();
        Ok(())
    }

    /// Accepts a signed oracle sample from a configured oracle account.
    /// Samples of one kind must arrive with strictly increasing timestamps;
    /// a GDP-index sample additionally moves the fee schedule's deflator.
    pub fn apply_oracle_update(
        &mut self,
        signer: AccountId,
        sample: OracleSample,
    ) -> Result<(), RegistryError> {
        if !self.config.oracle_accounts.contains(&signer) {
            return Err(RegistryError::NotOracleAccount);
        }
        self.store_oracle_sample(sample)
    }

    /// Installs a sample directly, bypassing the oracle-account check — for
    /// genesis configuration only.
    pub fn seed_oracle(&mut self, sample: OracleSample) -> Result<(), RegistryError> {
        self.store_oracle_sample(sample)
    }

    // --- internals ----------------------------------------------------------

    fn store_oracle_sample(&mut self, sample: OracleSample) -> Result<(), RegistryError> {
        if !sample.value.is_positive() {
            return Err(RegistryError::InvalidRate);
        }
        if let Some(stored) = self.oracle_state.get(&sample.kind) {
            if sample.as_of <= stored.as_of {
                return Err(RegistryError::StaleUpdate);
            }
        }
        if sample.kind == OracleKind::GdpIndex {
            self.fee_schedule.current_gdp_index = sample.value.clone();
            self.fee_schedule.gdp_as_of = sample.as_of;
        }
        self.oracle_state.insert(sample.kind, sample);
        Ok(())
    }

    /// Coin amount `fee_fiat` costs at the stored exchange rate, which must
    /// exist and be fresh enough.
    fn required_for(&self, fee_fiat: &Amount, now: u64) -> Result<Amount, RegistryError> {
        let rate = self
            .oracle_state
            .get(&OracleKind::ExchangeRate)
            .ok_or(RegistryError::InvalidRate)?;
        required_crypto_amount(fee_fiat, rate, now, self.config.max_rate_age_seconds)
    }

    fn live_record_mut(
        allocations: &mut BTreeMap<u64, AllocationRecord>,
        id: u64,
        now: u64,
    ) -> Result<&mut AllocationRecord, RegistryError> {
        let rec = allocations
            .get_mut(&id)
            .ok_or(RegistryError::UnknownAllocation)?;
        // Past its expiration instant the record only awaits the sweep; for
        // every operation but renewal it is already gone.
        if now > rec.expiration {
            return Err(RegistryError::UnknownAllocation);
        }
        Ok(rec)
    }

    /// The largest aggregate containing `prefix` that `holder`'s active
    /// allocations fully cover — the unit contiguous growth extends.
    fn holder_aggregate(&self, holder: AccountId, prefix: Ipv6Prefix) -> Ipv6Prefix {
        let mut aggregate = prefix;
        while let Ok(parent) = aggregate.parent() {
            if !self.config.pool.contains(&parent) {
                break;
            }
            let buddy = aggregate.buddy().expect("parent exists, so length > 0");
            if !self.holder_covers(holder, &buddy) {
                break;
            }
            aggregate = parent;
        }
        aggregate
    }

    /// True when `holder`'s active allocations cover every address of
    /// `target` (one containing block, or an exact tiling by smaller ones).
    fn holder_covers(&self, holder: AccountId, target: &Ipv6Prefix) -> bool {
        debug_assert!(target.len() >= 1);
        let mut missing: u128 = 1u128 << (128 - target.len());
        for rec in self.allocations.values() {
            if rec.holder != holder {
                continue;
            }
            if rec.prefix.contains(target) {
                return true;
            }
            if target.contains(&rec.prefix) {
                missing -= 1u128 << (128 - rec.prefix.len());
                if missing == 0 {
                    return true;
                }
            }
        }
        false
    }

    fn flush_quarantine(&mut self, now: u64) {
        let due: Vec<Ipv6Prefix> = self
            .quarantine
            .iter()
            .filter(|q| q.available_at <= now)
            .map(|q| q.prefix)
            .collect();
        if due.is_empty() {
            return;
        }
        self.quarantine.retain(|q| q.available_at > now);
        for prefix in due {
            self.pool.release(prefix).expect("quarantined prefixes stay allocated");
        }
    }

    fn map_pool_error(err: PoolError, requested: u8) -> RegistryError {
        match err {
            PoolError::PoolExhausted(len) => RegistryError::PoolExhausted(len),
            PoolError::LengthOutOfPool { requested: r, .. } => RegistryError::UnsupportedLength(r),
            PoolError::NotAllocated(_) | PoolError::NotFree(_) => {
                // Reachable only via a growth plan that raced its own
                // bookkeeping; surfacing the requested length keeps the
                // message actionable.
                RegistryError::PoolExhausted(requested)
            }
        }
    }
}

/// Merges a set of prefixes into the fewest announcable routes: any two
/// buddies collapse into their parent, repeated to a fixed point.
pub fn aggregate_routes(mut set: BTreeSet<Ipv6Prefix>) -> Vec<Ipv6Prefix> {
    loop {
        let mut merged = None;
        for p in &set {
            if let (Ok(buddy), Ok(parent)) = (p.buddy(), p.parent()) {
                if set.contains(&buddy) {
                    merged = Some((*p, buddy, parent));
                    break;
                }
            }
        }
        match merged {
            Some((a, b, parent)) => {
                set.remove(&a);
                set.remove(&b);
                set.insert(parent);
            }
            None => return set.into_iter().collect(),
        }
    }
}
