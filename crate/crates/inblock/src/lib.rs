#![forbid(unsafe_code)]
// Error variants deliberately carry exact rational amounts (required fee,
// offered payment) so rejections are self-explanatory; the resulting enum
// size is accepted over boxing every diagnostic.
#![allow(clippy::result_large_err)]

//! Deterministic simulator of a self-governing IPv6 address registry.
//!
//! The crate models an address registry that runs as an autonomous contract
//! on a simulated hash-chained ledger: applicants pay a fiat-indexed fee in
//! ledger currency, receive a fixed-term right to announce an IPv6 prefix,
//! and renew it yearly. Allocation placement uses a sparse (bisection)
//! strategy so that later growth stays aggregatable into a single route.
//!
//! Everything is deterministic: no wall clock, no real network, no float
//! arithmetic in state. Money is exact rationals, time is simulated seconds,
//! randomness only enters through scenario seeds. Running the same scenario
//! twice produces byte-identical chains, event logs and snapshots.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example allocate_and_confirm   # end-to-end allocation + confirmation latency
//! cargo run --example sparse_placement       # how bisection placement picks prefixes
//! cargo run --example contiguous_growth      # growing a /32 into a single /30 route
//! cargo run --example fees_and_economics     # fee schedule, indexing, cost analyses
//! cargo run --example ledger_integrity       # tamper detection on the hash chain
//! cargo run --example rate_limit_pause       # allocation-storm circuit breaker
//! cargo run --example rir_figures            # delegation-file size statistics
//! ```
//!
//! The same functionality is scriptable through the thin `inblock` binary
//! (`inblock run <scenario>`, `inblock query …`, `inblock analyze …`,
//! `inblock chain verify …`, `inblock snapshot`/`restore`).

pub mod amount;
pub mod cli;
pub mod ledger;
pub mod oracle;
pub mod pool;
pub mod prefix;
pub mod registry;
pub mod scenario;
pub mod sig;
pub mod sim;
pub mod snapshot;
pub mod stats;

pub use amount::Amount;
pub use ledger::{Block, Chain, ConfirmationStatus, Mempool, Payload, Transaction};
pub use oracle::{OracleKind, OracleSample};
pub use pool::PoolState;
pub use prefix::Ipv6Prefix;
pub use registry::{AllocationRecord, FeeSchedule, RegistryConfig, RegistryState, RoaRecord};
pub use sim::{SimConfig, Simulator};
