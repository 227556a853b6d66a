//! What do real registries actually hand out?
//!
//! The regional registries publish daily "delegated-extended" files listing
//! every IPv6 block they have delegated. Parsing one tells us which prefix
//! lengths dominate in practice -- and therefore what an automated registry
//! must be good at. The answer: /32 (to network operators) and /48 (to end
//! sites) dwarf everything else, and blocks shorter (larger) than /29 are
//! vanishingly rare.
//!
//! The same file sizes the throughput question: if one year of global
//! registry activity were replayed as ledger transactions, how many per
//! second is that? (Spoiler: a rounding error for any chain.)
//!
//! Run with: cargo run --example rir_figures

use std::path::Path;

use inblock::stats::{
    count_shorter_than, read_delegated_extended, size_distribution, throughput_requirement,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/delegated-extended-fixture.txt");
    let outcome = read_delegated_extended(&path)?;
    println!("parsed {}", path.display());
    println!(
        "  ipv6 delegations {:>6}   skipped rows {:>6}   malformed {:>2}",
        outcome.records.len(),
        outcome.skipped,
        outcome.diagnostics.len()
    );
    for diag in &outcome.diagnostics {
        println!("  line {}: {}", diag.line, diag.reason);
    }
    println!();

    let histogram = size_distribution(&outcome.records);
    println!("delegations by prefix length:");
    let max = histogram.values().copied().max().unwrap_or(1);
    for (length, count) in &histogram {
        // A log-ish bar: linear scaling would leave everything but /32
        // invisible next to its spike.
        let bar = "#".repeat((count * 60 / max).max(1) as usize);
        println!("  /{length:<3} {count:>6}  {bar}");
    }
    println!();

    let e32 = histogram.get(&32).copied().unwrap_or(0);
    let e48 = histogram.get(&48).copied().unwrap_or(0);
    let e29 = histogram.get(&29).copied().unwrap_or(0);
    let big = count_shorter_than(&histogram, 29);
    println!("the shape of real demand:");
    println!("  /32 delegations (operators)     {e32:>6}");
    println!("  /48 delegations (end sites)     {e48:>6}");
    println!("  /29 delegations (growth policy) {e29:>6}");
    println!("  larger than /29 (rare)          {big:>6}");
    assert_eq!(e32, 17_795);
    assert_eq!(e48, 6_283);
    assert_eq!(e29, 7_903);
    assert_eq!(big, 191);
    println!();

    // If every delegation event in a busy year became one transaction on
    // the ledger, the required rate would be:
    let yearly = 58_700u64;
    let rate = throughput_requirement(yearly);
    println!(
        "{yearly} registry events/year as transactions = {} tx/s (exactly {rate})",
        rate.format_sigfigs(2)
    );
    println!("any ledger that manages a few hundred tx/s has four orders of margin.");
    Ok(())
}
