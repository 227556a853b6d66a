//! The allocation-storm circuit breaker.
//!
//! An autonomous registry cannot call a human when something looks wrong,
//! so it carries one: when more allocations are granted inside the sliding
//! window than the cap allows, the registry pauses itself. Paused, it
//! rejects further allocations (keeping the payments as penalty) until a
//! supervisor account -- the only governance hook -- resumes it. Renewals
//! keep working throughout: existing holders are never hostages.
//!
//! This drives the bundled "stockpile_storm" scenario: one account fires
//! 150 /48 requests into a single block against a cap of 100 per day.
//!
//! Run with: cargo run --example rate_limit_pause

use inblock::scenario::{bundled_scenario, RunOverrides, Scenario};
use std::str::FromStr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = bundled_scenario("stockpile_storm").expect("bundled");
    let scenario = Scenario::from_str(text)?;
    println!(
        "running scenario {:?} ({} steps)",
        scenario.name,
        scenario.steps.len()
    );
    let outcome = scenario.run(&RunOverrides::default())?;
    let sim = &outcome.simulator;

    // Count what happened to the storm of requests. The scenario ends with
    // one more allocation after the resume; that one is labeled, so keep it
    // out of the storm tally.
    let after_resume = outcome.labels["after_resume"].tx_hash.to_hex();
    let mut granted = 0;
    let mut storm_rejected = 0;
    for event in sim.events() {
        if event.kind == "allocation_request" && event.tx_hash != after_resume {
            match event.outcome.as_str() {
                "ok" => granted += 1,
                "rejected:RegistryPaused" => storm_rejected += 1,
                other => println!("  unexpected outcome: {other}"),
            }
        }
    }
    println!();
    println!("storm: 150 requests, cap 100/day");
    println!("  granted            {granted:>3}");
    println!("  rejected (paused)  {storm_rejected:>3}");
    println!();

    // The governance tail: a random account may not resume, the supervisor
    // may, and service continues afterwards. Events carry the sender only
    // as a tx hash, so name the attempts through the scenario's labels.
    for (label, who) in [("bad_resume", "mallory (ordinary)"), ("resume", "warden (supervisor)")] {
        let hash = outcome.labels[label].tx_hash.to_hex();
        let event = sim
            .events()
            .iter()
            .find(|e| e.tx_hash == hash)
            .expect("labeled tx was included");
        println!("resume attempt by {who:<20} -> {}", event.outcome);
    }
    let after = sim
        .events()
        .iter()
        .find(|e| e.tx_hash == after_resume)
        .expect("post-resume request was included");
    println!("allocation after resume        -> {}", after.outcome);
    println!();
    println!("paused now:          {}", sim.registry().paused());
    println!("active allocations:  {}", sim.registry().active_count());
    println!();
    println!("note the asymmetry: the 50 rejected payments were kept");
    println!(
        "(penalty pot: {} coins) -- stockpiling attempts are not free.",
        sim.registry().accounting.rejected_crypto
    );
    Ok(())
}
