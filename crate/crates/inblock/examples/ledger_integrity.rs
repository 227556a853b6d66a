//! Tamper detection on the hash chain, and what it can and cannot promise.
//!
//! Every block commits to its parent's hash, so changing any byte of any
//! recorded block breaks the links above it. Verification pinpoints the
//! first bad height. The flip side: an adversary who rewrites *every*
//! subsequent block produces a chain that is internally consistent again --
//! integrity of a local copy is not proof of canonicality. That is what
//! replication and confirmation depth are for.
//!
//! Run with: cargo run --example ledger_integrity

use inblock::ledger::ChainCheck;
use inblock::sig::Keypair;
use inblock::{Amount, Chain, RegistryConfig, SimConfig, Simulator};

fn build_chain() -> Result<Chain, Box<dyn std::error::Error>> {
    let sim_config = SimConfig::default();
    let scheme = sim_config.scheme;
    let registry_key = Keypair::for_account(scheme, 0, "registry");
    let alice = Keypair::for_account(scheme, 0, "alice");
    let bob = Keypair::for_account(scheme, 0, "bob");
    let mut sim = Simulator::new(
        sim_config,
        RegistryConfig::default(),
        registry_key.account_id(),
    );
    sim.create_account(alice.account_id(), Amount::from_u64(100))?;
    sim.create_account(bob.account_id(), Amount::from_u64(100))?;
    for round in 1..=6u64 {
        sim.submit_transfer(&alice, bob.account_id(), Amount::from_u64(round), 0)?;
        sim.submit_transfer(&bob, alice.account_id(), Amount::from_u64(1), round)?;
        sim.advance_clock(137);
        sim.produce_blocks(2)?;
    }
    Ok(sim.chain().clone())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = build_chain()?;
    println!(
        "built a chain of {} blocks carrying 12 transfers",
        chain.blocks().len()
    );
    assert_eq!(chain.verify(), ChainCheck::Valid);
    println!("verify: every hash link checks out");
    println!();

    // Determinism first: the identical run serializes to identical bytes.
    let export = chain.export_jsonl();
    assert_eq!(build_chain()?.export_jsonl(), export);
    println!("replaying the same transfers reproduces the export byte for byte");
    println!();

    // Tamper with block 5 through the test-only escape hatch: bump one
    // transaction's value by one. The stored hashes no longer match.
    let mut tampered = chain.clone();
    let block = &mut tampered.blocks_mut()[5];
    block.transactions[0].value = "2".parse()?;
    match tampered.verify() {
        ChainCheck::FirstBadHeight(h) => {
            println!("raise one transfer inside block 5 by a coin -> first bad height {h}")
        }
        ChainCheck::Valid => unreachable!("tampering must be caught"),
    }

    // The forger can recompute block 5's own hash, but its child still
    // commits to the old value.
    let block = &mut tampered.blocks_mut()[5];
    block.hash = block.compute_hash();
    match tampered.verify() {
        ChainCheck::FirstBadHeight(h) => {
            println!("recompute block 5's hash too -> the break just moves to height {h}")
        }
        ChainCheck::Valid => unreachable!("the parent link must not match"),
    }

    // Only rewriting every block from the edit to the tip restores internal
    // consistency. Local verification cannot tell this copy from the
    // original; only comparing against replicas can.
    for height in 5..tampered.blocks().len() {
        let parent_hash = tampered.blocks()[height - 1].hash;
        let block = &mut tampered.blocks_mut()[height];
        block.parent_hash = parent_hash;
        block.hash = block.compute_hash();
    }
    assert_eq!(tampered.verify(), ChainCheck::Valid);
    println!("rewrite blocks 5..tip -> verify passes again (and the export differs)");
    assert_ne!(tampered.export_jsonl(), export);
    println!();

    // The JSONL export round-trips, so audits can run on files.
    let imported = Chain::import_jsonl(&export).map_err(|e| format!("import: {e}"))?;
    assert_eq!(imported.verify(), ChainCheck::Valid);
    println!("export -> import -> verify works on files too:");
    println!("  try it: cargo run -- run basic_allocation --out /tmp/demo");
    println!("          cargo run -- chain verify /tmp/demo/chain.jsonl");
    Ok(())
}
