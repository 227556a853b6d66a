//! End-to-end allocation: an applicant pays the fee, the request rides a
//! block, and after twelve more blocks the allocation counts as confirmed.
//! Along the way the transaction's status moves Pending -> Included ->
//! Confirmed, and the measured latency lands exactly on the closed form
//!
//!     inclusion_delay + block_interval + depth * block_interval
//!
//! Run with: cargo run --example allocate_and_confirm

use inblock::ledger::ConfirmationStatus;
use inblock::oracle::{OracleKind, OracleSample};
use inblock::sig::Keypair;
use inblock::sim::end_to_end_allocation_latency;
use inblock::{Amount, Payload, RegistryConfig, SimConfig, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim_config = SimConfig::default();
    let scheme = sim_config.scheme;
    let genesis = sim_config.genesis_timestamp;

    // The registry contract lives at an ordinary account; the simulator
    // creates it with a zero balance. Alice is the applicant.
    let registry_key = Keypair::for_account(scheme, 0, "registry");
    let alice = Keypair::for_account(scheme, 0, "alice");
    let mut sim = Simulator::new(
        sim_config.clone(),
        RegistryConfig::default(),
        registry_key.account_id(),
    );
    sim.create_account(alice.account_id(), Amount::from_u64(1_000))?;

    // Fees are quoted in fiat ($3,000 for a /32) and paid in coins at the
    // oracle's exchange rate: 200 fiat per coin makes the fee 15 coins.
    sim.registry_mut().seed_oracle(OracleSample::new(
        OracleKind::ExchangeRate,
        Amount::from_u64(200),
        genesis,
        "example",
    )?)?;

    println!("pool            {}", sim.registry().config.pool);
    println!("fee for a /32   $3000 = 15 coins at 200 fiat/coin");
    println!();

    let tx = sim.submit_to_registry(
        &alice,
        Amount::from_u64(15),
        0,
        Payload::AllocationRequest {
            length: 32,
            growth_proof: None,
        },
    )?;
    println!("t+0s    alice submits an allocation request ({tx})");

    // Nothing is final until the network has seen the transaction
    // (inclusion_delay seconds) and enough blocks have buried it
    // (confirmation depth). Wait out the propagation delay, then produce
    // blocks and watch the status change.
    sim.advance_clock(sim.config().inclusion_delay);
    let mut last = format!("{:?}", ConfirmationStatus::Pending);
    for _ in 0..14 {
        sim.produce_blocks(1)?;
        let status = format!("{:?}", sim.confirmation_status(tx));
        if status != last {
            println!(
                "t+{}s  block {:>2}: {}",
                sim.clock() - genesis,
                sim.chain().height(),
                status
            );
            last = status;
        }
    }

    let allocation = sim.registry().allocation(1).expect("granted");
    println!();
    println!("allocation #1   {}", allocation.prefix);
    println!("holder          {}", allocation.holder.to_hex());
    println!("expires         t+{}s (one year)", allocation.expiration - genesis);
    println!("alice balance   {} coins", sim.balance(&alice.account_id()));

    let measured = sim.measured_latency(tx).expect("confirmed");
    let closed_form = end_to_end_allocation_latency(
        sim.config().inclusion_delay,
        sim.config().block_interval,
        sim.config().confirmation_depth,
    );
    println!();
    println!("measured latency    {measured} s");
    println!("closed-form latency {closed_form} s  (120 + 17 + 12 x 17)");
    assert_eq!(measured, closed_form);
    Ok(())
}
