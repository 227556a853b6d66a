//! Growing a /32 into a single /30 route, through the full contract path.
//!
//! A holder who outgrows a block requests growth instead of a fresh
//! allocation (the request carries the id of the block being grown). Thanks
//! to sparse placement the buddy is normally free, so each grant doubles
//! the holding while everything still announces as one route:
//!
//!     /32 -> grow -> /31-equivalent -> grow -> /30-equivalent
//!
//! Run with: cargo run --example contiguous_growth

use inblock::oracle::{OracleKind, OracleSample};
use inblock::sig::Keypair;
use inblock::{Amount, Payload, RegistryConfig, SimConfig, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim_config = SimConfig::default();
    let scheme = sim_config.scheme;
    let registry_key = Keypair::for_account(scheme, 0, "registry");
    let alice = Keypair::for_account(scheme, 0, "alice");
    let mut sim = Simulator::new(
        sim_config,
        RegistryConfig::default(),
        registry_key.account_id(),
    );
    sim.create_account(alice.account_id(), Amount::from_u64(1_000))?;
    let genesis = sim.clock();
    sim.registry_mut().seed_oracle(OracleSample::new(
        OracleKind::ExchangeRate,
        Amount::from_u64(200),
        genesis,
        "example",
    )?)?;

    // Helper: submit one request, let it propagate, ride a block.
    let request = |sim: &mut Simulator, value: u64, growth_proof: Option<u64>| {
        sim.submit_to_registry(
            &alice,
            Amount::from_u64(value),
            0,
            Payload::AllocationRequest {
                length: 32,
                growth_proof,
            },
        )
        .expect("submit");
        sim.advance_clock(137);
        sim.produce_blocks(1).expect("block");
    };

    println!("1. initial allocation: a /32 placed sparsely ($3000 = 15 coins)");
    request(&mut sim, 15, None);
    let seed = sim.registry().allocation(1).expect("granted").clone();
    println!("   allocation #{} -> {}", seed.id, seed.prefix);
    println!();

    println!("2. first growth: the buddy /32 is free, grant is contiguous");
    request(&mut sim, 15, Some(seed.id));
    let first = sim.registry().allocation(2).expect("granted").clone();
    println!(
        "   allocation #{} -> {} (aggregatable with {})",
        first.id,
        first.prefix,
        first.aggregatable_with.expect("buddy")
    );
    println!();

    println!("3. second growth: doubling again needs a whole /31 ($6000 = 30 coins)");
    request(&mut sim, 30, Some(seed.id));
    let second = sim.registry().allocation(3).expect("granted").clone();
    println!(
        "   allocation #{} -> {} (aggregatable with {})",
        second.id,
        second.prefix,
        second.aggregatable_with.expect("aggregate")
    );
    println!();

    // Three allocation records, one BGP announcement.
    let routes = sim.registry().routes();
    let alices = routes.get(&alice.account_id()).expect("has routes");
    println!("holdings: {}, {}, {}", seed.prefix, first.prefix, second.prefix);
    println!(
        "announced routes: {}",
        alices
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    assert_eq!(alices.len(), 1);
    assert_eq!(alices[0].to_string(), "2001:1000::/30");
    println!();
    println!("the same flow is scriptable: cargo run -- run aggregation_growth");
    println!("(or: target/debug/inblock run aggregation_growth)");
    Ok(())
}
