//! How bisection placement picks prefixes.
//!
//! New blocks are carved from the *shortest* free aggregate (lowest address
//! on ties), so every holding keeps the largest possible empty neighborhood
//! around it. The payoff: a later growth request usually finds its buddy
//! block free and the two announce as one route.
//!
//! Run with: cargo run --example sparse_placement

use inblock::{Ipv6Prefix, PoolState};

fn show(pool: &PoolState, note: &str) {
    let utilization = pool.utilization();
    let allocated = pool.allocated();
    let blocks: Vec<String> = allocated.iter().map(|p| p.to_string()).collect();
    println!("  {note}");
    println!("    blocks: {}", if blocks.is_empty() { "-".to_string() } else { blocks.join(", ") });
    println!("    free fraction: {}", utilization.free_fraction);
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut pool = PoolState::new("2001:1000::/20".parse()?);
    println!("pool {}", pool.root());
    println!();

    // Three /32 allocations: each lands at the lower edge of the shortest
    // free aggregate, so the survivors of each split stay as big as
    // possible.
    println!("three sparse /32 allocations:");
    for _ in 0..3 {
        let peek = pool.peek_sparse(32)?;
        let got = pool.allocate_sparse(32)?;
        assert_eq!(peek, got);
        show(&pool, &format!("allocate /32 -> {got}"));
    }
    println!();

    // A /48 does not nibble at the /32s' neighborhoods: it goes to the
    // current shortest free aggregate like everything else.
    let small = pool.allocate_sparse(48)?;
    show(&pool, &format!("allocate /48 -> {small}"));
    println!();

    // Growth: the first /32's buddy is still free, so doubling that holding
    // is contiguous and the pair announces as a single /31.
    let first: Ipv6Prefix = "2001:1000::/32".parse()?;
    let grant = pool.allocate_contiguous(first, 32)?;
    println!("grow {first}:");
    println!("  granted {} (aggregatable: {})", grant.prefix, grant.aggregatable);
    let parent = first.parent()?;
    println!("  {first} + {} announce as {parent}", grant.prefix);
    println!();

    // Release merges freed buddies back into maximal aggregates: after
    // releasing both halves, the /31 is one free block again.
    pool.release(first)?;
    pool.release(grant.prefix)?;
    assert!(pool.is_free(&parent));
    show(&pool, &format!("release both halves -> {parent} is whole again"));

    Ok(())
}
