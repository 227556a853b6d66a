//! The fee schedule and the economic arguments around it, in exact
//! arithmetic (money is rationals end to end; nothing here floats).
//!
//! Fees are denominated in fiat and indexed to a GDP-style deflator, so the
//! real price of a block stays put while the coin's exchange rate moves.
//! The yearly price deters stockpiling: pricing usefully large chunks of
//! the whole address space runs into the trillions.
//!
//! Run with: cargo run --example fees_and_economics

use inblock::oracle::{OracleKind, OracleSample};
use inblock::registry::required_crypto_amount;
use inblock::stats::{fee_position, throughput_requirement, whole_space_cost};
use inblock::{Amount, FeeSchedule, RegistryConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = RegistryConfig::default();
    let mut schedule = FeeSchedule::new(config.base_fees_fiat.clone());

    println!("1. the fee table (yearly, fiat)");
    let lengths: Vec<u8> = schedule.base_fee_fiat.keys().copied().collect();
    for length in &lengths {
        let fee = schedule.effective_fee(*length)?;
        let position = fee_position(&fee, *length)?;
        let fee = fee.to_string();
        println!(
            "   /{length}: ${fee:>4}   incumbent registries charge ${}-${} -> {:?}",
            position.range.min, position.range.max, position.standing
        );
    }
    println!();

    println!("2. growth grants are priced by equivalence");
    println!(
        "   a /31 counts as two /32 blocks: ${}",
        schedule.fee_for_block(31)?
    );
    println!(
        "   a /30 counts as four /32 blocks: ${}",
        schedule.fee_for_block(30)?
    );
    println!();

    println!("3. the deflator moves fiat fees, the exchange rate never does");
    schedule.current_gdp_index = "11/10".parse()?; // +10% nominal GDP
    println!(
        "   after a 10% deflator rise, a /32 costs ${} (exactly 3300)",
        schedule.effective_fee(32)?
    );
    schedule.current_gdp_index = Amount::from_u64(1);
    let rate = OracleSample::new(
        OracleKind::ExchangeRate,
        Amount::from_u64(200),
        0,
        "example",
    )?;
    let coins = required_crypto_amount(&schedule.effective_fee(32)?, &rate, 0, u64::MAX)?;
    println!("   at 200 fiat/coin the same $3000 is {coins} coins");
    let rate = OracleSample::new(
        OracleKind::ExchangeRate,
        "400".parse()?,
        0,
        "example",
    )?;
    let coins = required_crypto_amount(&schedule.effective_fee(32)?, &rate, 0, u64::MAX)?;
    println!("   at 400 fiat/coin it is {coins} coins -- same fiat price");
    println!();

    println!("4. what stockpiling the space would cost per year (fee x 2^(32-len))");
    let fee_32 = schedule.effective_fee(32)?;
    for length in [24u8, 20, 8, 0] {
        println!(
            "   every /32 under a /{length:<2} -> ${}",
            whole_space_cost(&fee_32, length)
        );
    }
    println!();
    println!("   the /0 figure is exactly 2^32 x $3000 = $12,884,901,888,000;");
    println!("   the widely quoted rounded estimate is $12,600,000,000,000.");
    println!();

    println!("5. registry throughput is no obstacle");
    let yearly = 58_700u64;
    let required = throughput_requirement(yearly);
    println!(
        "   {yearly} delegations/year is {} tx/s ({} exactly)",
        required.format_sigfigs(2),
        required
    );
    println!("   a single block (every 17s) holds hours' worth of demand.");
    Ok(())
}
