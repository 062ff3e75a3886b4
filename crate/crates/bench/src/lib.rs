//! Shared fixtures for the benchmarks.

use contagion_core::cascade::initialize_banks;
use contagion_core::netgen::assign_loans;
use contagion_core::rng::substream;
use contagion_core::{BalanceSheetSpec, BankPopulation, ExposureNetwork, NetworkSpec, Result};

/// One seeded draw of banks and a weighted network at interbank share `theta`.
pub fn cascade_fixture(
    network: &NetworkSpec,
    sheet: &BalanceSheetSpec,
    theta: f64,
    seed: u64,
) -> Result<(BankPopulation, ExposureNetwork)> {
    let net = network.generate(sheet.m, &mut substream(seed, &[0]))?;
    let banks = initialize_banks(sheet, &mut substream(seed, &[1]), &mut substream(seed, &[2]))?;
    let net = assign_loans(net, theta, &banks.assets0)?;
    Ok((banks, net))
}
