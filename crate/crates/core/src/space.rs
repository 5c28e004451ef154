//! Exact sizes of the pruning search spaces.
//!
//! A prunable position of width `k` admits `k` choices (keep 1..=k channels).

use std::fmt;

use num_bigint::BigUint;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, ArchitectureSpec, SubnetPartition};

fn product(widths: impl IntoIterator<Item = u32>) -> BigUint {
    widths
        .into_iter()
        .fold(BigUint::from(1u32), |acc, w| acc * BigUint::from(w))
}

/// Product of the choice counts of every prunable position in the network.
pub fn whole_space(arch: &ArchitectureSpec, part: &SubnetPartition) -> Result<BigUint, ArchError> {
    let mut total = BigUint::from(1u32);
    for i in 0..part.len() {
        total *= product(arch.subnet_bounds(part, i)?);
    }
    Ok(total)
}

/// Sum over sub-networks of each one's own search space.
pub fn divided_space(arch: &ArchitectureSpec, part: &SubnetPartition) -> Result<BigUint, ArchError> {
    let mut total = BigUint::from(0u32);
    for i in 0..part.len() {
        total += product(arch.subnet_bounds(part, i)?);
    }
    Ok(total)
}

/// Same quantities from raw per-sub-network widths.
pub fn spaces_from_widths(groups: &[Vec<u32>]) -> (BigUint, BigUint) {
    let whole = product(groups.iter().flatten().copied());
    let divided = groups
        .iter()
        .map(|g| product(g.iter().copied()))
        .fold(BigUint::from(0u32), |a, b| a + b);
    (whole, divided)
}

/// Joint combinations of the solutions each sub-network's search evaluates:
/// `(pop + offspring * iters) ^ subnets`.
pub fn reachable_combinations(pop: u64, offspring: u64, iters: u64, subnets: u32) -> BigUint {
    let per = BigUint::from(pop) + BigUint::from(offspring) * BigUint::from(iters);
    per.pow(subnets)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SpaceReport {
    pub network: String,
    pub subnets: usize,
    pub prunable_positions: usize,
    /// Exact decimal integers.
    pub whole_space: String,
    pub divided_space: String,
    pub reachable: String,
    /// `whole_space` digits minus `divided_space` digits, i.e. the order of
    /// magnitude saved by the division.
    pub reduction_orders: i64,
}

impl SpaceReport {
    pub fn new(
        arch: &ArchitectureSpec,
        part: &SubnetPartition,
        pop: u64,
        offspring: u64,
        iters: u64,
    ) -> Result<Self, ArchError> {
        let whole = whole_space(arch, part)?;
        let divided = divided_space(arch, part)?;
        let reachable = reachable_combinations(pop, offspring, iters, part.len() as u32);
        let (w, d) = (whole.to_string(), divided.to_string());
        Ok(Self {
            network: arch.name().to_string(),
            subnets: part.len(),
            prunable_positions: arch.prunable_count(),
            reduction_orders: w.len() as i64 - d.len() as i64,
            whole_space: w,
            divided_space: d,
            reachable: reachable.to_string(),
        })
    }
}

impl fmt::Display for SpaceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("network", self.network.clone()),
            ("sub-networks", self.subnets.to_string()),
            ("prunable positions", self.prunable_positions.to_string()),
            ("whole space", self.whole_space.clone()),
            ("divided space", self.divided_space.clone()),
            ("orders saved", self.reduction_orders.to_string()),
            ("reachable combinations", self.reachable.clone()),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<24}{v}")?;
        }
        Ok(())
    }
}
