//! Fusion of per-sub-network fronts into one network-wide pruning scheme.
//!
//! Every front solution is scored by its performance impairment index
//! `I = (ΔP - min ΔP) / (ΔE - min ΔE + 0.001)`, with the minima taken over the
//! solution's own sub-network. The planner starts from the unpruned network
//! and walks the ranking, overwriting one sub-network's coding per step,
//! until the parameter pruning rate reaches the target.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::arch::{pruning_rates, ArchError, ArchitectureSpec, Cost, PruningRates, SubnetPartition, FORMAT_VERSION};
use crate::moo::OptimizationResult;

/// Added to the denominator of the impairment index.
pub const GPII_EPSILON: f64 = 0.001;

#[derive(Debug, thiserror::Error)]
pub enum GpirError {
    #[error("sub-network {subnet}: baseline {what} is zero; relative changes are undefined")]
    ZeroBaseline { subnet: usize, what: &'static str },
    #[error("sub-network {subnet}: non-finite objective in {genes:?}")]
    NonFinite { subnet: usize, genes: Vec<u32> },
    #[error("target pruning rate {0} outside [0, 1)")]
    Target(f64),
    #[error("no cost known for sub-network {subnet} coding {genes:?}")]
    UnknownCoding { subnet: usize, genes: Vec<u32> },
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FrontSolution {
    #[serde(rename = "subnet")]
    pub subnet_index: usize,
    pub genes: Vec<u32>,
    pub params: u64,
    pub error: f64,
}

/// Unpruned sub-network objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub params: u64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeltaRecord {
    #[serde(flatten)]
    pub solution: FrontSolution,
    pub delta_p: f64,
    pub delta_e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ImpairmentEntry {
    #[serde(flatten)]
    pub delta: DeltaRecord,
    pub gpii: f64,
}

impl ImpairmentEntry {
    pub fn subnet(&self) -> usize {
        self.delta.solution.subnet_index
    }

    pub fn genes(&self) -> &[u32] {
        &self.delta.solution.genes
    }
}

/// Baseline and front of one sub-network's search.
pub fn front_solutions(result: &OptimizationResult) -> (Baseline, Vec<FrontSolution>) {
    let baseline = Baseline {
        params: result.baseline.objectives.params,
        error: result.baseline.objectives.error,
    };
    let front = result
        .first_front
        .iter()
        .map(|ind| FrontSolution {
            subnet_index: result.subnet_index,
            genes: ind.genes.clone(),
            params: ind.objectives.params,
            error: ind.objectives.error,
        })
        .collect();
    (baseline, front)
}

/// Relative parameter and error changes against the unpruned sub-network.
pub fn compute_deltas(front: &[FrontSolution], baseline: Baseline) -> Result<Vec<DeltaRecord>, GpirError> {
    front
        .iter()
        .map(|s| {
            if baseline.params == 0 {
                return Err(GpirError::ZeroBaseline {
                    subnet: s.subnet_index,
                    what: "parameter count",
                });
            }
            if baseline.error == 0.0 {
                return Err(GpirError::ZeroBaseline {
                    subnet: s.subnet_index,
                    what: "error",
                });
            }
            if !s.error.is_finite() || !baseline.error.is_finite() {
                return Err(GpirError::NonFinite {
                    subnet: s.subnet_index,
                    genes: s.genes.clone(),
                });
            }
            let bp = baseline.params as f64;
            Ok(DeltaRecord {
                solution: s.clone(),
                delta_p: (s.params as f64 - bp) / bp,
                delta_e: (s.error - baseline.error) / baseline.error,
            })
        })
        .collect()
}

/// Impairment index of every record, minima taken per sub-network.
/// Output order matches input order.
pub fn compute_gpii(deltas: &[DeltaRecord]) -> Vec<ImpairmentEntry> {
    let mut minima: HashMap<usize, (f64, f64)> = HashMap::new();
    for d in deltas {
        let m = minima
            .entry(d.solution.subnet_index)
            .or_insert((f64::INFINITY, f64::INFINITY));
        m.0 = m.0.min(d.delta_p);
        m.1 = m.1.min(d.delta_e);
    }
    deltas
        .iter()
        .map(|d| {
            let (min_p, min_e) = minima[&d.solution.subnet_index];
            ImpairmentEntry {
                delta: d.clone(),
                gpii: (d.delta_p - min_p) / (d.delta_e - min_e + GPII_EPSILON),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum RankOrder {
    /// Smallest index first.
    #[default]
    Ascending,
    /// Largest index first; yields a monotonically rising pruning rate.
    Descending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Ranking {
    pub format_version: u32,
    #[serde(default)]
    pub order: RankOrder,
    pub entries: Vec<ImpairmentEntry>,
}

fn tie_break(a: &ImpairmentEntry, b: &ImpairmentEntry) -> Ordering {
    a.delta
        .delta_e
        .total_cmp(&b.delta.delta_e)
        .then_with(|| a.subnet().cmp(&b.subnet()))
        .then_with(|| a.genes().cmp(b.genes()))
}

/// Sorts by impairment index; ties go to the smaller error change, then the
/// lower sub-network index, then the lexicographically smaller coding.
pub fn rank(mut entries: Vec<ImpairmentEntry>, order: RankOrder) -> Ranking {
    entries.sort_by(|a, b| {
        let by_index = a.gpii.total_cmp(&b.gpii);
        let by_index = match order {
            RankOrder::Ascending => by_index,
            RankOrder::Descending => by_index.reverse(),
        };
        by_index.then_with(|| tie_break(a, b))
    });
    Ranking {
        format_version: FORMAT_VERSION,
        order,
        entries,
    }
}

/// Deltas, indices and ranking for a set of `(baseline, front)` pairs.
pub fn build_ranking(fronts: &[(Baseline, Vec<FrontSolution>)], order: RankOrder) -> Result<Ranking, GpirError> {
    let mut deltas = Vec::new();
    for (baseline, front) in fronts {
        deltas.extend(compute_deltas(front, *baseline)?);
    }
    Ok(rank(compute_gpii(&deltas), order))
}

/// Cost model the planner evaluates schemes against.
pub trait NetworkCost {
    fn subnet_count(&self) -> usize;

    /// Cost of everything outside the sub-networks.
    fn fixed_cost(&self) -> Cost;

    /// Cost of one sub-network, pruned by `genes` or unpruned when `None`.
    fn subnet_cost(&self, subnet: usize, genes: Option<&[u32]>) -> Result<Cost, GpirError>;

    fn baseline_cost(&self) -> Result<Cost, GpirError> {
        let mut total = self.fixed_cost();
        for i in 0..self.subnet_count() {
            total += self.subnet_cost(i, None)?;
        }
        Ok(total)
    }
}

/// Analytic cost of a partitioned architecture.
#[derive(Clone, Copy, Debug)]
pub struct ArchCost<'a> {
    pub arch: &'a ArchitectureSpec,
    pub partition: &'a SubnetPartition,
}

impl NetworkCost for ArchCost<'_> {
    fn subnet_count(&self) -> usize {
        self.partition.len()
    }

    fn fixed_cost(&self) -> Cost {
        self.arch.fixed_cost()
    }

    fn subnet_cost(&self, subnet: usize, genes: Option<&[u32]>) -> Result<Cost, GpirError> {
        Ok(self.arch.subnet_cost(self.partition, subnet, genes)?)
    }
}

/// Explicit per-coding costs, for networks known only by their numbers.
#[derive(Clone, Debug, Default)]
pub struct CostTable {
    fixed: Cost,
    baselines: Vec<Cost>,
    codings: HashMap<(usize, Vec<u32>), Cost>,
}

impl CostTable {
    pub fn new(fixed: Cost, baselines: Vec<Cost>) -> Self {
        Self {
            fixed,
            baselines,
            codings: HashMap::new(),
        }
    }

    pub fn insert(&mut self, subnet: usize, genes: Vec<u32>, cost: Cost) {
        self.codings.insert((subnet, genes), cost);
    }
}

impl NetworkCost for CostTable {
    fn subnet_count(&self) -> usize {
        self.baselines.len()
    }

    fn fixed_cost(&self) -> Cost {
        self.fixed
    }

    fn subnet_cost(&self, subnet: usize, genes: Option<&[u32]>) -> Result<Cost, GpirError> {
        let unknown = || GpirError::UnknownCoding {
            subnet,
            genes: genes.map(<[u32]>::to_vec).unwrap_or_default(),
        };
        match genes {
            None => self.baselines.get(subnet).copied().ok_or_else(unknown),
            Some(g) => self.codings.get(&(subnet, g.to_vec())).copied().ok_or_else(unknown),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TraceStep {
    /// Position in the ranking.
    pub rank: usize,
    pub subnet: usize,
    pub genes: Vec<u32>,
    pub gpii: f64,
    /// Parameter pruning rate after applying this step.
    pub pr_params: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct JointScheme {
    pub format_version: u32,
    pub target_pr: f64,
    /// Selected coding per sub-network; `None` keeps it unpruned.
    pub selections: BTreeMap<usize, Option<Vec<u32>>>,
    pub totals: Cost,
    pub rates: PruningRates,
    pub reached: bool,
    pub trace: Vec<TraceStep>,
}

impl JointScheme {
    pub fn selection_vec(&self) -> Vec<Option<Vec<u32>>> {
        self.selections.values().cloned().collect()
    }
}

/// Greedy construction of a network-wide scheme from a ranking.
///
/// Stops as soon as the parameter pruning rate reaches `target_pr`. When the
/// ranking runs out first, the result is the visited state with the highest
/// rate (earliest on ties), flagged as not reached, with its trace prefix.
pub fn build_scheme<C: NetworkCost + ?Sized>(
    ranking: &Ranking,
    cost: &C,
    target_pr: f64,
) -> Result<JointScheme, GpirError> {
    if !(0.0..1.0).contains(&target_pr) {
        return Err(GpirError::Target(target_pr));
    }
    let m = cost.subnet_count();
    let fixed = cost.fixed_cost();
    let base_parts: Vec<Cost> = (0..m).map(|i| cost.subnet_cost(i, None)).collect::<Result<_, _>>()?;
    let baseline: Cost = fixed + base_parts.iter().copied().sum::<Cost>();

    let mut selections: Vec<Option<Vec<u32>>> = vec![None; m];
    let mut parts = base_parts;
    let mut trace: Vec<TraceStep> = Vec::new();
    let total = |parts: &[Cost]| fixed + parts.iter().copied().sum::<Cost>();

    let finish = |selections: Vec<Option<Vec<u32>>>, totals: Cost, trace: Vec<TraceStep>, reached: bool| JointScheme {
        format_version: FORMAT_VERSION,
        target_pr,
        selections: selections.into_iter().enumerate().collect(),
        totals,
        rates: pruning_rates(baseline, totals),
        reached,
        trace,
    };

    let mut p_cur = pruning_rates(baseline, total(&parts)).pr_params;
    if p_cur >= target_pr {
        return Ok(finish(selections, total(&parts), trace, true));
    }
    let mut best = (p_cur, selections.clone(), 0usize);

    for (pos, entry) in ranking.entries.iter().enumerate() {
        let subnet = entry.subnet();
        if subnet >= m {
            return Err(GpirError::UnknownCoding {
                subnet,
                genes: entry.genes().to_vec(),
            });
        }
        parts[subnet] = cost.subnet_cost(subnet, Some(entry.genes()))?;
        selections[subnet] = Some(entry.genes().to_vec());
        p_cur = pruning_rates(baseline, total(&parts)).pr_params;
        trace.push(TraceStep {
            rank: pos,
            subnet,
            genes: entry.genes().to_vec(),
            gpii: entry.gpii,
            pr_params: p_cur,
        });
        if p_cur >= target_pr {
            return Ok(finish(selections, total(&parts), trace, true));
        }
        if p_cur > best.0 {
            best = (p_cur, selections.clone(), trace.len());
        }
    }

    let (_, selections, steps) = best;
    trace.truncate(steps);
    let mut totals = fixed;
    for (i, sel) in selections.iter().enumerate() {
        totals += cost.subnet_cost(i, sel.as_deref())?;
    }
    Ok(finish(selections, totals, trace, false))
}
