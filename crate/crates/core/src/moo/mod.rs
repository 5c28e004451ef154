//! NSGA-II over integer prune codings.
//!
//! [`evolve`] runs a (mu + lambda) loop for one sub-network: the initial
//! population is the unpruned coding plus distinct uniformly random codings;
//! each iteration breeds offspring by binary tournament, integer SBX and
//! polynomial mutation, evaluates them as one batch and keeps the best
//! `population_size` by (front rank, crowding distance, coding).

mod operators;
mod sort;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, ArchitectureSpec, Cost, SubnetPartition};
use crate::eval::{EvalError, Evaluator};
use crate::rng::{seeded, SearchRng};

pub use operators::{poly_mutate_integer, sbx_integer};
pub use sort::{crowding_distance, dominates, fast_nondominated_sort};

#[derive(Debug, thiserror::Error)]
pub enum MooError {
    #[error("gene vectors differ in length ({left} vs {right}, {bounds} bounds)")]
    LengthMismatch { left: usize, right: usize, bounds: usize },
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("evaluation of sub-network {subnet} coding {genes:?} failed: {source}")]
    Evaluation {
        subnet: usize,
        genes: Vec<u32>,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Both objectives are minimized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub params: u64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<u32>,
    pub objectives: Objectives,
    /// Front index from the most recent sort.
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    /// Tournament and truncation order: lower rank, then larger crowding,
    /// then the lexicographically smaller coding.
    fn selection_cmp(&self, other: &Self) -> Ordering {
        self.rank
            .cmp(&other.rank)
            .then_with(|| other.crowding.total_cmp(&self.crowding))
            .then_with(|| self.genes.cmp(&other.genes))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub offspring_per_iteration: usize,
    pub iterations: usize,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    /// Per-gene mutation probability; `None` means `1 / genome length`.
    pub mutation_prob: Option<f64>,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self::three_subnet_profile()
    }
}

impl EvolutionConfig {
    /// Settings used for 3-way partitions (ResNet-56/110).
    pub fn three_subnet_profile() -> Self {
        Self {
            population_size: 40,
            offspring_per_iteration: 20,
            iterations: 7,
            eta_crossover: 20.0,
            eta_mutation: 20.0,
            mutation_prob: None,
            seed: 0,
        }
    }

    /// Settings used for 4-way partitions (ResNet-50, VGG-16).
    pub fn four_subnet_profile() -> Self {
        Self {
            population_size: 20,
            offspring_per_iteration: 10,
            iterations: 5,
            ..Self::three_subnet_profile()
        }
    }

    /// Evaluations performed by one run without caching.
    pub fn budget(&self) -> usize {
        self.population_size + self.offspring_per_iteration * self.iterations
    }

    pub fn validate(&self) -> Result<(), MooError> {
        let fail = |m: &str| Err(MooError::Config(m.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if self.offspring_per_iteration < 1 {
            return fail("offspring_per_iteration must be positive");
        }
        if !(self.eta_crossover > 0.0 && self.eta_crossover.is_finite()) {
            return fail("eta_crossover must be positive");
        }
        if !(self.eta_mutation > 0.0 && self.eta_mutation.is_finite()) {
            return fail("eta_mutation must be positive");
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return fail("mutation_prob must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// The search space of one sub-network.
pub trait PruneProblem: Sync {
    fn subnet_index(&self) -> usize;
    /// Per-gene upper bounds; the lower bound is always 1.
    fn bounds(&self) -> &[u32];
    /// Parameter count of the pruned sub-network.
    fn params(&self, genes: &[u32]) -> Result<u64, MooError>;
}

/// A sub-network of a concrete architecture.
#[derive(Clone, Debug)]
pub struct SubnetContext {
    arch: Arc<ArchitectureSpec>,
    partition: Arc<SubnetPartition>,
    index: usize,
    bounds: Vec<u32>,
    baseline: Cost,
}

impl SubnetContext {
    pub fn new(arch: Arc<ArchitectureSpec>, partition: Arc<SubnetPartition>, index: usize) -> Result<Self, ArchError> {
        let bounds = arch.subnet_bounds(&partition, index)?;
        let baseline = arch.subnet_cost(&partition, index, None)?;
        Ok(Self {
            arch,
            partition,
            index,
            bounds,
            baseline,
        })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn partition(&self) -> &SubnetPartition {
        &self.partition
    }

    pub fn baseline_cost(&self) -> Cost {
        self.baseline
    }

    pub fn cost(&self, genes: &[u32]) -> Result<Cost, ArchError> {
        self.arch.subnet_cost(&self.partition, self.index, Some(genes))
    }
}

impl PruneProblem for SubnetContext {
    fn subnet_index(&self) -> usize {
        self.index
    }

    fn bounds(&self) -> &[u32] {
        &self.bounds
    }

    fn params(&self, genes: &[u32]) -> Result<u64, MooError> {
        Ok(self.cost(genes)?.params)
    }
}

/// Best single-objective values in the population after each generation
/// (index 0 is the initial population).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GenerationStats {
    pub best_params: u64,
    pub best_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub subnet_index: usize,
    /// Non-dominated distinct codings among everything evaluated, by ascending params.
    pub first_front: Vec<Individual>,
    /// Every evaluated individual in generation order, duplicates included.
    pub archive: Vec<Individual>,
    /// The unpruned coding as evaluated in the initial population.
    pub baseline: Individual,
    pub final_population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
}

/// Pareto set of `archive` with duplicate codings collapsed, ordered by
/// ascending params then coding.
pub fn pareto_front(archive: &[Individual]) -> Vec<Individual> {
    let mut unique: BTreeMap<&[u32], &Individual> = BTreeMap::new();
    for ind in archive {
        unique.entry(&ind.genes).or_insert(ind);
    }
    let members: Vec<&Individual> = unique.into_values().collect();
    let objs: Vec<Objectives> = members.iter().map(|i| i.objectives).collect();
    let fronts = fast_nondominated_sort(&objs);
    let Some(first) = fronts.first() else {
        return Vec::new();
    };
    let crowd = crowding_distance(&objs, first);
    let mut out: Vec<Individual> = first
        .iter()
        .zip(crowd)
        .map(|(&i, c)| Individual {
            rank: 0,
            crowding: c,
            ..members[i].clone()
        })
        .collect();
    out.sort_by(|a, b| {
        a.objectives
            .params
            .cmp(&b.objectives.params)
            .then_with(|| a.genes.cmp(&b.genes))
    });
    out
}

fn space_size(bounds: &[u32]) -> u128 {
    bounds.iter().fold(1u128, |acc, &b| acc.saturating_mul(u128::from(b)))
}

fn random_coding(bounds: &[u32], rng: &mut SearchRng) -> Vec<u32> {
    bounds.iter().map(|&b| rng.random_range(1..=b.max(1))).collect()
}

fn initial_population(bounds: &[u32], size: usize, rng: &mut SearchRng) -> Vec<Vec<u32>> {
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut pop = vec![bounds.to_vec()];
    seen.insert(bounds.to_vec());
    let distinct_available = space_size(bounds);
    while pop.len() < size {
        let g = random_coding(bounds, rng);
        if (seen.len() as u128) < distinct_available && !seen.insert(g.clone()) {
            continue;
        }
        pop.push(g);
    }
    pop
}

fn evaluate_all<P, E>(problem: &P, evaluator: &E, batch: Vec<Vec<u32>>) -> Result<Vec<Individual>, MooError>
where
    P: PruneProblem + ?Sized,
    E: Evaluator + ?Sized,
{
    let subnet = problem.subnet_index();
    let errors = evaluator.evaluate_batch(subnet, &batch);
    batch
        .into_iter()
        .zip(errors)
        .map(|(genes, res)| {
            let error = match res {
                Ok(e) if e.is_finite() && e >= 0.0 => Ok(e),
                Ok(e) => Err(EvalError::BadValue(e)),
                Err(source) => Err(source),
            }
            .map_err(|source| MooError::Evaluation {
                subnet,
                genes: genes.clone(),
                source,
            })?;
            let params = problem.params(&genes)?;
            Ok(Individual {
                genes,
                objectives: Objectives { params, error },
                rank: 0,
                crowding: 0.0,
            })
        })
        .collect()
}

/// Sorts `pool`, annotates rank and crowding, and keeps the best `keep`.
fn environmental_selection(mut pool: Vec<Individual>, keep: usize) -> Vec<Individual> {
    let objs: Vec<Objectives> = pool.iter().map(|i| i.objectives).collect();
    for (rank, front) in fast_nondominated_sort(&objs).iter().enumerate() {
        for (&i, c) in front.iter().zip(crowding_distance(&objs, front)) {
            pool[i].rank = rank;
            pool[i].crowding = c;
        }
    }
    pool.sort_by(Individual::selection_cmp);
    pool.truncate(keep);
    pool
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut SearchRng) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.selection_cmp(a) == Ordering::Less {
        b
    } else {
        a
    }
}

fn stats(pop: &[Individual]) -> GenerationStats {
    GenerationStats {
        best_params: pop.iter().map(|i| i.objectives.params).min().unwrap_or(0),
        best_error: pop.iter().map(|i| i.objectives.error).fold(f64::INFINITY, f64::min),
    }
}

/// Runs NSGA-II on one sub-network. Deterministic for a fixed config (seed
/// included) and a deterministic evaluator.
pub fn evolve<P, E>(problem: &P, config: &EvolutionConfig, evaluator: &E) -> Result<OptimizationResult, MooError>
where
    P: PruneProblem + ?Sized,
    E: Evaluator + ?Sized,
{
    config.validate()?;
    let bounds = problem.bounds().to_vec();
    let mut rng = seeded(config.seed);
    let mutation_prob = config.mutation_prob.unwrap_or_else(|| 1.0 / bounds.len().max(1) as f64);

    let initial = initial_population(&bounds, config.population_size, &mut rng);
    let mut archive = evaluate_all(problem, evaluator, initial)?;
    let baseline = archive[0].clone();
    let mut population = environmental_selection(archive.clone(), config.population_size);
    let mut history = vec![stats(&population)];

    for _ in 0..config.iterations {
        let mut children = Vec::with_capacity(config.offspring_per_iteration + 1);
        while children.len() < config.offspring_per_iteration {
            let p1 = tournament(&population, &mut rng);
            let p2 = tournament(&population, &mut rng);
            let (mut c1, mut c2) = sbx_integer(&p1.genes, &p2.genes, &bounds, config.eta_crossover, &mut rng)?;
            poly_mutate_integer(&mut c1, &bounds, config.eta_mutation, mutation_prob, &mut rng);
            poly_mutate_integer(&mut c2, &bounds, config.eta_mutation, mutation_prob, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        children.truncate(config.offspring_per_iteration);
        let offspring = evaluate_all(problem, evaluator, children)?;
        archive.extend(offspring.iter().cloned());
        population.extend(offspring);
        population = environmental_selection(population, config.population_size);
        history.push(stats(&population));
    }

    Ok(OptimizationResult {
        subnet_index: problem.subnet_index(),
        first_front: pareto_front(&archive),
        evaluations: archive.len(),
        archive,
        baseline,
        final_population: population,
        history,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{SurrogateEvaluator, SurrogateParams};

    /// Genome `[a, b]` in `[1, 8]^2`; params `a + b`, error `1 / (a * b)`.
    struct Toy {
        bounds: Vec<u32>,
    }

    impl PruneProblem for Toy {
        fn subnet_index(&self) -> usize {
            0
        }
        fn bounds(&self) -> &[u32] {
            &self.bounds
        }
        fn params(&self, genes: &[u32]) -> Result<u64, MooError> {
            Ok(genes.iter().map(|&g| u64::from(g)).sum())
        }
    }

    struct InverseProduct;

    impl Evaluator for InverseProduct {
        fn evaluate(&self, _: usize, genes: &[u32]) -> Result<f64, EvalError> {
            Ok(1.0 / genes.iter().map(|&g| f64::from(g)).product::<f64>())
        }
        fn fingerprint(&self) -> String {
            "inverse-product".into()
        }
    }

    struct Failing;

    impl Evaluator for Failing {
        fn evaluate(&self, _: usize, genes: &[u32]) -> Result<f64, EvalError> {
            if genes[0] == 8 {
                Err(EvalError::Failed("boom".into()))
            } else {
                Ok(0.1)
            }
        }
        fn fingerprint(&self) -> String {
            "failing".into()
        }
    }

    fn toy() -> Toy {
        Toy { bounds: vec![8, 8] }
    }

    #[test]
    fn budget_matches_table_profile() {
        let cfg = EvolutionConfig::three_subnet_profile();
        assert_eq!(cfg.budget(), 180);
        let p = toy();
        let r = evolve(&p, &EvolutionConfig { seed: 3, ..cfg }, &InverseProduct).unwrap();
        assert_eq!(r.evaluations, 180);
        assert_eq!(r.archive.len(), 180);
        assert_eq!(EvolutionConfig::four_subnet_profile().budget(), 70);
    }

    #[test]
    fn zero_iterations_gives_front_of_initial_population() {
        let cfg = EvolutionConfig {
            population_size: 10,
            offspring_per_iteration: 4,
            iterations: 0,
            seed: 1,
            ..Default::default()
        };
        let r = evolve(&toy(), &cfg, &InverseProduct).unwrap();
        assert_eq!(r.archive.len(), 10);
        assert_eq!(r.first_front, pareto_front(&r.archive[..10]));
    }

    #[test]
    fn baseline_is_first_evaluated() {
        let cfg = EvolutionConfig {
            population_size: 6,
            offspring_per_iteration: 2,
            iterations: 2,
            ..Default::default()
        };
        let r = evolve(&toy(), &cfg, &InverseProduct).unwrap();
        assert_eq!(r.baseline.genes, vec![8, 8]);
        assert_eq!(r.archive[0].genes, vec![8, 8]);
    }

    #[test]
    fn evaluator_failure_carries_coding() {
        let cfg = EvolutionConfig {
            population_size: 4,
            ..Default::default()
        };
        match evolve(&toy(), &cfg, &Failing) {
            Err(MooError::Evaluation { genes, .. }) => assert_eq!(genes[0], 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = EvolutionConfig {
            population_size: 1,
            ..Default::default()
        };
        assert!(matches!(
            evolve(&toy(), &cfg, &InverseProduct),
            Err(MooError::Config(_))
        ));
    }

    #[test]
    fn seed_determinism_and_elitism() {
        let cfg = EvolutionConfig {
            population_size: 12,
            offspring_per_iteration: 6,
            iterations: 15,
            seed: 77,
            ..Default::default()
        };
        let a = evolve(&toy(), &cfg, &InverseProduct).unwrap();
        let b = evolve(&toy(), &cfg, &InverseProduct).unwrap();
        assert_eq!(a, b);
        for w in a.history.windows(2) {
            assert!(w[1].best_params <= w[0].best_params);
            assert!(w[1].best_error <= w[0].best_error);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn search_invariants(
            bounds in proptest::collection::vec(1u32..12, 1..5),
            pop in 2usize..16,
            off in 1usize..10,
            iters in 0usize..6,
            seed in proptest::prelude::any::<u64>(),
        ) {
            let problem = Toy { bounds: bounds.clone() };
            let cfg = EvolutionConfig {
                population_size: pop,
                offspring_per_iteration: off,
                iterations: iters,
                seed,
                ..Default::default()
            };
            let r = evolve(&problem, &cfg, &InverseProduct).unwrap();
            proptest::prop_assert_eq!(r.archive.len(), pop + off * iters);
            proptest::prop_assert_eq!(r.evaluations, cfg.budget());
            for ind in &r.archive {
                proptest::prop_assert!(ind.genes.iter().zip(&bounds).all(|(g, b)| (1..=*b).contains(g)));
            }
            proptest::prop_assert_eq!(&r.first_front, &pareto_front(&r.archive));
            for a in &r.first_front {
                proptest::prop_assert!(!r.first_front.iter().any(|b| dominates(&b.objectives, &a.objectives)));
            }
            proptest::prop_assert_eq!(r.history.len(), iters + 1);
            for w in r.history.windows(2) {
                proptest::prop_assert!(w[1].best_params <= w[0].best_params);
                proptest::prop_assert!(w[1].best_error <= w[0].best_error);
            }
            proptest::prop_assert_eq!(evolve(&problem, &cfg, &InverseProduct).unwrap(), r);
        }
    }

    #[test]
    fn first_front_is_archive_pareto_set() {
        let cfg = EvolutionConfig {
            population_size: 10,
            offspring_per_iteration: 10,
            iterations: 10,
            seed: 5,
            ..Default::default()
        };
        let r = evolve(&toy(), &cfg, &InverseProduct).unwrap();
        for a in &r.first_front {
            assert!(!r.first_front.iter().any(|b| dominates(&b.objectives, &a.objectives)));
            assert!(!r.archive.iter().any(|b| dominates(&b.objectives, &a.objectives)));
        }
        for a in &r.archive {
            let on_front = r.first_front.iter().any(|f| f.genes == a.genes);
            let dominated = r.archive.iter().any(|b| dominates(&b.objectives, &a.objectives));
            assert_eq!(on_front, !dominated, "{:?}", a.genes);
        }
    }

    #[test]
    fn runs_against_real_subnet() {
        let arch = Arc::new(crate::arch::build_preset("resnet56", 10, 32).unwrap());
        let part = Arc::new(crate::arch::partition_by_resolution(&arch));
        let ctx = SubnetContext::new(arch.clone(), part.clone(), 1).unwrap();
        let eval = SurrogateEvaluator::new(arch, part, SurrogateParams::default()).unwrap();
        let cfg = EvolutionConfig {
            population_size: 8,
            offspring_per_iteration: 4,
            iterations: 3,
            seed: 7,
            ..Default::default()
        };
        let r = evolve(&ctx, &cfg, &eval).unwrap();
        assert_eq!(r.evaluations, 20);
        assert_eq!(r.baseline.objectives.params, ctx.baseline_cost().params);
        for ind in &r.archive {
            let report = ctx
                .arch()
                .validate_coding(ctx.partition(), &crate::arch::PruneCoding::new(1, ind.genes.clone()));
            assert!(report.is_valid());
        }
    }
}
