//! NSGA-II search loop.
//!
//! Objectives are always minimized here; callers map maximized quantities
//! through [`crate::objectives::to_minimization`] before they reach the
//! engine. With a single objective the non-dominated fronts collapse into a
//! chain ordered by value and the loop is a plain elitist (mu + lambda) GA.

mod metrics;
mod sort;

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, info};

use crate::objectives::ObjectiveSpec;
use crate::space::{self, Genome, LatentSpaceSpec, OperatorParams, SpaceError};

pub use metrics::hypervolume_2d;
pub use sort::{crowding_distance, dominates, non_dominated_sort};

/// Stand-in for objective values that are NaN or infinite.
pub const PENALTY: f64 = 1e12;
pub const DEFAULT_POPULATION: usize = 64;
pub const DEFAULT_GENERATIONS: usize = 500;

/// The portable generator every run is driven by.
pub type SearchRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("objective vectors have different lengths ({expected} vs {actual})")]
    ObjectiveLength { expected: usize, actual: usize },
    #[error("cannot select from an empty population")]
    EmptyPopulation,
}

/// Failure reported by an [`Evaluator`]; aborts the run.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct EvalError {
    pub message: String,
    #[source]
    pub source: Option<Box<dyn std::error::Error + Send + Sync>>,
}

impl EvalError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), source: None }
    }

    pub fn with_source(
        message: impl Into<String>,
        source: impl std::error::Error + Send + Sync + 'static,
    ) -> Self {
        Self { message: message.into(), source: Some(Box::new(source)) }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("evaluation failed at generation {generation}: {source}")]
    Evaluation {
        generation: usize,
        #[source]
        source: EvalError,
        /// History up to the last completed generation.
        history: Vec<GenerationStats>,
        evaluations: usize,
    },
}

/// Minimized objective values for one genome, as returned by an evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    /// Set when the values are stand-ins for a failed measurement.
    pub penalized: bool,
}

impl Evaluation {
    pub fn new(objectives: Vec<f64>) -> Self {
        Self { objectives, penalized: false }
    }

    pub fn penalty(n_objectives: usize) -> Self {
        Self { objectives: vec![PENALTY; n_objectives], penalized: true }
    }
}

/// Maps a batch of genomes to objective values, order-aligned with the input.
pub trait Evaluator {
    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Evaluation>, EvalError>;
}

/// Wraps a per-genome closure returning minimized objectives.
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: FnMut(&Genome) -> Vec<f64>,
{
    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Evaluation>, EvalError> {
        Ok(genomes.iter().map(|g| Evaluation::new((self.0)(g))).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub space: LatentSpaceSpec,
    pub operator_params: OperatorParams,
    pub population_size: usize,
    pub generations: usize,
    pub objective_specs: Vec<ObjectiveSpec>,
    pub seed: u64,
    /// Stride of the human-readable progress log.
    pub log_every: usize,
}

impl SearchConfig {
    pub fn new(space: LatentSpaceSpec, objective_specs: Vec<ObjectiveSpec>) -> Self {
        Self {
            operator_params: OperatorParams::for_space(&space),
            space,
            population_size: DEFAULT_POPULATION,
            generations: DEFAULT_GENERATIONS,
            objective_specs,
            seed: 0,
            log_every: 10,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let invalid = |msg: String| Err(SearchError::InvalidConfig(msg));
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return invalid(format!(
                "population_size must be even and at least 4, got {}",
                self.population_size
            ));
        }
        if self.generations == 0 {
            return invalid("generations must be at least 1".into());
        }
        if self.log_every == 0 {
            return invalid("log_every must be at least 1".into());
        }
        if self.objective_specs.is_empty() {
            return invalid("at least one objective is required".into());
        }
        for spec in &self.objective_specs {
            spec.validate().map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
        }
        self.operator_params.validate()?;
        Ok(())
    }

    fn n_objectives(&self) -> usize {
        self.objective_specs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    /// Minimized objective values.
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
    pub penalized: bool,
}

impl Individual {
    fn unranked(genome: Genome, evaluation: Evaluation) -> Self {
        Self {
            genome,
            objectives: evaluation.objectives,
            rank: usize::MAX,
            crowding: 0.0,
            penalized: evaluation.penalized,
        }
    }
}

/// Per-generation summary. Generation 0 is the initial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub evaluations: usize,
    /// Best (lowest) minimized value of each objective in the population.
    pub best: Vec<f64>,
    pub mean: Vec<f64>,
    pub front_size: usize,
    /// Genomes in this generation's evaluated batch that received the penalty.
    pub penalized: usize,
    /// Hash of the surviving population (genes and objectives, bitwise).
    pub digest: String,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub pareto_front: Vec<Individual>,
    /// Lowest value of the first objective, i.e. the highest similarity.
    pub best: Individual,
    pub population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    /// False when an observer stopped the run early.
    pub completed: bool,
}

/// Receives every generation's statistics; `Break` stops the run after it.
pub trait SearchObserver {
    fn on_generation(&mut self, stats: &GenerationStats) -> ControlFlow<()>;
}

impl<F> SearchObserver for F
where
    F: FnMut(&GenerationStats) -> ControlFlow<()>,
{
    fn on_generation(&mut self, stats: &GenerationStats) -> ControlFlow<()> {
        self(stats)
    }
}

/// Crowded-comparison binary tournament: two uniform draws (with
/// replacement); lower rank wins, then larger crowding, then the first draw.
pub fn tournament_select<'a, R: Rng + ?Sized>(
    population: &'a [Individual],
    rng: &mut R,
) -> Result<&'a Individual, EngineError> {
    if population.is_empty() {
        return Err(EngineError::EmptyPopulation);
    }
    let a = &population[rng.random_range(0..population.len())];
    let b = &population[rng.random_range(0..population.len())];
    Ok(crowded_winner(a, b))
}

fn crowded_winner<'a>(a: &'a Individual, b: &'a Individual) -> &'a Individual {
    if b.rank < a.rank || (b.rank == a.rank && b.crowding > a.crowding) {
        b
    } else {
        a
    }
}

/// Assigns rank and crowding to every member of `population` in place.
pub fn rank_population(population: &mut [Individual]) -> Result<Vec<Vec<usize>>, EngineError> {
    let fronts = non_dominated_sort(&objective_rows(population))?;
    for (rank, front) in fronts.iter().enumerate() {
        let rows: Vec<&[f64]> = front.iter().map(|&i| population[i].objectives.as_slice()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&rows)) {
            population[i].rank = rank;
            population[i].crowding = d;
        }
    }
    Ok(fronts)
}

fn objective_rows(population: &[Individual]) -> Vec<&[f64]> {
    population.iter().map(|ind| ind.objectives.as_slice()).collect()
}

/// (mu + lambda) survivor selection: whole fronts in rank order, the split
/// front truncated by descending crowding (ties to the lower index).
pub fn environmental_selection(
    mut combined: Vec<Individual>,
    size: usize,
) -> Result<Vec<Individual>, EngineError> {
    let fronts = rank_population(&mut combined)?;
    let mut keep = Vec::with_capacity(size);
    for front in fronts {
        if keep.len() + front.len() <= size {
            keep.extend(front);
        } else {
            let mut split = front;
            split.sort_by(|&a, &b| {
                combined[b].crowding.total_cmp(&combined[a].crowding).then(a.cmp(&b))
            });
            split.truncate(size - keep.len());
            split.sort_unstable();
            keep.extend(split);
        }
        if keep.len() == size {
            break;
        }
    }
    let mut slots: Vec<Option<Individual>> = combined.into_iter().map(Some).collect();
    Ok(keep.into_iter().map(|i| slots[i].take().expect("index kept once")).collect())
}

fn evaluate_batch(
    config: &SearchConfig,
    evaluator: &mut dyn Evaluator,
    genomes: &[Genome],
) -> Result<Vec<Evaluation>, EvalError> {
    let mut results = evaluator.evaluate(genomes)?;
    if results.len() != genomes.len() {
        return Err(EvalError::new(format!(
            "evaluator returned {} results for {} genomes",
            results.len(),
            genomes.len()
        )));
    }
    let m = config.n_objectives();
    for eval in &mut results {
        if eval.objectives.len() != m {
            return Err(EvalError::new(format!(
                "evaluator returned {} objectives, run has {m}",
                eval.objectives.len()
            )));
        }
        for v in &mut eval.objectives {
            if !v.is_finite() {
                *v = PENALTY;
                eval.penalized = true;
            }
        }
    }
    Ok(results)
}

/// Survivors of one generation plus how many offspring were penalized.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub survivors: Vec<Individual>,
    pub penalized: usize,
}

/// Breeds one offspring batch from a ranked population, evaluates it, and
/// keeps the best `population_size` of parents and offspring.
pub fn evolve_generation<R: Rng + ?Sized>(
    population: &[Individual],
    config: &SearchConfig,
    evaluator: &mut dyn Evaluator,
    rng: &mut R,
) -> Result<GenerationOutcome, SearchError> {
    let n = population.len();
    let mut offspring = Vec::with_capacity(n);
    while offspring.len() < n {
        let a = tournament_select(population, rng)?;
        let b = tournament_select(population, rng)?;
        let params = &config.operator_params;
        let (c1, c2) = space::crossover(&config.space, &a.genome, &b.genome, params, rng)?;
        offspring.push(space::mutate(&config.space, &c1, params, rng)?);
        if offspring.len() < n {
            offspring.push(space::mutate(&config.space, &c2, params, rng)?);
        }
    }
    let evaluations = evaluate_batch(config, evaluator, &offspring).map_err(|source| {
        SearchError::Evaluation { generation: 0, source, history: Vec::new(), evaluations: 0 }
    })?;
    let penalized = evaluations.iter().filter(|e| e.penalized).count();
    let combined: Vec<Individual> = population
        .iter()
        .cloned()
        .chain(offspring.into_iter().zip(evaluations).map(|(g, e)| Individual::unranked(g, e)))
        .collect();
    let survivors = environmental_selection(combined, n)?;
    Ok(GenerationOutcome { survivors, penalized })
}

fn population_digest(population: &[Individual]) -> String {
    let mut hasher = Sha256::new();
    for ind in population {
        for v in ind.genome.values().iter().chain(&ind.objectives) {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn stats(generation: usize, evaluations: usize, penalized: usize, population: &[Individual]) -> GenerationStats {
    let m = population[0].objectives.len();
    let best = (0..m)
        .map(|k| population.iter().map(|ind| ind.objectives[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let mean = (0..m)
        .map(|k| population.iter().map(|ind| ind.objectives[k]).sum::<f64>() / population.len() as f64)
        .collect();
    GenerationStats {
        generation,
        evaluations,
        best,
        mean,
        front_size: population.iter().filter(|ind| ind.rank == 0).count(),
        penalized,
        digest: population_digest(population),
    }
}

fn best_of(population: &[Individual]) -> &Individual {
    population
        .iter()
        .reduce(|best, ind| if ind.objectives[0] < best.objectives[0] { ind } else { best })
        .expect("population is non-empty")
}

pub fn run_search(config: &SearchConfig, evaluator: &mut dyn Evaluator) -> Result<SearchResult, SearchError> {
    run_search_observed(config, evaluator, &mut |_: &GenerationStats| ControlFlow::Continue(()))
}

/// Full run: sample, evaluate, then `config.generations` rounds of
/// [`evolve_generation`]. The observer sees generation 0 and every later one.
pub fn run_search_observed(
    config: &SearchConfig,
    evaluator: &mut dyn Evaluator,
    observer: &mut dyn SearchObserver,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut history = Vec::with_capacity(config.generations.min(4096) + 1);

    let genomes: Vec<Genome> = (0..config.population_size)
        .map(|_| space::sample(&config.space, &mut rng))
        .collect();
    let initial = evaluate_batch(config, evaluator, &genomes).map_err(|source| {
        SearchError::Evaluation { generation: 0, source, history: Vec::new(), evaluations: 0 }
    })?;
    let mut evaluations = genomes.len();
    let penalized = initial.iter().filter(|e| e.penalized).count();
    let mut population: Vec<Individual> = genomes
        .into_iter()
        .zip(initial)
        .map(|(g, e)| Individual::unranked(g, e))
        .collect();
    rank_population(&mut population)?;

    let first = stats(0, evaluations, penalized, &population);
    let mut completed = observer.on_generation(&first).is_continue();
    history.push(first);

    let mut generation = 0;
    while completed && generation < config.generations {
        generation += 1;
        let outcome = match evolve_generation(&population, config, evaluator, &mut rng) {
            Ok(outcome) => outcome,
            Err(SearchError::Evaluation { source, .. }) => {
                return Err(SearchError::Evaluation { generation, source, history, evaluations })
            }
            Err(e) => return Err(e),
        };
        evaluations += config.population_size;
        population = outcome.survivors;
        let record = stats(generation, evaluations, outcome.penalized, &population);
        if generation % config.log_every == 0 || generation == config.generations {
            info!(
                generation,
                evaluations,
                best = ?record.best,
                front = record.front_size,
                "search progress"
            );
        }
        debug!(generation, digest = %record.digest, "generation done");
        completed = observer.on_generation(&record).is_continue();
        history.push(record);
    }
    let completed = generation == config.generations;

    let best = best_of(&population).clone();
    let pareto_front = population.iter().filter(|ind| ind.rank == 0).cloned().collect();
    Ok(SearchResult { pareto_front, best, population, history, evaluations, completed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Direction, ObjectiveSpec};
    use crate::space::{BlockSpec, RealDistribution};

    fn ind(objectives: Vec<f64>, rank: usize, crowding: f64) -> Individual {
        Individual { genome: Genome(vec![]), objectives, rank, crowding, penalized: false }
    }

    fn normal_space(dim: usize) -> LatentSpaceSpec {
        LatentSpaceSpec::new(vec![BlockSpec::Real {
            length: dim,
            distribution: RealDistribution::Normal { mean: 0.0, stddev: 1.0 },
        }])
        .unwrap()
    }

    fn sphere_config(dim: usize, pop: usize, generations: usize, seed: u64) -> SearchConfig {
        let mut config = SearchConfig::new(
            normal_space(dim),
            vec![ObjectiveSpec::custom("sphere", Direction::Minimize)],
        );
        config.population_size = pop;
        config.generations = generations;
        config.seed = seed;
        config
    }

    fn sphere(g: &Genome) -> Vec<f64> {
        vec![g.values().iter().map(|v| v * v).sum()]
    }

    #[test]
    fn tournament_rank_then_crowding_then_first() {
        let a = ind(vec![0.0], 0, 1.0);
        let b = ind(vec![1.0], 1, f64::INFINITY);
        assert!(std::ptr::eq(crowded_winner(&a, &b), &a));
        assert!(std::ptr::eq(crowded_winner(&b, &a), &a));
        let c = ind(vec![0.0], 0, f64::INFINITY);
        let d = ind(vec![0.0], 0, 1.3);
        assert!(std::ptr::eq(crowded_winner(&d, &c), &c));
        let e = ind(vec![0.0], 2, 0.5);
        let f = ind(vec![0.0], 2, 0.5);
        assert!(std::ptr::eq(crowded_winner(&e, &f), &e));
        assert!(std::ptr::eq(crowded_winner(&f, &e), &f));
    }

    #[test]
    fn tournament_on_empty_population() {
        let mut rng = rng_from_seed(0);
        assert_eq!(tournament_select(&[], &mut rng).unwrap_err(), EngineError::EmptyPopulation);
    }

    #[test]
    fn selection_keeps_exact_first_front() {
        // four mutually non-dominated points plus four dominated ones
        let points = [
            vec![0.0, 4.0], vec![5.0, 5.0], vec![1.0, 3.0], vec![6.0, 6.0],
            vec![3.0, 1.0], vec![7.0, 7.0], vec![4.0, 0.0], vec![8.0, 8.0],
        ];
        let combined: Vec<Individual> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Individual { genome: Genome(vec![i as f64]), ..ind(p.clone(), 0, 0.0) })
            .collect();
        let survivors = environmental_selection(combined, 4).unwrap();
        let ids: Vec<f64> = survivors.iter().map(|s| s.genome.values()[0]).collect();
        assert_eq!(ids, vec![0.0, 2.0, 4.0, 6.0]);
        assert!(survivors.iter().all(|s| s.rank == 0));
    }

    #[test]
    fn split_front_truncated_by_crowding() {
        let points = [vec![0.0, 1.0], vec![0.1, 0.9], vec![0.5, 0.5], vec![1.0, 0.0], vec![2.0, 2.0]];
        let combined: Vec<Individual> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Individual { genome: Genome(vec![i as f64]), ..ind(p.clone(), 0, 0.0) })
            .collect();
        let survivors = environmental_selection(combined, 3).unwrap();
        let ids: Vec<f64> = survivors.iter().map(|s| s.genome.values()[0]).collect();
        // boundaries (inf) first, then the wider-spaced interior point
        assert_eq!(ids, vec![0.0, 2.0, 3.0]);
    }

    #[test]
    fn config_validation() {
        let mut config = sphere_config(2, 6, 1, 0);
        assert!(config.validate().is_ok());
        config.population_size = 5;
        assert!(matches!(config.validate(), Err(SearchError::InvalidConfig(_))));
        config.population_size = 2;
        assert!(config.validate().is_err());
        config.population_size = 4;
        config.generations = 0;
        assert!(config.validate().is_err());
        config.generations = 1;
        config.objective_specs.clear();
        assert!(config.validate().is_err());
    }

    #[test]
    fn one_generation_costs_two_populations() {
        let config = sphere_config(3, 10, 1, 1);
        let result = run_search(&config, &mut FnEvaluator(sphere)).unwrap();
        assert_eq!(result.evaluations, 20);
        assert_eq!(result.history.len(), 2);
        assert!(result.completed);
    }

    #[test]
    fn sphere_best_never_worsens_and_converges() {
        let config = sphere_config(8, 32, 100, 7);
        let result = run_search(&config, &mut FnEvaluator(sphere)).unwrap();
        for w in result.history.windows(2) {
            assert!(w[1].best[0] <= w[0].best[0]);
        }
        assert!(result.best.objectives[0] < 1e-2, "best {}", result.best.objectives[0]);
        assert_eq!(result.best.objectives[0], result.history.last().unwrap().best[0]);
    }

    #[test]
    fn runs_are_deterministic() {
        let config = sphere_config(4, 12, 20, 99);
        let a = run_search(&config, &mut FnEvaluator(sphere)).unwrap();
        let b = run_search(&config, &mut FnEvaluator(sphere)).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.population.iter().zip(&b.population).all(|(x, y)| x.genome.bit_eq(&y.genome)));
    }

    #[test]
    fn non_finite_values_are_penalized() {
        let config = sphere_config(2, 8, 3, 5);
        let mut calls = 0;
        let mut eval = FnEvaluator(|g: &Genome| {
            calls += 1;
            if calls % 5 == 0 { vec![f64::NAN] } else { sphere(g) }
        });
        let result = run_search(&config, &mut eval).unwrap();
        assert!(result.history.iter().map(|h| h.penalized).sum::<usize>() > 0);
        assert!(result.population.iter().all(|i| i.objectives[0].is_finite()));
    }

    struct FailAfter(usize);

    impl Evaluator for FailAfter {
        fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Evaluation>, EvalError> {
            if self.0 == 0 {
                return Err(EvalError::new("oracle went away"));
            }
            self.0 -= 1;
            Ok(genomes.iter().map(|g| Evaluation::new(sphere(g))).collect())
        }
    }

    #[test]
    fn evaluator_failure_keeps_partial_history() {
        let config = sphere_config(2, 4, 10, 0);
        match run_search(&config, &mut FailAfter(3)) {
            Err(SearchError::Evaluation { generation, history, evaluations, .. }) => {
                assert_eq!(generation, 3);
                assert_eq!(history.len(), 3);
                assert_eq!(evaluations, 12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn observer_can_stop_the_run() {
        let config = sphere_config(2, 4, 50, 0);
        let mut stop = |s: &GenerationStats| {
            if s.generation == 5 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
        };
        let result = run_search_observed(&config, &mut FnEvaluator(sphere), &mut stop).unwrap();
        assert!(!result.completed);
        assert_eq!(result.history.len(), 6);
    }

    #[test]
    fn wrong_objective_count_aborts() {
        let config = sphere_config(2, 4, 1, 0);
        let mut eval = FnEvaluator(|_: &Genome| vec![1.0, 2.0]);
        assert!(matches!(run_search(&config, &mut eval), Err(SearchError::Evaluation { .. })));
    }
}
