//! Evolutionary search for the single OE sample that maximizes or minimizes
//! test AUC.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bench::{auc, ordered_parallel, ScoreTrainer};
use crate::data::ProtocolSplit;
use crate::error::{config, usage, Error, Result};
use crate::nn::Tensor;
use crate::rng::{self, Rng, Stream};

/// AUC assigned to a fitness evaluation whose training diverged.
pub const DIVERGED_FITNESS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvoMode {
    #[default]
    Maximize,
    Minimize,
}

impl EvoMode {
    /// True when `a` is strictly preferable to `b`.
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self {
            Self::Maximize => a > b,
            Self::Minimize => a < b,
        }
    }

    pub fn opposite(&self) -> Self {
        match self {
            Self::Maximize => Self::Minimize,
            Self::Minimize => Self::Maximize,
        }
    }
}

impl FromStr for EvoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maximize" | "max" => Ok(Self::Maximize),
            "minimize" | "min" => Ok(Self::Minimize),
            other => Err(config(format!("unknown search mode '{other}'"))),
        }
    }
}

impl fmt::Display for EvoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Maximize => "maximize",
            Self::Minimize => "minimize",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoParams {
    pub generation_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub mate_prob: f64,
    pub mutate_prob: f64,
    pub pool_candidates: usize,
    pub pool_keep: usize,
    pub fitness_seeds: usize,
    pub mode: EvoMode,
    /// Reuse the fitness of an already evaluated OE index.
    pub cache: bool,
    /// Replace every generation with fresh uniform draws instead of evolving.
    pub random_search: bool,
    pub threads: usize,
}

impl Default for EvoParams {
    fn default() -> Self {
        Self {
            generation_size: 64,
            generations: 50,
            tournament_size: 3,
            mate_prob: 0.05,
            mutate_prob: 0.55,
            pool_candidates: 10_000,
            pool_keep: 50,
            fitness_seeds: 2,
            mode: EvoMode::Maximize,
            cache: true,
            random_search: false,
            threads: 1,
        }
    }
}

impl EvoParams {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.generation_size < 2 || self.generation_size % 2 != 0 {
            return Err(config(format!("generation size must be even and >= 2, got {}", self.generation_size)));
        }
        if self.tournament_size == 0 || self.fitness_seeds == 0 {
            return Err(config("tournament size and fitness seeds must be >= 1"));
        }
        for (name, p) in [("mate", self.mate_prob), ("mutate", self.mutate_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if !(1 <= self.pool_keep && self.pool_keep <= self.pool_candidates && self.pool_candidates <= pool_size) {
            return Err(config(format!(
                "need 1 <= pool_keep ({}) <= pool_candidates ({}) <= OE pool size ({pool_size})",
                self.pool_keep, self.pool_candidates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub oe_index: usize,
    pub fitness: Option<f64>,
    #[serde(default)]
    pub diverged: bool,
}

impl Individual {
    pub fn new(oe_index: usize) -> Self {
        Self { oe_index, fitness: None, diverged: false }
    }
}

/// Result of one fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub diverged: bool,
}

/// Fitness of an OE pool index.
pub trait FitnessFn: Sync {
    fn evaluate(&self, oe_index: usize) -> Result<Evaluation>;
}

impl<F> FitnessFn for F
where
    F: Fn(usize) -> Result<Evaluation> + Sync,
{
    fn evaluate(&self, oe_index: usize) -> Result<Evaluation> {
        self(oe_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoTrace {
    pub seed: u64,
    pub params: EvoParams,
    /// Evaluated population of the initial and every following generation.
    pub generations: Vec<Vec<Individual>>,
    /// Optimum in the search direction over all evaluations.
    pub best: Individual,
    /// Extremum in the opposite direction.
    pub worst: Individual,
    /// Fitness function calls (cache hits excluded).
    pub evaluations: usize,
}

/// Mean test AUC over `seeds` of a model trained with only OE sample
/// `oe_index` of `split.oe`. Diverged seeds count as [`DIVERGED_FITNESS`].
pub fn single_oe_fitness(
    trainer: &dyn ScoreTrainer,
    split: &ProtocolSplit,
    oe_index: usize,
    seeds: &[u64],
) -> Result<Evaluation> {
    if oe_index >= split.oe.len() {
        return Err(usage(format!("OE index {oe_index} outside pool of {}", split.oe.len())));
    }
    if seeds.is_empty() {
        return Err(config("fitness needs at least one seed"));
    }
    let single = split.with_oe(split.oe.select(&[oe_index]));
    let mut total = 0.0;
    let mut diverged = false;
    for &seed in seeds {
        match trainer.test_scores(&single, seed)? {
            Some(scores) => total += auc(&scores, &single.test.y)?,
            None => {
                diverged = true;
                total += DIVERGED_FITNESS;
            }
        }
    }
    Ok(Evaluation { fitness: total / seeds.len() as f64, diverged })
}

fn fitness_of(ind: &Individual) -> Result<f64> {
    ind.fitness.ok_or_else(|| usage(format!("individual {} has not been evaluated", ind.oe_index)))
}

/// Replaces every slot with the fittest (maximize) or least fit (minimize) of
/// `tournament_size` uniform draws with replacement.
pub fn tournament_select(population: &[Individual], params: &EvoParams, rng: &mut Rng) -> Result<Vec<Individual>> {
    let fitness: Vec<f64> = population.iter().map(fitness_of).collect::<Result<_>>()?;
    if population.is_empty() {
        return Ok(Vec::new());
    }
    Ok((0..population.len())
        .map(|_| {
            let mut winner = rng.random_range(0..population.len());
            for _ in 1..params.tournament_size {
                let challenger = rng.random_range(0..population.len());
                if params.mode.better(fitness[challenger], fitness[winner]) {
                    winner = challenger;
                }
            }
            population[winner]
        })
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Draws `pool_candidates` pool rows, keeps the `pool_keep` closest to the
/// anchors (summed squared distance, ties to the lower index) and returns one
/// of them uniformly.
fn nearest_pick(pool: &Tensor, anchors: &[usize], params: &EvoParams, rng: &mut Rng) -> usize {
    let candidates = index::sample(rng, pool.rows(), params.pool_candidates).into_vec();
    let mut scored: Vec<(f64, usize)> = candidates
        .into_iter()
        .map(|p| (anchors.iter().map(|&a| sq_dist(pool.row(p), pool.row(a))).sum(), p))
        .collect();
    let keep = params.pool_keep.min(scored.len());
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if keep < scored.len() {
        scored.select_nth_unstable_by(keep - 1, by_key);
        scored.truncate(keep);
    }
    scored.sort_unstable_by(by_key);
    scored[rng.random_range(0..keep)].1
}

/// The `pool_keep` candidates that [`nearest_pick`] chooses among, in order.
pub fn kept_candidates(pool: &Tensor, candidates: &[usize], anchors: &[usize], keep: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&p| (anchors.iter().map(|&a| sq_dist(pool.row(p), pool.row(a))).sum(), p))
        .collect();
    scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(keep).map(|(_, p)| p).collect()
}

/// Two children, each picked near both parents from its own candidate draw.
pub fn mate_pair(
    parent_a: usize,
    parent_b: usize,
    pool: &Tensor,
    params: &EvoParams,
    rng: &mut Rng,
) -> (usize, usize) {
    let anchors = [parent_a, parent_b];
    let first = nearest_pick(pool, &anchors, params, rng);
    let second = nearest_pick(pool, &anchors, params, rng);
    (first, second)
}

/// A pool row picked near `ind`.
pub fn mutate_individual(ind: usize, pool: &Tensor, params: &EvoParams, rng: &mut Rng) -> usize {
    nearest_pick(pool, &[ind], params, rng)
}

fn evaluate_population(
    population: &mut [Individual],
    fitness: &dyn FitnessFn,
    params: &EvoParams,
    cache: &mut HashMap<usize, Evaluation>,
    evaluations: &mut usize,
) -> Result<()> {
    let mut todo: Vec<usize> = Vec::new();
    for ind in population.iter() {
        if !(params.cache && cache.contains_key(&ind.oe_index)) && !todo.contains(&ind.oe_index) {
            todo.push(ind.oe_index);
        }
    }
    if !params.cache {
        todo = population.iter().map(|i| i.oe_index).collect();
    }
    let mut results = Vec::with_capacity(todo.len());
    ordered_parallel(todo.len(), params.threads, |i| fitness.evaluate(todo[i]), |_, r| {
        results.push(r?);
        Ok(())
    })?;
    *evaluations += results.len();
    if params.cache {
        cache.extend(todo.iter().copied().zip(results.iter().copied()));
        for ind in population.iter_mut() {
            let e = cache[&ind.oe_index];
            ind.fitness = Some(e.fitness);
            ind.diverged = e.diverged;
        }
    } else {
        for (ind, e) in population.iter_mut().zip(results) {
            ind.fitness = Some(e.fitness);
            ind.diverged = e.diverged;
        }
    }
    Ok(())
}

fn unevaluated(indices: impl IntoIterator<Item = usize>) -> Vec<Individual> {
    indices.into_iter().map(Individual::new).collect()
}

/// Runs the search over the rows of `pool` (one flattened sample per row).
pub fn evolve(pool: &Tensor, fitness: &dyn FitnessFn, params: &EvoParams, seed: u64) -> Result<EvoTrace> {
    params.validate(pool.rows())?;
    let mut rng = rng::substream(seed, Stream::Evolution);
    let mut cache = HashMap::new();
    let mut evaluations = 0;
    let n = pool.rows();
    let draw = |rng: &mut Rng| unevaluated((0..params.generation_size).map(|_| rng.random_range(0..n)));

    let mut population = draw(&mut rng);
    evaluate_population(&mut population, fitness, params, &mut cache, &mut evaluations)?;
    let mut generations = vec![population.clone()];
    for _ in 0..params.generations {
        if params.random_search {
            population = draw(&mut rng);
        } else {
            population = tournament_select(&population, params, &mut rng)?;
            for i in (0..population.len()).step_by(2) {
                if rng.random_bool(params.mate_prob) {
                    let (a, b) =
                        mate_pair(population[i].oe_index, population[i + 1].oe_index, pool, params, &mut rng);
                    population[i] = Individual::new(a);
                    population[i + 1] = Individual::new(b);
                }
            }
            for ind in population.iter_mut() {
                if rng.random_bool(params.mutate_prob) {
                    *ind = Individual::new(mutate_individual(ind.oe_index, pool, params, &mut rng));
                }
            }
            population.iter_mut().for_each(|ind| ind.fitness = None);
        }
        evaluate_population(&mut population, fitness, params, &mut cache, &mut evaluations)?;
        generations.push(population.clone());
    }

    let mut best = generations[0][0];
    let mut worst = best;
    for ind in generations.iter().flatten() {
        let f = fitness_of(ind)?;
        if params.mode.better(f, fitness_of(&best)?) {
            best = *ind;
        }
        if params.mode.opposite().better(f, fitness_of(&worst)?) {
            worst = *ind;
        }
    }
    Ok(EvoTrace { seed, params: params.clone(), generations, best, worst, evaluations })
}
