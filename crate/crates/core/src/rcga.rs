//! Real-coded genetic synthesis of control fields: maximize a transition
//! probability over mode frequencies and phases at fixed amplitudes and
//! duration.
//!
//! Generational loop: evaluate the population, pick a reproductive pool by
//! size-2 tournaments, refill the next generation with SBX crossover plus
//! Gaussian mutation, and carry the single best individual over unchanged.
//! Fitness evaluations hold no randomness, so runs are reproducible from
//! `(config, seed)` at any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::propagate::propagate_column;
use crate::system::{ControlField, FieldMode, PropagationSettings, QuantumSystem, Waveform};

/// One candidate: decision vector `[omega_1..omega_K, phi_1..phi_K]` and its
/// fitness `P_{i->f}(T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub fitness: f64,
}

/// Optimizer settings. Defaults follow the reference synthesis protocol;
/// `eta_c`, the mutation scale and the bounds are exposed because the
/// protocol leaves them open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    /// Individuals per generation.
    pub population: usize,
    /// Tournament-selected parent pool that generates the next population.
    pub reproductive: usize,
    /// Pair-level SBX gate; losing pairs copy the parents unchanged.
    pub crossover_probability: f64,
    /// SBX distribution index.
    pub eta_c: f64,
    /// Per-gene mutation gate.
    pub mutation_probability: f64,
    /// Per-gene Gaussian mutation standard deviations.
    pub mutation_scales: Vec<f64>,
    pub tournament_size: usize,
    /// Generations after the initial one; 0 returns the best random start.
    pub generations: usize,
    /// `(lower, upper)` per gene.
    pub bounds: Vec<(f64, f64)>,
    /// Individuals carried over unchanged (0 disables elitism).
    pub elites: usize,
    pub seed: u64,
}

/// Decision-variable bounds for `modes` field modes: frequencies in
/// `[0.5, 4.0]`, phases in `[0, 2 pi)`.
pub fn default_bounds(modes: usize) -> Vec<(f64, f64)> {
    let mut bounds = vec![(0.5, 4.0); modes];
    bounds.extend(vec![(0.0, 2.0 * std::f64::consts::PI); modes]);
    bounds
}

impl GaConfig {
    /// Reference settings for `modes` field modes: population 300, pool 30,
    /// SBX p = 0.2 with eta_c = 2, Gaussian mutation p = 0.01 at 5% of each
    /// gene's range, tournament size 2, 200 generations, one elite.
    pub fn reference(modes: usize, seed: u64) -> Self {
        let bounds = default_bounds(modes);
        let mutation_scales = bounds.iter().map(|(lo, hi)| 0.05 * (hi - lo)).collect();
        Self {
            population: 300,
            reproductive: 30,
            crossover_probability: 0.2,
            eta_c: 2.0,
            mutation_probability: 0.01,
            mutation_scales,
            tournament_size: 2,
            generations: 200,
            bounds,
            elites: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.population == 0 {
            return Err(CoreError::EmptyPopulation);
        }
        if self.reproductive == 0 || self.reproductive > self.population {
            return Err(CoreError::Invalid(
                "reproductive pool must satisfy 1 <= pool <= population".into(),
            ));
        }
        for p in [self.crossover_probability, self.mutation_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::Invalid(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.bounds.is_empty() || self.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(CoreError::Invalid("each bound needs lower < upper".into()));
        }
        if self.mutation_scales.len() != self.bounds.len()
            || self.mutation_scales.iter().any(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(CoreError::Invalid(
                "need one nonnegative mutation scale per gene".into(),
            ));
        }
        if self.tournament_size == 0 {
            return Err(CoreError::Invalid("tournament size must be >= 1".into()));
        }
        if self.elites > self.reproductive {
            return Err(CoreError::Invalid("elites must not exceed the pool size".into()));
        }
        if !(self.eta_c > 0.0) {
            return Err(CoreError::Invalid("eta_c must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed part of the synthesis problem; genes only move frequencies and
/// phases.
#[derive(Debug, Clone, PartialEq)]
pub struct GaObjective {
    pub system: QuantumSystem,
    /// Fixed mode amplitudes; their count sets `K`.
    pub amplitudes: Vec<f64>,
    pub duration: f64,
    pub waveform: Waveform,
    pub initial_state: usize,
    pub final_state: usize,
    pub settings: PropagationSettings,
}

impl GaObjective {
    pub fn modes(&self) -> usize {
        self.amplitudes.len()
    }

    /// Builds the control field a gene vector describes.
    pub fn field(&self, genes: &[f64]) -> Result<ControlField, CoreError> {
        let k = self.modes();
        if genes.len() != 2 * k {
            return Err(CoreError::Dimension(format!(
                "{} genes for {} modes (need 2K)",
                genes.len(),
                k
            )));
        }
        let modes = (0..k)
            .map(|m| FieldMode {
                omega: genes[m],
                amplitude: self.amplitudes[m],
                phase: genes[k + m],
            })
            .collect();
        ControlField::with_waveform(modes, self.duration, self.waveform)
    }
}

/// Fitness of a gene vector: `P_{i->f}(T)` for the field it encodes.
pub fn evaluate(objective: &GaObjective, genes: &[f64]) -> Result<f64, CoreError> {
    let field = objective.field(genes)?;
    let column = propagate_column(
        &objective.system,
        &field,
        objective.initial_state,
        &objective.settings,
    )?;
    Ok(column[objective.final_state].norm_sqr())
}

/// Draws one SBX spread factor from the `eta_c` polynomial law.
pub(crate) fn sbx_spread(rng: &mut impl Rng, eta_c: f64) -> f64 {
    let u: f64 = rng.random();
    let exp = 1.0 / (eta_c + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(exp)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(exp)
    }
}

fn clip(x: f64, (lo, hi): (f64, f64)) -> f64 {
    x.clamp(lo, hi)
}

/// Simulated binary crossover. With probability `1 - probability` the pair
/// is returned unchanged; otherwise every gene mixes around the parents'
/// midpoint with an independent spread factor, then clips to bounds.
pub fn sbx_crossover(
    parent_a: &[f64],
    parent_b: &[f64],
    eta_c: f64,
    probability: f64,
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(parent_a.len(), parent_b.len());
    debug_assert_eq!(parent_a.len(), bounds.len());
    if rng.random::<f64>() >= probability {
        return (parent_a.to_vec(), parent_b.to_vec());
    }
    let mut child_a = Vec::with_capacity(parent_a.len());
    let mut child_b = Vec::with_capacity(parent_b.len());
    for ((&a, &b), &bound) in parent_a.iter().zip(parent_b).zip(bounds) {
        let beta = sbx_spread(rng, eta_c);
        // Midpoint +- half-span form: exact for identical parents.
        let mid = 0.5 * (a + b);
        let half_span = 0.5 * beta * (a - b);
        child_a.push(clip(mid + half_span, bound));
        child_b.push(clip(mid - half_span, bound));
    }
    (child_a, child_b)
}

/// Per-gene Gaussian mutation: with `probability`, add `N(0, scale^2)` and
/// clip to bounds.
pub fn gaussian_mutate(
    genes: &mut [f64],
    probability: f64,
    scales: &[f64],
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) {
    debug_assert_eq!(genes.len(), scales.len());
    debug_assert_eq!(genes.len(), bounds.len());
    for ((gene, &scale), &bound) in genes.iter_mut().zip(scales).zip(bounds) {
        if rng.random::<f64>() < probability && scale > 0.0 {
            let step = Normal::new(0.0, scale).expect("scale validated").sample(rng);
            *gene = clip(*gene + step, bound);
        }
    }
}

/// Best of `size` uniform draws (with replacement); exact fitness ties go to
/// the lower population index.
pub fn tournament_select<'a>(
    population: &'a [Individual],
    size: usize,
    rng: &mut impl Rng,
) -> Result<&'a Individual, CoreError> {
    if population.is_empty() {
        return Err(CoreError::EmptyPopulation);
    }
    let mut best = rng.random_range(0..population.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..population.len());
        let better = population[challenger].fitness > population[best].fitness
            || (population[challenger].fitness == population[best].fitness
                && challenger < best);
        if better {
            best = challenger;
        }
    }
    Ok(&population[best])
}

/// One generation's summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaHistoryRow {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub std: f64,
}

/// Optimization result: the best individual ever evaluated and the
/// per-generation fitness history (initial population is generation 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub best: Individual,
    pub history: Vec<GaHistoryRow>,
    pub evaluations: usize,
}

fn summarize(generation: usize, population: &[Individual]) -> GaHistoryRow {
    let n = population.len() as f64;
    let best = population.iter().map(|i| i.fitness).fold(f64::NEG_INFINITY, f64::max);
    let mean = population.iter().map(|i| i.fitness).sum::<f64>() / n;
    let var = population.iter().map(|i| (i.fitness - mean).powi(2)).sum::<f64>() / n;
    GaHistoryRow { generation, best, mean, std: var.sqrt() }
}

fn best_index(population: &[Individual]) -> usize {
    let mut idx = 0;
    for (k, ind) in population.iter().enumerate().skip(1) {
        if ind.fitness > population[idx].fitness {
            idx = k;
        }
    }
    idx
}

/// Runs the generational loop and returns the best individual plus history.
///
/// Genes never leave their bounds, the running best is nondecreasing when
/// elitism is on, and the whole run is a pure function of
/// `(objective, config)`.
pub fn optimize(objective: &GaObjective, config: &GaConfig) -> Result<GaOutcome, CoreError> {
    config.validate()?;
    if config.bounds.len() != 2 * objective.modes() {
        return Err(CoreError::Dimension(format!(
            "{} bounds for {} modes (need 2K)",
            config.bounds.len(),
            objective.modes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut evaluations = 0usize;

    let fitness_of = |genes: Vec<f64>| -> Result<Individual, CoreError> {
        let fitness = evaluate(objective, &genes)?;
        Ok(Individual { genes, fitness })
    };
    // Deterministic parallel evaluation: gene vectors are fixed before the
    // map and fitness carries no RNG.
    let evaluate_all = |batch: Vec<Vec<f64>>| -> Result<Vec<Individual>, CoreError> {
        batch.into_par_iter().map(fitness_of).collect()
    };

    let initial: Vec<Vec<f64>> = (0..config.population)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect()
        })
        .collect();
    evaluations += initial.len();
    let mut population = evaluate_all(initial)?;
    let mut history = vec![summarize(0, &population)];
    let mut best = population[best_index(&population)].clone();

    for generation in 1..=config.generations {
        // Reproductive pool by repeated tournaments.
        let pool: Vec<Individual> = (0..config.reproductive)
            .map(|_| tournament_select(&population, config.tournament_size, &mut rng).cloned())
            .collect::<Result<_, _>>()?;

        // Elites pass through unchanged; SBX + mutation refill the rest.
        let mut next_genes: Vec<Vec<f64>> = Vec::with_capacity(config.population);
        let mut elite_carry: Vec<Individual> = Vec::with_capacity(config.elites);
        if config.elites > 0 {
            let mut order: Vec<usize> = (0..population.len()).collect();
            order.sort_by(|&a, &b| {
                population[b]
                    .fitness
                    .partial_cmp(&population[a].fitness)
                    .expect("fitness is finite")
                    .then(a.cmp(&b))
            });
            for &idx in order.iter().take(config.elites) {
                elite_carry.push(population[idx].clone());
            }
        }
        while next_genes.len() + elite_carry.len() < config.population {
            let pa = &pool[rng.random_range(0..pool.len())];
            let pb = &pool[rng.random_range(0..pool.len())];
            let (mut ca, mut cb) = sbx_crossover(
                &pa.genes,
                &pb.genes,
                config.eta_c,
                config.crossover_probability,
                &config.bounds,
                &mut rng,
            );
            gaussian_mutate(
                &mut ca,
                config.mutation_probability,
                &config.mutation_scales,
                &config.bounds,
                &mut rng,
            );
            gaussian_mutate(
                &mut cb,
                config.mutation_probability,
                &config.mutation_scales,
                &config.bounds,
                &mut rng,
            );
            next_genes.push(ca);
            if next_genes.len() + elite_carry.len() < config.population {
                next_genes.push(cb);
            }
        }
        evaluations += next_genes.len();
        let mut next = evaluate_all(next_genes)?;
        next.extend(elite_carry);
        population = next;

        let gen_best = &population[best_index(&population)];
        if gen_best.fitness > best.fitness {
            best = gen_best.clone();
        }
        history.push(summarize(generation, &population));
    }

    Ok(GaOutcome { best, history, evaluations })
}
