//! Generational genetic algorithm.
//!
//! Individuals are configurations. Each generation keeps its best individual
//! unchanged and fills the remaining slots with children of two tournament
//! winners, built gene by gene in topological order so that conditional
//! parameters follow whichever parent supplied their parent gene.

use super::{Observation, OptimizerError};
use crate::searchspace::{Configuration, SearchSpace};
use crate::trial::TrialId;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub tournament: usize,
    /// Probability that a gene is taken from the second parent.
    pub crossover: f64,
    /// Probability that a gene is redrawn from the prior.
    pub mutation: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            tournament: 3,
            crossover: 0.5,
            mutation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaIndividual {
    pub genome: Configuration,
    pub fitness: Option<f64>,
}

/// Index of the fittest of `size` uniformly drawn individuals; on ties the
/// earliest drawn wins.
pub fn tournament<R: Rng + ?Sized>(population: &[GaIndividual], size: usize, rng: &mut R) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for _ in 0..size.max(1) {
        let i = rng.random_range(0..population.len());
        let f = population[i].fitness.unwrap_or(f64::INFINITY);
        if best.is_none_or(|(bf, _)| f < bf) {
            best = Some((f, i));
        }
    }
    best.expect("at least one draw").1
}

/// Gene-wise uniform crossover followed by mutation. Genes the chosen parent
/// lacks come from the other parent, or from the prior if neither has them.
pub fn crossover<R: Rng + ?Sized>(
    space: &SearchSpace,
    a: &Configuration,
    b: &Configuration,
    cfg: &GaConfig,
    rng: &mut R,
) -> Configuration {
    let mut child = Configuration::new();
    for &i in space.order() {
        if !space.is_active(i, &child) {
            continue;
        }
        let p = &space.params()[i];
        let (first, second) = if rng.random::<f64>() < cfg.crossover { (b, a) } else { (a, b) };
        let inherited = [first, second]
            .into_iter()
            .filter_map(|parent| parent.get(&p.name))
            .find(|v| p.check_value(v).is_none())
            .cloned();
        let mutate = rng.random::<f64>() < cfg.mutation;
        let value = match inherited {
            Some(v) if !mutate => v,
            _ => p.draw(rng),
        };
        child.insert(p.name.clone(), value);
    }
    child
}

/// Next generation: the fittest individual (fitness kept) followed by
/// `population.len() - 1` unevaluated children.
pub fn ga_step<R: Rng + ?Sized>(
    space: &SearchSpace,
    population: &[GaIndividual],
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<Vec<GaIndividual>, OptimizerError> {
    if population.is_empty() {
        return Err(OptimizerError::EmptyPopulation);
    }
    if population.iter().any(|g| g.fitness.is_none()) {
        return Err(OptimizerError::MissingFitness);
    }
    let elite = population
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.fitness.unwrap().total_cmp(&b.fitness.unwrap()).then(i.cmp(j)))
        .map(|(_, g)| g.clone())
        .expect("non-empty");
    let mut next = Vec::with_capacity(population.len());
    next.push(elite);
    while next.len() < population.len() {
        let a = tournament(population, cfg.tournament, rng);
        let b = tournament(population, cfg.tournament, rng);
        next.push(GaIndividual {
            genome: crossover(space, &population[a].genome, &population[b].genome, cfg, rng),
            fitness: None,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
enum SlotState {
    Fresh,
    Pending(TrialId),
    Done,
}

#[derive(Debug, Clone)]
pub(crate) struct GaState {
    cfg: GaConfig,
    generation: Vec<(GaIndividual, SlotState)>,
    started: bool,
    /// Results reported before the first suggestion seed the population.
    seeds: Vec<(TrialId, GaIndividual)>,
}

impl GaState {
    pub(crate) fn new(cfg: GaConfig) -> Self {
        Self {
            cfg,
            generation: Vec::new(),
            started: false,
            seeds: Vec::new(),
        }
    }

    fn start<R: Rng + ?Sized>(&mut self, space: &SearchSpace, rng: &mut R) {
        let mut seeds = std::mem::take(&mut self.seeds);
        seeds.sort_by(|(i, a), (j, b)| a.fitness.unwrap().total_cmp(&b.fitness.unwrap()).then(i.cmp(j)));
        self.generation = seeds
            .into_iter()
            .take(self.cfg.population)
            .map(|(_, g)| (g, SlotState::Done))
            .collect();
        while self.generation.len() < self.cfg.population {
            let genome = space.sample(rng);
            self.generation.push((GaIndividual { genome, fitness: None }, SlotState::Fresh));
        }
        self.started = true;
    }

    pub(crate) fn suggest<R: Rng + ?Sized>(
        &mut self,
        id: TrialId,
        space: &SearchSpace,
        _history: &[Observation],
        rng: &mut R,
    ) -> Result<Configuration, OptimizerError> {
        if !self.started {
            self.start(space, rng);
        }
        if self.generation.iter().all(|(_, s)| *s == SlotState::Done) {
            let current: Vec<GaIndividual> = self.generation.iter().map(|(g, _)| g.clone()).collect();
            self.generation = ga_step(space, &current, &self.cfg, rng)?
                .into_iter()
                .map(|g| {
                    let state = if g.fitness.is_some() { SlotState::Done } else { SlotState::Fresh };
                    (g, state)
                })
                .collect();
        }
        if let Some((g, state)) = self.generation.iter_mut().find(|(_, s)| *s == SlotState::Fresh) {
            *state = SlotState::Pending(id);
            return Ok(g.genome.clone());
        }
        // every slot is out for evaluation: hand out an immigrant
        Ok(space.sample(rng))
    }

    pub(crate) fn report(&mut self, id: TrialId, config: &Configuration, objective: f64) {
        if !self.started {
            self.seeds.push((
                id,
                GaIndividual {
                    genome: config.clone(),
                    fitness: Some(objective),
                },
            ));
            return;
        }
        if let Some((g, state)) = self
            .generation
            .iter_mut()
            .find(|(_, s)| *s == SlotState::Pending(id))
        {
            g.fitness = Some(objective);
            *state = SlotState::Done;
        }
    }

    #[cfg(test)]
    pub(crate) fn population(&self) -> Vec<GaIndividual> {
        self.generation.iter().map(|(g, _)| g.clone()).collect()
    }
}
