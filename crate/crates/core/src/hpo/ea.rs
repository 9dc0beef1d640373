//! Island-model evolutionary search over forecaster configurations.
//!
//! Workers are assigned to islands round-robin (`worker % num_isles`). Each
//! island fills up with uniform random configurations first; after that a
//! suggestion is either a fresh random draw (with probability `random_prob`)
//! or the child of two tournament-selected parents, produced by per-dimension
//! uniform crossover and Gaussian mutation and clamped into bounds. Completed
//! trials are inserted into the worker's island and, with probability
//! `migration_probability`, copied — never moved — to another island.
//!
//! The registry is designed to sit behind a mutex: suggest and update are
//! short, never block on evaluation work, and derive their randomness from
//! the seed and monotone call counters so a serialized state resumes
//! bit-identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HpoError, TrialRecord};
use crate::space::{Dimension, HyperparamConfig, HyperparamSpace, ParamValue};

/// Evolutionary-search settings. Probabilities are applied per dimension
/// (crossover, mutation) or per suggestion (random draw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EaConfig {
    /// Evaluated individuals an island needs before breeding starts.
    pub pop_size: usize,
    /// Probability of taking the second parent's value in crossover.
    pub mate_prob: f64,
    /// Probability of mutating a dimension of the child.
    pub mut_prob: f64,
    /// Probability of replacing breeding with a uniform random draw.
    pub random_prob: f64,
    /// Mutation spread as a fraction of each dimension's range.
    pub sigma_factor: f64,
    /// Number of in-process subpopulations.
    pub num_isles: usize,
    /// Probability that a completed trial is copied to another island.
    pub migration_probability: f64,
    /// Copy (true) rather than move individuals between islands.
    pub pollination: bool,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            pop_size: 8,
            mate_prob: 0.7,
            mut_prob: 0.4,
            random_prob: 0.2,
            sigma_factor: 0.05,
            num_isles: 2,
            migration_probability: 0.7,
            pollination: true,
        }
    }
}

impl EaConfig {
    fn validate(&self) -> Result<(), HpoError> {
        let probs = [
            ("mate_prob", self.mate_prob),
            ("mut_prob", self.mut_prob),
            ("random_prob", self.random_prob),
            ("migration_probability", self.migration_probability),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(HpoError::BadBounds(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.pop_size < 2 {
            return Err(HpoError::BadBounds(format!(
                "population size {} below 2",
                self.pop_size
            )));
        }
        if self.num_isles == 0 {
            return Err(HpoError::BadBounds("zero islands".into()));
        }
        if !(self.sigma_factor >= 0.0 && self.sigma_factor.is_finite()) {
            return Err(HpoError::BadBounds(format!(
                "mutation spread factor {} invalid",
                self.sigma_factor
            )));
        }
        Ok(())
    }
}

/// Shared registry of evaluated individuals, organized into islands.
///
/// Every record is stored exactly once in `records` (insertion order);
/// islands hold indices, so a pollinated copy costs one index and
/// [`EaState::population_best`] never double-counts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaState {
    space: HyperparamSpace,
    config: EaConfig,
    seed: u64,
    records: Vec<TrialRecord>,
    islands: Vec<Vec<usize>>,
    suggest_count: u64,
    update_count: u64,
}

impl EaState {
    pub fn new(space: HyperparamSpace, config: EaConfig, seed: u64) -> Result<Self, HpoError> {
        config.validate()?;
        let islands = vec![Vec::new(); config.num_isles];
        Ok(EaState {
            space,
            config,
            seed,
            records: Vec::new(),
            islands,
            suggest_count: 0,
            update_count: 0,
        })
    }

    pub fn config(&self) -> &EaConfig {
        &self.config
    }

    pub fn space(&self) -> &HyperparamSpace {
        &self.space
    }

    /// All completed trials in completion order, pollinated copies not
    /// duplicated.
    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    /// Island a worker breeds on.
    pub fn island_of(&self, worker: usize) -> usize {
        worker % self.config.num_isles
    }

    /// Number of individuals on an island, pollinated copies included.
    pub fn island_population(&self, island: usize) -> usize {
        self.islands[island % self.config.num_isles].len()
    }

    /// Next configuration for `worker` to evaluate.
    pub fn suggest(&mut self, worker: usize) -> HyperparamConfig {
        let mut rng = ChaCha12Rng::seed_from_u64(
            self.seed ^ 0x7375_6767 ^ self.suggest_count.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        self.suggest_count += 1;
        let island = self.island_of(worker);
        let members = &self.islands[island];
        if members.len() < self.config.pop_size {
            return self.space.sample_uniform(&mut rng);
        }
        if rng.gen::<f64>() < self.config.random_prob {
            return self.space.sample_uniform(&mut rng);
        }
        // Failed trials stay in the population for counting purposes but are
        // never selected as parents.
        let breedable: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| self.records[i].score.is_finite())
            .collect();
        if breedable.is_empty() {
            return self.space.sample_uniform(&mut rng);
        }
        let p1 = self.tournament(&breedable, &mut rng);
        let p2 = self.tournament(&breedable, &mut rng);
        self.breed(p1, p2, &mut rng)
    }

    /// Record a completed trial on its worker's island and, with the
    /// configured probability, copy it to another island.
    pub fn update(&mut self, record: TrialRecord) {
        self.update_count += 1;
        let mut rng = ChaCha12Rng::seed_from_u64(
            self.seed ^ 0x706f_6c6c ^ self.update_count.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let home = self.island_of(record.worker);
        let idx = self.records.len();
        self.records.push(record);
        self.islands[home].push(idx);
        if self.config.pollination
            && self.config.num_isles > 1
            && rng.gen::<f64>() < self.config.migration_probability
        {
            let mut pick = rng.gen_range(0..self.config.num_isles - 1);
            if pick >= home {
                pick += 1;
            }
            self.islands[pick].push(idx);
        }
    }

    /// The `k` best completed trials: ascending score, ties broken by
    /// earlier completion timestamp, then by insertion order. Failed trials
    /// never qualify.
    pub fn population_best(&self, k: usize) -> Result<Vec<&TrialRecord>, HpoError> {
        let mut idx: Vec<usize> = (0..self.records.len())
            .filter(|&i| self.records[i].score.is_finite())
            .collect();
        if idx.is_empty() {
            return Err(HpoError::EmptyPopulation);
        }
        idx.sort_by(|&a, &b| {
            self.records[a]
                .score
                .total_cmp(&self.records[b].score)
                .then(self.records[a].timestamp.total_cmp(&self.records[b].timestamp))
                .then(a.cmp(&b))
        });
        Ok(idx.into_iter().take(k).map(|i| &self.records[i]).collect())
    }

    /// Size-2 tournament over record indices; single-member pools win
    /// outright.
    fn tournament<R: Rng + ?Sized>(&self, pool: &[usize], rng: &mut R) -> usize {
        if pool.len() == 1 {
            return pool[0];
        }
        let i = rng.gen_range(0..pool.len());
        let mut j = rng.gen_range(0..pool.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (pool[i], pool[j]);
        let ord = self.records[a]
            .score
            .total_cmp(&self.records[b].score)
            .then(self.records[a].timestamp.total_cmp(&self.records[b].timestamp))
            .then(a.cmp(&b));
        if ord.is_le() {
            a
        } else {
            b
        }
    }

    fn breed<R: Rng + ?Sized>(&self, p1: usize, p2: usize, rng: &mut R) -> HyperparamConfig {
        let mut child = self.records[p1].config.clone();
        let other = &self.records[p2].config;
        for (name, _) in self.space.dims() {
            if rng.gen::<f64>() < self.config.mate_prob {
                if let Some(v) = other.get(name) {
                    child.set(name, v.clone());
                }
            }
        }
        for (name, dim) in self.space.dims() {
            if rng.gen::<f64>() < self.config.mut_prob {
                let mutated = self.mutate(dim, child.get(name), rng);
                child.set(name, mutated);
            }
        }
        self.space.clamp(&mut child);
        child
    }

    /// Gaussian mutation with spread `sigma_factor × range`; log-scaled
    /// dimensions mutate in ln-space, integer offsets are rounded, and
    /// categorical values are resampled uniformly.
    fn mutate<R: Rng + ?Sized>(
        &self,
        dim: &Dimension,
        current: Option<&ParamValue>,
        rng: &mut R,
    ) -> ParamValue {
        match dim {
            Dimension::Real { lo, hi, default } => {
                let x = current.and_then(ParamValue::as_real).unwrap_or(*default);
                ParamValue::Real(x + gaussian_offset(self.config.sigma_factor * (hi - lo), rng))
            }
            Dimension::LogReal { lo, hi, default } => {
                let x = current.and_then(ParamValue::as_real).unwrap_or(*default);
                let span = hi.ln() - lo.ln();
                let shifted = x.max(*lo).ln() + gaussian_offset(self.config.sigma_factor * span, rng);
                ParamValue::Real(shifted.exp())
            }
            Dimension::Int { lo, hi, default } => {
                let x = current.and_then(|v| v.as_int()).unwrap_or(*default);
                let offset =
                    gaussian_offset(self.config.sigma_factor * (hi - lo) as f64, rng).round();
                ParamValue::Int(x.saturating_add(offset as i64))
            }
            Dimension::Cat { choices, .. } => {
                ParamValue::Cat(choices[rng.gen_range(0..choices.len())].clone())
            }
        }
    }
}

fn gaussian_offset<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite mutation spread").sample(rng)
    } else {
        0.0
    }
}
