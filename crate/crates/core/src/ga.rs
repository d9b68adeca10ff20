//! Real-coded genetic algorithm with an ask/tell interface.
//!
//! Tournament selection, blend (BLX-alpha) crossover, per-gene Gaussian
//! mutation and elitism. All randomness comes from one seeded ChaCha stream,
//! and fitness values are consumed in population order, so a run is a pure
//! function of its configuration, boxes and fitness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensator::Interval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    /// Evaluated generations; 0 evaluates nothing.
    pub generations: usize,
    pub tournament: usize,
    pub crossover_prob: f64,
    pub blend_alpha: f64,
    pub mutation_prob: f64,
    /// Standard deviation of a mutation step as a fraction of the box width.
    pub mutation_scale: f64,
    pub elite: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            tournament: 3,
            crossover_prob: 0.8,
            blend_alpha: 0.5,
            mutation_prob: 0.1,
            mutation_scale: 0.1,
            elite: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.population < 4 {
            return Err(Error::InvalidConfig("population must be at least 4".into()));
        }
        if !prob(self.crossover_prob) || !prob(self.mutation_prob) {
            return Err(Error::InvalidConfig(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.tournament == 0 || self.elite >= self.population {
            return Err(Error::InvalidConfig(
                "tournament must be >= 1 and elite < population".into(),
            ));
        }
        if !(self.blend_alpha >= 0.0 && self.mutation_scale >= 0.0) {
            return Err(Error::InvalidConfig(
                "blend_alpha and mutation_scale must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

fn validate_boxes(boxes: &[Interval]) -> Result<()> {
    if boxes.is_empty() {
        return Err(Error::InvalidConfig("empty search box".into()));
    }
    for (i, [lo, hi]) in boxes.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("gene {i} box [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// NaN counts as the worst possible fitness.
fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

#[derive(Debug, Clone)]
pub struct GeneticSearch {
    cfg: GaConfig,
    boxes: Vec<Interval>,
    rng: ChaCha8Rng,
    population: Vec<Vec<f64>>,
    best: Option<(Vec<f64>, f64)>,
    generation: usize,
}

impl GeneticSearch {
    /// Uniformly random initial population.
    pub fn new(cfg: GaConfig, boxes: Vec<Interval>) -> Result<Self> {
        cfg.validate()?;
        validate_boxes(&boxes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let population = (0..cfg.population)
            .map(|_| {
                boxes
                    .iter()
                    .map(|&[lo, hi]| sample(&mut rng, lo, hi))
                    .collect()
            })
            .collect();
        Ok(Self {
            cfg,
            boxes,
            rng,
            population,
            best: None,
            generation: 0,
        })
    }

    pub fn with_population(
        cfg: GaConfig,
        boxes: Vec<Interval>,
        population: Vec<Vec<f64>>,
    ) -> Result<Self> {
        cfg.validate()?;
        validate_boxes(&boxes)?;
        if population.len() != cfg.population || population.iter().any(|g| g.len() != boxes.len()) {
            return Err(Error::InvalidConfig(
                "seed population does not match config".into(),
            ));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            boxes,
            rng,
            population,
            best: None,
            generation: 0,
        })
    }

    pub fn ask(&self) -> &[Vec<f64>] {
        &self.population
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(g, f)| (g.as_slice(), *f))
    }

    /// Record the fitness of the current population and breed the next one.
    pub fn tell(&mut self, fitness: &[f64]) -> Result<()> {
        if fitness.len() != self.population.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} fitness values for population {}",
                fitness.len(),
                self.population.len()
            )));
        }
        let fitness: Vec<f64> = fitness.iter().copied().map(sanitize).collect();
        let mut order: Vec<usize> = (0..fitness.len()).collect();
        order.sort_by(|&i, &j| fitness[i].total_cmp(&fitness[j]).then(i.cmp(&j)));
        let top = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| fitness[top] < *f) {
            self.best = Some((self.population[top].clone(), fitness[top]));
        }

        let mut next: Vec<Vec<f64>> = order[..self.cfg.elite]
            .iter()
            .map(|&i| self.population[i].clone())
            .collect();
        while next.len() < self.cfg.population {
            let a = self.tournament(&fitness);
            let b = self.tournament(&fitness);
            let mut child = if self.rng.random::<f64>() < self.cfg.crossover_prob {
                self.blend(&self.population[a].clone(), &self.population[b].clone())
            } else {
                self.population[a].clone()
            };
            self.mutate(&mut child);
            next.push(child);
        }
        self.population = next;
        self.generation += 1;
        Ok(())
    }

    fn tournament(&mut self, fitness: &[f64]) -> usize {
        let n = fitness.len();
        let mut winner = self.rng.random_range(0..n);
        for _ in 1..self.cfg.tournament {
            let c = self.rng.random_range(0..n);
            if fitness[c] < fitness[winner] || (fitness[c] == fitness[winner] && c < winner) {
                winner = c;
            }
        }
        winner
    }

    fn blend(&mut self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let alpha = self.cfg.blend_alpha;
        a.iter()
            .zip(b)
            .zip(&self.boxes)
            .map(|((&x, &y), &[lo, hi])| {
                let (l, h) = (x.min(y), x.max(y));
                let d = h - l;
                sample(&mut self.rng, l - alpha * d, h + alpha * d).clamp(lo, hi)
            })
            .collect()
    }

    fn mutate(&mut self, genes: &mut [f64]) {
        for (g, &[lo, hi]) in genes.iter_mut().zip(&self.boxes) {
            if self.rng.random::<f64>() >= self.cfg.mutation_prob {
                continue;
            }
            let sd = self.cfg.mutation_scale * (hi - lo);
            if sd > 0.0 {
                let step: f64 = Normal::new(0.0, sd)
                    .expect("finite sd")
                    .sample(&mut self.rng);
                *g = (*g + step).clamp(lo, hi);
            }
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Option<Vec<f64>>,
    pub best_fitness: f64,
    /// Best-so-far fitness after each generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Minimize `fitness` over the boxes. Each generation is evaluated in
/// parallel; results are merged in population order.
pub fn ga_minimize<F>(fitness: F, boxes: &[Interval], cfg: &GaConfig) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut ga = GeneticSearch::new(cfg.clone(), boxes.to_vec())?;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut evaluations = 0;
    for _ in 0..cfg.generations {
        let values: Vec<f64> = ga.ask().par_iter().map(|g| fitness(g)).collect();
        evaluations += values.len();
        ga.tell(&values)?;
        history.push(ga.best().map_or(f64::INFINITY, |(_, f)| f));
    }
    let (best, best_fitness) = match ga.best() {
        Some((g, f)) => (Some(g.to_vec()), f),
        None => (None, f64::INFINITY),
    };
    Ok(GaResult {
        best,
        best_fitness,
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_converges() {
        let cfg = GaConfig {
            generations: 200,
            seed: 7,
            ..Default::default()
        };
        let r = ga_minimize(|g| g.iter().map(|x| x * x).sum(), &[[-1.0, 1.0]; 5], &cfg).unwrap();
        assert!(r.best_fitness < 1e-3, "{}", r.best_fitness);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        for g in r.best.unwrap() {
            assert!((-1.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn identical_population_without_mutation_is_frozen() {
        let cfg = GaConfig {
            population: 6,
            generations: 10,
            mutation_prob: 0.0,
            ..Default::default()
        };
        let boxes = vec![[-1.0, 1.0]; 2];
        let mut ga = GeneticSearch::with_population(cfg, boxes, vec![vec![0.3, -0.2]; 6]).unwrap();
        let mut history = Vec::new();
        for _ in 0..10 {
            let f: Vec<f64> = ga.ask().iter().map(|g| g[0] + g[1]).collect();
            ga.tell(&f).unwrap();
            history.push(ga.best().unwrap().1);
            assert!(ga.ask().iter().all(|g| g == &vec![0.3, -0.2]));
        }
        assert!(history.iter().all(|&h| h == history[0]));
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = GaConfig {
            generations: 30,
            seed: 99,
            ..Default::default()
        };
        let f = |g: &[f64]| (g[0] - 0.2).abs() + (g[1] + 0.4).powi(2);
        let a = ga_minimize(f, &[[-1.0, 1.0]; 2], &cfg).unwrap();
        let b = ga_minimize(f, &[[-1.0, 1.0]; 2], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_generations_and_nan() {
        let cfg = GaConfig {
            generations: 0,
            ..Default::default()
        };
        let r = ga_minimize(|_| 1.0, &[[0.0, 1.0]], &cfg).unwrap();
        assert!(r.history.is_empty() && r.best.is_none());
        let cfg = GaConfig {
            generations: 3,
            ..Default::default()
        };
        let r = ga_minimize(
            |g| if g[0] < 0.5 { f64::NAN } else { g[0] },
            &[[0.0, 1.0]],
            &cfg,
        )
        .unwrap();
        assert!(r.best_fitness >= 0.5);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = GaConfig {
            population: 3,
            ..Default::default()
        };
        assert!(GeneticSearch::new(bad, vec![[0.0, 1.0]]).is_err());
        assert!(GeneticSearch::new(GaConfig::default(), vec![[1.0, 0.0]]).is_err());
    }
}
