//! Many-objective differential evolution.
//!
//! The loop is classic DE/rand/1/bin (random initialization, donor
//! `X_r1 + F (X_r2 - X_r3)`, binomial crossover) with these changes for
//! problems with many maximized objectives:
//!
//! * survivor selection uses the favour relation: the trial replaces its
//!   parent unless the parent is strictly better in more objectives;
//! * candidates are ranked by their Euclidean distance to the ideal
//!   objective vector (`idist`);
//! * once per generation the best candidate among those whose `idist`
//!   moved by less than `restart_delta` over `restart_window` generations
//!   is re-drawn at random (after being copied into the [`Archive`]);
//! * the run stops early when the population minimum of `idist` moves by
//!   less than `stop_delta` over `stop_window` generations.
//!
//! The final choice is the minimum-`idist` member of the favour
//! non-dominated set over population and archive.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective function; every value is maximized.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaooConfig {
    /// NP.
    pub population_size: usize,
    /// G_max.
    pub max_generations: usize,
    /// CR.
    pub crossover_rate: f64,
    /// F is drawn uniformly from the open interval (min, max) per mutation.
    pub scale_factor_min: f64,
    pub scale_factor_max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Decision-vector length n. The transfer problem sets this to d * D.
    pub dimension: usize,
    /// Ideal objective vector; its length is the objective count M.
    pub ideal: Vec<f64>,
    pub restart: bool,
    pub restart_delta: f64,
    pub restart_window: usize,
    pub stop_delta: f64,
    pub stop_window: usize,
    pub archive_capacity: usize,
    pub seed: u64,
}

impl Default for MaooConfig {
    fn default() -> Self {
        MaooConfig {
            population_size: 100,
            max_generations: 2000,
            crossover_rate: 0.8,
            scale_factor_min: 0.0,
            scale_factor_max: 2.0,
            lower_bound: 0.0,
            upper_bound: 1.0,
            dimension: 196,
            ideal: vec![1.0; 6],
            restart: true,
            restart_delta: 0.1,
            restart_window: 10,
            stop_delta: 0.01,
            stop_window: 50,
            archive_capacity: 200,
            seed: 2017,
        }
    }
}

impl MaooConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population_size < 4 {
            return bad(format!(
                "population_size {} < 4; mutation needs four distinct members",
                self.population_size
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!(
                "crossover_rate {} outside [0, 1]",
                self.crossover_rate
            ));
        }
        if !(self.scale_factor_min < self.scale_factor_max) {
            return bad("scale factor range is empty".into());
        }
        if !(self.lower_bound <= self.upper_bound)
            || !self.lower_bound.is_finite()
            || !self.upper_bound.is_finite()
        {
            return bad("invalid decision bounds".into());
        }
        if self.dimension == 0 || self.ideal.is_empty() {
            return bad("dimension and objective count must be positive".into());
        }
        if self.restart_window == 0 || self.stop_window == 0 {
            return bad("restart_window and stop_window must be at least 1".into());
        }
        if self.archive_capacity == 0 {
            return bad("archive_capacity must be positive".into());
        }
        Ok(())
    }

    pub fn objectives(&self) -> usize {
        self.ideal.len()
    }
}

/// Independent random streams so parallel evaluation never perturbs draws.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub init: ChaCha8Rng,
    pub index: ChaCha8Rng,
    pub scale: ChaCha8Rng,
    pub crossover: ChaCha8Rng,
    pub restart: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        RngStreams {
            init: stream(1),
            index: stream(2),
            scale: stream(3),
            crossover: stream(4),
            restart: stream(5),
        }
    }
}

/// An evaluated decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub idist: f64,
    history: VecDeque<f64>,
}

impl Candidate {
    pub fn new(x: Vec<f64>, f: Vec<f64>, ideal: &[f64]) -> Result<Self> {
        let idist = idist(&f, ideal)?;
        Ok(Candidate {
            x,
            f,
            idist,
            history: VecDeque::from([idist]),
        })
    }

    /// `idist` recorded at the end of each generation, oldest first.
    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    fn record(&mut self, keep: usize) {
        self.history.push_back(self.idist);
        while self.history.len() > keep {
            self.history.pop_front();
        }
    }

    /// True when the latest `idist` differs by less than `delta` from the
    /// value `window` generations earlier.
    fn is_stagnant(&self, window: usize, delta: f64) -> bool {
        self.history.len() > window
            && (self.history[self.history.len() - 1]
                - self.history[self.history.len() - 1 - window])
                .abs()
                < delta
    }
}

/// Favour non-dominated solutions kept across re-initializations.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    members: Vec<Candidate>,
    capacity: usize,
}

impl Archive {
    pub fn new(capacity: usize) -> Self {
        Archive {
            members: Vec::new(),
            capacity,
        }
    }

    pub fn members(&self) -> &[Candidate] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Adds `c` unless a member favour-dominates it; evicts members it
    /// dominates, then the largest-`idist` members beyond capacity.
    pub fn insert(&mut self, c: Candidate) -> bool {
        if self
            .members
            .iter()
            .any(|m| favour_dominates(&m.f, &c.f).unwrap_or(false))
        {
            return false;
        }
        self.members
            .retain(|m| !favour_dominates(&c.f, &m.f).unwrap_or(false));
        self.members.push(c);
        if self.members.len() > self.capacity {
            self.members.sort_by(|a, b| a.idist.total_cmp(&b.idist));
            self.members.truncate(self.capacity);
        }
        true
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "objective vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `a` is no worse everywhere and strictly better somewhere (maximization).
pub fn pareto_dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_lengths(a, b)?;
    let no_worse = a.iter().zip(b).all(|(x, y)| x >= y);
    let better = a.iter().zip(b).any(|(x, y)| x > y);
    Ok(no_worse && better)
}

/// `a` is strictly better than `b` in more objectives than the reverse.
pub fn favour_dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_lengths(a, b)?;
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    Ok(wins > losses)
}

/// Euclidean distance from `f` to the ideal vector.
pub fn idist(f: &[f64], ideal: &[f64]) -> Result<f64> {
    check_lengths(f, ideal)?;
    Ok(f.iter()
        .zip(ideal)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn draw_vector(cfg: &MaooConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let span = cfg.upper_bound - cfg.lower_bound;
    (0..cfg.dimension)
        .map(|_| cfg.lower_bound + rng.random::<f64>() * span)
        .collect()
}

/// NP uniform random vectors inside the bounds.
pub fn initialize(cfg: &MaooConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    Ok((0..cfg.population_size)
        .map(|_| draw_vector(cfg, rng))
        .collect())
}

/// `base + f * (a - b)`, clamped to the bounds.
pub fn donor(
    base: &[f64],
    a: &[f64],
    b: &[f64],
    f: f64,
    lower: f64,
    upper: f64,
) -> Result<Vec<f64>> {
    if base.len() != a.len() || a.len() != b.len() {
        return Err(Error::dim("donor operands differ in length"));
    }
    Ok(base
        .iter()
        .zip(a.iter().zip(b))
        .map(|(x, (p, q))| (x + f * (p - q)).clamp(lower, upper))
        .collect())
}

/// Three distinct indices, all different from `i`.
pub fn distinct_indices(np: usize, i: usize, rng: &mut ChaCha8Rng) -> Result<[usize; 3]> {
    if np < 4 || i >= np {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 members to mutate index {i}, have {np}"
        )));
    }
    let mut picked = [usize::MAX; 3];
    for k in 0..3 {
        picked[k] = loop {
            let r = rng.random_range(0..np);
            if r != i && !picked[..k].contains(&r) {
                break r;
            }
        };
    }
    Ok(picked)
}

/// Donor vector for member `i` of `population`.
pub fn mutate(
    population: &[Vec<f64>],
    i: usize,
    f: f64,
    cfg: &MaooConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let [r1, r2, r3] = distinct_indices(population.len(), i, rng)?;
    donor(
        &population[r1],
        &population[r2],
        &population[r3],
        f,
        cfg.lower_bound,
        cfg.upper_bound,
    )
}

/// Scale factor from the open interval (min, max).
pub fn draw_scale_factor(cfg: &MaooConfig, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let f = rng.random_range(cfg.scale_factor_min..cfg.scale_factor_max);
        if f > cfg.scale_factor_min {
            return f;
        }
    }
}

/// Binomial crossover: coordinate j comes from the donor when
/// `rand_j <= cr` or `j` is the one forced index.
pub fn recombine(x: &[f64], v: &[f64], cr: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if x.len() != v.len() || x.is_empty() {
        return Err(Error::dim(format!(
            "candidate length {} vs donor length {}",
            x.len(),
            v.len()
        )));
    }
    if !(0.0..=1.0).contains(&cr) {
        return Err(Error::InvalidArgument(format!(
            "crossover rate {cr} outside [0, 1]"
        )));
    }
    let forced = rng.random_range(0..x.len());
    Ok(x.iter()
        .zip(v)
        .enumerate()
        .map(|(j, (&xj, &vj))| {
            let r: f64 = rng.random();
            if r <= cr || j == forced {
                vj
            } else {
                xj
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Survivor {
    Candidate,
    Trial,
}

/// The parent survives only if it favour-dominates the trial.
pub fn select(candidate: &[f64], trial: &[f64]) -> Result<Survivor> {
    if candidate.is_empty() || trial.is_empty() {
        return Err(Error::InvalidArgument(
            "selection on unevaluated vectors".into(),
        ));
    }
    Ok(if favour_dominates(candidate, trial)? {
        Survivor::Candidate
    } else {
        Survivor::Trial
    })
}

fn evaluate_checked(objective: &dyn Objective, x: &[f64], m: usize) -> Result<Vec<f64>> {
    let f = objective.evaluate(x)?;
    if f.len() != m {
        return Err(Error::dim(format!(
            "objective returned {} values, expected {m}",
            f.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective vector".into()));
    }
    Ok(f)
}

fn evaluate_all(
    objective: &dyn Objective,
    xs: &[Vec<f64>],
    cfg: &MaooConfig,
) -> Result<Vec<Vec<f64>>> {
    let m = cfg.objectives();
    xs.par_iter()
        .map(|x| evaluate_checked(objective, x, m))
        .collect()
}

/// Re-draws the lowest-`idist` stagnant member, archiving it first.
/// Returns the index that was replaced, if any.
pub fn restart_stagnant(
    population: &mut [Candidate],
    archive: &mut Archive,
    cfg: &MaooConfig,
    rng: &mut ChaCha8Rng,
    objective: &dyn Objective,
) -> Result<Option<usize>> {
    let chosen = population
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_stagnant(cfg.restart_window, cfg.restart_delta))
        .min_by(|a, b| a.1.idist.total_cmp(&b.1.idist).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let Some(i) = chosen else {
        return Ok(None);
    };
    archive.insert(population[i].clone());
    let x = draw_vector(cfg, rng);
    let f = evaluate_checked(objective, &x, cfg.objectives())?;
    population[i] = Candidate::new(x, f, &cfg.ideal)?;
    Ok(Some(i))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub generation: usize,
    /// Minimum `idist` over the population.
    pub min_idist: f64,
    /// Minimum `idist` over population and archive.
    pub best_idist: f64,
    /// Per-objective maximum over the population.
    pub objective_max: Vec<f64>,
    pub restarted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    MaxGenerations,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub population: Vec<Candidate>,
    pub archive: Archive,
    pub trace: Vec<TraceRow>,
    pub stop_reason: StopReason,
    pub evaluations: usize,
}

impl RunOutcome {
    pub fn generations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.generation)
    }
}

fn trace_row(
    generation: usize,
    pop: &[Candidate],
    archive: &Archive,
    restarted: Option<usize>,
) -> TraceRow {
    let min_idist = pop.iter().map(|c| c.idist).fold(f64::INFINITY, f64::min);
    let best_idist = archive
        .members()
        .iter()
        .map(|c| c.idist)
        .fold(min_idist, f64::min);
    let m = pop[0].f.len();
    let objective_max = (0..m)
        .map(|j| pop.iter().map(|c| c.f[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    TraceRow {
        generation,
        min_idist,
        best_idist,
        objective_max,
        restarted,
    }
}

/// Runs the optimizer until `max_generations` or the stall rule.
pub fn run(cfg: &MaooConfig, objective: &dyn Objective) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut rng = RngStreams::new(cfg.seed);
    let m = cfg.objectives();
    let keep = cfg.restart_window + 1;

    let xs = initialize(cfg, &mut rng.init)?;
    let fs = evaluate_all(objective, &xs, cfg)?;
    let mut evaluations = xs.len();
    let mut population = xs
        .into_iter()
        .zip(fs)
        .map(|(x, f)| Candidate::new(x, f, &cfg.ideal))
        .collect::<Result<Vec<_>>>()?;
    let mut archive = Archive::new(cfg.archive_capacity);
    let mut trace = vec![trace_row(0, &population, &archive, None)];
    let mut stop_reason = StopReason::MaxGenerations;

    for generation in 1..=cfg.max_generations {
        let snapshot: Vec<Vec<f64>> = population.iter().map(|c| c.x.clone()).collect();
        let mut trials = Vec::with_capacity(snapshot.len());
        for (i, x) in snapshot.iter().enumerate() {
            let f = draw_scale_factor(cfg, &mut rng.scale);
            let v = mutate(&snapshot, i, f, cfg, &mut rng.index)?;
            trials.push(recombine(x, &v, cfg.crossover_rate, &mut rng.crossover)?);
        }
        let trial_f = evaluate_all(objective, &trials, cfg)?;
        evaluations += trials.len();

        for ((c, u), fu) in population.iter_mut().zip(trials).zip(trial_f) {
            if select(&c.f, &fu)? == Survivor::Trial {
                c.idist = idist(&fu, &cfg.ideal)?;
                c.x = u;
                c.f = fu;
            }
            c.record(keep);
        }

        let restarted = if cfg.restart {
            let r = restart_stagnant(
                &mut population,
                &mut archive,
                cfg,
                &mut rng.restart,
                objective,
            )?;
            evaluations += usize::from(r.is_some());
            r
        } else {
            None
        };

        let row = trace_row(generation, &population, &archive, restarted);
        debug_assert_eq!(row.objective_max.len(), m);
        trace.push(row);

        if generation >= cfg.stop_window {
            let now = trace[generation].min_idist;
            let then = trace[generation - cfg.stop_window].min_idist;
            if (now - then).abs() < cfg.stop_delta {
                stop_reason = StopReason::Stalled;
                break;
            }
        }
    }

    Ok(RunOutcome {
        population,
        archive,
        trace,
        stop_reason,
        evaluations,
    })
}

/// Indices of members not favour-dominated by any other member.
pub fn non_dominated(pool: &[Candidate]) -> Vec<usize> {
    (0..pool.len())
        .filter(|&i| {
            !pool
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && favour_dominates(&other.f, &pool[i].f).unwrap_or(false))
        })
        .collect()
}

/// The chosen compromise and the front it was picked from.
#[derive(Debug, Clone)]
pub struct Decision {
    pub chosen: Candidate,
    pub front: Vec<Candidate>,
}

/// Picks the minimum-`idist` member of the favour non-dominated set of
/// `pool`. The favour relation is not transitive, so a cycle can leave no
/// member undominated; the whole pool is used as the front in that case.
pub fn decide(pool: &[Candidate]) -> Result<Decision> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument(
            "no candidates to decide between".into(),
        ));
    }
    let idx = non_dominated(pool);
    let front: Vec<Candidate> = if idx.is_empty() {
        pool.to_vec()
    } else {
        idx.iter().map(|&i| pool[i].clone()).collect()
    };
    let chosen = front
        .iter()
        .min_by(|a, b| a.idist.total_cmp(&b.idist))
        .cloned()
        .expect("front is non-empty");
    Ok(Decision { chosen, front })
}

/// Decision over the final population together with the archive.
pub fn decide_outcome(outcome: &RunOutcome) -> Result<Decision> {
    let pool: Vec<Candidate> = outcome
        .population
        .iter()
        .chain(outcome.archive.members())
        .cloned()
        .collect();
    decide(&pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> MaooConfig {
        MaooConfig {
            dimension: n,
            ..MaooConfig::default()
        }
    }

    fn cand(f: Vec<f64>) -> Candidate {
        let ideal = vec![1.0; f.len()];
        Candidate::new(vec![0.0], f, &ideal).unwrap()
    }

    #[test]
    fn initialize_within_bounds_and_seeded() {
        let c = cfg(7);
        let a = initialize(&c, &mut RngStreams::new(3).init).unwrap();
        let b = initialize(&c, &mut RngStreams::new(3).init).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));

        let flat = MaooConfig {
            lower_bound: 0.3,
            upper_bound: 0.3,
            ..cfg(4)
        };
        let p = initialize(&flat, &mut RngStreams::new(1).init).unwrap();
        assert!(p.iter().flatten().all(|&v| v == 0.3));

        let tiny = MaooConfig {
            population_size: 3,
            ..cfg(4)
        };
        assert!(initialize(&tiny, &mut RngStreams::new(1).init).is_err());
    }

    #[test]
    fn donor_examples() {
        assert_eq!(
            donor(&[0.2], &[0.5], &[0.5], 1.3, 0.0, 1.0).unwrap(),
            vec![0.2]
        );
        assert_eq!(
            donor(&[0.2], &[0.9], &[0.1], 1e-300, 0.0, 1.0).unwrap(),
            vec![0.2]
        );
        assert_eq!(
            donor(&[0.2], &[0.9], &[0.1], 1.5, 0.0, 1.0).unwrap(),
            vec![1.0]
        );
        assert_eq!(
            donor(&[0.2], &[0.1], &[0.9], 1.5, 0.0, 1.0).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn mutation_indices_are_distinct() {
        let mut rng = RngStreams::new(0).index;
        for i in 0..4 {
            for _ in 0..200 {
                let [a, b, c] = distinct_indices(4, i, &mut rng).unwrap();
                let mut all = vec![a, b, c, i];
                all.sort_unstable();
                all.dedup();
                assert_eq!(all.len(), 4);
            }
        }
        assert!(distinct_indices(3, 0, &mut rng).is_err());
    }

    #[test]
    fn scale_factor_in_open_interval() {
        let c = cfg(2);
        let mut rng = RngStreams::new(8).scale;
        for _ in 0..10_000 {
            let f = draw_scale_factor(&c, &mut rng);
            assert!(f > 0.0 && f < 2.0);
        }
    }

    #[test]
    fn recombination_extremes() {
        let mut rng = RngStreams::new(1).crossover;
        let x = vec![0.0; 10];
        let v = vec![1.0; 10];
        assert_eq!(recombine(&x, &v, 1.0, &mut rng).unwrap(), v);
        for _ in 0..100 {
            let u = recombine(&x, &v, 0.0, &mut rng).unwrap();
            assert_eq!(u.iter().filter(|&&a| a == 1.0).count(), 1);
        }
        assert!(recombine(&x, &v[..3], 0.5, &mut rng).is_err());
    }

    #[test]
    fn recombination_rate_matches_cr() {
        let mut rng = RngStreams::new(2).crossover;
        let x = vec![0.0; 100];
        let v = vec![1.0; 100];
        let draws = 1000; // 10^5 coordinates
        let inherited: usize = (0..draws)
            .map(|_| {
                recombine(&x, &v, 0.8, &mut rng)
                    .unwrap()
                    .iter()
                    .filter(|&&a| a == 1.0)
                    .count()
            })
            .sum();
        let frac = inherited as f64 / (draws * 100) as f64;
        assert!((frac - 0.8).abs() <= 0.03, "{frac}");
    }

    #[test]
    fn dominance_examples() {
        let ones = [1.0; 6];
        let lower = [0.9; 6];
        assert!(pareto_dominates(&ones, &lower).unwrap());
        assert!(!pareto_dominates(&ones, &ones).unwrap());
        let a = [1.0, 0.0, 0.5, 0.5, 0.5, 0.5];
        let b = [0.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        assert!(!pareto_dominates(&a, &b).unwrap());
        assert!(!pareto_dominates(&b, &a).unwrap());
        assert!(pareto_dominates(&a, &b[..2]).is_err());

        let f1 = [0.9, 0.9, 0.9, 0.1, 0.1, 0.5];
        let f2 = [0.1, 0.1, 0.1, 0.9, 0.9, 0.5];
        assert!(favour_dominates(&f1, &f2).unwrap());
        assert!(!favour_dominates(&f2, &f1).unwrap());
        assert!(!favour_dominates(&a, &b).unwrap());
        assert!(!favour_dominates(&b, &a).unwrap());
        assert!(favour_dominates(&a, &b[..3]).is_err());
    }

    #[test]
    fn idist_examples() {
        let ideal = [1.0; 6];
        assert_eq!(idist(&ideal, &ideal).unwrap(), 0.0);
        assert!((idist(&[0.0; 6], &ideal).unwrap() - 6f64.sqrt()).abs() < 1e-15);
        assert!((idist(&[0.5; 6], &ideal).unwrap() - 1.5f64.sqrt()).abs() < 1e-15);
        assert!(idist(&[0.5; 5], &ideal).is_err());
    }

    #[test]
    fn selection_rule() {
        let good = [0.9; 6];
        let bad = [0.1; 6];
        assert_eq!(select(&good, &bad).unwrap(), Survivor::Candidate);
        assert_eq!(select(&bad, &good).unwrap(), Survivor::Trial);
        let a = [1.0, 0.0, 0.5, 0.5, 0.5, 0.5];
        let b = [0.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        assert_eq!(select(&a, &b).unwrap(), Survivor::Trial);
        assert!(select(&[], &b).is_err());
    }

    #[test]
    fn archive_keeps_non_dominated() {
        let mut ar = Archive::new(3);
        assert!(ar.insert(cand(vec![0.5, 0.5, 0.5])));
        assert!(!ar.insert(cand(vec![0.4, 0.4, 0.5])));
        assert!(ar.insert(cand(vec![0.9, 0.9, 0.1])));
        assert_eq!(ar.len(), 1);
        assert!(ar.insert(cand(vec![0.1, 0.95, 0.95])));
        for a in ar.members() {
            for b in ar.members() {
                assert!(!favour_dominates(&a.f, &b.f).unwrap());
            }
        }
    }

    #[test]
    fn restart_picks_lowest_idist_stagnant() {
        let c = MaooConfig {
            population_size: 4,
            ..cfg(2)
        };
        let mk = |v: f64| {
            let mut k = Candidate::new(vec![0.5, 0.5], vec![v; 6], &c.ideal).unwrap();
            for _ in 0..c.restart_window {
                k.record(c.restart_window + 1);
            }
            k
        };
        // idist for f = v * ones is sqrt(6) (1 - v).
        let mut pop0 = vec![
            mk(1.0 - 0.3 / 6f64.sqrt()),
            mk(1.0 - 0.7 / 6f64.sqrt()),
            mk(0.2),
            mk(0.1),
        ];
        for k in pop0.iter_mut().skip(2) {
            k.history = VecDeque::from([k.idist]);
        }
        let mut fresh = pop0.clone();
        let objective = |x: &[f64]| Ok(vec![x[0]; 6]);
        let mut archive = Archive::new(10);
        let mut rng = RngStreams::new(4).restart;
        let hit = restart_stagnant(&mut fresh, &mut archive, &c, &mut rng, &objective).unwrap();
        assert_eq!(hit, Some(0));
        assert!(fresh[0].x.iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(fresh[0].history().count(), 1);
        assert_eq!(archive.len(), 1);
        assert_eq!(fresh[1..], pop0[1..]);

        let mut none: Vec<Candidate> = pop0
            .iter()
            .map(|k| Candidate::new(k.x.clone(), k.f.clone(), &c.ideal).unwrap())
            .collect();
        let before = none.clone();
        assert_eq!(
            restart_stagnant(&mut none, &mut archive, &c, &mut rng, &objective).unwrap(),
            None
        );
        assert_eq!(none, before);
    }

    #[test]
    fn decide_examples() {
        let single = vec![cand(vec![0.3, 0.6])];
        assert_eq!(decide(&single).unwrap().chosen, single[0]);
        assert!(decide(&[]).is_err());

        // Mutually non-dominated: each wins one objective and loses one.
        let a = cand(vec![0.9, 0.2, 0.5]);
        let b = cand(vec![0.5, 0.9, 0.2]);
        let c = cand(vec![0.2, 0.5, 0.9]);
        let d = decide(&[a.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(d.front.len(), 3);
        let best = [&a, &b, &c]
            .into_iter()
            .min_by(|p, q| p.idist.total_cmp(&q.idist))
            .unwrap();
        assert_eq!(&d.chosen, best);
    }

    #[test]
    fn constant_objective_stalls_early() {
        let c = MaooConfig {
            population_size: 10,
            ..cfg(3)
        };
        let objective = |_: &[f64]| Ok(vec![0.5; 6]);
        let out = run(&c, &objective).unwrap();
        assert_eq!(out.stop_reason, StopReason::Stalled);
        assert!(out.generations() < 200);
    }

    #[test]
    fn objective_errors_surface() {
        let c = MaooConfig {
            population_size: 5,
            ..cfg(2)
        };
        let short = |_: &[f64]| Ok(vec![0.5; 5]);
        assert!(run(&c, &short).is_err());
        let nan = |_: &[f64]| Ok(vec![f64::NAN; 6]);
        assert!(run(&c, &nan).is_err());
    }
}
