//! Monte-Carlo checks of max-average-agreement selection in the categorical
//! predicate model.
//!
//! A target vector `v` has `d` categorical predicates with `l` categories each; `n`
//! estimates `u_i` of it are observed only through their pairwise fractional
//! agreement. Selection picks the estimate with the highest mean agreement with
//! the others.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category label in `1..=l`.
pub type Category = u32;

/// Per-trial RNG: the seed's ChaCha8 stream number `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Mixes a base seed with grid coordinates so each grid point gets its own
/// stream family regardless of which other points are run.
pub fn grid_seed(seed: u64, coords: &[usize]) -> u64 {
    let mut h = splitmix64(seed);
    for &c in coords {
        h = splitmix64(h ^ c as u64);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Number of coordinates on which two estimates agree.
pub fn matches(a: &[Category], b: &[Category]) -> usize {
    assert_eq!(a.len(), b.len(), "estimates must have equal length");
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// `a(u, w) = (1/d) Σ_t I(u^t = w^t)`.
pub fn fractional_agreement(a: &[Category], b: &[Category]) -> f64 {
    assert!(!a.is_empty(), "estimates must have at least one predicate");
    matches(a, b) as f64 / a.len() as f64
}

/// Per estimate, the total number of matching coordinates with every other estimate.
/// Dividing by `d (n - 1)` gives the mean fractional agreement.
pub fn agreement_totals(us: &[Vec<Category>]) -> Vec<usize> {
    let Some(first) = us.first() else {
        return Vec::new();
    };
    let d = first.len();
    let max_cat = us.iter().flatten().copied().max().unwrap_or(0) as usize;
    let mut totals = vec![0usize; us.len()];
    let mut counts = vec![0usize; max_cat + 1];
    for t in 0..d {
        counts.iter_mut().for_each(|c| *c = 0);
        for u in us {
            counts[u[t] as usize] += 1;
        }
        for (total, u) in totals.iter_mut().zip(us) {
            *total += counts[u[t] as usize] - 1;
        }
    }
    totals
}

/// Index maximizing mean fractional agreement with the other estimates; the lowest
/// index wins ties. Panics on an empty set.
pub fn select_by_agreement(us: &[Vec<Category>]) -> usize {
    assert!(!us.is_empty(), "need at least one estimate");
    let totals = agreement_totals(us);
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t > totals[best] {
            best = i;
        }
    }
    best
}

/// Uniform draw from the probability simplex over `l` categories.
pub fn sample_simplex<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..l).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn categorical(probs: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(probs).expect("simplex draw has positive mass")
}

/// One sampled instance of the predicate model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateWorld {
    pub d: usize,
    pub l: usize,
    pub n: usize,
    pub target: Vec<Category>,
    /// `n` rows of length `d`.
    pub estimates: Vec<Vec<Category>>,
    /// One categorical distribution over `l` categories per predicate.
    pub distributions: Vec<Vec<f64>>,
}

/// How the target vector relates to the per-predicate distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetModel {
    /// Each target entry is the most probable category of its predicate, so the
    /// correct value is the one estimates produce most often.
    #[default]
    Modal,
    /// The target is drawn from the same distributions as the estimates.
    Sampled,
}

impl std::str::FromStr for TargetModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modal" => Ok(TargetModel::Modal),
            "sampled" => Ok(TargetModel::Sampled),
            other => Err(Error::InvalidArgument(format!("unknown target model {other:?}"))),
        }
    }
}

fn mode(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

impl PredicateWorld {
    /// Draws a categorical distribution per predicate uniformly from the simplex,
    /// then every estimate i.i.d. from it. The target follows `model`.
    pub fn sample<R: Rng + ?Sized>(d: usize, l: usize, n: usize, model: TargetModel, rng: &mut R) -> Self {
        let distributions: Vec<Vec<f64>> = (0..d).map(|_| sample_simplex(l, rng)).collect();
        let mut target = Vec::with_capacity(d);
        let mut estimates = vec![Vec::with_capacity(d); n];
        for dist in &distributions {
            let cat = categorical(dist);
            let v = match model {
                TargetModel::Modal => mode(dist),
                TargetModel::Sampled => cat.sample(rng),
            };
            target.push(v as Category + 1);
            for u in &mut estimates {
                u.push(cat.sample(rng) as Category + 1);
            }
        }
        PredicateWorld {
            d,
            l,
            n,
            target,
            estimates,
            distributions,
        }
    }
}

/// Aggregate recovery statistics over many sampled worlds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Fraction of trials where the selected estimate has the best agreement with the target.
    pub top1_rate: f64,
    /// Mean over trials of the selected estimate's agreement with the closest best estimate.
    pub mean_agreement_with_best: f64,
    /// Same as `top1_rate` for a uniformly random pick (exact expectation per trial).
    pub random_top1_rate: f64,
    /// Same as `mean_agreement_with_best` for a uniformly random pick (exact expectation).
    pub random_agreement: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    top1: f64,
    agreement: f64,
    random_top1: f64,
    random_agreement: f64,
}

fn recovery_trial(d: usize, l: usize, n: usize, model: TargetModel, rng: &mut ChaCha8Rng) -> TrialOutcome {
    let world = PredicateWorld::sample(d, l, n, model, rng);
    let us = &world.estimates;
    let chosen = select_by_agreement(us);
    let to_target: Vec<usize> = us.iter().map(|u| matches(u, &world.target)).collect();
    let best_score = *to_target.iter().max().expect("n >= 1");
    let best: Vec<usize> = (0..n).filter(|&i| to_target[i] == best_score).collect();
    let mut distinct_best: Vec<&[Category]> = best.iter().map(|&j| us[j].as_slice()).collect();
    distinct_best.sort_unstable();
    distinct_best.dedup();
    let closeness = |i: usize| -> f64 {
        distinct_best
            .iter()
            .map(|u| matches(&us[i], u))
            .max()
            .expect("best set is non-empty") as f64
            / d as f64
    };
    TrialOutcome {
        top1: if to_target[chosen] == best_score { 1.0 } else { 0.0 },
        agreement: closeness(chosen),
        random_top1: best.len() as f64 / n as f64,
        random_agreement: (0..n).map(closeness).sum::<f64>() / n as f64,
    }
}

fn check_dims(d: usize, l: usize, n: usize, trials: usize) -> Result<()> {
    if d < 2 || l < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "recovery simulation needs d, l, n >= 2 (got d={d}, l={l}, n={n})"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    Ok(())
}

/// Samples `trials` worlds and measures how often max-average-agreement selection
/// recovers an estimate with the best agreement with the target.
///
/// "Best estimate" ties are resolved in the estimate's favour: an estimate counts as
/// top-1 when its agreement with the target equals the maximum, and its agreement
/// with the best is the maximum over all best estimates.
pub fn simulate_recovery(d: usize, l: usize, n: usize, trials: usize, seed: u64) -> Result<RecoveryStats> {
    simulate_recovery_with(d, l, n, trials, seed, TargetModel::default())
}

/// [`simulate_recovery`] with an explicit target model.
pub fn simulate_recovery_with(
    d: usize,
    l: usize,
    n: usize,
    trials: usize,
    seed: u64,
    model: TargetModel,
) -> Result<RecoveryStats> {
    check_dims(d, l, n, trials)?;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| recovery_trial(d, l, n, model, &mut trial_rng(seed, t as u64)))
        .collect();
    let mean = |f: fn(&TrialOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / trials as f64;
    Ok(RecoveryStats {
        top1_rate: mean(|o| o.top1),
        mean_agreement_with_best: mean(|o| o.agreement),
        random_top1_rate: mean(|o| o.random_top1),
        random_agreement: mean(|o| o.random_agreement),
        trials,
    })
}

/// Result of the planted-target selection check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCheck {
    pub trials: usize,
    /// Trials where the selected estimate differs from the target. Expected 0.
    pub violations: usize,
    /// Predicate columns redrawn to enforce the self-consistency condition.
    pub resamples: u64,
}

const MAX_COLUMN_ATTEMPTS: u64 = 1_000_000;

/// Draws one predicate column where the target's category is the strict mode
/// among the `n` estimates, one of which (`planted`) equals the target.
fn self_consistent_column<R: Rng + ?Sized>(
    l: usize,
    n: usize,
    planted: usize,
    rng: &mut R,
    resamples: &mut u64,
) -> Result<(Category, Vec<Category>)> {
    let mut counts = vec![0usize; l];
    for _ in 0..MAX_COLUMN_ATTEMPTS {
        let dist = sample_simplex(l, rng);
        let cat = categorical(&dist);
        let v = cat.sample(rng);
        counts.iter_mut().for_each(|c| *c = 0);
        let column: Vec<Category> = (0..n)
            .map(|i| {
                let c = if i == planted { v } else { cat.sample(rng) };
                counts[c] += 1;
                c as Category + 1
            })
            .collect();
        let strict_mode = counts.iter().enumerate().all(|(c, &k)| c == v || k < counts[v]);
        if strict_mode {
            return Ok((v as Category + 1, column));
        }
        *resamples += 1;
    }
    Err(Error::Internal(format!(
        "no self-consistent column after {MAX_COLUMN_ATTEMPTS} draws (l={l}, n={n})"
    )))
}

/// Plants an exact copy of the target among the estimates, enforces the
/// self-consistency condition (the target's category is the strict mode of every
/// predicate) by redrawing offending predicate columns, and counts trials where
/// selection returns anything other than the target.
///
/// Predicates are independent, so redrawing a single column samples the same
/// conditional distribution as redrawing the whole trial.
pub fn check_planted_target(trials: usize, seed: u64, d: usize, l: usize, n: usize) -> Result<PlantedCheck> {
    if d == 0 || l == 0 || n == 0 || trials == 0 {
        return Err(Error::InvalidArgument(format!(
            "planted check needs positive d, l, n, trials (got d={d}, l={l}, n={n}, trials={trials})"
        )));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let planted = rng.random_range(0..n);
            let mut resamples = 0;
            let mut target = Vec::with_capacity(d);
            let mut us = vec![Vec::with_capacity(d); n];
            for _ in 0..d {
                let (v, column) = self_consistent_column(l, n, planted, &mut rng, &mut resamples)?;
                target.push(v);
                for (u, c) in us.iter_mut().zip(column) {
                    u.push(c);
                }
            }
            debug_assert_eq!(us[planted], target);
            let chosen = select_by_agreement(&us);
            Ok((us[chosen] != target, resamples))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlantedCheck {
        trials,
        violations: per_trial.iter().filter(|(v, _)| *v).count(),
        resamples: per_trial.iter().map(|(_, r)| r).sum(),
    })
}

/// Exact rational `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// Marginal category counts (out of `population`) defining the two-predicate,
/// three-category counterexample population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterexampleMarginals {
    pub population: u64,
    /// Predicate 1, target category.
    pub p1: u64,
    /// Predicate 1, a non-target category.
    pub p1_alt: u64,
    /// Predicate 2, the rare non-target category carried by the better generation.
    pub p2_alt: u64,
    /// Predicate 2, the common non-target category carried by the worse generation.
    pub p2_alt2: u64,
}

impl Default for CounterexampleMarginals {
    fn default() -> Self {
        CounterexampleMarginals {
            population: 1000,
            p1: 340,
            p1_alt: 320,
            p2_alt: 10,
            p2_alt2: 320,
        }
    }
}

/// Demonstration that max-average-agreement can prefer an estimate with lower
/// agreement with the target once there is more than one predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub marginals: CounterexampleMarginals,
    pub target: Vec<Category>,
    pub population: Vec<Vec<Category>>,
    /// Agrees with the target on predicate 1 only.
    pub better: usize,
    /// Agrees with the target nowhere.
    pub worse: usize,
    /// Mean agreement with the population (self included) of `better` and `worse`.
    pub better_score: Ratio,
    pub worse_score: Ratio,
    pub better_target_agreement: f64,
    pub worse_target_agreement: f64,
    /// The criterion's pick between `better` and `worse`.
    pub selected: usize,
    /// The pick when only predicate 1 is scored.
    pub single_predicate_selected: usize,
}

impl Counterexample {
    pub fn picks_worse(&self) -> bool {
        self.selected == self.worse
    }
}

/// Builds the population realizing `marginals` with target `(1, 1)`:
/// predicate 1 has categories {1: p1, 2: p1_alt, 3: rest}, predicate 2 has
/// {2: p2_alt, 3: p2_alt2, 1: rest}. Member `better = (1, 2)` and member
/// `worse = (2, 3)` are scored by mean agreement with the whole population.
pub fn counterexample(marginals: CounterexampleMarginals) -> Result<Counterexample> {
    let CounterexampleMarginals {
        population: n,
        p1,
        p1_alt,
        p2_alt,
        p2_alt2,
    } = marginals;
    if p1 + p1_alt > n || p2_alt + p2_alt2 > n || p2_alt == 0 || p2_alt > p1 || p2_alt2 == 0 || p2_alt2 > p1_alt {
        return Err(Error::InvalidArgument(format!(
            "unrealizable counterexample marginals {marginals:?}"
        )));
    }
    let rep = |c: Category, k: u64| std::iter::repeat_n(c, k as usize);
    let col1: Vec<Category> = rep(1, p1)
        .chain(rep(2, p1_alt))
        .chain(rep(3, n - p1 - p1_alt))
        .collect();
    // Lay predicate 2 out so that index 0 is (1, 2) and index p1 is (2, 3).
    let col2: Vec<Category> = rep(2, p2_alt)
        .chain(rep(1, p1 - p2_alt))
        .chain(rep(3, p2_alt2))
        .chain(rep(1, n - p1 - p2_alt2))
        .collect();
    let population: Vec<Vec<Category>> = col1.iter().zip(&col2).map(|(&a, &b)| vec![a, b]).collect();
    let target = vec![1, 1];
    let (better, worse) = (0usize, p1 as usize);
    debug_assert_eq!(population[better], [1, 2]);
    debug_assert_eq!(population[worse], [2, 3]);

    let score = |i: usize, preds: usize| Ratio {
        num: population
            .iter()
            .map(|u| matches(&population[i][..preds], &u[..preds]) as u64)
            .sum(),
        den: preds as u64 * n,
    };
    let pick = |a: Ratio, b: Ratio| if b > a { worse } else { better };
    let (better_score, worse_score) = (score(better, 2), score(worse, 2));
    Ok(Counterexample {
        marginals,
        better_target_agreement: fractional_agreement(&population[better], &target),
        worse_target_agreement: fractional_agreement(&population[worse], &target),
        selected: pick(better_score, worse_score),
        single_predicate_selected: pick(score(better, 1), score(worse, 1)),
        target,
        population,
        better,
        worse,
        better_score,
        worse_score,
    })
}

/// Empirical check of the expectation bound for Bernoulli predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub n: usize,
    pub trials: usize,
    /// Empirical mean of `Σ_j u_b^j`.
    pub mean: f64,
    pub stderr: f64,
    pub sum_p: f64,
    /// `sqrt(k ln k / 2)`.
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether `[mean - 3 se, mean + 3 se]` meets `[lower, upper]`.
    pub within: bool,
}

/// Draws `n` sequences with `u^j ~ Bernoulli(p_j)`, selects
/// `b = argmax_i Σ_j p_j u_i^j`, and compares the mean of `Σ_j u_b^j` with
/// `Σ p ± sqrt(k ln k / 2)`.
pub fn simulate_bernoulli_bound(k: usize, n: usize, ps: &[f64], trials: usize, seed: u64) -> Result<BoundReport> {
    if k == 0 || n == 0 || trials == 0 || ps.len() != k {
        return Err(Error::InvalidArgument(format!(
            "bound simulation needs k, n, trials > 0 and k probabilities (k={k}, n={n}, {} probabilities)",
            ps.len()
        )));
    }
    if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let mut best_weight = f64::NEG_INFINITY;
            let mut best_sum = 0usize;
            for _ in 0..n {
                let mut weight = 0.0;
                let mut sum = 0usize;
                for &p in ps {
                    if rng.random_bool(p) {
                        weight += p;
                        sum += 1;
                    }
                }
                if weight > best_weight {
                    best_weight = weight;
                    best_sum = sum;
                }
            }
            best_sum as f64
        })
        .collect();
    let (mean, stderr) = crate::eval::mean_stderr(&values);
    let sum_p: f64 = ps.iter().sum();
    let radius = (k as f64 * (k as f64).ln() / 2.0).sqrt();
    let (lower, upper) = (sum_p - radius, sum_p + radius);
    Ok(BoundReport {
        k,
        n,
        trials,
        mean,
        stderr,
        sum_p,
        radius,
        lower,
        upper,
        within: mean + 3.0 * stderr >= lower && mean - 3.0 * stderr <= upper,
    })
}
