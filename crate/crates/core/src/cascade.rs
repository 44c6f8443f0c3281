//! Multiplicative cascades on the coding tree of a similarity system.
//!
//! A weight model assigns each tree node an i.i.d. random vector
//! W = (W_0, .., W_{m-1}) with nonnegative entries and sum of means one.
//! The cascade mass of a word is the product of the weight entries along its
//! path; the level-n masses form a mean-one martingale, and the induced atom
//! measures converge to a random multiplicative cascade measure on the
//! attractor. Weight draws are keyed by (seed, word), so a realization is a
//! pure function usable from any thread and consistent across levels.

use crate::error::{Error, Result};
use crate::ifs::{IfsSpec, Similarity, Word};
use crate::measure::DiscreteMeasure;
use crate::rng;
use rand::Rng;

/// Tolerance on the mean-one constraint sum_i E(W_i) = 1.
pub const MEAN_ONE_TOL: f64 = 1e-12;
/// Moment orders scanned for the finiteness condition sum_i E(W_i^p) < 1.
pub const MOMENT_GRID: [f64; 4] = [1.01, 1.1, 1.5, 2.0];
/// Cap on explicitly enumerated subset-law outcomes.
pub const MAX_EXPLICIT_OUTCOMES: usize = 1 << 16;

/// Law of the random kept-symbol subset in fractal percolation.
#[derive(Debug, Clone)]
pub enum SubsetLaw {
    /// Symbol i kept independently with probability p_i.
    IndependentKeep(Vec<f64>),
    /// Explicit outcomes (kept symbols, probability).
    Explicit(Vec<(Vec<u8>, f64)>),
}

impl SubsetLaw {
    /// Uniform independent retention with probability p on m symbols.
    pub fn uniform_keep(m: usize, p: f64) -> Self {
        SubsetLaw::IndependentKeep(vec![p; m])
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            SubsetLaw::IndependentKeep(probs) => {
                if probs.len() != m {
                    return Err(Error::InvalidModel(format!(
                        "keep probabilities have length {}, alphabet has {m} symbols",
                        probs.len()
                    )));
                }
                for (i, &p) in probs.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                        return Err(Error::InvalidModel(format!(
                            "keep probability {p} for symbol {i} is outside [0, 1]"
                        )));
                    }
                }
            }
            SubsetLaw::Explicit(outcomes) => {
                if outcomes.is_empty() {
                    return Err(Error::InvalidModel(
                        "explicit subset law has no outcomes".into(),
                    ));
                }
                if outcomes.len() > MAX_EXPLICIT_OUTCOMES {
                    return Err(Error::InvalidModel(format!(
                        "explicit subset law has {} outcomes, cap is {MAX_EXPLICIT_OUTCOMES}",
                        outcomes.len()
                    )));
                }
                let mut total = 0.0;
                for (subset, p) in outcomes {
                    if !(0.0..=1.0).contains(p) {
                        return Err(Error::InvalidModel(format!(
                            "outcome probability {p} is outside [0, 1]"
                        )));
                    }
                    total += p;
                    let mut seen = vec![false; m];
                    for &s in subset {
                        if s as usize >= m {
                            return Err(Error::InvalidModel(format!(
                                "subset symbol {s} outside alphabet of {m}"
                            )));
                        }
                        if seen[s as usize] {
                            return Err(Error::InvalidModel(format!("subset repeats symbol {s}")));
                        }
                        seen[s as usize] = true;
                    }
                }
                if (total - 1.0).abs() > MEAN_ONE_TOL {
                    return Err(Error::InvalidModel(format!(
                        "subset outcome probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Marginal inclusion probabilities P(i in S).
    pub fn inclusion_probabilities(&self, m: usize) -> Vec<f64> {
        match self {
            SubsetLaw::IndependentKeep(probs) => probs.clone(),
            SubsetLaw::Explicit(outcomes) => {
                let mut q = vec![0.0; m];
                for (subset, p) in outcomes {
                    for &s in subset {
                        q[s as usize] += p;
                    }
                }
                q
            }
        }
    }

    /// Expected number of kept symbols.
    pub fn mean_card(&self, m: usize) -> f64 {
        self.inclusion_probabilities(m).iter().sum()
    }

    /// P(at least two symbols kept).
    pub fn prob_card_at_least_two(&self, m: usize) -> f64 {
        match self {
            SubsetLaw::IndependentKeep(probs) => {
                let none: f64 = probs.iter().map(|p| 1.0 - p).product();
                let mut exactly_one = 0.0;
                for i in 0..m {
                    let mut term = probs[i];
                    for (j, &p) in probs.iter().enumerate() {
                        if j != i {
                            term *= 1.0 - p;
                        }
                    }
                    exactly_one += term;
                }
                (1.0 - none - exactly_one).max(0.0)
            }
            SubsetLaw::Explicit(outcomes) => outcomes
                .iter()
                .filter(|(subset, _)| subset.len() >= 2)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Probability generating function E(s^card) of the offspring count.
    pub fn offspring_pgf(&self, m: usize, s: f64) -> f64 {
        match self {
            SubsetLaw::IndependentKeep(probs) => {
                let _ = m;
                probs.iter().map(|p| 1.0 - p + p * s).product()
            }
            SubsetLaw::Explicit(outcomes) => outcomes
                .iter()
                .map(|(subset, p)| p * s.powi(subset.len() as i32))
                .sum(),
        }
    }

    /// Smallest fixed point of the offspring pgf in [0, 1]: the extinction
    /// probability of the survivor tree.
    pub fn extinction_probability(&self, m: usize) -> f64 {
        let mut s = 0.0;
        for _ in 0..100_000 {
            let next = self.offspring_pgf(m, s);
            if (next - s).abs() < 1e-15 {
                return next;
            }
            s = next;
        }
        s
    }

    /// Survival probability 1 - extinction probability.
    pub fn survival_probability(&self, m: usize) -> f64 {
        1.0 - self.extinction_probability(m)
    }

    /// Draw a kept-symbol mask.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> Vec<bool> {
        match self {
            SubsetLaw::IndependentKeep(probs) => {
                probs.iter().map(|&p| rng.random::<f64>() < p).collect()
            }
            SubsetLaw::Explicit(outcomes) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut mask = vec![false; m];
                for (subset, p) in outcomes {
                    acc += p;
                    if u < acc {
                        for &s in subset {
                            mask[s as usize] = true;
                        }
                        return mask;
                    }
                }
                // Roundoff spill: attribute to the last outcome.
                if let Some((subset, _)) = outcomes.last() {
                    for &s in subset {
                        mask[s as usize] = true;
                    }
                }
                mask
            }
        }
    }
}

/// Weight model of a multiplicative cascade.
#[derive(Debug, Clone)]
pub enum WeightModel {
    /// The same vector at every node (e.g. natural Bernoulli weights r_i^s).
    Deterministic(Vec<f64>),
    /// Fractal percolation: W_i = r_i^alpha on kept symbols, 0 otherwise.
    Percolation {
        law: SubsetLaw,
        ratios: Vec<f64>,
        alpha: f64,
    },
    /// Finite list of (probability, weight vector) outcomes.
    GeneralDiscrete(Vec<(f64, Vec<f64>)>),
}

impl WeightModel {
    /// Number of weight entries (the alphabet size it acts on).
    pub fn arity(&self) -> usize {
        match self {
            WeightModel::Deterministic(w) => w.len(),
            WeightModel::Percolation { ratios, .. } => ratios.len(),
            WeightModel::GeneralDiscrete(outcomes) => {
                outcomes.first().map(|(_, w)| w.len()).unwrap_or(0)
            }
        }
    }

    /// Structural validation: shapes, signs, probability normalization.
    pub fn check_structure(&self) -> Result<()> {
        match self {
            WeightModel::Deterministic(w) => {
                if w.len() < 2 {
                    return Err(Error::InvalidModel(
                        "weight vector needs at least 2 entries".into(),
                    ));
                }
                for (i, &x) in w.iter().enumerate() {
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::InvalidModel(format!("weight {i} is {x}")));
                    }
                }
            }
            WeightModel::Percolation { law, ratios, alpha } => {
                if ratios.len() < 2 {
                    return Err(Error::InvalidModel("need at least 2 ratios".into()));
                }
                for (i, &r) in ratios.iter().enumerate() {
                    if !(r > 0.0 && r < 1.0) {
                        return Err(Error::InvalidModel(format!(
                            "ratio {i} is {r}, not in (0,1)"
                        )));
                    }
                }
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return Err(Error::InvalidModel(format!("exponent {alpha} invalid")));
                }
                law.validate(ratios.len())?;
            }
            WeightModel::GeneralDiscrete(outcomes) => {
                if outcomes.is_empty() {
                    return Err(Error::InvalidModel("no outcomes".into()));
                }
                let arity = outcomes[0].1.len();
                if arity < 2 {
                    return Err(Error::InvalidModel(
                        "weight vectors need at least 2 entries".into(),
                    ));
                }
                let mut total = 0.0;
                for (p, w) in outcomes {
                    if !(0.0..=1.0).contains(p) {
                        return Err(Error::InvalidModel(format!("outcome probability {p}")));
                    }
                    total += p;
                    if w.len() != arity {
                        return Err(Error::InvalidModel("ragged outcome weight vectors".into()));
                    }
                    for &x in w {
                        if !(x.is_finite() && x >= 0.0) {
                            return Err(Error::InvalidModel(format!("weight entry {x}")));
                        }
                    }
                }
                if (total - 1.0).abs() > MEAN_ONE_TOL {
                    return Err(Error::InvalidModel(format!(
                        "outcome probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// E(W_i) per symbol.
    pub fn mean_weights(&self) -> Vec<f64> {
        match self {
            WeightModel::Deterministic(w) => w.clone(),
            WeightModel::Percolation { law, ratios, alpha } => law
                .inclusion_probabilities(ratios.len())
                .iter()
                .zip(ratios)
                .map(|(q, r)| q * r.powf(*alpha))
                .collect(),
            WeightModel::GeneralDiscrete(outcomes) => {
                let arity = self.arity();
                let mut mean = vec![0.0; arity];
                for (p, w) in outcomes {
                    for (m, x) in mean.iter_mut().zip(w) {
                        *m += p * x;
                    }
                }
                mean
            }
        }
    }

    /// sum_i E(W_i^p), exact per model.
    pub fn moment_sum(&self, p: f64) -> f64 {
        match self {
            WeightModel::Deterministic(w) => w.iter().map(|x| x.powf(p)).sum(),
            WeightModel::Percolation { law, ratios, alpha } => law
                .inclusion_probabilities(ratios.len())
                .iter()
                .zip(ratios)
                .map(|(q, r)| q * r.powf(alpha * p))
                .sum(),
            WeightModel::GeneralDiscrete(outcomes) => outcomes
                .iter()
                .map(|(pr, w)| pr * w.iter().map(|x| x.powf(p)).sum::<f64>())
                .sum(),
        }
    }

    /// sum_i E(W_i log W_i), with 0 log 0 = 0.
    pub fn entropy_term(&self) -> f64 {
        fn xlogx(x: f64) -> f64 {
            if x > 0.0 {
                x * x.ln()
            } else {
                0.0
            }
        }
        match self {
            WeightModel::Deterministic(w) => w.iter().map(|&x| xlogx(x)).sum(),
            WeightModel::Percolation { law, ratios, alpha } => law
                .inclusion_probabilities(ratios.len())
                .iter()
                .zip(ratios)
                .map(|(q, r)| q * xlogx(r.powf(*alpha)))
                .sum(),
            WeightModel::GeneralDiscrete(outcomes) => outcomes
                .iter()
                .map(|(p, w)| p * w.iter().map(|&x| xlogx(x)).sum::<f64>())
                .sum(),
        }
    }

    /// P(more than one weight entry is positive): the branching condition.
    pub fn prob_multiple_positive(&self) -> f64 {
        match self {
            WeightModel::Deterministic(w) => {
                if w.iter().filter(|&&x| x > 0.0).count() >= 2 {
                    1.0
                } else {
                    0.0
                }
            }
            // Ratios are positive, so positivity of W_i is membership of i.
            WeightModel::Percolation { law, ratios, .. } => {
                law.prob_card_at_least_two(ratios.len())
            }
            WeightModel::GeneralDiscrete(outcomes) => outcomes
                .iter()
                .filter(|(_, w)| w.iter().filter(|&&x| x > 0.0).count() >= 2)
                .map(|(p, _)| p)
                .sum(),
        }
    }

    /// Draw one weight vector from an already-positioned stream.
    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            WeightModel::Deterministic(w) => w.clone(),
            WeightModel::Percolation { law, ratios, alpha } => {
                let mask = law.sample(ratios.len(), rng);
                ratios
                    .iter()
                    .zip(mask)
                    .map(|(r, kept)| if kept { r.powf(*alpha) } else { 0.0 })
                    .collect()
            }
            WeightModel::GeneralDiscrete(outcomes) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, w) in outcomes {
                    acc += p;
                    if u < acc {
                        return w.clone();
                    }
                }
                outcomes.last().expect("validated nonempty").1.clone()
            }
        }
    }
}

/// Validation report: mean-one constraint, branching condition, and the
/// moment scan over `MOMENT_GRID`.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// sum_i E(W_i); must be 1 within `MEAN_ONE_TOL`.
    pub mean_total: f64,
    /// P(more than one positive entry); must be positive.
    pub branching_probability: f64,
    /// (p, sum_i E(W_i^p)) over the scan grid; some entry must be < 1.
    pub moment_witnesses: Vec<(f64, f64)>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Check the standing assumptions on a weight model.
pub fn validate_weight_model(model: &WeightModel) -> Result<ValidationReport> {
    model.check_structure()?;
    let mean_total: f64 = model.mean_weights().iter().sum();
    let branching_probability = model.prob_multiple_positive();
    let moment_witnesses: Vec<(f64, f64)> = MOMENT_GRID
        .iter()
        .map(|&p| (p, model.moment_sum(p)))
        .collect();
    let mut failures = Vec::new();
    if (mean_total - 1.0).abs() > MEAN_ONE_TOL {
        failures.push(format!(
            "mean weights sum to {mean_total}, expected 1 within {MEAN_ONE_TOL:.0e}"
        ));
    }
    if branching_probability <= 0.0 {
        failures.push("at most one weight entry can be positive; the cascade cannot branch".into());
    }
    if !moment_witnesses.iter().any(|&(_, s)| s < 1.0) {
        failures.push(format!(
            "no moment order p in {MOMENT_GRID:?} has sum_i E(W_i^p) < 1"
        ));
    }
    let passed = failures.is_empty();
    Ok(ValidationReport {
        mean_total,
        branching_probability,
        moment_witnesses,
        failures,
        passed,
    })
}

/// How leaf masses account for the unsimulated tail of the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPolicy {
    /// Replace the tail martingale limit by its expectation 1.
    Expectation,
    /// Simulate the tail for the given number of extra levels.
    Simulated(u32),
}

/// One realization of a cascade: a weight model plus the master seed keying
/// every per-word draw.
#[derive(Debug, Clone)]
pub struct CascadeRealization {
    model: WeightModel,
    seed: u64,
}

impl CascadeRealization {
    pub fn new(model: WeightModel, seed: u64) -> Result<Self> {
        model.check_structure()?;
        Ok(CascadeRealization { model, seed })
    }

    pub fn model(&self) -> &WeightModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The weight vector drawn at word w; a pure function of (seed, w).
    pub fn weights_at(&self, w: &Word) -> Vec<f64> {
        let mut rng = rng::word_stream(self.seed, w.symbols());
        self.model.sample_with(&mut rng)
    }

    /// Cascade mass Q(w): the product of weight entries along the path to w.
    pub fn q_value(&self, w: &Word) -> f64 {
        let mut q = 1.0;
        let mut prefix = Word::empty();
        for &s in w.symbols() {
            let weights = self.weights_at(&prefix);
            q *= weights[s as usize];
            if q == 0.0 {
                return 0.0;
            }
            prefix.push(s);
        }
        q
    }

    /// Level-n martingale mass Y_n = sum over words of length n of Q(w).
    /// Enumerates the tree with zero-mass pruning.
    pub fn martingale_mass(&self, n: usize, cap: usize) -> Result<f64> {
        Ok(*self.levelwise_mass(n, cap)?.last().expect("n+1 entries"))
    }

    /// Y_0, Y_1, .., Y_n in a single sweep.
    pub fn levelwise_mass(&self, n: usize, cap: usize) -> Result<Vec<f64>> {
        let m = self.model.arity() as u128;
        let needed = m.checked_pow(n as u32).unwrap_or(u128::MAX);
        if needed > cap as u128 {
            return Err(Error::CapExceeded { needed, cap });
        }
        let mut sums = vec![0.0; n + 1];
        sums[0] = 1.0;
        if n > 0 {
            let mut word = Word::empty();
            self.mass_rec(&mut word, 1.0, n, &mut sums);
        }
        Ok(sums)
    }

    fn mass_rec(&self, word: &mut Word, q: f64, n: usize, sums: &mut Vec<f64>) {
        let weights = self.weights_at(word);
        let depth = word.len() + 1;
        for (s, &w) in weights.iter().enumerate() {
            let mass = q * w;
            if mass == 0.0 {
                continue;
            }
            sums[depth] += mass;
            if depth < n {
                word.push(s as u8);
                self.mass_rec(word, mass, n, sums);
                word.pop();
            }
        }
    }

    /// Martingale mass of the subtree rooted at `base`, `levels` below it.
    pub fn subtree_mass(&self, base: &Word, levels: u32) -> f64 {
        if levels == 0 {
            return 1.0;
        }
        let mut word = base.clone();
        self.subtree_rec(&mut word, 1.0, levels)
    }

    fn subtree_rec(&self, word: &mut Word, q: f64, remaining: u32) -> f64 {
        let weights = self.weights_at(word);
        if remaining == 1 {
            return weights.iter().map(|w| q * w).sum();
        }
        let mut acc = 0.0;
        for (s, &w) in weights.iter().enumerate() {
            let mass = q * w;
            if mass == 0.0 {
                continue;
            }
            word.push(s as u8);
            acc += self.subtree_rec(word, mass, remaining - 1);
            word.pop();
        }
        acc
    }
}

/// The level-n cascade measure: one atom per positive-mass word of length n,
/// placed at its cylinder point, with first symbols retained as labels.
///
/// Under `TailPolicy::Expectation` the total mass reproduces
/// `martingale_mass(n)` bitwise (identical traversal order); under
/// `TailPolicy::Simulated(k)` leaf masses are scaled by their simulated
/// k-level subtree mass.
pub fn cascade_measure(
    real: &CascadeRealization,
    ifs: &IfsSpec,
    n: usize,
    tail: TailPolicy,
    cap: usize,
) -> Result<DiscreteMeasure> {
    if real.model.arity() != ifs.alphabet_size() {
        return Err(Error::InvalidModel(format!(
            "weight model has arity {}, system has {} maps",
            real.model.arity(),
            ifs.alphabet_size()
        )));
    }
    let m = ifs.alphabet_size() as u128;
    let needed = m.checked_pow(n as u32).unwrap_or(u128::MAX);
    if needed > cap as u128 {
        return Err(Error::CapExceeded { needed, cap });
    }
    let anchor = ifs.default_anchor();
    let mut builder = CloudBuilder {
        real,
        ifs,
        tail,
        anchor,
        n,
        words: Vec::new(),
        points: Vec::new(),
        masses: Vec::new(),
        labels: Vec::new(),
    };
    if n == 0 {
        let mass = match tail {
            TailPolicy::Expectation => 1.0,
            TailPolicy::Simulated(k) => real.subtree_mass(&Word::empty(), k),
        };
        builder.points.extend_from_slice(&builder.anchor.clone());
        builder.masses.push(mass);
        builder.labels.push(0);
        builder.words.push(Word::empty());
    } else {
        let mut word = Word::empty();
        builder.walk(&Similarity::identity(ifs.dim()), &mut word, 1.0);
    }
    if builder.masses.iter().all(|&m| m == 0.0) || builder.masses.is_empty() {
        return Err(Error::Extinct { rejections: 0 });
    }
    let CloudBuilder {
        points,
        masses,
        labels,
        words,
        ..
    } = builder;
    let measure = DiscreteMeasure::new(ifs.dim(), points, masses, Some(labels))?;
    Ok(measure.with_words(words))
}

struct CloudBuilder<'a> {
    real: &'a CascadeRealization,
    ifs: &'a IfsSpec,
    tail: TailPolicy,
    anchor: Vec<f64>,
    n: usize,
    words: Vec<Word>,
    points: Vec<f64>,
    masses: Vec<f64>,
    labels: Vec<u8>,
}

impl CloudBuilder<'_> {
    fn walk(&mut self, sim: &Similarity, word: &mut Word, q: f64) {
        let weights = self.real.weights_at(word);
        for (s, &w) in weights.iter().enumerate() {
            let mass = q * w;
            if mass == 0.0 {
                continue;
            }
            let next = sim.compose(self.ifs.map(s));
            word.push(s as u8);
            if word.len() == self.n {
                let leaf_mass = match self.tail {
                    TailPolicy::Expectation => mass,
                    TailPolicy::Simulated(k) => mass * self.real.subtree_mass(word, k),
                };
                if leaf_mass > 0.0 {
                    let point = next.apply(&self.anchor);
                    self.points.extend_from_slice(&point);
                    self.masses.push(leaf_mass);
                    self.labels.push(word.symbols()[0]);
                    self.words.push(word.clone());
                }
            } else {
                self.walk(&next, word, mass);
            }
            word.pop();
        }
    }
}

/// Bisection to floating-point exhaustion for a strictly decreasing function
/// with f(lo) > 0 > f(hi).
fn bisect_decreasing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return mid;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.len() < 2 {
        return Err(Error::ConfigInvalid {
            field: "ratios".into(),
            reason: format!("need at least 2 ratios, got {}", ratios.len()),
        });
    }
    for (i, &r) in ratios.iter().enumerate() {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::ConfigInvalid {
                field: format!("ratios[{i}]"),
                reason: format!("{r} is not in (0, 1)"),
            });
        }
    }
    Ok(())
}

/// The similarity dimension: the unique s with sum_i r_i^s = 1, found by
/// bisection to floating-point exhaustion.
pub fn similarity_dimension(ratios: &[f64]) -> Result<f64> {
    check_ratios(ratios)?;
    let g = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 {
            return Err(Error::NoRoot("similarity dimension bracket failed".into()));
        }
    }
    Ok(bisect_decreasing(0.0, hi, g))
}

/// Natural deterministic weights W_i = r_i^s at the similarity dimension.
pub fn bernoulli_weights(ifs: &IfsSpec) -> Result<WeightModel> {
    let ratios = ifs.ratios();
    let s = similarity_dimension(&ratios)?;
    Ok(WeightModel::Deterministic(
        ratios.iter().map(|r| r.powf(s)).collect(),
    ))
}

/// The percolation exponent: the root of E(sum_{i in S} r_i^a) = 1.
/// Requires a supercritical law (mean kept count > 1).
pub fn percolation_exponent(law: &SubsetLaw, ratios: &[f64]) -> Result<f64> {
    check_ratios(ratios)?;
    law.validate(ratios.len())?;
    let q = law.inclusion_probabilities(ratios.len());
    let mean = q.iter().sum::<f64>();
    if mean <= 1.0 {
        return Err(Error::Subcritical { mean });
    }
    let g = |a: f64| {
        q.iter()
            .zip(ratios)
            .map(|(qi, r)| qi * r.powf(a))
            .sum::<f64>()
            - 1.0
    };
    if g(0.0) <= 0.0 {
        return Err(Error::NoRoot(
            "mean kept count above one but no positive value at a = 0".into(),
        ));
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 {
            return Err(Error::NoRoot("percolation exponent bracket failed".into()));
        }
    }
    Ok(bisect_decreasing(0.0, hi, g))
}

/// The natural percolation weight model W_i = r_i^alpha [i in S].
pub fn percolation_weights(law: SubsetLaw, ratios: Vec<f64>, alpha: f64) -> Result<WeightModel> {
    let model = WeightModel::Percolation { law, ratios, alpha };
    model.check_structure()?;
    Ok(model)
}

/// Convenience: solve for the exponent and build the natural model, whose
/// mean weights then sum to one by construction.
pub fn natural_percolation_model(law: SubsetLaw, ratios: Vec<f64>) -> Result<WeightModel> {
    let alpha = percolation_exponent(&law, &ratios)?;
    percolation_weights(law, ratios, alpha)
}

/// The two expectations entering every dimension formula here:
/// (sum_i E(W_i log W_i), sum_i E(W_i) log r_i).
pub fn expectation_terms(model: &WeightModel, ratios: &[f64]) -> Result<(f64, f64)> {
    check_ratios(ratios)?;
    if ratios.len() != model.arity() {
        return Err(Error::DimensionMismatch(format!(
            "model arity {} vs {} ratios",
            model.arity(),
            ratios.len()
        )));
    }
    let weight_entropy = model.entropy_term();
    let mean_log_ratio = model
        .mean_weights()
        .iter()
        .zip(ratios)
        .map(|(w, r)| w * r.ln())
        .sum();
    Ok((weight_entropy, mean_log_ratio))
}

/// A dimension value from the entropy formula, clamped into [0, ambient].
#[derive(Debug, Clone, Copy)]
pub struct AlphaReport {
    pub value: f64,
    /// The unclamped ratio.
    pub raw: f64,
    pub clamped: bool,
}

/// Dimension formula (conditional entropy + sum E(W log W)) / (sum E(W) log r).
pub fn theoretical_alpha(
    model: &WeightModel,
    ratios: &[f64],
    conditional_entropy: f64,
    ambient_dim: usize,
) -> Result<AlphaReport> {
    let (weight_entropy, mean_log_ratio) = expectation_terms(model, ratios)?;
    if mean_log_ratio.abs() < 1e-12 {
        return Err(Error::DegenerateDenominator {
            value: mean_log_ratio,
        });
    }
    let raw = (conditional_entropy + weight_entropy) / mean_log_ratio;
    let value = raw.clamp(0.0, ambient_dim as f64);
    Ok(AlphaReport {
        value,
        raw,
        clamped: value != raw,
    })
}

/// Survivor words of a percolation realization, level by level.
#[derive(Debug, Clone)]
pub struct PercolationSample {
    /// levels[k] holds the surviving words of length k; levels[0] = [empty].
    pub levels: Vec<Vec<Word>>,
    /// True when some level up to n is empty.
    pub extinct: bool,
}

impl PercolationSample {
    pub fn survivors(&self, level: usize) -> &[Word] {
        &self.levels[level]
    }
}

/// Sample the survivor tree of `law` on the coding space of `ifs` down to
/// level n. Draws are keyed exactly like percolation weight draws, so the
/// survivors at level k are the positive-mass words of a
/// `WeightModel::Percolation` realization with the same seed.
pub fn sample_percolation_set(
    law: &SubsetLaw,
    ifs: &IfsSpec,
    n: usize,
    seed: u64,
    cap: usize,
) -> Result<PercolationSample> {
    let m = ifs.alphabet_size();
    law.validate(m)?;
    let mut levels: Vec<Vec<Word>> = Vec::with_capacity(n + 1);
    levels.push(vec![Word::empty()]);
    for _ in 0..n {
        let current = levels.last().expect("nonempty");
        let mut next = Vec::new();
        for w in current {
            let mut rng = rng::word_stream(seed, w.symbols());
            let mask = law.sample(m, &mut rng);
            for (s, kept) in mask.into_iter().enumerate() {
                if kept {
                    next.push(w.child(s as u8));
                }
            }
            if next.len() > cap {
                return Err(Error::CapExceeded {
                    needed: next.len() as u128,
                    cap,
                });
            }
        }
        levels.push(next);
        if levels.last().expect("just pushed").is_empty() {
            break;
        }
    }
    let extinct = levels.last().expect("nonempty").is_empty();
    while levels.len() < n + 1 {
        levels.push(Vec::new());
    }
    Ok(PercolationSample { levels, extinct })
}

/// Cheap survival probe: walk the survivor tree, declaring survival once a
/// level holds `threshold` words (extinction from there on has negligible
/// probability) and extinction when a level empties.
pub fn percolation_survives(
    law: &SubsetLaw,
    m: usize,
    seed: u64,
    threshold: usize,
    max_level: usize,
) -> bool {
    let mut current = vec![Word::empty()];
    for _ in 0..max_level {
        let mut next = Vec::new();
        for w in &current {
            let mut rng = rng::word_stream(seed, w.symbols());
            let mask = law.sample(m, &mut rng);
            for (s, kept) in mask.into_iter().enumerate() {
                if kept {
                    next.push(w.child(s as u8));
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        if next.len() >= threshold {
            return true;
        }
        current = next;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::Similarity;
    use approx::assert_relative_eq;

    fn cantor() -> IfsSpec {
        IfsSpec::new(vec![
            Similarity::homothety(1.0 / 3.0, vec![0.0]).unwrap(),
            Similarity::homothety(1.0 / 3.0, vec![2.0 / 3.0]).unwrap(),
        ])
        .unwrap()
    }

    fn grid4() -> IfsSpec {
        IfsSpec::new(vec![
            Similarity::homothety(0.5, vec![0.0, 0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.5, 0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.0, 0.5]).unwrap(),
            Similarity::homothety(0.5, vec![0.5, 0.5]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn similarity_dimension_closed_forms() {
        let s = similarity_dimension(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_relative_eq!(s, 2.0f64.ln() / 3.0f64.ln(), epsilon = 1e-12);

        // 2^-s + 4^-s = 1 has the golden ratio solution s = log2((1+sqrt 5)/2).
        let s = similarity_dimension(&[0.5, 0.25]).unwrap();
        let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert_relative_eq!(s, golden.ln() / 2.0f64.ln(), epsilon = 1e-12);

        let s = similarity_dimension(&[0.5; 4]).unwrap();
        assert_relative_eq!(s, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bernoulli_weights_have_exact_mean_one() {
        for ifs in [cantor(), grid4()] {
            let model = bernoulli_weights(&ifs).unwrap();
            let report = validate_weight_model(&model).unwrap();
            assert!(report.passed, "failures: {:?}", report.failures);
            assert!((report.mean_total - 1.0).abs() <= MEAN_ONE_TOL);
            assert!(report.moment_witnesses.iter().any(|&(_, s)| s < 1.0));
        }
    }

    #[test]
    fn percolation_exponent_grid_closed_form() {
        // 4 maps of ratio 1/2 kept with probability 0.7:
        // 4 * 0.7 * 2^-a = 1  =>  a = 2 + log2(0.7).
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let a = percolation_exponent(&law, &[0.5; 4]).unwrap();
        assert_relative_eq!(a, 2.0 + 0.7f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn critical_retention_is_subcritical() {
        let law = SubsetLaw::uniform_keep(4, 0.25);
        match percolation_exponent(&law, &[0.5; 4]) {
            Err(Error::Subcritical { mean }) => assert_relative_eq!(mean, 1.0, epsilon = 1e-12),
            other => panic!("expected subcritical, got {other:?}"),
        }
    }

    #[test]
    fn explicit_law_matches_independent_law() {
        // Enumerating the product law over subsets of a 2-symbol alphabet
        // must reproduce the independent-keep exponent.
        let p = 0.8;
        let independent = SubsetLaw::IndependentKeep(vec![p, p]);
        let explicit = SubsetLaw::Explicit(vec![
            (vec![], (1.0 - p) * (1.0 - p)),
            (vec![0], p * (1.0 - p)),
            (vec![1], (1.0 - p) * p),
            (vec![0, 1], p * p),
        ]);
        let ratios = [0.4, 0.45];
        let a1 = percolation_exponent(&independent, &ratios).unwrap();
        let a2 = percolation_exponent(&explicit, &ratios).unwrap();
        assert_relative_eq!(a1, a2, epsilon = 1e-12);
        assert_relative_eq!(
            independent.prob_card_at_least_two(2),
            explicit.prob_card_at_least_two(2),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            independent.extinction_probability(2),
            explicit.extinction_probability(2),
            epsilon = 1e-10
        );
    }

    #[test]
    fn percolation_model_validates_with_exact_mean_one() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        let report = validate_weight_model(&model).unwrap();
        assert!(report.passed, "failures: {:?}", report.failures);
        assert!((report.mean_total - 1.0).abs() <= MEAN_ONE_TOL);
    }

    #[test]
    fn validation_flags_broken_models() {
        // Mean sum off by more than the tolerance.
        let report = validate_weight_model(&WeightModel::Deterministic(vec![0.6, 0.6])).unwrap();
        assert!(!report.passed);
        assert!(report.failures[0].contains("mean"));

        // Only one positive entry: branching impossible.
        let report = validate_weight_model(&WeightModel::Deterministic(vec![1.0, 0.0])).unwrap();
        assert!(!report.passed);
        assert!(report.failures.iter().any(|f| f.contains("branch")));

        // Structurally broken inputs are hard errors.
        assert!(matches!(
            validate_weight_model(&WeightModel::Deterministic(vec![-0.5, 1.5])),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(
            validate_weight_model(&WeightModel::GeneralDiscrete(vec![
                (0.7, vec![0.5, 0.5]),
                (0.7, vec![0.5, 0.5]),
            ])),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn weight_draws_are_keyed_by_seed_and_word() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        let real = CascadeRealization::new(model.clone(), 11).unwrap();
        let w = Word::from_symbols(vec![0, 2, 1]);
        assert_eq!(real.weights_at(&w), real.weights_at(&w));
        let other_seed = CascadeRealization::new(model, 12).unwrap();
        // Different seeds almost surely draw different subsets somewhere.
        let differs = (0..16).any(|k| {
            let word = Word::from_symbols(vec![k as u8 % 4, (k / 4) as u8]);
            real.weights_at(&word) != other_seed.weights_at(&word)
        });
        assert!(differs);
    }

    #[test]
    fn q_values_factor_through_children() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        let real = CascadeRealization::new(model, 3).unwrap();
        for symbols in [vec![0u8], vec![1, 2], vec![3, 3, 0]] {
            let w = Word::from_symbols(symbols);
            let q = real.q_value(&w);
            let weights = real.weights_at(&w);
            for s in 0..4u8 {
                let child_q = real.q_value(&w.child(s));
                assert_eq!(child_q, q * weights[s as usize]);
            }
        }
    }

    #[test]
    fn deterministic_martingale_is_exactly_one() {
        let real = CascadeRealization::new(WeightModel::Deterministic(vec![0.5, 0.5]), 0).unwrap();
        for n in [1usize, 5, 10] {
            let y = real.martingale_mass(n, 1 << 20).unwrap();
            assert_relative_eq!(y, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn percolation_martingale_mean_is_near_one() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        let mut sum = 0.0;
        let trials = 200;
        for seed in 0..trials {
            let real = CascadeRealization::new(model.clone(), seed).unwrap();
            sum += real.martingale_mass(6, 1 << 20).unwrap();
        }
        let mean = sum / trials as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean Y_6 = {mean}");
    }

    #[test]
    fn cascade_measure_matches_martingale_mass_bitwise() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        for seed in [0u64, 1, 5] {
            let real = CascadeRealization::new(model.clone(), seed).unwrap();
            let y = real.martingale_mass(6, 1 << 22).unwrap();
            match cascade_measure(&real, &grid4(), 6, TailPolicy::Expectation, 1 << 22) {
                Ok(measure) => assert_eq!(measure.total_mass().to_bits(), y.to_bits()),
                Err(Error::Extinct { .. }) => assert_eq!(y, 0.0),
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn simulated_tail_matches_deeper_enumeration() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        let real = CascadeRealization::new(model, 9).unwrap();
        let measure =
            cascade_measure(&real, &grid4(), 4, TailPolicy::Simulated(3), 1 << 22).unwrap();
        let y7 = real.martingale_mass(7, 1 << 22).unwrap();
        assert_relative_eq!(measure.total_mass(), y7, max_relative = 1e-12);
    }

    #[test]
    fn bernoulli_cantor_measure_is_uniform_on_cylinder_points() {
        let ifs = cantor();
        let model = bernoulli_weights(&ifs).unwrap();
        let real = CascadeRealization::new(model, 0).unwrap();
        let measure = cascade_measure(&real, &ifs, 3, TailPolicy::Expectation, 1 << 20).unwrap();
        assert_eq!(measure.atom_count(), 8);
        for i in 0..measure.atom_count() {
            assert_relative_eq!(measure.mass(i), 0.125, epsilon = 1e-12);
        }
        assert_relative_eq!(measure.total_mass(), 1.0, epsilon = 1e-12);
        // First symbols split the line at 1/3.
        for i in 0..measure.atom_count() {
            let x = measure.point(i)[0];
            let label = measure.labels().unwrap()[i];
            assert_eq!(label == 0, x < 1.0 / 3.0, "x = {x}, label = {label}");
        }
    }

    #[test]
    fn survivor_sample_agrees_with_positive_mass_words() {
        let law = SubsetLaw::uniform_keep(4, 0.6);
        let ifs = grid4();
        let seed = 21;
        let sample = sample_percolation_set(&law, &ifs, 5, seed, 1 << 20).unwrap();
        let model = natural_percolation_model(law, vec![0.5; 4]).unwrap();
        let real = CascadeRealization::new(model, seed).unwrap();
        for level in 0..=5 {
            for w in sample.survivors(level) {
                assert!(real.q_value(w) > 0.0, "survivor {w} has zero mass");
            }
            // Count check: positive-mass words at this level.
            let mut count = 0usize;
            let mut stack = vec![Word::empty()];
            for _ in 0..level {
                let mut next = Vec::new();
                for w in &stack {
                    let weights = real.weights_at(w);
                    for (s, &wt) in weights.iter().enumerate() {
                        if wt > 0.0 {
                            next.push(w.child(s as u8));
                        }
                    }
                }
                stack = next;
            }
            count += stack.len();
            assert_eq!(count, sample.survivors(level).len(), "level {level}");
        }
    }

    #[test]
    fn subcritical_percolation_goes_extinct() {
        let law = SubsetLaw::uniform_keep(2, 0.2);
        let survived = (0..200)
            .filter(|&seed| percolation_survives(&law, 2, seed, 64, 40))
            .count();
        // Mean offspring 0.4: extinction is certain; a few seeds may still
        // reach moderate depth but none should hit the survival threshold.
        assert_eq!(survived, 0);
    }

    #[test]
    fn survival_frequency_tracks_pgf_fixed_point() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        // Oracle: iterate the pgf (0.3 + 0.7 s)^4 from 0.
        let mut s = 0.0f64;
        for _ in 0..10_000 {
            s = (0.3 + 0.7 * s).powi(4);
        }
        let survival = 1.0 - s;
        assert_relative_eq!(law.survival_probability(4), survival, epsilon = 1e-9);
        let trials = 2000u64;
        let hits = (0..trials)
            .filter(|&seed| percolation_survives(&law, 4, rng::sub_seed(77, "surv", seed), 256, 64))
            .count();
        let freq = hits as f64 / trials as f64;
        assert!(
            (freq - survival).abs() < 0.03,
            "frequency {freq} vs survival {survival}"
        );
    }

    #[test]
    fn expectation_terms_closed_forms() {
        // Deterministic halves on the Cantor system.
        let model = WeightModel::Deterministic(vec![0.5, 0.5]);
        let (ent, mlr) = expectation_terms(&model, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_relative_eq!(ent, -(2.0f64.ln()), epsilon = 1e-12);
        assert_relative_eq!(mlr, -(3.0f64.ln()), epsilon = 1e-12);

        // Natural percolation weights on the dyadic grid.
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let alpha = percolation_exponent(&law, &[0.5; 4]).unwrap();
        let model = percolation_weights(law, vec![0.5; 4], alpha).unwrap();
        let (ent, mlr) = expectation_terms(&model, &[0.5; 4]).unwrap();
        assert_relative_eq!(ent, -alpha * 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(mlr, -(2.0f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn theoretical_alpha_recovers_ratio_of_terms() {
        let law = SubsetLaw::uniform_keep(4, 0.7);
        let alpha = percolation_exponent(&law, &[0.5; 4]).unwrap();
        let model = percolation_weights(law, vec![0.5; 4], alpha).unwrap();
        let report = theoretical_alpha(&model, &[0.5; 4], 0.0, 2).unwrap();
        assert_relative_eq!(report.value, alpha, epsilon = 1e-12);
        assert!(!report.clamped);
    }

    #[test]
    fn theoretical_alpha_clamps_and_degenerates() {
        // A conditional entropy far above anything attainable pushes the raw
        // value past the ambient dimension; the report clamps and flags it.
        let model = WeightModel::Deterministic(vec![0.5, 0.5]);
        let report = theoretical_alpha(&model, &[0.5, 0.5], -3.0, 1).unwrap();
        assert!(report.clamped);
        assert_eq!(report.value, 1.0);
        assert!(report.raw > 1.0);

        // Ratios at the brink of 1 collapse the denominator.
        let flat = 1.0 - 1e-14;
        assert!(matches!(
            theoretical_alpha(&model, &[flat, flat], 0.0, 1),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn extinct_measure_is_an_error() {
        let law = SubsetLaw::Explicit(vec![(vec![], 1.0)]);
        let model = WeightModel::Percolation {
            law,
            ratios: vec![0.5, 0.5],
            alpha: 1.0,
        };
        let real = CascadeRealization::new(model, 0).unwrap();
        let ifs = IfsSpec::new(vec![
            Similarity::homothety(0.5, vec![0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.5]).unwrap(),
        ])
        .unwrap();
        assert!(matches!(
            cascade_measure(&real, &ifs, 3, TailPolicy::Expectation, 1 << 20),
            Err(Error::Extinct { .. })
        ));
    }

    #[test]
    fn enumeration_caps_use_worst_case_size() {
        let real = CascadeRealization::new(WeightModel::Deterministic(vec![0.5, 0.5]), 0).unwrap();
        assert!(matches!(
            real.martingale_mass(10, 512),
            Err(Error::CapExceeded { .. })
        ));
    }
}
