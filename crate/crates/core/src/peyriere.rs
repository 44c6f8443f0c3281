//! Path functionals under mass-biased sampling.
//!
//! The sampling scheme here draws a random cascade conditioned on survival,
//! then a point (equivalently, a coding path) from the normalized cascade
//! measure. Averages over that joint law are estimated with self-normalized
//! importance weights equal to the realization's total mass, which is the
//! Radon-Nikodym factor between "pick a replica, then a point" and the
//! mass-biased path law. Deterministic weight models have total mass one,
//! so their importance weights are trivially flat.
//!
//! The module also houses the conditional-information functional: the
//! information carried by the first symbol of a path given a ball around
//! the path's image point, whose average over mass-biased paths is the
//! conditional-entropy term of the dimension formulas.

use crate::cascade::{self, CascadeRealization, TailPolicy, WeightModel};
use crate::error::{Error, Result};
use crate::fit;
use crate::ifs::{IfsSpec, Word, DEFAULT_ATOM_CAP};
use crate::measure::DiscreteMeasure;
use crate::projection;
use crate::rng;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

/// Subtree depth used to score children during tree descent. Lookahead 0
/// picks children proportionally to their immediate weight; positive
/// lookahead additionally multiplies by the simulated subtree mass, which
/// avoids dead ends under percolation-style weights. Both choices coincide
/// for deterministic models.
pub const DEFAULT_LOOKAHEAD: u32 = 4;
/// Resampling budget when conditioning on non-extinction.
pub const REJECTION_CAP: usize = 64;
/// Cap substituted for an infinite conditional information (log of 1e6).
pub const CONDITIONAL_INFO_CAP: f64 = 13.815510557964274;
/// Fraction of capped samples above which an estimate is flagged unreliable.
const SATURATION_BUDGET: f64 = 0.01;
/// Score evaluations per step stay below this many subtree leaves.
const LOOKAHEAD_LEAF_BUDGET: u128 = 1 << 16;

/// A coding path drawn from a cascade realization.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub word: Word,
    /// The weight factor picked up at each step, so `mass` is their product.
    pub step_weights: Vec<f64>,
    pub mass: f64,
}

/// Descend the cylinder tree of `real` to depth `n`, choosing child j with
/// probability proportional to W_j times the simulated mass of its subtree
/// `lookahead` levels deep. Dead ends (all child scores zero) abort the
/// attempt with `Extinct`.
pub fn sample_path<R: Rng>(
    real: &CascadeRealization,
    n: usize,
    lookahead: u32,
    rng: &mut R,
) -> Result<PathSample> {
    let m = real.model().arity();
    let mut ell_cap = 0u32;
    while (m as u128).pow(ell_cap + 1) <= LOOKAHEAD_LEAF_BUDGET && ell_cap < lookahead {
        ell_cap += 1;
    }
    let mut word = Word::empty();
    let mut step_weights = Vec::with_capacity(n);
    let mut mass = 1.0;
    let mut scores = vec![0.0; m];
    for depth in 0..n {
        let weights = real.weights_at(&word);
        let remaining = (n - depth - 1) as u32;
        let ell = remaining.min(lookahead).min(ell_cap);
        let mut total = 0.0;
        for (j, &w) in weights.iter().enumerate() {
            scores[j] = if w > 0.0 {
                if ell == 0 {
                    w
                } else {
                    w * real.subtree_mass(&word.child(j as u8), ell)
                }
            } else {
                0.0
            };
            total += scores[j];
        }
        if !(total > 0.0) {
            return Err(Error::Extinct { rejections: 1 });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = m - 1;
        for (j, &s) in scores.iter().enumerate() {
            acc += s;
            if target < acc {
                pick = j;
                break;
            }
        }
        word.push(pick as u8);
        step_weights.push(weights[pick]);
        mass *= weights[pick];
    }
    Ok(PathSample {
        word,
        step_weights,
        mass,
    })
}

/// Image map applied to a measure before querying balls: the identity
/// embedding or a linear map (a projection, a rotation, or their product).
#[derive(Debug, Clone)]
pub enum PhiSpec {
    Identity,
    Linear(DMatrix<f64>),
}

impl PhiSpec {
    /// The measure seen through the map; identity borrows, linear maps copy.
    fn image<'a>(&self, nu: &'a DiscreteMeasure) -> Result<std::borrow::Cow<'a, DiscreteMeasure>> {
        match self {
            PhiSpec::Identity => Ok(std::borrow::Cow::Borrowed(nu)),
            PhiSpec::Linear(a) => Ok(std::borrow::Cow::Owned(projection::apply_linear(nu, a)?)),
        }
    }
}

/// Conditional information of the first symbol given the ball of the given
/// radius around atom `atom`: -log of the ball's mass share carried by
/// atoms with the same first-symbol label. A zero numerator is replaced by
/// `CONDITIONAL_INFO_CAP` with the flag set.
pub fn conditional_information(
    image: &DiscreteMeasure,
    atom: usize,
    radius: f64,
) -> Result<(f64, bool)> {
    let labels = image
        .labels()
        .ok_or_else(|| Error::DimensionMismatch("measure carries no first-symbol labels".into()))?;
    let (labeled, total) = image.ball_mass_labeled(image.point(atom), radius, labels[atom]);
    if !(total > 0.0) {
        return Err(Error::EmptyBall { radius });
    }
    if !(labeled > 0.0) {
        return Ok((CONDITIONAL_INFO_CAP, true));
    }
    Ok(((-(labeled / total).ln()).max(0.0), false))
}

/// Conditional information at the cylinder scale: the ball radius is
/// R times the contraction ratio of the first n symbols of the atom's word.
pub fn conditional_information_at(
    image: &DiscreteMeasure,
    ifs: &IfsSpec,
    atom: usize,
    n: usize,
) -> Result<(f64, bool)> {
    let words = image
        .words()
        .ok_or_else(|| Error::DimensionMismatch("measure carries no coding words".into()))?;
    let word = &words[atom];
    if word.len() < n {
        return Err(Error::InsufficientRange {
            got: word.len(),
            need: n,
        });
    }
    let radius = ifs.radius() * ifs.word_ratio(&word.prefix(n))?;
    conditional_information(image, atom, radius)
}

/// A self-normalized importance-weighted Monte Carlo estimate.
#[derive(Debug, Clone)]
pub struct WeightedEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Samples that hit the conditional-information cap.
    pub saturated: usize,
    /// False when saturated samples were too many to exclude.
    pub reliable: bool,
    /// Replicas resampled while conditioning on non-extinction.
    pub rejections: usize,
}

/// Estimate the mass-biased average of the conditional information of the
/// first symbol given a ball around the image point, at cylinder scale n.
/// Per replica, a level-`level` cascade measure is built (conditioned on
/// survival by rejection), mapped through `phi`, and queried at one
/// mass-sampled atom; replicas are combined with importance weights equal
/// to their total mass.
pub fn conditional_entropy(
    model: &WeightModel,
    ifs: &IfsSpec,
    phi: &PhiSpec,
    n: usize,
    level: usize,
    replicas: usize,
    seed: u64,
) -> Result<WeightedEstimate> {
    if level < n {
        return Err(Error::InsufficientRange {
            got: level,
            need: n,
        });
    }
    let per_replica: Vec<Result<(f64, bool, f64, usize)>> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let replica_seed = rng::sub_seed(seed, "cond-entropy", k as u64);
            let mut rejections = 0usize;
            for attempt in 0..REJECTION_CAP {
                let real_seed = rng::sub_seed(replica_seed, "survival", attempt as u64);
                let real = CascadeRealization::new(model.clone(), real_seed)?;
                let nu = match cascade::cascade_measure(
                    &real,
                    ifs,
                    level,
                    TailPolicy::Expectation,
                    DEFAULT_ATOM_CAP,
                ) {
                    Ok(nu) => nu,
                    Err(Error::Extinct { .. }) => {
                        rejections += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let image = phi.image(&nu)?;
                image.ensure_index(ifs.radius() * ifs.rho().powi(n as i32));
                let mut atom_rng = rng::stream(replica_seed, "atom", 0);
                let atom = image.sample_atom(&mut atom_rng);
                let (value, saturated) = conditional_information_at(&image, ifs, atom, n)?;
                return Ok((value, saturated, nu.total_mass(), rejections));
            }
            Err(Error::Extinct {
                rejections: REJECTION_CAP,
            })
        })
        .collect();

    let mut values = Vec::with_capacity(replicas);
    let mut weights = Vec::with_capacity(replicas);
    let mut saturated = 0usize;
    let mut rejections = 0usize;
    let mut capped_values = Vec::new();
    let mut capped_weights = Vec::new();
    for r in per_replica {
        let (value, sat, weight, rej) = r?;
        rejections += rej;
        if sat {
            saturated += 1;
            capped_values.push(value);
            capped_weights.push(weight);
        } else {
            values.push(value);
            weights.push(weight);
        }
    }
    let reliable = (saturated as f64) < SATURATION_BUDGET * replicas as f64 || saturated == 0;
    if !reliable || values.is_empty() {
        values.extend_from_slice(&capped_values);
        weights.extend_from_slice(&capped_weights);
    }
    let (value, stderr) = fit::weighted_mean_stderr(&values, &weights);
    Ok(WeightedEstimate {
        value,
        stderr,
        samples: values.len(),
        saturated,
        reliable,
        rejections,
    })
}

/// Mass-biased expectation of an arbitrary path functional at depth n:
/// replicas conditioned on survival, one tree-descent path per replica,
/// importance weight = the replica's level-n total mass.
pub fn peyriere_expectation<F>(
    model: &WeightModel,
    ifs: &IfsSpec,
    functional: F,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<WeightedEstimate>
where
    F: Fn(&PathSample, &IfsSpec) -> f64 + Sync,
{
    let per_replica: Vec<Result<(f64, f64, usize)>> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let replica_seed = rng::sub_seed(seed, "peyriere", k as u64);
            let mut rejections = 0usize;
            for attempt in 0..REJECTION_CAP {
                let real_seed = rng::sub_seed(replica_seed, "survival", attempt as u64);
                let real = CascadeRealization::new(model.clone(), real_seed)?;
                let mass = real.martingale_mass(n, DEFAULT_ATOM_CAP)?;
                if !(mass > 0.0) {
                    rejections += 1;
                    continue;
                }
                let mut walk_rng = rng::stream(replica_seed, "walk", attempt as u64);
                match sample_path(&real, n, DEFAULT_LOOKAHEAD, &mut walk_rng) {
                    Ok(path) => return Ok((functional(&path, ifs), mass, rejections)),
                    Err(Error::Extinct { .. }) => {
                        rejections += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Extinct {
                rejections: REJECTION_CAP,
            })
        })
        .collect();

    let mut values = Vec::with_capacity(replicas);
    let mut weights = Vec::with_capacity(replicas);
    let mut rejections = 0usize;
    for r in per_replica {
        let (value, weight, rej) = r?;
        values.push(value);
        weights.push(weight);
        rejections += rej;
    }
    let (value, stderr) = fit::weighted_mean_stderr(&values, &weights);
    Ok(WeightedEstimate {
        value,
        stderr,
        samples: values.len(),
        saturated: 0,
        reliable: true,
        rejections,
    })
}

/// Strong-law diagnostics: per sampled path, least-squares slopes of
/// log Q(i|n) and log r(i|n) against n over [depth_lo, depth_hi], averaged
/// over paths. The strong law makes both limits deterministic constants,
/// so plain replica averaging estimates the same values as mass-biased
/// weighting; the expected constants from the weight law are reported
/// alongside.
#[derive(Debug, Clone)]
pub struct LlnDiagnostics {
    pub weight_slope: f64,
    pub weight_stderr: f64,
    pub ratio_slope: f64,
    pub ratio_stderr: f64,
    pub expected_weight_term: f64,
    pub expected_ratio_term: f64,
    pub depths: (usize, usize),
    pub paths: usize,
    pub rejections: usize,
}

pub fn lln_diagnostics(
    model: &WeightModel,
    ifs: &IfsSpec,
    depth_lo: usize,
    depth_hi: usize,
    paths: usize,
    seed: u64,
) -> Result<LlnDiagnostics> {
    if depth_lo + 1 >= depth_hi {
        return Err(Error::InsufficientRange {
            got: depth_hi.saturating_sub(depth_lo),
            need: 2,
        });
    }
    let ratios: Vec<f64> = ifs.ratios().to_vec();
    let per_path: Vec<Result<(f64, f64, usize)>> = (0..paths)
        .into_par_iter()
        .map(|k| {
            let replica_seed = rng::sub_seed(seed, "lln", k as u64);
            let mut rejections = 0usize;
            for attempt in 0..REJECTION_CAP {
                let real_seed = rng::sub_seed(replica_seed, "survival", attempt as u64);
                let real = CascadeRealization::new(model.clone(), real_seed)?;
                let mut walk_rng = rng::stream(replica_seed, "walk", attempt as u64);
                let path = match sample_path(&real, depth_hi, DEFAULT_LOOKAHEAD, &mut walk_rng) {
                    Ok(p) => p,
                    Err(Error::Extinct { .. }) => {
                        rejections += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let mut log_q = Vec::with_capacity(depth_hi - depth_lo + 1);
                let mut log_r = Vec::with_capacity(depth_hi - depth_lo + 1);
                let mut ns = Vec::with_capacity(depth_hi - depth_lo + 1);
                let mut acc_q = 0.0;
                let mut acc_r = 0.0;
                for (step, (&w, &s)) in path
                    .step_weights
                    .iter()
                    .zip(path.word.symbols())
                    .enumerate()
                {
                    acc_q += w.ln();
                    acc_r += ratios[s as usize].ln();
                    let depth = step + 1;
                    if depth >= depth_lo {
                        ns.push(depth as f64);
                        log_q.push(acc_q);
                        log_r.push(acc_r);
                    }
                }
                let q_fit = fit::line_fit(&ns, &log_q);
                let r_fit = fit::line_fit(&ns, &log_r);
                return Ok((q_fit.slope, r_fit.slope, rejections));
            }
            Err(Error::Extinct {
                rejections: REJECTION_CAP,
            })
        })
        .collect();

    let mut q_slopes = Vec::with_capacity(paths);
    let mut r_slopes = Vec::with_capacity(paths);
    let mut rejections = 0usize;
    for r in per_path {
        let (q, rr, rej) = r?;
        q_slopes.push(q);
        r_slopes.push(rr);
        rejections += rej;
    }
    let (weight_slope, weight_stderr) = fit::mean_stderr(&q_slopes);
    let (ratio_slope, ratio_stderr) = fit::mean_stderr(&r_slopes);
    let (expected_weight_term, expected_ratio_term) = cascade::expectation_terms(model, &ratios)?;
    Ok(LlnDiagnostics {
        weight_slope,
        weight_stderr,
        ratio_slope,
        ratio_stderr,
        expected_weight_term,
        expected_ratio_term,
        depths: (depth_lo, depth_hi),
        paths,
        rejections,
    })
}
