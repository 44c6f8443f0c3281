//! Images of measures under smooth maps, pinned distance sets, and the
//! box-counting dimension surrogate for point clouds.

use crate::error::{Error, Result};
use crate::fit::{self, LineFit};
use crate::measure::{DimensionEstimate, DiscreteMeasure};
use nalgebra::DMatrix;
use std::collections::HashSet;

/// Smallest singular value below which a differential counts as singular.
pub const SINGULAR_SIGMA_TOL: f64 = 1e-6;
/// Relative tolerance for the finite-difference jacobian consistency check.
const JACOBIAN_FD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
/// Pair enumeration threshold for distance clouds.
const ALL_PAIRS_LIMIT: usize = 2_000;

type EvalFn = dyn Fn(&[f64]) -> Vec<f64> + Sync + Send;
type JacFn = dyn Fn(&[f64]) -> DMatrix<f64> + Sync + Send;

/// A C^1 map h: R^d -> R^k given by an evaluator and its differential.
pub struct SmoothMap {
    dim_in: usize,
    dim_out: usize,
    eval: Box<EvalFn>,
    jacobian: Box<JacFn>,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .finish()
    }
}

impl SmoothMap {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        eval: impl Fn(&[f64]) -> Vec<f64> + Sync + Send + 'static,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Sync + Send + 'static,
    ) -> Self {
        SmoothMap {
            dim_in,
            dim_out,
            eval: Box::new(eval),
            jacobian: Box::new(jacobian),
        }
    }

    /// The affine map x -> A x + b.
    pub fn affine(a: DMatrix<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.nrows(), b.len());
        let dim_in = a.ncols();
        let dim_out = a.nrows();
        let a2 = a.clone();
        SmoothMap::new(
            dim_in,
            dim_out,
            move |x: &[f64]| {
                (0..dim_out)
                    .map(|i| (0..dim_in).map(|j| a[(i, j)] * x[j]).sum::<f64>() + b[i])
                    .collect()
            },
            move |_x: &[f64]| a2.clone(),
        )
    }

    /// The pin map x -> |x - a|, smooth away from a.
    pub fn distance_to(a: Vec<f64>) -> Self {
        let d = a.len();
        let a2 = a.clone();
        SmoothMap::new(
            d,
            1,
            move |x: &[f64]| {
                let s: f64 = x.iter().zip(&a).map(|(u, v)| (u - v) * (u - v)).sum();
                vec![s.sqrt()]
            },
            move |x: &[f64]| {
                let s: f64 = x.iter().zip(&a2).map(|(u, v)| (u - v) * (u - v)).sum();
                let norm = s.sqrt();
                DMatrix::from_fn(1, d, |_, j| (x[j] - a2[j]) / norm)
            },
        )
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jacobian_at(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(x)
    }

    /// Central-difference consistency check of the declared differential.
    pub fn check_jacobian(&self, x: &[f64]) -> Result<()> {
        let jac = self.jacobian_at(x);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for j in 0..self.dim_in {
            xp[j] = x[j] + FD_STEP;
            xm[j] = x[j] - FD_STEP;
            let fp = self.apply(&xp);
            let fm = self.apply(&xm);
            xp[j] = x[j];
            xm[j] = x[j];
            for i in 0..self.dim_out {
                let fd = (fp[i] - fm[i]) / (2.0 * FD_STEP);
                let j_val = jac[(i, j)];
                let scale = j_val.abs().max(1.0);
                if !((fd - j_val).abs() <= JACOBIAN_FD_TOL * scale) {
                    return Err(Error::ConfigInvalid {
                        field: "jacobian".into(),
                        reason: format!(
                            "entry ({i},{j}) is {j_val} but finite differences give {fd}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Push a measure through a C^1 map. The differential is spot-checked at
/// `samples` mass-weighted support points: it must match finite differences
/// and have smallest singular value above `SINGULAR_SIGMA_TOL`. Returns the
/// image measure and the smallest singular value observed.
pub fn c1_image_measure(
    nu: &DiscreteMeasure,
    map: &SmoothMap,
    samples: usize,
    seed: u64,
) -> Result<(DiscreteMeasure, f64)> {
    if map.dim_in() != nu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "map on R^{} applied to a measure in R^{}",
            map.dim_in(),
            nu.dim()
        )));
    }
    let mut rng = crate::rng::stream(seed, "c1-check", 0);
    let mut min_sigma = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let atom = nu.sample_atom(&mut rng);
        let x = nu.point(atom);
        map.check_jacobian(x)?;
        let jac = map.jacobian_at(x);
        let sigma = jac
            .svd(false, false)
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if !(sigma > SINGULAR_SIGMA_TOL) {
            return Err(Error::SingularPointDetected { sigma, index: atom });
        }
        min_sigma = min_sigma.min(sigma);
    }
    let mut points = Vec::with_capacity(nu.atom_count() * map.dim_out());
    for i in 0..nu.atom_count() {
        points.extend_from_slice(&map.apply(nu.point(i)));
    }
    let out = DiscreteMeasure::new(
        map.dim_out(),
        points,
        nu.masses().to_vec(),
        nu.labels().map(|l| l.to_vec()),
    )?;
    let out = match nu.words() {
        Some(w) => out.with_words(w.to_vec()),
        None => out,
    };
    Ok((out, min_sigma))
}

/// Which atoms to drop before pinning distances at a point.
#[derive(Debug, Clone)]
pub enum Exclusion {
    /// Keep only atoms whose first symbol equals the given one (the pin
    /// must lie outside that first-level cylinder).
    Cylinder(u8),
    /// Drop atoms within this distance of the pin.
    Radius(f64),
}

/// Pushforward of the (restricted, re-normalized) measure under the pin map
/// x -> |x - a|. The exclusion must leave at least one atom and must
/// actually separate the pin from the retained support.
pub fn pinned_distance_measure(
    nu: &DiscreteMeasure,
    a: &[f64],
    exclusion: &Exclusion,
) -> Result<DiscreteMeasure> {
    if a.len() != nu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "pin in R^{} for a measure in R^{}",
            a.len(),
            nu.dim()
        )));
    }
    let keep: Vec<usize> = match exclusion {
        Exclusion::Cylinder(symbol) => {
            let labels = nu.labels().ok_or_else(|| {
                Error::DimensionMismatch("measure carries no first-symbol labels".into())
            })?;
            (0..nu.atom_count())
                .filter(|&i| labels[i] == *symbol)
                .collect()
        }
        Exclusion::Radius(r) => (0..nu.atom_count())
            .filter(|&i| {
                let d2: f64 = nu
                    .point(i)
                    .iter()
                    .zip(a)
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum();
                d2 > r * r
            })
            .collect(),
    };
    if keep.is_empty() {
        return Err(Error::ExclusionEmpty);
    }
    let mut points = Vec::with_capacity(keep.len());
    let mut masses = Vec::with_capacity(keep.len());
    let mut labels = nu.labels().map(|_| Vec::with_capacity(keep.len()));
    for &i in &keep {
        let d2: f64 = nu
            .point(i)
            .iter()
            .zip(a)
            .map(|(u, v)| (u - v) * (u - v))
            .sum();
        let dist = d2.sqrt();
        if dist == 0.0 {
            return Err(Error::ExclusionEmpty);
        }
        points.push(dist);
        masses.push(nu.mass(i));
        if let (Some(out), Some(src)) = (labels.as_mut(), nu.labels()) {
            out.push(src[i]);
        }
    }
    DiscreteMeasure::new(1, points, masses, labels)?.normalized()
}

/// Pairwise distances of a point cloud: every pair when the cloud has at
/// most 2000 points, otherwise `pairs` sampled pairs.
pub fn distance_set_cloud(points: &[Vec<f64>], pairs: usize, seed: u64) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    if n <= ALL_PAIRS_LIMIT {
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(dist(i, j));
            }
        }
        out
    } else {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, "distance-pairs", 0);
        let mut out = Vec::with_capacity(pairs);
        while out.len() < pairs {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                out.push(dist(i, j));
            }
        }
        out
    }
}

/// Occupied-box counts of the point set on the grids of the given scales,
/// boxes anchored at the origin.
pub fn box_counts(points: &[Vec<f64>], scales: &[f64]) -> Result<Vec<usize>> {
    let mut counts = Vec::with_capacity(scales.len());
    for &s in scales {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::ConfigInvalid {
                field: "scales".into(),
                reason: format!("{s} is not a positive scale"),
            });
        }
        let mut boxes: HashSet<Vec<i64>> = HashSet::new();
        for p in points {
            boxes.insert(p.iter().map(|&c| (c / s).floor() as i64).collect());
        }
        counts.push(boxes.len());
    }
    Ok(counts)
}

/// Box-counting slope: log occupied-box count against log(1/scale).
pub fn box_dimension(points: &[Vec<f64>], scales: &[f64]) -> Result<DimensionEstimate> {
    if scales.len() < 4 {
        return Err(Error::InsufficientRange {
            got: scales.len(),
            need: 4,
        });
    }
    if points.is_empty() {
        return Err(Error::InsufficientRange { got: 0, need: 1 });
    }
    let counts = box_counts(points, scales)?;
    let mut xs = Vec::with_capacity(scales.len());
    let mut ys = Vec::with_capacity(scales.len());
    for (&s, &c) in scales.iter().zip(&counts) {
        xs.push((1.0 / s).ln());
        ys.push((c as f64).ln());
    }
    if ys.iter().all(|&y| y == ys[0]) && ys[0] == 0.0 {
        // A single occupied box at every scale: dimension zero.
        return Ok(DimensionEstimate {
            value: 0.0,
            standard_error: 0.0,
            r2: 1.0,
            radii_used: scales.to_vec(),
            sample_count: points.len(),
        });
    }
    let LineFit {
        slope,
        slope_stderr,
        r2,
        ..
    } = fit::line_fit(&xs, &ys);
    Ok(DimensionEstimate {
        value: slope,
        standard_error: slope_stderr,
        r2,
        radii_used: scales.to_vec(),
        sample_count: points.len(),
    })
}
