//! Discrete measures (weighted atom clouds) and dimension estimators.
//!
//! Measures are immutable after construction. Ball queries run through a
//! uniform grid index with per-cell mass prefix sums, so large balls are
//! answered by row-segment accumulation instead of atom-by-atom scans; the
//! result is always exactly the mass of the closed ball. Dimension
//! estimators fit log ball mass against log radius over a geometric radius
//! schedule.

use crate::error::{Error, Result};
use crate::fit::{self, LineFit};
use crate::ifs::{IfsSpec, Word};
use rand::Rng;
use rayon::prelude::*;
use std::sync::OnceLock;

/// Cap on grid cells in the spatial index.
const MAX_CELLS: usize = 1 << 22;
/// Local-dimension spread below which a measure is flagged exact-dimensional.
pub const EXACTNESS_IQR_THRESHOLD: f64 = 0.1;
/// Ball mass this close to the total counts as saturated in local fits.
const SATURATION_MARGIN: f64 = 1e-9;

/// A finite measure given by weighted atoms in R^d, with optional per-atom
/// first-symbol labels and coding words carried along from a cascade.
#[derive(Debug)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    masses: Vec<f64>,
    labels: Option<Vec<u8>>,
    words: Option<Vec<Word>>,
    total_mass: f64,
    bbox_min: Vec<f64>,
    bbox_max: Vec<f64>,
    index: OnceLock<GridIndex>,
    cumulative: OnceLock<Vec<f64>>,
}

impl Clone for DiscreteMeasure {
    fn clone(&self) -> Self {
        DiscreteMeasure {
            dim: self.dim,
            points: self.points.clone(),
            masses: self.masses.clone(),
            labels: self.labels.clone(),
            words: self.words.clone(),
            total_mass: self.total_mass,
            bbox_min: self.bbox_min.clone(),
            bbox_max: self.bbox_max.clone(),
            index: OnceLock::new(),
            cumulative: OnceLock::new(),
        }
    }
}

impl DiscreteMeasure {
    /// Build a measure from flattened points (atom i occupies
    /// points[i*dim..(i+1)*dim]) and positive masses.
    pub fn new(
        dim: usize,
        points: Vec<f64>,
        masses: Vec<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ConfigInvalid {
                field: "dim".into(),
                reason: "ambient dimension must be positive".into(),
            });
        }
        if masses.is_empty() {
            return Err(Error::ConfigInvalid {
                field: "masses".into(),
                reason: "a measure needs at least one atom".into(),
            });
        }
        if points.len() != masses.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} atoms in R^{dim}",
                points.len(),
                masses.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != masses.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} atoms",
                    l.len(),
                    masses.len()
                )));
            }
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::ConfigInvalid {
                    field: format!("masses[{i}]"),
                    reason: format!("{m} is not a positive finite mass"),
                });
            }
        }
        let total_mass = masses.iter().sum();
        let mut bbox_min = vec![f64::INFINITY; dim];
        let mut bbox_max = vec![f64::NEG_INFINITY; dim];
        for atom in points.chunks_exact(dim) {
            for (k, &x) in atom.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::ConfigInvalid {
                        field: "points".into(),
                        reason: format!("non-finite coordinate {x}"),
                    });
                }
                bbox_min[k] = bbox_min[k].min(x);
                bbox_max[k] = bbox_max[k].max(x);
            }
        }
        Ok(DiscreteMeasure {
            dim,
            points,
            masses,
            labels,
            words: None,
            total_mass,
            bbox_min,
            bbox_max,
            index: OnceLock::new(),
            cumulative: OnceLock::new(),
        })
    }

    /// Attach the coding words of the atoms (consumed by path samplers).
    pub fn with_words(mut self, words: Vec<Word>) -> Self {
        assert_eq!(words.len(), self.masses.len());
        self.words = Some(words);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom_count(&self) -> usize {
        self.masses.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn words(&self) -> Option<&[Word]> {
        self.words.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.bbox_min, &self.bbox_max)
    }

    /// Largest side of the bounding box.
    pub fn extent(&self) -> f64 {
        self.bbox_min
            .iter()
            .zip(&self.bbox_max)
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    /// The probability-normalized copy.
    pub fn normalized(&self) -> Result<DiscreteMeasure> {
        if !(self.total_mass > 0.0) {
            return Err(Error::Extinct { rejections: 0 });
        }
        let masses = self.masses.iter().map(|m| m / self.total_mass).collect();
        let out = DiscreteMeasure::new(self.dim, self.points.clone(), masses, self.labels.clone())?;
        Ok(match &self.words {
            Some(w) => out.with_words(w.clone()),
            None => out,
        })
    }

    /// Build the spatial index with cells of roughly `cell_hint` (enlarged
    /// if the cell budget would overflow). First call wins; estimators call
    /// this once with their finest radius before querying in parallel.
    pub fn ensure_index(&self, cell_hint: f64) -> &GridIndex {
        self.index.get_or_init(|| GridIndex::build(self, cell_hint))
    }

    fn index(&self) -> &GridIndex {
        // Fallback cell size: aim at a few atoms per cell.
        self.ensure_index(self.default_cell())
    }

    fn default_cell(&self) -> f64 {
        let span = self.extent();
        let n = self.atom_count() as f64;
        (span / n.powf(1.0 / self.dim as f64).max(1.0)).max(span * 1e-6)
    }

    /// Mass of the closed ball B(x, r).
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        self.index().ball_mass(self, x, r, None).1
    }

    /// (mass with the given label, total mass) of the closed ball B(x, r).
    pub fn ball_mass_labeled(&self, x: &[f64], r: f64, label: u8) -> (f64, f64) {
        self.index().ball_mass(self, x, r, Some(label))
    }

    /// Reference implementation of the closed-ball query.
    pub fn ball_mass_linear(&self, x: &[f64], r: f64) -> f64 {
        let rr = r * r;
        let mut acc = 0.0;
        for (i, atom) in self.points.chunks_exact(self.dim).enumerate() {
            let d2: f64 = atom.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= rr {
                acc += self.masses[i];
            }
        }
        acc
    }

    fn cumulative(&self) -> &[f64] {
        self.cumulative.get_or_init(|| {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(self.masses.len());
            for &m in &self.masses {
                acc += m;
                out.push(acc);
            }
            out
        })
    }

    /// Draw an atom index with probability proportional to its mass.
    pub fn sample_atom<R: Rng>(&self, rng: &mut R) -> usize {
        let cum = self.cumulative();
        let target = rng.random::<f64>() * self.total_mass;
        cum.partition_point(|&c| c <= target).min(cum.len() - 1)
    }
}

/// Uniform grid over the bounding box with CSR atom lists and per-cell mass
/// prefix sums along the last axis.
#[derive(Debug)]
pub struct GridIndex {
    dim: usize,
    origin: Vec<f64>,
    cell: f64,
    counts: Vec<usize>,
    offsets: Vec<u32>,
    atom_ids: Vec<u32>,
    /// Prefix sums of per-cell total mass in flattened order; the last axis
    /// is contiguous, so any row segment sums in O(1).
    mass_prefix: Vec<f64>,
}

impl GridIndex {
    fn build(measure: &DiscreteMeasure, cell_hint: f64) -> GridIndex {
        let dim = measure.dim;
        let spans: Vec<f64> = measure
            .bbox_min
            .iter()
            .zip(&measure.bbox_max)
            .map(|(lo, hi)| (hi - lo).max(0.0))
            .collect();
        let max_span = spans.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut cell = if cell_hint.is_finite() && cell_hint > 0.0 {
            cell_hint
        } else {
            (max_span / 64.0).max(f64::MIN_POSITIVE)
        };
        if max_span == 0.0 {
            cell = 1.0;
        }
        // Enforce the cell budget.
        let mut counts;
        loop {
            counts = spans
                .iter()
                .map(|s| ((s / cell).floor() as usize + 1).max(1))
                .collect::<Vec<_>>();
            let product = counts.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
            match product {
                Some(p) if p <= MAX_CELLS => break,
                _ => cell *= 1.3,
            }
        }
        let ncells: usize = counts.iter().product();
        let origin = measure.bbox_min.clone();
        let n = measure.atom_count();

        let cell_of = |atom: &[f64]| -> usize {
            let mut id = 0usize;
            for k in 0..dim {
                let mut i = ((atom[k] - origin[k]) / cell).floor() as isize;
                i = i.clamp(0, counts[k] as isize - 1);
                id = id * counts[k] + i as usize;
            }
            id
        };

        let mut bucket_sizes = vec![0u32; ncells];
        for atom in measure.points.chunks_exact(dim) {
            bucket_sizes[cell_of(atom)] += 1;
        }
        let mut offsets = vec![0u32; ncells + 1];
        for c in 0..ncells {
            offsets[c + 1] = offsets[c] + bucket_sizes[c];
        }
        let mut cursor = offsets[..ncells].to_vec();
        let mut atom_ids = vec![0u32; n];
        let mut cell_mass = vec![0.0f64; ncells];
        for (i, atom) in measure.points.chunks_exact(dim).enumerate() {
            let c = cell_of(atom);
            atom_ids[cursor[c] as usize] = i as u32;
            cursor[c] += 1;
            cell_mass[c] += measure.masses[i];
        }
        let mut mass_prefix = vec![0.0f64; ncells + 1];
        for c in 0..ncells {
            mass_prefix[c + 1] = mass_prefix[c] + cell_mass[c];
        }
        GridIndex {
            dim,
            origin,
            cell,
            counts,
            offsets,
            atom_ids,
            mass_prefix,
        }
    }

    /// Exact closed-ball mass; with `label`, additionally the mass carried by
    /// atoms of that label (labelled accumulation always scans atoms, which
    /// is cheap at the small radii label queries use).
    fn ball_mass(
        &self,
        measure: &DiscreteMeasure,
        x: &[f64],
        r: f64,
        label: Option<u8>,
    ) -> (f64, f64) {
        assert_eq!(x.len(), self.dim, "query point dimension");
        assert!(
            r >= 0.0 && r.is_finite(),
            "ball radius must be finite and nonnegative"
        );
        let rr = r * r;
        let d = self.dim;
        let last = d - 1;

        // Integer ranges per axis.
        let mut lo = vec![0isize; d];
        let mut hi = vec![0isize; d];
        for k in 0..d {
            lo[k] = (((x[k] - r) - self.origin[k]) / self.cell).floor() as isize;
            hi[k] = (((x[k] + r) - self.origin[k]) / self.cell).floor() as isize;
            lo[k] = lo[k].clamp(0, self.counts[k] as isize - 1);
            hi[k] = hi[k].clamp(0, self.counts[k] as isize - 1);
        }

        let mut labeled = 0.0;
        let mut total = 0.0;
        let mut row = lo[..last].to_vec();
        let labels = measure.labels.as_deref();
        loop {
            // Squared distance from x to the row's box in the leading axes.
            let mut row_near = 0.0;
            let mut row_far = 0.0;
            for k in 0..last {
                let cell_lo = self.origin[k] + row[k] as f64 * self.cell;
                let cell_hi = cell_lo + self.cell;
                let near = if x[k] < cell_lo {
                    cell_lo - x[k]
                } else if x[k] > cell_hi {
                    x[k] - cell_hi
                } else {
                    0.0
                };
                let far = (x[k] - cell_lo).abs().max((cell_hi - x[k]).abs());
                row_near += near * near;
                row_far += far * far;
            }
            if row_near <= rr {
                let row_base = {
                    let mut id = 0usize;
                    for k in 0..last {
                        id = id * self.counts[k] + row[k] as usize;
                    }
                    id * self.counts[last]
                };
                // Contiguous range of cells fully inside the ball, shrunk by
                // one cell per side so roundoff can never promote a boundary
                // cell to the exact-free fast path.
                let (full_lo, full_hi) = if label.is_none() && rr >= row_far {
                    let slack = (rr - row_far).sqrt();
                    let a =
                        (((x[last] - slack) - self.origin[last]) / self.cell).ceil() as isize + 1;
                    let b =
                        (((x[last] + slack) - self.origin[last]) / self.cell).floor() as isize - 2;
                    (a.max(lo[last]), b.min(hi[last]))
                } else {
                    (1, 0)
                };
                let mut j = lo[last];
                while j <= hi[last] {
                    if j >= full_lo && j <= full_hi {
                        let c0 = row_base + full_lo as usize;
                        let c1 = row_base + full_hi as usize;
                        total += self.mass_prefix[c1 + 1] - self.mass_prefix[c0];
                        j = full_hi + 1;
                        continue;
                    }
                    let cid = row_base + j as usize;
                    for &ai in
                        &self.atom_ids[self.offsets[cid] as usize..self.offsets[cid + 1] as usize]
                    {
                        let atom = measure.point(ai as usize);
                        let mut d2 = 0.0;
                        for k in 0..d {
                            let diff = atom[k] - x[k];
                            d2 += diff * diff;
                        }
                        if d2 <= rr {
                            let m = measure.masses[ai as usize];
                            total += m;
                            if let (Some(want), Some(ls)) = (label, labels) {
                                if ls[ai as usize] == want {
                                    labeled += m;
                                }
                            }
                        }
                    }
                    j += 1;
                }
            }
            // Odometer over the leading axes.
            let mut k = last;
            loop {
                if k == 0 {
                    return (labeled, total);
                }
                k -= 1;
                row[k] += 1;
                if row[k] <= hi[k] {
                    break;
                }
                row[k] = lo[k];
            }
        }
    }
}

/// Geometric radius schedule from `r_max` down to `r_min` (inclusive of the
/// last value at or above `r_min`).
pub fn radius_schedule(r_max: f64, r_min: f64, factor: f64) -> Result<Vec<f64>> {
    if !(r_max.is_finite() && r_max > 0.0 && r_min.is_finite() && r_min > 0.0 && r_min <= r_max) {
        return Err(Error::ConfigInvalid {
            field: "radii".into(),
            reason: format!("bad schedule bounds [{r_min}, {r_max}]"),
        });
    }
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::ConfigInvalid {
            field: "radii.factor".into(),
            reason: format!("{factor} is not in (0, 1)"),
        });
    }
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= r_min * (1.0 - 1e-12) {
        out.push(r);
        r *= factor;
    }
    Ok(out)
}

/// Default schedule for a level-n cascade measure on `ifs`: halving radii
/// from R/4 down to 8 times the finest cylinder scale R * rho^n.
pub fn default_radius_schedule(ifs: &IfsSpec, level: usize) -> Result<Vec<f64>> {
    let r = ifs.radius();
    let rho = ifs.rho();
    let r_max = r / 4.0;
    let r_min = 8.0 * r * rho.powi(level as i32);
    if !(r_min > 0.0) || r_min > r_max {
        return Err(Error::InsufficientRange { got: 0, need: 4 });
    }
    radius_schedule(r_max, r_min, 0.5)
}

/// Scaling entropy H_r = -E log nu(B(X, r)) for X distributed as nu
/// (masses are treated as probabilities after division by the total).
/// Enumerated exactly when the atom count is at most `budget`, otherwise
/// Monte Carlo with `budget` draws. Returns (entropy, standard error).
pub fn scaling_entropy(measure: &DiscreteMeasure, r: f64, budget: usize, seed: u64) -> (f64, f64) {
    let total = measure.total_mass();
    if measure.atom_count() <= budget {
        let acc: f64 = (0..measure.atom_count())
            .into_par_iter()
            .map(|i| {
                let b = measure.ball_mass(measure.point(i), r);
                -measure.mass(i) * (b / total).ln()
            })
            .sum();
        (acc / total, 0.0)
    } else {
        let mut rng = crate::rng::stream(seed, "scaling-entropy", 0);
        let ids: Vec<usize> = (0..budget).map(|_| measure.sample_atom(&mut rng)).collect();
        let values: Vec<f64> = ids
            .into_par_iter()
            .map(|i| -(measure.ball_mass(measure.point(i), r) / total).ln())
            .collect();
        fit::mean_stderr(&values)
    }
}

/// Scaling entropies along a radius schedule.
#[derive(Debug, Clone)]
pub struct EntropyCurve {
    pub radii: Vec<f64>,
    pub entropies: Vec<f64>,
    pub stderrs: Vec<f64>,
}

impl EntropyCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,entropy,stderr\n");
        for i in 0..self.radii.len() {
            out.push_str(&format!(
                "{:.8e},{:.8e},{:.8e}\n",
                self.radii[i], self.entropies[i], self.stderrs[i]
            ));
        }
        out
    }
}

pub fn entropy_curve(
    measure: &DiscreteMeasure,
    radii: &[f64],
    budget: usize,
    seed: u64,
) -> EntropyCurve {
    if let Some(&r_min) = radii.iter().min_by(|a, b| a.total_cmp(b)) {
        measure.ensure_index(r_min);
    }
    let mut entropies = Vec::with_capacity(radii.len());
    let mut stderrs = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let (h, se) = scaling_entropy(
            measure,
            r,
            budget,
            crate::rng::sub_seed(seed, "curve", k as u64),
        );
        entropies.push(h);
        stderrs.push(se);
    }
    EntropyCurve {
        radii: radii.to_vec(),
        entropies,
        stderrs,
    }
}

/// A slope estimate from a log-log fit.
#[derive(Debug, Clone)]
pub struct DimensionEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub r2: f64,
    pub radii_used: Vec<f64>,
    pub sample_count: usize,
}

impl DimensionEstimate {
    pub fn csv_header() -> &'static str {
        "value,stderr,r2,radii_used,samples"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.8e},{:.8e},{:.8e},{},{}",
            self.value,
            self.standard_error,
            self.r2,
            self.radii_used.len(),
            self.sample_count
        )
    }
}

/// Entropy dimension: slope of H_r against log(1/r) over the schedule.
/// Needs at least four radii.
pub fn entropy_dimension(
    measure: &DiscreteMeasure,
    radii: &[f64],
    budget: usize,
    seed: u64,
) -> Result<DimensionEstimate> {
    if radii.len() < 4 {
        return Err(Error::InsufficientRange {
            got: radii.len(),
            need: 4,
        });
    }
    let curve = entropy_curve(measure, radii, budget, seed);
    let xs: Vec<f64> = curve.radii.iter().map(|r| (1.0 / r).ln()).collect();
    let LineFit {
        slope,
        slope_stderr,
        r2,
        ..
    } = fit::line_fit(&xs, &curve.entropies);
    Ok(DimensionEstimate {
        value: slope,
        standard_error: slope_stderr,
        r2,
        radii_used: curve.radii,
        sample_count: measure.atom_count().min(budget),
    })
}

/// Local dimension at x: slope of log nu(B(x, r)) against log r over the
/// radii with unsaturated positive mass. A neighborhood whose every positive
/// ball is saturated (all mass inside every ball) has local dimension zero.
pub fn local_dimension(
    measure: &DiscreteMeasure,
    x: &[f64],
    radii: &[f64],
) -> Result<DimensionEstimate> {
    let total = measure.total_mass();
    let mut usable_r = Vec::new();
    let mut usable_mass = Vec::new();
    let mut positive = 0usize;
    let mut saturated = 0usize;
    let mut r_min = f64::INFINITY;
    for &r in radii {
        r_min = r_min.min(r);
        let b = measure.ball_mass(x, r);
        if b <= 0.0 {
            continue;
        }
        positive += 1;
        if b >= total * (1.0 - SATURATION_MARGIN) {
            saturated += 1;
            continue;
        }
        usable_r.push(r);
        usable_mass.push(b);
    }
    if positive == 0 {
        return Err(Error::EmptyNeighborhood { r_min });
    }
    if usable_r.len() < 4 {
        if saturated == positive && positive >= 1 {
            // Point-mass-like neighborhood: constant ball mass, slope zero.
            return Ok(DimensionEstimate {
                value: 0.0,
                standard_error: 0.0,
                r2: 1.0,
                radii_used: radii.to_vec(),
                sample_count: 1,
            });
        }
        return Err(Error::InsufficientRange {
            got: usable_r.len(),
            need: 4,
        });
    }
    let xs: Vec<f64> = usable_r.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = usable_mass.iter().map(|b| b.ln()).collect();
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
        radii_used: usable_r,
        sample_count: 1,
    })
}

/// Distribution of local dimensions over mass-sampled support points.
#[derive(Debug, Clone)]
pub struct ExactnessReport {
    pub mean: f64,
    pub stderr: f64,
    /// Interquartile range of the sampled local dimensions.
    pub iqr: f64,
    /// True when the spread is below `EXACTNESS_IQR_THRESHOLD`.
    pub exact: bool,
    /// (bin left edge, count) histogram of the sampled values.
    pub histogram: Vec<(f64, usize)>,
    pub values: Vec<f64>,
    /// Sample points without a usable fit.
    pub skipped: usize,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Sample local dimensions at `samples` mass-weighted support points and
/// summarize their spread. The exact flag reports whether the interquartile
/// range is below the exact-dimensionality threshold.
pub fn exactness_diagnostic(
    measure: &DiscreteMeasure,
    samples: usize,
    radii: &[f64],
    seed: u64,
) -> Result<ExactnessReport> {
    if radii.len() < 4 {
        return Err(Error::InsufficientRange {
            got: radii.len(),
            need: 4,
        });
    }
    if let Some(&r_min) = radii.iter().min_by(|a, b| a.total_cmp(b)) {
        measure.ensure_index(r_min);
    }
    let mut rng = crate::rng::stream(seed, "exactness", 0);
    let ids: Vec<usize> = (0..samples)
        .map(|_| measure.sample_atom(&mut rng))
        .collect();
    let fits: Vec<Option<f64>> = ids
        .into_par_iter()
        .map(|i| {
            local_dimension(measure, measure.point(i), radii)
                .ok()
                .map(|e| e.value)
        })
        .collect();
    let values: Vec<f64> = fits.iter().flatten().copied().collect();
    let skipped = fits.len() - values.len();
    if values.is_empty() {
        return Err(Error::InsufficientRange { got: 0, need: 1 });
    }
    let (mean, stderr) = fit::mean_stderr(&values);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let bins = 24usize;
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut histogram: Vec<(f64, usize)> =
        (0..bins).map(|b| (lo + b as f64 * width, 0usize)).collect();
    for &v in &values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        histogram[b].1 += 1;
    }
    Ok(ExactnessReport {
        mean,
        stderr,
        iqr,
        exact: iqr < EXACTNESS_IQR_THRESHOLD,
        histogram,
        values,
        skipped,
    })
}
