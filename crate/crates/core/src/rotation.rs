//! Rotation-group classification, Haar sampling, and stopping alphabets.
//!
//! The rotations of the system generate a subgroup of SO(d); projection
//! theory needs to know whether its closure is finite or all of SO(d).
//! Planar groups are classified exactly through the rationality of the
//! generator angles over 2*pi; higher dimensions enumerate the semigroup
//! closure and fall back to a mesh-coverage test when it does not stabilize.

use crate::error::{Error, Result};
use crate::ifs::{IfsSpec, Rotation, Word};
use crate::rng;
use nalgebra::DMatrix;
use rand::Rng;
use std::collections::HashMap;

/// Identification tolerance for group elements (Frobenius distance).
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;
/// Cap on enumerated group elements before giving up on finiteness.
pub const DEFAULT_GROUP_CAP: usize = 100_000;
/// Largest denominator probed when testing whether an angle is a rational
/// multiple of 2*pi.
const MAX_RATIONAL_DENOMINATOR: i128 = 1_000_000;
/// Mesh used to call an overflowing closure dense: this many Haar points must
/// each lie within `DENSE_MESH_TOL` of an enumerated element.
const DENSE_MESH_POINTS: usize = 64;
const DENSE_MESH_TOL: f64 = 0.3;

/// Outcome of the classification.
#[derive(Debug, Clone)]
pub enum Classification {
    /// The closure is the listed finite set of rotations.
    Finite(Vec<Rotation>),
    /// The closure is (numerically indistinguishable from) all of SO(d).
    DenseInSo(usize),
    /// Enumeration overflowed without covering SO(d); callers must assert
    /// density explicitly to use Haar-based estimators.
    Undetermined,
}

#[derive(Debug, Clone)]
pub struct RotationGroupInfo {
    pub generators: Vec<Rotation>,
    pub classification: Classification,
    pub tol: f64,
}

impl RotationGroupInfo {
    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.classification, Classification::Finite(_))
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.classification, Classification::DenseInSo(_))
    }
}

/// Best rational approximation test: returns the denominator q if x is
/// within ~1e-9 of a rational p/q with q <= MAX_RATIONAL_DENOMINATOR, in the
/// relative sense used by continued-fraction expansion (the expansion
/// terminates), otherwise None.
fn rational_denominator(x: f64) -> Option<i128> {
    let mut frac = x - x.floor();
    let (mut q_prev, mut q_cur): (i128, i128) = (0, 1);
    for _ in 0..64 {
        if frac < 1e-9 {
            return Some(q_cur);
        }
        let y = 1.0 / frac;
        let a = y.floor();
        frac = y - a;
        let q_next = (a as i128).saturating_mul(q_cur).saturating_add(q_prev);
        if q_next > MAX_RATIONAL_DENOMINATOR {
            return None;
        }
        q_prev = q_cur;
        q_cur = q_next;
    }
    None
}

/// Frobenius distance between two matrices.
fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// A set of rotations with tolerance-based identification. Elements are
/// bucketed by rounded trace so lookups stay cheap; neighbouring buckets are
/// probed to keep identification robust at bucket boundaries.
struct ElementSet {
    tol: f64,
    elements: Vec<DMatrix<f64>>,
    buckets: HashMap<i64, Vec<usize>>,
}

impl ElementSet {
    fn new(tol: f64) -> Self {
        ElementSet {
            tol,
            elements: Vec::new(),
            buckets: HashMap::new(),
        }
    }

    fn key(&self, m: &DMatrix<f64>) -> i64 {
        (m.trace() / 1e-6).round() as i64
    }

    fn contains(&self, m: &DMatrix<f64>) -> bool {
        let key = self.key(m);
        for k in key - 1..=key + 1 {
            if let Some(bucket) = self.buckets.get(&k) {
                for &idx in bucket {
                    if frobenius_distance(&self.elements[idx], m) < self.tol {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, m: DMatrix<f64>) {
        let key = self.key(&m);
        let idx = self.elements.len();
        self.elements.push(m);
        self.buckets.entry(key).or_default().push(idx);
    }

    fn len(&self) -> usize {
        self.elements.len()
    }
}

/// Classify the closure of the group generated by `generators` inside SO(d).
///
/// Two elements are identified when their distance is below `tol`.
/// Enumeration stops at `cap` elements; an overflowing closure is declared
/// dense only when it is `DENSE_MESH_TOL`-dense against a fixed Haar mesh,
/// and `Undetermined` otherwise.
pub fn classify_group(generators: &[Rotation], tol: f64, cap: usize) -> Result<RotationGroupInfo> {
    if generators.is_empty() {
        return Err(Error::ConfigInvalid {
            field: "generators".into(),
            reason: "need at least one rotation".into(),
        });
    }
    let dim = generators[0].dim();
    for (i, g) in generators.iter().enumerate() {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "generator {i} acts on R^{}, generator 0 on R^{dim}",
                g.dim()
            )));
        }
    }

    if dim == 2 {
        for g in generators {
            let angle = g.angle().expect("planar rotations carry their angle");
            let turns = angle / std::f64::consts::TAU;
            if rational_denominator(turns).is_none() {
                return Ok(RotationGroupInfo {
                    generators: generators.to_vec(),
                    classification: Classification::DenseInSo(2),
                    tol,
                });
            }
        }
    }

    // Semigroup closure by breadth-first products; for a subgroup of the
    // compact group SO(d) this coincides with the generated group.
    let mut set = ElementSet::new(tol);
    let mut queue: Vec<DMatrix<f64>> = Vec::new();
    set.insert(DMatrix::identity(dim, dim));
    for g in generators {
        if !set.contains(g.matrix()) {
            set.insert(g.matrix().clone());
            queue.push(g.matrix().clone());
        }
    }
    let mut overflow = false;
    while let Some(m) = queue.pop() {
        for g in generators {
            let prod = &m * g.matrix();
            if !set.contains(&prod) {
                if set.len() >= cap {
                    overflow = true;
                    break;
                }
                set.insert(prod.clone());
                queue.push(prod);
            }
        }
        if overflow {
            break;
        }
    }

    let classification = if !overflow {
        let elements = set
            .elements
            .iter()
            .map(|m| Rotation::from_matrix(m.clone()))
            .collect::<Result<Vec<_>>>()?;
        Classification::Finite(elements)
    } else {
        // Coverage test against a fixed Haar mesh.
        let mesh = haar_sample(dim, DENSE_MESH_POINTS, 0x6d657368)?;
        let covered = mesh.iter().all(|probe| {
            set.elements
                .iter()
                .any(|e| frobenius_distance(e, probe.matrix()) < DENSE_MESH_TOL)
        });
        if covered {
            Classification::DenseInSo(dim)
        } else {
            Classification::Undetermined
        }
    };

    Ok(RotationGroupInfo {
        generators: generators.to_vec(),
        classification,
        tol,
    })
}

/// Classify the rotation parts of a system's maps.
pub fn classify_ifs_group(ifs: &IfsSpec, tol: f64, cap: usize) -> Result<RotationGroupInfo> {
    let gens: Vec<Rotation> = ifs.maps().iter().map(|m| m.rotation().clone()).collect();
    classify_group(&gens, tol, cap)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one value per call keeps the draw count per matrix fixed.
    loop {
        let u1: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Draw `count` Haar-distributed rotations. Each sample is a pure function of
/// (seed, index), so batches may be evaluated in parallel or extended later
/// without disturbing earlier samples.
pub fn haar_sample(dim: usize, count: usize, seed: u64) -> Result<Vec<Rotation>> {
    if dim == 0 {
        return Err(Error::ConfigInvalid {
            field: "dim".into(),
            reason: "dimension must be positive".into(),
        });
    }
    (0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, "haar", i as u64);
            Ok(haar_one(dim, &mut rng))
        })
        .collect()
}

fn haar_one<R: Rng>(dim: usize, rng: &mut R) -> Rotation {
    match dim {
        1 => Rotation::identity(1),
        2 => Rotation::from_angle(rng.random::<f64>() * std::f64::consts::TAU),
        d => {
            // QR of a Gaussian matrix, with the R-diagonal sign correction
            // that makes Q exactly Haar on O(d); a final row negation lands
            // the determinant on +1 without breaking invariance.
            let gauss = DMatrix::from_fn(d, d, |_, _| standard_normal(rng));
            let qr = gauss.qr();
            let mut q = qr.q();
            let r = qr.r();
            for j in 0..d {
                if r[(j, j)] < 0.0 {
                    for i in 0..d {
                        q[(i, j)] = -q[(i, j)];
                    }
                }
            }
            if q.determinant() < 0.0 {
                for j in 0..d {
                    q[(0, j)] = -q[(0, j)];
                }
            }
            Rotation::from_matrix(q).expect("sign-corrected Q factor is a rotation")
        }
    }
}

/// Draw uniform elements of a finite rotation group.
pub fn haar_on_finite(info: &RotationGroupInfo, count: usize, seed: u64) -> Result<Vec<Rotation>> {
    let elements = match &info.classification {
        Classification::Finite(els) => els,
        other => {
            return Err(Error::WrongClassification(format!(
                "uniform sampling on a finite group requested, classification is {other:?}"
            )))
        }
    };
    Ok((0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, "haar-finite", i as u64);
            elements[rng.random_range(0..elements.len())].clone()
        })
        .collect())
}

/// The stopping alphabet at scale rho^q: all words whose ratio first drops
/// to rho^q or below. A prefix-free, complete cover of the coding space with
/// c * rho^q < r_w <= rho^q for every member w.
#[derive(Debug, Clone)]
pub struct StoppingAlphabet {
    pub q: u32,
    /// The scale rho^q the ratios were stopped at.
    pub threshold: f64,
    /// Members in lexicographic order.
    pub words: Vec<Word>,
}

pub fn stopping_alphabet(ifs: &IfsSpec, q: u32, cap: usize) -> Result<StoppingAlphabet> {
    let rho = ifs.rho();
    let mut threshold = 1.0;
    for _ in 0..q {
        threshold *= rho;
    }
    // Slack keeps equal-ratio systems stable: a product that equals rho^q up
    // to roundoff must stop rather than descend one level too deep.
    let stop_at = threshold * (1.0 + 1e-12);
    let mut words = Vec::new();
    let mut word = Word::empty();
    descend(ifs, &mut word, 1.0, stop_at, cap, &mut words)?;
    Ok(StoppingAlphabet {
        q,
        threshold,
        words,
    })
}

fn descend(
    ifs: &IfsSpec,
    word: &mut Word,
    ratio: f64,
    stop_at: f64,
    cap: usize,
    out: &mut Vec<Word>,
) -> Result<()> {
    if ratio <= stop_at {
        if out.len() >= cap {
            return Err(Error::CapExceeded {
                needed: out.len() as u128 + 1,
                cap,
            });
        }
        out.push(word.clone());
        return Ok(());
    }
    for s in 0..ifs.alphabet_size() as u8 {
        word.push(s);
        descend(
            ifs,
            word,
            ratio * ifs.map(s as usize).ratio(),
            stop_at,
            cap,
            out,
        )?;
        word.pop();
    }
    Ok(())
}
