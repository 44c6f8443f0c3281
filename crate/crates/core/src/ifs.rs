//! Iterated function systems of contracting similarities and their symbolic
//! coding.
//!
//! A system consists of maps f_i(x) = r_i O_i x + t_i on R^d with ratios
//! r_i in (0,1) and rotations O_i in SO(d). Finite words over the alphabet
//! {0, .., m-1} code cylinders of the attractor: the word w = w_1 .. w_n
//! denotes the composition f_{w_1} o .. o f_{w_n}. All geometry downstream
//! (atom clouds, ball radii, stopping alphabets) is expressed through the
//! contraction ratio r_w of a word and the ball bound R = max|t_i| / (1-rho),
//! which contains the attractor.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Default cap on enumerated atoms (2^26).
pub const DEFAULT_ATOM_CAP: usize = 1 << 26;

/// A finite word of map indices, 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn from_symbols(symbols: impl Into<Vec<u8>>) -> Self {
        Word(symbols.into())
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, symbol: u8) {
        self.0.push(symbol);
    }

    pub fn pop(&mut self) -> Option<u8> {
        self.0.pop()
    }

    pub fn child(&self, symbol: u8) -> Word {
        let mut s = self.0.clone();
        s.push(symbol);
        Word(s)
    }

    /// The first n symbols.
    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn first(&self) -> Option<u8> {
        self.0.first().copied()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ε");
        }
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// An element of SO(d). Planar rotations additionally carry their angle so
/// that long compositions stay exact instead of accumulating matrix roundoff.
#[derive(Debug, Clone)]
pub struct Rotation {
    matrix: DMatrix<f64>,
    angle: Option<f64>,
}

/// Tolerance for orthogonality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        Rotation {
            matrix: DMatrix::identity(dim, dim),
            angle: if dim == 2 { Some(0.0) } else { None },
        }
    }

    /// The planar rotation by `theta` radians.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let matrix = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        Rotation {
            matrix,
            angle: Some(theta),
        }
    }

    /// Build a rotation from a row-major entry slice, validating as in
    /// [`Rotation::from_matrix`]. Convenient for matrices read from config
    /// files, where nested arrays flatten naturally.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::NotARotation(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Rotation::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// Validate a candidate matrix: square, orthonormal and of determinant +1
    /// within `ROTATION_TOL`. Planar matrices get their angle cached.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let (nr, nc) = matrix.shape();
        if nr != nc || nr == 0 {
            return Err(Error::NotARotation(format!("matrix is {nr}x{nc}")));
        }
        let gram = matrix.transpose() * &matrix;
        let mut worst = 0.0f64;
        for i in 0..nr {
            for j in 0..nr {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        if worst > ROTATION_TOL {
            return Err(Error::NotARotation(format!(
                "columns not orthonormal (deviation {worst:.3e})"
            )));
        }
        let det = matrix.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotARotation(format!("determinant {det} != +1")));
        }
        let angle = if nr == 2 {
            Some(matrix[(1, 0)].atan2(matrix[(0, 0)]))
        } else {
            None
        };
        Ok(Rotation { matrix, angle })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Cached planar angle, if this is a 2x2 rotation.
    pub fn angle(&self) -> Option<f64> {
        self.angle
    }

    /// self followed after other: the product self * other. Planar products
    /// are composed by angle addition.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        if let (Some(a), Some(b)) = (self.angle, other.angle) {
            return Rotation::from_angle(a + b);
        }
        Rotation {
            matrix: &self.matrix * &other.matrix,
            angle: None,
        }
    }

    /// The inverse rotation (transpose).
    pub fn inverse(&self) -> Rotation {
        Rotation {
            matrix: self.matrix.transpose(),
            angle: self.angle.map(|a| -a),
        }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.matrix[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }
}

/// A contracting similarity x -> ratio * rotation * x + translation.
#[derive(Debug, Clone)]
pub struct Similarity {
    ratio: f64,
    rotation: Rotation,
    translation: DVector<f64>,
}

impl Similarity {
    pub fn new(ratio: f64, rotation: Rotation, translation: Vec<f64>) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::ConfigInvalid {
                field: "ratio".into(),
                reason: format!("{ratio} is not a positive finite number"),
            });
        }
        if translation.len() != rotation.dim() {
            return Err(Error::DimensionMismatch(format!(
                "translation has length {}, rotation acts on R^{}",
                translation.len(),
                rotation.dim()
            )));
        }
        Ok(Similarity {
            ratio,
            rotation,
            translation: DVector::from_vec(translation),
        })
    }

    /// Shorthand for a map without rotation.
    pub fn homothety(ratio: f64, translation: Vec<f64>) -> Result<Self> {
        let dim = translation.len();
        Similarity::new(ratio, Rotation::identity(dim), translation)
    }

    pub fn identity(dim: usize) -> Self {
        Similarity {
            ratio: 1.0,
            rotation: Rotation::identity(dim),
            translation: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.rotation.dim()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn translation(&self) -> &[f64] {
        self.translation.as_slice()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        for i in 0..d {
            let mut acc = self.translation[i];
            for j in 0..d {
                acc += self.ratio * self.rotation.matrix[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// self o inner, the map x -> self(inner(x)).
    pub fn compose(&self, inner: &Similarity) -> Similarity {
        let translation = self.apply(inner.translation.as_slice());
        Similarity {
            ratio: self.ratio * inner.ratio,
            rotation: self.rotation.compose(&inner.rotation),
            translation: DVector::from_vec(translation),
        }
    }

    /// The unique fixed point of a strict contraction, solving (I - rO)x = t.
    pub fn fixed_point(&self) -> Vec<f64> {
        assert!(
            self.ratio < 1.0,
            "fixed point is only defined for strict contractions"
        );
        let d = self.dim();
        let a = DMatrix::identity(d, d) - self.rotation.matrix() * self.ratio;
        let x = a
            .lu()
            .solve(&self.translation)
            .expect("I - rO is invertible for r < 1");
        x.as_slice().to_vec()
    }
}

/// A validated iterated function system of contracting similarities.
#[derive(Debug, Clone)]
pub struct IfsSpec {
    dim: usize,
    maps: Vec<Similarity>,
    rho: f64,
    min_ratio: f64,
    radius: f64,
}

impl IfsSpec {
    /// Validate and freeze a system. Requires at least two maps, all on the
    /// same space, with ratios strictly inside (0, 1). No separation is
    /// assumed: overlapping and even coincident maps are legal.
    pub fn new(maps: Vec<Similarity>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::ConfigInvalid {
                field: "maps".into(),
                reason: format!("need at least 2 maps, got {}", maps.len()),
            });
        }
        if maps.len() > u8::MAX as usize + 1 {
            return Err(Error::ConfigInvalid {
                field: "maps".into(),
                reason: format!(
                    "alphabet of {} symbols exceeds the supported 256",
                    maps.len()
                ),
            });
        }
        let dim = maps[0].dim();
        if dim == 0 {
            return Err(Error::ConfigInvalid {
                field: "maps[0]".into(),
                reason: "ambient dimension must be positive".into(),
            });
        }
        for (i, map) in maps.iter().enumerate() {
            if map.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "map {i} acts on R^{}, map 0 on R^{dim}",
                    map.dim()
                )));
            }
            if map.ratio() >= 1.0 {
                return Err(Error::ConfigInvalid {
                    field: format!("maps[{i}].ratio"),
                    reason: format!("{} is not a strict contraction", map.ratio()),
                });
            }
        }
        let rho = maps.iter().map(|m| m.ratio()).fold(0.0, f64::max);
        let min_ratio = maps.iter().map(|m| m.ratio()).fold(1.0, f64::min);
        let max_t = maps
            .iter()
            .map(|m| m.translation.norm())
            .fold(0.0, f64::max);
        let radius = max_t / (1.0 - rho);
        Ok(IfsSpec {
            dim,
            maps,
            rho,
            min_ratio,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Alphabet size m.
    pub fn alphabet_size(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[Similarity] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> &Similarity {
        &self.maps[i]
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.ratio()).collect()
    }

    /// (min ratio, max ratio) = (c, rho).
    pub fn ratio_bounds(&self) -> (f64, f64) {
        (self.min_ratio, self.rho)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Ball bound R = max |t_i| / (1 - rho); the attractor lies in B(0, R)
    /// and the cylinder of a word w has diameter at most 2 R r_w.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn validate_word(&self, w: &Word) -> Result<()> {
        for (position, &symbol) in w.symbols().iter().enumerate() {
            if symbol as usize >= self.maps.len() {
                return Err(Error::InvalidWord {
                    symbol: symbol as usize,
                    position,
                    alphabet: self.maps.len(),
                });
            }
        }
        Ok(())
    }

    /// The composed map f_{w_1} o .. o f_{w_n}, the identity for the empty
    /// word. Folds left to right, so the contraction ratio is the running
    /// product of the per-symbol ratios.
    pub fn compose(&self, w: &Word) -> Result<Similarity> {
        self.validate_word(w)?;
        let mut acc = Similarity::identity(self.dim);
        for &s in w.symbols() {
            acc = acc.compose(&self.maps[s as usize]);
        }
        Ok(acc)
    }

    /// Contraction ratio r_w of a word, without building the matrices.
    pub fn word_ratio(&self, w: &Word) -> Result<f64> {
        self.validate_word(w)?;
        Ok(w.symbols()
            .iter()
            .fold(1.0, |r, &s| r * self.maps[s as usize].ratio()))
    }

    /// Fixed point of the first map, the default anchor for cylinder points.
    pub fn default_anchor(&self) -> Vec<f64> {
        self.maps[0].fixed_point()
    }

    fn check_anchor(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "anchor has length {}, system acts on R^{}",
                x0.len(),
                self.dim
            )));
        }
        let norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.radius * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::ConfigInvalid {
                field: "x0".into(),
                reason: format!("|x0| = {norm} exceeds the ball bound R = {}", self.radius),
            });
        }
        Ok(())
    }

    /// The point f_w(x0), which lies within 2 R r_w of every point of the
    /// cylinder coded by w. `x0` defaults to the fixed point of the first map.
    pub fn cylinder_point(&self, w: &Word, x0: Option<&[f64]>) -> Result<Vec<f64>> {
        let anchor = match x0 {
            Some(p) => p.to_vec(),
            None => self.default_anchor(),
        };
        self.check_anchor(&anchor)?;
        Ok(self.compose(w)?.apply(&anchor))
    }

    /// All level-n cylinder points (w, f_w(x0)) in lexicographic word order.
    /// Fails with `CapExceeded` when m^n overruns `cap`.
    pub fn attractor_cloud(
        &self,
        n: usize,
        x0: Option<&[f64]>,
        cap: usize,
    ) -> Result<Vec<(Word, Vec<f64>)>> {
        let m = self.maps.len() as u128;
        let needed = m.checked_pow(n as u32).unwrap_or(u128::MAX);
        if needed > cap as u128 {
            return Err(Error::CapExceeded { needed, cap });
        }
        let anchor = match x0 {
            Some(p) => p.to_vec(),
            None => self.default_anchor(),
        };
        self.check_anchor(&anchor)?;
        let mut out = Vec::with_capacity(needed as usize);
        let mut word = Word::empty();
        self.cloud_rec(
            &Similarity::identity(self.dim),
            &mut word,
            n,
            &anchor,
            &mut out,
        );
        Ok(out)
    }

    fn cloud_rec(
        &self,
        current: &Similarity,
        word: &mut Word,
        remaining: usize,
        anchor: &[f64],
        out: &mut Vec<(Word, Vec<f64>)>,
    ) {
        if remaining == 0 {
            out.push((word.clone(), current.apply(anchor)));
            return;
        }
        for s in 0..self.maps.len() as u8 {
            let next = current.compose(&self.maps[s as usize]);
            word.push(s);
            self.cloud_rec(&next, word, remaining - 1, anchor, out);
            word.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn cantor() -> IfsSpec {
        IfsSpec::new(vec![
            Similarity::homothety(1.0 / 3.0, vec![0.0]).unwrap(),
            Similarity::homothety(1.0 / 3.0, vec![2.0 / 3.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn word_display_and_prefix() {
        let w = Word::from_symbols(vec![0, 2, 1]);
        assert_eq!(w.to_string(), "0.2.1");
        assert_eq!(Word::empty().to_string(), "ε");
        assert_eq!(w.prefix(2), Word::from_symbols(vec![0, 2]));
        assert_eq!(w.prefix(9), w);
        assert_eq!(w.first(), Some(0));
    }

    #[test]
    fn cantor_compose_matches_hand_expansion() {
        // f_0(f_1(x)) = (x/3 + 2/3)/3 = x/9 + 2/9.
        let ifs = cantor();
        let f = ifs.compose(&Word::from_symbols(vec![0, 1])).unwrap();
        assert_relative_eq!(f.ratio(), 1.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(f.translation()[0], 2.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(
            f.apply(&[1.0])[0],
            1.0 / 9.0 + 2.0 / 9.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn empty_word_composes_to_identity() {
        let ifs = cantor();
        let f = ifs.compose(&Word::empty()).unwrap();
        assert_eq!(f.ratio(), 1.0);
        assert_eq!(f.apply(&[0.37])[0], 0.37);
    }

    #[test]
    fn planar_composition_multiplies_matrices_and_adds_angles() {
        // Oracle: multiply the 2x2 matrices by hand.
        let a = 0.7;
        let b = -1.3;
        let fa = Similarity::new(0.5, Rotation::from_angle(a), vec![0.1, 0.2]).unwrap();
        let fb = Similarity::new(0.4, Rotation::from_angle(b), vec![-0.3, 0.05]).unwrap();
        let comp = fa.compose(&fb);
        assert_relative_eq!(comp.ratio(), 0.2, max_relative = 1e-15);
        assert_eq!(comp.rotation().angle(), Some(a + b));
        let ma = [[a.cos(), -a.sin()], [a.sin(), a.cos()]];
        let mb = [[b.cos(), -b.sin()], [b.sin(), b.cos()]];
        for i in 0..2 {
            for j in 0..2 {
                let hand = ma[i][0] * mb[0][j] + ma[i][1] * mb[1][j];
                assert_relative_eq!(comp.rotation().matrix()[(i, j)], hand, epsilon = 1e-12);
            }
        }
        // Translation: fa(t_b).
        let tb = fa.apply(&[-0.3, 0.05]);
        assert_relative_eq!(comp.translation()[0], tb[0], max_relative = 1e-14);
        assert_relative_eq!(comp.translation()[1], tb[1], max_relative = 1e-14);
    }

    #[test]
    fn long_planar_composition_keeps_exact_angle() {
        let rot = Similarity::new(0.5, Rotation::from_angle(1.0), vec![0.0, 0.0]).unwrap();
        let mut acc = Similarity::identity(2);
        for _ in 0..20 {
            acc = acc.compose(&rot);
        }
        assert_eq!(acc.rotation().angle(), Some(20.0));
        let expected = Rotation::from_angle(20.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(acc.rotation().matrix()[(i, j)], expected.matrix()[(i, j)]);
            }
        }
    }

    #[test]
    fn cylinder_point_of_cantor() {
        let ifs = cantor();
        let p = ifs
            .cylinder_point(&Word::from_symbols(vec![1, 0]), Some(&[0.0]))
            .unwrap();
        assert_relative_eq!(p[0], 2.0 / 3.0, max_relative = 1e-15);
        // Default anchor is the fixed point of f_0, i.e. 0.
        assert_eq!(ifs.default_anchor(), vec![0.0]);
        let q = ifs
            .cylinder_point(&Word::from_symbols(vec![1, 0]), None)
            .unwrap();
        assert_eq!(q[0], p[0]);
    }

    #[test]
    fn cantor_level_two_cloud() {
        let ifs = cantor();
        let cloud = ifs.attractor_cloud(2, None, DEFAULT_ATOM_CAP).unwrap();
        let points: Vec<f64> = cloud.iter().map(|(_, p)| p[0]).collect();
        let expected = [0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0];
        assert_eq!(points.len(), 4);
        for (got, want) in points.iter().zip(expected) {
            assert_relative_eq!(got, &want, epsilon = 1e-15);
        }
        assert_eq!(cloud[2].0, Word::from_symbols(vec![1, 0]));
    }

    #[test]
    fn ratio_bounds_and_radius() {
        let ifs = IfsSpec::new(vec![
            Similarity::homothety(0.5, vec![0.0]).unwrap(),
            Similarity::homothety(0.25, vec![0.75]).unwrap(),
        ])
        .unwrap();
        assert_eq!(ifs.ratio_bounds(), (0.25, 0.5));
        assert_relative_eq!(ifs.radius(), 0.75 / 0.5, max_relative = 1e-15);
        // Cantor: R = (2/3) / (2/3) = 1.
        assert_relative_eq!(cantor().radius(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn invalid_word_reports_position_and_symbol() {
        let ifs = cantor();
        let err = ifs.compose(&Word::from_symbols(vec![0, 5])).unwrap_err();
        match err {
            Error::InvalidWord {
                symbol,
                position,
                alphabet,
            } => {
                assert_eq!((symbol, position, alphabet), (5, 1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn cloud_cap_is_enforced() {
        let ifs = cantor();
        let err = ifs.attractor_cloud(4, None, 8).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { needed: 16, cap: 8 }));
    }

    #[test]
    fn cylinder_diameter_bound() {
        // Every extension of w stays within 2 R r_w of f_w(x0); with the
        // anchor at 0 the sharper R r_w bound holds for the Cantor system.
        let ifs = cantor();
        let r = ifs.radius();
        for (w, extensions) in [
            (vec![0u8], vec![vec![0u8, 1, 1, 0], vec![0, 0, 0, 0]]),
            (vec![1, 1], vec![vec![1u8, 1, 0, 1], vec![1, 1, 1, 1]]),
        ] {
            let word = Word::from_symbols(w);
            let base = ifs.cylinder_point(&word, None).unwrap();
            let rw = ifs.word_ratio(&word).unwrap();
            for ext in extensions {
                let p = ifs.cylinder_point(&Word::from_symbols(ext), None).unwrap();
                let dist = (p[0] - base[0]).abs();
                assert!(
                    dist <= r * rw * (1.0 + 1e-12),
                    "dist {dist} > R r_w {}",
                    r * rw
                );
            }
        }
    }

    #[test]
    fn planar_diameter_bound_with_rotations() {
        let ifs = IfsSpec::new(vec![
            Similarity::new(0.4, Rotation::from_angle(1.0), vec![1.0, 0.0]).unwrap(),
            Similarity::new(0.35, Rotation::from_angle(-0.5), vec![-0.5, 0.8]).unwrap(),
        ])
        .unwrap();
        let r = ifs.radius();
        let w = Word::from_symbols(vec![0, 1]);
        let rw = ifs.word_ratio(&w).unwrap();
        let base = ifs.cylinder_point(&w, None).unwrap();
        for ext in [
            vec![0u8, 1, 0, 1, 1],
            vec![0, 1, 1, 1, 0],
            vec![0, 1, 0, 0, 0],
        ] {
            let p = ifs.cylinder_point(&Word::from_symbols(ext), None).unwrap();
            let dist = ((p[0] - base[0]).powi(2) + (p[1] - base[1]).powi(2)).sqrt();
            assert!(
                dist <= 2.0 * r * rw * (1.0 + 1e-12),
                "dist {dist} > 2 R r_w {}",
                2.0 * r * rw
            );
        }
    }

    #[test]
    fn fixed_point_of_affine_contraction() {
        let f = Similarity::homothety(0.5, vec![0.5]).unwrap();
        assert_relative_eq!(f.fixed_point()[0], 1.0, max_relative = 1e-14);
        let g = Similarity::new(
            0.5,
            Rotation::from_angle(std::f64::consts::FRAC_PI_2),
            vec![1.0, 0.0],
        )
        .unwrap();
        let p = g.fixed_point();
        let image = g.apply(&p);
        assert_relative_eq!(image[0], p[0], epsilon = 1e-13);
        assert_relative_eq!(image[1], p[1], epsilon = 1e-13);
    }

    #[test]
    fn rotation_validation_rejects_non_rotations() {
        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            Rotation::from_matrix(shear),
            Err(Error::NotARotation(_))
        ));
        let reflection = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            Rotation::from_matrix(reflection),
            Err(Error::NotARotation(_))
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let rot = Rotation::from_matrix(ok).unwrap();
        assert_relative_eq!(
            rot.angle().unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn spec_validation_rejects_degenerate_systems() {
        let single = IfsSpec::new(vec![Similarity::homothety(0.5, vec![0.0]).unwrap()]);
        assert!(single.is_err());
        let expanding = IfsSpec::new(vec![
            Similarity::homothety(0.5, vec![0.0]).unwrap(),
            Similarity::homothety(1.0, vec![1.0]).unwrap(),
        ]);
        assert!(expanding.is_err());
        let mixed = IfsSpec::new(vec![
            Similarity::homothety(0.5, vec![0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.0, 1.0]).unwrap(),
        ]);
        assert!(matches!(mixed, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn coincident_maps_are_legal() {
        // Exact overlaps are part of the domain, not an input error.
        let ifs = IfsSpec::new(vec![
            Similarity::homothety(1.0 / 3.0, vec![0.0]).unwrap(),
            Similarity::homothety(1.0 / 3.0, vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(ifs.radius(), 0.0);
        let cloud = ifs.attractor_cloud(3, None, 64).unwrap();
        assert_eq!(cloud.len(), 8);
        for (_, p) in cloud {
            assert_eq!(p[0], 0.0);
        }
    }
}
