//! Finite-dimensional model spaces: real and complex `l_p^d`, their finite
//! `l_inf`-sums `l_inf^n(X)`, duality maps and sphere sampling.
//!
//! Scalars are always stored as [`C64`]; a real-field space simply keeps
//! every imaginary part at zero. Functionals act bilinearly,
//! `f(x) = sum_k f_k x_k`, without conjugation, so the dual of `l_p` is `l_q`
//! with the same coordinate convention.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn is_complex(self) -> bool {
        matches!(self, Field::Complex)
    }

    /// Real dimension of one scalar.
    pub fn real_width(self) -> usize {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }
}

/// `l_p^dim` over a scalar field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceDesc {
    pub field: Field,
    #[serde(serialize_with = "ser_p", deserialize_with = "de_p")]
    pub p: f64,
    pub dim: usize,
}

fn ser_p<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

fn de_p<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum PValue {
        Num(f64),
        Text(String),
    }
    match PValue::deserialize(d)? {
        PValue::Num(v) => Ok(v),
        PValue::Text(t) => match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(f64::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("bad exponent `{t}`"))),
        },
    }
}

impl SpaceDesc {
    pub fn new(field: Field, p: f64, dim: usize) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidSpace(format!("exponent p = {p} must be >= 1")));
        }
        if dim == 0 {
            return Err(Error::InvalidSpace("dimension must be positive".into()));
        }
        Ok(SpaceDesc { field, p, dim })
    }

    pub fn real_l(p: f64, dim: usize) -> Self {
        Self::new(Field::Real, p, dim).expect("valid space")
    }

    pub fn complex_l(p: f64, dim: usize) -> Self {
        Self::new(Field::Complex, p, dim).expect("valid space")
    }

    /// Exponent of the dual space.
    pub fn dual_exponent(&self) -> f64 {
        conjugate_exponent(self.p)
    }

    pub fn is_uniformly_convex(&self) -> bool {
        self.p > 1.0 && self.p.is_finite()
    }

    pub fn is_c_uniformly_convex(&self) -> bool {
        match self.field {
            Field::Complex => self.p.is_finite(),
            Field::Real => self.is_uniformly_convex(),
        }
    }

    pub fn is_hilbert(&self) -> bool {
        self.p == 2.0
    }

    /// Every norm on a one-dimensional space is a multiple of the modulus,
    /// so such spaces behave as the scalar field.
    pub fn is_scalar(&self) -> bool {
        self.dim == 1
    }

    pub fn real_dim(&self) -> usize {
        self.dim * self.field.real_width()
    }

    pub fn check(&self, coords: &[C64]) -> Result<()> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: coords.len(),
            });
        }
        Ok(())
    }

    pub fn norm_of(&self, coords: &[C64]) -> f64 {
        lp_norm(coords, self.p)
    }

    pub fn dual_norm_of(&self, coords: &[C64]) -> f64 {
        lp_norm(coords, self.dual_exponent())
    }
}

impl std::fmt::Display for SpaceDesc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let field = match self.field {
            Field::Real => "real",
            Field::Complex => "complex",
        };
        if self.p.is_infinite() {
            write!(f, "{field} l_inf^{}", self.dim)
        } else {
            write!(f, "{field} l_{}^{}", self.p, self.dim)
        }
    }
}

/// `l_inf^blocks(base)`, the finite truncation standing in for `c_0(base)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumSpaceDesc {
    pub base: SpaceDesc,
    pub blocks: usize,
}

impl SumSpaceDesc {
    pub fn new(base: SpaceDesc, blocks: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::InvalidSpace("block count must be positive".into()));
        }
        Ok(SumSpaceDesc { base, blocks })
    }
}

pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

pub fn lp_norm(coords: &[C64], p: f64) -> f64 {
    if p.is_infinite() {
        coords.iter().map(|z| z.norm()).fold(0.0, f64::max)
    } else if p == 1.0 {
        coords.iter().map(|z| z.norm()).sum()
    } else if p == 2.0 {
        coords.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    } else {
        // scale by the largest modulus to avoid under/overflow
        let m = coords.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * coords
            .iter()
            .map(|z| (z.norm() / m).powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// `sum_k f_k x_k`.
pub fn pair(f: &[C64], x: &[C64]) -> C64 {
    f.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Unit scalar with the argument of `z`; zero maps to zero.
pub fn phase(z: C64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        ZERO
    } else {
        z / r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub space: SpaceDesc,
    pub coords: Vec<C64>,
}

/// A functional on `space`, stored by its coefficients in the dual `l_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub space: SpaceDesc,
    pub coords: Vec<C64>,
}

impl Point {
    pub fn new(space: SpaceDesc, coords: Vec<C64>) -> Result<Self> {
        space.check(&coords)?;
        if coords.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidSpace("non-finite coordinate".into()));
        }
        Ok(Point { space, coords })
    }

    pub fn from_real(space: SpaceDesc, coords: &[f64]) -> Result<Self> {
        Self::new(space, coords.iter().map(|&r| C64::new(r, 0.0)).collect())
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_of(&self.coords)
    }
}

impl DualPoint {
    pub fn new(space: SpaceDesc, coords: Vec<C64>) -> Result<Self> {
        space.check(&coords)?;
        Ok(DualPoint { space, coords })
    }

    pub fn dual_norm(&self) -> f64 {
        self.space.dual_norm_of(&self.coords)
    }

    pub fn apply(&self, x: &Point) -> Result<C64> {
        self.space.check(&x.coords)?;
        Ok(pair(&self.coords, &x.coords))
    }
}

pub fn norm(space: &SpaceDesc, x: &Point) -> Result<f64> {
    space.check(&x.coords)?;
    Ok(space.norm_of(&x.coords))
}

/// The unique unit functional `f` with `f(x) = ||x||`, for smooth points.
///
/// Defined for `p` in `(1, inf)` and for one-dimensional spaces. The `l_1`
/// and `l_inf` norms have non-unique selections; use
/// [`supporting_functional`] where any maximizing functional will do.
pub fn norming_functional(space: &SpaceDesc, x: &Point) -> Result<DualPoint> {
    space.check(&x.coords)?;
    let nx = space.norm_of(&x.coords);
    if nx == 0.0 {
        return Err(Error::NoNormingSelection("zero vector".into()));
    }
    if !space.is_scalar() && !space.is_uniformly_convex() {
        return Err(Error::NoNormingSelection(format!(
            "{space} is not smooth; the norming functional is not unique"
        )));
    }
    Ok(DualPoint {
        space: *space,
        coords: duality_map(&x.coords, space.p, nx),
    })
}

fn duality_map(x: &[C64], p: f64, nx: f64) -> Vec<C64> {
    if x.len() == 1 {
        return vec![x[0].conj() / nx];
    }
    if p == 2.0 {
        return x.iter().map(|z| z.conj() / nx).collect();
    }
    x.iter()
        .map(|z| {
            let r = z.norm();
            if r == 0.0 {
                ZERO
            } else {
                z.conj() / r * (r / nx).powf(p - 1.0)
            }
        })
        .collect()
}

/// Some unit functional attaining its norm at `x`; `None` for `x = 0`.
///
/// Coincides with [`norming_functional`] on smooth spaces. For `l_1` the
/// selection takes the unit phase `1` on zero coordinates; for `l_inf` it
/// concentrates on the first coordinate of maximal modulus.
pub fn supporting_functional(space: &SpaceDesc, x: &[C64]) -> Option<Vec<C64>> {
    let nx = space.norm_of(x);
    if nx == 0.0 {
        return None;
    }
    if x.len() == 1 || space.is_uniformly_convex() {
        return Some(duality_map(x, space.p, nx));
    }
    if space.p == 1.0 {
        Some(
            x.iter()
                .map(|z| if z.norm() == 0.0 { ONE } else { phase(*z).conj() })
                .collect(),
        )
    } else {
        let k = argmax_modulus(x);
        let mut f = vec![ZERO; x.len()];
        f[k] = phase(x[k]).conj();
        Some(f)
    }
}

/// A unit vector `x` of `space` maximizing `Re f(x)`, so that
/// `f(x) = ||f||_*`. `None` when `f = 0`.
pub fn norming_point(space: &SpaceDesc, f: &[C64]) -> Option<Vec<C64>> {
    let q = space.dual_exponent();
    let nf = lp_norm(f, q);
    if nf == 0.0 {
        return None;
    }
    if f.len() == 1 {
        return Some(vec![f[0].conj() / nf]);
    }
    if space.p.is_infinite() {
        return Some(
            f.iter()
                .map(|z| if z.norm() == 0.0 { ONE } else { phase(*z).conj() })
                .collect(),
        );
    }
    if space.p == 1.0 {
        let k = argmax_modulus(f);
        let mut x = vec![ZERO; f.len()];
        x[k] = phase(f[k]).conj();
        return Some(x);
    }
    Some(duality_map(f, q, nf))
}

fn argmax_modulus(x: &[C64]) -> usize {
    let mut best = 0;
    for (k, z) in x.iter().enumerate() {
        if z.norm() > x[best].norm() {
            best = k;
        }
    }
    best
}

pub(crate) fn gaussian_coords<R: rand::Rng>(space: &SpaceDesc, rng: &mut R) -> Vec<C64> {
    (0..space.dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if space.field.is_complex() {
                StandardNormal.sample(rng)
            } else {
                0.0
            };
            C64::new(re, im)
        })
        .collect()
}

pub(crate) fn random_unit<R: rand::Rng>(space: &SpaceDesc, rng: &mut R) -> Vec<C64> {
    loop {
        let v = gaussian_coords(space, rng);
        let n = space.norm_of(&v);
        if n > 1e-300 {
            return v.into_iter().map(|z| z / n).collect();
        }
    }
}

/// Normalized standard Gaussian vectors (real and imaginary parts drawn
/// independently in the complex case).
pub fn sample_sphere(space: &SpaceDesc, seed: u64, count: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point {
            space: *space,
            coords: random_unit(space, &mut rng),
        })
        .collect()
}

/// An element of `l_inf^n(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub sum_space: SumSpaceDesc,
    pub blocks: Vec<Vec<C64>>,
}

impl BlockVector {
    pub fn new(sum_space: SumSpaceDesc, blocks: Vec<Vec<C64>>) -> Result<Self> {
        if blocks.len() != sum_space.blocks {
            return Err(Error::DimensionMismatch {
                expected: sum_space.blocks,
                found: blocks.len(),
            });
        }
        for b in &blocks {
            sum_space.base.check(b)?;
        }
        Ok(BlockVector { sum_space, blocks })
    }

    pub fn zeros(sum_space: SumSpaceDesc) -> Self {
        BlockVector {
            sum_space,
            blocks: vec![vec![ZERO; sum_space.base.dim]; sum_space.blocks],
        }
    }

    pub fn base(&self) -> &SpaceDesc {
        &self.sum_space.base
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_norm(&self, i: usize) -> f64 {
        self.sum_space.base.norm_of(&self.blocks[i])
    }

    pub fn block_norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.block_norm(i)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.block_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Self {
        BlockVector {
            sum_space: self.sum_space,
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    /// `||self - other||` in the sum norm.
    pub fn distance(&self, other: &BlockVector) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let d: Vec<C64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
                self.sum_space.base.norm_of(&d)
            })
            .fold(0.0, f64::max)
    }

    pub fn midpoint(&self, other: &BlockVector) -> Self {
        BlockVector {
            sum_space: self.sum_space,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u + v) * 0.5).collect())
                .collect(),
        }
    }

    /// The sub-vector on the listed blocks, as an element of `l_inf^A(X)`.
    pub fn restrict(&self, members: &[usize]) -> Self {
        BlockVector {
            sum_space: SumSpaceDesc {
                base: self.sum_space.base,
                blocks: members.len(),
            },
            blocks: members.iter().map(|&i| self.blocks[i].clone()).collect(),
        }
    }

    /// Places `self` (indexed by `members`) into `onto`, leaving other blocks.
    pub fn scatter_into(&self, members: &[usize], onto: &BlockVector) -> Self {
        let mut out = onto.clone();
        for (k, &i) in members.iter().enumerate() {
            out.blocks[i] = self.blocks[k].clone();
        }
        out
    }
}

pub fn sum_norm(ss: &SumSpaceDesc, x: &BlockVector) -> Result<f64> {
    if x.blocks.len() != ss.blocks {
        return Err(Error::DimensionMismatch {
            expected: ss.blocks,
            found: x.blocks.len(),
        });
    }
    Ok(x.blocks
        .iter()
        .map(|b| ss.base.norm_of(b))
        .fold(0.0, f64::max))
}

/// JSON wire form shared by points and block vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorJson {
    pub field: Field,
    #[serde(serialize_with = "ser_p", deserialize_with = "de_p")]
    pub p: f64,
    pub dim: usize,
    pub blocks: Vec<Vec<ScalarJson>>,
}

/// `[re, im]` for complex fields, a bare number for real ones.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarJson {
    Real(f64),
    Complex([f64; 2]),
}

impl ScalarJson {
    pub fn encode(field: Field, z: C64) -> Self {
        match field {
            Field::Real => ScalarJson::Real(z.re),
            Field::Complex => ScalarJson::Complex([z.re, z.im]),
        }
    }

    pub fn decode(self) -> C64 {
        match self {
            ScalarJson::Real(r) => C64::new(r, 0.0),
            ScalarJson::Complex([re, im]) => C64::new(re, im),
        }
    }
}

pub(crate) fn encode_row(field: Field, row: &[C64]) -> Vec<ScalarJson> {
    row.iter().map(|&z| ScalarJson::encode(field, z)).collect()
}

pub(crate) fn decode_row(row: &[ScalarJson]) -> Vec<C64> {
    row.iter().map(|s| s.decode()).collect()
}

impl BlockVector {
    pub fn to_json(&self) -> VectorJson {
        let base = self.sum_space.base;
        VectorJson {
            field: base.field,
            p: base.p,
            dim: base.dim,
            blocks: self
                .blocks
                .iter()
                .map(|b| encode_row(base.field, b))
                .collect(),
        }
    }

    pub fn from_json(v: &VectorJson) -> Result<Self> {
        let base = SpaceDesc::new(v.field, v.p, v.dim)?;
        let blocks: Vec<Vec<C64>> = v.blocks.iter().map(|b| decode_row(b)).collect();
        if base.field == Field::Real && blocks.iter().flatten().any(|z| z.im != 0.0) {
            return Err(Error::Serialization(
                "real field vector carries imaginary parts".into(),
            ));
        }
        BlockVector::new(SumSpaceDesc::new(base, blocks.len())?, blocks)
    }
}

impl Point {
    pub fn to_json(&self) -> VectorJson {
        VectorJson {
            field: self.space.field,
            p: self.space.p,
            dim: self.space.dim,
            blocks: vec![encode_row(self.space.field, &self.coords)],
        }
    }

    pub fn from_json(v: &VectorJson) -> Result<Self> {
        let bv = BlockVector::from_json(v)?;
        if bv.blocks.len() != 1 {
            return Err(Error::Serialization(format!(
                "a point has exactly one block, found {}",
                bv.blocks.len()
            )));
        }
        Point::new(bv.sum_space.base, bv.blocks.into_iter().next().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn euclidean_norm_is_pythagorean() {
        let s = SpaceDesc::real_l(2.0, 2);
        let x = Point::from_real(s, &[3.0, 4.0]).unwrap();
        assert_eq!(norm(&s, &x).unwrap(), 5.0);
    }

    #[test]
    fn complex_l1_norm_of_imaginary_unit() {
        let s = SpaceDesc::complex_l(1.0, 2);
        let x = Point::new(s, vec![c(0.0, 1.0), ZERO]).unwrap();
        assert_eq!(norm(&s, &x).unwrap(), 1.0);
    }

    #[test]
    fn l4_norm_matches_hand_summation() {
        let s = SpaceDesc::real_l(4.0, 2);
        let x = Point::from_real(s, &[1.0, 1.0]).unwrap();
        let by_hand = (1.0f64.powi(4) + 1.0f64.powi(4)).powf(0.25);
        assert!((norm(&s, &x).unwrap() - by_hand).abs() < 1e-15);
        assert!((norm(&s, &x).unwrap() - 2f64.powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn norm_rejects_dimension_mismatch() {
        let s = SpaceDesc::real_l(2.0, 3);
        let x = Point::from_real(SpaceDesc::real_l(2.0, 2), &[1.0, 0.0]).unwrap();
        assert!(matches!(
            norm(&s, &x),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn sum_norm_takes_block_maximum() {
        let ss = SumSpaceDesc::new(SpaceDesc::real_l(2.0, 2), 2).unwrap();
        let x = BlockVector::new(
            ss,
            vec![vec![c(3.0, 0.0), c(4.0, 0.0)], vec![ZERO, c(1.0, 0.0)]],
        )
        .unwrap();
        assert_eq!(sum_norm(&ss, &x).unwrap(), 5.0);
        assert_eq!(sum_norm(&ss, &BlockVector::zeros(ss)).unwrap(), 0.0);
        let bad = SumSpaceDesc::new(ss.base, 3).unwrap();
        assert!(sum_norm(&bad, &x).is_err());
    }

    #[test]
    fn norming_functional_on_euclidean_sphere_is_self_dual() {
        let s = SpaceDesc::real_l(2.0, 2);
        let x = Point::from_real(s, &[0.6, 0.8]).unwrap();
        let f = norming_functional(&s, &x).unwrap();
        assert!((f.coords[0].re - 0.6).abs() < 1e-15);
        assert!((f.coords[1].re - 0.8).abs() < 1e-15);
    }

    #[test]
    fn norming_functional_l3() {
        let s = SpaceDesc::real_l(3.0, 2);
        let x = Point::from_real(s, &[1.0, 1.0]).unwrap();
        let f = norming_functional(&s, &x).unwrap();
        // p-duality formula evaluated independently: f_k = |x_k|^{p-1} / ||x||^{p-1}
        let nx = 2f64.powf(1.0 / 3.0);
        let expect = 1.0 / nx.powi(2);
        assert!((f.coords[0].re - expect).abs() < 1e-14);
        assert!((f.apply(&x).unwrap().re - nx).abs() < 1e-12);
        let q = 1.5f64;
        let dual = (2.0 * expect.powf(q)).powf(1.0 / q);
        assert!((dual - 1.0).abs() < 1e-12);
        assert!((f.dual_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norming_functional_of_zero_is_an_error() {
        let s = SpaceDesc::real_l(2.0, 2);
        let x = Point::from_real(s, &[0.0, 0.0]).unwrap();
        assert!(matches!(
            norming_functional(&s, &x),
            Err(Error::NoNormingSelection(_))
        ));
    }

    #[test]
    fn norming_functional_refuses_nonsmooth_spaces() {
        let s = SpaceDesc::complex_l(1.0, 2);
        let x = Point::new(s, vec![c(1.0, 0.0), ZERO]).unwrap();
        assert!(norming_functional(&s, &x).is_err());
        let f = supporting_functional(&s, &x.coords).unwrap();
        assert!((pair(&f, &x.coords).re - 1.0).abs() < 1e-15);
        assert!((s.dual_norm_of(&f) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn norming_point_attains_dual_norm() {
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let s = SpaceDesc::complex_l(p, 3);
            let f = vec![c(0.3, -0.2), c(-1.0, 0.5), c(0.0, 0.7)];
            let x = norming_point(&s, &f).unwrap();
            assert!((s.norm_of(&x) - 1.0).abs() < 1e-12, "p={p}");
            let val = pair(&f, &x);
            assert!((val.re - s.dual_norm_of(&f)).abs() < 1e-12, "p={p}");
            assert!(val.im.abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_unit() {
        let s = SpaceDesc::complex_l(3.0, 4);
        let a = sample_sphere(&s, 7, 5);
        let b = sample_sphere(&s, 7, 5);
        assert_eq!(a, b);
        for x in &a {
            assert!((x.norm() - 1.0).abs() < 1e-12);
            assert!(x.coords.iter().any(|z| z.im != 0.0));
        }
        let one = sample_sphere(&SpaceDesc::real_l(1.5, 2), 1, 1);
        assert!((one[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_samples_are_angularly_uniform() {
        // Chi-square on 10 angular bins; the 0.999 quantile for 9 dof is 27.9.
        let s = SpaceDesc::real_l(2.0, 2);
        let pts = sample_sphere(&s, 2024, 1000);
        let mut bins = [0usize; 10];
        for x in &pts {
            let a = x.coords[1].re.atan2(x.coords[0].re) + std::f64::consts::PI;
            let k = ((a / (2.0 * std::f64::consts::PI)) * 10.0).floor() as usize;
            bins[k.min(9)] += 1;
        }
        let chi2: f64 = bins
            .iter()
            .map(|&o| (o as f64 - 100.0).powi(2) / 100.0)
            .sum();
        assert!(chi2 < 27.9, "chi2 = {chi2}, bins = {bins:?}");
    }

    #[test]
    fn json_shape_matches_wire_format() {
        let ss = SumSpaceDesc::new(SpaceDesc::real_l(2.0, 2), 1).unwrap();
        let x = BlockVector::new(ss, vec![vec![c(0.6, 0.0), c(0.8, 0.0)]]).unwrap();
        let v = serde_json::to_value(x.to_json()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"field": "real", "p": 2.0, "dim": 2, "blocks": [[0.6, 0.8]]})
        );
        let cs = SumSpaceDesc::new(SpaceDesc::complex_l(f64::INFINITY, 1), 2).unwrap();
        let z = BlockVector::new(cs, vec![vec![c(0.0, 1.0)], vec![c(0.5, -0.5)]]).unwrap();
        let text = serde_json::to_string(&z.to_json()).unwrap();
        assert!(text.contains("\"inf\""));
        let back: VectorJson = serde_json::from_str(&text).unwrap();
        assert_eq!(BlockVector::from_json(&back).unwrap(), z);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn space_strategy() -> impl Strategy<Value = SpaceDesc> {
        (
            prop_oneof![Just(Field::Real), Just(Field::Complex)],
            prop_oneof![
                Just(1.0),
                Just(2.0),
                Just(f64::INFINITY),
                (1.1f64..6.0)
            ],
            1usize..5,
        )
            .prop_map(|(f, p, d)| SpaceDesc::new(f, p, d).unwrap())
    }

    proptest! {
        #[test]
        fn norming_functional_identities(space in space_strategy(), seed in any::<u64>()) {
            prop_assume!(space.is_uniformly_convex() || space.is_scalar());
            let x = &sample_sphere(&space, seed, 1)[0];
            let scaled = Point { space, coords: x.coords.iter().map(|z| z * 3.7).collect() };
            let f = norming_functional(&space, &scaled).unwrap();
            prop_assert!((f.apply(&scaled).unwrap().re - scaled.norm()).abs() < 1e-10);
            prop_assert!((f.dual_norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn homogeneity_and_triangle(space in space_strategy(), seed in any::<u64>(),
                                    re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let pts = sample_sphere(&space, seed, 2);
            let lam = if space.field.is_complex() { C64::new(re, im) } else { C64::new(re, 0.0) };
            let scaled: Vec<C64> = pts[0].coords.iter().map(|z| z * lam * 2.5).collect();
            prop_assert!((space.norm_of(&scaled) - lam.norm() * 2.5).abs() < 1e-12 * (1.0 + lam.norm()));
            let sum: Vec<C64> = pts[0].coords.iter().zip(&pts[1].coords).map(|(a, b)| a + b).collect();
            prop_assert!(space.norm_of(&sum) <= pts[0].norm() + pts[1].norm() + 1e-12);
        }

        #[test]
        fn sum_norm_is_block_maximum(space in space_strategy(), seed in any::<u64>(), n in 1usize..5) {
            let ss = SumSpaceDesc::new(space, n).unwrap();
            let pts = sample_sphere(&space, seed, n);
            let blocks: Vec<Vec<C64>> = pts.iter().enumerate()
                .map(|(i, x)| x.coords.iter().map(|z| z * (i as f64 + 0.5)).collect()).collect();
            let bv = BlockVector::new(ss, blocks.clone()).unwrap();
            let by_block = blocks.iter().map(|b| space.norm_of(b)).fold(0.0, f64::max);
            prop_assert_eq!(sum_norm(&ss, &bv).unwrap(), by_block);
        }
    }
}
