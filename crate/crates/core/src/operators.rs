//! Operators `T : l_inf^n(X) -> Y` stored as one dense matrix per block,
//! their norm oracle, projections `P_A` and the support-set selections.

use crate::certify::{block_relaxation_bound, BnbBudget, Domain, Factor};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{
    decode_row, encode_row, lp_norm, norming_point, pair, random_unit, supporting_functional,
    BlockVector, DualPoint, Field, Point, ScalarJson, SpaceDesc, SumSpaceDesc, C64, ZERO,
};
use crate::moduli::Modulus;
use crate::rng::stream;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Relative threshold below which a block functional counts as zero.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub domain: SumSpaceDesc,
    pub range: SpaceDesc,
    /// `blocks[i]` is `T_i`, a `range.dim x domain.base.dim` matrix.
    pub blocks: Vec<Matrix>,
}

/// A subset of the block indices `0..n` (sorted, no repeats).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet {
    pub n: usize,
    pub members: Vec<usize>,
}

impl IndexSet {
    pub fn new(n: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&m) = members.last() {
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m, len: n });
            }
        }
        Ok(IndexSet { n, members })
    }

    pub fn all(n: usize) -> Self {
        IndexSet {
            n,
            members: (0..n).collect(),
        }
    }

    pub fn empty(n: usize) -> Self {
        IndexSet { n, members: vec![] }
    }

    pub fn from_predicate(n: usize, pred: impl Fn(usize) -> bool) -> Self {
        IndexSet {
            n,
            members: (0..n).filter(|&i| pred(i)).collect(),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self::from_predicate(self.n, |i| !self.contains(i))
    }

    pub fn difference(&self, other: &IndexSet) -> Self {
        Self::from_predicate(self.n, |i| self.contains(i) && !other.contains(i))
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }

    /// Position of block `i` inside the restricted space `l_inf^A`.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.members.binary_search(&i).ok()
    }
}

/// Norm bracket with a witness on the unit sphere and a norming functional.
#[derive(Debug, Clone)]
pub struct NormWitness {
    pub lo: f64,
    /// Certified upper bound (possibly loose).
    pub hi: f64,
    pub witness: BlockVector,
    pub functional: DualPoint,
    /// Index of the start that produced the witness.
    pub start: usize,
}

impl NormWitness {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormBudget {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
    pub bnb: BnbBudget,
    /// Branch-and-bound evaluations for a second pass on brackets that leave
    /// a pipeline check undecided; 0 disables it.
    pub retry_evals: usize,
}

impl Default for NormBudget {
    fn default() -> Self {
        NormBudget {
            starts: 8,
            iterations: 300,
            seed: 0x5EED,
            bnb: BnbBudget {
                max_evals: 20_000,
                target_gap: 1e-4,
            },
            retry_evals: 1_000_000,
        }
    }
}

impl BlockOperator {
    pub fn new(domain: SumSpaceDesc, range: SpaceDesc, blocks: Vec<Matrix>) -> Result<Self> {
        if blocks.len() != domain.blocks {
            return Err(Error::DimensionMismatch {
                expected: domain.blocks,
                found: blocks.len(),
            });
        }
        for b in &blocks {
            if b.rows != range.dim || b.cols != domain.base.dim {
                return Err(Error::DimensionMismatch {
                    expected: range.dim * domain.base.dim,
                    found: b.rows * b.cols,
                });
            }
            if range.field == Field::Real && b.data.iter().any(|z| z.im != 0.0) {
                return Err(Error::InvalidSpace(
                    "real operator with complex entries".into(),
                ));
            }
        }
        Ok(BlockOperator {
            domain,
            range,
            blocks,
        })
    }

    pub fn zeros(domain: SumSpaceDesc, range: SpaceDesc) -> Self {
        BlockOperator {
            domain,
            range,
            blocks: vec![Matrix::zeros(range.dim, domain.base.dim); domain.blocks],
        }
    }

    /// Standard Gaussian entries (complex Gaussian on complex fields).
    pub fn random<R: Rng>(domain: SumSpaceDesc, range: SpaceDesc, rng: &mut R) -> Self {
        let blocks = (0..domain.blocks)
            .map(|_| random_matrix(range.field, range.dim, domain.base.dim, rng))
            .collect();
        BlockOperator {
            domain,
            range,
            blocks,
        }
    }

    pub fn n(&self) -> usize {
        self.domain.blocks
    }

    fn check_point(&self, x: &BlockVector) -> Result<()> {
        if x.sum_space.blocks != self.domain.blocks || x.sum_space.base.dim != self.domain.base.dim {
            return Err(Error::DimensionMismatch {
                expected: self.domain.blocks * self.domain.base.dim,
                found: x.sum_space.blocks * x.sum_space.base.dim,
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &BlockVector) -> Result<Point> {
        self.check_point(x)?;
        Ok(Point {
            space: self.range,
            coords: self.apply_raw(&x.blocks),
        })
    }

    pub(crate) fn apply_raw(&self, blocks: &[Vec<C64>]) -> Vec<C64> {
        let mut out = vec![ZERO; self.range.dim];
        for (t, xi) in self.blocks.iter().zip(blocks) {
            t.mul_vec_add(xi, &mut out);
        }
        out
    }

    /// The functional `x -> ystar(T_i x)` on the base space.
    pub fn adjoint_component(&self, ystar: &DualPoint, i: usize) -> Result<DualPoint> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n(),
            });
        }
        if ystar.coords.len() != self.range.dim {
            return Err(Error::DimensionMismatch {
                expected: self.range.dim,
                found: ystar.coords.len(),
            });
        }
        Ok(DualPoint {
            space: self.domain.base,
            coords: self.blocks[i].transpose_mul_vec(&ystar.coords),
        })
    }

    pub fn project(&self, a: &IndexSet) -> BlockOperator {
        let mut out = self.clone();
        for (i, b) in out.blocks.iter_mut().enumerate() {
            if !a.contains(i) {
                *b = Matrix::zeros(b.rows, b.cols);
            }
        }
        out
    }

    /// `T` restricted to `l_inf^A(X)` (blocks renumbered in order).
    pub fn restrict(&self, a: &IndexSet) -> Result<BlockOperator> {
        if a.is_empty() {
            return Err(Error::Precondition("cannot restrict to an empty index set".into()));
        }
        Ok(BlockOperator {
            domain: SumSpaceDesc::new(self.domain.base, a.len())?,
            range: self.range,
            blocks: a.members.iter().map(|&i| self.blocks[i].clone()).collect(),
        })
    }

    /// Inverse of [`restrict`](Self::restrict): zero blocks outside `A`.
    pub fn extend(&self, a: &IndexSet) -> Result<BlockOperator> {
        if a.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: self.n(),
            });
        }
        let zero = Matrix::zeros(self.range.dim, self.domain.base.dim);
        let blocks = (0..a.n)
            .map(|i| a.position(i).map_or(zero.clone(), |k| self.blocks[k].clone()))
            .collect();
        Ok(BlockOperator {
            domain: SumSpaceDesc::new(self.domain.base, a.n)?,
            range: self.range,
            blocks,
        })
    }

    pub fn normalize(&self, value: f64) -> Result<BlockOperator> {
        if !(value > 0.0) {
            return Err(Error::Precondition(format!("cannot normalize by {value}")));
        }
        Ok(self.scale(C64::new(1.0 / value, 0.0)))
    }

    pub fn scale(&self, s: C64) -> BlockOperator {
        BlockOperator {
            domain: self.domain,
            range: self.range,
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    pub fn sub(&self, other: &BlockOperator) -> Result<BlockOperator> {
        self.same_shape(other)?;
        Ok(BlockOperator {
            domain: self.domain,
            range: self.range,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.sub(b)).collect(),
        })
    }

    pub fn add(&self, other: &BlockOperator) -> Result<BlockOperator> {
        self.same_shape(other)?;
        Ok(BlockOperator {
            domain: self.domain,
            range: self.range,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.add(b)).collect(),
        })
    }

    fn same_shape(&self, other: &BlockOperator) -> Result<()> {
        if self.n() != other.n()
            || self.range.dim != other.range.dim
            || self.domain.base.dim != other.domain.base.dim
        {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: other.n(),
            });
        }
        Ok(())
    }

    /// `sum_i ||T_i||`, a cheap upper bound on `||T||`.
    pub fn block_sum_bound(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm_upper(self.domain.base.p, self.range.p))
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_zero())
    }

    pub fn to_json(&self) -> OperatorJson {
        OperatorJson {
            domain: self.domain,
            range: self.range,
            blocks: self
                .blocks
                .iter()
                .map(|m| (0..m.rows).map(|r| encode_row(Field::Complex, m.row(r))).collect())
                .collect(),
        }
    }

    pub fn from_json(j: &OperatorJson) -> Result<Self> {
        j.domain.base.check(&vec![ZERO; j.domain.base.dim])?;
        let blocks = j
            .blocks
            .iter()
            .map(|rows| Matrix::from_rows(rows.iter().map(|r| decode_row(r)).collect()))
            .map(|m| {
                if m.rows == 0 {
                    Matrix::zeros(j.range.dim, j.domain.base.dim)
                } else {
                    m
                }
            })
            .collect();
        BlockOperator::new(j.domain, j.range, blocks)
    }
}

pub(crate) fn random_matrix<R: Rng>(field: Field, rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if field.is_complex() {
                StandardNormal.sample(rng)
            } else {
                0.0
            };
            C64::new(re, im)
        })
        .collect();
    Matrix { rows, cols, data }
}

/// Wire form: `{domain, range, blocks}` with row-major matrices and complex
/// entries written `[re, im]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorJson {
    pub domain: SumSpaceDesc,
    pub range: SpaceDesc,
    pub blocks: Vec<Vec<Vec<ScalarJson>>>,
}

/// Alternating ascent from one start: with `f` supporting `Tx`, every block
/// moves to a point norming `T_i^T f`, which cannot decrease `||Tx||`.
fn ascend(t: &BlockOperator, x: &mut [Vec<C64>], iterations: usize) -> f64 {
    let base = t.domain.base;
    let mut val = t.range.norm_of(&t.apply_raw(x));
    for _ in 0..iterations {
        let y = t.apply_raw(x);
        let Some(f) = supporting_functional(&t.range, &y) else {
            break;
        };
        let mut next = x.to_vec();
        for (i, b) in t.blocks.iter().enumerate() {
            if let Some(z) = norming_point(&base, &b.transpose_mul_vec(&f)) {
                next[i] = z;
            }
        }
        let nv = t.range.norm_of(&t.apply_raw(&next));
        if nv < val * (1.0 - 1e-14) {
            break;
        }
        let moved = crate::bilinear::max_change(x, &next);
        x.clone_from_slice(&next);
        val = nv;
        if moved <= 1e-14 {
            break;
        }
    }
    val
}

/// Certified upper bound on `||T|| = sup_{||f||_* <= 1} sum_i ||T_i^T f||_*`
/// by branch and bound over the extreme points of the dual ball of `Y`.
pub fn dual_upper_bound(t: &BlockOperator, bnb: BnbBudget) -> f64 {
    let mut best = t.block_sum_bound();
    if t.is_zero() {
        return 0.0;
    }
    let base = t.domain.base;
    let range = t.range;
    let q = base.dual_exponent();
    let objective = |f: &[C64]| -> f64 {
        t.blocks
            .iter()
            .map(|b| lp_norm(&b.transpose_mul_vec(f), q))
            .sum()
    };
    if range.dim == 1 {
        return best.min(objective(&[C64::new(1.0, 0.0)]) * (1.0 + 1e-14));
    }
    if range.p.is_infinite() {
        // dual ball of l_inf is the l_1 ball: extreme points are unit multiples of e_k
        let mut m: f64 = 0.0;
        for k in 0..range.dim {
            let mut f = vec![ZERO; range.dim];
            f[k] = C64::new(1.0, 0.0);
            m = m.max(objective(&f));
        }
        return best.min(m * (1.0 + 1e-14));
    }
    let (factor, out_p) = if range.p == 1.0 {
        match range.field {
            Field::Real => (Factor::Signs { k: range.dim }, 1.0),
            Field::Complex => (Factor::Torus { k: range.dim }, 1.0),
        }
    } else if range.p == 2.0 {
        best = best.min(stack_bound(t));
        (
            Factor::SphereModPhase {
                field: range.field,
                dim: range.dim,
            },
            2.0,
        )
    } else {
        return best;
    };
    // Lipschitz in sup norm (torus) or Euclidean norm (sphere) of f:
    // ||T_i^T g||_* <= ||T_i : X -> l_out|| ||g||_{out*}
    let lip: f64 = t.blocks.iter().map(|b| b.norm_upper(base.p, out_p)).sum();
    let dom = Domain {
        factors: vec![factor],
        lipschitz: vec![lip],
    };
    let r = dom.maximize(|f| objective(&f[0]), bnb);
    best = best.min(r.hi);
    best
}

/// `||sum_i T_i x_i||_2 <= ||[T_1 ... T_n]||_2 sqrt(n) max_i ||x_i||_2`.
fn stack_bound(t: &BlockOperator) -> f64 {
    let base = t.domain.base;
    let d = base.dim;
    let mut wide = Matrix::zeros(t.range.dim, d * t.n());
    for (i, b) in t.blocks.iter().enumerate() {
        for r in 0..b.rows {
            for c in 0..d {
                *wide.at_mut(r, i * d + c) = b.at(r, c);
            }
        }
    }
    let c_in = if base.p >= 2.0 {
        (d as f64).powf(0.5 - 1.0 / base.p)
    } else {
        1.0
    };
    wide.spectral_norm_upper() * (t.n() as f64).sqrt() * c_in * (1.0 + 1e-14)
}

/// Multistart alternating ascent for `lo`, dual branch and bound for `hi`.
pub fn operator_norm(t: &BlockOperator, budget: &NormBudget) -> NormWitness {
    operator_norm_with_starts(t, budget, &[])
}

/// As [`operator_norm`], with caller-supplied starting points tried first.
pub fn operator_norm_with_starts(
    t: &BlockOperator,
    budget: &NormBudget,
    seeds: &[BlockVector],
) -> NormWitness {
    let base = t.domain.base;
    let mut starts: Vec<Vec<Vec<C64>>> = seeds
        .iter()
        .map(|s| {
            s.blocks
                .iter()
                .map(|b| {
                    let n = base.norm_of(b);
                    if n > 0.0 {
                        b.iter().map(|z| z / n).collect()
                    } else {
                        let mut e = vec![ZERO; base.dim];
                        e[0] = C64::new(1.0, 0.0);
                        e
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..budget.starts {
        let mut rng = stream(budget.seed, k as u64);
        starts.push((0..t.n()).map(|_| random_unit(&base, &mut rng)).collect());
    }
    let mut best: Option<(f64, usize, Vec<Vec<C64>>)> = None;
    for (k, mut x) in starts.into_iter().enumerate() {
        let v = ascend(t, &mut x, budget.iterations);
        if best.as_ref().is_none_or(|(bv, _, _)| v > *bv) {
            best = Some((v, k, x));
        }
    }
    let (lo, start, x) = best.expect("at least one start");
    let y = t.apply_raw(&x);
    let functional = supporting_functional(&t.range, &y).unwrap_or_else(|| {
        let mut f = vec![ZERO; t.range.dim];
        f[0] = C64::new(1.0, 0.0);
        f
    });
    let hi = dual_upper_bound(t, budget.bnb)
        .min(relaxation_bound(t, &x, &y, lo))
        .max(lo);
    NormWitness {
        lo,
        hi,
        witness: BlockVector {
            sum_space: t.domain,
            blocks: x,
        },
        functional: DualPoint {
            space: t.range,
            coords: functional,
        },
        start,
    }
}

/// Certified bound for Hilbert blocks into `l_1` or `l_2`; infinite otherwise.
fn relaxation_bound(t: &BlockOperator, x: &[Vec<C64>], y: &[C64], target: f64) -> f64 {
    let (m, d, n) = (t.range.dim, t.domain.base.dim, t.n());
    if t.domain.base.p != 2.0 || !(t.range.p == 1.0 || t.range.p == 2.0) {
        return f64::INFINITY;
    }
    let mut big = Matrix::zeros(m, n * d);
    for (i, b) in t.blocks.iter().enumerate() {
        for r in 0..m {
            for c in 0..d {
                *big.at_mut(r, i * d + c) = b.at(r, c);
            }
        }
    }
    let one = C64::new(1.0, 0.0);
    let (g, g_blocks): (Vec<C64>, Vec<usize>) = if t.range.p == 2.0 {
        let ny = lp_norm(y, 2.0);
        let g = if ny > 0.0 { y.iter().map(|z| z / ny).collect() } else { (0..m).map(|k| if k == 0 { one } else { ZERO }).collect() };
        (g, vec![m])
    } else {
        (y.iter().map(|z| if z.norm() > 0.0 { z / z.norm() } else { one }).collect(), vec![1; m])
    };
    let xs: Vec<C64> = x.iter().flatten().copied().collect();
    block_relaxation_bound(&big, &g_blocks, &vec![d; n], &g, &xs, target)
}

/// `{ i in N : Re [(T* y*)(i)](x(i)) > (1 - eta') ||(T* y*)(i)|| }` with
/// `N = { i : ||(T* y*)(i)|| != 0 }`.
pub fn support_set(t: &BlockOperator, ystar: &DualPoint, x: &BlockVector, eta_prime: f64) -> Result<IndexSet> {
    t.check_point(x)?;
    if !(eta_prime > 0.0 && eta_prime < 1.0) {
        return Err(Error::Precondition(format!("eta' = {eta_prime} must lie in (0, 1)")));
    }
    let zero = ZERO_TOL * t.block_sum_bound();
    let mut members = Vec::new();
    for i in 0..t.n() {
        let g = t.adjoint_component(ystar, i)?;
        let gn = g.dual_norm();
        if gn <= zero {
            continue;
        }
        if pair(&g.coords, &x.blocks[i]).re > (1.0 - eta_prime) * gn {
            members.push(i);
        }
    }
    IndexSet::new(t.n(), members)
}

/// `{ i : Re z_i > 1 - eta' }` for a convex series with `Re sum a_i z_i > 1 - eta`.
pub fn convex_series_support(alphas: &[f64], zs: &[C64], eta: f64, eta_prime: f64) -> Result<IndexSet> {
    if alphas.len() != zs.len() {
        return Err(Error::DimensionMismatch {
            expected: alphas.len(),
            found: zs.len(),
        });
    }
    if alphas.iter().any(|&a| !(a >= 0.0)) || alphas.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::Precondition("alphas must be a convex series".into()));
    }
    if zs.iter().any(|z| z.norm() > 1.0 + 1e-12) {
        return Err(Error::Precondition("scalars must lie in the unit disc".into()));
    }
    if !(eta > 0.0 && eta_prime > 0.0) {
        return Err(Error::Precondition("eta and eta' must be positive".into()));
    }
    let s: f64 = alphas.iter().zip(zs).map(|(a, z)| a * z.re).sum();
    if !(s > 1.0 - eta) {
        return Err(Error::Precondition(format!(
            "Re sum alpha_i z_i = {s} does not exceed 1 - eta = {}",
            1.0 - eta
        )));
    }
    Ok(IndexSet::from_predicate(zs.len(), |i| zs[i].re > 1.0 - eta_prime))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailStatus {
    /// The tail is certified to be at most `eps`.
    Holds,
    /// Premise certified on `lo`, tail certified above `eps`.
    CertifiedViolation,
    /// The premise certainly fails.
    Vacuous,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub eps: f64,
    pub threshold: f64,
    pub norm_lo: f64,
    pub norm_hi: f64,
    pub projected_lo: f64,
    pub projected_hi: f64,
    pub tail_lo: f64,
    pub tail_hi: f64,
    pub status: TailStatus,
}

pub(crate) fn tail_status(
    threshold: f64,
    eps: f64,
    norm_hi: f64,
    projected: (f64, f64),
    tail: (f64, f64),
    strict: bool,
) -> TailStatus {
    let holds = if strict { tail.1 < eps } else { tail.1 <= eps };
    let premise_sure = if strict {
        projected.0 > threshold
    } else {
        projected.0 >= threshold
    };
    let breach = if strict { tail.0 >= eps } else { tail.0 > eps };
    if holds {
        TailStatus::Holds
    } else if premise_sure && breach && norm_hi <= 1.0 + 1e-9 {
        TailStatus::CertifiedViolation
    } else if projected.1 < threshold {
        TailStatus::Vacuous
    } else {
        TailStatus::Inconclusive
    }
}

/// Checks `||T P_A|| >= 1 - d/(1+d) => ||T (I - P_A)|| <= eps` with
/// `d = delta_C(eps)`, using `lo` on the premise and `hi` on the conclusion.
pub fn tail_bound_check(
    t: &BlockOperator,
    a: &IndexSet,
    eps: f64,
    delta_c: &Modulus,
    budget: &NormBudget,
) -> Result<TailReport> {
    let d = delta_c.eval(eps)?;
    let threshold = 1.0 - d / (1.0 + d);
    let full = operator_norm(t, budget);
    let pa = operator_norm_with_starts(&t.project(a), budget, std::slice::from_ref(&full.witness));
    let tail = operator_norm(&t.project(&a.complement()), budget);
    Ok(TailReport {
        eps,
        threshold,
        norm_lo: full.lo,
        norm_hi: full.hi,
        projected_lo: pa.lo,
        projected_hi: pa.hi,
        tail_lo: tail.lo,
        tail_hi: tail.hi,
        status: tail_status(threshold, eps, full.hi, (pa.lo, pa.hi), (tail.lo, tail.hi), false),
    })
}
