//! Bilinear forms on `l_inf^n(X) x l_inf^m(X)`, their slice operators
//! `L_T`, `R_T`, norm oracles and the double projections `P_{A_L,A_R}`.

use crate::certify::{BnbBudget, Domain, Factor};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{
    decode_row, encode_row, lp_norm, norming_point, pair, random_unit, BlockVector, Field,
    ScalarJson, SpaceDesc, SumSpaceDesc, C64, ZERO,
};
use crate::moduli::BilinearModuli;
use crate::operators::{random_matrix, tail_status, IndexSet, NormBudget, TailStatus};
use crate::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockBilinear {
    pub left: SumSpaceDesc,
    pub right: SumSpaceDesc,
    /// `kernels[i][j]` is `B_ij`, a `left.base.dim x right.base.dim` matrix;
    /// `B(x, y) = sum_ij x(i)^T B_ij y(j)`.
    pub kernels: Vec<Vec<Matrix>>,
}

/// Block functionals: an element of `l_1^k(X*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub base: SpaceDesc,
    pub blocks: Vec<Vec<C64>>,
}

impl Slice {
    /// Norm in `l_1^k(X*)`.
    pub fn norm(&self) -> f64 {
        let q = self.base.dual_exponent();
        self.blocks.iter().map(|b| lp_norm(b, q)).sum()
    }

    pub fn apply(&self, x: &BlockVector) -> C64 {
        self.blocks.iter().zip(&x.blocks).map(|(f, v)| pair(f, v)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct BilinearWitness {
    pub lo: f64,
    pub hi: f64,
    pub left: BlockVector,
    pub right: BlockVector,
    pub start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl BlockBilinear {
    pub fn new(left: SumSpaceDesc, right: SumSpaceDesc, kernels: Vec<Vec<Matrix>>) -> Result<Self> {
        if kernels.len() != left.blocks {
            return Err(Error::DimensionMismatch {
                expected: left.blocks,
                found: kernels.len(),
            });
        }
        for row in &kernels {
            if row.len() != right.blocks {
                return Err(Error::DimensionMismatch {
                    expected: right.blocks,
                    found: row.len(),
                });
            }
            for k in row {
                if k.rows != left.base.dim || k.cols != right.base.dim {
                    return Err(Error::DimensionMismatch {
                        expected: left.base.dim * right.base.dim,
                        found: k.rows * k.cols,
                    });
                }
            }
        }
        Ok(BlockBilinear {
            left,
            right,
            kernels,
        })
    }

    pub fn zeros(left: SumSpaceDesc, right: SumSpaceDesc) -> Self {
        let k = Matrix::zeros(left.base.dim, right.base.dim);
        BlockBilinear {
            left,
            right,
            kernels: vec![vec![k; right.blocks]; left.blocks],
        }
    }

    pub fn random<R: Rng>(left: SumSpaceDesc, right: SumSpaceDesc, rng: &mut R) -> Self {
        let kernels = (0..left.blocks)
            .map(|_| {
                (0..right.blocks)
                    .map(|_| random_matrix(left.base.field, left.base.dim, right.base.dim, rng))
                    .collect()
            })
            .collect();
        BlockBilinear {
            left,
            right,
            kernels,
        }
    }

    pub fn n(&self) -> usize {
        self.left.blocks
    }

    pub fn m(&self) -> usize {
        self.right.blocks
    }

    fn check(&self, xl: &BlockVector, xr: &BlockVector) -> Result<()> {
        for (x, s) in [(xl, &self.left), (xr, &self.right)] {
            if x.sum_space.blocks != s.blocks || x.sum_space.base.dim != s.base.dim {
                return Err(Error::DimensionMismatch {
                    expected: s.blocks * s.base.dim,
                    found: x.sum_space.blocks * x.sum_space.base.dim,
                });
            }
        }
        Ok(())
    }

    pub fn apply(&self, xl: &BlockVector, xr: &BlockVector) -> Result<C64> {
        self.check(xl, xr)?;
        Ok(self.apply_raw(&xl.blocks, &xr.blocks))
    }

    pub(crate) fn apply_raw(&self, xl: &[Vec<C64>], xr: &[Vec<C64>]) -> C64 {
        let mut s = ZERO;
        for (i, row) in self.kernels.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                if !k.is_zero() {
                    s += pair(&xl[i], &k.mul_vec(&xr[j]));
                }
            }
        }
        s
    }

    fn left_raw(&self, xl: &[Vec<C64>]) -> Vec<Vec<C64>> {
        (0..self.m())
            .map(|j| {
                let mut g = vec![ZERO; self.right.base.dim];
                for i in 0..self.n() {
                    let t = self.kernels[i][j].transpose_mul_vec(&xl[i]);
                    g.iter_mut().zip(t).for_each(|(a, b)| *a += b);
                }
                g
            })
            .collect()
    }

    fn right_raw(&self, xr: &[Vec<C64>]) -> Vec<Vec<C64>> {
        (0..self.n())
            .map(|i| {
                let mut h = vec![ZERO; self.left.base.dim];
                for j in 0..self.m() {
                    self.kernels[i][j].mul_vec_add(&xr[j], &mut h);
                }
                h
            })
            .collect()
    }

    /// `(L_B x_L)(j) = sum_i x_L(i)^T B_ij`.
    pub fn left_slice(&self, xl: &BlockVector) -> Result<Slice> {
        if xl.sum_space.blocks != self.n() || xl.sum_space.base.dim != self.left.base.dim {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: xl.sum_space.blocks,
            });
        }
        Ok(Slice {
            base: self.right.base,
            blocks: self.left_raw(&xl.blocks),
        })
    }

    /// `(R_B x_R)(i) = sum_j B_ij x_R(j)`.
    pub fn right_slice(&self, xr: &BlockVector) -> Result<Slice> {
        if xr.sum_space.blocks != self.m() || xr.sum_space.base.dim != self.right.base.dim {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: xr.sum_space.blocks,
            });
        }
        Ok(Slice {
            base: self.left.base,
            blocks: self.right_raw(&xr.blocks),
        })
    }

    pub fn project2(&self, al: &IndexSet, ar: &IndexSet) -> BlockBilinear {
        let mut out = self.clone();
        for (i, row) in out.kernels.iter_mut().enumerate() {
            for (j, k) in row.iter_mut().enumerate() {
                if !(al.contains(i) && ar.contains(j)) {
                    *k = Matrix::zeros(k.rows, k.cols);
                }
            }
        }
        out
    }

    /// Restriction to `l_inf^{A_L}(X) x l_inf^{A_R}(X)`.
    pub fn restrict2(&self, al: &IndexSet, ar: &IndexSet) -> Result<BlockBilinear> {
        if al.is_empty() || ar.is_empty() {
            return Err(Error::Precondition("cannot restrict to an empty index set".into()));
        }
        Ok(BlockBilinear {
            left: SumSpaceDesc::new(self.left.base, al.len())?,
            right: SumSpaceDesc::new(self.right.base, ar.len())?,
            kernels: al
                .members
                .iter()
                .map(|&i| ar.members.iter().map(|&j| self.kernels[i][j].clone()).collect())
                .collect(),
        })
    }

    /// Inverse of [`restrict2`](Self::restrict2), zero outside `A_L x A_R`.
    pub fn extend2(&self, al: &IndexSet, ar: &IndexSet) -> Result<BlockBilinear> {
        if al.len() != self.n() || ar.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: al.len() * ar.len(),
                found: self.n() * self.m(),
            });
        }
        let zero = Matrix::zeros(self.left.base.dim, self.right.base.dim);
        let kernels = (0..al.n)
            .map(|i| {
                (0..ar.n)
                    .map(|j| match (al.position(i), ar.position(j)) {
                        (Some(a), Some(b)) => self.kernels[a][b].clone(),
                        _ => zero.clone(),
                    })
                    .collect()
            })
            .collect();
        Ok(BlockBilinear {
            left: SumSpaceDesc::new(self.left.base, al.n)?,
            right: SumSpaceDesc::new(self.right.base, ar.n)?,
            kernels,
        })
    }

    pub fn scale(&self, s: C64) -> BlockBilinear {
        let mut out = self.clone();
        out.kernels
            .iter_mut()
            .flatten()
            .for_each(|k| *k = k.scale(s));
        out
    }

    pub fn normalize(&self, value: f64) -> Result<BlockBilinear> {
        if !(value > 0.0) {
            return Err(Error::Precondition(format!("cannot normalize by {value}")));
        }
        Ok(self.scale(C64::new(1.0 / value, 0.0)))
    }

    fn zip_with(&self, other: &BlockBilinear, f: impl Fn(&Matrix, &Matrix) -> Matrix) -> Result<BlockBilinear> {
        if self.n() != other.n() || self.m() != other.m() {
            return Err(Error::DimensionMismatch {
                expected: self.n() * self.m(),
                found: other.n() * other.m(),
            });
        }
        let mut out = self.clone();
        for (i, row) in out.kernels.iter_mut().enumerate() {
            for (j, k) in row.iter_mut().enumerate() {
                *k = f(k, &other.kernels[i][j]);
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &BlockBilinear) -> Result<BlockBilinear> {
        self.zip_with(other, |a, b| a.sub(b))
    }

    pub fn add(&self, other: &BlockBilinear) -> Result<BlockBilinear> {
        self.zip_with(other, |a, b| a.add(b))
    }

    pub fn is_zero(&self) -> bool {
        self.kernels.iter().flatten().all(|k| k.is_zero())
    }

    /// `sum_ij ||B_ij||`.
    pub fn kernel_sum_bound(&self) -> f64 {
        let pl = self.left.base.p;
        let pr = self.right.base.p;
        // |x^T K y| <= ||K : l_pr -> l_{pl'}|| ||y|| ||x||
        let out = crate::model_spaces::conjugate_exponent(pl);
        self.kernels
            .iter()
            .flatten()
            .map(|k| k.norm_upper(pr, out))
            .sum()
    }

    pub fn to_json(&self) -> BilinearJson {
        BilinearJson {
            left: self.left,
            right: self.right,
            kernels: self
                .kernels
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|m| (0..m.rows).map(|r| encode_row(Field::Complex, m.row(r))).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_json(j: &BilinearJson) -> Result<Self> {
        let kernels = j
            .kernels
            .iter()
            .map(|row| {
                row.iter()
                    .map(|rows| Matrix::from_rows(rows.iter().map(|r| decode_row(r)).collect()))
                    .collect()
            })
            .collect();
        BlockBilinear::new(j.left, j.right, kernels)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilinearJson {
    pub left: SumSpaceDesc,
    pub right: SumSpaceDesc,
    pub kernels: Vec<Vec<Vec<Vec<ScalarJson>>>>,
}

fn unit_blocks(base: &SpaceDesc, blocks: &[Vec<C64>]) -> Vec<Vec<C64>> {
    blocks
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
}

/// Alternating best responses; returns `|B(x_L, x_R)|` after the last step.
fn alternate(b: &BlockBilinear, xl: &mut Vec<Vec<C64>>, xr: &mut Vec<Vec<C64>>, iterations: usize) -> f64 {
    let mut val = b.apply_raw(xl, xr).norm();
    for _ in 0..iterations {
        let g = b.left_raw(xl);
        let mut nr = xr.clone();
        for (j, gj) in g.iter().enumerate() {
            if let Some(z) = norming_point(&b.right.base, gj) {
                nr[j] = z;
            }
        }
        let h = b.right_raw(&nr);
        let mut nl = xl.clone();
        for (i, hi) in h.iter().enumerate() {
            if let Some(z) = norming_point(&b.left.base, hi) {
                nl[i] = z;
            }
        }
        let nv = b.apply_raw(&nl, &nr).norm();
        if nv < val * (1.0 - 1e-14) {
            break;
        }
        let moved = max_change(xl, &nl).max(max_change(xr, &nr));
        *xl = nl;
        *xr = nr;
        val = nv;
        if moved <= 1e-14 {
            break;
        }
    }
    val
}

/// Largest coordinate change between two block families.
pub(crate) fn max_change(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(u, v)| u.iter().zip(v).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

/// Stack bound `||[B_ij]||_2 sqrt(n m)` for Hilbert bases.
fn stack_bound(b: &BlockBilinear) -> f64 {
    if b.left.base.p != 2.0 || b.right.base.p != 2.0 {
        return f64::INFINITY;
    }
    let (dl, dr) = (b.left.base.dim, b.right.base.dim);
    let mut big = Matrix::zeros(dl * b.n(), dr * b.m());
    for i in 0..b.n() {
        for j in 0..b.m() {
            let k = &b.kernels[i][j];
            for r in 0..dl {
                for c in 0..dr {
                    *big.at_mut(i * dl + r, j * dr + c) = k.at(r, c);
                }
            }
        }
    }
    big.spectral_norm_upper() * ((b.n() * b.m()) as f64).sqrt() * (1.0 + 1e-14)
}

/// Certified upper bound on `sup_{x} sum_k ||(slice x)(k)||_*` by branch and
/// bound over the product of Euclidean unit spheres on the chosen side,
/// with the first factor taken modulo phase.
fn slice_upper_bound(b: &BlockBilinear, side: Side, bnb: BnbBudget) -> f64 {
    let mut best = b.kernel_sum_bound().min(stack_bound(b));
    if b.is_zero() {
        return 0.0;
    }
    let (dom, other) = match side {
        Side::Left => (b.left, b.right),
        Side::Right => (b.right, b.left),
    };
    if dom.base.p != 2.0 {
        return best;
    }
    let q = other.base.dual_exponent();
    // Lipschitz constant of factor i: sum_k ||K_ik : l_2 -> X*||
    let lips: Vec<f64> = (0..dom.blocks)
        .map(|i| {
            (0..other.blocks)
                .map(|k| {
                    let m = match side {
                        Side::Left => b.kernels[i][k].transpose(),
                        Side::Right => b.kernels[k][i].clone(),
                    };
                    m.norm_upper(2.0, q)
                })
                .sum()
        })
        .collect();
    let factors: Vec<Factor> = (0..dom.blocks)
        .map(|i| {
            if i == 0 {
                Factor::SphereModPhase {
                    field: dom.base.field,
                    dim: dom.base.dim,
                }
            } else {
                Factor::Sphere {
                    field: dom.base.field,
                    dim: dom.base.dim,
                }
            }
        })
        .collect();
    let domain = Domain {
        factors,
        lipschitz: lips,
    };
    let r = domain.maximize(
        |x| {
            let s = match side {
                Side::Left => b.left_raw(x),
                Side::Right => b.right_raw(x),
            };
            s.iter().map(|f| lp_norm(f, q)).sum()
        },
        bnb,
    );
    best = best.min(r.hi);
    best
}

fn multistart(
    b: &BlockBilinear,
    budget: &NormBudget,
    seeds: &[(BlockVector, BlockVector)],
    stream_tag: u64,
) -> (f64, usize, Vec<Vec<C64>>, Vec<Vec<C64>>) {
    let mut starts: Vec<(Vec<Vec<C64>>, Vec<Vec<C64>>)> = seeds
        .iter()
        .map(|(l, r)| (unit_blocks(&b.left.base, &l.blocks), unit_blocks(&b.right.base, &r.blocks)))
        .collect();
    for k in 0..budget.starts {
        let mut rng = stream(budget.seed ^ stream_tag, k as u64);
        let l = (0..b.n()).map(|_| random_unit(&b.left.base, &mut rng)).collect();
        let r = (0..b.m()).map(|_| random_unit(&b.right.base, &mut rng)).collect();
        starts.push((l, r));
    }
    let mut best: Option<(f64, usize, Vec<Vec<C64>>, Vec<Vec<C64>>)> = None;
    for (k, (mut l, mut r)) in starts.into_iter().enumerate() {
        let v = alternate(b, &mut l, &mut r, budget.iterations);
        if best.as_ref().is_none_or(|bv| v > bv.0) {
            best = Some((v, k, l, r));
        }
    }
    best.expect("at least one start")
}

/// Norm of `B` with a pair witness; `hi` certified through `R_B`.
pub fn bilinear_norm(b: &BlockBilinear, budget: &NormBudget) -> BilinearWitness {
    bilinear_norm_with_starts(b, budget, &[])
}

pub fn bilinear_norm_with_starts(
    b: &BlockBilinear,
    budget: &NormBudget,
    seeds: &[(BlockVector, BlockVector)],
) -> BilinearWitness {
    let (lo, start, l, r) = multistart(b, budget, seeds, 0);
    let hi = slice_upper_bound(b, Side::Right, budget.bnb).max(lo);
    BilinearWitness {
        lo,
        hi,
        left: BlockVector {
            sum_space: b.left,
            blocks: l,
        },
        right: BlockVector {
            sum_space: b.right,
            blocks: r,
        },
        start,
    }
}

/// Norm bracket of the slice operator `L_B` (or `R_B`) viewed as a map
/// into `l_1(X*)`: ascent on the slice norm from independent starts, and
/// certification over the chosen side's spheres.
pub fn slice_operator_norm(b: &BlockBilinear, side: Side, budget: &NormBudget) -> (f64, f64) {
    let tag = match side {
        Side::Left => 0x4C,
        Side::Right => 0x52,
    };
    let (lo, ..) = multistart(b, budget, &[], tag);
    (lo, slice_upper_bound(b, side, budget.bnb).max(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearTailReport {
    pub eps: f64,
    pub gamma: f64,
    pub threshold: f64,
    pub norm_lo: f64,
    pub norm_hi: f64,
    pub projected_lo: f64,
    pub projected_hi: f64,
    pub tail_lo: f64,
    pub tail_hi: f64,
    /// `||T - T P_{A_L,N}||` bracket.
    pub left_step: (f64, f64),
    /// `||T P_{A_L,N} - T P_{A_L,A_R}||` bracket.
    pub right_step: (f64, f64),
    pub left_step_ok: bool,
    pub right_step_ok: bool,
    pub status: TailStatus,
}

/// Checks `||T P_{A_L,A_R}|| > 1 - gamma(eps) => ||T - T P_{A_L,A_R}|| < eps`
/// with `gamma(eps) = d(eps/2) / (1 + d(eps/2))`, `d` the modulus of
/// C-convexity of `l_1(X*)`.
pub fn bilinear_tail_check(
    b: &BlockBilinear,
    al: &IndexSet,
    ar: &IndexSet,
    eps: f64,
    moduli: &BilinearModuli,
    budget: &NormBudget,
) -> Result<BilinearTailReport> {
    let gamma = moduli.tail_gamma(eps)?;
    let threshold = 1.0 - gamma;
    let full = bilinear_norm(b, budget);
    let seed = [(full.left.clone(), full.right.clone())];
    let proj = b.project2(al, ar);
    let pw = bilinear_norm_with_starts(&proj, budget, &seed);
    let tail = bilinear_norm(&b.sub(&proj)?, budget);
    let all_r = IndexSet::all(b.m());
    let left_only = b.project2(al, &all_r);
    let ls = bilinear_norm(&b.sub(&left_only)?, budget);
    let rs = bilinear_norm(&left_only.sub(&proj)?, budget);
    Ok(BilinearTailReport {
        eps,
        gamma,
        threshold,
        norm_lo: full.lo,
        norm_hi: full.hi,
        projected_lo: pw.lo,
        projected_hi: pw.hi,
        tail_lo: tail.lo,
        tail_hi: tail.hi,
        left_step: (ls.lo, ls.hi),
        right_step: (rs.lo, rs.hi),
        left_step_ok: ls.hi < eps / 2.0,
        right_step_ok: rs.hi < eps / 2.0,
        status: tail_status(threshold, eps, full.hi, (pw.lo, pw.hi), (tail.lo, tail.hi), true),
    })
}
