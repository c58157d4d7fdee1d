//! Moduli of convexity and of C-convexity, the micro-transitivity modulus of
//! Hilbert spaces, and the constant schedules `eta(eps)` / `gamma(eps)` that
//! drive the correction pipelines.
//!
//! Brackets are certified by enumerating a canonical grid of sphere pairs.
//! Coordinatewise unimodular multiplication is an isometry of every `l_p`,
//! so the first point of a pair may be taken with nonnegative coordinates;
//! for `delta_C` the global phase of the second point is absorbed by the
//! supremum over `lambda` and is pinned as well. Grid points are exact
//! sphere points, so feasible grid values give the upper end directly; the
//! lower end subtracts a Lipschitz slack computed from the covering radius.

use crate::error::{Error, Result};
use crate::model_spaces::{lp_norm, BlockVector, Field, SpaceDesc, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Block norms at least this close to one count as unit blocks.
pub const UNIT_BLOCK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusBracket {
    #[serde(rename = "eps")]
    pub epsilon: f64,
    pub lo: f64,
    pub hi: f64,
    /// Magnitude grid step at the finest level used.
    pub resolution: f64,
    /// False when the Lipschitz slack swamps the upper end, so the bracket
    /// carries no positive information.
    pub certified: bool,
    /// Slack subtracted for the lower end at the finest level.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulusKind {
    Convexity,
    Complex,
}

pub fn delta_convexity_closed(space: &SpaceDesc, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if space.p < 2.0 || space.p.is_infinite() {
        return Err(Error::UnsupportedSpace(format!(
            "no closed form for {space}; use bracket estimator"
        )));
    }
    if space.p == 2.0 {
        Ok(1.0 - (1.0 - (eps / 2.0).powi(2)).sqrt())
    } else {
        Ok(1.0 - (1.0 - (eps / 2.0).powf(space.p)).powf(1.0 / space.p))
    }
}

/// `delta_C` of a Hilbert space of dimension at least two:
/// `sup_lambda ||x + lambda eps y||^2 = 1 + eps^2 + 2 eps sup Re(lambda <y,x>)`
/// is smallest for orthogonal pairs.
pub fn delta_complex_hilbert(eps: f64) -> f64 {
    (1.0 + eps * eps).sqrt() - 1.0
}

/// Partial sums of `mean_t |1 + r e^{it}| = sum_k binom(1/2,k)^2 r^{2k}`
/// (`r <= 1`); every term is positive, so each partial sum is a lower bound.
pub fn circle_mean_lower(r: f64) -> f64 {
    if r > 1.0 {
        return r * circle_mean_lower(1.0 / r);
    }
    let r2 = r * r;
    let mut coeff = 1.0f64; // binom(1/2, k)
    let mut pow = 1.0f64;
    let mut sum = 0.0;
    for k in 0..200_000 {
        let term = coeff * coeff * pow;
        sum += term;
        if term < 1e-18 {
            break;
        }
        coeff *= (0.5 - k as f64) / (k as f64 + 1.0);
        pow *= r2;
    }
    sum
}

/// Certified lower bound on `delta_C` for a complex `l_1`-sum of complex
/// Hilbert spaces (scalars included): averaging over `lambda` and using
/// subadditivity of `(a, b) -> mean_t |a + b e^{it}|` gives
/// `sup_lambda ||x + lambda eps y|| >= mean_t |1 + eps e^{it}|`.
pub fn delta_complex_l1_sum_lower(eps: f64) -> f64 {
    (circle_mean_lower(eps) - 1.0).max(0.0)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, 2]")));
    }
    Ok(())
}

/// Nonnegative sphere points: the positive-orthant cube faces, projected.
fn magnitude_grid(dim: usize, p: f64, n: usize) -> Vec<Vec<f64>> {
    let free = dim - 1;
    let total = n.pow(free as u32);
    let mut out = Vec::with_capacity(dim * total);
    for axis in 0..dim {
        for idx in 0..total {
            let mut rest = idx;
            let mut v = Vec::with_capacity(dim);
            for k in 0..dim {
                if k == axis {
                    v.push(1.0);
                } else {
                    v.push(((rest % n) as f64 + 0.5) / n as f64);
                    rest /= n;
                }
            }
            let c: Vec<C64> = v.iter().map(|&a| C64::new(a, 0.0)).collect();
            let nv = lp_norm(&c, p);
            out.push(v.into_iter().map(|a| a / nv).collect());
        }
    }
    out
}

/// Unimodular phase patterns; `pin_first` fixes the first entry to 1.
fn phase_grid(field: Field, dim: usize, m: usize, pin_first: bool) -> Vec<Vec<C64>> {
    let choices: Vec<C64> = match field {
        Field::Real => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
        Field::Complex => (0..m)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect(),
    };
    let free = if pin_first { dim - 1 } else { dim };
    let total = choices.len().pow(free as u32);
    (0..total)
        .map(|mut idx| {
            let mut ph = Vec::with_capacity(dim);
            if pin_first {
                ph.push(C64::new(1.0, 0.0));
            }
            for _ in 0..free {
                ph.push(choices[idx % choices.len()]);
                idx /= choices.len();
            }
            ph
        })
        .collect()
}

struct Grid {
    xs: Vec<Vec<C64>>,
    ys: Vec<Vec<C64>>,
    hx: f64,
    hy: f64,
}

fn build_grid(space: &SpaceDesc, n: usize, m: usize, pin_y_phase: bool) -> Grid {
    let mags = magnitude_grid(space.dim, space.p, n);
    let xs: Vec<Vec<C64>> = mags
        .iter()
        .map(|r| r.iter().map(|&a| C64::new(a, 0.0)).collect())
        .collect();
    let phases = phase_grid(space.field, space.dim, m, pin_y_phase);
    let mut ys = Vec::with_capacity(mags.len() * phases.len());
    for r in &mags {
        for ph in &phases {
            ys.push(r.iter().zip(ph).map(|(a, z)| z * *a).collect());
        }
    }
    // ||r - r'||_p <= 2 ||v - v'||_p <= (dim-1)^{1/p} / n for the nearest centre
    let free = (space.dim - 1) as f64;
    let mag_radius = if space.dim == 1 {
        0.0
    } else if space.p.is_infinite() {
        1.0 / n as f64
    } else {
        free.powf(1.0 / space.p) / n as f64
    };
    let phase_radius = match space.field {
        Field::Real => 0.0,
        Field::Complex => PI / m as f64,
    };
    Grid {
        xs,
        ys,
        hx: mag_radius,
        hy: mag_radius + phase_radius,
    }
}

fn levels(resolution: f64) -> Result<Vec<usize>> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Precondition(format!(
            "resolution {resolution} must lie in (0, 1]"
        )));
    }
    let top = (1.0 / resolution).log2().ceil().max(1.0) as u32;
    Ok((1..=top).map(|l| 1usize << l).collect())
}

/// Cap on pair evaluations per level; coarser levels still run when a finer
/// one would exceed it.
const MAX_LEVEL_WORK: usize = 400_000_000;

fn diff_norm(p: f64, a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
    lp_norm(&d, p)
}

/// Certified bracket for the modulus of convexity at `eps`.
pub fn delta_convexity_bracket(space: &SpaceDesc, eps: f64, resolution: f64) -> Result<ModulusBracket> {
    check_eps(eps)?;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut slack = f64::INFINITY;
    let mut used = 1.0;
    for n in levels(resolution)? {
        let m = 4 * n;
        let g = build_grid(space, n, m, false);
        if g.xs.len() * g.ys.len() > MAX_LEVEL_WORK {
            break;
        }
        let h = g.hx + g.hy;
        let p = space.p;
        let (lev_lo, lev_hi) = g
            .xs
            .par_iter()
            .map(|x| {
                let mut l = f64::INFINITY;
                let mut u = f64::INFINITY;
                let mut mid = vec![C64::new(0.0, 0.0); x.len()];
                for y in &g.ys {
                    let sep = diff_norm(p, x, y);
                    if sep < eps - h {
                        continue;
                    }
                    for k in 0..x.len() {
                        mid[k] = (x[k] + y[k]) * 0.5;
                    }
                    let obj = 1.0 - lp_norm(&mid, p);
                    l = l.min(obj - 0.5 * h);
                    if sep >= eps {
                        u = u.min(obj);
                    }
                }
                (l, u)
            })
            .reduce(
                || (f64::INFINITY, f64::INFINITY),
                |a, b| (a.0.min(b.0), a.1.min(b.1)),
            );
        lo = lo.max(lev_lo);
        hi = hi.min(lev_hi);
        slack = 0.5 * h;
        used = 1.0 / n as f64;
    }
    Ok(finish(eps, lo, hi, used, slack))
}

fn finish(eps: f64, lo: f64, hi: f64, resolution: f64, slack: f64) -> ModulusBracket {
    // both moduli are nonnegative
    let hi = hi.max(0.0);
    let lo = lo.max(0.0).min(hi);
    ModulusBracket {
        epsilon: eps,
        lo,
        hi,
        resolution,
        certified: slack < hi,
        slack,
    }
}

/// Certified bracket for the modulus of C-convexity at `eps`.
pub fn delta_complex_bracket(space: &SpaceDesc, eps: f64, resolution: f64) -> Result<ModulusBracket> {
    if space.field != Field::Complex {
        return Err(Error::UnsupportedField(
            "the C-convexity bracket needs a complex space".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps = {eps} must be positive")));
    }
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut slack = f64::INFINITY;
    let mut used = 1.0;
    let p = space.p;
    let fine = 1usize << 14;
    let fine_lambdas: Vec<C64> = (0..fine)
        .map(|k| C64::from_polar(eps, 2.0 * PI * k as f64 / fine as f64))
        .collect();
    for n in levels(resolution)? {
        let m = 4 * n;
        let g = build_grid(space, n, m, true);
        let lambdas: Vec<C64> = (0..m)
            .map(|k| C64::from_polar(eps, 2.0 * PI * k as f64 / m as f64))
            .collect();
        if g.xs.len() * g.ys.len() * m > MAX_LEVEL_WORK {
            break;
        }
        let sup_on = |x: &[C64], y: &[C64], lams: &[C64], buf: &mut Vec<C64>| {
            let mut best = f64::NEG_INFINITY;
            for lam in lams {
                for k in 0..x.len() {
                    buf[k] = x[k] + lam * y[k];
                }
                best = best.max(lp_norm(buf, p));
            }
            best
        };
        // F(x, y) = sup_lambda ||x + lambda eps y|| is (1 + eps)-Lipschitz
        let h = g.hx + eps * g.hy;
        let lam_slack = eps * PI / m as f64;
        let (lev_min, arg) = g
            .xs
            .par_iter()
            .enumerate()
            .map(|(ix, x)| {
                let mut buf = vec![C64::new(0.0, 0.0); x.len()];
                let mut best = (f64::INFINITY, (ix, 0usize));
                for (iy, y) in g.ys.iter().enumerate() {
                    let v = sup_on(x, y, &lambdas, &mut buf);
                    if v < best.0 {
                        best = (v, (ix, iy));
                    }
                }
                best
            })
            .reduce(
                || (f64::INFINITY, (0, 0)),
                |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            );
        lo = lo.max(lev_min - 1.0 - h);
        hi = hi.min(lev_min + lam_slack - 1.0);
        let (ix, iy) = arg;
        let mut buf = vec![C64::new(0.0, 0.0); space.dim];
        let refined = sup_on(&g.xs[ix], &g.ys[iy], &fine_lambdas, &mut buf);
        hi = hi.min(refined + eps * PI / fine as f64 - 1.0);
        slack = h;
        used = 1.0 / n as f64;
    }
    Ok(finish(eps, lo, hi, used, slack))
}

/// `theta(eps)` for micro-transitivity; planar rotations realise
/// `||U - I|| = ||x - y||` in Hilbert spaces, so any `theta < eps` works.
pub fn theta_micro_transitive(space: &SpaceDesc, eps: f64) -> Result<f64> {
    if !space.is_hilbert() {
        return Err(Error::UnsupportedSpace(format!(
            "micro-transitivity not supported for {space}"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps = {eps} must be positive")));
    }
    Ok(eps / 2.0)
}

/// A modulus function, exact or as a certified lower bound.
#[derive(Clone)]
pub enum Modulus {
    /// `delta_X` of `l_p`, `p >= 2`.
    ConvexityLp { p: f64 },
    /// `delta_C` of a Hilbert space of dimension at least two.
    ComplexHilbert,
    /// `delta_C(eps) = eps` for the scalar field.
    Scalar,
    /// Mean-value lower bound for complex `l_1`-sums of Hilbert spaces.
    L1SumLower,
    /// Lower end of a certified bracket of the given space.
    Bracketed {
        space: SpaceDesc,
        kind: ModulusKind,
        resolution: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulus::ConvexityLp { p } => write!(f, "ConvexityLp(p={p})"),
            Modulus::ComplexHilbert => write!(f, "ComplexHilbert"),
            Modulus::Scalar => write!(f, "Scalar"),
            Modulus::L1SumLower => write!(f, "L1SumLower"),
            Modulus::Bracketed {
                space,
                kind,
                resolution,
            } => write!(f, "Bracketed({space}, {kind:?}, {resolution})"),
            Modulus::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Modulus {
    pub fn eval(&self, eps: f64) -> Result<f64> {
        match self {
            Modulus::ConvexityLp { p } => {
                delta_convexity_closed(&SpaceDesc::real_l(*p, 2), eps.min(2.0))
            }
            Modulus::ComplexHilbert => Ok(delta_complex_hilbert(eps)),
            Modulus::Scalar => Ok(eps),
            Modulus::L1SumLower => Ok(delta_complex_l1_sum_lower(eps)),
            Modulus::Bracketed {
                space,
                kind,
                resolution,
            } => match kind {
                ModulusKind::Convexity => {
                    Ok(delta_convexity_bracket(space, eps.min(2.0), *resolution)?.lo)
                }
                ModulusKind::Complex => Ok(delta_complex_bracket(space, eps, *resolution)?.lo),
            },
            Modulus::Custom(f) => Ok(f(eps)),
        }
    }

    /// `delta_X` for a domain block space.
    pub fn convexity_of(space: &SpaceDesc) -> Result<Self> {
        if !space.is_uniformly_convex() {
            return Err(Error::HypothesisViolated(format!(
                "{space} is not uniformly convex"
            )));
        }
        if space.p >= 2.0 && space.dim >= 2 {
            Ok(Modulus::ConvexityLp { p: space.p })
        } else {
            Ok(Modulus::Bracketed {
                space: *space,
                kind: ModulusKind::Convexity,
                resolution: 1.0 / 256.0,
            })
        }
    }

    /// `delta_C` for a range space.
    pub fn complex_convexity_of(space: &SpaceDesc) -> Result<Self> {
        if space.dim == 1 {
            return Ok(Modulus::Scalar);
        }
        if !space.is_c_uniformly_convex() {
            return Err(Error::HypothesisViolated(format!(
                "{space} is not C-uniformly convex"
            )));
        }
        if space.is_hilbert() {
            Ok(Modulus::ComplexHilbert)
        } else if space.p == 1.0 && space.field == Field::Complex {
            Ok(Modulus::L1SumLower)
        } else if space.field == Field::Complex {
            Ok(Modulus::Bracketed {
                space: *space,
                kind: ModulusKind::Complex,
                resolution: 1.0 / 16.0,
            })
        } else {
            // for real spaces C-convexity coincides with uniform convexity;
            // ||x + lambda eps y|| >= 2(1 - delta(eps))... is not used here
            Err(Error::UnsupportedSpace(format!(
                "no C-convexity modulus available for {space}"
            )))
        }
    }

    /// `delta_C` of `l_1^m(X*)` for the bilinear pipelines.
    pub fn complex_convexity_of_dual_l1_sum(base: &SpaceDesc) -> Result<Self> {
        if base.field != Field::Complex {
            return Err(Error::UnsupportedField(
                "bilinear constructions require complex scalars".into(),
            ));
        }
        if base.is_hilbert() || base.is_scalar() {
            Ok(Modulus::L1SumLower)
        } else {
            Err(Error::UnsupportedSpace(format!(
                "no C-convexity bound for the l_1-sum of the dual of {base}"
            )))
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::HypothesisViolated(format!(
            "{name} evaluates to {v}; space not (C-)uniformly convex"
        )))
    }
}

fn check_unit_interval(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

/// `min { eps/16, d_C(eps/16) / (1 + d_C(eps/16)), d_X(eps/2) }`.
pub fn eta_operator_bpb(eps: f64, delta_x: &Modulus, delta_c: &Modulus) -> Result<f64> {
    check_unit_interval(eps)?;
    let dc = positive("delta_C(eps/16)", delta_c.eval(eps / 16.0)?)?;
    let dx = positive("delta_X(eps/2)", delta_x.eval(eps / 2.0)?)?;
    Ok((eps / 16.0).min(dc / (1.0 + dc)).min(dx))
}

/// Premise band of the operator correction: `eta^6 / 64`.
pub fn operator_premise_band(eta: f64) -> f64 {
    eta.powi(6) / 64.0
}

/// `min { 1 - ||x(i)|| : ||x(i)|| < 1 }`, `None` when every block is a unit
/// block (the term is then left out of the minimum).
pub fn m_of(x: &BlockVector) -> Option<f64> {
    x.block_norms()
        .into_iter()
        .filter(|&r| r < 1.0 - UNIT_BLOCK_TOL)
        .map(|r| 1.0 - r)
        .reduce(f64::min)
}

fn check_unit_point(x: &BlockVector) -> Result<()> {
    let norms = x.block_norms();
    let top = norms.iter().cloned().fold(0.0, f64::max);
    if (top - 1.0).abs() > UNIT_BLOCK_TOL {
        return Err(Error::Precondition(format!(
            "point must lie on the unit sphere, has norm {top}"
        )));
    }
    Ok(())
}

/// Moduli and spaces for the operator constructions.
#[derive(Debug, Clone)]
pub struct OperatorModuli {
    pub domain_base: SpaceDesc,
    pub delta_x: Modulus,
    pub delta_c: Modulus,
}

impl OperatorModuli {
    pub fn for_spaces(domain_base: &SpaceDesc, range: &SpaceDesc) -> Result<Self> {
        Ok(OperatorModuli {
            domain_base: *domain_base,
            delta_x: Modulus::convexity_of(domain_base)?,
            delta_c: Modulus::complex_convexity_of(range)?,
        })
    }

    pub fn eta(&self, eps: f64) -> Result<f64> {
        eta_operator_bpb(eps, &self.delta_x, &self.delta_c)
    }

    /// The BPBp function of the finite-sum construction, i.e. the premise
    /// band `eta(eps)^6 / 64`.
    pub fn bpb_band(&self, eps: f64) -> Result<f64> {
        Ok(operator_premise_band(self.eta(eps)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSchedule {
    pub gamma: f64,
    /// `None` when every block of the point has norm one.
    pub m_terms: Vec<Option<f64>>,
    pub inner_eps: f64,
    pub inner_band: f64,
    pub projection_term: f64,
}

/// `min { m_x0, eta(theta(eps/3)/2), d_C(eps/6) / (1 + d_C(eps/6)) }` where
/// `eta(.)` is the BPBp function of the finite-sum operator construction.
pub fn gamma_operator_local(eps: f64, x0: &BlockVector, moduli: &OperatorModuli) -> Result<LocalSchedule> {
    check_unit_interval(eps)?;
    check_unit_point(x0)?;
    let theta = theta_micro_transitive(&moduli.domain_base, eps / 3.0)?;
    let inner_eps = theta / 2.0;
    let inner_band = positive("inner BPBp band", moduli.bpb_band(inner_eps)?)?;
    let dc = positive("delta_C(eps/6)", moduli.delta_c.eval(eps / 6.0)?)?;
    let projection_term = dc / (1.0 + dc);
    let m = m_of(x0);
    let mut gamma = inner_band.min(projection_term);
    if let Some(m) = m {
        gamma = gamma.min(m);
    }
    Ok(LocalSchedule {
        gamma,
        m_terms: vec![m],
        inner_eps,
        inner_band,
        projection_term,
    })
}

/// Moduli and spaces for the bilinear constructions.
#[derive(Debug, Clone)]
pub struct BilinearModuli {
    pub base: SpaceDesc,
    pub delta_x: Modulus,
    /// `delta_C` of `l_1(X*)`.
    pub delta_c_dual: Modulus,
}

impl BilinearModuli {
    pub fn for_base(base: &SpaceDesc) -> Result<Self> {
        if base.field != Field::Complex {
            return Err(Error::UnsupportedField(
                "bilinear constructions require complex scalars".into(),
            ));
        }
        Ok(BilinearModuli {
            base: *base,
            delta_x: Modulus::convexity_of(base)?,
            delta_c_dual: Modulus::complex_convexity_of_dual_l1_sum(base)?,
        })
    }

    /// `gamma(eps) = d_C(eps/2) / (1 + d_C(eps/2))` of the bilinear tail lemma.
    pub fn tail_gamma(&self, eps: f64) -> Result<f64> {
        let dc = positive("delta_C(eps/2)", self.delta_c_dual.eval(eps / 2.0)?)?;
        Ok(dc / (1.0 + dc))
    }

    pub fn eta(&self, eps: f64) -> Result<f64> {
        eta_bilinear_bpb(eps, self)
    }

    /// Premise band `eta(eps)^12 / 2^22`.
    pub fn bpb_band(&self, eps: f64) -> Result<f64> {
        Ok(bilinear_premise_band(self.eta(eps)?))
    }
}

pub fn bilinear_premise_band(eta: f64) -> f64 {
    eta.powi(12) / 2f64.powi(22)
}

/// `min { eps/2^4, gamma(eps/2^4), d_X(eps/2) }`.
pub fn eta_bilinear_bpb(eps: f64, moduli: &BilinearModuli) -> Result<f64> {
    check_unit_interval(eps)?;
    let g = positive("gamma(eps/16)", moduli.tail_gamma(eps / 16.0)?)?;
    let dx = positive("delta_X(eps/2)", moduli.delta_x.eval(eps / 2.0)?)?;
    Ok((eps / 16.0).min(g).min(dx))
}

/// `min { m_xL, m_xR, eta(theta(eps/3)/2), d_C(eps/6) / (1 + d_C(eps/6)) }`
/// with `eta(.)` the BPBp function of the finite-sum bilinear construction.
pub fn gamma_bilinear_local(
    eps: f64,
    x_left: &BlockVector,
    x_right: &BlockVector,
    moduli: &BilinearModuli,
) -> Result<LocalSchedule> {
    check_unit_interval(eps)?;
    check_unit_point(x_left)?;
    check_unit_point(x_right)?;
    let theta = theta_micro_transitive(&moduli.base, eps / 3.0)?;
    let inner_eps = theta / 2.0;
    let inner_band = positive("inner BPBp band", moduli.bpb_band(inner_eps)?)?;
    let dc = positive("delta_C(eps/6)", moduli.delta_c_dual.eval(eps / 6.0)?)?;
    let projection_term = dc / (1.0 + dc);
    let ml = m_of(x_left);
    let mr = m_of(x_right);
    let mut gamma = inner_band.min(projection_term);
    for m in [ml, mr].into_iter().flatten() {
        gamma = gamma.min(m);
    }
    Ok(LocalSchedule {
        gamma,
        m_terms: vec![ml, mr],
        inner_eps,
        inner_band,
        projection_term,
    })
}
