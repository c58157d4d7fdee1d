//! Certified upper bounds for maxima of Lipschitz functions over products of
//! spheres, torus phases and sign vectors, by best-first branch and bound.
//!
//! Every box carries `value(center) + L * radius` as an upper bound, where
//! `radius` bounds the distance (in the factor's own metric) from the center
//! image to any image of the box. The returned `hi` is therefore a genuine
//! upper bound regardless of how much budget was spent; the budget only
//! controls how tight it is.

use crate::linalg::Matrix;
use crate::model_spaces::{Field, C64};
use nalgebra::DMatrix;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// One factor of the search domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    /// Euclidean unit sphere of `K^dim`, charted by the faces of the cube
    /// `[-1,1]^D` (`D` the real dimension) followed by radial projection.
    /// Points on the cube surface have norm at least one, where radial
    /// projection onto the ball is 1-Lipschitz.
    Sphere { field: Field, dim: usize },
    /// Unimodular vectors of `C^k` with the first phase pinned to 1; valid
    /// when the objective is invariant under a global unimodular factor.
    Torus { k: usize },
    /// Sign vectors of `R^k` with the first sign pinned to +1.
    Signs { k: usize },
    /// The Euclidean unit sphere modulo unimodular scalars: on each chart
    /// the coordinate of largest modulus is pinned to the real value 1.
    /// Valid when the objective is invariant under `f -> mu f`, `|mu| = 1`.
    SphereModPhase { field: Field, dim: usize },
}

#[derive(Debug, Clone)]
struct Chart {
    /// per-factor chart index (face, sign pattern)
    faces: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Factor {
    fn chart_count(&self) -> usize {
        match *self {
            Factor::Sphere { field, dim } => 2 * dim * field.real_width(),
            Factor::Torus { .. } => 1,
            Factor::Signs { k } => 1 << (k - 1),
            Factor::SphereModPhase { dim, .. } => dim,
        }
    }

    fn param_count(&self) -> usize {
        match *self {
            Factor::Sphere { field, dim } => dim * field.real_width() - 1,
            Factor::Torus { k } => k - 1,
            Factor::Signs { .. } => 0,
            Factor::SphereModPhase { field, dim } => (dim - 1) * field.real_width(),
        }
    }

    fn param_range(&self) -> (f64, f64) {
        match self {
            Factor::Torus { .. } => (0.0, 2.0 * PI),
            _ => (-1.0, 1.0),
        }
    }

    fn map(&self, chart: usize, params: &[f64]) -> Vec<C64> {
        match *self {
            Factor::Sphere { field, dim } => {
                let d = dim * field.real_width();
                let axis = chart / 2;
                let sign = if chart % 2 == 0 { 1.0 } else { -1.0 };
                let mut v = Vec::with_capacity(d);
                let mut it = params.iter();
                for k in 0..d {
                    v.push(if k == axis { sign } else { *it.next().unwrap() });
                }
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                match field {
                    Field::Real => v.iter().map(|a| C64::new(a / n, 0.0)).collect(),
                    Field::Complex => v
                        .chunks(2)
                        .map(|c| C64::new(c[0] / n, c[1] / n))
                        .collect(),
                }
            }
            Factor::Torus { k } => std::iter::once(C64::new(1.0, 0.0))
                .chain(params.iter().map(|&t| C64::from_polar(1.0, t)))
                .take(k)
                .collect(),
            Factor::SphereModPhase { field, dim } => {
                let w = field.real_width();
                let mut it = params.iter();
                let mut v: Vec<C64> = (0..dim)
                    .map(|k| {
                        if k == chart {
                            C64::new(1.0, 0.0)
                        } else if w == 2 {
                            C64::new(*it.next().unwrap(), *it.next().unwrap())
                        } else {
                            C64::new(*it.next().unwrap(), 0.0)
                        }
                    })
                    .collect();
                let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.iter_mut().for_each(|z| *z /= n);
                v
            }
            Factor::Signs { k } => (0..k)
                .map(|j| {
                    if j > 0 && (chart >> (j - 1)) & 1 == 1 {
                        C64::new(-1.0, 0.0)
                    } else {
                        C64::new(1.0, 0.0)
                    }
                })
                .collect(),
        }
    }

    /// Distance bound from the image of the box center to the image of any
    /// point of the box, given the half-widths of this factor's parameters.
    fn radius(&self, half: &[f64]) -> f64 {
        match self {
            Factor::Sphere { .. } | Factor::SphereModPhase { .. } => {
                half.iter().map(|h| h * h).sum::<f64>().sqrt()
            }
            // |e^{ia} - e^{ib}| <= |a - b|, measured in the sup norm
            Factor::Torus { .. } => half.iter().cloned().fold(0.0, f64::max),
            Factor::Signs { .. } => 0.0,
        }
    }
}

/// A product of factors together with the Lipschitz constant of the
/// objective with respect to each factor.
#[derive(Debug, Clone)]
pub struct Domain {
    pub factors: Vec<Factor>,
    pub lipschitz: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BnbBudget {
    pub max_evals: usize,
    pub target_gap: f64,
}

impl Default for BnbBudget {
    fn default() -> Self {
        BnbBudget {
            max_evals: 200_000,
            target_gap: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    /// Best value actually evaluated (a lower bound on the maximum).
    pub lo: f64,
    /// Certified upper bound on the maximum.
    pub hi: f64,
    pub evals: usize,
    pub argmax: Vec<Vec<C64>>,
}

struct Node {
    ub: f64,
    chart: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.ub.total_cmp(&other.ub) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub.total_cmp(&other.ub)
    }
}

impl Domain {
    pub fn param_count(&self) -> usize {
        self.factors.iter().map(|f| f.param_count()).sum()
    }

    pub fn chart_count(&self) -> usize {
        self.factors.iter().map(|f| f.chart_count()).product()
    }

    fn charts(&self) -> Vec<Chart> {
        let mut out = vec![Chart {
            faces: vec![],
            lo: vec![],
            hi: vec![],
        }];
        for f in &self.factors {
            let (a, b) = f.param_range();
            let mut next = Vec::new();
            for c in &out {
                for face in 0..f.chart_count() {
                    let mut nc = c.clone();
                    nc.faces.push(face);
                    nc.lo.extend(std::iter::repeat(a).take(f.param_count()));
                    nc.hi.extend(std::iter::repeat(b).take(f.param_count()));
                    next.push(nc);
                }
            }
            out = next;
        }
        out
    }

    fn map(&self, faces: &[usize], params: &[f64]) -> Vec<Vec<C64>> {
        let mut off = 0;
        self.factors
            .iter()
            .zip(faces)
            .map(|(f, &face)| {
                let n = f.param_count();
                let v = f.map(face, &params[off..off + n]);
                off += n;
                v
            })
            .collect()
    }

    fn slack(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut off = 0;
        let mut total = 0.0;
        for (f, l) in self.factors.iter().zip(&self.lipschitz) {
            let n = f.param_count();
            let half: Vec<f64> = (off..off + n).map(|k| 0.5 * (hi[k] - lo[k])).collect();
            total += l * f.radius(&half);
            off += n;
        }
        total
    }

    /// Maximizes `objective` over the domain. `objective` receives one
    /// coordinate vector per factor.
    pub fn maximize<F>(&self, objective: F, budget: BnbBudget) -> BnbResult
    where
        F: Fn(&[Vec<C64>]) -> f64,
    {
        let charts = self.charts();
        let mut heap = BinaryHeap::new();
        let mut best = f64::NEG_INFINITY;
        let mut argmax = Vec::new();
        let mut evals = 0usize;
        let mut chart_faces = Vec::with_capacity(charts.len());

        let push = |heap: &mut BinaryHeap<Node>,
                        chart: usize,
                        faces: &[usize],
                        lo: Vec<f64>,
                        hi: Vec<f64>,
                        best: &mut f64,
                        argmax: &mut Vec<Vec<C64>>,
                        evals: &mut usize| {
            let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let pt = self.map(faces, &center);
            let v = objective(&pt);
            *evals += 1;
            if v > *best {
                *best = v;
                *argmax = pt;
            }
            let ub = v + self.slack(&lo, &hi);
            heap.push(Node { ub, chart, lo, hi });
        };

        for (ci, c) in charts.iter().enumerate() {
            chart_faces.push(c.faces.clone());
            push(
                &mut heap,
                ci,
                &c.faces,
                c.lo.clone(),
                c.hi.clone(),
                &mut best,
                &mut argmax,
                &mut evals,
            );
        }

        loop {
            let Some(top) = heap.peek() else { break };
            if top.ub - best <= budget.target_gap || evals >= budget.max_evals {
                break;
            }
            let node = heap.pop().unwrap();
            if node.lo.is_empty() {
                // exact point, nothing to refine
                heap.push(node);
                break;
            }
            let (k, _) = node
                .lo
                .iter()
                .zip(&node.hi)
                .map(|(a, b)| b - a)
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let mid = 0.5 * (node.lo[k] + node.hi[k]);
            let faces = chart_faces[node.chart].clone();
            let (mut hi_a, mut lo_b) = (node.hi.clone(), node.lo.clone());
            hi_a[k] = mid;
            lo_b[k] = mid;
            push(
                &mut heap,
                node.chart,
                &faces,
                node.lo,
                hi_a,
                &mut best,
                &mut argmax,
                &mut evals,
            );
            push(
                &mut heap,
                node.chart,
                &faces,
                lo_b,
                node.hi,
                &mut best,
                &mut argmax,
                &mut evals,
            );
        }

        let top = heap.peek().map_or(best, |n| n.ub).max(best);
        BnbResult {
            lo: best,
            hi: top * (1.0 + 1e-12) + 1e-15,
            evals,
            argmax,
        }
    }
}

/// Upper bound on `max Re g^H M x` over `g`, `x` whose blocks (sizes
/// `g_blocks`, `x_blocks`) are unit vectors, from the block-scalar relaxation
/// `v^H H v <= sum_b d_b + blocks * lambda_max(H - D)` with
/// `H = [[0, M], [M^H, 0]] / 2`, valid for every real `d`.
///
/// `d` starts from the trial point `(g, x)` and is then improved by smoothed
/// descent until the bound is within `1e-9` of `target` or the steps run out.
pub fn block_relaxation_bound(
    m: &Matrix,
    g_blocks: &[usize],
    x_blocks: &[usize],
    g: &[C64],
    x: &[C64],
    target: f64,
) -> f64 {
    let (r, c) = (m.rows, m.cols);
    debug_assert_eq!(g_blocks.iter().sum::<usize>(), r);
    debug_assert_eq!(x_blocks.iter().sum::<usize>(), c);
    let n = r + c;
    let mut h = DMatrix::<C64>::zeros(n, n);
    for i in 0..r {
        for j in 0..c {
            let z = m.at(i, j) * 0.5;
            h[(i, r + j)] = z;
            h[(r + j, i)] = z.conj();
        }
    }
    let blocks: Vec<usize> = g_blocks.iter().chain(x_blocks).copied().collect();
    let owner: Vec<usize> = blocks.iter().enumerate().flat_map(|(b, &k)| std::iter::repeat_n(b, k)).collect();
    let v: Vec<C64> = g.iter().chain(x).copied().collect();
    let hv = &h * DMatrix::from_column_slice(n, 1, &v);
    let mut d = vec![0.0; blocks.len()];
    for (k, &b) in owner.iter().enumerate() {
        d[b] += (v[k].conj() * hv[(k, 0)]).re;
    }

    let stop = target + 1e-9 * (1.0 + target.abs());
    let scale = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() + 1.0;
    let mut mu = 1e-3 * scale;
    let Some((mut best, mut f, mut grad)) = relaxation_step(&h, &owner, &d, mu) else {
        return f64::INFINITY;
    };
    let mut step = 0.1 * scale;
    for it in 0..400 {
        if best <= stop {
            break;
        }
        if it % 80 == 79 {
            mu *= 0.25;
            match relaxation_step(&h, &owner, &d, mu) {
                Some((_, f2, g2)) => (f, grad) = (f2, g2),
                None => break,
            }
        }
        let trial: Vec<f64> = d.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        match relaxation_step(&h, &owner, &trial, mu) {
            Some((bound, f2, g2)) if f2 < f => {
                best = best.min(bound);
                (d, f, grad) = (trial, f2, g2);
                step *= 1.5;
            }
            _ => step *= 0.5,
        }
    }
    best
}

/// Certified bound, smoothed objective and its gradient at `d`.
fn relaxation_step(h: &DMatrix<C64>, owner: &[usize], d: &[f64], mu: f64) -> Option<(f64, f64, Vec<f64>)> {
    let n = h.nrows();
    let nb = d.len() as f64;
    let mut a = h.clone();
    for (k, &b) in owner.iter().enumerate() {
        a[(k, k)] -= d[b];
    }
    let fro = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let eig = a.try_symmetric_eigen(1e-15, 10_000)?;
    let lmax = eig.eigenvalues.max();
    let sum_d: f64 = d.iter().sum();
    let margin = 1e-12 * (fro + 1.0) * n as f64;
    let bound = (sum_d + nb * (lmax + margin)) * (1.0 + 1e-14) + f64::EPSILON;
    let w: Vec<f64> = eig.eigenvalues.iter().map(|l| ((l - lmax) / mu).exp()).collect();
    let z: f64 = w.iter().sum();
    let smooth = sum_d + nb * (lmax + mu * z.ln());
    let mut grad = vec![1.0; d.len()];
    for (i, wi) in w.iter().enumerate() {
        for (k, &b) in owner.iter().enumerate() {
            grad[b] -= nb * wi / z * eig.eigenvectors[(k, i)].norm_sqr();
        }
    }
    Some((bound, smooth, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_chart_images_are_unit() {
        let f = Factor::Sphere {
            field: Field::Complex,
            dim: 2,
        };
        for chart in 0..f.chart_count() {
            let v = f.map(chart, &[0.3, -0.9, 0.1]);
            let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn brackets_the_maximum_of_a_linear_functional_on_the_circle() {
        // max over the unit circle of <a, x> is |a|
        let dom = Domain {
            factors: vec![Factor::Sphere {
                field: Field::Real,
                dim: 2,
            }],
            lipschitz: vec![5.0],
        };
        let r = dom.maximize(
            |x| 3.0 * x[0][0].re + 4.0 * x[0][1].re,
            BnbBudget {
                max_evals: 100_000,
                target_gap: 1e-6,
            },
        );
        assert!(r.lo <= 5.0 + 1e-12 && r.hi >= 5.0);
        assert!(r.hi - r.lo <= 1e-6 + 1e-10);
    }

    #[test]
    fn torus_and_signs_cover_unimodular_vectors() {
        // max_{|f_k|=1} |sum_k c_k f_k| = sum |c_k|
        let c = [C64::new(0.3, 0.4), C64::new(-1.0, 0.0), C64::new(0.0, 2.0)];
        let dom = Domain {
            factors: vec![Factor::Torus { k: 3 }],
            lipschitz: vec![c.iter().map(|z| z.norm()).sum()],
        };
        let r = dom.maximize(
            |f| f[0].iter().zip(&c).map(|(a, b)| a * b).sum::<C64>().norm(),
            BnbBudget {
                max_evals: 400_000,
                target_gap: 1e-4,
            },
        );
        assert!(r.hi >= 3.5 && r.lo <= 3.5 + 1e-12 && r.hi - 3.5 < 1e-3);

        let dom = Domain {
            factors: vec![Factor::Signs { k: 3 }],
            lipschitz: vec![1.0],
        };
        let r = dom.maximize(
            |f| (f[0][0].re * 1.0 - f[0][1].re * 2.0 + f[0][2].re * 0.5).abs(),
            BnbBudget::default(),
        );
        assert_eq!(r.lo, 3.5);
        assert!(r.hi - 3.5 < 1e-10);
    }

    #[test]
    fn projective_chart_covers_the_sphere_up_to_phase() {
        // max over unit f of |<a, f>| is ||a||_2
        let a = [C64::new(0.3, -0.4), C64::new(1.2, 0.5), C64::new(0.0, -0.7)];
        let exact = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let dom = Domain {
            factors: vec![Factor::SphereModPhase {
                field: Field::Complex,
                dim: 3,
            }],
            lipschitz: vec![exact],
        };
        let r = dom.maximize(
            |f| f[0].iter().zip(&a).map(|(x, y)| x * y).sum::<C64>().norm(),
            BnbBudget {
                max_evals: 400_000,
                target_gap: 1e-3,
            },
        );
        assert!(r.lo <= exact + 1e-12 && r.hi >= exact, "{} {} {exact}", r.lo, r.hi);
        assert!(r.hi - r.lo <= 5e-2 * exact, "{} {}", r.lo, r.hi);
    }

    #[test]
    fn exhausted_budget_still_gives_an_upper_bound() {
        let dom = Domain {
            factors: vec![Factor::Sphere {
                field: Field::Real,
                dim: 3,
            }],
            lipschitz: vec![1.0],
        };
        let r = dom.maximize(
            |x| x[0][2].re,
            BnbBudget {
                max_evals: 10,
                target_gap: 0.0,
            },
        );
        assert!(r.hi >= 1.0);
    }
}
