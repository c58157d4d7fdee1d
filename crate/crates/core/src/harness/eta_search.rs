use super::BudgetSpec;
use crate::error::{Error, Result};
use crate::model_spaces::{gaussian_coords, BlockVector, Field, SpaceDesc, SumSpaceDesc, C64};
use crate::moduli::{operator_premise_band, OperatorModuli};
use crate::operators::{operator_norm, BlockOperator};
use crate::pipelines::normalize_blocks;
use crate::rng::{derive_seed, stream, GENERATOR_NAME};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSearchConfig {
    pub base: SpaceDesc,
    pub range: SpaceDesc,
    pub n: usize,
    pub eps: f64,
    pub instances: usize,
    /// Random directions tried per instance.
    pub directions: usize,
    /// Accepted-or-rejected local moves around the best direction.
    pub refine_steps: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub budget: BudgetSpec,
}

impl Default for EtaSearchConfig {
    fn default() -> Self {
        EtaSearchConfig {
            base: SpaceDesc::complex_l(2.0, 2),
            range: SpaceDesc::complex_l(1.0, 3),
            n: 3,
            eps: 0.3,
            instances: 8,
            directions: 24,
            refine_steps: 24,
            master_seed: 7,
            budget: BudgetSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaInstanceRow {
    pub instance: usize,
    pub seed: u64,
    /// `1 - ||T x||` at the first point found at orbit distance `eps`;
    /// `None` if no path left the `eps`-neighbourhood of the orbit.
    pub failure_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSearchReport {
    pub generator: String,
    pub config: EtaSearchConfig,
    pub eta: f64,
    pub band: f64,
    /// Smallest failure margin over instances.
    pub observed_margin: Option<f64>,
    /// `observed_margin / band`.
    pub ratio: Option<f64>,
    pub rows: Vec<EtaInstanceRow>,
    /// The search is a local heuristic; the observed margin only bounds
    /// the best possible band from above.
    pub heuristic: bool,
}

/// `min_|l|=1 ||x - l y||` in the `l_inf` sum.
fn orbit_distance(x: &BlockVector, y: &BlockVector) -> f64 {
    let at = |l: C64| x.distance(&y.scale(l));
    if x.base().field == Field::Real {
        return at(C64::new(1.0, 0.0)).min(at(C64::new(-1.0, 0.0)));
    }
    let grid = 360;
    let f = |t: f64| at(C64::from_polar(1.0, t));
    let (mut best_t, mut best) = (0.0, f(0.0));
    for k in 1..grid {
        let t = 2.0 * PI * k as f64 / grid as f64;
        let v = f(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let h = 2.0 * PI / grid as f64;
    let (mut a, mut b) = (best_t - h, best_t + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.min(f((a + b) / 2.0))
}

fn direction(ss: &SumSpaceDesc, rng: &mut impl Rng) -> Vec<Vec<C64>> {
    (0..ss.blocks).map(|_| gaussian_coords(&ss.base, rng)).collect()
}

fn along(x: &BlockVector, d: &[Vec<C64>], s: f64) -> Option<BlockVector> {
    let moved = BlockVector {
        sum_space: x.sum_space,
        blocks: x
            .blocks
            .iter()
            .zip(d)
            .map(|(b, v)| b.iter().zip(v).map(|(p, q)| p + q * s).collect())
            .collect(),
    };
    normalize_blocks(&moved, &(0..x.len()).collect::<Vec<_>>())
}

/// Margin at the first point of the path at orbit distance `eps`.
fn path_margin(t: &BlockOperator, x: &BlockVector, d: &[Vec<C64>], eps: f64) -> Option<f64> {
    let fails = |s: f64| along(x, d, s).map(|p| orbit_distance(&p, x) >= eps);
    let mut hi = None;
    let mut s = 1e-3;
    while s < 1e4 {
        if fails(s)? {
            hi = Some(s);
            break;
        }
        s *= 1.5;
    }
    let mut hi = hi?;
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fails(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = along(x, d, hi)?;
    Some(1.0 - t.range.norm_of(&t.apply_raw(&p.blocks)))
}

fn instance_row(cfg: &EtaSearchConfig, k: usize) -> Result<EtaInstanceRow> {
    let seed = derive_seed(cfg.master_seed, k as u64);
    let mut rng = stream(seed, 0);
    let ss = SumSpaceDesc::new(cfg.base, cfg.n)?;
    let t = BlockOperator::random(ss, cfg.range, &mut rng);
    let w = operator_norm(&t, &cfg.budget.to_budget());
    let t = t.normalize(w.lo)?;
    let x = w.witness;
    let mut best: Option<(f64, Vec<Vec<C64>>)> = None;
    let consider = |d: Vec<Vec<C64>>, best: &mut Option<(f64, Vec<Vec<C64>>)>| {
        if let Some(m) = path_margin(&t, &x, &d, cfg.eps) {
            if best.as_ref().is_none_or(|(b, _)| m < *b) {
                *best = Some((m, d));
            }
        }
    };
    for _ in 0..cfg.directions {
        let d = direction(&ss, &mut rng);
        consider(d, &mut best);
    }
    let mut step = 0.5;
    for _ in 0..cfg.refine_steps {
        let Some((_, d0)) = best.clone() else { break };
        let e = direction(&ss, &mut rng);
        let d: Vec<Vec<C64>> = d0
            .iter()
            .zip(&e)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q * step).collect())
            .collect();
        let before = best.as_ref().map(|b| b.0);
        consider(d, &mut best);
        if best.as_ref().map(|b| b.0) == before {
            step *= 0.8;
        }
    }
    Ok(EtaInstanceRow {
        instance: k,
        seed,
        failure_margin: best.map(|b| b.0),
    })
}

/// Searches for unit-norm operators and points with a small premise margin
/// whose every nearby attaining point is far away. Each path from the norm
/// witness leaves the `eps`-orbit at some point; its margin is recorded.
pub fn eta_tightness_search(cfg: &EtaSearchConfig) -> Result<EtaSearchReport> {
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::Precondition("eps must lie in (0, 1)".into()));
    }
    let eta = OperatorModuli::for_spaces(&cfg.base, &cfg.range)?.eta(cfg.eps)?;
    let band = operator_premise_band(eta);
    let rows: Vec<EtaInstanceRow> = (0..cfg.instances)
        .into_par_iter()
        .map(|k| instance_row(cfg, k))
        .collect::<Result<_>>()?;
    let observed_margin = rows.iter().filter_map(|r| r.failure_margin).reduce(f64::min);
    Ok(EtaSearchReport {
        generator: GENERATOR_NAME.to_string(),
        config: cfg.clone(),
        eta,
        band,
        observed_margin,
        ratio: observed_margin.map(|m| m / band),
        rows,
        heuristic: true,
    })
}
