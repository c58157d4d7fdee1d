use super::BudgetSpec;
use crate::bilinear::{bilinear_norm, bilinear_tail_check, BlockBilinear};
use crate::error::Result;
use crate::model_spaces::{SpaceDesc, SumSpaceDesc, C64};
use crate::moduli::{BilinearModuli, Modulus};
use crate::operators::{convex_series_support, operator_norm, tail_bound_check, BlockOperator, IndexSet, TailStatus};
use crate::rng::{derive_seed, stream, GENERATOR_NAME};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub master_seed: u64,
    pub series_trials: usize,
    pub operator_trials: usize,
    pub bilinear_trials: usize,
    #[serde(default)]
    pub budget: BudgetSpec,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            master_seed: 2024,
            series_trials: 1000,
            operator_trials: 100,
            bilinear_trials: 100,
            budget: BudgetSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub trials: usize,
    pub holds: usize,
    pub violations: usize,
    /// Trials where subset enumeration found exactly the returned set.
    pub enumeration_agrees: usize,
    /// Smallest `sum_A alpha - (1 - eta/eta')`.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub trials: usize,
    pub holds: usize,
    pub certified_violations: usize,
    pub vacuous: usize,
    pub inconclusive: usize,
    pub errors: usize,
    /// Largest `tail_hi / eps` over trials that hold.
    pub max_tail_ratio: f64,
    /// Bilinear only: trials whose half-steps both stay below `eps/2`.
    pub steps_ok: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub generator: String,
    pub config: LemmaConfig,
    pub series: SeriesSummary,
    pub operator_tail: TailSummary,
    pub bilinear_tail: TailSummary,
}

impl LemmaReport {
    pub fn exit_code(&self) -> i32 {
        if self.series.violations > 0
            || self.operator_tail.certified_violations > 0
            || self.bilinear_tail.certified_violations > 0
        {
            3
        } else if self.operator_tail.errors > 0 || self.bilinear_tail.errors > 0 {
            1
        } else {
            0
        }
    }
}

struct SeriesOutcome {
    holds: bool,
    agrees: bool,
    slack: f64,
}

fn series_trial(seed: u64) -> Result<SeriesOutcome> {
    let mut rng = stream(seed, 0);
    let k = rng.random_range(1..=6);
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total = raw.iter().sum::<f64>() / rng.random_range(0.9..=1.0);
    let alphas: Vec<f64> = raw.iter().map(|a| a / total).collect();
    let zs: Vec<C64> = (0..k)
        .map(|_| {
            let rad = 1.0 - 0.3 * rng.random::<f64>().powi(2);
            C64::from_polar(rad, 0.6 * (rng.random::<f64>() - 0.5))
        })
        .collect();
    let s: f64 = alphas.iter().zip(&zs).map(|(a, z)| a * z.re).sum();
    let eta = (1.0 - s) * rng.random_range(1.001..1.5) + 1e-9;
    let eta_p = rng.random_range(eta.min(0.99)..1.0);
    let a = convex_series_support(&alphas, &zs, eta, eta_p)?;
    let mass: f64 = a.members.iter().map(|&i| alphas[i]).sum();
    let slack = mass - (1.0 - eta / eta_p);

    // Every subset whose members clear the threshold and whose others do not;
    // there must be exactly one and it must satisfy the averaging bound.
    let mut found = vec![];
    for mask in 0u32..(1 << k) {
        let inside = |i: usize| mask & (1 << i) != 0;
        let consistent = (0..k).all(|i| inside(i) == (zs[i].re > 1.0 - eta_p));
        if consistent {
            let bound: f64 = (0..k)
                .map(|i| if inside(i) { alphas[i] } else { alphas[i] * (1.0 - eta_p) })
                .sum();
            found.push(((0..k).filter(|&i| inside(i)).collect::<Vec<_>>(), bound >= s - 1e-15));
        }
    }
    let agrees = found.len() == 1 && found[0].0 == a.members && found[0].1;
    Ok(SeriesOutcome {
        holds: slack > 0.0,
        agrees,
        slack,
    })
}

fn random_subset(n: usize, rng: &mut impl Rng) -> IndexSet {
    loop {
        let picks: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let a = IndexSet::from_predicate(n, |i| picks[i]);
        if !a.is_empty() {
            return a;
        }
    }
}

fn tally(outcomes: &[Result<(TailStatus, f64, bool)>], bilinear: bool) -> TailSummary {
    let count = |st: TailStatus| outcomes.iter().filter(|o| matches!(o, Ok((s, ..)) if *s == st)).count();
    TailSummary {
        trials: outcomes.len(),
        holds: count(TailStatus::Holds),
        certified_violations: count(TailStatus::CertifiedViolation),
        vacuous: count(TailStatus::Vacuous),
        inconclusive: count(TailStatus::Inconclusive),
        errors: outcomes.iter().filter(|o| o.is_err()).count(),
        max_tail_ratio: outcomes
            .iter()
            .filter_map(|o| match o {
                Ok((TailStatus::Holds, r, _)) => Some(*r),
                _ => None,
            })
            .fold(0.0, f64::max),
        steps_ok: bilinear.then(|| outcomes.iter().filter(|o| matches!(o, Ok((_, _, true)))).count()),
    }
}

fn operator_trial(seed: u64, cfg: &LemmaConfig) -> Result<(TailStatus, f64, bool)> {
    let mut rng = stream(seed, 0);
    let budget = cfg.budget.to_budget();
    let base = SpaceDesc::complex_l(2.0, 2);
    let range = SpaceDesc::complex_l(1.0, 3);
    let mut t = BlockOperator::random(SumSpaceDesc::new(base, 3)?, range, &mut rng);
    let a = random_subset(3, &mut rng);
    let s = rng.random_range(0.0..=0.05);
    for i in a.complement().members {
        t.blocks[i] = t.blocks[i].scale(C64::new(s, 0.0));
    }
    let t = t.normalize(operator_norm(&t, &budget).hi)?;
    let eps = rng.random_range(0.4..=0.9);
    let rep = tail_bound_check(&t, &a, eps, &Modulus::complex_convexity_of(&range)?, &budget)?;
    Ok((rep.status, rep.tail_hi / eps, true))
}

fn bilinear_trial(seed: u64, cfg: &LemmaConfig) -> Result<(TailStatus, f64, bool)> {
    let mut rng = stream(seed, 1);
    let budget = cfg.budget.to_budget();
    let base = SpaceDesc::complex_l(2.0, 2);
    let ss = SumSpaceDesc::new(base, 2)?;
    let mut b = BlockBilinear::random(ss, ss, &mut rng);
    let al = random_subset(2, &mut rng);
    let ar = random_subset(2, &mut rng);
    let s = rng.random_range(0.0..=0.002);
    for (i, row) in b.kernels.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            if !(al.contains(i) && ar.contains(j)) {
                *k = k.scale(C64::new(s, 0.0));
            }
        }
    }
    let b = b.normalize(bilinear_norm(&b, &budget).hi)?;
    let eps = rng.random_range(0.4..=0.9);
    let rep = bilinear_tail_check(&b, &al, &ar, eps, &BilinearModuli::for_base(&base)?, &budget)?;
    Ok((rep.status, rep.tail_hi / eps, rep.left_step_ok && rep.right_step_ok))
}

/// Randomized checks of the convex-series support bound and the two tail
/// bounds.
pub fn lemma_validation_suite(cfg: &LemmaConfig) -> Result<LemmaReport> {
    let series: Vec<SeriesOutcome> = (0..cfg.series_trials)
        .into_par_iter()
        .map(|k| series_trial(derive_seed(cfg.master_seed, k as u64)))
        .collect::<Result<_>>()?;
    let op: Vec<_> = (0..cfg.operator_trials)
        .into_par_iter()
        .map(|k| operator_trial(derive_seed(cfg.master_seed ^ 0x0b, k as u64), cfg))
        .collect();
    let bil: Vec<_> = (0..cfg.bilinear_trials)
        .into_par_iter()
        .map(|k| bilinear_trial(derive_seed(cfg.master_seed ^ 0xb1, k as u64), cfg))
        .collect();
    Ok(LemmaReport {
        generator: GENERATOR_NAME.to_string(),
        config: cfg.clone(),
        series: SeriesSummary {
            trials: series.len(),
            holds: series.iter().filter(|o| o.holds).count(),
            violations: series.iter().filter(|o| !o.holds).count(),
            enumeration_agrees: series.iter().filter(|o| o.agrees).count(),
            min_slack: series.iter().map(|o| o.slack).fold(f64::INFINITY, f64::min),
        },
        operator_tail: tally(&op, false),
        bilinear_tail: tally(&bil, true),
    })
}
