//! Instance generation, batch experiments, lemma validation and the
//! heuristic margin search.

mod eta_search;
mod lemmas;

pub use eta_search::{eta_tightness_search, EtaInstanceRow, EtaSearchConfig, EtaSearchReport};
pub use lemmas::{lemma_validation_suite, LemmaConfig, LemmaReport, SeriesSummary, TailSummary};

use crate::bilinear::{bilinear_norm, BilinearJson, BlockBilinear};
use crate::certify::BnbBudget;
use crate::error::{Error, Result};
use crate::model_spaces::{gaussian_coords, BlockVector, SpaceDesc, SumSpaceDesc, VectorJson, C64};
use crate::moduli::{
    bilinear_premise_band, gamma_bilinear_local, gamma_operator_local, operator_premise_band, BilinearModuli,
    OperatorModuli,
};
use crate::operators::{operator_norm, BlockOperator, NormBudget, OperatorJson};
use crate::pipelines::{
    premise_holds, run_bilinear, run_bilinear_local, run_operator, run_operator_local, BpbCertificate, Fault,
    PipelineKind, PipelineOptions,
};
use crate::rng::{derive_seed, stream, GENERATOR_NAME};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub starts: usize,
    pub iterations: usize,
    pub bnb_evals: usize,
    pub bnb_gap: f64,
    #[serde(default = "default_retry")]
    pub bnb_retry_evals: usize,
}

fn default_retry() -> usize {
    NormBudget::default().retry_evals
}

impl Default for BudgetSpec {
    fn default() -> Self {
        let b = NormBudget::default();
        BudgetSpec {
            starts: b.starts,
            iterations: b.iterations,
            bnb_evals: b.bnb.max_evals,
            bnb_gap: b.bnb.target_gap,
            bnb_retry_evals: b.retry_evals,
        }
    }
}

impl BudgetSpec {
    pub fn to_budget(self) -> NormBudget {
        NormBudget {
            starts: self.starts,
            iterations: self.iterations,
            bnb: BnbBudget {
                max_evals: self.bnb_evals,
                target_gap: self.bnb_gap,
            },
            retry_evals: self.bnb_retry_evals,
            ..NormBudget::default()
        }
    }
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pipeline: PipelineKind,
    /// The block space `X`.
    pub base: SpaceDesc,
    pub n: usize,
    /// Right block count for bilinear pipelines.
    #[serde(default)]
    pub m: Option<usize>,
    /// `Y` for operator pipelines.
    #[serde(default)]
    pub range: Option<SpaceDesc>,
    pub eps: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub attain_tol: Option<f64>,
    #[serde(default)]
    pub arith_tol: Option<f64>,
    /// Requested premise margin as a fraction of the band.
    #[serde(default = "half")]
    pub margin_fraction: f64,
    #[serde(default)]
    pub fault: Option<Fault>,
    /// Write wall times into the `millis` column (zero otherwise).
    #[serde(default = "yes")]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Precondition("trials must be at least 1".into()));
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Precondition("every eps must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.margin_fraction) {
            return Err(Error::Precondition("margin_fraction must lie in [0, 1]".into()));
        }
        SumSpaceDesc::new(self.base, self.n)?;
        if self.pipeline.is_bilinear() {
            SumSpaceDesc::new(self.base, self.m.ok_or_else(|| Error::Precondition("bilinear pipelines need m".into()))?)?;
        } else if self.range.is_none() {
            return Err(Error::Precondition("operator pipelines need a range space".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> PipelineOptions {
        let d = PipelineOptions::default();
        PipelineOptions {
            budget: self.budget.to_budget(),
            attain_tol: self.attain_tol.unwrap_or(d.attain_tol),
            arith_tol: self.arith_tol.unwrap_or(d.arith_tol),
            fault: self.fault,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.master_seed, trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Operator { t: BlockOperator, x0: BlockVector },
    Bilinear { b: BlockBilinear, xl: BlockVector, xr: BlockVector },
}

/// On-disk form read by the single-run subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceJson {
    Operator { operator: OperatorJson, x0: VectorJson },
    Bilinear { bilinear: BilinearJson, x_left: VectorJson, x_right: VectorJson },
}

impl Instance {
    pub fn to_json(&self) -> InstanceJson {
        match self {
            Instance::Operator { t, x0 } => InstanceJson::Operator {
                operator: t.to_json(),
                x0: x0.to_json(),
            },
            Instance::Bilinear { b, xl, xr } => InstanceJson::Bilinear {
                bilinear: b.to_json(),
                x_left: xl.to_json(),
                x_right: xr.to_json(),
            },
        }
    }

    pub fn from_json(j: &InstanceJson) -> Result<Self> {
        Ok(match j {
            InstanceJson::Operator { operator, x0 } => Instance::Operator {
                t: BlockOperator::from_json(operator)?,
                x0: BlockVector::from_json(x0)?,
            },
            InstanceJson::Bilinear { bilinear, x_left, x_right } => Instance::Bilinear {
                b: BlockBilinear::from_json(bilinear)?,
                xl: BlockVector::from_json(x_left)?,
                xr: BlockVector::from_json(x_right)?,
            },
        })
    }

    /// `||T x0||` or `|B(x_L, x_R)|`.
    pub fn value(&self) -> f64 {
        match self {
            Instance::Operator { t, x0 } => t.range.norm_of(&t.apply_raw(&x0.blocks)),
            Instance::Bilinear { b, xl, xr } => b.apply_raw(&xl.blocks, &xr.blocks).norm(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: Instance,
    pub seed: u64,
    pub premise_margin: f64,
    pub band: f64,
    /// Size of the perturbation applied to the oracle witness.
    pub perturbation: f64,
}

/// Premise band of `pipeline` at `eps` for the given point(s).
pub fn premise_band(pipeline: PipelineKind, instance: &Instance, eps: f64) -> Result<f64> {
    match (pipeline, instance) {
        (PipelineKind::Operator, Instance::Operator { t, .. }) => {
            let m = OperatorModuli::for_spaces(&t.domain.base, &t.range)?;
            Ok(operator_premise_band(m.eta(eps)?))
        }
        (PipelineKind::OperatorLocal, Instance::Operator { t, x0 }) => {
            let m = OperatorModuli::for_spaces(&t.domain.base, &t.range)?;
            let g = gamma_operator_local(eps, x0, &m)?.gamma;
            Ok(g * g / 4.0)
        }
        (PipelineKind::Bilinear, Instance::Bilinear { b, .. }) => {
            let m = BilinearModuli::for_base(&b.left.base)?;
            Ok(bilinear_premise_band(m.eta(eps)?))
        }
        (PipelineKind::BilinearLocal, Instance::Bilinear { b, xl, xr }) => {
            let m = BilinearModuli::for_base(&b.left.base)?;
            let g = gamma_bilinear_local(eps, xl, xr, &m)?.gamma;
            Ok(g.powi(4) / 64.0)
        }
        _ => Err(Error::Precondition("instance kind does not match the pipeline".into())),
    }
}

fn perturb(x: &BlockVector, delta: f64, rng: &mut impl rand::Rng) -> BlockVector {
    let base = *x.base();
    let blocks = x
        .blocks
        .iter()
        .map(|b| {
            let g = gaussian_coords(&base, rng);
            let v: Vec<C64> = b.iter().zip(&g).map(|(p, q)| p + q * delta).collect();
            let n = base.norm_of(&v);
            v.into_iter().map(|z| z / n).collect()
        })
        .collect();
    BlockVector {
        sum_space: x.sum_space,
        blocks,
    }
}

/// A unit-norm map with a point (pair) inside the premise band of every
/// `eps` in the config: random map, oracle witness, a perturbation of the
/// witness shrunk until the premise holds.
pub fn generate_instance(config: &ExperimentConfig, trial: usize) -> Result<GeneratedInstance> {
    config.validate()?;
    let seed = config.trial_seed(trial);
    let mut rng = stream(seed, 0);
    let budget = config.budget.to_budget();
    let left = SumSpaceDesc::new(config.base, config.n)?;
    let witness = if config.pipeline.is_bilinear() {
        let right = SumSpaceDesc::new(config.base, config.m.unwrap_or(config.n))?;
        let b = BlockBilinear::random(left, right, &mut rng);
        let w = bilinear_norm(&b, &budget);
        Instance::Bilinear {
            b: b.normalize(w.lo)?,
            xl: w.left,
            xr: w.right,
        }
    } else {
        let range = config.range.expect("validated");
        let t = BlockOperator::random(left, range, &mut rng);
        let w = operator_norm(&t, &budget);
        Instance::Operator {
            t: t.normalize(w.lo)?,
            x0: w.witness,
        }
    };
    let mut band = f64::INFINITY;
    for &e in &config.eps {
        band = band.min(premise_band(config.pipeline, &witness, e)?);
    }
    if !premise_holds(witness.value(), band) {
        return Err(Error::Precondition(format!(
            "oracle witness misses the premise: margin {:e}",
            1.0 - witness.value()
        )));
    }
    let target = config.margin_fraction * band;
    let mut delta = target.sqrt();
    let mut chosen = (witness.clone(), 0.0);
    for _ in 0..64 {
        if !(delta > 0.0) {
            break;
        }
        let candidate = match &witness {
            Instance::Operator { t, x0 } => Instance::Operator {
                t: t.clone(),
                x0: perturb(x0, delta, &mut rng),
            },
            Instance::Bilinear { b, xl, xr } => Instance::Bilinear {
                b: b.clone(),
                xl: perturb(xl, delta, &mut rng),
                xr: perturb(xr, delta, &mut rng),
            },
        };
        if premise_holds(candidate.value(), band) && 1.0 - candidate.value() <= target.max(0.0) + f64::EPSILON {
            chosen = (candidate, delta);
            break;
        }
        delta /= 2.0;
    }
    let (instance, perturbation) = chosen;
    Ok(GeneratedInstance {
        premise_margin: 1.0 - instance.value(),
        instance,
        seed,
        band,
        perturbation,
    })
}

/// Runs `pipeline` on an instance.
pub fn run_pipeline(pipeline: PipelineKind, instance: &Instance, eps: f64, opts: &PipelineOptions) -> Result<BpbCertificate> {
    match (pipeline, instance) {
        (PipelineKind::Operator, Instance::Operator { t, x0 }) => run_operator(t, x0, eps, opts),
        (PipelineKind::OperatorLocal, Instance::Operator { t, x0 }) => run_operator_local(t, x0, eps, opts),
        (PipelineKind::Bilinear, Instance::Bilinear { b, xl, xr }) => run_bilinear(b, xl, xr, eps, opts),
        (PipelineKind::BilinearLocal, Instance::Bilinear { b, xl, xr }) => run_bilinear_local(b, xl, xr, eps, opts),
        _ => Err(Error::Precondition("instance kind does not match the pipeline".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Pass,
    Breach,
    PremiseViolated,
    Skipped,
    Error,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Pass => "pass",
            TrialStatus::Breach => "breach",
            TrialStatus::PremiseViolated => "premise_violated",
            TrialStatus::Skipped => "skipped",
            TrialStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub eps: f64,
    /// `eta` or `gamma`.
    pub eta: Option<f64>,
    pub premise_margin: Option<f64>,
    pub attain_residual: Option<f64>,
    pub map_norm_lo: Option<f64>,
    pub map_distance_hi: Option<f64>,
    pub point_distance: Option<f64>,
    pub status: TrialStatus,
    pub detail: Option<String>,
    pub failed_steps: Vec<String>,
    pub steps_logged: usize,
    pub millis: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub total: usize,
    pub passed: usize,
    pub breaches: usize,
    pub premise_violations: usize,
    pub skipped: usize,
    pub errors: usize,
    pub pass_rate: f64,
    pub max_attain_residual: f64,
    pub max_map_norm_deviation: f64,
    pub max_map_distance_ratio: f64,
    pub max_point_distance_ratio: f64,
    /// Counts of `map_distance_hi / eps` in ten equal bins of `[0, 1]`.
    pub map_distance_histogram: Vec<usize>,
    pub point_distance_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub generator: String,
    pub generated_at: u64,
    pub config: ExperimentConfig,
    pub summary: ExperimentSummary,
    pub records: Vec<TrialRecord>,
}

fn count_missing(records: &[TrialRecord], status: TrialStatus) -> usize {
    records.iter().filter(|r| r.status == status).count()
}

fn histogram(values: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut h = vec![0; 10];
    for v in values {
        let k = ((v * 10.0).floor().max(0.0) as usize).min(9);
        h[k] += 1;
    }
    h
}

fn summarize(records: &[TrialRecord]) -> ExperimentSummary {
    let total = records.len();
    let passed = count_missing(records, TrialStatus::Pass);
    let fmax = |f: &dyn Fn(&TrialRecord) -> Option<f64>| records.iter().filter_map(f).fold(0.0, f64::max);
    ExperimentSummary {
        total,
        passed,
        breaches: count_missing(records, TrialStatus::Breach),
        premise_violations: count_missing(records, TrialStatus::PremiseViolated),
        skipped: count_missing(records, TrialStatus::Skipped),
        errors: count_missing(records, TrialStatus::Error),
        pass_rate: if total == 0 { 0.0 } else { passed as f64 / total as f64 },
        max_attain_residual: fmax(&|r| r.attain_residual),
        max_map_norm_deviation: fmax(&|r| r.map_norm_lo.map(|v| (v - 1.0).abs())),
        max_map_distance_ratio: fmax(&|r| r.map_distance_hi.map(|v| v / r.eps)),
        max_point_distance_ratio: fmax(&|r| r.point_distance.map(|v| v / r.eps)),
        map_distance_histogram: histogram(records.iter().filter_map(|r| r.map_distance_hi.map(|v| v / r.eps))),
        point_distance_histogram: histogram(records.iter().filter_map(|r| r.point_distance.map(|v| v / r.eps))),
    }
}

fn blank(trial: usize, seed: u64, eps: f64, status: TrialStatus, detail: String) -> TrialRecord {
    TrialRecord {
        trial,
        seed,
        eps,
        eta: None,
        premise_margin: None,
        attain_residual: None,
        map_norm_lo: None,
        map_distance_hi: None,
        point_distance: None,
        status,
        detail: Some(detail),
        failed_steps: vec![],
        steps_logged: 0,
        millis: 0,
    }
}

fn run_trial(config: &ExperimentConfig, trial: usize) -> Vec<TrialRecord> {
    let seed = config.trial_seed(trial);
    let start = Instant::now();
    let gen = match generate_instance(config, trial) {
        Ok(g) => g,
        Err(e) => {
            return config
                .eps
                .iter()
                .map(|&eps| blank(trial, seed, eps, TrialStatus::Skipped, e.to_string()))
                .collect()
        }
    };
    let gen_millis = start.elapsed().as_millis() as u64;
    let opts = config.options();
    config
        .eps
        .iter()
        .map(|&eps| {
            let t0 = Instant::now();
            let out = run_pipeline(config.pipeline, &gen.instance, eps, &opts);
            let millis = if config.record_timing {
                gen_millis + t0.elapsed().as_millis() as u64
            } else {
                0
            };
            let mut rec = match out {
                Ok(c) => {
                    let failed: Vec<String> = failed_steps(&c);
                    TrialRecord {
                        trial,
                        seed,
                        eps,
                        eta: Some(c.parameter),
                        premise_margin: Some(c.premise_margin),
                        attain_residual: Some(c.attain_residual),
                        map_norm_lo: Some(c.map_norm.lo),
                        map_distance_hi: Some(c.map_distance.hi),
                        point_distance: Some(c.point_distance),
                        status: if failed.is_empty() { TrialStatus::Pass } else { TrialStatus::Breach },
                        detail: failed.first().cloned(),
                        failed_steps: failed,
                        steps_logged: count_steps(&c),
                        millis: 0,
                    }
                }
                Err(e) => {
                    let status = match e {
                        Error::PremiseViolated { .. } => TrialStatus::PremiseViolated,
                        Error::ContractBreach { .. } => TrialStatus::Breach,
                        _ => TrialStatus::Error,
                    };
                    let mut r = blank(trial, seed, eps, status, e.to_string());
                    r.premise_margin = Some(gen.premise_margin);
                    r
                }
            };
            rec.millis = millis;
            rec
        })
        .collect()
}

fn failed_steps(c: &BpbCertificate) -> Vec<String> {
    let mut out: Vec<String> = c.steps.iter().filter(|s| !s.passed).map(|s| s.step.clone()).collect();
    if let Some(inner) = &c.inner {
        out.extend(failed_steps(inner).into_iter().map(|s| format!("inner: {s}")));
    }
    out
}

fn count_steps(c: &BpbCertificate) -> usize {
    c.steps.len() + c.inner.as_ref().map_or(0, |i| count_steps(i))
}

/// Runs every trial at every `eps`; per-trial failures become records.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|k| run_trial(config, k))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(ExperimentReport {
        generator: GENERATOR_NAME.to_string(),
        generated_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: config.clone(),
        summary: summarize(&records),
        records,
    })
}

pub const CSV_COLUMNS: [&str; 10] = [
    "trial",
    "seed",
    "eps",
    "eta",
    "premise_margin",
    "attain_residual",
    "map_distance_hi",
    "point_distance",
    "status",
    "millis",
];

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:e}"))
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        let io = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.trial.to_string(),
                r.seed.to_string(),
                format!("{}", r.eps),
                cell(r.eta),
                cell(r.premise_margin),
                cell(r.attain_residual),
                cell(r.map_distance_hi),
                cell(r.point_distance),
                r.status.as_str().to_string(),
                r.millis.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// 0 when every trial passed, 3 on any breach, 2 on premise
    /// violations, 1 on other errors or skips.
    pub fn exit_code(&self) -> i32 {
        let s = &self.summary;
        if s.breaches > 0 {
            3
        } else if s.premise_violations > 0 {
            2
        } else if s.errors > 0 || s.skipped > 0 {
            1
        } else {
            0
        }
    }
}

/// The CSV with the `millis` column dropped, for reproducibility checks.
pub fn csv_without_timing(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_spaces::Field;

    pub(crate) fn operator_config(trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            pipeline: PipelineKind::Operator,
            base: SpaceDesc::complex_l(2.0, 2),
            n: 3,
            m: None,
            range: Some(SpaceDesc::complex_l(1.0, 3)),
            eps: vec![0.3, 0.6],
            trials,
            master_seed: 42,
            budget: BudgetSpec::default(),
            attain_tol: None,
            arith_tol: None,
            margin_fraction: 0.5,
            fault: None,
            record_timing: true,
        }
    }

    #[test]
    fn zero_margin_returns_the_witness() {
        let mut c = operator_config(1);
        c.margin_fraction = 0.0;
        let g = generate_instance(&c, 0).unwrap();
        assert_eq!(g.perturbation, 0.0);
        assert!(g.premise_margin.abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = operator_config(1);
        let a = generate_instance(&c, 3).unwrap();
        let b = generate_instance(&c, 3).unwrap();
        assert_eq!(a.instance, b.instance);
        assert_eq!(a.seed, b.seed);
    }

    #[test]
    fn generated_operator_instances_satisfy_the_premise() {
        let c = operator_config(100);
        for k in 0..100 {
            let g = generate_instance(&c, k).unwrap();
            let Instance::Operator { t, .. } = &g.instance else { panic!() };
            let w = operator_norm(t, &NormBudget::default());
            assert!((w.lo - 1.0).abs() < 1e-8);
            assert!(premise_holds(g.instance.value() / w.lo, g.band), "{k}");
        }
        let _ = Field::Real;
    }

    #[test]
    fn one_trial_report() {
        let c = operator_config(1);
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.summary.passed, 2);
        assert_eq!(r.exit_code(), 0);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("trial,seed,eps,eta,premise_margin,attain_residual,map_distance_hi,point_distance,status,millis"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn fault_injection_flags_breaches() {
        let mut c = operator_config(2);
        c.fault = Some(Fault::ScaleOutput(1.05));
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.summary.breaches, 4);
        assert!(r.records.iter().all(|x| x.status == TrialStatus::Breach));
        assert_eq!(r.exit_code(), 3);
    }

    #[test]
    fn reruns_are_identical_without_timing() {
        let c = operator_config(3);
        let a = run_experiment(&c).unwrap().to_csv().unwrap();
        let b = run_experiment(&c).unwrap().to_csv().unwrap();
        assert_eq!(csv_without_timing(&a), csv_without_timing(&b));
    }

    #[test]
    fn config_json_roundtrip_and_validation() {
        let c = operator_config(5);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), c);
        let mut bad = c.clone();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.eps = vec![1.5];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn instance_json_roundtrip() {
        let c = operator_config(1);
        let g = generate_instance(&c, 0).unwrap();
        let s = serde_json::to_string(&g.instance.to_json()).unwrap();
        let back = Instance::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, g.instance);
    }
}
