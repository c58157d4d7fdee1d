//! The four correction constructions, run step by step with every
//! intermediate inequality recorded in a [`StepRecord`] log.

mod bilinear_bpb;
mod bilinear_local;
mod isometry;
mod operator_bpb;
mod operator_local;

pub use bilinear_bpb::{correct_bilinear, run_bilinear};
pub use bilinear_local::{correct_bilinear_local, run_bilinear_local};
pub use isometry::{contraction_through_point, micro_transitive_isometry, IsometryBlock, IsometryKind};
pub use operator_bpb::{correct_operator, run_operator};
pub use operator_local::{correct_operator_local, run_operator_local};

use crate::bilinear::{bilinear_norm_with_starts, BilinearJson, BlockBilinear};
use crate::error::{Error, Result};
use crate::model_spaces::{BlockVector, VectorJson, C64};
use crate::operators::{operator_norm_with_starts, BlockOperator, IndexSet, NormBudget, OperatorJson};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Premise margins below this are indistinguishable from exact attainment.
pub const PREMISE_FLOOR: f64 = 8.0 * f64::EPSILON;

/// Smallest `eta'` used in a selection threshold `(1 - eta') ||g||`.
pub const SELECT_FLOOR: f64 = 1e-12;

pub(crate) fn sel(eta_prime: f64) -> f64 {
    eta_prime.max(SELECT_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Operator,
    OperatorLocal,
    Bilinear,
    BilinearLocal,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Operator => "operator",
            PipelineKind::OperatorLocal => "operator-local",
            PipelineKind::Bilinear => "bilinear",
            PipelineKind::BilinearLocal => "bilinear-local",
        }
    }

    pub fn is_bilinear(self) -> bool {
        matches!(self, PipelineKind::Bilinear | PipelineKind::BilinearLocal)
    }
}

/// Deliberate corruption of a finished construction, for harness tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Multiply the corrected map by this factor before the final checks.
    ScaleOutput(f64),
    /// Move the corrected map by this distance along its first block.
    ShiftMap(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub budget: NormBudget,
    pub attain_tol: f64,
    pub arith_tol: f64,
    pub fault: Option<Fault>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            budget: NormBudget::default(),
            attain_tol: 1e-8,
            arith_tol: 1e-10,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    /// `|lhs - rhs| <= tol`.
    #[serde(rename = "~=")]
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrectedMap {
    Operator(BlockOperator),
    Bilinear(BlockBilinear),
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
enum MapJson {
    Operator(OperatorJson),
    Bilinear(BilinearJson),
}

#[derive(Debug, Clone)]
pub struct BpbCertificate {
    pub pipeline: PipelineKind,
    pub eps: f64,
    /// `eta` for the finite-sum constructions, `gamma` for the local ones.
    pub parameter: f64,
    /// Every named threshold used by the run (`eta^3/8`, `band`, ...).
    pub schedule: BTreeMap<String, f64>,
    /// `1 - ||T x0||` (or `1 - |B(xL, xR)|`).
    pub premise_margin: f64,
    pub premise_band: f64,
    pub map: CorrectedMap,
    /// `z0`, or the pair `(u_L, u_R)`.
    pub points: Vec<BlockVector>,
    pub attain_residual: f64,
    /// Norm bracket of the corrected map.
    pub map_norm: Bracket,
    pub map_distance: Bracket,
    pub point_distance: f64,
    pub oracle_slack: f64,
    pub sets: BTreeMap<String, Vec<usize>>,
    pub phases: BTreeMap<String, [f64; 2]>,
    pub notes: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub inner: Option<Box<BpbCertificate>>,
}

#[derive(Serialize)]
struct CertificateJson<'a> {
    pipeline: PipelineKind,
    eps: f64,
    parameter: f64,
    schedule: &'a BTreeMap<String, f64>,
    premise_margin: f64,
    premise_band: f64,
    passed: bool,
    failed_steps: Vec<&'a str>,
    attain_residual: f64,
    map_norm: Bracket,
    map_distance: Bracket,
    point_distance: f64,
    oracle_slack: f64,
    sets: &'a BTreeMap<String, Vec<usize>>,
    phases: &'a BTreeMap<String, [f64; 2]>,
    notes: &'a [String],
    steps: &'a [StepRecord],
    map: MapJson,
    points: Vec<VectorJson>,
    inner: Option<serde_json::Value>,
}

impl BpbCertificate {
    /// Every logged step passed, including those of a nested run.
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.passed) && self.inner.as_ref().is_none_or(|c| c.passed())
    }

    pub fn first_failure(&self) -> Option<&StepRecord> {
        self.steps
            .iter()
            .find(|s| !s.passed)
            .or_else(|| self.inner.as_ref().and_then(|c| c.first_failure()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map = match &self.map {
            CorrectedMap::Operator(t) => MapJson::Operator(t.to_json()),
            CorrectedMap::Bilinear(b) => MapJson::Bilinear(b.to_json()),
        };
        let j = CertificateJson {
            pipeline: self.pipeline,
            eps: self.eps,
            parameter: self.parameter,
            schedule: &self.schedule,
            premise_margin: self.premise_margin,
            premise_band: self.premise_band,
            passed: self.passed(),
            failed_steps: self.steps.iter().filter(|s| !s.passed).map(|s| s.step.as_str()).collect(),
            attain_residual: self.attain_residual,
            map_norm: self.map_norm,
            map_distance: self.map_distance,
            point_distance: self.point_distance,
            oracle_slack: self.oracle_slack,
            sets: &self.sets,
            phases: &self.phases,
            notes: &self.notes,
            steps: &self.steps,
            map,
            points: self.points.iter().map(|p| p.to_json()).collect(),
            inner: self.inner.as_ref().map(|c| c.to_json()),
        };
        serde_json::to_value(j).expect("certificate serializes")
    }

    pub fn operator(&self) -> Option<&BlockOperator> {
        match &self.map {
            CorrectedMap::Operator(t) => Some(t),
            CorrectedMap::Bilinear(_) => None,
        }
    }

    pub fn bilinear(&self) -> Option<&BlockBilinear> {
        match &self.map {
            CorrectedMap::Bilinear(b) => Some(b),
            CorrectedMap::Operator(_) => None,
        }
    }

    /// `Err(ContractBreach)` naming the first failed step.
    pub fn into_result(self) -> Result<Self> {
        match self.first_failure() {
            None => Ok(self),
            Some(s) => Err(Error::breach(
                s.step.clone(),
                format!("{:e} {:?} {:e} (tol {:e})", s.lhs, s.relation, s.rhs, s.tol),
            )),
        }
    }
}

/// Step log with tolerance-aware comparisons.
#[derive(Debug, Default)]
pub(crate) struct Log {
    pub steps: Vec<StepRecord>,
    pub tol: f64,
}

impl Log {
    pub fn new(tol: f64) -> Self {
        Log { steps: vec![], tol }
    }

    pub fn check(&mut self, step: &str, lhs: f64, relation: Relation, rhs: f64) -> bool {
        self.check_tol(step, lhs, relation, rhs, self.tol)
    }

    pub fn check_tol(&mut self, step: &str, lhs: f64, relation: Relation, rhs: f64, tol: f64) -> bool {
        let passed = match relation {
            Relation::Lt => lhs < rhs + tol,
            Relation::Le => lhs <= rhs + tol,
            Relation::Gt => lhs > rhs - tol,
            Relation::Ge => lhs >= rhs - tol,
            Relation::Approx => (lhs - rhs).abs() <= tol,
        };
        self.steps.push(StepRecord {
            step: step.to_string(),
            lhs,
            relation,
            rhs,
            tol,
            passed,
        });
        passed
    }
}

/// The premise `1 - value < band`, read at f64 resolution.
pub fn premise_holds(value: f64, band: f64) -> bool {
    1.0 - value < band.max(PREMISE_FLOOR)
}

pub(crate) fn check_premise(value: f64, band: f64) -> Result<()> {
    if premise_holds(value, band) {
        Ok(())
    } else {
        Err(Error::PremiseViolated {
            margin: 1.0 - value,
            band,
        })
    }
}

pub(crate) fn check_unit_norm(lo: f64, what: &str, tol: f64) -> Result<()> {
    if (lo - 1.0).abs() > tol {
        return Err(Error::Precondition(format!("{what} has norm {lo}, expected 1")));
    }
    Ok(())
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

pub(crate) fn phase_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub(crate) fn set_entry(sets: &mut BTreeMap<String, Vec<usize>>, name: &str, a: &IndexSet) {
    sets.insert(name.to_string(), a.members.clone());
}

/// A map and its oracle witness, attaining the norm.
#[derive(Debug, Clone)]
pub enum Attained {
    Operator {
        q: BlockOperator,
        witness: BlockVector,
        norm: Bracket,
        slack: f64,
    },
    Bilinear {
        q: BlockBilinear,
        left: BlockVector,
        right: BlockVector,
        norm: Bracket,
        slack: f64,
    },
}

/// `Q = R` with the oracle's best witness; `slack = 1 - |R(witness)| / lo`.
pub fn finite_norm_attainment(r: &CorrectedMap, budget: &NormBudget, starts: &[BlockVector]) -> Attained {
    match r {
        CorrectedMap::Operator(t) => {
            let w = operator_norm_with_starts(t, budget, starts);
            let v = t.apply_raw(&w.witness.blocks);
            let val = t.range.norm_of(&v);
            Attained::Operator {
                q: t.clone(),
                witness: w.witness,
                norm: Bracket { lo: w.lo, hi: w.hi },
                slack: slack(val, w.lo),
            }
        }
        CorrectedMap::Bilinear(b) => {
            let pairs: Vec<(BlockVector, BlockVector)> = starts
                .chunks_exact(2)
                .map(|c| (c[0].clone(), c[1].clone()))
                .collect();
            let w = bilinear_norm_with_starts(b, budget, &pairs);
            let val = b.apply_raw(&w.left.blocks, &w.right.blocks).norm();
            Attained::Bilinear {
                q: b.clone(),
                left: w.left,
                right: w.right,
                norm: Bracket { lo: w.lo, hi: w.hi },
                slack: slack(val, w.lo),
            }
        }
    }
}

/// Norm bracket, zero for the zero map.
pub(crate) fn op_bracket(t: &BlockOperator, budget: &NormBudget, starts: &[BlockVector]) -> (Bracket, Option<BlockVector>) {
    if t.is_zero() {
        return (Bracket { lo: 0.0, hi: 0.0 }, None);
    }
    let w = operator_norm_with_starts(t, budget, starts);
    (Bracket { lo: w.lo, hi: w.hi }, Some(w.witness))
}

pub(crate) fn bil_bracket(
    b: &BlockBilinear,
    budget: &NormBudget,
    starts: &[(BlockVector, BlockVector)],
) -> Bracket {
    if b.is_zero() {
        return Bracket { lo: 0.0, hi: 0.0 };
    }
    let w = bilinear_norm_with_starts(b, budget, starts);
    Bracket { lo: w.lo, hi: w.hi }
}

fn slack(val: f64, lo: f64) -> f64 {
    if lo > 0.0 {
        (1.0 - val / lo).max(0.0)
    } else {
        0.0
    }
}

/// Normalizes each listed block to the unit sphere; `None` if one vanishes.
pub(crate) fn normalize_blocks(x: &BlockVector, members: &[usize]) -> Option<BlockVector> {
    let mut out = x.clone();
    for &i in members {
        let n = x.block_norm(i);
        if !(n > 1e-12) {
            return None;
        }
        out.blocks[i] = x.blocks[i].iter().map(|z| z / n).collect();
    }
    Some(out)
}

pub(crate) fn apply_fault_operator(s: BlockOperator, fault: Option<Fault>) -> BlockOperator {
    match fault {
        None => s,
        Some(Fault::ScaleOutput(f)) => s.scale(C64::new(f, 0.0)),
        Some(Fault::ShiftMap(d)) => {
            let mut s = s;
            *s.blocks[0].at_mut(0, 0) += C64::new(d, 0.0);
            s
        }
    }
}

pub(crate) fn apply_fault_bilinear(s: BlockBilinear, fault: Option<Fault>) -> BlockBilinear {
    match fault {
        None => s,
        Some(Fault::ScaleOutput(f)) => s.scale(C64::new(f, 0.0)),
        Some(Fault::ShiftMap(d)) => {
            let mut s = s;
            *s.kernels[0][0].at_mut(0, 0) += C64::new(d, 0.0);
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations_respect_tolerance() {
        let mut log = Log::new(1e-10);
        assert!(log.check("a", 1.0, Relation::Lt, 1.0));
        assert!(!log.check("b", 1.0 + 1e-9, Relation::Lt, 1.0));
        assert!(log.check("c", 0.5, Relation::Ge, 0.5 + 5e-11));
        assert!(log.check_tol("d", 1.0, Relation::Approx, 1.0 + 1e-9, 1e-8));
        assert!(!log.check_tol("e", 1.0, Relation::Approx, 1.0 + 1e-7, 1e-8));
        assert_eq!(log.steps.len(), 5);
    }

    #[test]
    fn premise_floor() {
        assert!(premise_holds(1.0, 1e-30));
        assert!(premise_holds(1.0 - f64::EPSILON, 1e-30));
        assert!(!premise_holds(1.0 - 1e-10, 1e-12));
        assert!(premise_holds(1.0 - 1e-13, 1e-12));
    }
}
