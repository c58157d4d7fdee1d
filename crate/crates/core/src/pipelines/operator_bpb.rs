use super::{
    apply_fault_operator, check_eps, check_premise, check_unit_norm, finite_norm_attainment, normalize_blocks,
    op_bracket, phase_pair, sel, set_entry, Attained, BpbCertificate, CorrectedMap, Log, PipelineKind,
    PipelineOptions, Relation,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{pair, phase, supporting_functional, BlockVector, DualPoint, Point, C64};
use crate::moduli::{operator_premise_band, OperatorModuli};
use crate::certify::BnbBudget;
use crate::operators::{dual_upper_bound, support_set, BlockOperator, IndexSet};
use std::collections::BTreeMap;

use super::isometry::contraction_through_point;

use Relation::*;

pub(crate) fn check_operator_inputs(t: &BlockOperator, x0: &BlockVector, opts: &PipelineOptions) -> Result<f64> {
    if x0.sum_space != t.domain {
        return Err(Error::DimensionMismatch {
            expected: t.domain.blocks * t.domain.base.dim,
            found: x0.sum_space.blocks * x0.sum_space.base.dim,
        });
    }
    check_unit_norm(x0.norm(), "x0", 1e-8)?;
    let (nt, _) = op_bracket(t, &opts.budget, std::slice::from_ref(x0));
    check_unit_norm(nt.lo, "T", opts.attain_tol)?;
    Ok(t.range.norm_of(&t.apply_raw(&x0.blocks)))
}

/// Correction of `T` near a point `x0` with `||T x0|| > 1 - eta^6/64`.
///
/// Returns the full certificate whether or not every step passed; see
/// [`correct_operator`] for the checked form.
pub fn run_operator(t: &BlockOperator, x0: &BlockVector, eps: f64, opts: &PipelineOptions) -> Result<BpbCertificate> {
    run_operator_with_slack(t, x0, eps, opts, 0.0)
}

/// As [`run_operator`], with `slack` added to `||T x0||` in the premise test.
pub(crate) fn run_operator_with_slack(
    t: &BlockOperator,
    x0: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
    slack: f64,
) -> Result<BpbCertificate> {
    check_eps(eps)?;
    let moduli = OperatorModuli::for_spaces(&t.domain.base, &t.range)?;
    let eta = moduli.eta(eps)?;
    let band = operator_premise_band(eta);
    let value = check_operator_inputs(t, x0, opts)?;
    check_premise(value + slack, band)?;
    build(t, x0, eps, eta, band, opts)
}

/// As [`run_operator`], failing with a contract breach on the first
/// logged inequality that does not hold.
pub fn correct_operator(t: &BlockOperator, x0: &BlockVector, eps: f64, opts: &PipelineOptions) -> Result<BpbCertificate> {
    run_operator(t, x0, eps, opts)?.into_result()
}

fn functional_norms(t: &BlockOperator, ystar: &DualPoint) -> Result<Vec<f64>> {
    (0..t.n())
        .map(|i| t.adjoint_component(ystar, i).map(|g| g.dual_norm()))
        .collect()
}

fn build(
    t: &BlockOperator,
    x0: &BlockVector,
    eps: f64,
    eta: f64,
    band: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    let budget = &opts.budget;
    let mut log = Log::new(opts.arith_tol);
    let mut sets = BTreeMap::new();
    let mut phases = BTreeMap::new();
    let e3 = eta.powi(3);
    let schedule: BTreeMap<String, f64> = [
        ("eta", eta),
        ("band", band),
        ("eta^3/8", e3 / 8.0),
        ("eta^3/4", e3 / 4.0),
        ("eta^2", eta * eta),
        ("eps/16", eps / 16.0),
        ("eps/2", eps / 2.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let tx0 = t.apply_raw(&x0.blocks);
    let premise_margin = 1.0 - t.range.norm_of(&tx0);
    let y0 = DualPoint {
        space: t.range,
        coords: supporting_functional(&t.range, &tx0).ok_or_else(|| Error::breach("y0*", "T x0 = 0"))?,
    };

    let a = support_set(t, &y0, x0, sel(e3 / 8.0))?;
    set_entry(&mut sets, "A", &a);
    if a.is_empty() {
        return Err(Error::breach("A", "empty support set"));
    }
    let g0 = functional_norms(t, &y0)?;
    let mass_a: f64 = a.members.iter().map(|&i| g0[i]).sum();
    log.check("sum_A ||(T*y0*)(i)|| > 1 - eta^3/8", mass_a, Gt, 1.0 - e3 / 8.0);
    let (tail_a, _) = op_bracket(&t.project(&a.complement()), budget, &[]);
    log.check_tol("||T P_A - T|| < eps/16", tail_a.hi, Lt, eps / 16.0, 0.0);

    let th = t.restrict(&a)?;
    let xh_full = normalize_blocks(x0, &a.members).ok_or_else(|| Error::breach("x0hat", "vanishing block"))?;
    let xh = xh_full.restrict(&a.members);
    let step_x = a
        .members
        .iter()
        .map(|&i| {
            let d: Vec<C64> = xh_full.blocks[i].iter().zip(&x0.blocks[i]).map(|(p, q)| p - q).collect();
            t.domain.base.norm_of(&d)
        })
        .fold(0.0, f64::max);
    log.check("||x0hat(i) - x0(i)|| < eta^3/8", step_x, Lt, e3 / 8.0);
    let thx = th.apply_raw(&xh.blocks);
    let thx_norm = t.range.norm_of(&thx);
    log.check("||That x0hat|| > 1 - eta^3/4", thx_norm, Gt, 1.0 - e3 / 4.0);

    let y1 = DualPoint {
        space: t.range,
        coords: supporting_functional(&t.range, &thx).ok_or_else(|| Error::breach("y1*", "That x0hat = 0"))?,
    };
    let u: Vec<C64> = thx.iter().map(|z| z / thx_norm).collect();
    let r_blocks = (0..th.n())
        .map(|i| {
            let g = th.blocks[i].transpose_mul_vec(&y1.coords);
            th.blocks[i].add(&Matrix::outer(&u, &g).scale(C64::new(eta, 0.0)))
        })
        .collect();
    let r = BlockOperator::new(th.domain, th.range, r_blocks)?;

    let Attained::Operator {
        q,
        witness: mut w0,
        norm: mut qn,
        slack,
    } = finite_norm_attainment(&CorrectedMap::Operator(r), budget, std::slice::from_ref(&xh))
    else {
        unreachable!()
    };
    let near = eps / 16.0 + eta;
    if qn.hi - 1.0 >= near && (1.0 - qn.lo).abs() < near && budget.retry_evals > budget.bnb.max_evals {
        let retry = BnbBudget {
            max_evals: budget.retry_evals,
            ..budget.bnb
        };
        qn.hi = qn.hi.min(dual_upper_bound(&q, retry)).max(qn.lo);
    }
    log.check("||Q - R|| <= eta^3/4", 0.0, Le, e3 / 4.0);
    log.check("||R|| >= (1 - eta^3/4)(1 + eta)", qn.lo, Ge, (1.0 - e3 / 4.0) * (1.0 + eta));
    log.check("|1 - ||R||| < eps/16 + eta", (1.0 - qn.lo).abs().max(qn.hi - 1.0), Lt, eps / 16.0 + eta);

    let c = pair(&y1.coords, &th.apply_raw(&w0.blocks));
    let mu = phase(c).conj();
    w0 = w0.scale(mu);
    phases.insert("w0".to_string(), phase_pair(mu));
    let re_w0 = pair(&y1.coords, &th.apply_raw(&w0.blocks)).re;
    log.check("Re y1*(That w0) >= 1 - eta^2", re_w0, Ge, 1.0 - eta * eta);
    let mid = w0.midpoint(&xh);
    let re_mid = pair(&y1.coords, &th.apply_raw(&mid.blocks)).re;
    log.check("Re y1*(That (w0 + x0hat)/2) >= 1 - eta^2", re_mid, Ge, 1.0 - eta * eta);

    let b = support_set(&th, &y1, &mid, sel(eta))?;
    let b_full = IndexSet::new(t.n(), b.members.iter().map(|&k| a.members[k]).collect())?;
    set_entry(&mut sets, "B", &b_full);
    let g1 = functional_norms(&th, &y1)?;
    let mass_b: f64 = b.members.iter().map(|&k| g1[k]).sum();
    log.check("sum_B ||That*y1*(i)|| > 1 - eta", mass_b, Gt, 1.0 - eta);
    let (tail_b, _) = op_bracket(&th.project(&b.complement()), budget, &[]);
    log.check_tol("||That (I - P_B)|| < eps/16", tail_b.hi, Lt, eps / 16.0, 0.0);
    let base = t.domain.base;
    let mid_min = b.members.iter().map(|&k| mid.block_norm(k)).fold(f64::INFINITY, f64::min);
    if !b.is_empty() {
        log.check("||((w0 + x0hat)/2)(i)|| > 1 - eta on B", mid_min, Gt, 1.0 - eta);
    }
    let step_w = b
        .members
        .iter()
        .map(|&k| {
            let d: Vec<C64> = w0.blocks[k].iter().zip(&xh.blocks[k]).map(|(p, q)| p - q).collect();
            base.norm_of(&d)
        })
        .fold(0.0, f64::max);
    log.check_tol("||w0(i) - x0hat(i)|| < eps/2 on B", step_w, Lt, eps / 2.0, 0.0);

    let mut st_blocks = Vec::with_capacity(th.n());
    let mut zt = xh.clone();
    for k in 0..th.n() {
        if b.contains(k) {
            st_blocks.push(q.blocks[k].clone());
            zt.blocks[k] = w0.blocks[k].clone();
        } else {
            let uk = contraction_through_point(
                &Point { space: base, coords: xh.blocks[k].clone() },
                &Point { space: base, coords: w0.blocks[k].clone() },
            )?;
            st_blocks.push(q.blocks[k].matmul(&uk.matrix));
        }
    }
    let st = BlockOperator::new(th.domain, th.range, st_blocks)?;
    let stz = st.apply_raw(&zt.blocks);
    let qw = q.apply_raw(&w0.blocks);
    let diff: Vec<C64> = stz.iter().zip(&qw).map(|(p, q)| p - q).collect();
    log.check("||Stilde z0tilde - Q w0|| ~= 0", t.range.norm_of(&diff), Approx, 0.0);
    let st_norm = t.range.norm_of(&stz);
    if !(st_norm > 0.0) {
        return Err(Error::breach("normalize", "Stilde z0tilde = 0"));
    }

    let s = apply_fault_operator(st.normalize(st_norm)?.extend(&a)?, opts.fault);
    let mut z0 = x0.clone();
    for (k, &i) in a.members.iter().enumerate() {
        z0.blocks[i] = zt.blocks[k].clone();
    }

    let sz = t.range.norm_of(&s.apply_raw(&z0.blocks));
    let attain_residual = (sz - 1.0).abs();
    log.check_tol("||S z0|| ~= 1", sz, Approx, 1.0, opts.attain_tol);
    let (sn, _) = op_bracket(&s, budget, std::slice::from_ref(&z0));
    log.check_tol("||S|| ~= 1", sn.lo, Approx, 1.0, opts.attain_tol);
    log.check("||Stilde|| <= ||Q||", sn.lo * st_norm, Le, qn.hi);
    let (dist, _) = op_bracket(&s.sub(t)?, budget, &[]);
    log.check_tol("||S - T|| < eps", dist.hi, Lt, eps, 0.0);
    let point_distance = z0.distance(x0);
    log.check("||z0 - x0|| < eps/2 + eta^3/8", point_distance, Lt, eps / 2.0 + e3 / 8.0);
    log.check_tol("||z0 - x0|| < eps", point_distance, Lt, eps, 0.0);

    Ok(BpbCertificate {
        pipeline: PipelineKind::Operator,
        eps,
        parameter: eta,
        schedule,
        premise_margin,
        premise_band: band,
        map: CorrectedMap::Operator(s),
        points: vec![z0],
        attain_residual,
        map_norm: sn,
        map_distance: dist,
        point_distance,
        oracle_slack: slack,
        sets,
        phases,
        notes: vec![
            "Q = R; finite-dimensional attainment is exact".into(),
            "||Stilde|| := ||Stilde z0tilde|| = ||Q w0||".into(),
        ],
        steps: log.steps,
        inner: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_spaces::{SpaceDesc, SumSpaceDesc, ONE, ZERO};
    use crate::operators::{operator_norm, NormBudget};
    use crate::rng::stream;

    /// A random unit operator together with its oracle witness.
    pub(crate) fn attaining_instance(base: SpaceDesc, range: SpaceDesc, n: usize, seed: u64) -> (BlockOperator, BlockVector) {
        let mut rng = stream(seed, 0);
        let t = BlockOperator::random(SumSpaceDesc::new(base, n).unwrap(), range, &mut rng);
        let w = operator_norm(&t, &NormBudget::default());
        (t.normalize(w.lo).unwrap(), w.witness)
    }

    #[test]
    fn isometry_already_attaining() {
        let base = SpaceDesc::real_l(2.0, 2);
        let t = BlockOperator::new(SumSpaceDesc::new(base, 1).unwrap(), base, vec![Matrix::identity(2)]).unwrap();
        let x0 = BlockVector::new(t.domain, vec![vec![ONE, ZERO]]).unwrap();
        let c = correct_operator(&t, &x0, 0.3, &PipelineOptions::default()).unwrap();
        assert_eq!(c.points[0], x0);
        assert!(c.attain_residual < 1e-12);
        assert!(c.map_distance.hi < 0.3);
    }

    #[test]
    fn random_instance_passes() {
        let base = SpaceDesc::complex_l(2.0, 2);
        let range = SpaceDesc::complex_l(1.0, 3);
        for seed in 0..4 {
            let (t, x0) = attaining_instance(base, range, 3, seed);
            let c = run_operator(&t, &x0, 0.5, &PipelineOptions::default()).unwrap();
            assert!(c.passed(), "{seed}: {:?}", c.first_failure());
            assert!(c.attain_residual <= 1e-8);
            assert!(c.point_distance < 0.5);
        }
    }

    #[test]
    fn premise_violation_is_reported() {
        let base = SpaceDesc::complex_l(2.0, 2);
        let range = SpaceDesc::complex_l(2.0, 3);
        let (t, x0) = attaining_instance(base, range, 3, 9);
        let moved = BlockVector {
            sum_space: x0.sum_space,
            blocks: x0.blocks.iter().map(|b| vec![b[0] * 0.9, b[1]]).collect(),
        };
        let moved = normalize_blocks(&moved, &[0, 1, 2]).unwrap();
        let e = correct_operator(&t, &moved, 0.3, &PipelineOptions::default()).unwrap_err();
        assert!(matches!(e, Error::PremiseViolated { .. }), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn fault_is_a_breach() {
        let base = SpaceDesc::real_l(2.0, 2);
        let range = SpaceDesc::real_l(2.0, 3);
        let (t, x0) = attaining_instance(base, range, 3, 1);
        let opts = PipelineOptions {
            fault: Some(super::super::Fault::ScaleOutput(1.01)),
            ..Default::default()
        };
        let e = correct_operator(&t, &x0, 0.3, &opts).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
