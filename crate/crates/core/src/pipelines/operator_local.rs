use super::isometry::micro_transitive_isometry;
use super::operator_bpb::{check_operator_inputs, run_operator_with_slack};
use super::{
    apply_fault_operator, check_eps, check_premise, normalize_blocks, op_bracket, sel, set_entry, BpbCertificate,
    CorrectedMap, Log, PipelineKind, PipelineOptions, Relation,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{supporting_functional, BlockVector, DualPoint, Point, C64};
use crate::moduli::{gamma_operator_local, OperatorModuli};
use crate::operators::{support_set, BlockOperator, ZERO_TOL};
use std::collections::BTreeMap;

use Relation::*;

/// Correction of `T` attaining its norm at `x0` itself, for Hilbert `X`.
pub fn run_operator_local(
    t: &BlockOperator,
    x0: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    check_eps(eps)?;
    let base = t.domain.base;
    if !base.is_hilbert() {
        return Err(Error::UnsupportedSpace(format!("{base} is not a Hilbert space")));
    }
    let moduli = OperatorModuli::for_spaces(&base, &t.range)?;
    let value = check_operator_inputs(t, x0, opts)?;
    let sch = gamma_operator_local(eps, x0, &moduli)?;
    let gamma = sch.gamma;
    let band = gamma * gamma / 4.0;
    check_premise(value, band)?;

    let budget = &opts.budget;
    let mut log = Log::new(opts.arith_tol);
    let mut sets = BTreeMap::new();
    let mut schedule: BTreeMap<String, f64> = [
        ("gamma", gamma),
        ("band", band),
        ("gamma/2", gamma / 2.0),
        ("inner_eps", sch.inner_eps),
        ("inner_band", sch.inner_band),
        ("projection_term", sch.projection_term),
        ("eps/6", eps / 6.0),
        ("eps/3", eps / 3.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    if let Some(m) = sch.m_terms[0] {
        schedule.insert("m_x0".into(), m);
    }

    let tx0 = t.apply_raw(&x0.blocks);
    let premise_margin = 1.0 - t.range.norm_of(&tx0);
    let y0 = DualPoint {
        space: t.range,
        coords: supporting_functional(&t.range, &tx0).ok_or_else(|| Error::breach("y0*", "T x0 = 0"))?,
    };
    let a = support_set(t, &y0, x0, sel(gamma / 2.0))?;
    set_entry(&mut sets, "A", &a);
    if a.is_empty() {
        return Err(Error::breach("A", "empty support set"));
    }
    let unit_dev = a
        .members
        .iter()
        .map(|&i| (x0.block_norm(i) - 1.0).abs())
        .fold(0.0, f64::max);
    log.check("||x0(i)|| = 1 on A", unit_dev, Approx, 0.0);
    let mass_a: f64 = a
        .members
        .iter()
        .map(|&i| t.adjoint_component(&y0, i).map(|g| g.dual_norm()))
        .sum::<Result<f64>>()?;
    log.check("sum_A ||(T*y0*)(i)|| > 1 - gamma/2", mass_a, Gt, 1.0 - gamma / 2.0);
    let (tail_a, _) = op_bracket(&t.project(&a.complement()), budget, &[]);
    log.check_tol("||T P_A - T|| < eps/6", tail_a.hi, Lt, eps / 6.0, 0.0);

    let th = t.restrict(&a)?;
    let xh = x0.restrict(&a.members);
    let thx = t.range.norm_of(&th.apply_raw(&xh.blocks));
    log.check("||That x0hat|| > 1 - gamma", thx, Gt, 1.0 - gamma);
    let (th_norm, _) = op_bracket(&th, budget, std::slice::from_ref(&xh));
    let tt = th.normalize(th_norm.lo)?;
    let loss = (value - thx / th_norm.lo).max(0.0);
    let loss_cap = t.n() as f64 * ZERO_TOL;
    log.check_tol("||T x0|| - ||Ttilde x0hat|| <= n * zero tol", loss, Le, loss_cap, 0.0);

    let inner = match run_operator_with_slack(&tt, &xh, sch.inner_eps, opts, loss.min(loss_cap)) {
        Ok(c) => c,
        Err(Error::PremiseViolated { margin, band }) => {
            return Err(Error::breach(
                "inner premise",
                format!("margin {margin:e} not below {band:e}"),
            ))
        }
        Err(e) => return Err(e),
    };
    let sh = inner.operator().expect("operator certificate").clone();
    let z = &inner.points[0];
    let zh = normalize_blocks(z, &(0..z.len()).collect::<Vec<_>>())
        .ok_or_else(|| Error::breach("zhat0", "vanishing block"))?;
    let shz = sh.apply_raw(&zh.blocks);
    log.check_tol("||Shat zhat0|| ~= 1", t.range.norm_of(&shz), Approx, 1.0, opts.attain_tol);
    let theta = 2.0 * sch.inner_eps;
    log.check("||z0 - x0hat|| < theta(eps/3)/2", z.distance(&xh), Lt, sch.inner_eps);
    log.check("||zhat0 - x0hat|| < theta(eps/3)", zh.distance(&xh), Lt, theta);

    let mut u_dev = 0.0f64;
    let mut blocks = vec![Matrix::zeros(t.range.dim, base.dim); t.n()];
    for (k, &i) in a.members.iter().enumerate() {
        let u = micro_transitive_isometry(
            &Point { space: base, coords: x0.blocks[i].clone() },
            &Point { space: base, coords: zh.blocks[k].clone() },
        )?;
        u_dev = u_dev.max(u.deviation().spectral_norm_upper());
        blocks[i] = sh.blocks[k].matmul(&u.matrix);
    }
    log.check("max ||U_i - I|| < eps/3", u_dev, Lt, eps / 3.0);
    let s = apply_fault_operator(BlockOperator::new(t.domain, t.range, blocks)?, opts.fault);

    let sx = s.apply_raw(&x0.blocks);
    let diff: Vec<C64> = sx.iter().zip(&shz).map(|(p, q)| p - q).collect();
    log.check("||S x0 - Shat zhat0|| ~= 0", t.range.norm_of(&diff), Approx, 0.0);
    let sxn = t.range.norm_of(&sx);
    let attain_residual = (sxn - 1.0).abs();
    log.check_tol("||S x0|| ~= 1", sxn, Approx, 1.0, opts.attain_tol);
    let (sn, _) = op_bracket(&s, budget, std::slice::from_ref(x0));
    log.check_tol("||S|| ~= 1", sn.lo, Approx, 1.0, opts.attain_tol);
    let (dist, _) = op_bracket(&s.sub(t)?, budget, &[]);
    log.check_tol("||S - T|| < eps", dist.hi, Lt, eps, 0.0);

    Ok(BpbCertificate {
        pipeline: PipelineKind::OperatorLocal,
        eps,
        parameter: gamma,
        schedule,
        premise_margin,
        premise_band: band,
        map: CorrectedMap::Operator(s),
        points: vec![x0.clone()],
        attain_residual,
        map_norm: sn,
        map_distance: dist,
        point_distance: 0.0,
        oracle_slack: inner.oracle_slack,
        sets,
        phases: BTreeMap::new(),
        notes: vec![format!("That normalized by oracle lo = {}", th_norm.lo)],
        steps: log.steps,
        inner: Some(Box::new(inner)),
    })
}

pub fn correct_operator_local(
    t: &BlockOperator,
    x0: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    run_operator_local(t, x0, eps, opts)?.into_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_spaces::{SpaceDesc, SumSpaceDesc, ONE, ZERO};
    use crate::operators::{operator_norm, NormBudget};
    use crate::rng::stream;

    fn instance(seed: u64) -> (BlockOperator, BlockVector) {
        let base = SpaceDesc::complex_l(2.0, 2);
        let range = SpaceDesc::complex_l(1.0, 2);
        let mut rng = stream(seed, 0);
        let t = BlockOperator::random(SumSpaceDesc::new(base, 3).unwrap(), range, &mut rng);
        let w = operator_norm(&t, &NormBudget::default());
        (t.normalize(w.lo).unwrap(), w.witness)
    }

    #[test]
    fn already_attaining_uses_trivial_transport() {
        let base = SpaceDesc::complex_l(2.0, 2);
        let t = BlockOperator::new(SumSpaceDesc::new(base, 1).unwrap(), base, vec![Matrix::identity(2)]).unwrap();
        let x0 = BlockVector::new(t.domain, vec![vec![ZERO, ONE]]).unwrap();
        let c = correct_operator_local(&t, &x0, 0.3, &PipelineOptions::default()).unwrap();
        assert_eq!(c.points[0], x0);
        assert!(c.attain_residual < 1e-12);
    }

    #[test]
    fn random_instances_attain_at_x0() {
        for seed in 0..4 {
            let (t, x0) = instance(seed);
            let c = run_operator_local(&t, &x0, 0.5, &PipelineOptions::default()).unwrap();
            assert!(c.passed(), "{seed}: {:?}", c.first_failure());
            assert_eq!(c.points[0], x0);
            assert!(c.map_distance.hi < 0.5);
        }
    }

    #[test]
    fn real_banach_base_is_rejected() {
        let base = SpaceDesc::real_l(3.0, 2);
        let mut rng = stream(1, 0);
        let t = BlockOperator::random(SumSpaceDesc::new(base, 2).unwrap(), base, &mut rng);
        let x0 = BlockVector::new(t.domain, vec![vec![ONE, ZERO]; 2]).unwrap();
        assert!(matches!(
            run_operator_local(&t, &x0, 0.3, &PipelineOptions::default()),
            Err(Error::UnsupportedSpace(_))
        ));
    }

    #[test]
    fn premise_violation() {
        let (t, x0) = instance(7);
        let x1 = BlockVector {
            sum_space: x0.sum_space,
            blocks: x0.blocks.iter().map(|b| vec![b[1], b[0]]).collect(),
        };
        let e = run_operator_local(&t, &x1, 0.3, &PipelineOptions::default()).unwrap_err();
        assert!(matches!(e, Error::PremiseViolated { .. }), "{e}");
    }
}
