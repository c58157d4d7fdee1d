use super::bilinear_bpb::{check_bilinear_inputs, run_bilinear_with_slack, slice_mass, slice_support};
use super::isometry::micro_transitive_isometry;
use super::{
    apply_fault_bilinear, bil_bracket, check_eps, check_premise, normalize_blocks, phase_pair, sel, set_entry,
    BpbCertificate, CorrectedMap, Log, PipelineKind, PipelineOptions, Relation,
};
use crate::bilinear::BlockBilinear;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{phase, BlockVector, Point, C64};
use crate::moduli::{gamma_bilinear_local, BilinearModuli};
use crate::operators::{IndexSet, ZERO_TOL};
use std::collections::BTreeMap;

use Relation::*;

fn zero_outside(x: &BlockVector, a: &IndexSet) -> BlockVector {
    let mut out = x.clone();
    for i in a.complement().members {
        out.blocks[i].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    }
    out
}

/// Correction of a bilinear form attaining its norm at the original pair,
/// for complex Hilbert `X`.
pub fn run_bilinear_local(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    check_eps(eps)?;
    let base = b.left.base;
    let moduli = BilinearModuli::for_base(&base)?;
    if !base.is_hilbert() {
        return Err(Error::UnsupportedSpace(format!("{base} is not a Hilbert space")));
    }
    let value = check_bilinear_inputs(b, xl, xr, opts)?;
    let sch = gamma_bilinear_local(eps, xl, xr, &moduli)?;
    let gamma = sch.gamma;
    let g2 = gamma * gamma;
    let band = g2 * g2 / 64.0;
    check_premise(value.norm(), band)?;

    let budget = &opts.budget;
    let mut log = Log::new(opts.arith_tol);
    let mut sets = BTreeMap::new();
    let mut phases = BTreeMap::new();
    let mut schedule: BTreeMap<String, f64> = [
        ("gamma", gamma),
        ("band", band),
        ("gamma^2/2^3", g2 / 8.0),
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
    for (name, m) in ["m_xL", "m_xR"].into_iter().zip(&sch.m_terms) {
        if let Some(m) = m {
            schedule.insert(name.into(), *m);
        }
    }
    let premise_margin = 1.0 - value.norm();

    let mu = phase(value).conj();
    phases.insert("T".into(), phase_pair(mu));
    let t = b.scale(mu);
    let zero = ZERO_TOL * t.kernel_sum_bound();

    let gl = t.left_slice(xl)?;
    let ar = slice_support(&gl, xr, sel(g2 / 8.0), zero);
    set_entry(&mut sets, "A_R", &ar);
    if ar.is_empty() {
        return Err(Error::breach("A_R", "empty support set"));
    }
    log.check("sum_{A_R} ||(L_T x_L)(i)|| > 1 - gamma^2/2^3", slice_mass(&gl, &ar), Gt, 1.0 - g2 / 8.0);
    let xr_a = zero_outside(xr, &ar);
    let gr = t.right_slice(&xr_a)?;
    let al = slice_support(&gr, xl, sel(gamma / 2.0), zero);
    set_entry(&mut sets, "A_L", &al);
    if al.is_empty() {
        return Err(Error::breach("A_L", "empty support set"));
    }
    log.check("sum_{A_L} ||(R_T x_R)(i)|| > 1 - gamma/2", slice_mass(&gr, &al), Gt, 1.0 - gamma / 2.0);
    let unit_dev = al
        .members
        .iter()
        .map(|&i| (xl.block_norm(i) - 1.0).abs())
        .chain(ar.members.iter().map(|&j| (xr.block_norm(j) - 1.0).abs()))
        .fold(0.0, f64::max);
    log.check("||x_L(i)|| = ||x_R(j)|| = 1 on A_L, A_R", unit_dev, Approx, 0.0);
    let xl_a = zero_outside(xl, &al);
    let re = t.apply_raw(&xl_a.blocks, &xr_a.blocks).re;
    log.check("Re T(P_{A_L} x_L, P_{A_R} x_R) > 1 - gamma", re, Gt, 1.0 - gamma);
    let tail = bil_bracket(&t.sub(&t.project2(&al, &ar))?, budget, &[]);
    log.check_tol("||T P_{A_L,A_R} - T|| < eps/6", tail.hi, Lt, eps / 6.0, 0.0);

    let th = t.restrict2(&al, &ar)?;
    let xlh = xl.restrict(&al.members);
    let xrh = xr.restrict(&ar.members);
    let nh = bil_bracket(&th, budget, &[(xlh.clone(), xrh.clone())]);
    let tt = th.normalize(nh.lo)?;
    let loss = (value.norm() - tt.apply_raw(&xlh.blocks, &xrh.blocks).norm()).max(0.0);
    let loss_cap = (t.n() + t.m()) as f64 * ZERO_TOL;
    log.check_tol("|B(x_L, x_R)| - |Btilde(x_Lhat, x_Rhat)| <= (n + m) * zero tol", loss, Le, loss_cap, 0.0);

    let inner = match run_bilinear_with_slack(&tt, &xlh, &xrh, sch.inner_eps, opts, loss.min(loss_cap)) {
        Ok(c) => c,
        Err(Error::PremiseViolated { margin, band }) => {
            return Err(Error::breach(
                "inner premise",
                format!("margin {margin:e} not below {band:e}"),
            ))
        }
        Err(e) => return Err(e),
    };
    let sh = inner.bilinear().expect("bilinear certificate").clone();
    let all = |x: &BlockVector| (0..x.len()).collect::<Vec<_>>();
    let (zl, zr) = (&inner.points[0], &inner.points[1]);
    let zlh = normalize_blocks(zl, &all(zl)).ok_or_else(|| Error::breach("zhat_L", "vanishing block"))?;
    let zrh = normalize_blocks(zr, &all(zr)).ok_or_else(|| Error::breach("zhat_R", "vanishing block"))?;
    let shz = sh.apply_raw(&zlh.blocks, &zrh.blocks);
    log.check_tol("|Shat(zhat_L, zhat_R)| ~= 1", shz.norm(), Approx, 1.0, opts.attain_tol);
    let theta = 2.0 * sch.inner_eps;
    let zstep = zlh.distance(&xlh).max(zrh.distance(&xrh));
    log.check("max ||zhat - x|| < theta(eps/3)", zstep, Lt, theta);

    let mut u_dev = 0.0f64;
    let mut transport = |x: &BlockVector, z: &BlockVector| -> Result<Vec<Matrix>> {
        (0..x.len())
            .map(|k| {
                let u = micro_transitive_isometry(
                    &Point { space: base, coords: x.blocks[k].clone() },
                    &Point { space: base, coords: z.blocks[k].clone() },
                )?;
                u_dev = u_dev.max(u.deviation().spectral_norm_upper());
                Ok(u.matrix)
            })
            .collect()
    };
    let us = transport(&xlh, &zlh)?;
    let vs = transport(&xrh, &zrh)?;
    log.check("max{||U_i - I||, ||V_j - I||} < eps/3", u_dev, Lt, eps / 3.0);
    let mut st = sh.clone();
    for (i, row) in st.kernels.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            *k = us[i].transpose().matmul(k).matmul(&vs[j]);
        }
    }
    let s = apply_fault_bilinear(st.extend2(&al, &ar)?.scale(mu.conj()), opts.fault);

    let sx = s.apply_raw(&xl.blocks, &xr.blocks);
    log.check("||S(x_L, x_R)| - |Shat(zhat)|| ~= 0", (sx.norm() - shz.norm()).abs(), Approx, 0.0);
    let attain_residual = (sx.norm() - 1.0).abs();
    log.check_tol("|S(x_L, x_R)| ~= 1", sx.norm(), Approx, 1.0, opts.attain_tol);
    let sn = bil_bracket(&s, budget, &[(xl.clone(), xr.clone())]);
    log.check_tol("||S|| ~= 1", sn.lo, Approx, 1.0, opts.attain_tol);
    let dist = bil_bracket(&s.sub(b)?, budget, &[]);
    log.check_tol("||S - T|| < eps", dist.hi, Lt, eps, 0.0);

    Ok(BpbCertificate {
        pipeline: PipelineKind::BilinearLocal,
        eps,
        parameter: gamma,
        schedule,
        premise_margin,
        premise_band: band,
        map: CorrectedMap::Bilinear(s),
        points: vec![xl.clone(), xr.clone()],
        attain_residual,
        map_norm: sn,
        map_distance: dist,
        point_distance: 0.0,
        oracle_slack: inner.oracle_slack,
        sets,
        phases,
        notes: vec![
            format!("That normalized by oracle lo = {}", nh.lo),
            "tail logged against eps/6 as stated".into(),
        ],
        steps: log.steps,
        inner: Some(Box::new(inner)),
    })
}

pub fn correct_bilinear_local(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    run_bilinear_local(b, xl, xr, eps, opts)?.into_result()
}
