use super::isometry::contraction_through_point;
use super::{
    apply_fault_bilinear, bil_bracket, check_eps, check_premise, check_unit_norm, finite_norm_attainment,
    normalize_blocks, phase_pair, sel, set_entry, Attained, BpbCertificate, CorrectedMap, Log, PipelineKind,
    PipelineOptions, Relation,
};
use crate::bilinear::{BlockBilinear, Slice};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model_spaces::{pair, phase, BlockVector, Point, C64};
use crate::moduli::{bilinear_premise_band, BilinearModuli};
use crate::operators::{IndexSet, ZERO_TOL};
use std::collections::BTreeMap;

use Relation::*;

/// `{ i : ||g(i)|| != 0, Re g(i)(x(i)) > (1 - eta') ||g(i)|| }`.
pub(crate) fn slice_support(g: &Slice, x: &BlockVector, eta_prime: f64, zero: f64) -> IndexSet {
    let q = g.base.dual_exponent();
    IndexSet::from_predicate(g.blocks.len(), |i| {
        let gn = crate::model_spaces::lp_norm(&g.blocks[i], q);
        gn > zero && pair(&g.blocks[i], &x.blocks[i]).re > (1.0 - eta_prime) * gn
    })
}

pub(crate) fn slice_mass(g: &Slice, a: &IndexSet) -> f64 {
    let q = g.base.dual_exponent();
    a.members.iter().map(|&i| crate::model_spaces::lp_norm(&g.blocks[i], q)).sum()
}

/// Zero outside `a`, normalized blocks on `a`.
pub(crate) fn normalized_on(x: &BlockVector, a: &IndexSet) -> Result<BlockVector> {
    let mut out = normalize_blocks(x, &a.members).ok_or_else(|| Error::breach("normalize", "vanishing block"))?;
    for i in a.complement().members {
        out.blocks[i].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    }
    Ok(out)
}

pub(crate) fn max_block_step(x: &BlockVector, y: &BlockVector, members: &[usize]) -> f64 {
    members
        .iter()
        .map(|&i| {
            let d: Vec<C64> = x.blocks[i].iter().zip(&y.blocks[i]).map(|(p, q)| p - q).collect();
            x.base().norm_of(&d)
        })
        .fold(0.0, f64::max)
}

pub(crate) fn check_bilinear_inputs(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    opts: &PipelineOptions,
) -> Result<C64> {
    if xl.sum_space != b.left || xr.sum_space != b.right {
        return Err(Error::DimensionMismatch {
            expected: b.n() * b.left.base.dim + b.m() * b.right.base.dim,
            found: xl.len() * xl.base().dim + xr.len() * xr.base().dim,
        });
    }
    if b.left.base != b.right.base {
        return Err(Error::UnsupportedSpace("left and right bases must agree".into()));
    }
    check_unit_norm(xl.norm(), "x_L", 1e-8)?;
    check_unit_norm(xr.norm(), "x_R", 1e-8)?;
    let nb = bil_bracket(b, &opts.budget, &[(xl.clone(), xr.clone())]);
    check_unit_norm(nb.lo, "B", opts.attain_tol)?;
    Ok(b.apply_raw(&xl.blocks, &xr.blocks))
}

/// Correction of a bilinear form near `(x_L, x_R)` with
/// `|B(x_L, x_R)| > 1 - eta^12 / 2^22`.
pub fn run_bilinear(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    run_bilinear_with_slack(b, xl, xr, eps, opts, 0.0)
}

/// As [`run_bilinear`], with `slack` added to `|B(x_L, x_R)|` in the premise test.
pub(crate) fn run_bilinear_with_slack(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
    slack: f64,
) -> Result<BpbCertificate> {
    check_eps(eps)?;
    let moduli = BilinearModuli::for_base(&b.left.base)?;
    let eta = moduli.eta(eps)?;
    let band = bilinear_premise_band(eta);
    let value = check_bilinear_inputs(b, xl, xr, opts)?;
    check_premise(value.norm() + slack, band)?;
    build(b, xl, xr, eps, eta, band, value, opts)
}

pub fn correct_bilinear(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    run_bilinear(b, xl, xr, eps, opts)?.into_result()
}

#[allow(clippy::too_many_arguments)]
fn build(
    b: &BlockBilinear,
    xl: &BlockVector,
    xr: &BlockVector,
    eps: f64,
    eta: f64,
    band: f64,
    value: C64,
    opts: &PipelineOptions,
) -> Result<BpbCertificate> {
    let budget = &opts.budget;
    let mut log = Log::new(opts.arith_tol);
    let mut sets = BTreeMap::new();
    let mut phases = BTreeMap::new();
    let (e2, e3, e6) = (eta * eta, eta.powi(3), eta.powi(6));
    let t_r = e6 / 2f64.powi(11);
    let t_l = e3 / 32.0;
    let schedule: BTreeMap<String, f64> = [
        ("eta", eta),
        ("band", band),
        ("eta^6/2^11", t_r),
        ("eta^6/2^10", e6 / 1024.0),
        ("eta^3/2^5", t_l),
        ("eta^3/2^4", e3 / 16.0),
        ("eta^2/2^2", e2 / 4.0),
        ("eta/2", eta / 2.0),
        ("eps/16", eps / 16.0),
        ("eps/8", eps / 8.0),
        ("eps/2", eps / 2.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let premise_margin = 1.0 - value.norm();

    let mu = phase(value).conj();
    phases.insert("T".into(), phase_pair(mu));
    let t = b.scale(mu);
    let zero = ZERO_TOL * t.kernel_sum_bound();

    let gl = t.left_slice(xl)?;
    let ar = slice_support(&gl, xr, sel(t_r), zero);
    set_entry(&mut sets, "A_R", &ar);
    if ar.is_empty() {
        return Err(Error::breach("A_R", "empty support set"));
    }
    log.check("sum_{A_R} ||(L_T x_L)(i)|| > 1 - eta^6/2^11", slice_mass(&gl, &ar), Gt, 1.0 - t_r);
    let min_r = ar.members.iter().map(|&i| xr.block_norm(i)).fold(f64::INFINITY, f64::min);
    log.check("||x_R(i)|| > 1 - eta^6/2^11 on A_R", min_r, Gt, 1.0 - t_r);
    let xr_hat = normalized_on(xr, &ar)?;
    log.check("||x_R^(i) - x_R(i)|| < eta^6/2^11", max_block_step(&xr_hat, xr, &ar.members), Lt, t_r);
    let re1 = t.apply_raw(&xl.blocks, &xr_hat.blocks).re;
    log.check("Re T(x_L, x_R^) > 1 - eta^6/2^10", re1, Gt, 1.0 - e6 / 1024.0);

    let gr = t.right_slice(&xr_hat)?;
    let al = slice_support(&gr, xl, sel(t_l), zero);
    set_entry(&mut sets, "A_L", &al);
    if al.is_empty() {
        return Err(Error::breach("A_L", "empty support set"));
    }
    log.check("sum_{A_L} ||(R_T x_R^)(i)|| > 1 - eta^3/2^5", slice_mass(&gr, &al), Gt, 1.0 - t_l);
    let min_l = al.members.iter().map(|&i| xl.block_norm(i)).fold(f64::INFINITY, f64::min);
    log.check("||x_L(i)|| > 1 - eta^3/2^5 on A_L", min_l, Gt, 1.0 - t_l);
    let xl_hat = normalized_on(xl, &al)?;
    log.check("||x_L^(i) - x_L(i)|| < eta^3/2^5", max_block_step(&xl_hat, xl, &al.members), Lt, t_l);
    let re2 = t.apply_raw(&xl_hat.blocks, &xr_hat.blocks).re;
    log.check("Re T(x_L^, x_R^) > 1 - eta^3/2^4", re2, Gt, 1.0 - e3 / 16.0);
    let tail = bil_bracket(&t.sub(&t.project2(&al, &ar))?, budget, &[]);
    log.check_tol("||T P_{A_L,A_R} - T|| < eps/2^4", tail.hi, Lt, eps / 16.0, 0.0);

    let th = t.restrict2(&al, &ar)?;
    let xlh = xl_hat.restrict(&al.members);
    let xrh = xr_hat.restrict(&ar.members);
    let tau = th.apply_raw(&xlh.blocks, &xrh.blocks);
    let a_vec = th.right_slice(&xrh)?;
    let b_vec = th.left_slice(&xlh)?;
    let c = phase(tau).conj() * eta;
    let mut r = th.clone();
    for (i, row) in r.kernels.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            *k = k.add(&Matrix::outer(&a_vec.blocks[i], &b_vec.blocks[j]).scale(c));
        }
    }

    let Attained::Bilinear {
        q,
        left: mut wl,
        right: mut wr,
        norm: qn,
        slack,
    } = finite_norm_attainment(&CorrectedMap::Bilinear(r), budget, &[xlh.clone(), xrh.clone()])
    else {
        unreachable!()
    };
    log.check("||Q - R|| <= eta^3/2^4", 0.0, Le, e3 / 16.0);
    let tlo = 1.0 - e3 / 16.0;
    log.check("||R|| >= |R(x_L^, x_R^)|", qn.lo, Ge, tlo * (1.0 + eta * tlo));

    let ml = phase(th.apply_raw(&wl.blocks, &xrh.blocks)).conj();
    let mr = phase(th.apply_raw(&xlh.blocks, &wr.blocks)).conj();
    wl = wl.scale(ml);
    wr = wr.scale(mr);
    phases.insert("w_L".into(), phase_pair(ml));
    phases.insert("w_R".into(), phase_pair(mr));
    let rl = th.apply_raw(&wl.blocks, &xrh.blocks).re;
    let rr = th.apply_raw(&xlh.blocks, &wr.blocks).re;
    log.check("min{Re T^(w_L, x_R^), Re T^(x_L^, w_R)} >= 1 - eta^2/2^2", rl.min(rr), Ge, 1.0 - e2 / 4.0);

    let midl = wl.midpoint(&xlh);
    let midr = wr.midpoint(&xrh);
    let bl = slice_support(&a_vec, &midl, sel(eta / 2.0), zero);
    let br = slice_support(&b_vec, &midr, sel(eta / 2.0), zero);
    let lift = |s: &IndexSet, a: &IndexSet| IndexSet::new(a.n, s.members.iter().map(|&k| a.members[k]).collect());
    set_entry(&mut sets, "B_L", &lift(&bl, &al)?);
    set_entry(&mut sets, "B_R", &lift(&br, &ar)?);
    let pml = {
        let mut v = midl.clone();
        for k in bl.complement().members {
            v.blocks[k].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        }
        v
    };
    let pmr = {
        let mut v = midr.clone();
        for k in br.complement().members {
            v.blocks[k].iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        }
        v
    };
    log.check("Re T^(P_{B_L}(w_L + x_L^)/2, x_R^) > 1 - eta", th.apply_raw(&pml.blocks, &xrh.blocks).re, Gt, 1.0 - eta);
    log.check("Re T^(x_L^, P_{B_R}(w_R + x_R^)/2) > 1 - eta", th.apply_raw(&xlh.blocks, &pmr.blocks).re, Gt, 1.0 - eta);
    let all_l = IndexSet::all(th.n());
    let all_r = IndexSet::all(th.m());
    let tl = bil_bracket(&th.project2(&bl.complement(), &all_r), budget, &[]);
    log.check_tol("||T^ P_{A_L\\B_L, A_R}|| < eps/2^4", tl.hi, Lt, eps / 16.0, 0.0);
    let tr = bil_bracket(&th.project2(&all_l, &br.complement()), budget, &[]);
    log.check_tol("||T^ P_{A_L, A_R\\B_R}|| < eps/2^4", tr.hi, Lt, eps / 16.0, 0.0);
    let tb = bil_bracket(&th.sub(&th.project2(&bl, &br))?, budget, &[]);
    log.check_tol("||T^ - T^ P_{B_L,B_R}|| < eps/2^3", tb.hi, Lt, eps / 8.0, 0.0);
    for (name, mid, set) in [("L", &midl, &bl), ("R", &midr, &br)] {
        if !set.is_empty() {
            let m = set.members.iter().map(|&k| mid.block_norm(k)).fold(f64::INFINITY, f64::min);
            log.check(&format!("||((w_{name} + x_{name}^)/2)(i)|| > 1 - eta/2 on B_{name}"), m, Gt, 1.0 - eta / 2.0);
        }
    }
    log.check_tol("||w_L(i) - x_L^(i)|| < eps/2 on B_L", max_block_step(&wl, &xlh, &bl.members), Lt, eps / 2.0, 0.0);
    log.check_tol("||w_R(i) - x_R^(i)|| < eps/2 on B_R", max_block_step(&wr, &xrh, &br.members), Lt, eps / 2.0, 0.0);

    let base = b.left.base;
    let transport = |w: &BlockVector, x: &BlockVector, set: &IndexSet| -> Result<Vec<Matrix>> {
        (0..w.len())
            .map(|k| {
                if set.contains(k) {
                    Ok(Matrix::identity(base.dim))
                } else {
                    contraction_through_point(
                        &Point { space: base, coords: x.blocks[k].clone() },
                        &Point { space: base, coords: w.blocks[k].clone() },
                    )
                    .map(|u| u.matrix)
                }
            })
            .collect()
    };
    let ul = transport(&wl, &xlh, &bl)?;
    let vr = transport(&wr, &xrh, &br)?;
    let mut st = q.clone();
    for (i, row) in st.kernels.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            *k = ul[i].transpose().matmul(k).matmul(&vr[j]);
        }
    }
    let mut utl = xlh.clone();
    for &k in &bl.members {
        utl.blocks[k] = wl.blocks[k].clone();
    }
    let mut utr = xrh.clone();
    for &k in &br.members {
        utr.blocks[k] = wr.blocks[k].clone();
    }
    let sv = st.apply_raw(&utl.blocks, &utr.blocks);
    let qw = q.apply_raw(&wl.blocks, &wr.blocks);
    log.check("|S~(u_L~, u_R~) - Q(w_L, w_R)| ~= 0", (sv - qw).norm(), Approx, 0.0);
    let s_norm = sv.norm();
    if !(s_norm > 0.0) {
        return Err(Error::breach("normalize", "S~(u~) = 0"));
    }
    let s = apply_fault_bilinear(st.normalize(s_norm)?.extend2(&al, &ar)?.scale(mu.conj()), opts.fault);
    let mut ul_full = xl.clone();
    for (k, &i) in al.members.iter().enumerate() {
        ul_full.blocks[i] = utl.blocks[k].clone();
    }
    let mut ur_full = xr.clone();
    for (k, &j) in ar.members.iter().enumerate() {
        ur_full.blocks[j] = utr.blocks[k].clone();
    }

    let su = s.apply_raw(&ul_full.blocks, &ur_full.blocks).norm();
    let attain_residual = (su - 1.0).abs();
    log.check_tol("|S(u_L, u_R)| ~= 1", su, Approx, 1.0, opts.attain_tol);
    let sn = bil_bracket(&s, budget, &[(ul_full.clone(), ur_full.clone())]);
    log.check_tol("||S|| ~= 1", sn.lo, Approx, 1.0, opts.attain_tol);
    log.check("||S~|| <= ||Q||", sn.lo * s_norm, Le, qn.hi);
    let dist = bil_bracket(&s.sub(b)?, budget, &[]);
    log.check_tol("||S - T|| < eps", dist.hi, Lt, eps, 0.0);
    let point_distance = ul_full.distance(xl).max(ur_full.distance(xr));
    log.check("max ||u - x|| < eps/2 + eta^3/2^5", point_distance, Lt, eps / 2.0 + t_l);
    log.check_tol("max ||u - x|| < eps", point_distance, Lt, eps, 0.0);

    Ok(BpbCertificate {
        pipeline: PipelineKind::Bilinear,
        eps,
        parameter: eta,
        schedule,
        premise_margin,
        premise_band: band,
        map: CorrectedMap::Bilinear(s),
        points: vec![ul_full, ur_full],
        attain_residual,
        map_norm: sn,
        map_distance: dist,
        point_distance,
        oracle_slack: slack,
        sets,
        phases,
        notes: vec![
            "Q = R; finite-dimensional attainment is exact".into(),
            "estimate chain term P_{A_L, B_R\\A_R} read as P_{A_L, A_R\\B_R}".into(),
            "S~(z_L, z_R) = Q(M_L z_L, M_R z_R), M = I on B and w(i) (x) J(x^(i)) on A\\B".into(),
        ],
        steps: log.steps,
        inner: None,
    })
}
