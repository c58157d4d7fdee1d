//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use bpb_core::bilinear::bilinear_norm;
use bpb_core::harness::{
    csv_without_timing, generate_instance, lemma_validation_suite, run_experiment, run_pipeline, BudgetSpec,
    ExperimentConfig, Instance, LemmaConfig,
};
use bpb_core::model_spaces::{sample_sphere, BlockVector, SpaceDesc, SumSpaceDesc};
use bpb_core::moduli::{delta_complex_bracket, delta_convexity_bracket, delta_convexity_closed};
use bpb_core::operators::{operator_norm, operator_norm_with_starts, BlockOperator, NormBudget};
use bpb_core::pipelines::{micro_transitive_isometry, PipelineKind};
use std::process::ExitCode;
use std::time::Instant;

const ATTAIN_TOL: f64 = 1e-8;
const ISOMETRY_DEVIATION_TOL: f64 = 1e-8;
const ISOMETRY_MAP_TOL: f64 = 1e-12;
const CONVEXITY_RESOLUTION: f64 = 1.0 / 256.0;
const CONVEXITY_WIDTH: f64 = 1e-2;
const SCALAR_COMPLEX_RESOLUTION: f64 = 1e-6;
const SCALAR_COMPLEX_TOL: f64 = 1e-6;
const L1_COMPLEX_RESOLUTION: f64 = 1.0 / 32.0;

struct Outcome {
    pass: bool,
    line: String,
}

fn config(pipeline: PipelineKind, base: SpaceDesc, range: Option<SpaceDesc>, n: usize, eps: &[f64], trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        pipeline,
        base,
        n,
        m: if pipeline.is_bilinear() { Some(n) } else { None },
        range,
        eps: eps.to_vec(),
        trials,
        master_seed: seed,
        budget: BudgetSpec::default(),
        attain_tol: None,
        arith_tol: None,
        margin_fraction: 0.5,
        fault: None,
        record_timing: false,
    }
}

fn operator_configs() -> Vec<ExperimentConfig> {
    let eps = [0.3, 0.6];
    vec![
        config(PipelineKind::Operator, SpaceDesc::real_l(2.0, 2), Some(SpaceDesc::real_l(2.0, 3)), 3, &eps, 200, 101),
        config(PipelineKind::Operator, SpaceDesc::complex_l(2.0, 2), Some(SpaceDesc::complex_l(2.0, 3)), 3, &eps, 200, 102),
        config(PipelineKind::Operator, SpaceDesc::complex_l(2.0, 2), Some(SpaceDesc::complex_l(1.0, 3)), 3, &eps, 200, 103),
    ]
}

fn local_config() -> ExperimentConfig {
    config(
        PipelineKind::OperatorLocal,
        SpaceDesc::complex_l(2.0, 2),
        Some(SpaceDesc::complex_l(1.0, 2)),
        3,
        &[0.3, 0.6],
        100,
        201,
    )
}

fn bilinear_config(local: bool) -> ExperimentConfig {
    let kind = if local { PipelineKind::BilinearLocal } else { PipelineKind::Bilinear };
    config(kind, SpaceDesc::complex_l(2.0, 2), None, 2, &[0.6], 100, if local { 401 } else { 301 })
}

fn bitwise_eq(a: &BlockVector, b: &BlockVector) -> bool {
    a.blocks.len() == b.blocks.len()
        && a.blocks.iter().zip(&b.blocks).all(|(p, q)| {
            p.len() == q.len()
                && p.iter()
                    .zip(q)
                    .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
        })
}

#[derive(Default)]
struct Tally {
    runs: usize,
    failures: Vec<String>,
    max_norm_dev: f64,
    max_attain: f64,
    max_dist_ratio: f64,
    max_point_ratio: f64,
}

impl Tally {
    fn fail(&mut self, what: String) {
        self.failures.push(what);
    }

    fn summary(&self) -> String {
        let first = self.failures.first().map_or(String::new(), |f| format!(" first failure: {f}"));
        format!(
            "{}/{} runs; max |norm-1| {:.1e}, max attain residual {:.1e}, max dist/eps {:.3e}, max point/eps {:.3e}{first}",
            self.runs - self.failures.len(),
            self.runs,
            self.max_norm_dev,
            self.max_attain,
            self.max_dist_ratio,
            self.max_point_ratio
        )
    }
}

/// Operator suites, rechecked against fresh oracle calls.
fn check_operator_suite(cfg: &ExperimentConfig, tally: &mut Tally, same_point: bool) {
    let opts = cfg.options();
    let budget = NormBudget::default();
    for k in 0..cfg.trials {
        let gen = match generate_instance(cfg, k) {
            Ok(g) => g,
            Err(e) => {
                tally.runs += cfg.eps.len();
                for _ in &cfg.eps {
                    tally.fail(format!("trial {k}: generation failed: {e}"));
                }
                continue;
            }
        };
        let Instance::Operator { t, x0 } = &gen.instance else { unreachable!() };
        for &eps in &cfg.eps {
            tally.runs += 1;
            let tag = format!("trial {k} eps {eps}");
            let cert = match run_pipeline(cfg.pipeline, &gen.instance, eps, &opts) {
                Ok(c) => c,
                Err(e) => {
                    tally.fail(format!("{tag}: {e}"));
                    continue;
                }
            };
            let s = cert.operator().expect("operator map");
            let z0 = &cert.points[0];
            let sz = s.range.norm_of(&s.apply(z0).expect("dims").coords);
            let sn = operator_norm_with_starts(s, &budget, std::slice::from_ref(z0)).lo;
            let dist = operator_norm(&s.sub(t).expect("dims"), &budget).hi;
            let moved = z0.distance(x0);
            tally.max_norm_dev = tally.max_norm_dev.max((sn - 1.0).abs());
            tally.max_attain = tally.max_attain.max((sz - 1.0).abs());
            tally.max_dist_ratio = tally.max_dist_ratio.max(dist / eps);
            tally.max_point_ratio = tally.max_point_ratio.max(moved / eps);
            let mut bad = vec![];
            if (sn - 1.0).abs() > ATTAIN_TOL {
                bad.push(format!("||S|| = {sn}"));
            }
            if (sz - 1.0).abs() > ATTAIN_TOL {
                bad.push(format!("||S z0|| = {sz}"));
            }
            if !(dist < eps) {
                bad.push(format!("||S-T|| hi = {dist}"));
            }
            if same_point {
                if !bitwise_eq(z0, x0) {
                    bad.push("z0 differs from x0".into());
                }
            } else if !(moved < eps) {
                bad.push(format!("||z0-x0|| = {moved}"));
            }
            if !cert.passed() {
                bad.push(format!("step failed: {:?}", cert.first_failure().map(|s| &s.step)));
            }
            if !bad.is_empty() {
                tally.fail(format!("{tag}: {}", bad.join(", ")));
            }
        }
    }
}

fn check_bilinear_suite(cfg: &ExperimentConfig, tally: &mut Tally, same_point: bool) {
    let opts = cfg.options();
    let budget = NormBudget::default();
    for k in 0..cfg.trials {
        let gen = match generate_instance(cfg, k) {
            Ok(g) => g,
            Err(e) => {
                tally.runs += cfg.eps.len();
                for _ in &cfg.eps {
                    tally.fail(format!("trial {k}: generation failed: {e}"));
                }
                continue;
            }
        };
        let Instance::Bilinear { b, xl, xr } = &gen.instance else { unreachable!() };
        for &eps in &cfg.eps {
            tally.runs += 1;
            let tag = format!("trial {k} eps {eps}");
            let cert = match run_pipeline(cfg.pipeline, &gen.instance, eps, &opts) {
                Ok(c) => c,
                Err(e) => {
                    tally.fail(format!("{tag}: {e}"));
                    continue;
                }
            };
            let s = cert.bilinear().expect("bilinear map");
            let (ul, ur) = (&cert.points[0], &cert.points[1]);
            let v = s.apply(ul, ur).expect("dims").norm();
            let dist = bilinear_norm(&s.sub(b).expect("dims"), &budget).hi;
            let moved = ul.distance(xl).max(ur.distance(xr));
            tally.max_attain = tally.max_attain.max((v - 1.0).abs());
            tally.max_dist_ratio = tally.max_dist_ratio.max(dist / eps);
            tally.max_point_ratio = tally.max_point_ratio.max(moved / eps);
            tally.max_norm_dev = tally.max_norm_dev.max((cert.map_norm.lo - 1.0).abs());
            let mut bad = vec![];
            if (v - 1.0).abs() > ATTAIN_TOL {
                bad.push(format!("|S(u_L,u_R)| = {v}"));
            }
            if !(dist < eps) {
                bad.push(format!("||S-B|| hi = {dist}"));
            }
            if same_point {
                if !(bitwise_eq(ul, xl) && bitwise_eq(ur, xr)) {
                    bad.push("pair differs from the input".into());
                }
            } else if !(moved < eps) {
                bad.push(format!("point distance {moved}"));
            }
            if !cert.passed() {
                bad.push(format!("step failed: {:?}", cert.first_failure().map(|s| &s.step)));
            }
            if !bad.is_empty() {
                tally.fail(format!("{tag}: {}", bad.join(", ")));
            }
        }
    }
}

fn criterion_1() -> Outcome {
    let mut lines = vec![];
    let mut pass = true;
    for cfg in operator_configs() {
        let t0 = Instant::now();
        let mut tally = Tally::default();
        check_operator_suite(&cfg, &mut tally, false);
        let secs = t0.elapsed().as_secs_f64();
        pass &= tally.failures.is_empty() && tally.runs == 2 * cfg.trials;
        lines.push(format!(
            "[{} -> {}] {} in {secs:.1}s",
            cfg.base,
            cfg.range.unwrap(),
            tally.summary()
        ));
    }
    Outcome {
        pass,
        line: lines.join("; "),
    }
}

fn criterion_2() -> Outcome {
    let cfg = local_config();
    let mut tally = Tally::default();
    check_operator_suite(&cfg, &mut tally, true);
    Outcome {
        pass: tally.failures.is_empty() && tally.runs == 200,
        line: tally.summary(),
    }
}

fn criterion_3_4(local: bool) -> Outcome {
    let cfg = bilinear_config(local);
    let t0 = Instant::now();
    let mut tally = Tally::default();
    check_bilinear_suite(&cfg, &mut tally, local);
    Outcome {
        pass: tally.failures.is_empty() && tally.runs == 100,
        line: format!("{} in {:.1}s", tally.summary(), t0.elapsed().as_secs_f64()),
    }
}

fn criterion_5() -> Outcome {
    let r = lemma_validation_suite(&LemmaConfig::default()).expect("lemma suite");
    let pass = r.series.trials == 1000
        && r.series.violations == 0
        && r.series.enumeration_agrees == 1000
        && r.operator_tail.trials == 100
        && r.operator_tail.certified_violations == 0
        && r.operator_tail.errors == 0
        && r.bilinear_tail.trials == 100
        && r.bilinear_tail.certified_violations == 0
        && r.bilinear_tail.errors == 0;
    Outcome {
        pass,
        line: format!(
            "series {}/{} hold, enumeration agrees on {}; operator tail holds {} vacuous {} inconclusive {} violations {}; bilinear tail holds {} vacuous {} inconclusive {} violations {}",
            r.series.holds,
            r.series.trials,
            r.series.enumeration_agrees,
            r.operator_tail.holds,
            r.operator_tail.vacuous,
            r.operator_tail.inconclusive,
            r.operator_tail.certified_violations,
            r.bilinear_tail.holds,
            r.bilinear_tail.vacuous,
            r.bilinear_tail.inconclusive,
            r.bilinear_tail.certified_violations
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    let l2 = SpaceDesc::real_l(2.0, 2);
    for eps in [0.5, 1.0, 1.5] {
        let b = delta_convexity_bracket(&l2, eps, CONVEXITY_RESOLUTION).expect("bracket");
        let exact = 1.0 - (1.0 - eps * eps / 4.0).sqrt();
        debug_assert!((exact - delta_convexity_closed(&l2, eps).unwrap()).abs() < 1e-15);
        let ok = b.lo <= exact && exact <= b.hi && b.hi - b.lo <= CONVEXITY_WIDTH;
        pass &= ok;
        parts.push(format!("l2 eps {eps}: [{:.5}, {:.5}] vs {exact:.5}", b.lo, b.hi));
    }
    let c1 = SpaceDesc::complex_l(2.0, 1);
    for eps in [0.1, 0.5, 0.9] {
        let b = delta_complex_bracket(&c1, eps, SCALAR_COMPLEX_RESOLUTION).expect("bracket");
        let ok = (b.lo - eps).abs() <= SCALAR_COMPLEX_TOL && (b.hi - eps).abs() <= SCALAR_COMPLEX_TOL;
        pass &= ok;
        parts.push(format!("C eps {eps}: [{:.8}, {:.8}]", b.lo, b.hi));
    }
    let b = delta_complex_bracket(&SpaceDesc::complex_l(1.0, 2), 0.5, L1_COMPLEX_RESOLUTION).expect("bracket");
    pass &= b.lo > 0.0;
    parts.push(format!("complex l1^2 eps 0.5: lo {:.3e}", b.lo));
    Outcome {
        pass,
        line: parts.join("; "),
    }
}

fn criterion_7() -> Outcome {
    let spaces = [
        SpaceDesc::real_l(2.0, 2),
        SpaceDesc::real_l(2.0, 3),
        SpaceDesc::complex_l(2.0, 1),
        SpaceDesc::complex_l(2.0, 2),
        SpaceDesc::complex_l(2.0, 3),
    ];
    let budget = NormBudget::default();
    let (mut worst_dev, mut worst_map, mut failures) = (0.0f64, 0.0f64, 0usize);
    for k in 0..1000u64 {
        let space = spaces[(k % spaces.len() as u64) as usize];
        let pts = sample_sphere(&space, 7000 + k, 2);
        let (x, y) = (&pts[0], &pts[1]);
        let u = micro_transitive_isometry(x, y).expect("hilbert pair");
        let ux = u.matrix.mul_vec(&x.coords);
        let map_err = ux.iter().zip(&y.coords).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let dev_op = BlockOperator::new(SumSpaceDesc::new(space, 1).unwrap(), space, vec![u.deviation()]).unwrap();
        let measured = operator_norm(&dev_op, &budget).lo;
        let dist: f64 = x.coords.iter().zip(&y.coords).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let dev = (measured - dist).abs();
        worst_dev = worst_dev.max(dev);
        worst_map = worst_map.max(map_err);
        if dev > ISOMETRY_DEVIATION_TOL || map_err > ISOMETRY_MAP_TOL {
            failures += 1;
        }
    }
    Outcome {
        pass: failures == 0,
        line: format!(
            "{}/1000 pairs; max ||Ux-y|| {worst_map:.1e}, max | ||U-I|| - ||x-y|| | {worst_dev:.1e}",
            1000 - failures
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    let configs = [local_config(), bilinear_config(false), operator_configs().remove(2)];
    for cfg in configs {
        let a = run_experiment(&cfg).expect("experiment").to_csv().expect("csv");
        let b = run_experiment(&cfg).expect("experiment").to_csv().expect("csv");
        let mut timed = cfg.clone();
        timed.record_timing = true;
        let c = run_experiment(&timed).expect("experiment").to_csv().expect("csv");
        let same = a == b;
        let same_timed = csv_without_timing(&a) == csv_without_timing(&c);
        pass &= same && same_timed;
        parts.push(format!(
            "{}: {} rows, identical {same}, identical up to timing {same_timed}",
            cfg.pipeline.name(),
            a.lines().count() - 1
        ));
    }
    Outcome {
        pass,
        line: parts.join("; "),
    }
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 operator correction", criterion_1),
        ("2 operator correction at the point", criterion_2),
        ("3 bilinear correction", || criterion_3_4(false)),
        ("4 bilinear correction at the pair", || criterion_3_4(true)),
        ("5 support and tail lemmas", criterion_5),
        ("6 moduli brackets", criterion_6),
        ("7 isometry transport", criterion_7),
        ("8 reproducible csv", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|k| name.starts_with(k.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            o.line
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
