use bpb_core::harness::{generate_instance, run_experiment, run_pipeline, BudgetSpec, ExperimentConfig, Instance, TrialStatus};
use bpb_core::model_spaces::{sample_sphere, BlockVector, SpaceDesc, C64};
use bpb_core::pipelines::{contraction_through_point, PipelineKind, PipelineOptions, PREMISE_FLOOR};
use proptest::prelude::*;

fn cfg(pipeline: PipelineKind, seed: u64, eps: f64) -> ExperimentConfig {
    let base = SpaceDesc::complex_l(2.0, 2);
    ExperimentConfig {
        pipeline,
        base,
        n: if pipeline.is_bilinear() { 2 } else { 3 },
        m: pipeline.is_bilinear().then_some(2),
        range: (!pipeline.is_bilinear()).then(|| SpaceDesc::complex_l(1.0, 3)),
        eps: vec![eps],
        trials: 1,
        master_seed: seed,
        budget: BudgetSpec::default(),
        attain_tol: None,
        arith_tol: None,
        margin_fraction: 0.5,
        fault: None,
        record_timing: false,
    }
}

fn same_bits(a: &BlockVector, b: &BlockVector) -> bool {
    a.blocks.iter().flatten().zip(b.blocks.iter().flatten()).all(|(x, y)| {
        x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
    })
}

fn rotate(inst: &Instance, l: C64) -> Instance {
    match inst {
        Instance::Operator { t, x0 } => Instance::Operator { t: t.scale(l), x0: x0.clone() },
        Instance::Bilinear { b, xl, xr } => Instance::Bilinear {
            b: b.scale(l),
            xl: xl.clone(),
            xr: xr.clone(),
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn operator_contract(seed in any::<u64>(), eps in 0.2f64..0.8) {
        let c = cfg(PipelineKind::Operator, seed, eps);
        let g = generate_instance(&c, 0).unwrap();
        let cert = run_pipeline(c.pipeline, &g.instance, eps, &PipelineOptions::default()).unwrap();
        prop_assert!(cert.passed(), "{:?}", cert.first_failure());
        prop_assert!(cert.attain_residual <= 1e-8);
        prop_assert!((cert.map_norm.lo - 1.0).abs() <= 1e-8);
        prop_assert!(cert.map_distance.hi < eps);
        prop_assert!(cert.point_distance < eps);
    }

    #[test]
    fn local_contract_keeps_the_point(seed in any::<u64>(), eps in 0.2f64..0.8) {
        let c = cfg(PipelineKind::OperatorLocal, seed, eps);
        let g = generate_instance(&c, 0).unwrap();
        let Instance::Operator { x0, .. } = &g.instance else { unreachable!() };
        let cert = run_pipeline(c.pipeline, &g.instance, eps, &PipelineOptions::default()).unwrap();
        prop_assert!(cert.passed(), "{:?}", cert.first_failure());
        prop_assert!(same_bits(&cert.points[0], x0));
        prop_assert_eq!(cert.point_distance, 0.0);
        prop_assert!(cert.map_distance.hi < eps);
    }

    #[test]
    fn operator_phase_invariance(seed in any::<u64>(), angle in 0.0f64..6.28) {
        let c = cfg(PipelineKind::Operator, seed, 0.5);
        let g = generate_instance(&c, 0).unwrap();
        let opts = PipelineOptions::default();
        let a = run_pipeline(c.pipeline, &g.instance, 0.5, &opts).unwrap();
        let b = run_pipeline(c.pipeline, &rotate(&g.instance, C64::from_polar(1.0, angle)), 0.5, &opts).unwrap();
        prop_assert!((a.attain_residual - b.attain_residual).abs() <= 1e-10);
        prop_assert!((a.point_distance - b.point_distance).abs() <= 1e-10);
        prop_assert!((a.map_distance.lo - b.map_distance.lo).abs() <= 1e-10, "{:?} {:?}", a.map_distance, b.map_distance);
    }

    #[test]
    fn contractions_never_expand(seed in any::<u64>(), p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY]), dim in 1usize..4) {
        let space = SpaceDesc::complex_l(p, dim);
        let pts = sample_sphere(&space, seed, 12);
        let u = contraction_through_point(&pts[0], &pts[1]).unwrap();
        let image = u.apply(&pts[0].coords);
        let miss = image.iter().zip(&pts[1].coords).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(miss < 1e-12);
        for z in &pts[2..] {
            for r in [0.3, 1.0, 2.5] {
                let zc: Vec<C64> = z.coords.iter().map(|c| c * r).collect();
                prop_assert!(space.norm_of(&u.apply(&zc)) <= space.norm_of(&zc) * (1.0 + 1e-12));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn bilinear_contract_and_phase(seed in any::<u64>(), angle in 0.0f64..6.28) {
        let c = cfg(PipelineKind::Bilinear, seed, 0.6);
        let g = generate_instance(&c, 0).unwrap();
        let opts = PipelineOptions::default();
        let a = run_pipeline(c.pipeline, &g.instance, 0.6, &opts).unwrap();
        prop_assert!(a.passed(), "{:?}", a.first_failure());
        prop_assert!(a.map_distance.hi < 0.6 && a.point_distance < 0.6);
        let b = run_pipeline(c.pipeline, &rotate(&g.instance, C64::from_polar(1.0, angle)), 0.6, &opts).unwrap();
        prop_assert!((a.attain_residual - b.attain_residual).abs() <= 1e-10);
        prop_assert!((a.point_distance - b.point_distance).abs() <= 1e-10);
    }

    #[test]
    fn bilinear_local_keeps_the_pair(seed in any::<u64>()) {
        let c = cfg(PipelineKind::BilinearLocal, seed, 0.6);
        let g = generate_instance(&c, 0).unwrap();
        let Instance::Bilinear { xl, xr, .. } = &g.instance else { unreachable!() };
        let cert = run_pipeline(c.pipeline, &g.instance, 0.6, &PipelineOptions::default()).unwrap();
        prop_assert!(cert.passed(), "{:?}", cert.first_failure());
        prop_assert!(same_bits(&cert.points[0], xl) && same_bits(&cert.points[1], xr));
    }

    #[test]
    fn experiments_report_every_trial(seed in any::<u64>(), trials in 1usize..4) {
        let mut c = cfg(PipelineKind::Operator, seed, 0.4);
        c.eps = vec![0.3, 0.7];
        c.trials = trials;
        let r = run_experiment(&c).unwrap();
        prop_assert_eq!(r.records.len(), 2 * trials);
        for (k, rec) in r.records.iter().enumerate() {
            prop_assert_eq!(rec.trial, k / 2);
            prop_assert_eq!(rec.status, TrialStatus::Pass);
        }
        for k in 0..trials {
            let g = generate_instance(&c, k).unwrap();
            prop_assert!(g.premise_margin <= g.band.max(PREMISE_FLOOR));
        }
    }
}
