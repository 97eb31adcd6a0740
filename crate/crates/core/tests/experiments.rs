use iiclab::engine::exact;
use iiclab::engine::PercolationConfig;
use iiclab::estimators;
use iiclab::experiments::transfer::{self, tiny_battery, TransferPlan};
use iiclab::experiments::*;
use iiclab::lattice::{LatticeSpec, Site};
use iiclab::world::{Search, World};
use proptest::prelude::*;

fn nn(d: usize) -> LatticeSpec {
    LatticeSpec::nearest_neighbor(d).unwrap()
}

fn exact_conditional(fw: &FamilyWorld, e: &CylinderEvent, p: f64) -> (f64, f64) {
    let pr = exact::rational(p).unwrap();
    let ev = e.compile(&fw.world).unwrap();
    let mut s = Search::new(fw.world.n_vertices());
    let joint = exact::enumerate_exact(&fw.world, &pr, |m| fw.arm(&m, &mut s) && ev.holds(&fw.world, &m, &mut s)).unwrap();
    let arm = exact::enumerate_exact(&fw.world, &pr, |m| fw.arm(&m, &mut s)).unwrap();
    (exact::to_f64(&(joint / &arm)), exact::to_f64(&arm))
}

#[test]
fn conditional_matches_enumeration_on_a_line() {
    let fam = ConditioningFamily::new(FamilyKind::BoxBoundary, vec![3]);
    let fw = fam.build(&nn(1), 3).unwrap();
    let e = CylinderEvent::two_east(1);
    let (q, arm) = exact_conditional(&fw, &e, 0.7);
    let cfg = PercolationConfig::new(nn(1), 0.7, 17).unwrap();
    let params = SamplingParams { min_accepted: 20_000, batch: 4096, max_samples: 200_000 };
    let s = iic_conditional(&cfg, &e, &[fam], &params).unwrap();
    let pt = &s[0].points[0];
    assert!(pt.estimate.within(q, 4.0), "{} vs {q}", pt.estimate.value);
    assert!(pt.acceptance.within(arm, 4.0), "{} vs {arm}", pt.acceptance.value);
}

#[test]
fn conditional_matches_enumeration_on_a_strip() {
    // x in [-3, 3], y in {0, 1}; target x = 3, obstacle x = -3.
    let sites: Vec<Site> = (-3..=3).flat_map(|x| [Site::new(&[x, 0]), Site::new(&[x, 1])]).collect();
    let w = World::from_sites(&nn(2), sites);
    let target = w.sites().iter().map(|x| x.coords()[0] == 3).collect();
    let obstacle = w.sites().iter().map(|x| x.coords()[0] == -3).collect();
    let fw = FamilyWorld::new(w, target, obstacle, 2).unwrap();
    let e = CylinderEvent { l: 0, kind: EventKind::Connect { a: vec![0, 0], b: vec![0, 1] } };
    let (q, _) = exact_conditional(&fw, &e, 0.5);
    // Same counting loop as the library, on the hand-built window.
    let cfg = PercolationConfig::new(nn(2), 0.5, 3).unwrap();
    let ev = e.compile(&fw.world).unwrap();
    let mut s = Search::new(fw.world.n_vertices());
    let (mut acc, mut hit) = (0u64, 0u64);
    for sid in 0..40_000 {
        let st = iiclab::world::Hashed::new(&fw.world, cfg.with_sample(sid).stream());
        if fw.arm(&st, &mut s) {
            acc += 1;
            hit += ev.holds(&fw.world, &st, &mut s) as u64;
        }
    }
    let v = hit as f64 / acc as f64;
    let se = (q * (1.0 - q) / acc as f64).sqrt();
    assert!((v - q).abs() < 4.0 * se, "{v} vs {q}");
}

#[test]
fn sure_event_gives_one() {
    let cfg = PercolationConfig::new(nn(2), 0.5, 1).unwrap();
    let fam = [ConditioningFamily::new(FamilyKind::VertexSetWithObstacle, vec![3, 6])];
    let params = SamplingParams { min_accepted: 100, batch: 512, max_samples: 8192 };
    let s = iic_conditional(&cfg, &CylinderEvent::sure(), &fam, &params).unwrap();
    for p in &s[0].points {
        assert_eq!(p.estimate.value, 1.0);
    }
}

#[test]
fn joint_runs_match_separate_runs() {
    let cfg = PercolationConfig::new(nn(2), 0.5, 8).unwrap();
    let e = CylinderEvent::two_east(2);
    let a = ConditioningFamily::new(FamilyKind::BoxBoundary, vec![3, 5]);
    let b = ConditioningFamily::new(FamilyKind::HalfspaceTarget, vec![4]);
    // A fixed budget makes the stopping rule identical in every run.
    let params = SamplingParams { min_accepted: u64::MAX, batch: 700, max_samples: 2100 };
    let joint = iic_conditional(&cfg, &e, &[a.clone(), b.clone()], &params).unwrap();
    let sa = iic_conditional(&cfg, &e, &[a], &params).unwrap();
    let sb = iic_conditional(&cfg, &e, &[b], &params).unwrap();
    assert_eq!(joint[0], sa[0]);
    assert_eq!(joint[1], sb[0]);
}

#[test]
fn acceptance_matches_one_arm_estimate() {
    let cfg = PercolationConfig::new(nn(2), 0.5, 21).unwrap();
    let fam = [ConditioningFamily::new(FamilyKind::BoxBoundary, vec![6])];
    let params = SamplingParams { min_accepted: u64::MAX, batch: 4096, max_samples: 8192 };
    let s = iic_conditional(&cfg, &CylinderEvent::sure(), &fam, &params).unwrap();
    let acc = &s[0].points[0].acceptance;
    let arm = estimators::one_arm_profile(&cfg.with_p(0.5), &[7], 8192, 1 << 20).unwrap();
    let other = PercolationConfig { seed: 99, ..cfg };
    let arm2 = estimators::one_arm_profile(&other, &[7], 8192, 1 << 20).unwrap();
    let sigma = (acc.stderr.powi(2) + arm2[0].1.stderr.powi(2)).sqrt();
    assert!((acc.value - arm2[0].1.value).abs() <= 4.0 * sigma, "{} vs {}", acc.value, arm2[0].1.value);
    // Same seed and sample ids: the two routes see the same configurations.
    assert_eq!(acc.value, arm[0].1.value);
}

#[test]
fn diagnostic_self_consistency_calibration() {
    let e = CylinderEvent::two_east(2);
    let params = SamplingParams { min_accepted: 300, batch: 512, max_samples: 20_000 };
    let mut consistent = 0;
    for rep in 0..100u64 {
        let mk = |seed: u64, name: &str| {
            let cfg = PercolationConfig::new(nn(2), 0.5, seed).unwrap();
            let f = ConditioningFamily::new(FamilyKind::BoxBoundary, vec![3, 6]);
            let mut s = iic_conditional(&cfg, &e, &[f], &params).unwrap().remove(0);
            s.family = name.into();
            s
        };
        let d = convergence_diagnostic(&[mk(2 * rep + 1000, "a"), mk(2 * rep + 1001, "b")], 0.0);
        consistent += d.terminal.iter().all(|g| g.verdict == Verdict::Consistent) as u32;
    }
    assert!(consistent >= 95, "{consistent}/100");
}

#[test]
fn diagnostic_detects_planted_mismatch() {
    let e = CylinderEvent::two_east(2);
    let params = SamplingParams { min_accepted: 2000, batch: 2048, max_samples: 100_000 };
    let run = |p: f64| {
        let cfg = PercolationConfig::new(nn(2), p, 4).unwrap();
        iic_conditional(&cfg, &e, &[ConditioningFamily::new(FamilyKind::BoxBoundary, vec![4, 8])], &params).unwrap().remove(0)
    };
    let d = convergence_diagnostic(&[run(0.5), run(0.75)], 0.02);
    assert_eq!(d.verdict, Verdict::Inconsistent);
}

#[test]
fn sweep_at_p_one_is_indicator() {
    let cfg = PercolationConfig::new(nn(2), 0.5, 1).unwrap();
    let sp = SweepParams {
        p_list: vec![1.0],
        r_proxy: (3, 6),
        sampling: SamplingParams { min_accepted: 50, batch: 64, max_samples: 64 },
    };
    let r = supercritical_sweep(&cfg, &CylinderEvent::two_east(2), &sp, None, 0.02).unwrap();
    assert_eq!(r.points[0][0].estimate.value, 1.0);
    let closed = CylinderEvent {
        l: 1,
        kind: EventKind::Pattern { edges: vec![EdgeState { a: vec![0, 0], b: vec![1, 0], open: false }] },
    };
    let r = supercritical_sweep(&cfg, &closed, &sp, None, 0.02).unwrap();
    assert_eq!(r.points[0][1].estimate.value, 0.0);
    let sp2 = SweepParams { p_list: vec![0.7, 0.6], ..sp };
    let r = supercritical_sweep(&cfg, &CylinderEvent::sure(), &sp2, None, 0.02).unwrap();
    assert!(r.points.iter().flatten().all(|p| p.estimate.value == 1.0 || p.accepted == 0));
}

#[test]
fn extraction_g_within_f() {
    let g = &tiny_battery().unwrap()[1];
    let cfg = PercolationConfig::new(*g.spec(), 0.55, 2).unwrap();
    let ks = transfer::extract_kernels(&cfg, g, 2, &TransferPlan { n_samples: 3000, batches: 3 }).unwrap();
    for k in &ks {
        assert_eq!(k.g_over_f, 0);
        assert_eq!(k.g_violations, 0);
        for e in k.m.iter().flatten().chain(&k.gamma) {
            assert!((0.0..=1.0).contains(&e.value));
        }
    }
    assert!(ks[0].m_hat.is_some() && ks[1].m_hat.is_none());
}

#[test]
fn mc_reconstruction_sure_event_uses_hat() {
    let base = tiny_battery().unwrap().remove(2);
    let g = transfer::Geometry::new("plus_sure", base.fw.clone(), base.ladder.clone(), CylinderEvent::sure(), base.good, base.reg)
        .unwrap();
    let cfg = PercolationConfig::new(*g.spec(), 0.6, 5).unwrap();
    let r = transfer::mc_reconstruction(&cfg, &g, 1, &TransferPlan { n_samples: 2000, batches: 4 }).unwrap();
    assert_eq!(r.lhs, r.lhs_hat);
    assert_eq!(r.rhs, r.rhs_hat);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conditionals_are_probabilities(p in 0.0f64..=1.0, seed in any::<u64>(), n in 1i64..5) {
        let cfg = PercolationConfig::new(nn(2), p, seed).unwrap();
        let fams = [ConditioningFamily::new(FamilyKind::SingleVertex, vec![n + 1]), ConditioningFamily::new(FamilyKind::BoxBoundary, vec![n + 1])];
        let params = SamplingParams { min_accepted: 30, batch: 64, max_samples: 256 };
        let s = iic_conditional(&cfg, &CylinderEvent::two_east(2), &fams, &params).unwrap();
        for pt in s.iter().flat_map(|x| &x.points) {
            prop_assert!(pt.accepted <= pt.attempted);
            prop_assert!(pt.accepted == 0 || (0.0..=1.0).contains(&pt.estimate.value));
            prop_assert_eq!(pt.low_confidence, pt.accepted < LOW_CONFIDENCE);
        }
        // Reaching the single vertex implies reaching the sphere through it.
        prop_assert!(s[0].points[0].accepted <= s[1].points[0].accepted);
    }

    #[test]
    fn exact_decomposition_holds_at_any_p(num in 0u32..=16) {
        let p = num_rational::BigRational::new((num as i64).into(), 16.into());
        let g = &tiny_battery().unwrap()[5];
        let r = transfer::exact_reconstruction(g, &p).unwrap();
        prop_assert!(r.passes(), "{:?}", r);
    }
}
