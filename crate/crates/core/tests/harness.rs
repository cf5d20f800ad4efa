use hypou::gaussian::{Field, PathSpec, SolverConfig, Source, SourceSpec, SpaceTimeGrid, TimePSDPath, TimeProfile};
use hypou::harness::*;
use hypou::linalg::{from_rows, Matrix};
use hypou::structure::OUSystem;
use hypou::HypouError;

fn small_setup(norms: Vec<NormPair>) -> StabilitySetup {
    let sources = vec![
        SourceSpec::bump(vec![0.0, 0.0], 1.0, 1.0, TimeProfile::Constant),
        SourceSpec::bump(vec![0.5, -0.5], 0.8, 1.0, TimeProfile::Step { at: 0.25, before: 1.0, after: -0.5 }),
    ];
    StabilitySetup {
        sources,
        perturbations: vec![PathSpec::Constant { matrix: vec![vec![0.0, 0.0], vec![0.0, 0.0]] }],
        norms,
        grid: SpaceTimeGrid::aligned(0.5, 8, &[-4.0, -6.0], &[4.0, 6.0], &[0.2, 0.2]).unwrap(),
        solver: SolverConfig::default(),
        mode: StabilityMode::Direct,
        delta: DEFAULT_DELTA,
    }
}

fn all_pairs() -> Vec<NormPair> {
    vec![NormPair::D2xLp { p: 2.0 }, NormPair::Sobolev { p: 2.0, component: Some("y1".into()) }, NormPair::Schauder { beta: 0.5 }]
}

#[test]
fn zero_perturbation_has_unit_margin() {
    let sys = OUSystem::kolmogorov();
    let r = stability_experiment(&sys, &small_setup(all_pairs()), 1).unwrap();
    for p in &r.pairs {
        assert_eq!(p.margin, 1.0, "{}", p.norm.label());
        assert!(p.passes && p.c_hat_base > 0.0);
        for (i, row) in p.ratios.iter().enumerate() {
            assert!(row[0] <= p.c_hat_base);
            if i == p.argmax[0] {
                assert_eq!(row[0], p.c_hat_base);
            }
        }
    }
    assert!(r.passes());
    assert_eq!(r.max_principle.len(), 2 * 2);
}

#[test]
fn margins_are_invariant_under_source_scaling() {
    let sys = OUSystem::kolmogorov();
    let mut setup = small_setup(all_pairs());
    setup.perturbations.push(PathSpec::Constant { matrix: vec![vec![0.5, 0.0], vec![0.0, 0.5]] });
    let a = stability_experiment(&sys, &setup, 3).unwrap();
    setup.sources = setup.sources.iter().map(|f| f.scaled(3.0)).collect();
    let b = stability_experiment(&sys, &setup, 3).unwrap();
    for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
        assert!((pa.margin - pb.margin).abs() < 1e-9, "{}", pa.norm.label());
        assert!((pa.c_hat_base - pb.c_hat_base).abs() < 1e-9 * pa.c_hat_base);
    }
}

#[test]
fn ratio_layout_and_csv() {
    let sys = OUSystem::kolmogorov();
    let mut setup = small_setup(vec![NormPair::D2xLp { p: 2.0 }]);
    setup.perturbations.push(PathSpec::Rank1Vanishing { v: vec![0.6, 0.8], period: 0.5, phase: 0.0 });
    let r = stability_experiment(&sys, &setup, 9).unwrap();
    assert_eq!((r.n_sources, r.n_perturbations), (2, 2));
    assert_eq!(r.seeds.len(), 2);
    assert_eq!(r.pairs[0].ratios.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2]);
    let mut out = vec![];
    r.write_ratios_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "norm,f,s,ratio");
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[1].starts_with("d2x-l2,0,0,"));
    // timings stay out of the report
    assert!(!r.to_json().unwrap().contains("entries_s"));
}

#[test]
fn estimate_constant_is_the_base_column_max() {
    let sys = OUSystem::kolmogorov();
    let setup = small_setup(vec![NormPair::D2xLp { p: 2.0 }]);
    let c = estimate_constant(&sys, &setup.sources, &setup.norms[0], &setup.grid, &setup.solver).unwrap();
    let r = stability_experiment(&sys, &setup, 0).unwrap();
    assert!((c - r.pairs[0].c_hat_base).abs() < 1e-12 * c);
}

#[test]
fn class_and_exponent_errors() {
    // hypoelliptic, but the x block has a nonzero diagonal
    let a = from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let sys = OUSystem::new(a, Matrix::identity(1, 1), 1.0).unwrap();
    let err = stability_experiment(&sys, &small_setup(vec![NormPair::Sobolev { p: 2.0, component: None }]), 0).unwrap_err();
    assert!(matches!(err, HypouError::Class(_)));
    let kol = OUSystem::kolmogorov();
    for beta in [0.0, 1.0, 1.5] {
        let err = schauder_stability(&kol, &small_setup(vec![]), beta, 0).unwrap_err();
        assert!(matches!(err, HypouError::Exponent(_)), "{beta}");
    }
    let err = sobolev_stability(&kol, &small_setup(vec![]), 2.0, Some("y7".into()), 0).unwrap_err();
    assert!(matches!(err, HypouError::InvalidArgument(_)));
    let err = stability_experiment(&kol, &small_setup(vec![]), 0).unwrap_err();
    assert!(matches!(err, HypouError::InvalidArgument(_)));
}

#[test]
fn poisson_ladder_mode_tracks_direct_solve() {
    let sys = OUSystem::kolmogorov();
    let f = SourceSpec::bump(vec![0.0, 0.0], 1.0, 1.0, TimeProfile::Constant);
    let s = TimePSDPath::constant(from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
    let grid = SpaceTimeGrid::aligned(0.25, 2, &[-2.0, -2.0], &[2.0, 2.0], &[0.1, 0.1]).unwrap();
    let cfg = SolverConfig::default();
    let direct = solve_perturbed(&sys, Some(&s), &f, &grid, &cfg, &StabilityMode::Direct, 0).unwrap();
    let ladder = StabilityMode::PoissonLadder { eps_ladder: vec![0.2, 0.1, 0.05] };
    let jump = solve_perturbed(&sys, Some(&s), &f, &grid, &cfg, &ladder, 0).unwrap();
    let rel = direct.max_abs_diff(&jump) / direct.sup_abs();
    assert!(rel < 5e-3, "{rel}");
    assert!(jump.provenance.solver.contains("poisson-ladder"));
    // S = 0 falls back to the Gaussian solve
    let zero = TimePSDPath::zero(2);
    let a = solve_perturbed(&sys, Some(&zero), &f, &grid, &cfg, &ladder, 0).unwrap();
    let b = solve_perturbed(&sys, None, &f, &grid, &cfg, &StabilityMode::Direct, 0).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn max_principle_rows() {
    let grid = SpaceTimeGrid::aligned(0.5, 2, &[-1.0, -1.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let ok = Field::from_fn(grid.clone(), "test", |t, _| t);
    let bad = Field::from_fn(grid, "test", |t, _| 2.0 * t);
    let rows = max_principle_suite(&[("ok".into(), &ok, 1.0), ("bad".into(), &bad, 1.0)]);
    assert!(rows[0].passes && !rows[1].passes);
    assert_eq!(rows[0].bound, 0.5);
}

#[test]
fn default_suites_and_box() {
    let sys = OUSystem::kolmogorov();
    let fs = default_f_suite();
    let ss = default_s_suite();
    assert_eq!((fs.len(), ss.len()), (10, 6));
    assert!(ss.iter().all(|s| TimePSDPath::from_spec(s).is_ok()));
    assert!(fs.iter().filter(|f| !f.time_breakpoints(1.0).is_empty()).count() >= 2);
    let setup = StabilitySetup::default_for(&sys).unwrap();
    let g = &setup.grid;
    assert_eq!(g.horizon, 1.0);
    for f in &fs {
        let (lo, hi) = f.support_box(1.0).unwrap();
        for j in 0..2 {
            assert!(g.lo[j] < lo[j] - 2.0 && g.hi[j] > hi[j] + 2.0);
        }
    }
    assert!((g.spacing(0) - 0.1).abs() < 1e-12 && (g.spacing(1) - 0.1).abs() < 1e-12);
    let text = serde_json::to_string(&setup).unwrap();
    assert_eq!(serde_json::from_str::<StabilitySetup>(&text).unwrap(), setup);
}
