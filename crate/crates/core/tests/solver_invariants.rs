use mzr_core::mesh::{refine_step, Mesh, Element};
use mzr_core::solver::Rk4;
use mzr_core::{
    exact_linear_stats, mc_stats, run_adaptive, GalerkinBasis, IndicatorMode, McConfig, ProblemSpec, QuadratureRule,
    RefinementConfig,
};

#[test]
fn pointwise_ko_trajectories_conserve_energy() {
    for name in ["ko1d", "ko2d", "ko3d"] {
        let spec: ProblemSpec = name.parse().unwrap();
        let sys = spec.structure();
        for xi in [[0.3, -0.7, 0.9], [-1.0, 1.0, 0.01], [0.0, 0.5, -0.5]] {
            let xi = &xi[..spec.dimension()];
            let params = spec.params_at(xi);
            let mut y = spec.initial_condition(xi);
            let e0: f64 = y.iter().map(|v| v * v).sum();
            let mut ws = Rk4::new(3);
            let mut worst = 0.0f64;
            for step in 0..30_000 {
                ws.step(|_, y, out| sys.eval_pointwise(&params, y, out), &mut y, step as f64 * 1e-3, 1e-3).unwrap();
                let e: f64 = y.iter().map(|v| v * v).sum();
                worst = worst.max((e - e0).abs());
            }
            assert!(worst <= 1e-8, "{name} {xi:?}: {worst}");
        }
    }
}

#[test]
fn indicator_modes_agree_on_first_step() {
    for name in ["ode", "ko1d", "ko2d"] {
        let spec: ProblemSpec = name.parse().unwrap();
        let mut cfg = RefinementConfig::new(2, 4, 1e-6, 1e-3, 1e-3);
        let full = run_adaptive(&spec, &cfg).unwrap();
        cfg.indicator_mode = IndicatorMode::DualEvolution;
        let dual = run_adaptive(&spec, &cfg).unwrap();
        assert_eq!(full.mesh, dual.mesh, "{name}");
    }
}

#[test]
fn refine_step_leaves_quiet_elements_alone() {
    let spec: ProblemSpec = "ko1d".parse().unwrap();
    let basis = GalerkinBasis::new(1, 3, 7).unwrap();
    let sys = spec.build(&basis.set).unwrap();
    let mut state = sys.initial_state(basis.n_modes()).unwrap();
    // the initial condition alone has no memory; give y2 a cubic component
    state.variable_mut(1)[3] = 0.05;
    let mut mesh = Mesh::single(Element::root(0, 1, sys, state));
    let rule = QuadratureRule::gauss_legendre(8, 1).unwrap();
    let cfg = RefinementConfig::new(3, 7, 1.0, 1e-3, 1.0);
    let report = refine_step(&mut mesh, 1.0, &cfg, &basis, &rule).unwrap();
    assert!(report.splits.is_empty());
    assert_eq!(mesh.len(), 1);
    let cfg = RefinementConfig::new(3, 7, 1e-12, 1e-3, 1.0);
    let report = refine_step(&mut mesh, 1.0, &cfg, &basis, &rule).unwrap();
    assert_eq!(report.splits.len(), 1);
    assert_eq!(mesh.elements.iter().map(|e| e.bounds[0]).collect::<Vec<_>>(), vec![[-1.0, 0.0], [0.0, 1.0]]);
}

#[test]
fn two_dimensional_split_follows_directional_threshold() {
    // strong ξ1 dependence in y2, weak ξ2 dependence in y3
    let spec: ProblemSpec = "ko2d".parse().unwrap();
    let basis = GalerkinBasis::new(2, 1, 3).unwrap();
    let sys = spec.build(&basis.set).unwrap();
    let mut state = mzr_core::GalerkinState::zeros(0.0, 3, basis.n_modes());
    state.variable_mut(0)[0] = 1.0;
    state.variable_mut(1)[basis.set.axis_index(0, 1).unwrap()] = 0.3;
    state.variable_mut(2)[basis.set.axis_index(1, 1).unwrap()] = 0.01;
    let ind = mzr_core::system::indicators(&sys, &state, 0.5, mzr_core::RateKind::Memory, &basis).unwrap();
    let (s1, s2) = (ind.directional[0], ind.directional[1]);
    assert!(s2 > 0.0 && s2 < 0.1 * s1, "{s1} {s2}");
    let mut mesh = Mesh::single(Element::root(0, 2, sys, state));
    let rule = QuadratureRule::gauss_legendre(4, 1).unwrap();
    let cfg = RefinementConfig::new(1, 3, 1e-12, 1e-3, 1.0);
    let report = refine_step(&mut mesh, 0.5, &cfg, &basis, &rule).unwrap();
    assert_eq!(report.splits[0].dims, vec![0]);
    assert_eq!(mesh.len(), 2);
}

#[test]
fn tighter_tolerance_never_gives_fewer_elements() {
    let spec = ProblemSpec::LinearDecay { u0: 1.0 };
    let counts: Vec<usize> = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
        .iter()
        .map(|&tol| run_adaptive(&spec, &RefinementConfig::new(3, 7, tol, 1e-2, 10.0)).unwrap().final_elements())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}

#[test]
fn runs_are_deterministic() {
    let spec: ProblemSpec = "ko1d".parse().unwrap();
    let cfg = RefinementConfig::new(2, 5, 1e-3, 1e-3, 4.0);
    let a = run_adaptive(&spec, &cfg).unwrap();
    let b = run_adaptive(&spec, &cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.mesh.to_json().unwrap(), b.mesh.to_json().unwrap());
}

#[test]
fn mc_linear_variance_and_error_scaling() {
    let spec = ProblemSpec::LinearDecay { u0: 1.0 };
    let cfg = McConfig { samples: 100_000, seed: 11, dt: 1e-2, times: vec![0.0, 1.0] };
    let s = mc_stats(&spec, &cfg).unwrap();
    assert_eq!(s.variance[0][0], 0.0);
    let exact = exact_linear_stats(1.0, 1.0).1;
    assert!((s.variance[0][1] - exact).abs() <= 4.0 * s.stderr_variance[0][1]);
    let half = mc_stats(&spec, &McConfig { samples: 50_000, ..cfg }).unwrap();
    let ratio = s.stderr_variance[0][1] / half.stderr_variance[0][1];
    assert!((ratio - 0.5f64.sqrt()).abs() <= 0.2 * 0.5f64.sqrt(), "{ratio}");
}
