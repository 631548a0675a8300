//! Steady states, frequency responses and propagation must agree with each
//! other on a small interacting dot.

mod common;

use deom::bath::{DecompositionMethod, FitTarget, LorentzBath, ModeTable};
use deom::hierarchy::{check_capacity, Generator, HierarchyState, IndexSet};
use deom::model::{build_fock_operators, ImpurityModel, Sign};
use deom::observables::{correlation, seed_correlation_rhs, Side};
use deom::solvers::{
    generator_residual, propagate, propagate_observed, solve_frequency_response, solve_steady_state, LinearMethod,
    SolverConfig,
};
use deom::{DeomError, C64};
use std::sync::Arc;

fn biased_dot() -> (deom::model::FockOperatorSet, Generator) {
    let model = ImpurityModel::SingleDot { eps: -1.0, u: 2.0 };
    let baths = vec![
        LorentzBath::new("L", 0.5, 5.0, 2.0, 0.5, vec![0, 1]).unwrap(),
        LorentzBath::new("R", 0.5, 5.0, 2.0, -0.5, vec![0, 1]).unwrap(),
    ];
    Generator::from_model(&model, &baths, FitTarget::Modes(2), DecompositionMethod::Prony, 2).unwrap()
}

fn tight() -> SolverConfig {
    SolverConfig { tol: 1e-11, ..SolverConfig::default() }
}

fn max_diff(a: &HierarchyState, b: &HierarchyState) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn steady_state_matches_long_propagation() {
    let (ops, gen) = biased_dot();
    let ss = solve_steady_state(&gen, None, &tight()).unwrap();
    assert!(generator_residual(&gen, &ss.state) < 1e-10);
    let rho0 = ops.identity() * C64::new(0.25, 0.0);
    let late = propagate(&gen, &gen.product_state(&rho0), 0.02, 3000).unwrap();
    assert!((late.root_trace() - 1.0).norm() < 1e-10);
    let d = max_diff(&ss.state, &late);
    assert!(d < 1e-4, "max block difference {d}");
}

#[test]
fn propagation_conserves_trace_and_is_fourth_order() {
    let (ops, gen) = biased_dot();
    let rho0 = ops.number(0) * C64::new(0.5, 0.0);
    let x0 = gen.product_state(&rho0);
    let reference = propagate(&gen, &x0, 0.0125, 160).unwrap();
    let coarse = propagate(&gen, &x0, 0.1, 20).unwrap();
    let fine = propagate(&gen, &x0, 0.05, 40).unwrap();
    for s in [&reference, &coarse, &fine] {
        assert!((s.root_trace() - 1.0).norm() < 1e-12);
    }
    let ratio = max_diff(&coarse, &reference) / max_diff(&fine, &reference);
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn unstable_time_step_is_reported() {
    let (ops, gen) = biased_dot();
    let x0 = gen.product_state(&(ops.identity() * C64::new(0.25, 0.0)));
    match propagate(&gen, &x0, 5.0, 200) {
        Err(DeomError::Instability { .. }) => {}
        other => panic!("expected instability, got {other:?}"),
    }
}

#[test]
fn converged_results_do_not_depend_on_the_stability_factor() {
    let (ops, gen) = biased_dot();
    let tol = 1e-10;
    let mk = |o| SolverConfig { omega_damp: Some(o), tol, ..SolverConfig::default() };
    let a = solve_steady_state(&gen, None, &mk(5.0)).unwrap();
    let b = solve_steady_state(&gen, None, &mk(40.0)).unwrap();
    let d = max_diff(&a.state, &b.state) / a.state.norm();
    assert!(d < 10.0 * tol, "steady states differ by {d}");
    let (u, ud) = (ops.dense(0, Sign::Minus), ops.dense(0, Sign::Plus));
    let omegas = [-1.5, 0.0, 0.7];
    let damped = |o| SolverConfig { omega_damp: Some(o), tol, method: LinearMethod::Damped, ..SolverConfig::default() };
    let c1 = correlation(&gen, &a.state, &u, &ud, &omegas, &damped(5.0)).unwrap();
    let c2 = correlation(&gen, &a.state, &u, &ud, &omegas, &damped(40.0)).unwrap();
    let c3 = correlation(&gen, &a.state, &u, &ud, &omegas, &mk(5.0)).unwrap();
    for k in 0..omegas.len() {
        assert!((c1[k] - c2[k]).norm() < 10.0 * tol, "{} vs {}", c1[k], c2[k]);
        assert!((c1[k] - c3[k]).norm() < 10.0 * tol, "{} vs {}", c1[k], c3[k]);
    }
}

/// `(1/π) ∫_0^T e^{iωt} Tr[A e^{Gt} B ρ] dt` by Simpson's rule on the RK4 trajectory.
fn half_fourier(gen: &Generator, rhs: &HierarchyState, a: &nalgebra::DMatrix<C64>, omegas: &[f64], dt: f64, n: usize) -> Vec<C64> {
    let ae = gen.to_eigen(a);
    let mut samples = Vec::with_capacity(n + 1);
    propagate_observed(gen, rhs, dt, n, |_, x| samples.push((&ae * x.root()).trace())).unwrap();
    omegas
        .iter()
        .map(|&w| {
            let mut s = C64::default();
            for (k, v) in samples.iter().enumerate() {
                let wt = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                s += v * C64::new(0.0, w * k as f64 * dt).exp() * wt;
            }
            s * dt / 3.0 / std::f64::consts::PI
        })
        .collect()
}

#[test]
fn frequency_domain_matches_half_fourier_transform() {
    let (ops, gen) = biased_dot();
    let ss = solve_steady_state(&gen, None, &tight()).unwrap();
    let omegas = [-3.0, -1.0, 0.0, 0.8, 2.5];
    for (a, b) in [
        (ops.dense(0, Sign::Minus), ops.dense(0, Sign::Plus)),
        (ops.dense(1, Sign::Plus), ops.dense(1, Sign::Minus)),
    ] {
        let freq = correlation(&gen, &ss.state, &a, &b, &omegas, &tight()).unwrap();
        let rhs = seed_correlation_rhs(&gen, &ss.state, &b, Side::Left).unwrap();
        let time = half_fourier(&gen, &rhs, &a, &omegas, 0.01, 8000);
        for k in 0..omegas.len() {
            assert!((freq[k] - time[k]).norm() < 1e-3, "w={}: {} vs {}", omegas[k], freq[k], time[k]);
        }
    }
}

#[test]
fn decoupled_system_has_exact_resolvent() {
    let ops = build_fock_operators(1).unwrap();
    let h = ops.number(0) * C64::new(0.8, 0.0);
    let table = ModeTable::from_modes(vec![], vec![], false).unwrap();
    let gen = Generator::new(&h, &ops, table, 2).unwrap();
    let rho = ops.identity() * C64::new(0.5, 0.0);
    let st = gen.product_state(&rho);
    let rhs = seed_correlation_rhs(&gen, &st, &ops.dense(0, Sign::Plus), Side::Left).unwrap();
    let a = ops.dense(0, Sign::Minus);
    let c = correlation(&gen, &st, &a, &ops.dense(0, Sign::Plus), &[0.3], &tight()).unwrap();
    // ⟨a(t) a†⟩ = ½ e^{-i 0.8 t}, so Ĉ(ω) = ½ / (π i (0.8 − ω))
    let want = 0.5 / (std::f64::consts::PI * C64::new(0.0, 0.8 - 0.3));
    assert!((c[0] - want).norm() < 1e-10, "{} vs {want}", c[0]);
    match solve_frequency_response(&gen, &rhs, 0.8, &tight(), None) {
        Err(DeomError::Singular { .. }) => {}
        other => panic!("expected a singular response, got {other:?}"),
    }
}

#[test]
fn zero_seed_gives_zero_response() {
    let (_, gen) = biased_dot();
    let rhs = gen.zero_state(true);
    let r = solve_frequency_response(&gen, &rhs, 0.4, &tight(), None).unwrap();
    assert_eq!(r.x.norm(), 0.0);
    assert_eq!(r.convergence.iterations, 0);
}

#[test]
fn iteration_budget_exhaustion_is_reported() {
    let (_, gen) = biased_dot();
    let cfg = SolverConfig { max_iter: 3, ..tight() };
    match solve_steady_state(&gen, None, &cfg) {
        Err(DeomError::NonConvergence { iterations, history, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(history.len(), 3);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn snapshot_round_trip_is_exact() {
    let (_, gen) = biased_dot();
    let ss = solve_steady_state(&gen, None, &tight()).unwrap();
    let mut buf = Vec::new();
    ss.state.write_snapshot(&mut buf).unwrap();
    let back = HierarchyState::read_snapshot(&buf[..], gen.index.clone(), false).unwrap();
    assert_eq!(back.data, ss.state.data);
    let other = Arc::new(IndexSet::new(gen.modes.len(), 1).unwrap());
    assert!(HierarchyState::read_snapshot(&buf[..], other, false).is_err());
}

#[test]
fn oversized_hierarchies_are_refused() {
    assert!(check_capacity(16, 3, 4, 8, 1 << 30).is_ok());
    match check_capacity(48, 5, 16, 8, 1 << 30) {
        Err(DeomError::Capacity { count, budget }) => {
            assert_eq!(count, deom::hierarchy::ddo_count(48, 5));
            assert!(budget < count);
        }
        other => panic!("expected a capacity error, got {other:?}"),
    }
}
