use std::sync::Arc;

use monofem::assembly::{
    assemble_iteration_matrix, assemble_mass_matrix, assemble_residual, assemble_residual_with_degree,
    assembly_count, energy_norm,
};
use monofem::linalg::{EnvelopeCholesky, SpdSolver};
use monofem::mesh::Mesh;
use monofem::problems::{builtin, ProblemDef, BUILTIN_NAMES, UNIT_SQUARE_POINCARE};
use monofem::solver::{contraction_constant, run_fixed_point, IterationState, StopRule};
use monofem::space::{build_space, CoefVector, FeSpace};

fn space(mesh: Mesh, p: usize) -> Arc<FeSpace> {
    Arc::new(build_space(Arc::new(mesh), p).unwrap())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `-a Δu + b u = g` with constant coefficients.
fn linear_problem(a: f64, b: f64, g: f64) -> ProblemDef {
    ProblemDef {
        name: "linear".into(),
        mu: Arc::new(move |_, _| a),
        mu_t: Some(Arc::new(|_, _| 0.0)),
        reaction: Arc::new(move |_, u| b * u),
        source: Some(Arc::new(move |_| -g)),
        alpha1: a,
        alpha2: a,
        beta1: b,
        beta2: b,
        poincare: UNIT_SQUARE_POINCARE,
        theta: 1.0,
        exact: None,
    }
}

#[test]
fn residual_of_zero_for_homogeneous_linear_problem() {
    let s = space(Mesh::unit_square_tri(4).unwrap(), 2);
    let r = assemble_residual(&s, &CoefVector::zeros(&s), &linear_problem(1.0, 0.0, 0.0)).unwrap();
    assert!(r.iter().all(|&x| x == 0.0));
}

#[test]
fn iteration_matrices_are_spd() {
    for (mesh, p) in [
        (Mesh::unit_square_tri(5).unwrap(), 1),
        (Mesh::unit_square_tri(3).unwrap(), 4),
        (Mesh::unit_square_quad(4).unwrap(), 3),
        (Mesh::unit_square_tri(3).unwrap().refine(&[1, 4, 6]).unwrap(), 2),
    ] {
        let s = space(mesh, p);
        let m = assemble_iteration_matrix(&s, 0.7, 0.2).unwrap();
        assert!(EnvelopeCholesky::factor(&m).is_ok());
        assert!(EnvelopeCholesky::factor(&assemble_mass_matrix(&s)).is_ok());
    }
}

fn quadrature_gap(problem: &ProblemDef, n: usize, p: usize, u: impl Fn([f64; 2]) -> f64) -> f64 {
    let s = space(Mesh::unit_square_quad(n).unwrap(), p);
    let c = s.interpolate(u).unwrap();
    let base = assemble_residual(&s, &c, problem).unwrap();
    let fine = assemble_residual_with_degree(&s, &c, problem, 20).unwrap();
    let diff: f64 = base.iter().zip(&fine).map(|(a, b)| (a - b).abs()).sum();
    diff / fine.iter().map(|x| x.abs()).sum::<f64>()
}

#[test]
fn quadrature_saturates_on_polynomial_integrands() {
    for p in 1..=4 {
        let gap = quadrature_gap(&linear_problem(1.5, 0.5, 2.0), 4, p, |x| x[0] * (1.0 - x[0]) * x[1]);
        assert!(gap < 1e-10, "p = {p}: {gap:e}");
    }
}

#[test]
fn quadrature_gap_shrinks_on_builtins() {
    for name in BUILTIN_NAMES {
        let problem = builtin(name, None).unwrap();
        let exact = problem.exact.clone().unwrap();
        let u = |x: [f64; 2]| exact.value(x) * (1.0 + 0.1 * x[0]);
        for p in [1, 2] {
            let (coarse, fine) = (quadrature_gap(&problem, 8, p, u), quadrature_gap(&problem, 16, p, u));
            assert!(fine < 5e-3, "{name}, p = {p}: {fine:e}");
            assert!(coarse / fine > 3.0, "{name}, p = {p}: {coarse:e} -> {fine:e}");
        }
    }
}

#[test]
fn interpolant_residual_decreases_under_refinement() {
    let problem = builtin("apriori", None).unwrap();
    let exact = problem.exact.clone().unwrap();
    let res = |n: usize| {
        let s = space(Mesh::unit_square_quad(n).unwrap(), 2);
        let c = s.interpolate(|x| exact.value(x)).unwrap();
        max_abs(&assemble_residual(&s, &c, &problem).unwrap())
    };
    let (r8, r16) = (res(8), res(16));
    let ratio = r8 / r16;
    assert!(ratio > 2.5, "ratio {ratio}");
}

#[test]
fn step_satisfies_the_linear_system() {
    for name in BUILTIN_NAMES {
        let problem = Arc::new(builtin(name, None).unwrap());
        let s = space(Mesh::unit_square_tri(6).unwrap(), 2);
        let mut state = IterationState::new(s.clone(), problem.clone(), CoefVector::zeros(&s)).unwrap();
        state.run(StopRule::MaxIterations(2)).unwrap();
        let prev = state.current().clone();
        state.step().unwrap();
        let l = problem.lipschitz().unwrap();
        let a = assemble_residual(&s, &prev, &problem).unwrap();
        let d = state.current().sub(&prev);
        let md = state.matrix().mul_vec(&d.values);
        let scale = max_abs(&a) / (l * l);
        let worst = md.iter().zip(&a).map(|(m, r)| (m + r / (l * l)).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-12 * scale.max(1e-300), "{name}: {worst:e}");
    }
}

#[test]
fn galerkin_solution_is_a_fixed_point() {
    let problem = Arc::new(builtin("apriori", None).unwrap());
    let s = space(Mesh::unit_square_quad(8).unwrap(), 2);
    let (u, _) = run_fixed_point(s.clone(), problem.clone(), CoefVector::zeros(&s), StopRule::Residual {
        tol: 1e-14,
        max_iterations: 500,
    })
    .unwrap();
    assert!(max_abs(&assemble_residual(&s, &u, &problem).unwrap()) <= 1e-14);
    let mut state = IterationState::new(s.clone(), problem, u.clone()).unwrap();
    state.step().unwrap();
    let m = state.matrix();
    assert!(energy_norm(m, &state.current().sub(&u)) <= 1e-12 * energy_norm(m, &u));
}

#[test]
fn linear_problem_with_unit_lipschitz_converges_in_one_step() {
    let problem = Arc::new(linear_problem(1.0, 0.5, 1.0));
    assert_eq!(problem.lipschitz().unwrap(), 1.0);
    let s = space(Mesh::unit_square_tri(6).unwrap(), 2);
    let (u, hist) = run_fixed_point(s.clone(), problem.clone(), CoefVector::zeros(&s), StopRule::MaxIterations(1)).unwrap();
    assert_eq!(hist.len(), 1);
    // direct oracle: M u = load vector of g
    let m = assemble_iteration_matrix(&s, 1.0, 0.5).unwrap();
    let load: Vec<f64> = assemble_residual(&s, &CoefVector::zeros(&s), &problem).unwrap().iter().map(|r| -r).collect();
    let direct = SpdSolver::new(&m).unwrap().solve(&m, &load, 1e-14).unwrap();
    let scale = max_abs(&direct);
    for (a, b) in u.values.iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-12 * scale);
    }
    assert!(max_abs(&assemble_residual(&s, &u, &problem).unwrap()) <= 1e-14);
}

#[test]
fn zero_steps_return_the_initial_guess() {
    let problem = Arc::new(builtin("ex1", None).unwrap());
    let s = space(Mesh::unit_square_tri(3).unwrap(), 1);
    let u0 = CoefVector::from_values(&s, vec![0.3; s.n_free()]).unwrap();
    let (u, hist) = run_fixed_point(s, problem, u0.clone(), StopRule::MaxIterations(0)).unwrap();
    assert!(hist.is_empty());
    assert_eq!(u, u0);
}

#[test]
fn limit_does_not_depend_on_the_start() {
    let problem = Arc::new(builtin("apriori", None).unwrap());
    let s = space(Mesh::unit_square_quad(8).unwrap(), 2);
    let rule = StopRule::Residual { tol: 1e-14, max_iterations: 500 };
    let (a, _) = run_fixed_point(s.clone(), problem.clone(), CoefVector::zeros(&s), rule).unwrap();
    let start = CoefVector::from_values(&s, (0..s.n_free()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect()).unwrap();
    let (b, _) = run_fixed_point(s.clone(), problem, start, rule).unwrap();
    let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-10, "{diff:e}");
}

#[test]
fn every_builtin_contracts_and_assembles_once() {
    for (name, eps) in [("apriori", None), ("ex1", None), ("ex2", None), ("ex3", Some(1.0)), ("ex3", Some(1e-6))] {
        let problem = Arc::new(builtin(name, eps).unwrap());
        let k = contraction_constant(1.0, problem.lipschitz().unwrap()).unwrap();
        let s = space(Mesh::unit_square_tri(6).unwrap(), 1);
        let before = assembly_count();
        let (_, hist) = run_fixed_point(s.clone(), problem, CoefVector::zeros(&s), StopRule::MaxIterations(15)).unwrap();
        assert_eq!(assembly_count(), before + 1, "{name}");
        for w in hist.windows(2) {
            // stop once the increments reach rounding level
            if w[0].increment < 1e-12 {
                break;
            }
            assert!(w[1].increment <= (k + 1e-10) * w[0].increment, "{name}: {:?}", w);
        }
    }
}

#[test]
fn contraction_stays_away_from_one_for_small_eps() {
    for e in [1.0, 1e-2, 1e-4, 1e-6, 1e-9] {
        let p = builtin("ex3", Some(e)).unwrap();
        assert!(contraction_constant(1.0, p.lipschitz().unwrap()).unwrap() <= 0.999);
    }
}
