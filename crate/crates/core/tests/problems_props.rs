use std::sync::Arc;

use monofem::mesh::Mesh;
use monofem::problems::{
    builtin, manufactured_forcing, relative_true_error, true_error, ExactSolution, ProblemDef, BUILTIN_NAMES,
};
use monofem::space::{build_space, CoefVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_problems() -> Vec<ProblemDef> {
    let mut v: Vec<ProblemDef> = BUILTIN_NAMES.iter().map(|n| builtin(n, None).unwrap()).collect();
    for e in [1.0, 1e-3, 1e-6] {
        v.push(builtin("ex3", Some(e)).unwrap());
    }
    v
}

fn grid() -> Vec<[f64; 2]> {
    (0..=10).flat_map(|i| (0..=10).map(move |j| [i as f64 / 10.0, j as f64 / 10.0])).collect()
}

#[test]
fn diffusion_secants_lie_between_alpha_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for p in all_problems() {
        for x in grid() {
            for _ in 0..10 {
                let (a, b): (f64, f64) = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
                let (s, t) = (a.min(b), a.max(b));
                if t - s < 1e-9 {
                    continue;
                }
                let secant = (p.mu(x, t) * t - p.mu(x, s) * s) / (t - s);
                let slack = 1e-9 * p.alpha1;
                assert!(secant >= p.alpha2 - slack && secant <= p.alpha1 + slack, "{}: {secant}", p.name);
            }
        }
    }
}

#[test]
fn reaction_secants_lie_between_beta_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for p in all_problems() {
        for x in grid() {
            for _ in 0..10 {
                let (s, t): (f64, f64) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
                if (t - s).abs() < 1e-6 {
                    continue;
                }
                let secant = (p.f(x, t) - p.f(x, s)) / (t - s);
                let slack = 1e-9 * p.beta1.max(1.0);
                assert!(secant >= p.beta2 - slack && secant <= p.beta1 + slack, "{}: {secant} at {x:?}", p.name);
            }
        }
    }
}

/// Extremes of `d/dt [μ(t) t]` over `[0, 100]` from secants on a fine grid.
fn flux_slope_range(p: &ProblemDef) -> (f64, f64) {
    let n = 1_000_000;
    let flux = |t: f64| p.mu([0.5, 0.5], t) * t;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let (s, t) = (100.0 * i as f64 / n as f64, 100.0 * (i + 1) as f64 / n as f64);
        let slope = (flux(t) - flux(s)) / (t - s);
        lo = lo.min(slope);
        hi = hi.max(slope);
    }
    (lo, hi)
}

#[test]
fn alpha_constants_are_attained() {
    let (lo, _) = flux_slope_range(&builtin("apriori", None).unwrap());
    assert!((lo - 15.0 / 8.0).abs() < 1e-6, "{lo}");
    let (_, hi) = flux_slope_range(&builtin("ex1", None).unwrap());
    let alpha1 = 1.0 + 3f64.sqrt() / 2.0 + std::f64::consts::PI / 3.0;
    assert!((hi - alpha1).abs() < 1e-6, "{hi}");
}

#[test]
fn lipschitz_constants_are_at_least_one() {
    for p in all_problems() {
        assert!(p.lipschitz().unwrap() >= 1.0);
    }
}

/// `∇·(μ(|∇u*|)∇u*)` by fourth-order central differences of the analytic flux.
fn fd_divergence(p: &ProblemDef, x: [f64; 2], h: f64) -> f64 {
    let exact = p.exact.as_ref().unwrap();
    let flux = |y: [f64; 2], k: usize| {
        let g = exact.gradient(y);
        p.mu(y, g[0].hypot(g[1])) * g[k]
    };
    let mut div = 0.0;
    for k in 0..2 {
        let at = |s: f64| {
            let mut y = x;
            y[k] += s;
            flux(y, k)
        };
        div += (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
    }
    div
}

#[test]
fn exact_solutions_solve_their_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for p in all_problems() {
        let exact = p.exact.clone().unwrap();
        for _ in 0..1000 {
            let x = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
            let div = fd_divergence(&p, x, 4e-4);
            let residual = -div + p.f(x, exact.value(x));
            let scale = div.abs().max(p.f(x, exact.value(x)).abs()).max(1.0);
            assert!(residual.abs() <= 1e-8 * scale, "{}: {residual:e} at {x:?}", p.name);
        }
    }
}

#[test]
fn chain_rule_divergence_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for name in ["ex2", "apriori", "ex1"] {
        let p = builtin(name, None).unwrap();
        let exact = p.exact.clone().unwrap();
        for _ in 0..100 {
            let x = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
            let chain = p.flux_divergence(x, exact.gradient(x), exact.hessian(x)).unwrap();
            let h = 1e-5;
            let flux = |y: [f64; 2], k: usize| {
                let g = exact.gradient(y);
                p.mu(y, g[0].hypot(g[1])) * g[k]
            };
            let fd = (flux([x[0] + h, x[1]], 0) - flux([x[0] - h, x[1]], 0)) / (2.0 * h)
                + (flux([x[0], x[1] + h], 1) - flux([x[0], x[1] - h], 1)) / (2.0 * h);
            assert!((fd - chain).abs() <= 1e-5 * chain.abs().max(1.0), "{name}: {fd} vs {chain}");
            let c = manufactured_forcing(&p, x).unwrap();
            assert!((c - (chain - (p.reaction)(x, exact.value(x)))).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }
}

struct Zero;

impl ExactSolution for Zero {
    fn value(&self, _: [f64; 2]) -> f64 {
        0.0
    }
    fn gradient(&self, _: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
    fn hessian(&self, _: [f64; 2]) -> [f64; 3] {
        [0.0; 3]
    }
}

#[test]
fn true_error_of_interpolants() {
    let p = builtin("apriori", None).unwrap();
    let exact = p.exact.clone().unwrap();
    for deg in [1usize, 2, 3] {
        let err = |n: usize| {
            let s = build_space(Arc::new(Mesh::unit_square_quad(n).unwrap()), deg).unwrap();
            true_error(&s, &s.interpolate(|x| exact.value(x)).unwrap(), &p).unwrap()
        };
        let ratio = err(16) / err(32);
        let expect = 2f64.powi(deg as i32);
        assert!(ratio > 0.8 * expect && ratio < 1.25 * expect, "p = {deg}: ratio {ratio}");
    }
    let mut zero = p.clone();
    zero.exact = Some(Arc::new(Zero));
    let s = build_space(Arc::new(Mesh::unit_square_tri(4).unwrap()), 2).unwrap();
    assert_eq!(true_error(&s, &CoefVector::zeros(&s), &zero).unwrap(), 0.0);
    assert!(relative_true_error(&s, &CoefVector::zeros(&s), &zero).is_err());
    let rel = relative_true_error(&s, &CoefVector::zeros(&s), &p).unwrap();
    assert!((rel - 1.0).abs() < 1e-14);
}
