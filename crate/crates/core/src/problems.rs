//! Problem definitions `-∇·(μ(|∇u|)∇u) + f(x, u) = 0` in Ω, `u = 0` on Γ, the built-in
//! test problems, manufactured forcing and true-error evaluation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{sample_element, Integrator};
use crate::error::{invalid, Result};
use crate::mesh::Point;
use crate::solver::lipschitz_constant;
use crate::space::{CoefVector, FeSpace};

/// A function of position and one scalar (`μ(x, t)`, `μ_t(x, t)` or `f(x, u)`).
pub type PointScalarFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
/// A function of position only.
pub type PointFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Closed-form solution with first and second derivatives.
pub trait ExactSolution: Send + Sync {
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> [f64; 2];
    /// `[u_xx, u_xy, u_yy]`.
    fn hessian(&self, x: Point) -> [f64; 3];
}

/// Sharp Poincaré constant of the unit square, `1/(√2 π)`.
pub const UNIT_SQUARE_POINCARE: f64 = 0.225_079_079_039_276_5;

#[derive(Clone)]
pub struct ProblemDef {
    pub name: String,
    /// Diffusion coefficient `μ(x, t)` with `t = |∇u|`.
    pub mu: PointScalarFn,
    /// `∂μ/∂t`; needed for strong-form residuals except on linear triangles.
    pub mu_t: Option<PointScalarFn>,
    /// The `u`-dependent reaction term `f_nl(x, u)`.
    pub reaction: PointScalarFn,
    /// The `u`-independent source `c(x)`; `f(x, u) = f_nl(x, u) + c(x)`.
    pub source: Option<PointFn>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub poincare: f64,
    /// Default steering parameter for the adaptive loop.
    pub theta: f64,
    pub exact: Option<Arc<dyn ExactSolution>>,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("name", &self.name)
            .field("alpha1", &self.alpha1)
            .field("alpha2", &self.alpha2)
            .field("beta1", &self.beta1)
            .field("beta2", &self.beta2)
            .field("poincare", &self.poincare)
            .field("theta", &self.theta)
            .field("has_mu_t", &self.mu_t.is_some())
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemDef {
    pub fn mu(&self, x: Point, t: f64) -> f64 {
        (self.mu)(x, t)
    }

    /// Full reaction `f(x, u) = f_nl(x, u) + c(x)`.
    pub fn f(&self, x: Point, u: f64) -> f64 {
        (self.reaction)(x, u) + self.source.as_ref().map_or(0.0, |c| c(x))
    }

    /// Lipschitz constant `L` of the weak form in the energy norm.
    pub fn lipschitz(&self) -> Result<f64> {
        lipschitz_constant(self.alpha1, self.alpha2, self.beta1, self.beta2, self.poincare)
    }

    /// Strong-form flux divergence `∇·(μ(|∇u|)∇u)` from the gradient and Hessian of `u`.
    ///
    /// Expanded as `μ Δu + μ_t (∇uᵀ H ∇u)/|∇u|`, with the second term set to zero when
    /// `|∇u| < 1e-14`. Assumes `μ` has no explicit dependence on `x` through derivatives.
    pub fn flux_divergence(&self, x: Point, grad: [f64; 2], hess: [f64; 3]) -> Result<f64> {
        let t = grad[0].hypot(grad[1]);
        let mut div = self.mu(x, t) * (hess[0] + hess[2]);
        if t >= 1e-14 {
            let quad = grad[0] * grad[0] * hess[0] + 2.0 * grad[0] * grad[1] * hess[1] + grad[1] * grad[1] * hess[2];
            let mu_t = self
                .mu_t
                .as_ref()
                .ok_or_else(|| invalid(format!("problem {} does not provide mu_t", self.name)))?;
            div += mu_t(x, t) * quad / t;
        }
        Ok(div)
    }

    /// Replaces the source with the one that makes the exact solution solve the problem.
    pub fn with_manufactured_source(mut self) -> Result<Self> {
        self.source = None;
        let base = Arc::new(self.clone());
        let exact = base.exact.clone().ok_or_else(|| invalid("problem has no exact solution"))?;
        if base.mu_t.is_none() {
            return Err(invalid("manufactured forcing needs mu_t"));
        }
        self.source = Some(Arc::new(move |x| {
            let u = exact.value(x);
            let div = base
                .flux_divergence(x, exact.gradient(x), exact.hessian(x))
                .expect("mu_t checked above");
            div - (base.reaction)(x, u)
        }));
        Ok(self)
    }
}

/// Source `c(x) = ∇·(μ(|∇u*|)∇u*)(x) − f_nl(x, u*(x))` making `u*` an exact solution.
pub fn manufactured_forcing(problem: &ProblemDef, x: Point) -> Result<f64> {
    let exact = problem.exact.as_ref().ok_or_else(|| invalid("problem has no exact solution"))?;
    if problem.mu_t.is_none() {
        return Err(invalid("manufactured forcing needs mu_t"));
    }
    let div = problem.flux_divergence(x, exact.gradient(x), exact.hessian(x))?;
    Ok(div - (problem.reaction)(x, exact.value(x)))
}

/// `u = x(1−x) y(1−y)(1−2y) exp(−20(2x−1)²)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorLayerSolution;

impl InteriorLayerSolution {
    fn parts_x(x: f64) -> (f64, f64, f64) {
        let z = 2.0 * x - 1.0;
        let e = (-20.0 * z * z).exp();
        let de = -80.0 * z * e;
        let d2e = (-160.0 + 6400.0 * z * z) * e;
        let (a, da, d2a) = (x - x * x, 1.0 - 2.0 * x, -2.0);
        (a * e, da * e + a * de, d2a * e + 2.0 * da * de + a * d2e)
    }

    fn parts_y(y: f64) -> (f64, f64, f64) {
        (y - 3.0 * y * y + 2.0 * y * y * y, 1.0 - 6.0 * y + 6.0 * y * y, -6.0 + 12.0 * y)
    }
}

impl ExactSolution for InteriorLayerSolution {
    fn value(&self, x: Point) -> f64 {
        Self::parts_x(x[0]).0 * Self::parts_y(x[1]).0
    }

    fn gradient(&self, x: Point) -> [f64; 2] {
        let (g, dg, _) = Self::parts_x(x[0]);
        let (h, dh, _) = Self::parts_y(x[1]);
        [dg * h, g * dh]
    }

    fn hessian(&self, x: Point) -> [f64; 3] {
        let (g, dg, d2g) = Self::parts_x(x[0]);
        let (h, dh, d2h) = Self::parts_y(x[1]);
        [d2g * h, dg * dh, g * d2h]
    }
}

/// `u = (1−x)(1−y)(e^{5x²}−1)(e^{5y²}−1)`, steep near the corner (1, 1).
#[derive(Clone, Copy, Debug, Default)]
pub struct CornerLayerSolution;

impl CornerLayerSolution {
    fn parts(s: f64) -> (f64, f64, f64) {
        let e = (5.0 * s * s).exp();
        let q = (1.0 - s) * (e - 1.0);
        let dq = -(e - 1.0) + (1.0 - s) * 10.0 * s * e;
        let d2q = (10.0 - 30.0 * s + 100.0 * s * s - 100.0 * s * s * s) * e;
        (q, dq, d2q)
    }
}

impl ExactSolution for CornerLayerSolution {
    fn value(&self, x: Point) -> f64 {
        Self::parts(x[0]).0 * Self::parts(x[1]).0
    }

    fn gradient(&self, x: Point) -> [f64; 2] {
        let (a, da, _) = Self::parts(x[0]);
        let (b, db, _) = Self::parts(x[1]);
        [da * b, a * db]
    }

    fn hessian(&self, x: Point) -> [f64; 3] {
        let (a, da, d2a) = Self::parts(x[0]);
        let (b, db, d2b) = Self::parts(x[1]);
        [d2a * b, da * db, a * d2b]
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["apriori", "ex1", "ex2", "ex3"];

/// Built-in problem by name. `eps` is the constant diffusion of `ex2` (default 0.01) and
/// `ex3` (default 1); it is ignored by the others.
pub fn builtin(name: &str, eps: Option<f64>) -> Result<ProblemDef> {
    if let Some(e) = eps {
        if !(e > 0.0) || !e.is_finite() {
            return Err(invalid(format!("eps must be positive, got {e}")));
        }
    }
    let zero_reaction: PointScalarFn = Arc::new(|_, _| 0.0);
    let problem = match name {
        "apriori" => ProblemDef {
            name: name.into(),
            mu: Arc::new(|_, t| 2.0 + 1.0 / (1.0 + t * t)),
            mu_t: Some(Arc::new(|_, t| -2.0 * t / (1.0 + t * t).powi(2))),
            reaction: zero_reaction,
            source: None,
            alpha1: 3.0,
            alpha2: 15.0 / 8.0,
            beta1: 0.0,
            beta2: 0.0,
            poincare: UNIT_SQUARE_POINCARE,
            theta: 0.5,
            exact: Some(Arc::new(InteriorLayerSolution)),
        },
        "ex1" => ProblemDef {
            name: name.into(),
            mu: Arc::new(|_, t| 1.0 + (t * t).atan()),
            mu_t: Some(Arc::new(|_, t| 2.0 * t / (1.0 + t.powi(4)))),
            reaction: zero_reaction,
            source: None,
            alpha1: 1.0 + 3f64.sqrt() / 2.0 + PI / 3.0,
            alpha2: 1.0,
            beta1: 0.0,
            beta2: 0.0,
            poincare: UNIT_SQUARE_POINCARE,
            theta: 0.5,
            exact: Some(Arc::new(InteriorLayerSolution)),
        },
        "ex2" => {
            let e = eps.unwrap_or(0.01);
            ProblemDef {
                name: name.into(),
                mu: Arc::new(move |_, _| e),
                mu_t: Some(Arc::new(|_, _| 0.0)),
                reaction: Arc::new(|x, u| (0.2 + x[0] * x[0] + x[1] * x[1]) * (u.powi(3) / (u * u + 1.0) + u)),
                source: None,
                alpha1: e,
                alpha2: e,
                beta1: 187.0 / 40.0,
                beta2: 0.2,
                poincare: UNIT_SQUARE_POINCARE,
                theta: 1.0,
                exact: Some(Arc::new(CornerLayerSolution)),
            }
        }
        "ex3" => {
            let e = eps.unwrap_or(1.0);
            ProblemDef {
                name: name.into(),
                mu: Arc::new(move |_, _| e),
                mu_t: Some(Arc::new(|_, _| 0.0)),
                reaction: Arc::new(|_, u| u.powi(3) / (10.0 * u * u + 1.0) + u),
                source: None,
                alpha1: e,
                alpha2: e,
                beta1: 89.0 / 80.0,
                beta2: 1.0,
                poincare: UNIT_SQUARE_POINCARE,
                theta: 1.0,
                exact: Some(Arc::new(CornerLayerSolution)),
            }
        }
        other => {
            return Err(invalid(format!(
                "unknown problem `{other}` (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    problem.with_manufactured_source()
}

/// `|||u* − u_h|||` by quadrature exact to degree `2p + 4`, using the analytic gradient.
pub fn true_error(space: &FeSpace, coef: &CoefVector, problem: &ProblemDef) -> Result<f64> {
    let exact = problem.exact.as_ref().ok_or_else(|| invalid("problem has no exact solution"))?;
    space.check(coef)?;
    let integ = Integrator::new(space, 2 * space.degree() + 4);
    let (a2, b2) = (problem.alpha2, problem.beta2);
    let parts: Vec<f64> = (0..space.mesh().n_elements())
        .into_par_iter()
        .map(|id| {
            let s = sample_element(space, &integ, id, &space.local_coefficients(coef, id));
            let mut sum = 0.0;
            for q in 0..s.dx.len() {
                let x = s.points[q];
                let g = exact.gradient(x);
                let e = exact.value(x) - s.values[q];
                let (ex, ey) = (g[0] - s.grads[q][0], g[1] - s.grads[q][1]);
                sum += s.dx[q] * (a2 * (ex * ex + ey * ey) + b2 * e * e);
            }
            sum
        })
        .collect();
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// `|||u*|||` by quadrature on the mesh of `space`.
pub fn exact_energy_norm(space: &FeSpace, problem: &ProblemDef) -> Result<f64> {
    true_error(space, &CoefVector::zeros(space), problem)
}

/// `|||u* − u_h||| / |||u*|||`.
pub fn relative_true_error(space: &FeSpace, coef: &CoefVector, problem: &ProblemDef) -> Result<f64> {
    let norm = exact_energy_norm(space, problem)?;
    if norm == 0.0 {
        return Err(invalid("exact solution has zero norm"));
    }
    Ok(true_error(space, coef, problem)? / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_rejected() {
        assert!(builtin("ex4", None).is_err());
        assert!(builtin("ex3", Some(0.0)).is_err());
        for name in BUILTIN_NAMES {
            assert!(builtin(name, None).is_ok());
        }
    }

    #[test]
    fn poincare_constant() {
        assert!((UNIT_SQUARE_POINCARE - 1.0 / (2f64.sqrt() * PI)).abs() < 1e-16);
    }

    #[test]
    fn exact_solution_values() {
        let u = InteriorLayerSolution;
        assert!((u.value([0.5, 0.25]) - 0.0234375).abs() < 1e-16);
        let v = CornerLayerSolution;
        let expect = 0.25 * (1.25f64.exp() - 1.0).powi(2);
        assert!((v.value([0.5, 0.5]) - expect).abs() < 1e-14);
        assert_eq!(v.value([1.0, 0.3]), 0.0);
        assert_eq!(v.value([0.3, 0.0]), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        let sols: [&dyn ExactSolution; 2] = [&InteriorLayerSolution, &CornerLayerSolution];
        for u in sols {
            for x in [[0.3, 0.7], [0.55, 0.2], [0.9, 0.85]] {
                let g = u.gradient(x);
                let hs = u.hessian(x);
                let fx = (u.value([x[0] + h, x[1]]) - u.value([x[0] - h, x[1]])) / (2.0 * h);
                let fy = (u.value([x[0], x[1] + h]) - u.value([x[0], x[1] - h])) / (2.0 * h);
                let scale = 1.0 + g[0].abs() + g[1].abs();
                assert!((fx - g[0]).abs() < 1e-6 * scale && (fy - g[1]).abs() < 1e-6 * scale);
                let gxp = u.gradient([x[0] + h, x[1]]);
                let gxm = u.gradient([x[0] - h, x[1]]);
                let gyp = u.gradient([x[0], x[1] + h]);
                let gym = u.gradient([x[0], x[1] - h]);
                let hscale = 1.0 + hs.iter().map(|v| v.abs()).sum::<f64>();
                assert!(((gxp[0] - gxm[0]) / (2.0 * h) - hs[0]).abs() < 1e-5 * hscale);
                assert!(((gyp[0] - gym[0]) / (2.0 * h) - hs[1]).abs() < 1e-5 * hscale);
                assert!(((gxp[1] - gxm[1]) / (2.0 * h) - hs[1]).abs() < 1e-5 * hscale);
                assert!(((gyp[1] - gym[1]) / (2.0 * h) - hs[2]).abs() < 1e-5 * hscale);
            }
        }
    }

    #[test]
    fn sine_laplacian_forcing() {
        struct Sine;
        impl ExactSolution for Sine {
            fn value(&self, x: Point) -> f64 {
                (PI * x[0]).sin() * (PI * x[1]).sin()
            }
            fn gradient(&self, x: Point) -> [f64; 2] {
                [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()]
            }
            fn hessian(&self, x: Point) -> [f64; 3] {
                let v = self.value(x);
                [-PI * PI * v, PI * PI * (PI * x[0]).cos() * (PI * x[1]).cos(), -PI * PI * v]
            }
        }
        let mut p = builtin("apriori", None).unwrap();
        p.mu = Arc::new(|_, _| 1.0);
        p.mu_t = Some(Arc::new(|_, _| 0.0));
        p.exact = Some(Arc::new(Sine));
        for x in [[0.1, 0.2], [0.5, 0.5], [0.77, 0.31]] {
            let c = manufactured_forcing(&p, x).unwrap();
            assert!((c + 2.0 * PI * PI * Sine.value(x)).abs() < 1e-12);
        }
        p.mu_t = None;
        assert!(manufactured_forcing(&p, [0.2, 0.2]).is_err());
    }
}
