//! The iteration matrix of the inner product `(u, v) = ∫ α₂ ∇u·∇v + β₂ u v`, nonlinear
//! residual vectors `A(u_h, φ_j)`, and norms of finite element functions.
//!
//! Element loops run in parallel; element contributions are collected in element order and
//! scattered sequentially so results do not depend on the thread count.

use std::cell::Cell;

use rayon::prelude::*;

use crate::element::{ElementMap, Tabulation};
use crate::error::{invalid, numeric, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{ElementKind, Point};
use crate::problems::ProblemDef;
use crate::quadrature::QuadratureRule;
use crate::space::{CoefVector, FeSpace};

thread_local! {
    static ASSEMBLY_COUNT: Cell<usize> = const { Cell::new(0) };
}

/// Number of iteration matrices assembled on the current thread.
pub fn assembly_count() -> usize {
    ASSEMBLY_COUNT.with(|c| c.get())
}

/// Quadrature exactness used unless stated otherwise: `2p + 2`.
pub fn default_quadrature_degree(p: usize) -> usize {
    2 * p + 2
}

/// Quadrature rule and basis tabulation for each element kind of a space.
pub(crate) struct Integrator {
    tri: Option<(QuadratureRule, Tabulation)>,
    quad: Option<(QuadratureRule, Tabulation)>,
}

impl Integrator {
    pub(crate) fn new(space: &FeSpace, degree: usize) -> Self {
        let make = |kind: ElementKind| {
            let rule = QuadratureRule::for_kind(kind, degree);
            let tab = space.ref_element(kind).tabulate(&rule.points);
            (rule, tab)
        };
        let mut out = Integrator { tri: None, quad: None };
        for r in space.ref_elements() {
            match r.kind() {
                ElementKind::Triangle => out.tri = Some(make(ElementKind::Triangle)),
                ElementKind::Quad => out.quad = Some(make(ElementKind::Quad)),
            }
        }
        out
    }

    pub(crate) fn get(&self, kind: ElementKind) -> (&QuadratureRule, &Tabulation) {
        let entry = match kind {
            ElementKind::Triangle => self.tri.as_ref(),
            ElementKind::Quad => self.quad.as_ref(),
        };
        let (r, t) = entry.expect("integrator built for every kind in the space");
        (r, t)
    }
}

/// A finite element function sampled at the quadrature points of one element.
pub(crate) struct ElementSample {
    pub points: Vec<Point>,
    /// Quadrature weight times the Jacobian determinant.
    pub dx: Vec<f64>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    /// Physical gradients of every basis function, `[point][basis]`.
    pub basis_grads: Vec<Vec<[f64; 2]>>,
}

pub(crate) fn sample_element(space: &FeSpace, integ: &Integrator, id: usize, local: &[f64]) -> ElementSample {
    let mesh = space.mesh();
    let (rule, tab) = integ.get(mesh.element(id).kind());
    let map = ElementMap::new(mesh, id);
    let nq = rule.len();
    let mut s = ElementSample {
        points: Vec::with_capacity(nq),
        dx: Vec::with_capacity(nq),
        values: Vec::with_capacity(nq),
        grads: Vec::with_capacity(nq),
        basis_grads: Vec::with_capacity(nq),
    };
    for q in 0..nq {
        s.points.push(map.to_physical(rule.points[q]));
        s.dx.push(rule.weights[q] * map.det.abs());
        let bg: Vec<[f64; 2]> = tab.grads[q].iter().map(|&g| map.grad(g)).collect();
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (b, c) in local.iter().enumerate() {
            v += c * tab.values[q][b];
            g[0] += c * bg[b][0];
            g[1] += c * bg[b][1];
        }
        s.values.push(v);
        s.grads.push(g);
        s.basis_grads.push(bg);
    }
    s
}

/// Free-DOF sparsity pattern of a space.
fn free_pattern(space: &FeSpace) -> SparseMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); space.n_free()];
    for id in 0..space.mesh().n_elements() {
        let free: Vec<usize> = space.element_dofs(id).iter().filter_map(|&d| space.free_index(d)).collect();
        for &i in &free {
            rows[i].extend_from_slice(&free);
        }
    }
    SparseMatrix::from_pattern(space.n_free(), rows, true)
}

fn assemble_gram(space: &FeSpace, a: f64, b: f64) -> SparseMatrix {
    let integ = Integrator::new(space, default_quadrature_degree(space.degree()));
    let mesh = space.mesh();
    let locals: Vec<Vec<f64>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|id| {
            let kind = mesh.element(id).kind();
            let (rule, tab) = integ.get(kind);
            let map = ElementMap::new(mesh, id);
            let nb = tab.values[0].len();
            let mut k = vec![0.0; nb * nb];
            for q in 0..rule.len() {
                let w = rule.weights[q] * map.det.abs();
                let g: Vec<[f64; 2]> = tab.grads[q].iter().map(|&g| map.grad(g)).collect();
                let v = &tab.values[q];
                for i in 0..nb {
                    for j in 0..nb {
                        k[i * nb + j] += w * (a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]) + b * v[i] * v[j]);
                    }
                }
            }
            k
        })
        .collect();
    let mut m = free_pattern(space);
    for (id, k) in locals.iter().enumerate() {
        let dofs = space.element_dofs(id);
        let nb = dofs.len();
        for i in 0..nb {
            let Some(fi) = space.free_index(dofs[i]) else { continue };
            for j in 0..nb {
                if let Some(fj) = space.free_index(dofs[j]) {
                    m.add(fi, fj, k[i * nb + j]);
                }
            }
        }
    }
    m
}

/// Iteration matrix `M_ij = α₂ ∫ ∇φ_i·∇φ_j + β₂ ∫ φ_i φ_j` over the free DOFs.
///
/// Every call increments [`assembly_count`].
pub fn assemble_iteration_matrix(space: &FeSpace, alpha2: f64, beta2: f64) -> Result<SparseMatrix> {
    if !(alpha2 > 0.0) || !alpha2.is_finite() {
        return Err(invalid(format!("alpha2 must be positive, got {alpha2}")));
    }
    if !(beta2 >= 0.0) || !beta2.is_finite() {
        return Err(invalid(format!("beta2 must be non-negative, got {beta2}")));
    }
    ASSEMBLY_COUNT.with(|c| c.set(c.get() + 1));
    Ok(assemble_gram(space, alpha2, beta2))
}

/// Mass matrix `∫ φ_i φ_j` over the free DOFs (not counted by [`assembly_count`]).
pub fn assemble_mass_matrix(space: &FeSpace) -> SparseMatrix {
    assemble_gram(space, 0.0, 1.0)
}

/// Residual vector `A(u_h, φ_j)` over the free DOFs with the default quadrature.
pub fn assemble_residual(space: &FeSpace, coef: &CoefVector, problem: &ProblemDef) -> Result<Vec<f64>> {
    assemble_residual_with_degree(space, coef, problem, default_quadrature_degree(space.degree()))
}

/// Residual vector `A(u_h, φ_j) = ∫ μ(|∇u_h|) ∇u_h·∇φ_j + f(u_h) φ_j` with a quadrature
/// rule exact to `degree`.
pub fn assemble_residual_with_degree(
    space: &FeSpace,
    coef: &CoefVector,
    problem: &ProblemDef,
    degree: usize,
) -> Result<Vec<f64>> {
    space.check(coef)?;
    let integ = Integrator::new(space, degree);
    let mesh = space.mesh();
    let locals: Vec<Result<Vec<f64>>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|id| {
            let local = space.local_coefficients(coef, id);
            let s = sample_element(space, &integ, id, &local);
            let (_, tab) = integ.get(mesh.element(id).kind());
            let mut r = vec![0.0; local.len()];
            for q in 0..s.points.len() {
                let x = s.points[q];
                let g = s.grads[q];
                let t = g[0].hypot(g[1]);
                let mu = problem.mu(x, t);
                let f = problem.f(x, s.values[q]);
                if !mu.is_finite() || !f.is_finite() {
                    return Err(numeric(
                        Some(id),
                        format!("mu = {mu}, f = {f} at ({}, {})", x[0], x[1]),
                    ));
                }
                for (b, rb) in r.iter_mut().enumerate() {
                    let bg = s.basis_grads[q][b];
                    *rb += s.dx[q] * (mu * (g[0] * bg[0] + g[1] * bg[1]) + f * tab.values[q][b]);
                }
            }
            Ok(r)
        })
        .collect();
    let mut out = vec![0.0; space.n_free()];
    for (id, local) in locals.into_iter().enumerate() {
        let local = local?;
        for (&d, v) in space.element_dofs(id).iter().zip(local) {
            if let Some(i) = space.free_index(d) {
                out[i] += v;
            }
        }
    }
    Ok(out)
}

/// `√(αᵀ M α)` using an assembled iteration matrix.
pub fn energy_norm(matrix: &SparseMatrix, coef: &CoefVector) -> f64 {
    matrix.quadratic_form(&coef.values).max(0.0).sqrt()
}

/// `(α₂ ‖∇u_h‖² + β₂ ‖u_h‖²)^{1/2}` by quadrature, without assembling a matrix.
pub fn energy_norm_by_quadrature(space: &FeSpace, coef: &CoefVector, alpha2: f64, beta2: f64) -> Result<f64> {
    let (l2, h1) = squared_norms(space, coef)?;
    Ok((alpha2 * h1 + beta2 * l2).max(0.0).sqrt())
}

pub fn l2_norm(space: &FeSpace, coef: &CoefVector) -> Result<f64> {
    Ok(squared_norms(space, coef)?.0.sqrt())
}

pub fn h1_seminorm(space: &FeSpace, coef: &CoefVector) -> Result<f64> {
    Ok(squared_norms(space, coef)?.1.sqrt())
}

/// `(‖u_h‖², ‖∇u_h‖²)`.
fn squared_norms(space: &FeSpace, coef: &CoefVector) -> Result<(f64, f64)> {
    space.check(coef)?;
    let integ = Integrator::new(space, 2 * space.degree());
    let parts: Vec<(f64, f64)> = (0..space.mesh().n_elements())
        .into_par_iter()
        .map(|id| {
            let s = sample_element(space, &integ, id, &space.local_coefficients(coef, id));
            let mut l2 = 0.0;
            let mut h1 = 0.0;
            for q in 0..s.dx.len() {
                l2 += s.dx[q] * s.values[q] * s.values[q];
                h1 += s.dx[q] * (s.grads[q][0].powi(2) + s.grads[q][1].powi(2));
            }
            (l2, h1)
        })
        .collect();
    Ok(parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1)))
}
