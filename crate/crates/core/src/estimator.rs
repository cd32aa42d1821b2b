//! Residual a posteriori indicators for the fixed-point iterates.
//!
//! For `d = uⁿ − uⁿ⁻¹` and `σ = μ(|∇uⁿ⁻¹|)∇uⁿ⁻¹ + L²α₂∇d`,
//!
//! ```text
//! η_K² = γ_K ‖f(uⁿ⁻¹) − ∇·(μ(|∇uⁿ⁻¹|)∇uⁿ⁻¹) + L²(−α₂Δd + β₂d)‖²_K
//!      + ½ α₂^{-1/2} γ_K^{1/2} ‖[σ·n]‖²_{∂K∖Γ}
//! ```
//!
//! with `γ_K = min(h_K²/α₂, 1/β₂)`. The bound on `|||u − uⁿ|||` is `C_I E_FEM + E_FP` where
//! `E_FEM = (Σ η_K²)^{1/2}` and `E_FP = L(1+L)|||d|||`.

use std::io::Write;

use rayon::prelude::*;

use crate::assembly::{default_quadrature_degree, energy_norm_by_quadrature};
use crate::element::{reference_edge_point, ElementMap, Tabulation};
use crate::error::{invalid, numeric, Result};
use crate::mesh::{write_vtk, DataField, ElementKind, Point};
use crate::problems::ProblemDef;
use crate::quadrature::QuadratureRule;
use crate::space::{CoefVector, FeSpace};

/// Gradient magnitude below which the `μ_t` part of the flux divergence is dropped.
pub const GRADIENT_CUTOFF: f64 = 1e-14;

/// `min(h²/α₂, 1/β₂)`, or `h²/α₂` when `β₂ = 0`.
pub fn gamma_weight(h: f64, alpha2: f64, beta2: f64) -> f64 {
    let diffusive = h * h / alpha2;
    if beta2 != 0.0 {
        diffusive.min(1.0 / beta2)
    } else {
        diffusive
    }
}

/// Indicators of one iterate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    pub eta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub e_fem: f64,
    pub e_fp: f64,
    pub c_i: f64,
}

impl IndicatorField {
    pub fn total_bound(&self) -> f64 {
        total_bound(self)
    }

    /// Writes `element,eta,gamma` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "element,eta,gamma")?;
        for (k, (e, g)) in self.eta.iter().zip(&self.gamma).enumerate() {
            writeln!(w, "{k},{e:.10e},{g:.10e}")?;
        }
        Ok(())
    }

    /// Writes the mesh of `space` as VTK with `eta` and `gamma` cell fields.
    pub fn write_vtk<W: Write>(&self, w: W, space: &FeSpace) -> Result<()> {
        write_vtk(
            w,
            space.mesh(),
            &[
                DataField { name: "eta", values: &self.eta },
                DataField { name: "gamma", values: &self.gamma },
            ],
            &[],
        )
    }
}

/// `C_I E_FEM + E_FP`.
pub fn total_bound(field: &IndicatorField) -> f64 {
    field.c_i * field.e_fem + field.e_fp
}

/// `L(1+L)|||uⁿ − uⁿ⁻¹|||` with the energy norm of `problem`.
pub fn fp_error(space: &FeSpace, coef_n: &CoefVector, coef_nm1: &CoefVector, problem: &ProblemDef, lipschitz: f64) -> Result<f64> {
    space.check(coef_n)?;
    space.check(coef_nm1)?;
    let d = coef_n.sub(coef_nm1);
    Ok(lipschitz * (1.0 + lipschitz) * energy_norm_by_quadrature(space, &d, problem.alpha2, problem.beta2)?)
}

/// Computes `η_K`, `γ_K`, `E_FEM` and `E_FP` with `C_I = 1`.
pub fn local_indicators(
    space: &FeSpace,
    coef_n: &CoefVector,
    coef_nm1: &CoefVector,
    problem: &ProblemDef,
    lipschitz: f64,
) -> Result<IndicatorField> {
    space.check(coef_n)?;
    space.check(coef_nm1)?;
    let mesh = space.mesh();
    let linear_triangles = space.degree() == 1 && mesh.is_triangular();
    if problem.mu_t.is_none() && !linear_triangles {
        return Err(invalid("indicators need mu_t unless the space is linear on triangles"));
    }
    let (a2, b2) = (problem.alpha2, problem.beta2);
    let l2 = lipschitz * lipschitz;
    let qdeg = default_quadrature_degree(space.degree());
    let cache = TabCache::new(space, qdeg);

    let gamma: Vec<f64> = (0..mesh.n_elements()).map(|k| gamma_weight(mesh.diameter(k), a2, b2)).collect();

    let volume: Vec<Result<f64>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|id| {
            let kind = mesh.element(id).kind();
            let (rule, tab) = cache.volume(kind);
            let map = ElementMap::new(mesh, id);
            let un = space.local_coefficients(coef_n, id);
            let um = space.local_coefficients(coef_nm1, id);
            let mut sum = 0.0;
            for q in 0..rule.len() {
                let x = map.to_physical(rule.points[q]);
                let (vm, gm, hm) = combine(tab, q, &map, &um);
                let (vn, _, hn) = combine(tab, q, &map, &un);
                let div = if linear_triangles {
                    0.0
                } else {
                    problem.flux_divergence(x, gm, hm)?
                };
                let dv = vn - vm;
                let dlap = (hn[0] - hm[0]) + (hn[2] - hm[2]);
                let r = problem.f(x, vm) - div + l2 * (-a2 * dlap + b2 * dv);
                if !r.is_finite() {
                    return Err(numeric(Some(id), "non-finite volume residual"));
                }
                sum += rule.weights[q] * map.det.abs() * r * r;
            }
            Ok(sum)
        })
        .collect();

    let interior: Vec<usize> = (0..mesh.edges().len()).filter(|&e| !mesh.edges()[e].is_boundary()).collect();
    let jumps: Vec<Result<f64>> = interior
        .par_iter()
        .map(|&e| edge_jump_squared(space, &cache, e, coef_n, coef_nm1, problem, l2))
        .collect();

    let mut eta2 = Vec::with_capacity(mesh.n_elements());
    for (id, v) in volume.into_iter().enumerate() {
        eta2.push(gamma[id] * v?);
    }
    for (&e, j) in interior.iter().zip(jumps) {
        let j = j?;
        for side in mesh.edges()[e].sides.iter().flatten() {
            let k = side.element;
            eta2[k] += 0.5 * a2.powf(-0.5) * gamma[k].sqrt() * j;
        }
    }
    let e_fem = eta2.iter().sum::<f64>().sqrt();
    let eta = eta2.into_iter().map(f64::sqrt).collect();
    let e_fp = fp_error(space, coef_n, coef_nm1, problem, lipschitz)?;
    Ok(IndicatorField { eta, gamma, e_fem, e_fp, c_i: 1.0 })
}

/// `‖[σ·n]‖²_e` over interior edge `e`.
fn edge_jump_squared(
    space: &FeSpace,
    cache: &TabCache,
    e: usize,
    coef_n: &CoefVector,
    coef_nm1: &CoefVector,
    problem: &ProblemDef,
    l2: f64,
) -> Result<f64> {
    let mesh = space.mesh();
    let edge = &mesh.edges()[e];
    let [pa, pb] = edge.vertices.map(|v| mesh.vertex(v));
    let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
    // unit normal pointing out of the first side
    let first = edge.sides[0].expect("interior edge has two sides");
    let [fa, fb] = mesh.element(first.element).edge(first.local).map(|v| mesh.vertex(v));
    let flen = (fb[0] - fa[0]).hypot(fb[1] - fa[1]);
    let normal = [(fb[1] - fa[1]) / flen, -(fb[0] - fa[0]) / flen];
    let a2 = problem.alpha2;

    let rule = &cache.edge_rule;
    let mut flux = [vec![[0.0; 2]; rule.len()], vec![[0.0; 2]; rule.len()]];
    for (s, side) in edge.sides.iter().enumerate() {
        let side = side.expect("interior edge has two sides");
        let el = mesh.element(side.element);
        let forward = el.edge(side.local)[0] == edge.vertices[0];
        let tab = cache.edge(el.kind(), side.local, forward);
        let map = ElementMap::new(mesh, side.element);
        let un = space.local_coefficients(coef_n, side.element);
        let um = space.local_coefficients(coef_nm1, side.element);
        for q in 0..rule.len() {
            let t = rule.points[q][0];
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let (_, gm, _) = combine(tab, q, &map, &um);
            let (_, gn, _) = combine(tab, q, &map, &un);
            let mu = problem.mu(x, gm[0].hypot(gm[1]));
            flux[s][q] = [
                mu * gm[0] + l2 * a2 * (gn[0] - gm[0]),
                mu * gm[1] + l2 * a2 * (gn[1] - gm[1]),
            ];
        }
    }
    let mut sum = 0.0;
    for q in 0..rule.len() {
        let j = (flux[0][q][0] - flux[1][q][0]) * normal[0] + (flux[0][q][1] - flux[1][q][1]) * normal[1];
        sum += rule.weights[q] * j * j;
    }
    let out = sum * len;
    if !out.is_finite() {
        return Err(numeric(Some(first.element), format!("non-finite flux jump on edge {e}")));
    }
    Ok(out)
}

/// Value, physical gradient and physical Hessian of a local expansion at point `q`.
fn combine(tab: &Tabulation, q: usize, map: &ElementMap, local: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
    let mut v = 0.0;
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for (b, c) in local.iter().enumerate() {
        v += c * tab.values[q][b];
        g[0] += c * tab.grads[q][b][0];
        g[1] += c * tab.grads[q][b][1];
        h[0] += c * tab.hessians[q][b][0];
        h[1] += c * tab.hessians[q][b][1];
        h[2] += c * tab.hessians[q][b][2];
    }
    (v, map.grad(g), map.hessian(h))
}

/// Basis tabulations at volume and edge quadrature points.
struct TabCache {
    tri: Option<(QuadratureRule, Tabulation)>,
    quad: Option<(QuadratureRule, Tabulation)>,
    edge_rule: QuadratureRule,
    /// `[kind][local edge][forward?]`
    edge_tabs: Vec<Vec<[Tabulation; 2]>>,
}

impl TabCache {
    fn new(space: &FeSpace, degree: usize) -> Self {
        let edge_rule = QuadratureRule::interval(degree);
        let mut cache = TabCache { tri: None, quad: None, edge_rule, edge_tabs: vec![Vec::new(), Vec::new()] };
        for r in space.ref_elements() {
            let kind = r.kind();
            let rule = QuadratureRule::for_kind(kind, degree);
            let tab = r.tabulate(&rule.points);
            let edges = (0..kind.n_vertices())
                .map(|e| {
                    let pts = |fwd: bool| -> Vec<Point> {
                        cache
                            .edge_rule
                            .points
                            .iter()
                            .map(|p| reference_edge_point(kind, e, if fwd { p[0] } else { 1.0 - p[0] }))
                            .collect()
                    };
                    [r.tabulate(&pts(false)), r.tabulate(&pts(true))]
                })
                .collect();
            match kind {
                ElementKind::Triangle => {
                    cache.tri = Some((rule, tab));
                    cache.edge_tabs[0] = edges;
                }
                ElementKind::Quad => {
                    cache.quad = Some((rule, tab));
                    cache.edge_tabs[1] = edges;
                }
            }
        }
        cache
    }

    fn volume(&self, kind: ElementKind) -> (&QuadratureRule, &Tabulation) {
        let entry = match kind {
            ElementKind::Triangle => self.tri.as_ref(),
            ElementKind::Quad => self.quad.as_ref(),
        };
        let (r, t) = entry.expect("tabulated for every kind in the space");
        (r, t)
    }

    fn edge(&self, kind: ElementKind, local: usize, forward: bool) -> &Tabulation {
        let k = match kind {
            ElementKind::Triangle => 0,
            ElementKind::Quad => 1,
        };
        &self.edge_tabs[k][local][forward as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_branches() {
        assert_eq!(gamma_weight(0.25, 1.0, 0.0), 0.0625);
        assert!((gamma_weight(0.1, 0.01, 0.2) - 1.0).abs() < 1e-15);
        assert_eq!(gamma_weight(10.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn bound_arithmetic() {
        let f = IndicatorField { eta: vec![], gamma: vec![], e_fem: 3.0, e_fp: 4.0, c_i: 1.0 };
        assert_eq!(total_bound(&f), 7.0);
        let z = IndicatorField { eta: vec![0.0], gamma: vec![1.0], e_fem: 0.0, e_fp: 0.0, c_i: 1.0 };
        assert_eq!(z.total_bound(), 0.0);
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
