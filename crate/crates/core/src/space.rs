//! H^1_0-conforming Lagrange spaces with DOF maps, evaluation, interpolation and transfer.
//!
//! Global DOF numbering: one DOF per mesh vertex (id = vertex id), then `p-1` DOFs per
//! mesh edge ordered from its lower to its higher vertex id, then the interior DOFs of
//! each element in element order. DOFs whose nodes lie on the boundary are fixed to zero
//! and excluded from coefficient vectors.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::element::{ElementMap, NodeFamily, RefElement};
use crate::error::{invalid, numeric, Result};
use crate::mesh::{ElementKind, Mesh, Point, PointLocator};

static NEXT_SPACE: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Debug)]
pub struct FeSpace {
    id: u64,
    mesh: Arc<Mesh>,
    degree: usize,
    family: NodeFamily,
    tri: Option<Arc<RefElement>>,
    quad: Option<Arc<RefElement>>,
    element_dofs: Vec<Vec<usize>>,
    on_boundary: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
    nodal_points: Vec<Point>,
}

/// Coefficients of a finite element function with respect to the free DOFs of a space.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefVector {
    pub space_id: u64,
    pub values: Vec<f64>,
}

impl CoefVector {
    pub fn zeros(space: &FeSpace) -> Self {
        CoefVector { space_id: space.id, values: vec![0.0; space.n_free()] }
    }

    pub fn from_values(space: &FeSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.n_free() {
            return Err(invalid(format!(
                "coefficient vector has length {}, space has {} free DOFs",
                values.len(),
                space.n_free()
            )));
        }
        Ok(CoefVector { space_id: space.id, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self - other`, both on the same space.
    pub fn sub(&self, other: &CoefVector) -> CoefVector {
        assert_eq!(self.space_id, other.space_id, "coefficient vectors live on different spaces");
        CoefVector {
            space_id: self.space_id,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> CoefVector {
        CoefVector { space_id: self.space_id, values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// Builds the degree-`p` space with equispaced nodes.
pub fn build_space(mesh: Arc<Mesh>, p: usize) -> Result<FeSpace> {
    FeSpace::new(mesh, p, NodeFamily::Equispaced)
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, p: usize, family: NodeFamily) -> Result<Self> {
        if p == 0 {
            return Err(invalid("polynomial degree must be at least 1"));
        }
        let has = |k| mesh.elements().iter().any(|e| e.kind() == k);
        let tri = if has(ElementKind::Triangle) {
            Some(Arc::new(RefElement::new(ElementKind::Triangle, p, family)?))
        } else {
            None
        };
        let quad = if has(ElementKind::Quad) {
            Some(Arc::new(RefElement::new(ElementKind::Quad, p, family)?))
        } else {
            None
        };
        let t = family.points_1d(p);

        let nv = mesh.n_vertices();
        let edge_base = nv;
        let interior_base = nv + mesh.edges().len() * (p - 1);
        let mut n_dofs = interior_base;
        let mut element_dofs = Vec::with_capacity(mesh.n_elements());
        let mut nodal_points = vec![[0.0; 2]; interior_base];
        nodal_points[..nv].copy_from_slice(mesh.vertices());
        for (eid, edge) in mesh.edges().iter().enumerate() {
            let [a, b] = edge.vertices.map(|v| mesh.vertex(v));
            for k in 1..p {
                nodal_points[edge_base + eid * (p - 1) + k - 1] =
                    [a[0] + t[k] * (b[0] - a[0]), a[1] + t[k] * (b[1] - a[1])];
            }
        }
        for id in 0..mesh.n_elements() {
            let el = mesh.element(id);
            let refel = match el.kind() {
                ElementKind::Triangle => tri.as_ref(),
                ElementKind::Quad => quad.as_ref(),
            }
            .expect("reference element exists for every kind present");
            let mut dofs = Vec::with_capacity(refel.n_basis());
            dofs.extend_from_slice(el.vertices());
            for (e, &gid) in mesh.element_edges(id).iter().enumerate() {
                let [a, b] = el.edge(e);
                for k in 1..p {
                    let kk = if a < b { k } else { p - k };
                    dofs.push(edge_base + gid * (p - 1) + kk - 1);
                }
            }
            let map = ElementMap::new(&mesh, id);
            for node in &refel.nodes()[dofs.len()..] {
                dofs.push(n_dofs);
                nodal_points.push(map.to_physical(*node));
                n_dofs += 1;
            }
            element_dofs.push(dofs);
        }

        let mut on_boundary = vec![false; n_dofs];
        for (eid, edge) in mesh.edges().iter().enumerate() {
            if edge.is_boundary() {
                on_boundary[edge.vertices[0]] = true;
                on_boundary[edge.vertices[1]] = true;
                for k in 0..p - 1 {
                    on_boundary[edge_base + eid * (p - 1) + k] = true;
                }
            }
        }
        let mut free_index = vec![None; n_dofs];
        let mut free_dofs = Vec::new();
        for d in 0..n_dofs {
            if !on_boundary[d] {
                free_index[d] = Some(free_dofs.len());
                free_dofs.push(d);
            }
        }
        Ok(FeSpace {
            id: NEXT_SPACE.fetch_add(1, Ordering::Relaxed),
            mesh,
            degree: p,
            family,
            tri,
            quad,
            element_dofs,
            on_boundary,
            free_index,
            free_dofs,
            nodal_points,
        })
    }

    /// Process-unique identifier; coefficient vectors carry it.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn n_dofs(&self) -> usize {
        self.on_boundary.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn element_dofs(&self, id: usize) -> &[usize] {
        &self.element_dofs[id]
    }

    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.on_boundary[dof]
    }

    /// Position of a global DOF among the free DOFs, `None` for Dirichlet DOFs.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn nodal_points(&self) -> &[Point] {
        &self.nodal_points
    }

    pub fn ref_element(&self, kind: ElementKind) -> &RefElement {
        match kind {
            ElementKind::Triangle => self.tri.as_deref(),
            ElementKind::Quad => self.quad.as_deref(),
        }
        .expect("space has no element of this kind")
    }

    /// Reference elements present in the mesh.
    pub fn ref_elements(&self) -> impl Iterator<Item = &RefElement> {
        self.tri.iter().chain(self.quad.iter()).map(|r| r.as_ref())
    }

    pub fn check(&self, coef: &CoefVector) -> Result<()> {
        if coef.space_id != self.id || coef.values.len() != self.n_free() {
            return Err(invalid("coefficient vector does not belong to this space"));
        }
        Ok(())
    }

    /// Coefficients of the local basis functions of element `id` (zero on Dirichlet DOFs).
    pub fn local_coefficients(&self, coef: &CoefVector, id: usize) -> Vec<f64> {
        self.element_dofs[id]
            .iter()
            .map(|&d| self.free_index[d].map_or(0.0, |i| coef.values[i]))
            .collect()
    }

    /// Value and physical gradient of `coef` at reference point `xi` of element `id`.
    pub fn evaluate(&self, coef: &CoefVector, id: usize, xi: Point) -> (f64, [f64; 2]) {
        assert_eq!(coef.space_id, self.id, "coefficient vector belongs to another space");
        let kind = self.mesh.element(id).kind();
        let tab = self.ref_element(kind).tabulate(&[xi]);
        let map = ElementMap::new(&self.mesh, id);
        let local = self.local_coefficients(coef, id);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (b, c) in local.iter().enumerate() {
            v += c * tab.values[0][b];
            g[0] += c * tab.grads[0][b][0];
            g[1] += c * tab.grads[0][b][1];
        }
        (v, map.grad(g))
    }

    /// Nodal interpolant of `f` with Dirichlet DOFs set to zero.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Result<CoefVector> {
        let mut values = Vec::with_capacity(self.n_free());
        for (d, &x) in self.nodal_points.iter().enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(numeric(None, format!("field is {v} at node {d} ({}, {})", x[0], x[1])));
            }
            if self.free_index[d].is_some() {
                values.push(v);
            }
        }
        Ok(CoefVector { space_id: self.id, values })
    }

    /// Moves a function from `coarse` into this space by nodal interpolation. When this
    /// space's mesh is a refinement of the coarse mesh and the degree is not lower, the
    /// function is reproduced exactly.
    pub fn transfer_from(&self, coarse: &FeSpace, coef: &CoefVector) -> Result<CoefVector> {
        coarse.check(coef)?;
        if coarse.mesh.family() != self.mesh.family() {
            return Err(invalid("meshes are not related by refinement"));
        }
        let locator = PointLocator::new(&coarse.mesh);
        let mut values = Vec::with_capacity(self.n_free());
        let mut cache: Option<(usize, ElementMap, Vec<f64>)> = None;
        for &d in &self.free_dofs {
            let x = self.nodal_points[d];
            let elem = locator
                .locate(x)
                .ok_or_else(|| invalid(format!("node ({}, {}) lies outside the coarse mesh", x[0], x[1])))?;
            if cache.as_ref().is_none_or(|c| c.0 != elem) {
                cache = Some((elem, ElementMap::new(&coarse.mesh, elem), coarse.local_coefficients(coef, elem)));
            }
            let (_, map, local) = cache.as_ref().expect("just filled");
            let kind = coarse.mesh.element(elem).kind();
            let tab = coarse.ref_element(kind).tabulate(&[map.to_reference(x)]);
            values.push(local.iter().zip(&tab.values[0]).map(|(c, v)| c * v).sum());
        }
        Ok(CoefVector { space_id: self.id, values })
    }
}

/// Transfers `coef` from `coarse` into `fine`.
pub fn transfer(coarse: &FeSpace, coef: &CoefVector, fine: &FeSpace) -> Result<CoefVector> {
    fine.transfer_from(coarse, coef)
}
