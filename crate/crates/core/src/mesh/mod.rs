//! Conforming 2D meshes of triangles and parallelograms.
//!
//! Triangles store their vertices so that local vertex 0 is the newest vertex and the
//! opposite edge (local edge 1, from vertex 1 to vertex 2) is the refinement edge.
//! Local edge `e` always runs from local vertex `e` to local vertex `e + 1`.

mod io;
mod refine;

pub use io::{read_mesh_text, write_mesh_text, write_vtk, DataField};
pub use refine::Derefinement;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

static NEXT_FAMILY: AtomicU64 = AtomicU64::new(1);

fn fresh_family() -> u64 {
    NEXT_FAMILY.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Triangle,
    Quad,
}

impl ElementKind {
    pub fn n_vertices(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Quad => 4,
        }
    }

    /// VTK legacy cell type id.
    pub fn vtk_type(self) -> u8 {
        match self {
            ElementKind::Triangle => 5,
            ElementKind::Quad => 9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Element {
    kind: ElementKind,
    verts: [usize; 4],
}

impl Element {
    pub fn triangle(a: usize, b: usize, c: usize) -> Self {
        Element {
            kind: ElementKind::Triangle,
            verts: [a, b, c, usize::MAX],
        }
    }

    pub fn quad(a: usize, b: usize, c: usize, d: usize) -> Self {
        Element {
            kind: ElementKind::Quad,
            verts: [a, b, c, d],
        }
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn vertices(&self) -> &[usize] {
        &self.verts[..self.kind.n_vertices()]
    }

    pub fn n_edges(&self) -> usize {
        self.kind.n_vertices()
    }

    /// Endpoints of local edge `e`, in local orientation.
    pub fn edge(&self, e: usize) -> [usize; 2] {
        let n = self.kind.n_vertices();
        [self.verts[e % n], self.verts[(e + 1) % n]]
    }

    /// Local index of the refinement edge (triangles only).
    pub fn refinement_edge(&self) -> Option<usize> {
        match self.kind {
            ElementKind::Triangle => Some(1),
            ElementKind::Quad => None,
        }
    }

    fn remapped(&self, map: &[usize]) -> Self {
        let mut out = *self;
        for v in out.verts[..self.kind.n_vertices()].iter_mut() {
            *v = map[*v];
        }
        out
    }
}

/// A node of the refinement genealogy: an element that has been subdivided.
#[derive(Debug)]
pub struct Ancestor {
    pub element: Element,
    pub parent: Option<Arc<Ancestor>>,
    pub level: u32,
}

/// One side of an edge: the adjacent element and the local edge index within it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeSide {
    pub element: usize,
    pub local: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Edge {
    /// Endpoints sorted ascending by global vertex id.
    pub vertices: [usize; 2],
    pub sides: [Option<EdgeSide>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.sides[1].is_none()
    }
}

/// Immutable conforming mesh with cached connectivity and refinement genealogy.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<Element>,
    parents: Vec<Option<Arc<Ancestor>>>,
    levels: Vec<u32>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 4]>,
    diameters: Vec<f64>,
    family: u64,
    generation: u32,
}

impl Mesh {
    /// Builds a mesh from raw vertices and elements, computing connectivity.
    ///
    /// Elements must be counter-clockwise with positive area, quads must be
    /// parallelograms, every vertex must be used and no edge may be shared by more than
    /// two elements.
    pub fn new(vertices: Vec<Point>, elements: Vec<Element>) -> Result<Self> {
        let n = elements.len();
        Self::assemble(vertices, elements, vec![None; n], vec![0; n], fresh_family(), 0)
    }

    pub(crate) fn assemble(
        vertices: Vec<Point>,
        elements: Vec<Element>,
        parents: Vec<Option<Arc<Ancestor>>>,
        levels: Vec<u32>,
        family: u64,
        generation: u32,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(invalid("mesh has no elements"));
        }
        let mut used = vec![false; vertices.len()];
        for (id, el) in elements.iter().enumerate() {
            for &v in el.vertices() {
                if v >= vertices.len() {
                    return Err(invalid(format!("element {id} references missing vertex {v}")));
                }
                used[v] = true;
            }
            let area = signed_area(&vertices, el);
            if !(area > 0.0) {
                return Err(invalid(format!(
                    "element {id} has non-positive signed area {area:e}"
                )));
            }
            if el.kind == ElementKind::Quad {
                let [a, b, c, d] = el.verts.map(|v| vertices[v]);
                let gap = ((a[0] + c[0] - b[0] - d[0]).abs()).max((a[1] + c[1] - b[1] - d[1]).abs());
                let scale = dist(a, c).max(dist(b, d));
                if gap > 1e-10 * scale {
                    return Err(invalid(format!("quad element {id} is not a parallelogram")));
                }
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(invalid(format!("vertex {v} is not used by any element")));
        }

        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(2 * elements.len());
        let mut edges: Vec<Edge> = Vec::with_capacity(2 * elements.len());
        let mut element_edges = vec![[usize::MAX; 4]; elements.len()];
        for (id, el) in elements.iter().enumerate() {
            for e in 0..el.n_edges() {
                let [a, b] = el.edge(e);
                let key = if a < b { [a, b] } else { [b, a] };
                let side = EdgeSide { element: id, local: e };
                let eid = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: key,
                        sides: [None, None],
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[eid];
                if edge.sides[0].is_none() {
                    edge.sides[0] = Some(side);
                } else if edge.sides[1].is_none() {
                    edge.sides[1] = Some(side);
                } else {
                    return Err(invalid(format!(
                        "edge ({}, {}) is shared by more than two elements",
                        key[0], key[1]
                    )));
                }
                element_edges[id][e] = eid;
            }
        }

        let diameters = elements
            .iter()
            .map(|el| {
                let vs = el.vertices();
                let mut h: f64 = 0.0;
                for i in 0..vs.len() {
                    for j in i + 1..vs.len() {
                        h = h.max(dist(vertices[vs[i]], vertices[vs[j]]));
                    }
                }
                h
            })
            .collect();

        Ok(Mesh {
            vertices,
            elements,
            parents,
            levels,
            edges,
            element_edges,
            diameters,
            family,
            generation,
        })
    }

    /// `n x n` grid of congruent rectangles over `[x0, x1] x [y0, y1]`.
    pub fn uniform_quad(n: usize, domain: [Point; 2]) -> Result<Self> {
        let (vertices, n) = grid_vertices(n, domain)?;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut elements = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push(Element::quad(
                    idx(i, j),
                    idx(i + 1, j),
                    idx(i + 1, j + 1),
                    idx(i, j + 1),
                ));
            }
        }
        Self::new(vertices, elements)
    }

    /// `n x n` grid with every cell split along its lower-left to upper-right diagonal.
    /// The diagonal is the refinement edge of both halves.
    pub fn uniform_tri(n: usize, domain: [Point; 2]) -> Result<Self> {
        let (vertices, n) = grid_vertices(n, domain)?;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                elements.push(Element::triangle(v10, v11, v00));
                elements.push(Element::triangle(v01, v00, v11));
            }
        }
        Self::new(vertices, elements)
    }

    pub fn unit_square_quad(n: usize) -> Result<Self> {
        Self::uniform_quad(n, [[0.0, 0.0], [1.0, 1.0]])
    }

    pub fn unit_square_tri(n: usize) -> Result<Self> {
        Self::uniform_tri(n, [[0.0, 0.0], [1.0, 1.0]])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: usize) -> &Element {
        &self.elements[id]
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Global edge ids of the local edges of an element.
    pub fn element_edges(&self, id: usize) -> &[usize] {
        &self.element_edges[id][..self.elements[id].n_edges()]
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    /// Largest vertex-pair distance of an element.
    pub fn diameter(&self, id: usize) -> f64 {
        self.diameters[id]
    }

    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }

    pub fn max_diameter(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    pub fn parent(&self, id: usize) -> Option<&Arc<Ancestor>> {
        self.parents[id].as_ref()
    }

    /// Subdivision depth of an element relative to its root.
    pub fn level(&self, id: usize) -> u32 {
        self.levels[id]
    }

    /// Number of refine/derefine operations since the root mesh was built.
    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Identifier shared by a root mesh and every mesh derived from it.
    pub fn family(&self) -> u64 {
        self.family
    }

    pub fn is_triangular(&self) -> bool {
        self.elements.iter().all(|e| e.kind == ElementKind::Triangle)
    }

    pub fn area(&self, id: usize) -> f64 {
        signed_area(&self.vertices, &self.elements[id])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.area(e)).sum()
    }

    pub fn centroid(&self, id: usize) -> Point {
        let vs = self.elements[id].vertices();
        let mut c = [0.0; 2];
        for &v in vs {
            c[0] += self.vertices[v][0];
            c[1] += self.vertices[v][1];
        }
        [c[0] / vs.len() as f64, c[1] / vs.len() as f64]
    }

    pub fn bounding_box(&self) -> [Point; 2] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        [lo, hi]
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for el in &self.elements {
            let vs = el.vertices();
            let n = vs.len();
            for i in 0..n {
                let p = self.vertices[vs[i]];
                let a = self.vertices[vs[(i + 1) % n]];
                let b = self.vertices[vs[(i + n - 1) % n]];
                let u = [a[0] - p[0], a[1] - p[1]];
                let w = [b[0] - p[0], b[1] - p[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (norm(u) * norm(w));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Lists violations of conformity: edges with more than two neighbours are rejected at
    /// construction, so this checks for hanging nodes (a vertex strictly inside some
    /// element edge) and non-positive areas.
    pub fn conformity_defects(&self) -> Vec<String> {
        let mut defects = Vec::new();
        for id in 0..self.n_elements() {
            if !(self.area(id) > 0.0) {
                defects.push(format!("element {id} has non-positive area"));
            }
        }
        let grid = VertexGrid::new(&self.vertices);
        for edge in &self.edges {
            let [a, b] = edge.vertices.map(|v| self.vertices[v]);
            let len = dist(a, b);
            let tol = 1e-10 * len;
            for v in grid.candidates([a[0].min(b[0]), a[1].min(b[1])], [a[0].max(b[0]), a[1].max(b[1])], tol) {
                if edge.vertices.contains(&v) {
                    continue;
                }
                let p = self.vertices[v];
                let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
                if t <= 0.0 || t >= 1.0 {
                    continue;
                }
                let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                if dist(p, q) <= tol {
                    defects.push(format!(
                        "hanging vertex {v} on edge ({}, {})",
                        edge.vertices[0], edge.vertices[1]
                    ));
                }
            }
        }
        defects
    }

    pub fn is_conforming(&self) -> bool {
        self.conformity_defects().is_empty()
    }

    /// Vertex-to-element incidence lists.
    pub fn vertex_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for (id, el) in self.elements.iter().enumerate() {
            for &v in el.vertices() {
                out[v].push(id);
            }
        }
        out
    }
}

fn grid_vertices(n: usize, domain: [Point; 2]) -> Result<(Vec<Point>, usize)> {
    if n == 0 {
        return Err(invalid("subdivision count must be at least 1"));
    }
    let [lo, hi] = domain;
    if !(hi[0] > lo[0] && hi[1] > lo[1]) || !lo.iter().chain(hi.iter()).all(|c| c.is_finite()) {
        return Err(invalid("rectangle must have positive finite extent"));
    }
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
            vertices.push([x, y]);
        }
    }
    Ok((vertices, n))
}

pub(crate) fn signed_area(vertices: &[Point], el: &Element) -> f64 {
    let vs = el.vertices();
    let n = vs.len();
    let mut twice = 0.0;
    for i in 0..n {
        let p = vertices[vs[i]];
        let q = vertices[vs[(i + 1) % n]];
        twice += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * twice
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    norm([a[0] - b[0], a[1] - b[1]])
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Uniform bucket grid over a point cloud.
struct VertexGrid {
    lo: Point,
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl VertexGrid {
    fn new(points: &[Point]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = ((points.len() as f64).sqrt().ceil() as usize).max(1);
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let cell = extent / side as f64;
        let dims = [
            (((hi[0] - lo[0]) / cell) as usize + 1).max(1),
            (((hi[1] - lo[1]) / cell) as usize + 1).max(1),
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        let mut grid = VertexGrid { lo, cell, dims, buckets: Vec::new() };
        for (i, p) in points.iter().enumerate() {
            let [cx, cy] = grid.cell_of(*p);
            buckets[cy * dims[0] + cx].push(i);
        }
        grid.buckets = buckets;
        grid
    }

    fn cell_of(&self, p: Point) -> [usize; 2] {
        let cx = ((p[0] - self.lo[0]) / self.cell).floor().max(0.0) as usize;
        let cy = ((p[1] - self.lo[1]) / self.cell).floor().max(0.0) as usize;
        [cx.min(self.dims[0] - 1), cy.min(self.dims[1] - 1)]
    }

    fn candidates(&self, lo: Point, hi: Point, pad: f64) -> impl Iterator<Item = usize> + '_ {
        let [x0, y0] = self.cell_of([lo[0] - pad, lo[1] - pad]);
        let [x1, y1] = self.cell_of([hi[0] + pad, hi[1] + pad]);
        (y0..=y1).flat_map(move |cy| (x0..=x1).flat_map(move |cx| self.buckets[cy * self.dims[0] + cx].iter().copied()))
    }
}

/// Accelerated point location on a fixed mesh.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    lo: Point,
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let [lo, hi] = mesh.bounding_box();
        let side = ((mesh.n_elements() as f64).sqrt().ceil() as usize).max(1);
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let cell = extent / side as f64;
        let dims = [
            (((hi[0] - lo[0]) / cell) as usize + 1).max(1),
            (((hi[1] - lo[1]) / cell) as usize + 1).max(1),
        ];
        let mut loc = PointLocator {
            mesh,
            lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1]],
        };
        for id in 0..mesh.n_elements() {
            let mut elo = [f64::INFINITY; 2];
            let mut ehi = [f64::NEG_INFINITY; 2];
            for &v in mesh.element(id).vertices() {
                let p = mesh.vertex(v);
                for d in 0..2 {
                    elo[d] = elo[d].min(p[d]);
                    ehi[d] = ehi[d].max(p[d]);
                }
            }
            let [x0, y0] = loc.cell_of(elo);
            let [x1, y1] = loc.cell_of(ehi);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    loc.buckets[cy * dims[0] + cx].push(id);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: Point) -> [usize; 2] {
        let cx = ((p[0] - self.lo[0]) / self.cell).floor().max(0.0) as usize;
        let cy = ((p[1] - self.lo[1]) / self.cell).floor().max(0.0) as usize;
        [cx.min(self.dims[0] - 1), cy.min(self.dims[1] - 1)]
    }

    /// Returns the lowest-id element containing `p` (with a small relative tolerance).
    pub fn locate(&self, p: Point) -> Option<usize> {
        let [lo, hi] = self.mesh.bounding_box();
        let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let tol = 1e-12 * scale;
        if p[0] < lo[0] - tol || p[0] > hi[0] + tol || p[1] < lo[1] - tol || p[1] > hi[1] + tol {
            return None;
        }
        let [cx, cy] = self.cell_of(p);
        let mut best: Option<(f64, usize)> = None;
        for &id in &self.buckets[cy * self.dims[0] + cx] {
            let d = self.outside_distance(id, p);
            if d <= tol {
                return Some(id);
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.filter(|(d, _)| *d <= 1e-9 * scale).map(|(_, id)| id)
    }

    /// How far `p` lies outside element `id` measured against its edges (0 when inside).
    fn outside_distance(&self, id: usize, p: Point) -> f64 {
        let el = self.mesh.element(id);
        let mut worst: f64 = 0.0;
        for e in 0..el.n_edges() {
            let [a, b] = el.edge(e).map(|v| self.mesh.vertex(v));
            let len = dist(a, b);
            // Outward normal distance for a counter-clockwise element.
            let s = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / len;
            worst = worst.max(-s);
        }
        worst
    }
}
