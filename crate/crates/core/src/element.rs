//! Lagrange reference elements (P_p on triangles, Q_p on squares) and affine element maps.
//!
//! Basis functions are expanded in products of shifted Legendre polynomials
//! `P_i(2x-1) P_j(2y-1)` (total degree `<= p` on triangles, each degree `<= p` on squares),
//! and the nodal basis is obtained by inverting the Vandermonde matrix at the nodes.
//!
//! Node order: vertices, then `p-1` nodes per local edge running from the edge's first to
//! its second vertex, then interior nodes.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::mesh::{ElementKind, Mesh, Point};
use crate::quadrature::gauss_lobatto;

/// Placement of the 1D nodes from which element nodes are built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum NodeFamily {
    #[default]
    Equispaced,
    GaussLobatto,
}

impl NodeFamily {
    /// Ascending nodes `t_0 = 0 < ... < t_p = 1`, symmetric about 1/2.
    pub fn points_1d(self, p: usize) -> Vec<f64> {
        match self {
            NodeFamily::Equispaced => (0..=p).map(|i| i as f64 / p as f64).collect(),
            NodeFamily::GaussLobatto => gauss_lobatto(p + 1),
        }
    }
}

/// Values, gradients and Hessians `[xx, xy, yy]` of all basis functions at a set of
/// reference points, indexed `[point][basis]`.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
    pub hessians: Vec<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug)]
pub struct RefElement {
    kind: ElementKind,
    degree: usize,
    family: NodeFamily,
    nodes: Vec<Point>,
    modes: Vec<(usize, usize)>,
    /// `coeffs[(mode, basis)]`: expansion of each nodal basis function in the modes.
    coeffs: DMatrix<f64>,
}

impl RefElement {
    pub fn new(kind: ElementKind, degree: usize, family: NodeFamily) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("polynomial degree must be at least 1"));
        }
        let p = degree;
        let t = family.points_1d(p);
        let corners = reference_vertices(kind);
        let nv = kind.n_vertices();
        let mut nodes: Vec<Point> = corners.to_vec();
        for e in 0..nv {
            let (a, b) = (corners[e], corners[(e + 1) % nv]);
            for k in 1..p {
                nodes.push([a[0] + t[k] * (b[0] - a[0]), a[1] + t[k] * (b[1] - a[1])]);
            }
        }
        let modes: Vec<(usize, usize)> = match kind {
            ElementKind::Triangle => {
                for j in 1..p {
                    for i in 1..p - j {
                        let l = p - i - j;
                        let x = (1.0 + 2.0 * t[i] - t[j] - t[l]) / 3.0;
                        let y = (1.0 + 2.0 * t[j] - t[i] - t[l]) / 3.0;
                        nodes.push([x, y]);
                    }
                }
                (0..=p).flat_map(|j| (0..=p - j).map(move |i| (i, j))).collect()
            }
            ElementKind::Quad => {
                for j in 1..p {
                    for i in 1..p {
                        nodes.push([t[i], t[j]]);
                    }
                }
                (0..=p).flat_map(|j| (0..=p).map(move |i| (i, j))).collect()
            }
        };
        debug_assert_eq!(nodes.len(), modes.len());
        let n = nodes.len();
        let mut vander = DMatrix::<f64>::zeros(n, n);
        for (r, node) in nodes.iter().enumerate() {
            let (lx, ly) = (legendre_all(p, node[0]), legendre_all(p, node[1]));
            for (c, &(i, j)) in modes.iter().enumerate() {
                vander[(r, c)] = lx[i].0 * ly[j].0;
            }
        }
        let coeffs = vander
            .try_inverse()
            .ok_or_else(|| invalid(format!("singular Vandermonde matrix for degree {p}")))?;
        Ok(RefElement { kind, degree, family, nodes, modes, coeffs })
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn n_basis(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// Number of nodes strictly inside the element.
    pub fn n_interior(&self) -> usize {
        self.nodes.len() - self.kind.n_vertices() * self.degree
    }

    pub fn tabulate(&self, points: &[Point]) -> Tabulation {
        let n = self.n_basis();
        let mut tab = Tabulation {
            values: Vec::with_capacity(points.len()),
            grads: Vec::with_capacity(points.len()),
            hessians: Vec::with_capacity(points.len()),
        };
        let mut mv = vec![0.0; n];
        let mut mg = vec![[0.0; 2]; n];
        let mut mh = vec![[0.0; 3]; n];
        for pt in points {
            let (lx, ly) = (legendre_all(self.degree, pt[0]), legendre_all(self.degree, pt[1]));
            for (m, &(i, j)) in self.modes.iter().enumerate() {
                let (px, dpx, d2px) = lx[i];
                let (py, dpy, d2py) = ly[j];
                mv[m] = px * py;
                mg[m] = [dpx * py, px * dpy];
                mh[m] = [d2px * py, dpx * dpy, px * d2py];
            }
            let mut v = vec![0.0; n];
            let mut g = vec![[0.0; 2]; n];
            let mut h = vec![[0.0; 3]; n];
            for b in 0..n {
                let col = self.coeffs.column(b);
                for m in 0..n {
                    let c = col[m];
                    v[b] += c * mv[m];
                    g[b][0] += c * mg[m][0];
                    g[b][1] += c * mg[m][1];
                    h[b][0] += c * mh[m][0];
                    h[b][1] += c * mh[m][1];
                    h[b][2] += c * mh[m][2];
                }
            }
            tab.values.push(v);
            tab.grads.push(g);
            tab.hessians.push(h);
        }
        tab
    }
}

pub fn reference_vertices(kind: ElementKind) -> &'static [Point] {
    match kind {
        ElementKind::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        ElementKind::Quad => &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    }
}

/// Reference point at parameter `s` along local edge `e` (from its first to its second vertex).
pub fn reference_edge_point(kind: ElementKind, e: usize, s: f64) -> Point {
    let c = reference_vertices(kind);
    let n = c.len();
    let (a, b) = (c[e % n], c[(e + 1) % n]);
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// `(P_k(2x-1), d/dx, d^2/dx^2)` for `k = 0..=p`.
fn legendre_all(p: usize, x: f64) -> Vec<(f64, f64, f64)> {
    let z = 2.0 * x - 1.0;
    let mut v = vec![(0.0, 0.0, 0.0); p + 1];
    v[0] = (1.0, 0.0, 0.0);
    if p >= 1 {
        v[1] = (z, 1.0, 0.0);
    }
    for n in 1..p {
        let k = n as f64;
        let (pn, dn, _) = v[n];
        let (pm, dm, d2m) = v[n - 1];
        let next = ((2.0 * k + 1.0) * z * pn - k * pm) / (k + 1.0);
        // P'_{n+1} = P'_{n-1} + (2n+1) P_n, and likewise one derivative higher
        let dnext = dm + (2.0 * k + 1.0) * pn;
        let d2next = d2m + (2.0 * k + 1.0) * dn;
        v[n + 1] = (next, dnext, d2next);
    }
    // chain rule for z = 2x - 1
    v.iter().map(|&(a, b, c)| (a, 2.0 * b, 4.0 * c)).collect()
}

/// Affine map `x = origin + J xi` from the reference cell onto a mesh element.
#[derive(Clone, Copy, Debug)]
pub struct ElementMap {
    pub origin: Point,
    pub jac: [[f64; 2]; 2],
    /// `J^{-T}`, which maps reference gradients to physical gradients.
    pub inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl ElementMap {
    pub fn new(mesh: &Mesh, id: usize) -> Self {
        let el = mesh.element(id);
        let vs = el.vertices();
        let p0 = mesh.vertex(vs[0]);
        let p1 = mesh.vertex(vs[1]);
        let p2 = match el.kind() {
            ElementKind::Triangle => mesh.vertex(vs[2]),
            ElementKind::Quad => mesh.vertex(vs[3]),
        };
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        ElementMap { origin: p0, jac, inv_t, det }
    }

    pub fn to_physical(&self, xi: Point) -> Point {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // J^{-1} = (J^{-T})^T
        [
            self.inv_t[0][0] * d[0] + self.inv_t[1][0] * d[1],
            self.inv_t[0][1] * d[0] + self.inv_t[1][1] * d[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }

    /// Physical Hessian `J^{-T} H J^{-1}` from a reference Hessian `[xx, xy, yy]`.
    pub fn hessian(&self, h: [f64; 3]) -> [f64; 3] {
        let b = self.inv_t;
        let hm = [[h[0], h[1]], [h[1], h[2]]];
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        s += b[r][k] * hm[k][l] * b[c][l];
                    }
                }
                out[r][c] = s;
            }
        }
        [out[0][0], 0.5 * (out[0][1] + out[1][0]), out[1][1]]
    }
}
