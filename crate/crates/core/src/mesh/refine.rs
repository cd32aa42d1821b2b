use std::collections::HashMap;
use std::sync::Arc;

use super::{Ancestor, Element, ElementKind, Mesh, Point};
use crate::error::{invalid, Result};

/// Result of a derefinement pass.
#[derive(Debug)]
pub struct Derefinement {
    pub mesh: Mesh,
    /// For every element of the input mesh, its index in the output mesh (merged siblings
    /// both map to their restored parent).
    pub element_map: Vec<usize>,
    /// Marked elements that could not be coarsened.
    pub skipped: usize,
}

fn flags(n: usize, marked: &[usize]) -> Result<Vec<bool>> {
    let mut out = vec![false; n];
    for &id in marked {
        if id >= n {
            return Err(invalid(format!("element id {id} out of range (mesh has {n} elements)")));
        }
        out[id] = true;
    }
    Ok(out)
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

struct Builder {
    elements: Vec<Element>,
    parents: Vec<Option<Arc<Ancestor>>>,
    levels: Vec<u32>,
}

impl Builder {
    fn with_capacity(n: usize) -> Self {
        Builder {
            elements: Vec::with_capacity(n),
            parents: Vec::with_capacity(n),
            levels: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, el: Element, parent: Option<Arc<Ancestor>>, level: u32) {
        self.elements.push(el);
        self.parents.push(parent);
        self.levels.push(level);
    }
}

impl Mesh {
    /// Refines the marked elements.
    ///
    /// Triangle meshes use newest-vertex bisection of every marked element followed by the
    /// closure needed to remove hanging nodes. Meshes containing quads only support
    /// uniform refinement (`marked` = all elements): quads are quadrisected and triangles
    /// split into four by their edge midpoints.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        let marked = flags(self.n_elements(), marked)?;
        if !marked.iter().any(|&m| m) {
            return Ok(self.clone());
        }
        if self.is_triangular() {
            return Ok(self.bisect(&marked));
        }
        if marked.iter().all(|&m| m) {
            return Ok(self.subdivide_uniform());
        }
        Err(invalid(
            "meshes containing quadrilaterals only support uniform refinement",
        ))
    }

    /// Refines every element once.
    pub fn refine_all(&self) -> Mesh {
        let all: Vec<usize> = (0..self.n_elements()).collect();
        self.refine(&all).expect("uniform refinement of a valid mesh")
    }

    fn bisect(&self, marked: &[bool]) -> Mesh {
        let n_edges = self.edges.len();
        let mut edge_marked = vec![false; n_edges];
        for (id, &m) in marked.iter().enumerate() {
            if m {
                edge_marked[self.element_edges[id][1]] = true;
            }
        }
        // Closure: any element with a marked edge must also bisect its refinement edge.
        loop {
            let mut changed = false;
            for ee in &self.element_edges {
                if !edge_marked[ee[1]] && (edge_marked[ee[0]] || edge_marked[ee[2]]) {
                    edge_marked[ee[1]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut mid = vec![usize::MAX; n_edges];
        for (eid, edge) in self.edges.iter().enumerate() {
            if edge_marked[eid] {
                mid[eid] = vertices.len();
                vertices.push(midpoint(self.vertices[edge.vertices[0]], self.vertices[edge.vertices[1]]));
            }
        }

        let mut out = Builder::with_capacity(2 * self.n_elements());
        for (id, el) in self.elements.iter().enumerate() {
            let ee = self.element_edges[id];
            if !edge_marked[ee[1]] {
                out.push(*el, self.parents[id].clone(), self.levels[id]);
                continue;
            }
            let [a, b, c] = [el.verts[0], el.verts[1], el.verts[2]];
            let level = self.levels[id];
            let node = Arc::new(Ancestor {
                element: *el,
                parent: self.parents[id].clone(),
                level,
            });
            let m = mid[ee[1]];
            let first = Element::triangle(m, a, b);
            let second = Element::triangle(m, c, a);
            for (child, edge) in [(first, ee[0]), (second, ee[2])] {
                if edge_marked[edge] {
                    let q = mid[edge];
                    let [cm, cp, cq] = [child.verts[0], child.verts[1], child.verts[2]];
                    let sub = Arc::new(Ancestor {
                        element: child,
                        parent: Some(node.clone()),
                        level: level + 1,
                    });
                    out.push(Element::triangle(q, cm, cp), Some(sub.clone()), level + 2);
                    out.push(Element::triangle(q, cq, cm), Some(sub), level + 2);
                } else {
                    out.push(child, Some(node.clone()), level + 1);
                }
            }
        }
        Mesh::assemble(
            vertices,
            out.elements,
            out.parents,
            out.levels,
            self.family,
            self.generation + 1,
        )
        .expect("bisection preserves mesh validity")
    }

    fn subdivide_uniform(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut mid = Vec::with_capacity(self.edges.len());
        for edge in &self.edges {
            mid.push(vertices.len());
            vertices.push(midpoint(self.vertices[edge.vertices[0]], self.vertices[edge.vertices[1]]));
        }
        let mut out = Builder::with_capacity(4 * self.n_elements());
        for (id, el) in self.elements.iter().enumerate() {
            let ee = self.element_edges[id];
            let level = self.levels[id] + 1;
            let node = Some(Arc::new(Ancestor {
                element: *el,
                parent: self.parents[id].clone(),
                level: self.levels[id],
            }));
            match el.kind {
                ElementKind::Quad => {
                    let [a, b, c, d] = el.verts;
                    let [mab, mbc, mcd, mda] = [mid[ee[0]], mid[ee[1]], mid[ee[2]], mid[ee[3]]];
                    let p = [a, b, c, d].map(|v| self.vertices[v]);
                    let centre = vertices.len();
                    vertices.push([
                        0.25 * (p[0][0] + p[1][0] + p[2][0] + p[3][0]),
                        0.25 * (p[0][1] + p[1][1] + p[2][1] + p[3][1]),
                    ]);
                    out.push(Element::quad(a, mab, centre, mda), node.clone(), level);
                    out.push(Element::quad(mab, b, mbc, centre), node.clone(), level);
                    out.push(Element::quad(centre, mbc, c, mcd), node.clone(), level);
                    out.push(Element::quad(mda, centre, mcd, d), node, level);
                }
                ElementKind::Triangle => {
                    let [a, b, c] = [el.verts[0], el.verts[1], el.verts[2]];
                    let [mab, mbc, mca] = [mid[ee[0]], mid[ee[1]], mid[ee[2]]];
                    out.push(Element::triangle(a, mab, mca), node.clone(), level);
                    out.push(Element::triangle(b, mbc, mab), node.clone(), level);
                    out.push(Element::triangle(c, mca, mbc), node.clone(), level);
                    out.push(Element::triangle(mbc, mca, mab), node, level);
                }
            }
        }
        Mesh::assemble(
            vertices,
            out.elements,
            out.parents,
            out.levels,
            self.family,
            self.generation + 1,
        )
        .expect("uniform subdivision preserves mesh validity")
    }

    /// Merges marked bisection siblings back into their parent.
    ///
    /// A pair is merged only when both siblings are marked leaves and every element
    /// touching the bisection midpoint is merged at the same time (so interior midpoints
    /// need both sibling pairs marked). Everything else is left untouched.
    pub fn derefine(&self, marked: &[usize]) -> Result<Mesh> {
        Ok(self.derefine_mapped(marked)?.mesh)
    }

    pub fn derefine_mapped(&self, marked: &[usize]) -> Result<Derefinement> {
        let flagged = flags(self.n_elements(), marked)?;
        let n_marked = flagged.iter().filter(|&&m| m).count();
        if n_marked == 0 {
            return Ok(Derefinement {
                mesh: self.clone(),
                element_map: (0..self.n_elements()).collect(),
                skipped: 0,
            });
        }

        // Group leaves by parent node, in element order.
        let mut group_of: HashMap<*const Ancestor, usize> = HashMap::new();
        let mut groups: Vec<(Arc<Ancestor>, Vec<usize>)> = Vec::new();
        for (id, parent) in self.parents.iter().enumerate() {
            if let Some(p) = parent {
                let g = *group_of.entry(Arc::as_ptr(p)).or_insert_with(|| {
                    groups.push((p.clone(), Vec::new()));
                    groups.len() - 1
                });
                groups[g].1.push(id);
            }
        }

        // Candidate sibling pairs keyed by their shared newest vertex.
        let mut by_midpoint: HashMap<usize, Vec<usize>> = HashMap::new();
        for (g, (parent, members)) in groups.iter().enumerate() {
            if members.len() != 2 || parent.element.kind != ElementKind::Triangle {
                continue;
            }
            let [x, y] = [members[0], members[1]];
            if !(flagged[x] && flagged[y]) {
                continue;
            }
            let (ex, ey) = (self.elements[x], self.elements[y]);
            if ex.kind != ElementKind::Triangle || ey.kind != ElementKind::Triangle {
                continue;
            }
            let [a, b, c] = [parent.element.verts[0], parent.element.verts[1], parent.element.verts[2]];
            let m = ex.verts[0];
            let expected = [Element::triangle(m, a, b), Element::triangle(m, c, a)];
            if (ex == expected[0] && ey == expected[1]) || (ex == expected[1] && ey == expected[0]) {
                by_midpoint.entry(m).or_default().push(g);
            }
        }

        let incidence = self.vertex_elements();
        let mut removed_vertices: Vec<usize> = Vec::new();
        let mut merged_into: HashMap<usize, usize> = HashMap::new(); // element -> group
        let mut midpoints: Vec<usize> = by_midpoint.keys().copied().collect();
        midpoints.sort_unstable();
        for m in midpoints {
            let pair_groups = &by_midpoint[&m];
            let mut members: Vec<usize> = pair_groups.iter().flat_map(|&g| groups[g].1.iter().copied()).collect();
            members.sort_unstable();
            let mut touching = incidence[m].clone();
            touching.sort_unstable();
            if members == touching && (members.len() == 2 || members.len() == 4) {
                removed_vertices.push(m);
                for &g in pair_groups {
                    for &id in &groups[g].1 {
                        merged_into.insert(id, g);
                    }
                }
            }
        }

        let skipped = n_marked - merged_into.len();
        if skipped > 0 {
            log::debug!("derefine: {skipped} of {n_marked} marked elements could not be coarsened");
        }
        if merged_into.is_empty() {
            return Ok(Derefinement {
                mesh: self.clone(),
                element_map: (0..self.n_elements()).collect(),
                skipped,
            });
        }

        let mut out = Builder::with_capacity(self.n_elements());
        let mut element_map = vec![usize::MAX; self.n_elements()];
        let mut placed: HashMap<usize, usize> = HashMap::new(); // group -> new id
        for id in 0..self.n_elements() {
            match merged_into.get(&id) {
                Some(&g) => {
                    if let Some(&new_id) = placed.get(&g) {
                        element_map[id] = new_id;
                    } else {
                        let parent = &groups[g].0;
                        let new_id = out.elements.len();
                        out.push(parent.element, parent.parent.clone(), parent.level);
                        placed.insert(g, new_id);
                        element_map[id] = new_id;
                    }
                }
                None => {
                    element_map[id] = out.elements.len();
                    out.push(self.elements[id], self.parents[id].clone(), self.levels[id]);
                }
            }
        }

        // Compact vertices and renumber everything that refers to them.
        let mut keep = vec![true; self.n_vertices()];
        for &m in &removed_vertices {
            keep[m] = false;
        }
        let mut remap = vec![usize::MAX; self.n_vertices()];
        let mut vertices = Vec::with_capacity(self.n_vertices() - removed_vertices.len());
        for (v, p) in self.vertices.iter().enumerate() {
            if keep[v] {
                remap[v] = vertices.len();
                vertices.push(*p);
            }
        }
        let elements: Vec<Element> = out.elements.iter().map(|e| e.remapped(&remap)).collect();
        let mut memo: HashMap<*const Ancestor, Arc<Ancestor>> = HashMap::new();
        let parents = out
            .parents
            .iter()
            .map(|p| p.as_ref().map(|node| remap_chain(node, &remap, &mut memo)))
            .collect();

        let mesh = Mesh::assemble(
            vertices,
            elements,
            parents,
            out.levels,
            self.family,
            self.generation + 1,
        )?;
        Ok(Derefinement {
            mesh,
            element_map,
            skipped,
        })
    }

    /// Leaf elements of `self` descending from `ancestor`.
    pub fn descendants_of<'a>(&'a self, ancestor: &Element) -> impl Iterator<Item = usize> + 'a {
        let parent = *ancestor;
        (0..self.n_elements()).filter(move |&id| {
            let mut node = self.parents[id].as_ref();
            while let Some(n) = node {
                if n.element == parent {
                    return true;
                }
                node = n.parent.as_ref();
            }
            false
        })
    }
}

fn remap_chain(
    node: &Arc<Ancestor>,
    remap: &[usize],
    memo: &mut HashMap<*const Ancestor, Arc<Ancestor>>,
) -> Arc<Ancestor> {
    if let Some(done) = memo.get(&Arc::as_ptr(node)) {
        return done.clone();
    }
    let parent = node.parent.as_ref().map(|p| remap_chain(p, remap, memo));
    debug_assert!(node.element.vertices().iter().all(|&v| remap[v] != usize::MAX));
    let fresh = Arc::new(Ancestor {
        element: node.element.remapped(remap),
        parent,
        level: node.level,
    });
    memo.insert(Arc::as_ptr(node), fresh.clone());
    fresh
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vertex_set(m: &Mesh) -> Vec<[i64; 2]> {
        let mut v: Vec<[i64; 2]> = m
            .vertices()
            .iter()
            .map(|p| [(p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64])
            .collect();
        v.sort_unstable();
        v
    }

    fn element_set(m: &Mesh) -> Vec<Vec<[i64; 2]>> {
        let mut out: Vec<Vec<[i64; 2]>> = m
            .elements()
            .iter()
            .map(|el| {
                let mut pts: Vec<[i64; 2]> = el
                    .vertices()
                    .iter()
                    .map(|&v| {
                        let p = m.vertex(v);
                        [(p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64]
                    })
                    .collect();
                pts.sort_unstable();
                pts
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = Mesh::unit_square_tri(3).unwrap();
        let r = m.refine(&[]).unwrap();
        assert_eq!(r.n_elements(), m.n_elements());
        let d = m.derefine(&[]).unwrap();
        assert_eq!(d.n_elements(), m.n_elements());
    }

    #[test]
    fn out_of_range_ids_rejected() {
        let m = Mesh::unit_square_tri(1).unwrap();
        assert!(m.refine(&[2]).is_err());
        assert!(m.derefine(&[7]).is_err());
    }

    #[test]
    fn bisect_both_root_triangles() {
        let m = Mesh::unit_square_tri(1).unwrap();
        let r = m.refine(&[0, 1]).unwrap();
        assert!(r.n_elements() >= 4);
        assert!(r.is_conforming());
        assert!((0..r.n_elements()).all(|e| r.area(e) > 0.0));
        assert!((r.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quad_uniform_matches_finer_grid() {
        let coarse = Mesh::unit_square_quad(2).unwrap();
        let refined = coarse.refine(&[0, 1, 2, 3]).unwrap();
        let direct = Mesh::unit_square_quad(4).unwrap();
        assert_eq!(vertex_set(&refined), vertex_set(&direct));
        assert_eq!(element_set(&refined), element_set(&direct));
    }

    #[test]
    fn partial_quad_refinement_rejected() {
        let m = Mesh::unit_square_quad(2).unwrap();
        assert!(m.refine(&[0]).is_err());
    }

    #[test]
    fn uniform_bisection_doubles() {
        for n in 1..4 {
            let mut m = Mesh::unit_square_tri(n).unwrap();
            for r in 1..=4 {
                m = m.refine_all();
                assert_eq!(m.n_elements(), 2 * n * n * (1 << r));
                assert!(m.is_conforming());
            }
        }
    }

    #[test]
    fn random_marking_keeps_shape_regularity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = Mesh::unit_square_tri(2).unwrap();
        let root_angle = m.min_angle_degrees();
        for _ in 0..10 {
            let marked: Vec<usize> = (0..m.n_elements()).filter(|_| rng.gen_bool(0.3)).collect();
            m = m.refine(&marked).unwrap();
            assert!(m.is_conforming());
            assert!((m.total_area() - 1.0).abs() < 1e-12);
        }
        assert!(m.min_angle_degrees() >= 20.0);
        assert!(m.min_angle_degrees() >= root_angle / 2.5);
    }

    #[test]
    fn refine_then_derefine_restores_root() {
        let m = Mesh::unit_square_tri(1).unwrap();
        // bisecting element 0 also bisects its compatible partner (shared hypotenuse)
        let r = m.refine(&[0]).unwrap();
        assert_eq!(r.n_elements(), 4);
        let all: Vec<usize> = (0..r.n_elements()).collect();
        let back = r.derefine(&all).unwrap();
        assert_eq!(vertex_set(&back), vertex_set(&m));
        assert_eq!(element_set(&back), element_set(&m));
        assert!(back.parent(0).is_none());
    }

    #[test]
    fn boundary_pair_merges_alone() {
        // refine twice so that some sibling pairs sit on a boundary edge
        let m = Mesh::unit_square_tri(1).unwrap().refine_all().refine_all();
        let n = m.n_elements();
        let all: Vec<usize> = (0..n).collect();
        let d = m.derefine_mapped(&all).unwrap();
        assert!(d.mesh.n_elements() < n);
        assert!(d.mesh.is_conforming());
    }

    #[test]
    fn single_sibling_is_not_merged() {
        let m = Mesh::unit_square_tri(1).unwrap();
        let r = m.refine(&[0]).unwrap();
        let d = r.derefine_mapped(&[0]).unwrap();
        assert_eq!(d.mesh.n_elements(), r.n_elements());
        assert_eq!(d.skipped, 1);
    }

    #[test]
    fn interior_midpoint_needs_both_pairs() {
        let m = Mesh::unit_square_tri(1).unwrap();
        let r = m.refine(&[0]).unwrap();
        // pair 0/1 comes from root 0, pair 2/3 from root 1; all four touch the centre
        let d = r.derefine_mapped(&[0, 1]).unwrap();
        assert_eq!(d.mesh.n_elements(), 4);
        assert_eq!(d.skipped, 2);
        let d = r.derefine_mapped(&[0, 1, 2, 3]).unwrap();
        assert_eq!(d.mesh.n_elements(), 2);
    }

    #[test]
    fn round_trip_after_local_refinement() {
        let m = Mesh::unit_square_tri(4).unwrap();
        let r = m.refine(&[5]).unwrap();
        let new_ids: Vec<usize> = (0..r.n_elements()).filter(|&e| r.parent(e).is_some()).collect();
        let back = r.derefine(&new_ids).unwrap();
        assert_eq!(vertex_set(&back), vertex_set(&m));
        assert_eq!(element_set(&back), element_set(&m));
        assert!(back.is_conforming());
    }
}
