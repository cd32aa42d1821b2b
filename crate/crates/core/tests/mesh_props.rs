use monofem::mesh::Mesh;
use proptest::prelude::*;

/// Elements as sorted lists of vertex coordinates, independent of numbering.
fn geometry(mesh: &Mesh) -> Vec<Vec<[u64; 2]>> {
    let mut out: Vec<Vec<[u64; 2]>> = mesh
        .elements()
        .iter()
        .map(|el| {
            let mut vs: Vec<[u64; 2]> = el.vertices().iter().map(|&v| mesh.vertex(v).map(f64::to_bits)).collect();
            vs.sort_unstable();
            vs
        })
        .collect();
    out.sort();
    out
}

fn assert_valid(mesh: &Mesh) {
    assert!(mesh.is_conforming(), "conformity defects: {:?}", mesh.conformity_defects());
    for e in mesh.edges() {
        let sides = e.sides.iter().flatten().count();
        assert_eq!(sides, if e.is_boundary() { 1 } else { 2 });
    }
    for id in 0..mesh.n_elements() {
        assert!(mesh.area(id) > 0.0);
    }
    assert!((mesh.total_area() - 1.0).abs() < 1e-12);
}

#[test]
fn eight_by_eight_quads_have_equal_diameters() {
    let m = Mesh::unit_square_quad(8).unwrap();
    assert_eq!(m.n_elements(), 64);
    for id in 0..64 {
        assert!((m.diameter(id) - 2f64.sqrt() / 8.0).abs() < 1e-15);
    }
}

#[test]
fn diameters_are_largest_vertex_distances() {
    let m = Mesh::unit_square_tri(3).unwrap().refine(&[0, 5, 7]).unwrap();
    for (id, el) in m.elements().iter().enumerate() {
        let vs = el.vertices();
        let mut h: f64 = 0.0;
        for a in vs {
            for b in vs {
                let (p, q) = (m.vertex(*a), m.vertex(*b));
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        assert_eq!(m.diameter(id), h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn uniform_refinement_counts(n in 1usize..5, rounds in 0u32..4) {
        let mut m = Mesh::unit_square_tri(n).unwrap();
        for _ in 0..rounds {
            m = m.refine_all();
        }
        prop_assert_eq!(m.n_elements(), 2 * n * n * 2usize.pow(rounds));
        assert_valid(&m);
    }

    #[test]
    fn random_marking_keeps_meshes_valid(seed in any::<u64>(), n in 1usize..4) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mesh::unit_square_tri(n).unwrap();
        for _ in 0..10 {
            let marked: Vec<usize> = (0..m.n_elements()).filter(|_| rng.gen_bool(0.2)).collect();
            m = m.refine(&marked).unwrap();
            assert_valid(&m);
            let coarsen: Vec<usize> = (0..m.n_elements()).filter(|_| rng.gen_bool(0.1)).collect();
            m = m.derefine(&coarsen).unwrap();
            assert_valid(&m);
        }
        prop_assert!(m.min_angle_degrees() >= 20.0);
    }

    #[test]
    fn derefining_all_children_restores_the_mesh(n in 1usize..5) {
        let m = Mesh::unit_square_tri(n).unwrap();
        let fine = m.refine_all();
        let all: Vec<usize> = (0..fine.n_elements()).collect();
        let back = fine.derefine(&all).unwrap();
        prop_assert_eq!(geometry(&back), geometry(&m));
    }

    #[test]
    fn empty_marking_is_identity(n in 1usize..5) {
        let m = Mesh::unit_square_tri(n).unwrap();
        prop_assert_eq!(geometry(&m.refine(&[]).unwrap()), geometry(&m));
        prop_assert_eq!(geometry(&m.derefine(&[]).unwrap()), geometry(&m));
    }
}
