use std::sync::Arc;

use monofem::assembly::{assemble_iteration_matrix, energy_norm};
use monofem::element::ElementMap;
use monofem::mesh::Mesh;
use monofem::space::{build_space, transfer, CoefVector, FeSpace};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random polynomial of total degree `p`, or of degree `p` in each variable.
fn polynomial(rng: &mut ChaCha8Rng, p: usize, tensor: bool) -> impl Fn([f64; 2]) -> f64 {
    let mut terms = Vec::new();
    for i in 0..=p {
        for j in 0..=p {
            if tensor || i + j <= p {
                terms.push((i as i32, j as i32, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    move |x: [f64; 2]| terms.iter().map(|&(i, j, c)| c * x[0].powi(i) * x[1].powi(j)).sum()
}

/// Elements none of whose DOFs are constrained by the boundary condition.
fn interior_elements(s: &FeSpace) -> Vec<usize> {
    (0..s.mesh().n_elements())
        .filter(|&id| s.element_dofs(id).iter().all(|&d| !s.is_dirichlet(d)))
        .collect()
}

fn random_reference_point(rng: &mut ChaCha8Rng, quad: bool) -> [f64; 2] {
    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
    if quad || a + b <= 1.0 {
        [a, b]
    } else {
        [1.0 - a, 1.0 - b]
    }
}

fn random_coef(rng: &mut ChaCha8Rng, s: &FeSpace) -> CoefVector {
    CoefVector::from_values(s, (0..s.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn polynomials_are_reproduced(seed in any::<u64>(), p in 1usize..6, quad in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = if quad { Mesh::unit_square_quad(4).unwrap() } else { Mesh::unit_square_tri(4).unwrap() };
        let s = build_space(Arc::new(mesh), p).unwrap();
        let q = polynomial(&mut rng, p, quad);
        let c = s.interpolate(&q).unwrap();
        let inner = interior_elements(&s);
        prop_assert!(!inner.is_empty());
        for id in inner {
            let map = ElementMap::new(s.mesh(), id);
            for _ in 0..7 {
                let xi = random_reference_point(&mut rng, quad);
                let exact = q(map.to_physical(xi));
                let (v, _) = s.evaluate(&c, id, xi);
                prop_assert!((v - exact).abs() <= 1e-12 * exact.abs().max(1.0), "{v} vs {exact}");
            }
        }
    }

    #[test]
    fn transfer_preserves_energy_under_refinement(seed in any::<u64>(), p in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse = build_space(Arc::new(Mesh::unit_square_tri(3).unwrap()), p).unwrap();
        let marked: Vec<usize> = (0..coarse.mesh().n_elements()).filter(|_| rng.gen_bool(0.4)).collect();
        let fine = build_space(Arc::new(coarse.mesh().refine(&marked).unwrap()), p).unwrap();
        let u = random_coef(&mut rng, &coarse);
        let v = transfer(&coarse, &u, &fine).unwrap();
        let mc = assemble_iteration_matrix(&coarse, 1.3, 0.7).unwrap();
        let mf = assemble_iteration_matrix(&fine, 1.3, 0.7).unwrap();
        let (a, b) = (energy_norm(&mc, &u), energy_norm(&mf, &v));
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}

#[test]
fn transfer_keeps_vertex_values_and_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coarse = build_space(Arc::new(Mesh::unit_square_tri(4).unwrap()), 1).unwrap();
    let fine = build_space(Arc::new(coarse.mesh().refine(&[0, 3, 9, 17]).unwrap()), 1).unwrap();
    let u = random_coef(&mut rng, &coarse);
    let v = transfer(&coarse, &u, &fine).unwrap();
    // refinement keeps vertex ids, and vertex DOFs carry the vertex id
    for vtx in 0..coarse.mesh().n_vertices() {
        assert_eq!(coarse.mesh().vertex(vtx), fine.mesh().vertex(vtx));
        match (coarse.free_index(vtx), fine.free_index(vtx)) {
            (Some(i), Some(j)) => assert!((u.values[i] - v.values[j]).abs() < 1e-14),
            (None, None) => {}
            other => panic!("boundary status changed: {other:?}"),
        }
    }
    let z = transfer(&coarse, &CoefVector::zeros(&coarse), &fine).unwrap();
    assert!(z.values.iter().all(|&x| x == 0.0));
}
