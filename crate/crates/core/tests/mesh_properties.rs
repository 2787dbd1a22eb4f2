use mzr_core::basis::{MultiIndexSet, QuadratureRule};
use mzr_core::mesh::{mean_and_variance, Element, Mesh};
use mzr_core::{GalerkinState, QuadraticSystem};
use proptest::prelude::*;

fn mesh_with(dim: usize, order: usize, coeffs: Vec<f64>) -> (Mesh, MultiIndexSet, QuadratureRule) {
    let set = MultiIndexSet::new(dim, order, order - 1).unwrap();
    let rule = QuadratureRule::gauss_legendre(order + 1, 1).unwrap();
    let n = set.len();
    let state = GalerkinState::from_flat(0.0, n, coeffs[..n].to_vec()).unwrap();
    (Mesh::single(Element::root(0, dim, QuadraticSystem::new(1, 0), state)), set, rule)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splitting_preserves_moments(
        dim in 1usize..=3,
        order in 2usize..=5,
        coeffs in prop::collection::vec(-1.0f64..1.0, 56),
        picks in prop::collection::vec((0usize..64, 1u8..8), 1..6),
    ) {
        let (mut mesh, set, rule) = mesh_with(dim, order, coeffs);
        let (m0, v0) = mean_and_variance(&mesh, 0);
        for (pos, mask) in picks {
            let pos = pos % mesh.len();
            let dims: Vec<usize> = (0..dim).filter(|d| mask >> d & 1 == 1).collect();
            if dims.is_empty() {
                continue;
            }
            mesh.split(pos, &dims, &set, &rule).unwrap();
        }
        let (m1, v1) = mean_and_variance(&mesh, 0);
        prop_assert!((m1 - m0).abs() <= 1e-12 * (1.0 + m0.abs()));
        prop_assert!((v1 - v0).abs() <= 1e-12 * (1.0 + v0.abs()));
        prop_assert!((mesh.total_probability() - 1.0).abs() <= 1e-12);
        for e in &mesh.elements {
            let product: f64 = e.bounds.iter().map(|[a, b]| (b - a) / 2.0).product();
            prop_assert!((e.probability - product).abs() <= 1e-15);
            prop_assert!(e.bounds.iter().all(|[a, b]| -1.0 <= *a && a < b && *b <= 1.0));
        }
    }
}

#[test]
fn split_log_records_every_event_in_order() {
    let (mut mesh, set, rule) = mesh_with(2, 3, vec![0.5; 56]);
    mesh.split(0, &[0], &set, &rule).unwrap();
    mesh.split(1, &[0, 1], &set, &rule).unwrap();
    let ids: Vec<u64> = mesh.elements.iter().map(|e| e.id).collect();
    assert_eq!(ids, vec![1, 3, 4, 5, 6]);
    assert_eq!(mesh.log.len(), 2);
    assert_eq!(mesh.log[1].parent, 2);
    assert_eq!(mesh.log[1].dims, vec![0, 1]);
    assert_eq!(mesh.log[1].children, vec![3, 4, 5, 6]);
}
