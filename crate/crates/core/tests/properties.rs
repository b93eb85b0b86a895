use ekhom_core::geometry::{generate_bernoulli, DisperseParams};
use ekhom_core::grid::ops::{cell_inner, div_bc_into, face_inner, grad_bc_into, harmonic_faces, neg_weighted_lap_into};
use ekhom_core::grid::{FaceKind, FluidGrid, MacVectorField, ScalarField, Topology, NONE};
use proptest::prelude::*;

fn grid_from(mask: &[bool], n: usize, topology: Topology) -> FluidGrid {
    let grain = mask.iter().map(|&f| if f { NONE } else { 0 }).collect();
    FluidGrid::from_mask(n, n, 1.0 / n as f64, topology, mask.to_vec(), grain)
}

fn masked_grid() -> impl Strategy<Value = (FluidGrid, Vec<f64>, Vec<f64>)> {
    (4usize..10, any::<bool>()).prop_flat_map(|(n, walled)| {
        let topology = if walled { Topology::Walled } else { Topology::Periodic };
        let faces = 2 * (n + 1) * n;
        (
            prop::collection::vec(prop::bool::weighted(0.8), n * n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-1.0f64..1.0, faces),
        )
            .prop_map(move |(mask, s, v)| (grid_from(&mask, n, topology), s, v))
    })
}

fn split_faces(g: &FluidGrid, v: &[f64]) -> MacVectorField {
    let mut out = g.zero_vector();
    out.x.copy_from_slice(&v[..g.x_faces()]);
    out.y.copy_from_slice(&v[g.x_faces()..g.x_faces() + g.y_faces()]);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_minus_divergence_adjoint((g, s, v) in masked_grid()) {
        let mut s = ScalarField { data: s, ..g.zero_scalar() };
        s.data.iter_mut().enumerate().for_each(|(c, x)| if !g.is_fluid(c) { *x = 0.0 });
        let mut v = split_faces(&g, &v);
        let mut gs = g.zero_vector();
        grad_bc_into(&g, &s.data, &mut gs.x, &mut gs.y);
        // wall and solid faces carry no flux in either operator
        for f in 0..g.x_faces() {
            if matches!(g.x_kind(f), FaceKind::Wall | FaceKind::Solid) {
                v.x[f] = 0.0;
            }
        }
        for f in 0..g.y_faces() {
            if matches!(g.y_kind(f), FaceKind::Wall | FaceKind::Solid) {
                v.y[f] = 0.0;
            }
        }
        let mut dv = vec![0.0; g.cells()];
        div_bc_into(&g, &v.x, &v.y, &mut dv);
        let lhs = face_inner(&g, &gs, &v);
        let rhs = -cell_inner(&g, &s.data, &dv);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn weighted_laplacian_is_symmetric_and_nonnegative((g, a, w) in masked_grid(), b in prop::collection::vec(-1.0f64..1.0, 100), dirichlet: bool) {
        let wx: Vec<f64> = w[..g.x_faces()].iter().map(|x| 1.0 + x.abs()).collect();
        let wy: Vec<f64> = w[g.x_faces()..g.x_faces() + g.y_faces()].iter().map(|x| 1.0 + x.abs()).collect();
        let b = &b[..g.cells()];
        let (mut la, mut lb) = (vec![0.0; g.cells()], vec![0.0; g.cells()]);
        neg_weighted_lap_into(&g, &wx, &wy, &a, &mut la, dirichlet);
        neg_weighted_lap_into(&g, &wx, &wy, b, &mut lb, dirichlet);
        let ab = cell_inner(&g, b, &la);
        let ba = cell_inner(&g, &a, &lb);
        prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab.abs()));
        prop_assert!(cell_inner(&g, &a, &la) >= -1e-10);
    }

    #[test]
    fn harmonic_face_values_lie_between_neighbours((g, s, _) in masked_grid()) {
        let n: Vec<f64> = s.iter().map(|x| 0.1 + x.abs()).collect();
        let hf = harmonic_faces(&g, &n);
        for f in 0..g.x_faces() {
            if let (FaceKind::Open, (Some(l), Some(r))) = (g.x_kind(f), g.x_face_lr(f)) {
                let (lo, hi) = (n[l].min(n[r]), n[l].max(n[r]));
                prop_assert!(hf.x[f] >= lo - 1e-15 && hf.x[f] <= hi + 1e-15);
                // never above the arithmetic mean
                prop_assert!(hf.x[f] <= 0.5 * (n[l] + n[r]) + 1e-15);
            }
        }
    }

    #[test]
    fn bernoulli_generator_is_deterministic(seed in 0u64..1000) {
        let c = DisperseParams { delta_min: 0.1, ..Default::default() };
        let a = generate_bernoulli(2, 0.5, 0.1, seed, &c).unwrap();
        let b = generate_bernoulli(2, 0.5, 0.1, seed, &c).unwrap();
        prop_assert_eq!(a, b);
    }
}
