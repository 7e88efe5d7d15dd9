//! Randomized invariants across the pipeline.

use proptest::prelude::*;
use thermeta::database::{generate_pixels, RveDatabase, RveParams, RveRecord};
use thermeta::{
    assemble_and_solve, boundary_flux_balance, element_stiffness, homogenize, BoundaryConditions,
    DesignField, MacroMesh, OrthotropicConductivity, PixelCell,
};

fn cell_strategy(n: usize) -> impl Strategy<Value = PixelCell> {
    prop::collection::vec(any::<bool>(), n * n)
        .prop_map(move |grid| PixelCell::new(n, grid).unwrap())
}

fn kappa() -> impl Strategy<Value = OrthotropicConductivity> {
    (1e-3..1.0f64, 1e-3..1.0f64).prop_map(|(a, b)| OrthotropicConductivity::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homogenized_tensor_is_bounded_by_volume_fraction(cell in cell_strategy(8)) {
        let t = homogenize(&cell).unwrap();
        let vf = cell.volume_fraction();
        prop_assert!(t.k11() >= -1e-12 && t.k11() <= vf + 1e-8, "{t:?} vf {vf}");
        prop_assert!(t.k22() >= -1e-12 && t.k22() <= vf + 1e-8, "{t:?} vf {vf}");
        prop_assert!((t.0[0][1] - t.0[1][0]).abs() < 1e-9);
        prop_assert!(t.eigenvalues().0 >= -1e-10);
    }

    #[test]
    fn quarter_turn_swaps_diagonal(cell in cell_strategy(6)) {
        let a = homogenize(&cell).unwrap();
        let b = homogenize(&cell.rotated()).unwrap();
        prop_assert!((a.k11() - b.k22()).abs() < 1e-9);
        prop_assert!((a.k22() - b.k11()).abs() < 1e-9);
        prop_assert!((a.off_diagonal() + b.off_diagonal()).abs() < 1e-9);
    }

    #[test]
    fn generated_cells_are_quarter_turn_symmetric_pairs(
        t1 in 0usize..=5, t2 in 0usize..=5, t3 in 0usize..=5
    ) {
        let c = generate_pixels(RveParams::new(t1, t2, t3), 10).unwrap();
        let swapped = generate_pixels(RveParams::new(t2, t1, t3), 10).unwrap();
        prop_assert_eq!(c.rotated(), swapped);
    }

    #[test]
    fn element_matrix_is_symmetric_singular_and_semidefinite(
        k in kappa(), h in 0.1..5.0f64, v in prop::array::uniform4(-1.0..1.0f64)
    ) {
        let m = element_stiffness(k, h).unwrap();
        let mut energy = 0.0;
        for a in 0..4 {
            prop_assert!(m[a].iter().sum::<f64>().abs() < 1e-12);
            for b in 0..4 {
                prop_assert!((m[a][b] - m[b][a]).abs() < 1e-15);
                energy += v[a] * m[a][b] * v[b];
            }
        }
        prop_assert!(energy >= -1e-12);
    }

    #[test]
    fn maximum_principle_and_flux_balance(
        field in prop::collection::vec(kappa(), 48),
        t_hot in 1.0..200.0f64
    ) {
        let mesh = MacroMesh::unit(8, 6);
        let bc = BoundaryConditions::left_right(&mesh, t_hot, 0.0);
        let t = assemble_and_solve(&mesh, &field, &bc).unwrap();
        for &v in &t.values {
            prop_assert!(v >= -1e-9 && v <= t_hot + 1e-9);
        }
        let (q_in, q_out) = boundary_flux_balance(&mesh, &field, &t, &bc).unwrap();
        prop_assert!(q_in > 0.0);
        prop_assert!((q_in - q_out).abs() <= 1e-8 * q_in);
    }

    #[test]
    fn projection_is_idempotent_and_flat_round_trips(
        raw in prop::collection::vec((-0.5..1.5f64, -0.5..1.5f64), 1..40)
    ) {
        let values = raw.iter().map(|&(a, b)| OrthotropicConductivity::new(a, b)).collect();
        let mut d = DesignField::new(values, 1e-9, 1.0);
        d.project();
        prop_assert!(d.within_bounds());
        let once = d.clone();
        d.project();
        prop_assert_eq!(&once, &d);
        let mut e = once.clone();
        e.set_flat(&once.to_flat());
        prop_assert_eq!(e, once);
    }

    #[test]
    fn nearest_matches_linear_scan(
        props in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..60),
        queries in prop::collection::vec((-0.2..1.2f64, -0.2..1.2f64), 20)
    ) {
        let records = props
            .iter()
            .enumerate()
            .map(|(i, &(k11, k22))| RveRecord {
                index: i,
                params: RveParams::new(i, 0, 0),
                cell: PixelCell::solid(2),
                k11,
                k22,
                vf: 1.0,
            })
            .collect();
        let db = RveDatabase::from_records(2, props.len(), records);
        for (a, b) in queries {
            let (fast, d1) = db.nearest(a, b).unwrap();
            let (slow, d2) = db.nearest_linear(a, b).unwrap();
            prop_assert_eq!(fast.index, slow.index);
            prop_assert_eq!(d1, d2);
        }
    }
}
