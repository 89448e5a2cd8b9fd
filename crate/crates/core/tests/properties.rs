use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use torus_rds::grassmann::{
    apply_linear, d_geodesic, d_hausdorff, graph_from_frame, graph_transform, haar_random_subspace,
    principal_angles,
};
use torus_rds::noise::{expm_skew, skew_from_upper};
use torus_rds::torus::centered;
use torus_rds::{GraphRep, MapFamily, NoiseModel, RotationalNoise, SubspaceFrame, TorusPoint};

fn point(coords: &[f64]) -> TorusPoint {
    TorusPoint::new(coords.to_vec()).unwrap()
}

fn torus_gap(a: &TorusPoint, b: &TorusPoint) -> f64 {
    a.coords()
        .iter()
        .zip(b.coords())
        .map(|(p, q)| centered(p - q).abs())
        .fold(0.0, f64::max)
}

fn family(n: usize, l: f64, mu: f64) -> MapFamily {
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { mu });
    MapFamily::coupled_standard(n, l, Some(m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inverse_undoes_the_map(
        coords in prop::collection::vec(0.0f64..1.0, 4),
        l in 1.0f64..1e3,
        mu in -1.0f64..1.0,
    ) {
        let f = family(2, l, mu);
        let z = point(&coords);
        let back = f.inverse_point(&f.map_point(&z).unwrap()).unwrap();
        // The forward kick loses about L * eps of absolute position.
        prop_assert!(torus_gap(&back, &z) < 1e-12 * l.max(1.0) * 16.0);
    }

    #[test]
    fn cocycle_preserves_volume(
        coords in prop::collection::vec(0.0f64..1.0, 6),
        l in 1.0f64..1e4,
        mu in -2.0f64..2.0,
    ) {
        let f = family(3, l, mu);
        let jac = f.map_jacobian(&point(&coords)).unwrap();
        prop_assert!((jac.assembled.determinant() - 1.0).abs() < 1e-10 * l * l);
        let ident = &jac.assembled * jac.inverse();
        prop_assert!((ident - DMatrix::identity(6, 6)).abs().max() < 1e-12 * l);
    }

    #[test]
    fn skew_exponential_is_a_rotation(upper in prop::collection::vec(-3.0f64..3.0, 6)) {
        let u = skew_from_upper(4, &upper);
        prop_assert!((&u + u.transpose()).abs().max() == 0.0);
        let r = expm_skew(&u);
        prop_assert!((r.transpose() * &r - DMatrix::identity(4, 4)).abs().max() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotational_noise_preserves_volume(seed in any::<u64>(), c in 0.001f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = NoiseModel::Rotational(RotationalNoise::light_grid(2, 3, c).unwrap());
        let z = TorusPoint::uniform(&mut rng, 1);
        let sample = noise.sample(&mut rng, 1).unwrap();
        prop_assert!(sample.norm() <= c * (1.0 + 1e-12));
        let (moved, jac) = noise.apply_with_jacobian(&z, &sample, true).unwrap();
        let jac = jac.unwrap();
        prop_assert!((jac.determinant() - 1.0).abs() < 1e-12);
        prop_assert!(moved.coords().iter().all(|t| (0.0..1.0).contains(t)));
    }

    #[test]
    fn chart_action_matches_the_linear_image(
        g in prop::collection::vec(-0.5f64..0.5, 4),
        dxf in prop::collection::vec(-50.0f64..50.0, 4),
        kick in 5.0f64..100.0,
    ) {
        let mut a = DMatrix::from_row_slice(2, 2, &dxf);
        a[(0, 0)] += kick;
        a[(1, 1)] += kick;
        let graph = GraphRep::new(DMatrix::from_row_slice(2, 2, &g));
        let Ok(image) = graph_transform(&graph, &a) else {
            return Ok(());
        };
        let full = torus_rds::JacobianBlock::from_dxf(a).assembled;
        let frame = apply_linear(&full, &SubspaceFrame::from_graph(&graph).unwrap()).unwrap();
        let via_frame = graph_from_frame(&frame).unwrap();
        let scale = 1.0 + image.norm();
        prop_assert!((&via_frame.matrix - &image.matrix).abs().max() < 1e-9 * scale);
    }

    #[test]
    fn angle_metrics_are_ordered_and_symmetric(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = haar_random_subspace(&mut rng, 8, k);
        let f = haar_random_subspace(&mut rng, 8, k);
        let ef = principal_angles(&e, &f).unwrap();
        let fe = principal_angles(&f, &e).unwrap();
        prop_assert_eq!(&ef, &fe);
        let psi = ef.largest();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&psi));
        let dh = d_hausdorff(&e, &f).unwrap();
        let dg = d_geodesic(&e, &f).unwrap();
        prop_assert!((dh - psi.sin()).abs() < 1e-12);
        prop_assert!(dh <= psi + 1e-12 && psi <= dg + 1e-12);
        prop_assert!(dg <= (k as f64).sqrt() * psi + 1e-12);
    }
}
