use lyapmetric::spd::{geodesic_between, log_singular_values, majorize_leq, spd_distance, vectorial_distance};
use lyapmetric::{InvertibleMatrix, SpdMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spd2() -> impl Strategy<Value = SpdMatrix> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.0f64..std::f64::consts::PI).prop_map(|(a, b, t)| {
        let (c, s) = (t.cos(), t.sin());
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a.exp(), b.exp()]));
        let m = &q * d * q.transpose();
        SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
    })
}

fn gl2() -> impl Strategy<Value = InvertibleMatrix> {
    prop::array::uniform4(-3.0f64..3.0)
        .prop_filter("well conditioned", |v| (v[0] * v[3] - v[1] * v[2]).abs() > 0.1)
        .prop_map(|v| InvertibleMatrix::new(DMatrix::from_row_slice(2, 2, &v)).unwrap())
}

proptest! {
    #[test]
    fn distance_is_symmetric(p in spd2(), q in spd2()) {
        let a = spd_distance(&p, &q).unwrap();
        let b = spd_distance(&q, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn geodesic_points_split_the_distance(p in spd2(), q in spd2(), t in 0.0f64..1.0) {
        let m = geodesic_between(&p, &q, t).unwrap();
        let total = spd_distance(&p, &q).unwrap();
        prop_assert!((spd_distance(&p, &m).unwrap() - t * total).abs() <= 1e-8 * (1.0 + total));
    }

    #[test]
    fn horn_inequality(a in gl2(), b in gl2()) {
        let lhs = log_singular_values(&a.mul(&b).unwrap()).unwrap();
        let rhs = log_singular_values(&a).unwrap().add(&log_singular_values(&b).unwrap()).unwrap();
        prop_assert!(majorize_leq(&lhs, &rhs, false).unwrap());
    }

    #[test]
    fn vectorial_distance_is_sorted_with_zero_sum_on_unit_det(p in spd2(), q in spd2()) {
        let v = vectorial_distance(&p.normalize_det(), &q.normalize_det()).unwrap();
        prop_assert!(v[0] >= v[1]);
        prop_assert!((v[0] + v[1]).abs() <= 1e-9);
    }
}
