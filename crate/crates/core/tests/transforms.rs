use macp_core::dct::{dct2_ordered, PassOrder};
use macp_core::{dct2, idct2, DenseMatrix};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..24, 1usize..24).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| DenseMatrix::new(r, c, v).unwrap())
    })
}

fn pair() -> impl Strategy<Value = (DenseMatrix, DenseMatrix)> {
    (1usize..20, 1usize..20).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(-5.0f64..5.0, r * c),
            prop::collection::vec(-5.0f64..5.0, r * c),
        )
            .prop_map(move |(a, b)| (DenseMatrix::new(r, c, a).unwrap(), DenseMatrix::new(r, c, b).unwrap()))
    })
}

// Independent O(M²N²) evaluation of the orthonormal forward transform.
fn direct_dct2(x: &DenseMatrix) -> DenseMatrix {
    let (m, n) = x.shape();
    let s = |k: usize, len: usize| {
        if k == 0 {
            (1.0 / len as f64).sqrt()
        } else {
            (2.0 / len as f64).sqrt()
        }
    };
    DenseMatrix::from_fn(m, n, |u, v| {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..n {
                acc += x.get(i, j)
                    * (std::f64::consts::PI / m as f64 * (i as f64 + 0.5) * u as f64).cos()
                    * (std::f64::consts::PI / n as f64 * (j as f64 + 0.5) * v as f64).cos();
            }
        }
        s(u, m) * s(v, n) * acc
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip(x in matrix()) {
        prop_assert!(idct2(&dct2(&x)).max_abs_diff(&x).unwrap() < 1e-10);
        prop_assert!(dct2(&idct2(&x)).max_abs_diff(&x).unwrap() < 1e-10);
    }

    #[test]
    fn parseval(x in matrix()) {
        let e = x.sum_of_squares();
        let f = dct2(&x).sum_of_squares();
        prop_assert!((e - f).abs() <= 1e-12 * e.max(1e-300));
    }

    #[test]
    fn linearity((x, y) in pair(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let lhs = dct2(&x.scale(a).add(&y.scale(b)).unwrap());
        let rhs = dct2(&x).scale(a).add(&dct2(&y).scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn pass_order_is_irrelevant(x in matrix()) {
        let a = dct2_ordered(&x, PassOrder::RowsThenColumns);
        let b = dct2_ordered(&x, PassOrder::ColumnsThenRows);
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12 * (1.0 + x.sum_of_squares().sqrt()));
    }

    #[test]
    fn inverse_is_adjoint((g, x) in pair()) {
        let lhs = g.frobenius_dot(&idct2(&x)).unwrap();
        let rhs = dct2(&g).frobenius_dot(&x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn agrees_with_direct_summation(x in matrix()) {
        prop_assert!(dct2(&x).max_abs_diff(&direct_dct2(&x)).unwrap() < 1e-10);
    }
}

#[test]
fn ramp_compacts_into_low_frequencies() {
    let x = DenseMatrix::from_fn(32, 32, |i, j| (i + j) as f64).unwrap();
    let f = dct2(&x);
    let total = f.sum_of_squares();
    let mut low = 0.0;
    for u in 0..4 {
        for v in 0..4 {
            low += f.get(u, v).powi(2);
        }
    }
    assert!(low / total > 0.99);
}
