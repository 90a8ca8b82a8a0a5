use dtnlab::linalg::sym_geneig;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[path = "support/jacobi.rs"]
mod jacobi;

use jacobi::{oracle, random_pair, Mat};

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn matches_jacobi_oracle(n in 1usize..=60, seed in any::<u64>()) {
        let (k, g) = random_pair(n, seed);
        let expected = oracle(&k, &g);
        let (kn, gn) = (to_na(&k), to_na(&g));
        let s = sym_geneig(&kn, &gn, n).unwrap();
        let scale = expected.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in s.eigenvalues.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-10 * scale, "n={n}: {a} vs {b}");
        }
        let gram = s.eigenvectors.transpose() * &gn * &s.eigenvectors;
        prop_assert!((gram - DMatrix::identity(n, n)).amax() <= 1e-8);
        prop_assert!(s.residual_max <= 1e-8);
        prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn thirty_by_thirty_reference() {
    let (k, g) = random_pair(30, 7);
    let expected = oracle(&k, &g);
    let s = sym_geneig(&to_na(&k), &to_na(&g), 5).unwrap();
    assert_eq!(s.len(), 5);
    for (a, b) in s.eigenvalues.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn deterministic_output() {
    let (k, g) = random_pair(20, 3);
    let a = sym_geneig(&to_na(&k), &to_na(&g), 20).unwrap();
    let b = sym_geneig(&to_na(&k), &to_na(&g), 20).unwrap();
    assert_eq!(a.eigenvalues, b.eigenvalues);
    assert_eq!(a.eigenvectors, b.eigenvectors);
}
