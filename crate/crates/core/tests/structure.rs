mod common;

use common::*;
use hypou::linalg::{from_rows, Matrix};
use hypou::structure::*;
use hypou::HypouError;
use proptest::prelude::*;

#[test]
fn bareiss_oracle_on_known_matrices() {
    assert_eq!(bareiss_rank(vec![vec![1, 2], vec![2, 4]]), 1);
    assert_eq!(bareiss_rank(vec![vec![0, 0, 3], vec![0, 0, 6]]), 1);
    assert_eq!(bareiss_rank(vec![vec![0, 1, 0], vec![1, 0, 0], vec![1, 1, 0]]), 2);
    assert_eq!(bareiss_rank(vec![vec![2, 1, 1], vec![1, 3, 2], vec![1, 0, 0]]), 3);
    assert_eq!(bareiss_rank(vec![vec![0; 4]; 3]), 0);
}

#[test]
fn kalman_sequence_matches_exact_oracle() {
    let mut r = rng(11);
    for _ in 0..300 {
        let (n, d0, a) = random_integer_system(&mut r);
        let b = b_matrix(n, d0);
        let exact = exact_kalman_sequence(&a, &b, n);
        let seq = kalman_rank_sequence(&from_rows(&to_f64(&a)).unwrap(), &from_rows(&to_f64(&b)).unwrap(), n).unwrap();
        assert_eq!(seq, exact, "A = {a:?}, d0 = {d0}");
    }
}

#[test]
fn chain_structures() {
    for n in 2..=5 {
        let bs = extract_block_structure(&OUSystem::chain(n)).unwrap();
        assert_eq!(bs.k, n - 1);
        assert_eq!(bs.block_sizes, vec![1; n - 1]);
        for (i, a) in bs.alphas.iter().enumerate() {
            assert!((a - 1.0 / (3.0 + 2.0 * i as f64)).abs() < 1e-15);
        }
    }
    let bs = extract_block_structure(&OUSystem::heat(3)).unwrap();
    assert_eq!((bs.k, bs.block_sizes.len()), (0, 0));
}

#[test]
fn wide_blocks_in_canonical_form() {
    // d0 = 2, d1 = 2, d2 = 1 with arbitrary entries on and above the diagonal blocks
    let a = from_rows(&[
        vec![0.3, -1.0, 0.0, 2.0, 0.5],
        vec![0.0, 0.1, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.7, 0.0],
        vec![0.5, 2.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0, 0.0],
    ])
    .unwrap();
    let sys = OUSystem::new(a, Matrix::identity(2, 2), 1.0).unwrap();
    let bs = extract_block_structure(&sys).unwrap();
    assert_eq!(bs.block_sizes, vec![2, 1]);
    assert_eq!(bs.range(1), 2..4);
    assert_eq!(bs.block_of(4), 2);
    assert!(!is_homogeneous_class(&sys, &bs));
}

#[test]
fn non_canonical_form_is_rejected() {
    // hypoelliptic but the third coordinate is driven by x directly
    let a = from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]).unwrap();
    let sys = OUSystem::new(a, Matrix::identity(1, 1), 1.0).unwrap();
    assert!(matches!(extract_block_structure(&sys), Err(HypouError::Structure { block: 2, .. })));
}

#[test]
fn invalid_inputs() {
    let a = from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
    assert!(matches!(OUSystem::new(a.clone(), Matrix::identity(1, 1), 1.0), Err(HypouError::NotHypoelliptic { rank: 1, n: 2 })));
    assert!(OUSystem::new_permissive(a.clone(), Matrix::identity(1, 1), 1.0).is_ok());
    assert!(matches!(OUSystem::new(a.clone(), Matrix::identity(1, 1), 0.0), Err(HypouError::InvalidSystem(_))));
    assert!(matches!(OUSystem::new(a.clone(), Matrix::identity(1, 1) * 3.0, 0.5), Err(HypouError::InvalidSystem(_))));
    assert!(matches!(OUSystem::new(a, Matrix::identity(3, 3), 1.0), Err(HypouError::DimensionMismatch(_))));
    let skew = from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
    assert!(OUSystem::new(Matrix::zeros(2, 2), skew, 0.5).is_err());
}

#[test]
fn report_rounds_exponents() {
    let r = structure_report(&OUSystem::kolmogorov()).unwrap();
    assert_eq!(r.alphas, vec![0.3333333333]);
    assert_eq!(r.k, Some(1));
}

fn dilate(z: &[f64], lam: f64, bs: &BlockStructure) -> Vec<f64> {
    (0..z.len()).map(|j| z[j] * lam.powi(2 * bs.block_of(j) as i32 + 1)).collect()
}

proptest! {
    #[test]
    fn distance_is_homogeneous_under_dilation(
        z in prop::collection::vec(-3.0f64..3.0, 3),
        w in prop::collection::vec(-3.0f64..3.0, 3),
        lam in 0.1f64..4.0,
    ) {
        let bs = extract_block_structure(&OUSystem::chain(3)).unwrap();
        let d = anisotropic_distance(&z, &w, &bs);
        let dl = anisotropic_distance(&dilate(&z, lam, &bs), &dilate(&w, lam, &bs), &bs);
        prop_assert!((dl - lam * d).abs() <= 1e-10 * (1.0 + lam * d));
        prop_assert!((anisotropic_distance(&w, &z, &bs) - d).abs() < 1e-14);
    }

    #[test]
    fn rank_sequence_is_monotone_and_saturates(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (n, d0, a) = random_integer_system(&mut r);
        let seq = kalman_rank_sequence(&from_rows(&to_f64(&a)).unwrap(), &from_rows(&to_f64(&b_matrix(n, d0))).unwrap(), n + 2).unwrap();
        prop_assert_eq!(seq[0], d0);
        prop_assert!(seq.windows(2).all(|w| w[0] <= w[1] && w[1] <= n));
        // once the rank stalls it stays put
        if let Some(i) = seq.windows(2).position(|w| w[0] == w[1]) {
            prop_assert!(seq[i..].iter().all(|&s| s == seq[i]));
        }
    }

    #[test]
    fn scale_matrix_is_multiplicative(u in 0.1f64..3.0, v in 0.1f64..3.0) {
        let bs = extract_block_structure(&OUSystem::chain(3)).unwrap();
        let prod = scale_matrix(u, &bs) * scale_matrix(v, &bs);
        prop_assert!((prod - scale_matrix(u * v, &bs)).amax() < 1e-12 * (u * v).powi(3).max(1.0));
    }
}
