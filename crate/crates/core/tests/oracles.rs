use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng as _;
use vfl_core::dp::{calibrate_sigma, moments_division_eps, simple_division_eps, MomentMode, PartyBudget};
use vfl_core::nat::{hungarian, pca_fit};
use vfl_core::rng::rng_for;
use vfl_core::DenseMatrix;

#[test]
fn pca_matches_nalgebra_eigendecomposition() {
    let mut rng = rng_for(11, 0);
    for trial in 0..10 {
        let (n, m) = (40 + trial, 3 + trial % 4);
        let data: Vec<f64> = (0..n * m)
            .map(|i| rng.random_range(-1.0..1.0) * (1 + i % m) as f64)
            .collect();
        let x = DenseMatrix::from_vec(n, m, data.clone()).unwrap();
        let d = m - 1;
        let model = pca_fit(&x, d).unwrap();

        let xm = DMatrix::from_row_slice(n, m, &data);
        let mean = xm.row_mean();
        let centered = DMatrix::from_fn(n, m, |r, c| xm[(r, c)] - mean[c]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        for (row, &k) in order.iter().take(d).enumerate() {
            approx::assert_relative_eq!(model.eigenvalues[row], eig.eigenvalues[k], epsilon = 1e-9);
            let dot: f64 = (0..m)
                .map(|i| model.components.get(row, i) * eig.eigenvectors[(i, k)])
                .sum();
            approx::assert_relative_eq!(dot.abs(), 1.0, epsilon = 1e-7);
        }
    }
}

fn parties(k: usize, q: f64, sigma: f64, steps: u64) -> Vec<PartyBudget> {
    (0..k).map(|party| PartyBudget { party, q, sigma, steps }).collect()
}

proptest! {
    // The exact moment integrals are slow; keep case counts small.
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn moments_division_never_exceeds_simple(
        q in 1e-4f64..0.02, sigma in 0.6f64..4.0, steps in 1u64..3000, k in 1usize..12,
    ) {
        let p = parties(k, q, sigma, steps);
        let m = moments_division_eps(&p, 1e-5, MomentMode::Exact).unwrap().epsilon;
        let s = simple_division_eps(&p, 1e-5, MomentMode::Exact).unwrap().epsilon;
        prop_assert!(m <= s * (1.0 + 1e-12));
    }

    #[test]
    fn epsilon_grows_with_parties_and_shrinks_with_noise(
        q in 1e-3f64..0.01, sigma in 0.8f64..3.0, steps in 10u64..2000,
    ) {
        let eps = |k, s| moments_division_eps(&parties(k, q, s, steps), 1e-5, MomentMode::Exact).unwrap().epsilon;
        prop_assert!(eps(3, sigma) >= eps(2, sigma));
        prop_assert!(eps(2, sigma * 1.5) <= eps(2, sigma));
    }

    #[test]
    fn calibrated_sigma_meets_target(target in 1.0f64..10.0, k in 1usize..4) {
        let (q, steps) = (0.01, 500u64);
        let sigma = calibrate_sigma(target, 1e-5, q, &vec![steps; k]).unwrap();
        let eps = moments_division_eps(&parties(k, q, sigma, steps), 1e-5, MomentMode::Exact).unwrap().epsilon;
        prop_assert!(eps <= target);
    }

}

proptest! {
    #[test]
    fn hungarian_beats_every_swap(m in 2usize..12, seed in any::<u64>()) {
        let mut rng = rng_for(seed, 1);
        let c = DenseMatrix::from_vec(m, m, (0..m * m).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let a = hungarian(&c).unwrap();
        let cost = |cols: &[usize]| cols.iter().enumerate().map(|(r, &k)| c.get(r, k)).sum::<f64>();
        let base = cost(&a.cols);
        for i in 0..m {
            for j in i + 1..m {
                let mut cols = a.cols.clone();
                cols.swap(i, j);
                prop_assert!(base <= cost(&cols) + 1e-12);
            }
        }
    }
}
