use blochmps::analysis::{branch_state, Backbone};
use blochmps::excitations::{
    assemble_effective, dispersion, expected_null_dimension, parity_effective, relabel, solve_fixed_momentum,
    DispersionOptions, DEFAULT_EPS,
};
use blochmps::linalg::{c64, CMatrix};
use blochmps::models::{apply_y_parity, heisenberg_model, heisenberg_transformed, ising_model};
use blochmps::mps::network::compute_network_set;
use blochmps::mps::state::StateVector;
use blochmps::mps::tensor::SiteTensor;
use blochmps::mps::transfer::normalize_dominant;
use blochmps::oracles::{
    canonical_angle_distance, ed_spectrum, ising_exact_spectrum, momentum_of_state, EdOptions, Window,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn isometry(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    random_matrix(rows, cols, rng).qr().q()
}

fn backbone(seed: u64, bond: usize) -> SiteTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    normalize_dominant(&SiteTensor::random(2, bond, &mut rng)).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonical_angles_symmetric_and_unitarily_invariant(seed in any::<u64>(), dim in 3usize..9, cols in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = isometry(dim, cols, &mut rng);
        let v = isometry(dim, cols, &mut rng);
        let w = isometry(dim, dim, &mut rng);
        let d = canonical_angle_distance(&u, &v).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - canonical_angle_distance(&v, &u).unwrap()).abs() < 1e-10);
        prop_assert!((d - canonical_angle_distance(&(&w * &u), &(&w * &v)).unwrap()).abs() < 1e-10);
        prop_assert!(canonical_angle_distance(&u, &u).unwrap() < 1e-7);
    }

    #[test]
    fn relabeling_is_an_involution(half in 1usize..10, k in 0usize..40, odd in any::<bool>()) {
        let n = 2 * half;
        let p = if odd { -1 } else { 1 };
        let k = k % n;
        prop_assert_eq!(relabel(relabel(k, p, n), p, n), k);
        prop_assert_eq!(relabel(k, 1, n), k);
    }

    #[test]
    fn branches_are_metric_orthonormal(seed in any::<u64>(), bond in 1usize..3, n in 5usize..8, g in 0.2f64..1.8) {
        let a = backbone(seed, bond);
        let set = compute_network_set(&a, &ising_model(g).h01, None, n, false, None).unwrap();
        for k in 0..n {
            let pair = assemble_effective(&set, None, k).unwrap();
            let block = solve_fixed_momentum(&pair, DEFAULT_EPS, 2, bond, None).unwrap();
            prop_assert_eq!(block.discarded, expected_null_dimension(2, bond, k));
            let v = CMatrix::from_columns(&block.branches.iter().map(|b| b.vector.clone()).collect::<Vec<_>>());
            let gram = v.adjoint() * pair.n_eff.matrix() * &v;
            let dev = (gram - CMatrix::identity(v.ncols(), v.ncols())).norm();
            prop_assert!(dev < 1e-6, "k={} deviation {:e}", k, dev);
        }
    }

    #[test]
    fn branch_states_have_exact_momentum(seed in any::<u64>(), n in 3usize..7) {
        let a = backbone(seed, 2);
        let res = dispersion(&heisenberg_model(), &a, n, 2, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        for k in 0..n {
            for i in 0..2 {
                let psi = branch_state(&res, Backbone::Single(&a), k, i).unwrap();
                let (km, resid) = momentum_of_state(&psi);
                prop_assert_eq!(km, k);
                prop_assert!(resid < 1e-9);
            }
        }
    }

    #[test]
    fn product_shift_enters_linearly(seed in any::<u64>(), lambda in 0.05f64..2.0, n in 2usize..5) {
        let n = 2 * n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1 << n).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let psi = StateVector::from_amplitudes(2, n, amps).unwrap();
        let base = heisenberg_transformed(0.0, 1).apply(&psi);
        let py = apply_y_parity(&psi);
        for sign in [1i8, -1] {
            let shifted = heisenberg_transformed(lambda, sign).apply(&psi);
            let mut expect = base.clone();
            expect.axpy(c64(sign as f64 * lambda, 0.0), &py);
            let mut diff = shifted.clone();
            diff.axpy(c64(-1.0, 0.0), &expect);
            prop_assert!(diff.norm_sqr().sqrt() < 1e-12 * (1.0 + expect.norm_sqr().sqrt()));
        }
    }

    #[test]
    fn effective_shift_matches_parity_form(seed in any::<u64>(), lambda in 0.05f64..2.0) {
        let n = 6;
        let a = backbone(seed, 2);
        let model = heisenberg_transformed(lambda, -1);
        let p = model.perturbation.as_ref().unwrap();
        let set = compute_network_set(&a, &model.h01, Some(&p.op), n, false, None).unwrap();
        for k in 0..n {
            let with = assemble_effective(&set, Some(p.strength), k).unwrap();
            let without = assemble_effective(&set, None, k).unwrap();
            let pe = parity_effective(&set, k).unwrap();
            let diff = with.h_eff.matrix() - without.h_eff.matrix() - pe * c64(p.strength, 0.0);
            prop_assert!(diff.norm() < 1e-10 * (1.0 + with.h_eff.matrix().norm()));
        }
    }

    #[test]
    fn branches_bound_exact_levels(seed in any::<u64>(), g in 0.2f64..1.8) {
        let n = 8;
        let model = ising_model(g);
        let a = backbone(seed, 2);
        let res = dispersion(&model, &a, n, 3, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        let ed = ed_spectrum(&model, n, &EdOptions::default()).unwrap();
        for block in &res.blocks {
            let levels = ed.at_momentum(block.k);
            for (i, br) in block.branches.iter().enumerate() {
                prop_assert!(br.energy >= levels[i].energy - 1e-9, "k={} branch {} below exact level", block.k, i);
            }
        }
    }

    #[test]
    fn ising_solution_matches_diagonalization(g in -2.0f64..2.0, half in 1usize..4) {
        let n = 2 * half;
        let exact = ising_exact_spectrum(g, n, Window::All).unwrap();
        let ed = ed_spectrum(&ising_model(g), n, &EdOptions::default()).unwrap();
        prop_assert_eq!(exact.levels.len(), ed.levels.len());
        for (x, y) in exact.levels.iter().zip(&ed.levels) {
            prop_assert!((x.energy - y.energy).abs() < 1e-9);
        }
    }

    #[test]
    fn dispersion_is_deterministic(seed in any::<u64>()) {
        let a = backbone(seed, 2);
        let model = ising_model(0.7);
        let r1 = dispersion(&model, &a, 6, 2, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        let r2 = dispersion(&model, &a, 6, 2, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        prop_assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
    }
}
