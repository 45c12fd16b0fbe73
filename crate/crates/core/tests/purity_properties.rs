use proptest::prelude::*;
use scatterlab::haar::RngStream;
use scatterlab::purity::{
    delta_gamma, delta_gamma_fast, delta_gamma_naive, mean_purity_from_cross_weight, mean_purity_ghz,
    mean_purity_limit, mean_purity_max_entangled, mean_purity_product, mean_purity_pure, mean_purity_w,
    NAIVE_DELTA_GAMMA_MAX_DIM,
};
use scatterlab::states::{ghz, random_pure_state, w};
use scatterlab::TripartiteDims;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginal_form_equals_quadruple_sum(a in 1usize..5, b in 1usize..4, c in 1usize..4, seed in 0u64..100_000) {
        let dims = TripartiteDims::new(a, b, c).unwrap();
        let psi = random_pure_state(dims.total(), &RngStream::new(seed, 0)).unwrap();
        let slow = delta_gamma_naive(&psi, dims).unwrap();
        let fast = delta_gamma_fast(&psi, dims).unwrap();
        prop_assert!((slow.delta - fast.delta).abs() < 1e-12);
        prop_assert!((slow.gamma - fast.gamma).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_lie_in_unit_interval(b in 1u32..40, e in 1u32..100, x in 0.0f64..1.0) {
        let (d_b, d_e) = (b as u128, e as u128);
        // Δ - Γ = 1 - Tr rho_I^2 never exceeds 1 - 1/d_B.
        let x = x * (1.0 - 1.0 / d_b as f64);
        if d_b * d_e >= 2 {
            let v = mean_purity_from_cross_weight(x, d_b, d_e).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0 + 1e-15, "{}", v);
        }
        let p = mean_purity_product(d_b, d_e).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        let m = mean_purity_max_entangled(d_b, d_e).unwrap();
        prop_assert!(m > 0.0 && m <= 1.0 + 1e-15);
    }
}

#[test]
fn auto_dispatch_switches_above_the_naive_limit() {
    let dims = TripartiteDims::from_qubits(2, 5, 6).unwrap();
    assert!(dims.total() > NAIVE_DELTA_GAMMA_MAX_DIM);
    let psi = random_pure_state(dims.total(), &RngStream::new(1, 1)).unwrap();
    let auto = delta_gamma(&psi, dims).unwrap();
    let fast = delta_gamma_fast(&psi, dims).unwrap();
    assert_eq!(auto, fast);
}

#[test]
fn mean_purity_decreases_toward_the_large_environment_limit() {
    for k in 0..20u64 {
        let (n_i, n_b) = [(1, 1), (1, 2), (2, 1), (2, 2)][(k % 4) as usize];
        let sys = TripartiteDims::from_qubits(n_i, n_b, 0).unwrap();
        let psi_sys = random_pure_state(sys.total(), &RngStream::new(2, k)).unwrap();
        let x = delta_gamma(&psi_sys, sys).unwrap().difference();
        let limit = mean_purity_limit(&psi_sys, sys).unwrap();
        let d_b = sys.d_b() as u128;
        let mut prev = f64::INFINITY;
        for n_e in 1..=14u32 {
            let v = mean_purity_from_cross_weight(x, d_b, 1u128 << n_e).unwrap();
            assert!(v < prev, "not decreasing at N_E = {n_e}");
            assert!(v >= limit - 1e-15);
            if n_e >= 10 {
                assert!(v - limit < 1e-3);
            }
            prev = v;
        }
    }
}

#[test]
fn simulated_environment_agrees_with_abstract_environment() {
    // Evaluate on an actual vacuum-extended state and with d_E as a bare integer.
    let psi_sys = random_pure_state(8, &RngStream::new(3, 0)).unwrap();
    for n_e in 0..4u32 {
        let psi = scatterlab::states::fiducial_extend(&psi_sys, n_e).unwrap();
        let dims = TripartiteDims::from_qubits(1, 2, n_e).unwrap();
        let x = delta_gamma(&psi_sys, TripartiteDims::from_qubits(1, 2, 0).unwrap()).unwrap().difference();
        let abstract_env = mean_purity_from_cross_weight(x, 4, 1u128 << n_e).unwrap();
        assert!((mean_purity_pure(&psi, dims).unwrap() - abstract_env).abs() < 1e-12);
    }
}

#[test]
fn ghz_and_w_formulas_match_the_general_formula() {
    for n in 3..=8u32 {
        for n_i in 1..n - 1 {
            for n_b in 1..n - n_i {
                let dims = TripartiteDims::from_qubits(n_i, n_b, n - n_i - n_b).unwrap();
                let g = mean_purity_pure(&ghz(n).unwrap(), dims).unwrap();
                assert!((g - mean_purity_ghz(n, n_i, n_b).unwrap()).abs() < 1e-12);
                let wv = mean_purity_pure(&w(n).unwrap(), dims).unwrap();
                assert!((wv - mean_purity_w(n, n_i, n_b).unwrap()).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn closed_forms_at_astronomical_environment_sizes() {
    let v = mean_purity_ghz(100, 1, 2).unwrap();
    assert!((v - 0.125).abs() < 1e-15);
    let v = mean_purity_w(100, 1, 2).unwrap();
    let x = 2.0 * 99.0 / 10_000.0;
    assert!((v - (1.0 - x) / 4.0).abs() < 1e-15);
    assert!(mean_purity_ghz(200, 1, 2).is_err());
}
