use proptest::prelude::*;
use scatterlab::haar::{sample_haar_unitary, RngStream};
use scatterlab::purity::mean_purity_pure;
use scatterlab::scattering::{apply_scattering, mc_average_state, mc_mean_purity, mc_mean_purity_pure, unconditional_state};
use scatterlab::states::{random_pure_state, StateFamily, StateSpec};
use scatterlab::tensor::{hermitian_deviation, partial_trace, trace_distance, CMatrix, DensityMatrix};
use scatterlab::{Subsystems, TripartiteDims};

fn random_density(d: usize, seed: u64) -> DensityMatrix {
    let a = random_pure_state(d, &RngStream::new(seed, 0)).unwrap().to_density();
    let b = random_pure_state(d, &RngStream::new(seed, 1)).unwrap().to_density();
    a.mix(&b, 0.35).unwrap()
}

fn dims_strategy() -> impl Strategy<Value = TripartiteDims> {
    (1usize..4, 1usize..4, 1usize..4).prop_map(|(a, b, c)| TripartiteDims::new(a, b, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn channel_is_linear(dims in dims_strategy(), seed in 0u64..10_000, alpha in 0.0f64..1.0) {
        let r1 = random_density(dims.total(), seed);
        let r2 = random_density(dims.total(), seed + 1);
        let u = sample_haar_unitary(dims.be(), &RngStream::new(seed, 9)).unwrap();
        let mixed = r1.mix(&r2, alpha).unwrap();
        let lhs = apply_scattering(&mixed, &u, dims).unwrap();
        let o1 = apply_scattering(&r1, &u, dims).unwrap();
        let o2 = apply_scattering(&r2, &u, dims).unwrap();
        let rhs: CMatrix = o1.matrix().scale(alpha) + o2.matrix().scale(1.0 - alpha);
        prop_assert!((lhs.matrix() - rhs).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn outputs_are_states(dims in dims_strategy(), seed in 0u64..10_000) {
        let rho = random_density(dims.total(), seed);
        let u = sample_haar_unitary(dims.be(), &RngStream::new(seed, 3)).unwrap();
        let out = apply_scattering(&rho, &u, dims).unwrap();
        prop_assert!((out.matrix().trace().re - 1.0).abs() < 1e-10);
        prop_assert!(hermitian_deviation(out.matrix()) < 1e-10);
        prop_assert!(out.validate().is_ok());
    }
}

#[test]
fn decoupling_at_the_largest_tested_dims() {
    let dims = TripartiteDims::new(4, 4, 8).unwrap();
    for (k, family) in [StateFamily::Product, StateFamily::RandomPure].into_iter().enumerate() {
        let rho = StateSpec::new(family).seed(70 + k as u64).build(dims).unwrap().to_density();
        let est = mc_average_state(&rho, dims, 20_000, &RngStream::new(71, k as u64)).unwrap();
        assert!(est.trace_distance < 0.05, "{family:?}: {}", est.trace_distance);
        // The inner marginal of the average is the inner marginal of the input.
        let inner_avg = partial_trace(&est.state, dims.reduced(Subsystems::IB), Subsystems::I).unwrap();
        let inner_in = partial_trace(&rho, dims, Subsystems::I).unwrap();
        assert!(trace_distance(&inner_avg, &inner_in).unwrap() < 1e-10);
        // The exact average is rho_I ⊗ 1/d_B.
        let exact = unconditional_state(&rho, dims).unwrap();
        let want = inner_in.tensor(&DensityMatrix::maximally_mixed(4).unwrap()).unwrap();
        assert!((exact.matrix() - want.matrix()).iter().all(|z| z.norm() < 1e-12));
    }
}

#[test]
fn average_does_not_depend_on_thread_count() {
    let dims = TripartiteDims::new(2, 2, 3).unwrap();
    let rho = random_density(dims.total(), 80);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_average_state(&rho, dims, 3000, &RngStream::new(81, 0)).unwrap())
    };
    let one = run(1);
    for t in [2, 3, 8] {
        let other = run(t);
        assert_eq!(one.state.matrix(), other.state.matrix());
    }
}

#[test]
fn monte_carlo_purity_matches_closed_form_on_random_states() {
    // 200 random pure inputs: 100 at (2,2,2) on the full-unitary path and
    // 100 at (2,2,4) on the isometry path.
    let mut worst = 0.0f64;
    for k in 0..200u64 {
        let dims = if k < 100 { TripartiteDims::new(2, 2, 2) } else { TripartiteDims::new(2, 2, 4) }.unwrap();
        let psi = random_pure_state(dims.total(), &RngStream::new(90, k)).unwrap();
        let want = mean_purity_pure(&psi, dims).unwrap();
        let est = if k < 100 {
            mc_mean_purity(&psi.to_density(), dims, 10_000, &RngStream::new(91, k)).unwrap()
        } else {
            mc_mean_purity_pure(&psi, dims, 10_000, &RngStream::new(91, k)).unwrap()
        };
        worst = worst.max(est.z_score(want).abs());
    }
    assert!(worst <= 4.0, "max |z| = {worst}");
}
