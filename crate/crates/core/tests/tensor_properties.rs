use proptest::prelude::*;
use scatterlab::haar::{sample_haar_unitary, RngStream};
use scatterlab::states::random_pure_state;
use scatterlab::tensor::{
    hermitian_eigenvalues, kron, partial_trace, partial_trace_matrix, purity, reduced_pure, schmidt, trace_norm,
    CMatrix, DensityMatrix,
};
use scatterlab::{Subsystems, TripartiteDims};

fn random_density(d: usize, rank: usize, seed: u64) -> DensityMatrix {
    let mut m = CMatrix::zeros(d, d);
    let mut total = 0.0;
    for k in 0..rank {
        let w = (k + 1) as f64;
        total += w;
        let psi = random_pure_state(d, &RngStream::new(seed, k as u64)).unwrap();
        m += psi.to_density().into_matrix().scale(w);
    }
    DensityMatrix::new(m.unscale(total)).unwrap()
}

fn random_hermitian(d: usize, seed: u64) -> CMatrix {
    let a = random_density(d, 2, seed).into_matrix();
    let b = random_density(d, 3, seed + 1).into_matrix();
    a - b.scale(0.7)
}

fn dims_strategy() -> impl Strategy<Value = TripartiteDims> {
    (1usize..4, 1usize..4, 1usize..4).prop_map(|(a, b, c)| TripartiteDims::new(a, b, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sequential_partial_traces_give_the_trace(dims in dims_strategy(), seed in 0u64..10_000, order in 0usize..6) {
        let rho = random_density(dims.total(), 2, seed);
        let orders = [
            [Subsystems::I, Subsystems::B, Subsystems::E],
            [Subsystems::I, Subsystems::E, Subsystems::B],
            [Subsystems::B, Subsystems::I, Subsystems::E],
            [Subsystems::B, Subsystems::E, Subsystems::I],
            [Subsystems::E, Subsystems::I, Subsystems::B],
            [Subsystems::E, Subsystems::B, Subsystems::I],
        ];
        // Tracing out one factor at a time, tracking which factors remain.
        let mut m = rho.matrix().clone();
        let mut remaining = Subsystems::ALL;
        for drop in orders[order] {
            let current = dims.reduced(remaining);
            remaining = remaining.without_all(drop);
            let keep = Subsystems::ALL.without_all(drop);
            m = partial_trace_matrix(&m, current, keep).unwrap();
        }
        prop_assert_eq!(m.nrows(), 1);
        prop_assert!((m[(0, 0)].re - 1.0).abs() < 1e-10 && m[(0, 0)].im.abs() < 1e-10);
    }

    #[test]
    fn partial_trace_undoes_kron(da in 1usize..5, db in 1usize..5, seed in 0u64..10_000) {
        let a = random_density(da, 2, seed);
        let b = random_density(db, 2, seed + 100);
        let joint = DensityMatrix::new(kron(a.matrix(), b.matrix()).unwrap()).unwrap();
        let dims = TripartiteDims::new(da, db, 1).unwrap();
        let back = partial_trace(&joint, dims, Subsystems::I).unwrap();
        prop_assert!((back.matrix() - a.matrix()).camax() < 1e-10);
        let back_b = partial_trace(&joint, dims, Subsystems::B).unwrap();
        prop_assert!((back_b.matrix() - b.matrix()).camax() < 1e-10);
    }

    #[test]
    fn trace_norm_triangle_and_unitary_invariance(d in 1usize..7, seed in 0u64..10_000) {
        let m = random_hermitian(d, seed);
        let n = random_hermitian(d, seed + 7);
        let lhs = trace_norm(&(&m + &n)).unwrap();
        prop_assert!(lhs <= trace_norm(&m).unwrap() + trace_norm(&n).unwrap() + 1e-9);
        let u = sample_haar_unitary(d, &RngStream::new(seed, 99)).unwrap();
        let conj = &u * &m * u.adjoint();
        prop_assert!((trace_norm(&conj).unwrap() - trace_norm(&m).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn purity_range_and_invariance(d in 1usize..8, rank in 1usize..4, seed in 0u64..10_000) {
        let rho = random_density(d, rank, seed);
        let p = purity(&rho);
        prop_assert!(p >= 1.0 / d as f64 - 1e-12 && p <= 1.0 + 1e-12);
        let u = sample_haar_unitary(d, &RngStream::new(seed, 5)).unwrap();
        let rotated = DensityMatrix::new(&u * rho.matrix() * u.adjoint()).unwrap();
        prop_assert!((purity(&rotated) - p).abs() < 1e-10);
    }

    #[test]
    fn schmidt_squares_are_reduced_eigenvalues(da in 1usize..6, db in 1usize..6, seed in 0u64..10_000) {
        let psi = random_pure_state(da * db, &RngStream::new(seed, 0)).unwrap();
        let spectrum = schmidt(&psi, da, db).unwrap();
        let dims = TripartiteDims::new(da, db, 1).unwrap();
        let rho_a = reduced_pure(&psi, dims, Subsystems::I).unwrap();
        let mut eig: Vec<f64> = hermitian_eigenvalues(rho_a.matrix()).into_iter().filter(|&x| x > 1e-12).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sq: Vec<f64> = spectrum.coefficients().iter().map(|c| c * c).collect();
        prop_assert_eq!(sq.len(), eig.len());
        for (s, e) in sq.iter().zip(&eig) {
            prop_assert!((s - e).abs() < 1e-9);
        }
    }
}

#[test]
fn flat_index_convention() {
    let dims = TripartiteDims::new(3, 4, 5).unwrap();
    for i in 0..3 {
        for b in 0..4 {
            for e in 0..5 {
                let k = dims.index(i, b, e);
                assert_eq!(k, i * 20 + b * 5 + e);
                assert_eq!(dims.split(k), (i, b, e));
            }
        }
    }
}
