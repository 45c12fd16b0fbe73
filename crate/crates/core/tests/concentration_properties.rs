use scatterlab::concentration::{
    distance_samples, empirical_tail, lipschitz_witness, scattering_levy_bound, tail_report,
};
use scatterlab::haar::{sample_unit_vector, RngStream};
use scatterlab::tensor::{DensityMatrix, StateVector};
use scatterlab::TripartiteDims;

#[test]
fn tails_at_small_and_large_environments() {
    let rho = DensityMatrix::diagonal(&[0.6, 0.4]).unwrap();
    let r = empirical_tail(&rho, TripartiteDims::new(2, 2, 8).unwrap(), 0.5, 10_000, &RngStream::new(1, 0)).unwrap();
    assert!(r.consistent(), "{r:?}");
    let r = empirical_tail(&rho, TripartiteDims::new(2, 2, 512).unwrap(), 0.3, 10_000, &RngStream::new(1, 1)).unwrap();
    assert_eq!(r.empirical_tail, Some(0.0));
    assert!((r.bound - 2.0 * (-92.16f64 / 558.06).exp()).abs() < 1e-3);
}

#[test]
fn distances_do_not_depend_on_the_inner_state() {
    let dims = TripartiteDims::new(3, 2, 4).unwrap();
    let stream = RngStream::new(2, 0);
    let a = distance_samples(&DensityMatrix::maximally_mixed(3).unwrap(), dims, 200, &stream).unwrap();
    let b = distance_samples(&DensityMatrix::diagonal(&[1.0, 0.0, 0.0]).unwrap(), dims, 200, &stream).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn tail_is_monotone_in_epsilon() {
    let dims = TripartiteDims::new(2, 2, 4).unwrap();
    let samples = distance_samples(&DensityMatrix::maximally_mixed(2).unwrap(), dims, 5000, &RngStream::new(3, 0)).unwrap();
    let mut prev = 1.0;
    for eps in [0.01, 0.05, 0.1, 0.2, 0.4] {
        let r = tail_report(scattering_levy_bound(2, 4, eps).unwrap(), &samples);
        let t = r.empirical_tail.unwrap();
        assert!(t <= prev);
        prev = t;
    }
}

#[test]
fn lipschitz_holds_for_nearby_pairs() {
    let dims = TripartiteDims::new(1, 3, 5).unwrap();
    for k in 0..2000u64 {
        let phi = sample_unit_vector(15, &RngStream::new(4, k)).unwrap();
        let step = sample_unit_vector(15, &RngStream::new(5, k)).unwrap();
        let t = 10f64.powi(-((k % 8) as i32));
        let p1 = StateVector::new(phi.clone()).unwrap();
        let p2 = StateVector::normalized(phi + step * scatterlab::C64::new(t, 0.0)).unwrap();
        let (lhs, rhs) = lipschitz_witness(&p1, &p2, dims).unwrap();
        assert!(lhs <= rhs + 1e-15, "k = {k}: {lhs} > {rhs}");
    }
}
