//! Tail bounds on how far a single scattered state strays from the Haar average,
//! and Monte Carlo estimates of the same tails.
//!
//! For separable inputs `rho_I ⊗ |phi><phi|_BE` with `phi` uniform on the unit
//! sphere of `B ⊗ E`, the conditional state is `rho_I ⊗ Tr_E |phi><phi|` and its
//! distance to the average `rho_I ⊗ 1/d_B` is `f(phi) = ||Tr_E |phi><phi| - 1/d_B||_1`.
//! `f` is 2-Lipschitz on a real sphere of dimension `2 d_B d_E - 1`, which gives
//!
//! ```text
//! P[ f >= eps + sqrt((d_B^2 - 1) / (d_B d_E + 1)) ] <= 2 exp(-d_B d_E eps^2 / (18 pi^3)).
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dims::{check_cap, TripartiteDims};
use crate::error::{Result, ScatterError};
use crate::haar::{sample_unit_vector, RngStream};
use crate::scattering::PureScatterer;
use crate::stats::{par_collect, MonteCarloEstimate, Welford};
use crate::tensor::{kron, trace_norm, CMatrix, CVector, DensityMatrix, StateVector, C64};

/// Largest allowed gap between the factored and full distance evaluations.
pub const FACTORED_DISTANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyBoundReport {
    pub epsilon: f64,
    /// Upper bound on the mean distance, added to `epsilon` to form the threshold.
    pub offset: f64,
    pub bound: f64,
    pub empirical_tail: Option<f64>,
    pub n_samples: Option<u64>,
}

impl LevyBoundReport {
    /// Distance at which the tail is measured.
    pub fn threshold(&self) -> f64 {
        self.epsilon + self.offset
    }

    /// One-sided binomial standard error of the empirical tail.
    pub fn tail_standard_error(&self) -> Option<f64> {
        let (p, n) = (self.empirical_tail?, self.n_samples?);
        Some((p * (1.0 - p) / n as f64).sqrt())
    }

    /// `tail <= bound + 3 SE`; vacuously true without an empirical tail.
    pub fn consistent(&self) -> bool {
        match (self.empirical_tail, self.tail_standard_error()) {
            (Some(p), Some(se)) => p <= self.bound + 3.0 * se,
            _ => true,
        }
    }
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ScatterError::param(name, format!("must be positive, got {x}")))
    }
}

/// `2 exp(-(d + 1) eps^2 / (9 pi^3 eta^2))` for an `eta`-Lipschitz function on the
/// `d`-sphere.
pub fn levy_generic(d: u128, epsilon: f64, eta: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    check_positive("eta", eta)?;
    if d == 0 {
        return Err(ScatterError::param("d", "must be >= 1"));
    }
    Ok(2.0 * (-(d as f64 + 1.0) * epsilon * epsilon / (9.0 * PI.powi(3) * eta * eta)).exp())
}

/// Levy bound on the real sphere of `B ⊗ E` pure states: dimension `2 d_B d_E - 1`,
/// which makes the exponent `2 d_B d_E eps^2 / (9 pi^3 eta^2)`.
pub fn levy_sphere_bound(d_b: u128, d_e: u128, epsilon: f64, eta: f64) -> Result<f64> {
    if d_b == 0 || d_e == 0 {
        return Err(ScatterError::InvalidDims("d_B and d_E must be >= 1".into()));
    }
    levy_generic(2 * d_b * d_e - 1, epsilon, eta)
}

/// `sqrt((d_B^2 - 1) / (d_B d_E + 1))`, an upper bound on `E ||Tr_E |phi><phi| - 1/d_B||_1`.
pub fn mean_distance_upper_bound(d_b: u128, d_e: u128) -> f64 {
    let (b, e) = (d_b as f64, d_e as f64);
    ((b - 1.0) * (b + 1.0) / (b * e + 1.0)).sqrt()
}

/// Analytic tail bound for the scattered distance at deviation `epsilon`.
pub fn scattering_levy_bound(d_b: u128, d_e: u128, epsilon: f64) -> Result<LevyBoundReport> {
    check_positive("epsilon", epsilon)?;
    if d_b == 0 || d_e == 0 {
        return Err(ScatterError::InvalidDims("d_B and d_E must be >= 1".into()));
    }
    let d = d_b as f64 * d_e as f64;
    Ok(LevyBoundReport {
        epsilon,
        offset: mean_distance_upper_bound(d_b, d_e),
        bound: 2.0 * (-d * epsilon * epsilon / (18.0 * PI.powi(3))).exp(),
        empirical_tail: None,
        n_samples: None,
    })
}

fn boundary_marginal(phi: &CVector, d_b: usize, d_e: usize) -> CMatrix {
    // Row b of the coefficient matrix holds the environment amplitudes of |b>.
    let m = CMatrix::from_fn(d_b, d_e, |b, e| phi[b * d_e + e]);
    &m * m.adjoint()
}

fn shifted_by_identity(m: &CMatrix, d_b: usize) -> CMatrix {
    m - CMatrix::identity(d_b, d_b).scale(1.0 / d_b as f64)
}

/// `||Tr_E |phi><phi| - 1/d_B||_1` for a unit vector on `B ⊗ E`.
pub fn boundary_distance(phi: &StateVector, d_b: usize, d_e: usize) -> Result<f64> {
    ScatterError::check_dim(d_b * d_e, phi.dim())?;
    trace_norm(&shifted_by_identity(&boundary_marginal(phi.amplitudes(), d_b, d_e), d_b))
}

/// `||rho_I ⊗ (Tr_E |phi><phi| - 1/d_B)||_1` evaluated on the full `I ⊗ B` space.
fn full_distance(rho_i: &DensityMatrix, sigma_shift: &CMatrix) -> Result<f64> {
    trace_norm(&kron(rho_i.matrix(), sigma_shift)?)
}

/// Scattered distances for `n` draws of `phi`, draw `k` on `root.child(k)`.
///
/// Each draw evaluates the distance both on `I ⊗ B` and in the factored form
/// (the trace norm is multiplicative and `||rho_I||_1 = 1`) and fails if they disagree.
pub fn distance_samples(rho_i: &DensityMatrix, dims: TripartiteDims, n: u64, root: &RngStream) -> Result<Vec<f64>> {
    ScatterError::check_dim(dims.d_i(), rho_i.dim())?;
    check_cap(dims.ib())?;
    let (d_b, d_e) = (dims.d_b(), dims.d_e());
    par_collect(n as usize, |k| {
        let phi = sample_unit_vector(d_b * d_e, &root.child(k as u64))?;
        let shift = shifted_by_identity(&boundary_marginal(&phi, d_b, d_e), d_b);
        let factored = trace_norm(&shift)?;
        let full = full_distance(rho_i, &shift)?;
        if (factored - full).abs() > FACTORED_DISTANCE_TOL {
            return Err(ScatterError::Inconsistent(format!(
                "factored distance {factored} differs from full distance {full}"
            )));
        }
        Ok(factored)
    })
}

/// Fraction of draws whose distance reaches `epsilon + offset`, alongside the analytic bound.
pub fn empirical_tail(
    rho_i: &DensityMatrix,
    dims: TripartiteDims,
    epsilon: f64,
    n: u64,
    stream: &RngStream,
) -> Result<LevyBoundReport> {
    if n < 1 {
        return Err(ScatterError::param("n", "need at least 1 sample"));
    }
    let report = scattering_levy_bound(dims.d_b() as u128, dims.d_e() as u128, epsilon)?;
    let samples = distance_samples(rho_i, dims, n, stream)?;
    Ok(tail_report(report, &samples))
}

/// Fills the empirical part of `report` from precomputed distances.
pub fn tail_report(mut report: LevyBoundReport, distances: &[f64]) -> LevyBoundReport {
    let threshold = report.threshold();
    let hits = distances.iter().filter(|&&x| x >= threshold).count();
    report.empirical_tail = Some(hits as f64 / distances.len().max(1) as f64);
    report.n_samples = Some(distances.len() as u64);
    report
}

/// Monte Carlo estimate of `E ||Tr_E |phi><phi| - 1/d_B||_1` over `n >= 2` draws.
pub fn mc_mean_distance(d_b: usize, d_e: usize, n: u64, stream: &RngStream) -> Result<MonteCarloEstimate> {
    let dims = TripartiteDims::new(1, d_b, d_e)?;
    let one = DensityMatrix::maximally_mixed(1)?;
    let samples = distance_samples(&one, dims, n, stream)?;
    samples.into_iter().collect::<Welford>().estimate()
}

/// `(|f(phi_1) - f(phi_2)|, 2 ||phi_1 - phi_2||)` with `f` the scattered distance.
pub fn lipschitz_witness(phi1: &StateVector, phi2: &StateVector, dims: TripartiteDims) -> Result<(f64, f64)> {
    ScatterError::check_dim(phi1.dim(), phi2.dim())?;
    let (d_b, d_e) = (dims.d_b(), dims.d_e());
    let lhs = (boundary_distance(phi1, d_b, d_e)? - boundary_distance(phi2, d_b, d_e)?).abs();
    let rhs = 2.0 * (phi1.amplitudes() - phi2.amplitudes()).norm();
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSearch {
    pub pairs: u64,
    pub violations: u64,
    /// Largest observed `lhs / rhs` over pairs with `rhs > 0`.
    pub max_ratio: f64,
}

/// Random search for violations of `lhs <= rhs`.
///
/// Even-indexed pairs are independent Haar vectors; odd-indexed pairs perturb a
/// Haar vector by a Gaussian step of random scale in `[1e-6, 1]` and renormalize,
/// which probes the local slope.
pub fn lipschitz_search(d_b: usize, d_e: usize, n: u64, stream: &RngStream) -> Result<LipschitzSearch> {
    let dims = TripartiteDims::new(1, d_b, d_e)?;
    let d = d_b * d_e;
    let ratios = par_collect(n as usize, |k| {
        let s = stream.child(k as u64);
        let phi1 = StateVector::from_unit(sample_unit_vector(d, &s.derive(0))?);
        let phi2 = if k % 2 == 0 {
            StateVector::from_unit(sample_unit_vector(d, &s.derive(1))?)
        } else {
            let step = sample_unit_vector(d, &s.derive(1))?;
            let scale = 10f64.powf(-6.0 * ((k / 2) % 97) as f64 / 96.0);
            let moved: CVector = phi1.amplitudes() + step.map(|z: C64| z * scale);
            StateVector::normalized(moved)?
        };
        let (lhs, rhs) = lipschitz_witness(&phi1, &phi2, dims)?;
        Ok((lhs <= rhs, if rhs > 0.0 { lhs / rhs } else { 0.0 }))
    })?;
    Ok(LipschitzSearch {
        pairs: n,
        violations: ratios.iter().filter(|(ok, _)| !ok).count() as u64,
        max_ratio: ratios.iter().map(|&(_, r)| r).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadPoint {
    pub n_e: u32,
    pub estimate: MonteCarloEstimate,
    /// Sample standard deviation of the conditional purity.
    pub std_dev: f64,
}

/// Spread of the conditional purity of `psi_sys ⊗ |0...0>_E` for each `N_E` in `n_e_values`.
///
/// `psi_sys` lives on `n_i + n_b` qubits; the draws for `N_E` use `root.derive(N_E)`.
pub fn purity_spread(
    psi_sys: &StateVector,
    n_i: u32,
    n_b: u32,
    n_e_values: &[u32],
    n: u64,
    root: &RngStream,
) -> Result<Vec<SpreadPoint>> {
    if n < 2 {
        return Err(ScatterError::param("n", "need at least 2 samples"));
    }
    n_e_values
        .iter()
        .map(|&n_e| {
            let dims = TripartiteDims::from_qubits(n_i, n_b, n_e)?;
            check_cap(dims.be())?;
            let psi = crate::states::fiducial_extend(psi_sys, n_e)?;
            let samples = PureScatterer::new(&psi, dims)?.purity_samples(n, &root.derive(n_e as u64))?;
            let w: Welford = samples.into_iter().collect();
            Ok(SpreadPoint {
                n_e,
                estimate: w.estimate()?,
                std_dev: w.std_dev().unwrap_or(0.0),
            })
        })
        .collect()
}
