//! Closed-form Haar-averaged purity of the scattered `I ⊗ B` state for pure
//! global inputs.
//!
//! Every formula has the shape `A(d_B, d_E) + C(d_B, d_E) * x` with
//!
//! ```text
//! A = (d_B + d_E) / (d_B d_E + 1),   C = d_B (1 - d_E^2) / ((d_B d_E)^2 - 1),
//! ```
//!
//! and `x = Δ - Γ`, a quartic functional of the amplitudes (equal to
//! `1 - Tr rho_I^2`). Dimensions here are abstract integers: `d_E` may be far
//! larger than anything that could be simulated.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dims::TripartiteDims;
use crate::error::{Result, ScatterError};
use crate::states::StateFamily;
use crate::tensor::{SchmidtSpectrum, StateVector, C64};

/// Largest total dimension for which [`delta_gamma`] uses the quadruple loop.
pub const NAIVE_DELTA_GAMMA_MAX_DIM: usize = 1 << 12;

/// Imaginary part tolerated in Γ before it is reported as an error.
const GAMMA_IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaGamma {
    pub delta: f64,
    pub gamma: f64,
}

impl DeltaGamma {
    /// `Δ - Γ`, the state-dependent weight in the mean purity.
    pub fn difference(&self) -> f64 {
        self.delta - self.gamma
    }
}

/// Δ and Γ by the defining quadruple sum over `i != i'` and `(be) != (be)'`.
///
/// `O(d_I^2 (d_B d_E)^2)`; kept as the reference implementation.
pub fn delta_gamma_naive(psi: &StateVector, dims: TripartiteDims) -> Result<DeltaGamma> {
    ScatterError::check_dim(dims.total(), psi.dim())?;
    let n = dims.be();
    let d_i = dims.d_i();
    let a = |i: usize, m: usize| psi.amplitudes()[i * n + m];
    let mut delta = 0.0;
    let mut gamma = C64::default();
    for i in 0..d_i {
        for ip in 0..d_i {
            if i == ip {
                continue;
            }
            for m in 0..n {
                for mp in 0..n {
                    if m == mp {
                        continue;
                    }
                    delta += a(i, m).norm_sqr() * a(ip, mp).norm_sqr();
                    gamma += a(i, m) * a(ip, m).conj() * a(ip, mp) * a(i, mp).conj();
                }
            }
        }
    }
    if gamma.im.abs() > GAMMA_IMAG_TOL {
        return Err(ScatterError::param(
            "psi",
            format!("Γ has imaginary part {:.3e}", gamma.im),
        ));
    }
    Ok(DeltaGamma {
        delta,
        gamma: gamma.re,
    })
}

/// Δ and Γ from marginals in `O(D d_I)`.
///
/// With `p_i = Σ_m |ψ_im|^2`, `q_m = Σ_i |ψ_im|^2`, `s = Σ |ψ_im|^4` and
/// `μ_I = Tr rho_I^2`, inclusion-exclusion over the excluded diagonals gives
/// `Δ = 1 - Σ p_i^2 - Σ q_m^2 + s` and `Γ = μ_I - Σ p_i^2 - Σ q_m^2 + s`.
pub fn delta_gamma_fast(psi: &StateVector, dims: TripartiteDims) -> Result<DeltaGamma> {
    ScatterError::check_dim(dims.total(), psi.dim())?;
    let n = dims.be();
    let d_i = dims.d_i();
    let amps = psi.amplitudes();
    let mut p = vec![0.0; d_i];
    let mut q = vec![0.0; n];
    let mut fourth = 0.0;
    for i in 0..d_i {
        for m in 0..n {
            let w = amps[i * n + m].norm_sqr();
            p[i] += w;
            q[m] += w;
            fourth += w * w;
        }
    }
    let total: f64 = p.iter().sum();
    let sum_p2: f64 = p.iter().map(|x| x * x).sum();
    let sum_q2: f64 = q.iter().map(|x| x * x).sum();
    let slices = psi.reshape(d_i, n)?;
    let rho_i = &slices * slices.adjoint();
    let mu_i = rho_i.norm_squared();
    Ok(DeltaGamma {
        delta: total * total - sum_p2 - sum_q2 + fourth,
        gamma: mu_i - sum_p2 - sum_q2 + fourth,
    })
}

/// Δ and Γ, by the quadruple loop up to [`NAIVE_DELTA_GAMMA_MAX_DIM`] and by marginals above.
pub fn delta_gamma(psi: &StateVector, dims: TripartiteDims) -> Result<DeltaGamma> {
    if dims.total() <= NAIVE_DELTA_GAMMA_MAX_DIM {
        delta_gamma_naive(psi, dims)
    } else {
        delta_gamma_fast(psi, dims)
    }
}

fn check_dims(d_b: u128, d_e: u128) -> Result<()> {
    if d_b == 0 || d_e == 0 {
        return Err(ScatterError::InvalidDims("d_B and d_E must be >= 1".into()));
    }
    if d_b == 1 && d_e == 1 {
        return Err(ScatterError::InvalidDims(
            "mean purity formula needs d_B d_E >= 2".into(),
        ));
    }
    Ok(())
}

fn to_i128(x: u128) -> Option<i128> {
    i128::try_from(x).ok()
}

/// `(A, C)` as exact rationals, or `None` if an intermediate overflows `i128`.
fn exact_coefficients(d_b: u128, d_e: u128) -> Option<(Ratio<i128>, Ratio<i128>)> {
    let (b, e) = (to_i128(d_b)?, to_i128(d_e)?);
    let d = b.checked_mul(e)?;
    let d2m1 = d.checked_mul(d)?.checked_sub(1)?;
    let a = Ratio::new(b.checked_add(e)?, d.checked_add(1)?);
    let c = Ratio::new(b.checked_mul(1 - e.checked_mul(e)?)?, d2m1);
    Some((a, c))
}

/// `(A, C)` in floating point, written as products of ratios so nothing cancels at large `d_E`.
fn float_coefficients(d_b: u128, d_e: u128) -> (f64, f64) {
    let (b, e) = (d_b as f64, d_e as f64);
    let d = b * e;
    let a = (b + e) / (d + 1.0);
    let c = -b * ((e - 1.0) / (d - 1.0)) * ((e + 1.0) / (d + 1.0));
    (a, c)
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// The dimension-only coefficients `(A, C)` of the mean purity.
pub fn purity_coefficients(d_b: u128, d_e: u128) -> Result<(f64, f64)> {
    check_dims(d_b, d_e)?;
    Ok(match exact_coefficients(d_b, d_e) {
        Some((a, c)) => (ratio_to_f64(a), ratio_to_f64(c)),
        None => float_coefficients(d_b, d_e),
    })
}

/// `A + C x` for a real state weight `x = Δ - Γ`.
pub fn mean_purity_from_cross_weight(x: f64, d_b: u128, d_e: u128) -> Result<f64> {
    let (a, c) = purity_coefficients(d_b, d_e)?;
    Ok(a + c * x)
}

/// `A + C x` for a rational weight, exactly when every intermediate fits `i128`.
pub fn mean_purity_exact(x: Ratio<i128>, d_b: u128, d_e: u128) -> Result<Option<Ratio<i128>>> {
    check_dims(d_b, d_e)?;
    Ok(exact_coefficients(d_b, d_e).and_then(|(a, c)| {
        let cx = Ratio::new(c.numer().checked_mul(*x.numer())?, c.denom().checked_mul(*x.denom())?);
        let num = a
            .numer()
            .checked_mul(*cx.denom())?
            .checked_add(cx.numer().checked_mul(*a.denom())?)?;
        Some(Ratio::new(num, a.denom().checked_mul(*cx.denom())?))
    }))
}

fn mean_purity_rational(x: Ratio<i128>, d_b: u128, d_e: u128) -> Result<f64> {
    match mean_purity_exact(x, d_b, d_e)? {
        Some(r) => Ok(ratio_to_f64(r)),
        None => mean_purity_from_cross_weight(ratio_to_f64(x), d_b, d_e),
    }
}

/// Mean purity of the scattered `I ⊗ B` state for an arbitrary pure global input.
pub fn mean_purity_pure(psi: &StateVector, dims: TripartiteDims) -> Result<f64> {
    let dg = delta_gamma(psi, dims)?;
    mean_purity_from_cross_weight(dg.difference(), dims.d_b() as u128, dims.d_e() as u128)
}

/// Mean purity for `psi_IB ⊗ psi_E` in terms of the inner-boundary Schmidt coefficients.
pub fn mean_purity_schmidt(spectrum: &SchmidtSpectrum, d_b: u128, d_e: u128) -> Result<f64> {
    if spectrum.len() as u128 > d_b {
        return Err(ScatterError::param(
            "spectrum",
            format!("{} coefficients exceed d_B = {d_b}", spectrum.len()),
        ));
    }
    mean_purity_from_cross_weight(spectrum.cross_weight(), d_b, d_e)
}

/// `(d_B + d_E) / (d_B d_E + 1)`: inputs with no inner-boundary entanglement.
pub fn mean_purity_product(d_b: u128, d_e: u128) -> Result<f64> {
    if d_b == 0 || d_e == 0 {
        return Err(ScatterError::InvalidDims("d_B and d_E must be >= 1".into()));
    }
    Ok(match exact_coefficients(d_b, d_e) {
        Some((a, _)) => ratio_to_f64(a),
        None => float_coefficients(d_b, d_e).0,
    })
}

/// `((d_B^2 - 1) d_E + d_E^2 - 1) / (d_B^2 d_E^2 - 1)`: maximally entangled inner-boundary input.
pub fn mean_purity_max_entangled(d_b: u128, d_e: u128) -> Result<f64> {
    if d_b == 0 || d_e == 0 {
        return Err(ScatterError::InvalidDims("d_B and d_E must be >= 1".into()));
    }
    if d_b == 1 {
        return Ok(1.0);
    }
    let exact = (|| {
        let (b, e) = (to_i128(d_b)?, to_i128(d_e)?);
        let b2 = b.checked_mul(b)?;
        let e2 = e.checked_mul(e)?;
        let num = (b2 - 1).checked_mul(e)?.checked_add(e2 - 1)?;
        let den = b2.checked_mul(e2)?.checked_sub(1)?;
        Some(Ratio::new(num, den))
    })();
    Ok(match exact {
        Some(r) => ratio_to_f64(r),
        None => {
            let (b, e) = (d_b as f64, d_e as f64);
            // Divide through by d_E^2 to keep every term O(1).
            ((b * b - 1.0) / e + 1.0 - 1.0 / (e * e)) / (b * b - 1.0 / (e * e))
        }
    })
}

/// `(1 - Δ + Γ) / d_B`, the `d_E -> ∞` limit of [`mean_purity_pure`].
pub fn mean_purity_limit(psi: &StateVector, dims: TripartiteDims) -> Result<f64> {
    let dg = delta_gamma(psi, dims)?;
    Ok(mean_purity_limit_from_cross_weight(dg.difference(), dims.d_b() as u128))
}

pub fn mean_purity_limit_from_cross_weight(x: f64, d_b: u128) -> f64 {
    (1.0 - x) / d_b as f64
}

fn environment_dim(n_total: u32, n_i: u32, n_b: u32) -> Result<u128> {
    if n_i == 0 || n_b == 0 {
        return Err(ScatterError::param(
            "split",
            format!("need N_I >= 1 and N_B >= 1, got ({n_i}, {n_b})"),
        ));
    }
    let used = n_i
        .checked_add(n_b)
        .filter(|&u| u < n_total)
        .ok_or_else(|| {
            ScatterError::param(
                "split",
                format!("need N_I + N_B < N, got {n_i} + {n_b} with N = {n_total}"),
            )
        })?;
    let n_e = n_total - used;
    if n_e > 126 {
        return Err(ScatterError::param("split", format!("N_E = {n_e} exceeds 126")));
    }
    Ok(1u128 << n_e)
}

/// Mean purity for `|GHZ_N>` with `N_I` inner and `N_B` boundary qubits (Δ - Γ = 1/2).
pub fn mean_purity_ghz(n_total: u32, n_i: u32, n_b: u32) -> Result<f64> {
    let d_e = environment_dim(n_total, n_i, n_b)?;
    mean_purity_rational(Ratio::new(1, 2), 1u128 << n_b, d_e)
}

/// `Δ - Γ = 2 N_I (N - N_I) / N^2` for `|W_N>` split after `N_I` qubits.
pub fn w_cross_weight(n_total: u32, n_i: u32) -> Ratio<i128> {
    let (n, k) = (n_total as i128, n_i as i128);
    Ratio::new(2 * k * (n - k), n * n)
}

/// Mean purity for `|W_N>` with `N_I` inner and `N_B` boundary qubits.
pub fn mean_purity_w(n_total: u32, n_i: u32, n_b: u32) -> Result<f64> {
    let d_e = environment_dim(n_total, n_i, n_b)?;
    mean_purity_rational(w_cross_weight(n_total, n_i), 1u128 << n_b, d_e)
}

/// Which three-qubit family sits in `I ⊗ B` with a `|0...0>` environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FiducialFamily {
    Ghz,
    W,
}

impl TryFrom<StateFamily> for FiducialFamily {
    type Error = ScatterError;
    fn try_from(f: StateFamily) -> Result<Self> {
        match f {
            StateFamily::Ghz => Ok(FiducialFamily::Ghz),
            StateFamily::W => Ok(FiducialFamily::W),
            other => Err(ScatterError::param(
                "family",
                format!("no fiducial closed form for `{}`", other.name()),
            )),
        }
    }
}

/// Mean purity for `|GHZ_3>` or `|W_3>` on `I ⊗ B` (`N_B` of the three qubits on the
/// boundary) followed by `N_E` environment qubits in `|0>`. Both splits `(1, 2)` and
/// `(2, 1)` share the same Schmidt spectrum, hence the same value.
pub fn mean_purity_fiducial(family: FiducialFamily, n_b: u32, n_e: u32) -> Result<f64> {
    if !(1..=2).contains(&n_b) {
        return Err(ScatterError::param(
            "n_b",
            format!("three-qubit system needs N_B in {{1, 2}}, got {n_b}"),
        ));
    }
    if n_e > 126 {
        return Err(ScatterError::param("n_e", format!("N_E = {n_e} exceeds 126")));
    }
    let x = match family {
        FiducialFamily::Ghz => Ratio::new(1, 2),
        FiducialFamily::W => Ratio::new(4, 9),
    };
    mean_purity_rational(x, 1u128 << n_b, 1u128 << n_e)
}
