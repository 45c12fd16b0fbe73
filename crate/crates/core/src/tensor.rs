//! Dense complex linear algebra on tripartite Hilbert spaces.
//!
//! Vectors and matrices use the `(i, b, e)` flat layout described in [`crate::dims`].
//! Matrices are `nalgebra` dense matrices; element `(r, c)` addressing is the only
//! thing the rest of the crate relies on, never the in-memory order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dims::{check_cap, check_state_len, Subsystems, TripartiteDims};
use crate::error::{Result, ScatterError};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Allowed `max |M - M^dag|` for anything treated as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Allowed `|Tr rho - 1|`.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue a density matrix may have.
pub const PSD_TOL: f64 = -1e-9;
/// Allowed `|sum |psi|^2 - 1|` for state vectors.
pub const NORM_TOL: f64 = 1e-10;

/// Schmidt coefficients at or below this value are dropped.
const SCHMIDT_ZERO: f64 = 1e-12;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    /// Accepts `amplitudes` only if its squared norm is 1 within [`NORM_TOL`].
    pub fn new(amplitudes: CVector) -> Result<Self> {
        check_state_len(amplitudes.len())?;
        if amplitudes.is_empty() {
            return Err(ScatterError::param("amplitudes", "empty state vector"));
        }
        let norm_sqr = amplitudes.norm_squared();
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(ScatterError::NotNormalized { norm_sqr });
        }
        Ok(StateVector { amplitudes })
    }

    /// Rescales `amplitudes` to unit norm. Fails on a zero or non-finite vector.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        check_state_len(amplitudes.len())?;
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ScatterError::NotNormalized {
                norm_sqr: norm * norm,
            });
        }
        Ok(StateVector {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        StateVector::new(CVector::from_column_slice(amplitudes))
    }

    /// Computational basis state `|index>` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(ScatterError::param(
                "index",
                format!("{index} out of range for dimension {dim}"),
            ));
        }
        check_state_len(dim)?;
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0, 0.0);
        Ok(StateVector { amplitudes: v })
    }

    pub(crate) fn from_unit(amplitudes: CVector) -> Self {
        StateVector { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    /// `self ⊗ other` in the flat layout (self is the slower index).
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let len = self
            .dim()
            .checked_mul(other.dim())
            .ok_or(ScatterError::DimensionCap {
                requested: usize::MAX,
                cap: crate::dims::MAX_STATE_LEN,
            })?;
        check_state_len(len)?;
        let mut out = CVector::zeros(len);
        let n = other.dim();
        for (a, &x) in self.amplitudes.iter().enumerate() {
            for (b, &y) in other.amplitudes.iter().enumerate() {
                out[a * n + b] = x * y;
            }
        }
        Ok(StateVector { amplitudes: out })
    }

    /// The `rows x cols` coefficient matrix with `M[r, c] = psi[r * cols + c]`.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<CMatrix> {
        ScatterError::check_dim(rows * cols, self.dim())?;
        Ok(CMatrix::from_fn(rows, cols, |r, col| {
            self.amplitudes[r * cols + col]
        }))
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        ScatterError::check_dim(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            entries: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Hermitian, unit-trace, numerically positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity; see the `*_TOL` constants.
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(ScatterError::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        check_cap(entries.nrows())?;
        let rho = DensityMatrix { entries };
        rho.validate()?;
        Ok(rho)
    }

    /// Real diagonal density matrix.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        let v = CVector::from_iterator(
            probabilities.len(),
            probabilities.iter().map(|&p| c(p, 0.0)),
        );
        DensityMatrix::new(CMatrix::from_diagonal(&v))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(ScatterError::InvalidDims("dimension 0".into()));
        }
        check_cap(dim)?;
        Ok(DensityMatrix {
            entries: CMatrix::identity(dim, dim).unscale(dim as f64),
        })
    }

    /// Wraps a matrix produced by a trace-preserving, Hermiticity-preserving operation.
    pub(crate) fn from_trusted(entries: CMatrix) -> Self {
        DensityMatrix { entries }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.entries;
        let deviation = hermitian_deviation(m);
        if !(deviation <= HERMITIAN_TOL) {
            return Err(ScatterError::NotHermitian { deviation });
        }
        let trace = m.trace().re;
        if !((trace - 1.0).abs() <= TRACE_TOL) {
            return Err(ScatterError::BadTrace { trace });
        }
        let min_eigenvalue = hermitian_eigenvalues(m)
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eigenvalue < PSD_TOL {
            return Err(ScatterError::NotPositive { min_eigenvalue });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// Convex combination `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &DensityMatrix, weight: f64) -> Result<DensityMatrix> {
        ScatterError::check_dim(self.dim(), other.dim())?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(ScatterError::param("weight", "must lie in [0, 1]"));
        }
        Ok(DensityMatrix {
            entries: self.entries.scale(weight) + other.entries.scale(1.0 - weight),
        })
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix {
            entries: kron(&self.entries, &other.entries)?,
        })
    }
}

/// `max |M - M^dag|` over all entries.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for col in r..n {
            worst = worst.max((m[(r, col)] - m[(col, r)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of the Hermitian part `(M + M^dag) / 2`, sorted ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()).unscale(2.0);
    let mut values: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Kronecker product: `(A ⊗ B)[i * rows_B + k, j * cols_B + l] = A[i, j] * B[k, l]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let overflow = || ScatterError::DimensionCap {
        requested: usize::MAX,
        cap: crate::dims::dim_cap(),
    };
    let rows = a.nrows().checked_mul(b.nrows()).ok_or_else(overflow)?;
    let cols = a.ncols().checked_mul(b.ncols()).ok_or_else(overflow)?;
    if rows.min(cols) <= 1 {
        check_state_len(rows.max(cols))?;
    } else {
        check_cap(rows.max(cols))?;
    }
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(rows, cols);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let x = a[(i, j)];
            if x == C64::default() {
                continue;
            }
            for l in 0..bc {
                for k in 0..br {
                    out[(i * br + k, j * bc + l)] = x * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Partial trace of a square matrix on `dims`, keeping the factors in `keep`.
///
/// The output lives on the kept factors in `(i, b, e)` order. An empty `keep`
/// yields the `1 x 1` full trace.
pub fn partial_trace_matrix(m: &CMatrix, dims: TripartiteDims, keep: Subsystems) -> Result<CMatrix> {
    ScatterError::check_dim(dims.total(), m.nrows())?;
    ScatterError::check_dim(dims.total(), m.ncols())?;
    let kept = dims.reduced(keep);
    let traced = dims.reduced(Subsystems::ALL.without_all(keep));
    let out_dim = kept.total();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    for col in 0..out_dim {
        let (ci, cb, ce) = kept.split(col);
        for row in 0..out_dim {
            let (ri, rb, re) = kept.split(row);
            let mut acc = C64::default();
            for t in 0..traced.total() {
                let (ti, tb, te) = traced.split(t);
                let r = dims.index(ri + ti, rb + tb, re + te);
                let cc = dims.index(ci + ti, cb + tb, ce + te);
                acc += m[(r, cc)];
            }
            out[(row, col)] = acc;
        }
    }
    Ok(out)
}

/// Reduced state on the factors in `keep`.
pub fn partial_trace(rho: &DensityMatrix, dims: TripartiteDims, keep: Subsystems) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_trusted(partial_trace_matrix(
        rho.matrix(),
        dims,
        keep,
    )?))
}

/// Reduced state of a pure state on the factors in `keep`, computed from the
/// amplitudes directly without forming the global projector.
pub fn reduced_pure(psi: &StateVector, dims: TripartiteDims, keep: Subsystems) -> Result<DensityMatrix> {
    ScatterError::check_dim(dims.total(), psi.dim())?;
    let kept = dims.reduced(keep);
    let traced = dims.reduced(Subsystems::ALL.without_all(keep));
    // Coefficient matrix with rows indexed by kept labels and columns by traced labels.
    let a = CMatrix::from_fn(kept.total(), traced.total(), |r, t| {
        let (ri, rb, re) = kept.split(r);
        let (ti, tb, te) = traced.split(t);
        psi.amplitudes()[dims.index(ri + ti, rb + tb, re + te)]
    });
    Ok(DensityMatrix::from_trusted(&a * a.adjoint()))
}

/// `Tr(rho^2)`, evaluated as the squared Hilbert-Schmidt norm.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().norm_squared()
}

/// `1 - Tr(rho^2)`.
pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    1.0 - purity(rho)
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(ScatterError::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let deviation = hermitian_deviation(m);
    if !(deviation <= HERMITIAN_TOL) {
        return Err(ScatterError::NotHermitian { deviation });
    }
    Ok(hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum())
}

/// `||rho - sigma||_1` (no factor 1/2).
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    ScatterError::check_dim(rho.dim(), sigma.dim())?;
    trace_norm(&(rho.matrix() - sigma.matrix()))
}

/// Minimum error probability for discriminating `rho` from `sigma` with equal priors.
pub fn helstrom_error(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let d = trace_distance(rho, sigma)?;
    Ok((0.5 - 0.25 * d).clamp(0.0, 0.5))
}

/// Schmidt coefficients, nonincreasing, with exact zeros dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtSpectrum {
    coefficients: Vec<f64>,
}

impl SchmidtSpectrum {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(ScatterError::param("coefficients", "empty spectrum"));
        }
        if coefficients.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(ScatterError::param("coefficients", "must be finite and nonnegative"));
        }
        if coefficients.windows(2).any(|w| w[0] < w[1]) {
            return Err(ScatterError::param("coefficients", "must be sorted nonincreasing"));
        }
        let norm_sqr: f64 = coefficients.iter().map(|x| x * x).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(ScatterError::NotNormalized { norm_sqr });
        }
        Ok(SchmidtSpectrum { coefficients })
    }

    /// Flat spectrum `1/sqrt(rank)` repeated `rank` times.
    pub fn flat(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(ScatterError::param("rank", "must be >= 1"));
        }
        Ok(SchmidtSpectrum {
            coefficients: vec![1.0 / (rank as f64).sqrt(); rank],
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `sum_{j != l} c_j^2 c_l^2 = 1 - sum_j c_j^4`.
    pub fn cross_weight(&self) -> f64 {
        let squares: Vec<f64> = self.coefficients.iter().map(|x| x * x).collect();
        let total: f64 = squares.iter().sum();
        let diag: f64 = squares.iter().map(|p| p * p).sum();
        total * total - diag
    }
}

/// Schmidt decomposition of `psi` across a `d_a | d_b` split (`psi.dim() == d_a * d_b`).
pub fn schmidt(psi: &StateVector, d_a: usize, d_b: usize) -> Result<SchmidtSpectrum> {
    let m = psi.reshape(d_a, d_b)?;
    let mut values: Vec<f64> = m
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > SCHMIDT_ZERO)
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    SchmidtSpectrum::new(values)
}
