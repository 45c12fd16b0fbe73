//! The scattering channel `rho -> Tr_E[(1_I ⊗ U) rho (1_I ⊗ U)^dag]` for sampled
//! boundary-environment unitaries, its exact Haar average, and Monte Carlo
//! estimators of averaged states and purities.

use crate::dims::{Subsystems, TripartiteDims};
use crate::error::{Result, ScatterError};
use crate::haar::{sample_haar_isometry, sample_haar_unitary, RngStream};
use crate::stats::{par_collect, par_fold, par_welford, MonteCarloEstimate, Welford};
use crate::tensor::{
    kron, partial_trace, purity, reduced_pure, trace_distance, CMatrix, CVector, DensityMatrix, StateVector, C64,
};

/// One conditional state: the output for a single realized unitary.
#[derive(Debug, Clone)]
pub struct ScatterSample {
    pub sample_index: u64,
    pub conditional_state: DensityMatrix,
    pub purity: f64,
    pub trace_distance_to_unconditional: f64,
}

fn check_unitary_shape(u: &CMatrix, dims: TripartiteDims) -> Result<()> {
    ScatterError::check_dim(dims.be(), u.nrows())?;
    ScatterError::check_dim(dims.be(), u.ncols())
}

/// Conditional `I ⊗ B` state for one boundary-environment unitary `u`.
///
/// `1_I ⊗ U` is never formed: each `d_B d_E` block `rho_{i i'}` is rotated as
/// `U rho_{i i'} U^dag` and traced over the environment.
pub fn apply_scattering(rho: &DensityMatrix, u: &CMatrix, dims: TripartiteDims) -> Result<DensityMatrix> {
    ScatterError::check_dim(dims.total(), rho.dim())?;
    check_unitary_shape(u, dims)?;
    let n = dims.be();
    let (d_i, d_b, d_e) = (dims.d_i(), dims.d_b(), dims.d_e());
    let m = rho.matrix();
    let u_adj = u.adjoint();
    let mut out = CMatrix::zeros(dims.ib(), dims.ib());
    for i in 0..d_i {
        for ip in i..d_i {
            let block = m.view((i * n, ip * n), (n, n));
            let rotated = u * block * &u_adj;
            for b in 0..d_b {
                for bp in 0..d_b {
                    let mut acc = C64::default();
                    for e in 0..d_e {
                        acc += rotated[(b * d_e + e, bp * d_e + e)];
                    }
                    out[(i * d_b + b, ip * d_b + bp)] = acc;
                    if ip != i {
                        out[(ip * d_b + bp, i * d_b + b)] = acc.conj();
                    }
                }
            }
        }
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// Eigenvalues below this are dropped when factoring an input state.
const FACTOR_CUTOFF: f64 = 1e-14;

/// An input state factored as `rho = A A^dag`, for applying many unitaries cheaply.
///
/// Column `k` of `A` is split into its `d_I` boundary-environment slices, so one
/// draw costs a single `(d_B d_E) x (d_B d_E)` by `(d_B d_E) x (r d_I)` product
/// plus a Gram matrix, with `r` the rank of `rho`.
#[derive(Debug, Clone)]
pub struct FactoredInput {
    dims: TripartiteDims,
    rank: usize,
    slices: CMatrix,
}

impl FactoredInput {
    pub fn new(rho: &DensityMatrix, dims: TripartiteDims) -> Result<Self> {
        ScatterError::check_dim(dims.total(), rho.dim())?;
        let m = rho.matrix();
        let herm = (m + m.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        let columns: Vec<CVector> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > FACTOR_CUTOFF)
            .map(|(k, &l)| eig.eigenvectors.column(k).scale(l.sqrt()))
            .collect();
        Ok(Self::from_columns(&columns, dims))
    }

    pub fn pure(psi: &StateVector, dims: TripartiteDims) -> Result<Self> {
        ScatterError::check_dim(dims.total(), psi.dim())?;
        Ok(Self::from_columns(std::slice::from_ref(psi.amplitudes()), dims))
    }

    fn from_columns(columns: &[CVector], dims: TripartiteDims) -> Self {
        let (n, d_i) = (dims.be(), dims.d_i());
        let slices = CMatrix::from_fn(n, columns.len() * d_i, |row, col| columns[col / d_i][(col % d_i) * n + row]);
        FactoredInput {
            dims,
            rank: columns.len(),
            slices,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `G` with `G G^dag` the conditional state: rows `(i, b)`, columns `(e, k)`.
    fn output_factor(&self, u: &CMatrix) -> Result<CMatrix> {
        check_unitary_shape(u, self.dims)?;
        let w = u * &self.slices;
        let (d_i, d_b, d_e, r) = (self.dims.d_i(), self.dims.d_b(), self.dims.d_e(), self.rank);
        Ok(CMatrix::from_fn(d_i * d_b, d_e * r, |row, col| {
            let (i, b) = (row / d_b, row % d_b);
            let (e, k) = (col / r, col % r);
            w[(b * d_e + e, k * d_i + i)]
        }))
    }

    /// Same result as [`apply_scattering`] on the original state.
    pub fn apply(&self, u: &CMatrix) -> Result<DensityMatrix> {
        let g = self.output_factor(u)?;
        Ok(DensityMatrix::from_trusted(&g * g.adjoint()))
    }

    /// Purity of [`FactoredInput::apply`], from whichever Gram matrix is smaller.
    pub fn conditional_purity(&self, u: &CMatrix) -> Result<f64> {
        let g = self.output_factor(u)?;
        let gram = if g.nrows() <= g.ncols() { &g * g.adjoint() } else { g.adjoint() * &g };
        Ok(gram.norm_squared())
    }
}

/// `(1_I ⊗ U) psi` for a pure global state.
pub fn scatter_pure(psi: &StateVector, u: &CMatrix, dims: TripartiteDims) -> Result<StateVector> {
    ScatterError::check_dim(dims.total(), psi.dim())?;
    check_unitary_shape(u, dims)?;
    let n = dims.be();
    let mut out = psi.amplitudes().clone();
    for i in 0..dims.d_i() {
        let slice = psi.amplitudes().rows(i * n, n);
        out.rows_mut(i * n, n).copy_from(&(u * slice));
    }
    Ok(StateVector::from_unit(out))
}

/// `Tr_BE(rho) ⊗ 1_B / d_B`, the exact Haar average of [`apply_scattering`].
pub fn unconditional_state(rho: &DensityMatrix, dims: TripartiteDims) -> Result<DensityMatrix> {
    let rho_i = partial_trace(rho, dims, Subsystems::I)?;
    let mixed = DensityMatrix::maximally_mixed(dims.d_b())?;
    rho_i.tensor(&mixed)
}

/// `rho_I ⊗ Tr_E |phi><phi|`: the conditional state of an inner-boundary separable
/// input whose boundary-environment part was rotated to `phi`.
pub fn conditional_separable(rho_i: &DensityMatrix, phi: &StateVector, dims: TripartiteDims) -> Result<DensityMatrix> {
    ScatterError::check_dim(dims.d_i(), rho_i.dim())?;
    ScatterError::check_dim(dims.be(), phi.dim())?;
    let be = TripartiteDims::new(1, dims.d_b(), dims.d_e())?;
    let rho_b = reduced_pure(phi, be, Subsystems::B)?;
    rho_i.tensor(&rho_b)
}

/// Source of the unitary applied to draw `k`.
pub trait UnitarySource: Sync {
    fn unitary(&self, k: u64) -> Result<CMatrix>;
}

/// Haar unitaries of size `d_B d_E`, draw `k` on stream `root.child(k)`.
#[derive(Debug, Clone, Copy)]
pub struct HaarSource {
    pub d: usize,
    pub root: RngStream,
}

impl UnitarySource for HaarSource {
    fn unitary(&self, k: u64) -> Result<CMatrix> {
        sample_haar_unitary(self.d, &self.root.child(k))
    }
}

impl<F> UnitarySource for F
where
    F: Fn(u64) -> Result<CMatrix> + Sync,
{
    fn unitary(&self, k: u64) -> Result<CMatrix> {
        self(k)
    }
}

/// Monte Carlo estimate of the averaged state and its distance from the exact average.
#[derive(Debug, Clone)]
pub struct AverageStateEstimate {
    pub state: DensityMatrix,
    pub n_samples: u64,
    /// `max |avg - exact|` over entries.
    pub max_elementwise_deviation: f64,
    /// `||avg - exact||_1`.
    pub trace_distance: f64,
}

fn sum_conditionals(
    input: &FactoredInput,
    dims: TripartiteDims,
    range: std::ops::Range<u64>,
    source: &impl UnitarySource,
) -> Result<CMatrix> {
    let zero = || Ok(CMatrix::zeros(dims.ib(), dims.ib()));
    let start = range.start;
    let len = (range.end - range.start) as usize;
    par_fold(
        len,
        zero,
        |k| {
            let u = source.unitary(start + k as u64)?;
            Ok(input.apply(&u)?.into_matrix())
        },
        |acc: &mut Result<CMatrix>, x: Result<CMatrix>| add_into(acc, x),
        |acc: &mut Result<CMatrix>, x: Result<CMatrix>| add_into(acc, x),
    )
}

fn add_into(acc: &mut Result<CMatrix>, x: Result<CMatrix>) {
    match (acc.as_mut(), x) {
        (Ok(a), Ok(m)) => *a += m,
        (Ok(_), Err(e)) => *acc = Err(e),
        (Err(_), _) => {}
    }
}

fn summarize(sum: &CMatrix, n: u64, exact: &DensityMatrix) -> Result<AverageStateEstimate> {
    let avg = sum.unscale(n as f64);
    let diff = &avg - exact.matrix();
    let max_elementwise_deviation = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let state = DensityMatrix::from_trusted(avg);
    let trace_distance = trace_distance(&state, exact)?;
    Ok(AverageStateEstimate {
        state,
        n_samples: n,
        max_elementwise_deviation,
        trace_distance,
    })
}

/// Average of [`apply_scattering`] over draws `0..n` of `source`.
pub fn mc_average_state_with(
    rho: &DensityMatrix,
    dims: TripartiteDims,
    n: u64,
    source: &impl UnitarySource,
) -> Result<AverageStateEstimate> {
    if n == 0 {
        return Err(ScatterError::param("n", "need at least 1 sample"));
    }
    let exact = unconditional_state(rho, dims)?;
    let sum = sum_conditionals(&FactoredInput::new(rho, dims)?, dims, 0..n, source)?;
    summarize(&sum, n, &exact)
}

/// Average of [`apply_scattering`] over `n` Haar draws.
pub fn mc_average_state(rho: &DensityMatrix, dims: TripartiteDims, n: u64, stream: &RngStream) -> Result<AverageStateEstimate> {
    mc_average_state_with(rho, dims, n, &HaarSource { d: dims.be(), root: *stream })
}

/// Running averages reported at each (strictly increasing) checkpoint.
pub fn mc_average_trajectory(
    rho: &DensityMatrix,
    dims: TripartiteDims,
    checkpoints: &[u64],
    stream: &RngStream,
) -> Result<Vec<AverageStateEstimate>> {
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScatterError::param(
            "checkpoints",
            "must be nonempty, positive and strictly increasing",
        ));
    }
    let source = HaarSource { d: dims.be(), root: *stream };
    let exact = unconditional_state(rho, dims)?;
    let input = FactoredInput::new(rho, dims)?;
    let mut sum = CMatrix::zeros(dims.ib(), dims.ib());
    let mut done = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        sum += sum_conditionals(&input, dims, done..cp, &source)?;
        done = cp;
        out.push(summarize(&sum, cp, &exact)?);
    }
    Ok(out)
}

/// Draw `index` of the conditional-state ensemble, with its purity and distance
/// from the exact average.
pub fn sample_conditional(
    rho: &DensityMatrix,
    dims: TripartiteDims,
    stream: &RngStream,
    index: u64,
) -> Result<ScatterSample> {
    let u = HaarSource { d: dims.be(), root: *stream }.unitary(index)?;
    let conditional_state = apply_scattering(rho, &u, dims)?;
    let exact = unconditional_state(rho, dims)?;
    Ok(ScatterSample {
        sample_index: index,
        purity: purity(&conditional_state),
        trace_distance_to_unconditional: trace_distance(&conditional_state, &exact)?,
        conditional_state,
    })
}

/// Mean and standard error of the conditional purity over `n >= 2` Haar draws,
/// applying full unitaries to a general density matrix.
pub fn mc_mean_purity(rho: &DensityMatrix, dims: TripartiteDims, n: u64, stream: &RngStream) -> Result<MonteCarloEstimate> {
    if n < 2 {
        return Err(ScatterError::param("n", "need at least 2 samples"));
    }
    let input = FactoredInput::new(rho, dims)?;
    let source = HaarSource { d: dims.be(), root: *stream };
    let failed = std::sync::Mutex::new(None);
    let w = par_welford(n as usize, |k| {
        match source
            .unitary(k as u64)
            .and_then(|u| input.conditional_purity(&u))
        {
            Ok(p) => p,
            Err(e) => {
                failed.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failed.into_inner().unwrap() {
        return Err(e);
    }
    w.estimate()
}

/// Fast sampler for pure global inputs.
///
/// Only the span of the `d_I` boundary-environment slices `psi_i` matters, so a
/// Haar unitary can be replaced by a Haar isometry on that span: with
/// `[psi_0 .. psi_{d_I-1}] = Q R`, the output slices are `V R` for a Haar
/// isometry `V` of shape `d_B d_E x k`. This is exact in distribution and costs
/// `O(d_B d_E k^2)` per draw instead of `O((d_B d_E)^3)`.
#[derive(Debug, Clone)]
pub struct PureScatterer {
    dims: TripartiteDims,
    k: usize,
    coeffs: CMatrix,
}

impl PureScatterer {
    pub fn new(psi: &StateVector, dims: TripartiteDims) -> Result<Self> {
        ScatterError::check_dim(dims.total(), psi.dim())?;
        let n = dims.be();
        // Column i holds the boundary-environment slice of inner index i.
        let slices = CMatrix::from_fn(n, dims.d_i(), |row, i| psi.amplitudes()[i * n + row]);
        if dims.d_i() < n {
            let qr = slices.qr();
            Ok(PureScatterer {
                dims,
                k: dims.d_i(),
                coeffs: qr.r(),
            })
        } else {
            Ok(PureScatterer {
                dims,
                k: n,
                coeffs: slices,
            })
        }
    }

    pub fn dims(&self) -> TripartiteDims {
        self.dims
    }

    /// Output amplitudes as a `(d_I d_B) x d_E` coefficient matrix for draw `stream`.
    pub fn output_matrix(&self, stream: &RngStream) -> Result<CMatrix> {
        let n = self.dims.be();
        let v = if self.k == n {
            sample_haar_unitary(n, stream)?
        } else {
            sample_haar_isometry(n, self.k, stream)?
        };
        let w = v * &self.coeffs;
        let (d_b, d_e) = (self.dims.d_b(), self.dims.d_e());
        Ok(CMatrix::from_fn(self.dims.ib(), d_e, |row, e| {
            let (i, b) = (row / d_b, row % d_b);
            w[(b * d_e + e, i)]
        }))
    }

    /// Scattered global state for draw `stream`.
    pub fn scatter(&self, stream: &RngStream) -> Result<StateVector> {
        let a = self.output_matrix(stream)?;
        let d_e = self.dims.d_e();
        let mut out = crate::tensor::CVector::zeros(self.dims.total());
        for row in 0..a.nrows() {
            for e in 0..d_e {
                out[row * d_e + e] = a[(row, e)];
            }
        }
        Ok(StateVector::from_unit(out))
    }

    /// Conditional `I ⊗ B` state for draw `stream`.
    pub fn conditional_state(&self, stream: &RngStream) -> Result<DensityMatrix> {
        let a = self.output_matrix(stream)?;
        Ok(DensityMatrix::from_trusted(&a * a.adjoint()))
    }

    /// Conditional purity, from whichever Gram matrix of the output is smaller.
    pub fn conditional_purity(&self, stream: &RngStream) -> Result<f64> {
        let a = self.output_matrix(stream)?;
        let gram = if a.nrows() <= a.ncols() {
            &a * a.adjoint()
        } else {
            a.adjoint() * &a
        };
        Ok(gram.norm_squared())
    }

    /// Conditional purities of draws `0..n`, draw `k` on `root.child(k)`, in index order.
    pub fn purity_samples(&self, n: u64, root: &RngStream) -> Result<Vec<f64>> {
        par_collect(n as usize, |k| self.conditional_purity(&root.child(k as u64)))
    }
}

/// Mean conditional purity of a pure global input over `n >= 2` Haar draws.
pub fn mc_mean_purity_pure(psi: &StateVector, dims: TripartiteDims, n: u64, stream: &RngStream) -> Result<MonteCarloEstimate> {
    if n < 2 {
        return Err(ScatterError::param("n", "need at least 2 samples"));
    }
    let samples = PureScatterer::new(psi, dims)?.purity_samples(n, stream)?;
    samples.into_iter().collect::<Welford>().estimate()
}

/// `rho_I ⊗ 1_B/d_B ⊗ 1_E/d_E`-style tensor helper used in tests and experiments.
pub fn product_state(parts: &[&DensityMatrix]) -> Result<DensityMatrix> {
    let mut iter = parts.iter();
    let first = iter
        .next()
        .ok_or_else(|| ScatterError::param("parts", "need at least one factor"))?;
    let mut m = first.matrix().clone();
    for p in iter {
        m = kron(&m, p.matrix())?;
    }
    Ok(DensityMatrix::from_trusted(m))
}
