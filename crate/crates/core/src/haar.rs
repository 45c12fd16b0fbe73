//! Haar-random unitaries and the exact first- and second-order moment integrals.
//!
//! Sampling is Ginibre + QR with the diagonal of `R` rotated onto the positive
//! reals, which makes `Q` exactly Haar distributed. Gaussians are drawn column
//! by column, so the first `k` columns of [`sample_haar_unitary`] coincide with
//! [`sample_haar_isometry`] for the same stream.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dims::{check_cap, check_state_len};
use crate::error::{Result, ScatterError};
use crate::tensor::{c, CMatrix, CVector, C64};

/// Identifies one reproducible random stream: a global seed plus a stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Generator keyed by `seed ^ mix(stream_id)`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ mix64(self.stream_id))
    }

    /// A stream family for a different purpose under the same seed.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream {
            seed: self.seed ^ mix64(tag.wrapping_mul(0xA24B_AED4_963E_E407) ^ self.stream_id),
            stream_id: self.stream_id,
        }
    }

    /// Stream `index` of the family rooted at this stream.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed ^ mix64(self.stream_id ^ 0x5851_F42D_4C95_7F2D),
            stream_id: index,
        }
    }
}

/// One standard complex Gaussian, `E|z|^2 = 1`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` Ginibre matrix, drawn in column-major order.
pub fn ginibre(rows: usize, cols: usize, stream: &RngStream) -> CMatrix {
    let mut rng = stream.rng();
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_gaussian(&mut rng)).collect();
    CMatrix::from_vec(rows, cols, data)
}

fn orthonormalize(g: CMatrix) -> CMatrix {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        // A zero pivot has probability zero; leave the column as produced.
        if n > 0.0 {
            let phase = rjj / n;
            for x in q.column_mut(j).iter_mut() {
                *x *= phase;
            }
        }
    }
    q
}

/// Haar-distributed `d x d` unitary.
pub fn sample_haar_unitary(d: usize, stream: &RngStream) -> Result<CMatrix> {
    if d == 0 {
        return Err(ScatterError::param("d", "must be >= 1"));
    }
    check_cap(d)?;
    Ok(orthonormalize(ginibre(d, d, stream)))
}

/// First `k` columns of a Haar unitary of size `d` (a Haar-random isometry).
pub fn sample_haar_isometry(d: usize, k: usize, stream: &RngStream) -> Result<CMatrix> {
    if d == 0 || k == 0 || k > d {
        return Err(ScatterError::param(
            "k",
            format!("need 1 <= k <= d, got k = {k}, d = {d}"),
        ));
    }
    check_state_len(d)?;
    Ok(orthonormalize(ginibre(d, k, stream)))
}

/// Haar-uniform unit vector in dimension `d`.
pub fn sample_unit_vector(d: usize, stream: &RngStream) -> Result<CVector> {
    if d == 0 {
        return Err(ScatterError::param("d", "must be >= 1"));
    }
    check_state_len(d)?;
    let mut rng = stream.rng();
    let v = CVector::from_iterator(d, (0..d).map(|_| complex_gaussian(&mut rng)));
    let n = v.norm();
    Ok(v.unscale(n))
}

/// `max |U^dag U - I|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for r in 0..g.nrows() {
        for col in 0..g.ncols() {
            let target = if r == col { 1.0 } else { 0.0 };
            worst = worst.max((g[(r, col)] - c(target, 0.0)).norm());
        }
    }
    worst
}

/// The five nonvanishing index patterns of `∫ U*_{i1 j1} U*_{i2 j2} U_{k1 l1} U_{k2 l2} dU`,
/// after reordering the unconjugated pair so that its rows follow the conjugated ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MomentCase {
    /// `i1 != i2, j1 != j2`, columns in the same order.
    P2DistinctDirect,
    /// `i1 != i2, j1 != j2`, columns exchanged.
    P2DistinctSwapped,
    /// `i1 == i2, j1 != j2`.
    P2RowCoincide,
    /// `i1 != i2, j1 == j2`.
    P2ColCoincide,
    /// `i1 == i2, j1 == j2`.
    P2AllCoincide,
}

impl MomentCase {
    pub const ALL: [MomentCase; 5] = [
        MomentCase::P2DistinctDirect,
        MomentCase::P2DistinctSwapped,
        MomentCase::P2RowCoincide,
        MomentCase::P2ColCoincide,
        MomentCase::P2AllCoincide,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            MomentCase::P2DistinctDirect => "P2_DISTINCT_DIRECT",
            MomentCase::P2DistinctSwapped => "P2_DISTINCT_SWAPPED",
            MomentCase::P2RowCoincide => "P2_ROW_COINCIDE",
            MomentCase::P2ColCoincide => "P2_COL_COINCIDE",
            MomentCase::P2AllCoincide => "P2_ALL_COINCIDE",
        }
    }

    /// Smallest unitary dimension in which the pattern can be realized.
    pub fn min_dim(&self) -> usize {
        match self {
            MomentCase::P2AllCoincide => 1,
            _ => 2,
        }
    }

    /// A canonical monomial realizing this case.
    pub fn representative(&self) -> P2Monomial {
        let idx = match self {
            MomentCase::P2DistinctDirect => [0, 0, 1, 1, 0, 0, 1, 1],
            MomentCase::P2DistinctSwapped => [0, 0, 1, 1, 0, 1, 1, 0],
            MomentCase::P2RowCoincide => [0, 0, 0, 1, 0, 0, 0, 1],
            MomentCase::P2ColCoincide => [0, 0, 1, 0, 0, 0, 1, 0],
            MomentCase::P2AllCoincide => [0, 0, 0, 0, 0, 0, 0, 0],
        };
        P2Monomial::from_indices(idx)
    }
}

impl std::fmt::Display for MomentCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// `1/d`, the value of `∫ U*_{ij} U_{ij} dU`.
pub fn haar_moment_p1(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(ScatterError::param("d", "must be >= 1"));
    }
    Ok(1.0 / d as f64)
}

/// Whether `∫ U*_{ij} U_{kl} dU` is nonzero.
pub fn p1_nonzero(i: usize, j: usize, k: usize, l: usize) -> bool {
    i == k && j == l
}

/// Exact rational value of a second-order moment.
pub fn haar_moment_p2_exact(case: MomentCase, d: usize) -> Result<Ratio<i128>> {
    if d < case.min_dim() {
        return Err(ScatterError::param(
            "d",
            format!("{case} needs d >= {}, got {d}", case.min_dim()),
        ));
    }
    let d = i128::try_from(d).map_err(|_| ScatterError::param("d", "too large"))?;
    let r = match case {
        MomentCase::P2DistinctDirect => Ratio::new(1, d * d - 1),
        MomentCase::P2DistinctSwapped => Ratio::new(-1, d * (d * d - 1)),
        MomentCase::P2RowCoincide | MomentCase::P2ColCoincide => Ratio::new(1, d * (d + 1)),
        MomentCase::P2AllCoincide => Ratio::new(2, d * (d + 1)),
    };
    Ok(r)
}

/// Floating-point value of a second-order moment.
pub fn haar_moment_p2(case: MomentCase, d: usize) -> Result<f64> {
    if d < case.min_dim() {
        return Err(ScatterError::param(
            "d",
            format!("{case} needs d >= {}, got {d}", case.min_dim()),
        ));
    }
    let d = d as f64;
    Ok(match case {
        MomentCase::P2DistinctDirect => 1.0 / (d * d - 1.0),
        MomentCase::P2DistinctSwapped => -1.0 / (d * (d * d - 1.0)),
        MomentCase::P2RowCoincide | MomentCase::P2ColCoincide => 1.0 / (d * (d + 1.0)),
        MomentCase::P2AllCoincide => 2.0 / (d * (d + 1.0)),
    })
}

/// `U*_{i1 j1} U*_{i2 j2} U_{k1 l1} U_{k2 l2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct P2Monomial {
    pub conj: [(usize, usize); 2],
    pub plain: [(usize, usize); 2],
}

impl P2Monomial {
    /// Indices in the order `(i1, j1, i2, j2, k1, l1, k2, l2)`.
    pub fn from_indices(idx: [usize; 8]) -> Self {
        P2Monomial {
            conj: [(idx[0], idx[1]), (idx[2], idx[3])],
            plain: [(idx[4], idx[5]), (idx[6], idx[7])],
        }
    }

    pub fn max_index(&self) -> usize {
        self.conj
            .iter()
            .chain(self.plain.iter())
            .flat_map(|&(a, b)| [a, b])
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, u: &CMatrix) -> C64 {
        let [(i1, j1), (i2, j2)] = self.conj;
        let [(k1, l1), (k2, l2)] = self.plain;
        u[(i1, j1)].conj() * u[(i2, j2)].conj() * u[(k1, l1)] * u[(k2, l2)]
    }

    /// Haar integral of this monomial in dimension `d`.
    pub fn integral(&self, d: usize) -> Result<f64> {
        if self.max_index() >= d {
            return Err(ScatterError::param(
                "indices",
                format!("index {} out of range for d = {d}", self.max_index()),
            ));
        }
        match classify_p2_monomial(self) {
            Some(case) => haar_moment_p2(case, d),
            None => Ok(0.0),
        }
    }
}

/// Which of the five nonzero cases a monomial integrates to, or `None` when it vanishes.
pub fn classify_p2_monomial(m: &P2Monomial) -> Option<MomentCase> {
    let [(i1, j1), (i2, j2)] = m.conj;
    let mut plain = m.plain;
    if plain[0].0 != i1 {
        plain.swap(0, 1);
    }
    let [(k1, l1), (k2, l2)] = plain;
    if k1 != i1 || k2 != i2 {
        return None;
    }
    let cols_match = (l1 == j1 && l2 == j2) || (l1 == j2 && l2 == j1);
    if !cols_match {
        return None;
    }
    // With equal rows the two unconjugated factors are interchangeable, so the column
    // order cannot distinguish further cases.
    Some(match (i1 == i2, j1 == j2) {
        (true, true) => MomentCase::P2AllCoincide,
        (true, false) => MomentCase::P2RowCoincide,
        (false, true) => MomentCase::P2ColCoincide,
        (false, false) => {
            if l1 == j1 {
                MomentCase::P2DistinctDirect
            } else {
                MomentCase::P2DistinctSwapped
            }
        }
    })
}
