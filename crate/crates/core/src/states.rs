//! Initial states: GHZ, W, products, maximally entangled inner-boundary pairs,
//! random pure states, fiducial environment extensions and custom amplitude files.
//!
//! Multi-qubit states put the first `N_I` qubits in the inner factor, the next
//! `N_B` in the boundary and the rest in the environment, most significant first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dims::{check_state_len, qubit_dim, TripartiteDims};
use crate::error::{Result, ScatterError};
use crate::haar::{sample_unit_vector, RngStream};
use crate::tensor::{c, CVector, StateVector};

/// Relative norm slack accepted when reading amplitude files.
pub const FILE_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateFamily {
    Ghz,
    W,
    Product,
    MaxEntangledIb,
    RandomPure,
    Custom,
}

impl StateFamily {
    pub fn name(&self) -> &'static str {
        match self {
            StateFamily::Ghz => "ghz",
            StateFamily::W => "w",
            StateFamily::Product => "product",
            StateFamily::MaxEntangledIb => "max-entangled-ib",
            StateFamily::RandomPure => "random-pure",
            StateFamily::Custom => "custom",
        }
    }
}

impl std::str::FromStr for StateFamily {
    type Err = ScatterError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ghz" => StateFamily::Ghz,
            "w" => StateFamily::W,
            "product" => StateFamily::Product,
            "max-entangled-ib" | "max-entangled" | "maxent" => StateFamily::MaxEntangledIb,
            "random-pure" | "random" => StateFamily::RandomPure,
            "custom" => StateFamily::Custom,
            other => {
                return Err(ScatterError::param(
                    "family",
                    format!("unknown state family `{other}`"),
                ))
            }
        })
    }
}

/// `log2(d)` when `d` is a power of two.
pub fn exact_log2(d: usize) -> Option<u32> {
    d.is_power_of_two().then(|| d.trailing_zeros())
}

/// `(|0...0> + |1...1>) / sqrt(2)` on `n` qubits.
pub fn ghz(n_qubits: u32) -> Result<StateVector> {
    if n_qubits == 0 {
        return Err(ScatterError::param("n_qubits", "must be >= 1"));
    }
    let dim = qubit_dim(n_qubits)?;
    check_state_len(dim)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVector::zeros(dim);
    v[0] = c(h, 0.0);
    v[dim - 1] = c(h, 0.0);
    Ok(StateVector::from_unit(v))
}

/// Uniform superposition of the `n` one-hot basis states `|2^k>`.
pub fn w(n_qubits: u32) -> Result<StateVector> {
    if n_qubits == 0 {
        return Err(ScatterError::param("n_qubits", "must be >= 1"));
    }
    let dim = qubit_dim(n_qubits)?;
    check_state_len(dim)?;
    let a = 1.0 / (n_qubits as f64).sqrt();
    let mut v = CVector::zeros(dim);
    for k in 0..n_qubits {
        v[1usize << k] = c(a, 0.0);
    }
    Ok(StateVector::from_unit(v))
}

/// `sum_j |j>_I |j>_B / sqrt(d_B)`; requires `d_B <= d_I`.
pub fn max_entangled_ib(d_i: usize, d_b: usize) -> Result<StateVector> {
    if d_b == 0 || d_i == 0 {
        return Err(ScatterError::InvalidDims("dimensions must be >= 1".into()));
    }
    if d_b > d_i {
        return Err(ScatterError::InvalidDims(format!(
            "maximally entangled IB state needs d_B <= d_I, got d_B = {d_b}, d_I = {d_i}"
        )));
    }
    check_state_len(d_i * d_b)?;
    let a = 1.0 / (d_b as f64).sqrt();
    let mut v = CVector::zeros(d_i * d_b);
    for j in 0..d_b {
        v[j * d_b + j] = c(a, 0.0);
    }
    Ok(StateVector::from_unit(v))
}

/// `psi ⊗ |0>` with an environment of dimension `d_e`.
pub fn extend_with_vacuum(psi: &StateVector, d_e: usize) -> Result<StateVector> {
    let vacuum = StateVector::basis(d_e, 0)?;
    psi.tensor(&vacuum)
}

/// `psi ⊗ |0...0>` on `n_env_qubits` environment qubits.
pub fn fiducial_extend(psi_sys: &StateVector, n_env_qubits: u32) -> Result<StateVector> {
    extend_with_vacuum(psi_sys, qubit_dim(n_env_qubits)?)
}

/// Haar-random pure state (normalized complex Gaussian vector).
pub fn random_pure_state(d: usize, stream: &RngStream) -> Result<StateVector> {
    Ok(StateVector::from_unit(sample_unit_vector(d, stream)?))
}

/// Parses one `re im` pair per line. Blank lines and `#` comments are skipped.
/// The vector is rescaled to unit norm when its norm is within [`FILE_NORM_TOL`] of 1.
pub fn parse_amplitudes(text: &str) -> Result<StateVector> {
    let mut amps = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            let tok = fields.next().ok_or_else(|| ScatterError::Parse {
                line: n + 1,
                reason: format!("missing {what} part"),
            })?;
            tok.parse::<f64>().map_err(|e| ScatterError::Parse {
                line: n + 1,
                reason: format!("bad {what} part `{tok}`: {e}"),
            })
        };
        let re = next("real")?;
        let im = next("imaginary")?;
        if fields.next().is_some() {
            return Err(ScatterError::Parse {
                line: n + 1,
                reason: "expected exactly two numbers".into(),
            });
        }
        if !(re.is_finite() && im.is_finite()) {
            return Err(ScatterError::Parse {
                line: n + 1,
                reason: "non-finite amplitude".into(),
            });
        }
        amps.push(c(re, im));
    }
    if amps.is_empty() {
        return Err(ScatterError::Parse {
            line: 0,
            reason: "no amplitudes".into(),
        });
    }
    let v = CVector::from_vec(amps);
    let norm = v.norm();
    if (norm - 1.0).abs() > FILE_NORM_TOL {
        return Err(ScatterError::NotNormalized {
            norm_sqr: norm * norm,
        });
    }
    StateVector::normalized(v)
}

pub fn read_amplitude_file(path: impl AsRef<Path>) -> Result<StateVector> {
    parse_amplitudes(&std::fs::read_to_string(path)?)
}

/// Inverse of [`parse_amplitudes`], using round-trip float formatting.
pub fn format_amplitudes(psi: &StateVector) -> String {
    let mut out = String::new();
    for a in psi.amplitudes().iter() {
        out.push_str(&format!("{:e} {:e}\n", a.re, a.im));
    }
    out
}

/// A fully specified initial state on some [`TripartiteDims`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub family: StateFamily,
    /// Prepare the family on `I ⊗ B` only and put the environment in `|0...0>`.
    pub fiducial: bool,
    /// Seed for the random families.
    pub seed: u64,
    /// Amplitudes for [`StateFamily::Custom`]: length `D`, or `d_I d_B` when fiducial.
    pub custom: Option<StateVector>,
}

impl StateSpec {
    pub fn new(family: StateFamily) -> Self {
        StateSpec {
            family,
            fiducial: false,
            seed: 0,
            custom: None,
        }
    }

    pub fn fiducial(mut self, yes: bool) -> Self {
        self.fiducial = yes;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Whether the state is `psi_IB ⊗ |0>_E`.
    pub fn has_vacuum_environment(&self) -> bool {
        self.fiducial || self.family == StateFamily::MaxEntangledIb
    }

    pub fn build(&self, dims: TripartiteDims) -> Result<StateVector> {
        let qubits = |d: usize, name: &'static str| {
            exact_log2(d).ok_or_else(|| {
                ScatterError::param(name, format!("{} requires qubit dimensions, got {d}", self.family.name()))
            })
        };
        let sys_dim = dims.ib();
        let system = if self.has_vacuum_environment() { sys_dim } else { dims.total() };
        let stream = RngStream::new(self.seed, 0).derive(0x57A7E);
        let psi = match self.family {
            StateFamily::Ghz | StateFamily::W => {
                let n = qubits(dims.d_i(), "n_i")? + qubits(dims.d_b(), "n_b")?
                    + if self.fiducial { 0 } else { qubits(dims.d_e(), "n_e")? };
                if self.family == StateFamily::Ghz {
                    ghz(n)?
                } else {
                    w(n)?
                }
            }
            StateFamily::MaxEntangledIb => max_entangled_ib(dims.d_i(), dims.d_b())?,
            StateFamily::Product => {
                let inner = random_pure_state(dims.d_i(), &stream.child(0))?;
                let boundary = random_pure_state(dims.d_b(), &stream.child(1))?;
                let ib = inner.tensor(&boundary)?;
                if self.fiducial {
                    ib
                } else {
                    ib.tensor(&random_pure_state(dims.d_e(), &stream.child(2))?)?
                }
            }
            StateFamily::RandomPure => random_pure_state(system, &stream.child(0))?,
            StateFamily::Custom => {
                let psi = self.custom.clone().ok_or_else(|| {
                    ScatterError::param("amplitudes", "custom family needs an amplitude file")
                })?;
                ScatterError::check_dim(system, psi.dim())?;
                psi
            }
        };
        if self.has_vacuum_environment() {
            extend_with_vacuum(&psi, dims.d_e())
        } else {
            Ok(psi)
        }
    }
}
