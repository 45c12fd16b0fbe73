//! Tripartite inner/boundary/environment dimensions and the flat index layout.
//!
//! A basis label `(i, b, e)` is stored at flat index `i * d_B * d_E + b * d_E + e`.
//! Every vector, matrix and partial trace in this crate uses that layout.

use serde::{Deserialize, Serialize};
use std::ops::BitOr;

use crate::error::{Result, ScatterError};

/// Default bound on `d_B * d_E` (the side of a sampled unitary) and on any dense matrix side.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Environment variable that overrides [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "SCATTERLAB_DIM_CAP";

/// Longest state vector any constructor will build.
pub const MAX_STATE_LEN: usize = 1 << 24;

/// Current dimension cap, honouring `SCATTERLAB_DIM_CAP` when it parses as a positive integer.
pub fn dim_cap() -> usize {
    std::env::var(DIM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_DIM_CAP)
}

pub(crate) fn check_cap(requested: usize) -> Result<()> {
    let cap = dim_cap();
    if requested > cap {
        Err(ScatterError::DimensionCap { requested, cap })
    } else {
        Ok(())
    }
}

pub(crate) fn check_state_len(requested: usize) -> Result<()> {
    if requested > MAX_STATE_LEN {
        Err(ScatterError::DimensionCap {
            requested,
            cap: MAX_STATE_LEN,
        })
    } else {
        Ok(())
    }
}

/// `2^n` as a dimension, refusing shifts that cannot be represented.
pub fn qubit_dim(n: u32) -> Result<usize> {
    if n >= usize::BITS - 1 {
        return Err(ScatterError::DimensionCap {
            requested: usize::MAX,
            cap: MAX_STATE_LEN,
        });
    }
    Ok(1usize << n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    Inner,
    Boundary,
    Environment,
}

/// A subset of `{I, B, E}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Subsystems(u8);

impl Subsystems {
    pub const NONE: Subsystems = Subsystems(0);
    pub const I: Subsystems = Subsystems(0b001);
    pub const B: Subsystems = Subsystems(0b010);
    pub const E: Subsystems = Subsystems(0b100);
    pub const IB: Subsystems = Subsystems(0b011);
    pub const BE: Subsystems = Subsystems(0b110);
    pub const ALL: Subsystems = Subsystems(0b111);

    pub fn contains(self, s: Subsystem) -> bool {
        self.0 & Subsystems::from(s).0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn without(self, s: Subsystem) -> Subsystems {
        Subsystems(self.0 & !Subsystems::from(s).0)
    }

    /// Members of `self` that are not in `other`.
    pub fn without_all(self, other: Subsystems) -> Subsystems {
        Subsystems(self.0 & !other.0)
    }
}

impl From<Subsystem> for Subsystems {
    fn from(s: Subsystem) -> Self {
        match s {
            Subsystem::Inner => Subsystems::I,
            Subsystem::Boundary => Subsystems::B,
            Subsystem::Environment => Subsystems::E,
        }
    }
}

impl BitOr for Subsystems {
    type Output = Subsystems;
    fn bitor(self, rhs: Self) -> Self {
        Subsystems(self.0 | rhs.0)
    }
}

impl BitOr<Subsystem> for Subsystems {
    type Output = Subsystems;
    fn bitor(self, rhs: Subsystem) -> Self {
        self | Subsystems::from(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripartiteDims {
    d_i: usize,
    d_b: usize,
    d_e: usize,
}

impl TripartiteDims {
    /// All factors must be at least 1 and `d_B * d_E` must fit the dimension cap.
    pub fn new(d_i: usize, d_b: usize, d_e: usize) -> Result<Self> {
        if d_i == 0 || d_b == 0 || d_e == 0 {
            return Err(ScatterError::InvalidDims(format!(
                "all dimensions must be >= 1, got ({d_i}, {d_b}, {d_e})"
            )));
        }
        let be = d_b
            .checked_mul(d_e)
            .ok_or(ScatterError::DimensionCap {
                requested: usize::MAX,
                cap: dim_cap(),
            })?;
        check_cap(be)?;
        let total = be.checked_mul(d_i).ok_or(ScatterError::DimensionCap {
            requested: usize::MAX,
            cap: MAX_STATE_LEN,
        })?;
        check_state_len(total)?;
        Ok(TripartiteDims { d_i, d_b, d_e })
    }

    pub fn from_qubits(n_i: u32, n_b: u32, n_e: u32) -> Result<Self> {
        TripartiteDims::new(qubit_dim(n_i)?, qubit_dim(n_b)?, qubit_dim(n_e)?)
    }

    pub fn d_i(&self) -> usize {
        self.d_i
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn of(&self, s: Subsystem) -> usize {
        match s {
            Subsystem::Inner => self.d_i,
            Subsystem::Boundary => self.d_b,
            Subsystem::Environment => self.d_e,
        }
    }

    pub fn total(&self) -> usize {
        self.d_i * self.d_b * self.d_e
    }

    /// Side of the boundary-environment unitary.
    pub fn be(&self) -> usize {
        self.d_b * self.d_e
    }

    pub fn ib(&self) -> usize {
        self.d_i * self.d_b
    }

    /// Product of the dimensions in `set`; the empty set has dimension 1.
    pub fn dim_of(&self, set: Subsystems) -> usize {
        [Subsystem::Inner, Subsystem::Boundary, Subsystem::Environment]
            .into_iter()
            .filter(|&s| set.contains(s))
            .map(|s| self.of(s))
            .product()
    }

    #[inline]
    pub fn index(&self, i: usize, b: usize, e: usize) -> usize {
        debug_assert!(i < self.d_i && b < self.d_b && e < self.d_e);
        (i * self.d_b + b) * self.d_e + e
    }

    #[inline]
    pub fn split(&self, flat: usize) -> (usize, usize, usize) {
        let e = flat % self.d_e;
        let rest = flat / self.d_e;
        (rest / self.d_b, rest % self.d_b, e)
    }

    /// Dimensions of what survives after keeping `keep`; traced factors become 1.
    pub fn reduced(&self, keep: Subsystems) -> TripartiteDims {
        let pick = |s: Subsystem| if keep.contains(s) { self.of(s) } else { 1 };
        TripartiteDims {
            d_i: pick(Subsystem::Inner),
            d_b: pick(Subsystem::Boundary),
            d_e: pick(Subsystem::Environment),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_layout() {
        let d = TripartiteDims::new(2, 3, 5).unwrap();
        assert_eq!(d.index(1, 2, 4), 15 + 2 * 5 + 4);
        assert_eq!(d.index(0, 0, 0), 0);
        assert_eq!(d.index(1, 2, 4), d.total() - 1);
        for flat in 0..d.total() {
            let (i, b, e) = d.split(flat);
            assert_eq!(d.index(i, b, e), flat);
        }
    }

    #[test]
    fn rejects_zero_and_oversized() {
        assert!(matches!(
            TripartiteDims::new(0, 2, 2),
            Err(ScatterError::InvalidDims(_))
        ));
        assert!(matches!(
            TripartiteDims::new(2, 2, DEFAULT_DIM_CAP),
            Err(ScatterError::DimensionCap { .. })
        ));
        assert!(TripartiteDims::new(64, 2, 2048).is_ok());
    }

    #[test]
    fn subsystem_sets() {
        let s = Subsystems::I | Subsystem::Environment;
        assert!(s.contains(Subsystem::Inner));
        assert!(!s.contains(Subsystem::Boundary));
        assert_eq!(s.without(Subsystem::Inner), Subsystems::E);
        let d = TripartiteDims::new(2, 3, 4).unwrap();
        assert_eq!(d.dim_of(Subsystems::BE), 12);
        assert_eq!(d.dim_of(Subsystems::NONE), 1);
        assert_eq!(d.reduced(Subsystems::IB), TripartiteDims::new(2, 3, 1).unwrap());
    }
}
