//! Experiment configurations and runners producing CSV tables.
//!
//! Every run is a pure function of its [`ExperimentConfig`]: the same config
//! yields the same rows regardless of the number of worker threads.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concentration::{
    distance_samples, mean_distance_upper_bound, purity_spread, scattering_levy_bound, tail_report,
};
use crate::dims::{check_cap, Subsystems, TripartiteDims};
use crate::error::{Result, ScatterError};
use crate::haar::{haar_moment_p1, sample_haar_unitary, MomentCase, P2Monomial, RngStream};
use crate::purity::{
    delta_gamma, mean_purity_exact, mean_purity_fiducial, mean_purity_from_cross_weight, mean_purity_ghz,
    mean_purity_max_entangled, mean_purity_product, mean_purity_pure, mean_purity_w, FiducialFamily,
};
use crate::scattering::{mc_average_trajectory, product_state, PureScatterer};
use crate::states::{exact_log2, ghz, read_amplitude_file, w, StateFamily, StateSpec};
use crate::stats::{log_log_slope, par_fold, Welford};
use crate::tensor::{reduced_pure, DensityMatrix, StateVector};

/// Seed used when none is given, so documented commands are reproducible.
pub const DEFAULT_SEED: u64 = 20_240_917;
pub const DEFAULT_SAMPLES: u64 = 10_000;
pub const DEFAULT_EPSILONS: [f64; 4] = [0.1, 0.3, 0.5, 1.0];
pub const DEFAULT_NE_SWEEP: [u32; 4] = [1, 2, 6, 10];
/// Statistical pass threshold, in standard errors, for mean-value checks.
pub const Z_PASS: f64 = 4.0;
/// Slack, in binomial standard errors, allowed above an analytic tail bound.
pub const TAIL_SLACK_SE: f64 = 3.0;
/// Largest final trace distance accepted by the decoupling check.
pub const DECOUPLING_TOLERANCE: f64 = 0.05;
/// Absolute slack for rounding in trace distances that are exactly zero in theory.
pub const DISTANCE_ROUNDING: f64 = 1e-12;
/// Written in place of statistics that cannot be computed.
pub const NA: &str = "NA";

/// Largest environment qubit count accepted by the closed forms.
const MAX_ANALYTIC_NE: u32 = 126;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Decoupling,
    PurityScan,
    Concentration,
    Moments,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Decoupling,
        ExperimentKind::PurityScan,
        ExperimentKind::Concentration,
        ExperimentKind::Moments,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Decoupling => "decoupling",
            ExperimentKind::PurityScan => "purity-scan",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Moments => "moments",
        }
    }

    /// CSV header written by this experiment.
    pub fn schema(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Decoupling => &DECOUPLING_HEADER,
            ExperimentKind::PurityScan => &PURITY_SCAN_HEADER,
            ExperimentKind::Concentration => &CONCENTRATION_HEADER,
            ExperimentKind::Moments => &MOMENTS_HEADER,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ScatterError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScatterError::param("experiment", format!("unknown experiment `{s}`")))
    }
}

pub const PURITY_SCAN_HEADER: [&str; 10] = [
    "kind",
    "sample_index",
    "purity",
    "analytic",
    "mc_mean",
    "standard_error",
    "z_score",
    "n_samples",
    "seed",
    "config_hash",
];

pub const DECOUPLING_HEADER: [&str; 7] = [
    "kind",
    "n",
    "trace_distance",
    "max_elementwise_deviation",
    "slope",
    "seed",
    "config_hash",
];

pub const CONCENTRATION_HEADER: [&str; 14] = [
    "kind",
    "epsilon",
    "offset",
    "bound",
    "empirical_tail",
    "tail_standard_error",
    "n",
    "n_e",
    "std_dev",
    "mc_mean",
    "standard_error",
    "analytic",
    "seed",
    "config_hash",
];

pub const MOMENTS_HEADER: [&str; 10] = [
    "kind",
    "case",
    "d",
    "analytic",
    "mc_estimate",
    "standard_error",
    "z_score",
    "n",
    "seed",
    "config_hash",
];

/// Everything needed to reproduce one experiment. Unset dimension fields
/// default to one qubit each; qubit counts and raw dimensions are exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub n_i: Option<u32>,
    pub n_b: Option<u32>,
    pub n_e: Option<u32>,
    pub d_i: Option<usize>,
    pub d_b: Option<usize>,
    pub d_e: Option<usize>,
    pub family: StateFamily,
    /// Prepare the family on `I ⊗ B` and put the environment in `|0...0>`.
    pub fiducial: bool,
    /// Decoupling only: replace the `B ⊗ E` part of the input by the maximally mixed state.
    pub mixed_be: bool,
    pub samples: u64,
    pub seed: u64,
    pub epsilon: Vec<f64>,
    pub ne_sweep: Vec<u32>,
    /// Unitary dimension for the moments experiment.
    pub dim: usize,
    pub checkpoints: Option<Vec<u64>>,
    pub amplitudes: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            n_i: None,
            n_b: None,
            n_e: None,
            d_i: None,
            d_b: None,
            d_e: None,
            family: StateFamily::Ghz,
            fiducial: false,
            mixed_be: false,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            epsilon: DEFAULT_EPSILONS.to_vec(),
            ne_sweep: DEFAULT_NE_SWEEP.to_vec(),
            dim: 4,
            checkpoints: None,
            amplitudes: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: Some(kind),
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ScatterError::param("config", e.to_string()))
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment
            .ok_or_else(|| ScatterError::param("experiment", "no experiment selected"))
    }

    pub fn qubits(mut self, n_i: u32, n_b: u32, n_e: u32) -> Self {
        (self.n_i, self.n_b, self.n_e) = (Some(n_i), Some(n_b), Some(n_e));
        self
    }

    pub fn raw_dims(mut self, d_i: usize, d_b: usize, d_e: usize) -> Self {
        (self.d_i, self.d_b, self.d_e) = (Some(d_i), Some(d_b), Some(d_e));
        self
    }

    pub fn dims(&self) -> Result<TripartiteDims> {
        let any_qubits = self.n_i.or(self.n_b).or(self.n_e).is_some();
        let any_raw = self.d_i.or(self.d_b).or(self.d_e).is_some();
        if any_qubits && any_raw {
            return Err(ScatterError::param(
                "dims",
                "give either qubit counts (n-i, n-b, n-e) or raw dimensions (d-i, d-b, d-e), not both",
            ));
        }
        if any_raw {
            let get = |v: Option<usize>, name: &'static str| {
                v.ok_or_else(|| ScatterError::param(name, "missing; raw dimensions need all of d-i, d-b, d-e"))
            };
            TripartiteDims::new(get(self.d_i, "d-i")?, get(self.d_b, "d-b")?, get(self.d_e, "d-e")?)
        } else {
            TripartiteDims::from_qubits(self.n_i.unwrap_or(1), self.n_b.unwrap_or(1), self.n_e.unwrap_or(1))
        }
    }

    /// Checks field-level invariants, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        if self.samples < 1 {
            return Err(ScatterError::param("samples", "must be >= 1"));
        }
        if let Some(&bad) = self.epsilon.iter().find(|&&e| !(e.is_finite() && e > 0.0)) {
            return Err(ScatterError::param("epsilon", format!("must be positive, got {bad}")));
        }
        if self.epsilon.is_empty() && kind == ExperimentKind::Concentration {
            return Err(ScatterError::param("epsilon", "grid is empty"));
        }
        if let Some(&bad) = self.ne_sweep.iter().find(|&&n| n > MAX_ANALYTIC_NE) {
            return Err(ScatterError::param(
                "ne-sweep",
                format!("N_E = {bad} exceeds {MAX_ANALYTIC_NE}"),
            ));
        }
        if let Some(cps) = &self.checkpoints {
            if cps.is_empty() || cps[0] == 0 || cps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ScatterError::param(
                    "checkpoints",
                    "must be nonempty, positive and strictly increasing",
                ));
            }
        }
        if self.family == StateFamily::Custom && self.amplitudes.is_none() {
            return Err(ScatterError::param("amplitudes", "custom family needs an amplitude file"));
        }
        match kind {
            ExperimentKind::Moments => {
                if self.dim < 1 {
                    return Err(ScatterError::param("dim", "must be >= 1"));
                }
                check_cap(self.dim)?;
            }
            _ => {
                check_cap(self.dims()?.be())?;
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form, ignoring the output path.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        let text = toml::to_string(&canonical).unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn state_spec(&self) -> Result<StateSpec> {
        let mut spec = StateSpec::new(self.family).fiducial(self.fiducial).seed(self.seed);
        if self.family == StateFamily::Custom {
            let path = self
                .amplitudes
                .as_ref()
                .ok_or_else(|| ScatterError::param("amplitudes", "custom family needs an amplitude file"))?;
            spec.custom = Some(read_amplitude_file(path)?);
        }
        Ok(spec)
    }

    fn sampling_stream(&self) -> RngStream {
        RngStream::new(self.seed, 1)
    }
}

/// A finished experiment: its table and the verdict of its statistical checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub kind: ExperimentKind,
    pub rows: Vec<Vec<String>>,
    pub passed: bool,
    /// Human-readable notes on each check.
    pub messages: Vec<String>,
}

impl ExperimentOutcome {
    pub fn header(&self) -> &'static [&'static str] {
        self.kind.schema()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| ScatterError::Io(e.to_string());
        wr.write_record(self.header()).map_err(io)?;
        for row in &self.rows {
            wr.write_record(row).map_err(io)?;
        }
        let bytes = wr.into_inner().map_err(|e| ScatterError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ScatterError::Io(e.to_string()))
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), num)
}

/// Builds rows of a fixed width, stamping seed and config hash into the last two columns.
struct RowBuilder {
    width: usize,
    seed: String,
    hash: String,
}

impl RowBuilder {
    fn new(header: &[&str], config: &ExperimentConfig) -> Self {
        RowBuilder {
            width: header.len(),
            seed: config.seed.to_string(),
            hash: config.config_hash(),
        }
    }

    fn row(&self, fields: &[(usize, String)]) -> Vec<String> {
        let mut r = vec![String::new(); self.width];
        for (i, v) in fields {
            r[*i] = v.clone();
        }
        r[self.width - 2] = self.seed.clone();
        r[self.width - 1] = self.hash.clone();
        r
    }
}

/// Runs the selected experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    match config.kind()? {
        ExperimentKind::PurityScan => run_purity_scan(config),
        ExperimentKind::Decoupling => run_decoupling(config),
        ExperimentKind::Concentration => run_concentration(config),
        ExperimentKind::Moments => run_moments(config),
    }
}

fn qubit_split(dims: TripartiteDims) -> Option<(u32, u32, u32)> {
    Some((exact_log2(dims.d_i())?, exact_log2(dims.d_b())?, exact_log2(dims.d_e())?))
}

/// Closed-form mean conditional purity for the state a config describes.
///
/// GHZ, W, product and maximally entangled inputs use their dedicated formulas
/// when the split allows it; anything else goes through `Δ - Γ` of `psi`.
pub fn analytic_mean_purity(
    family: StateFamily,
    fiducial: bool,
    dims: TripartiteDims,
    psi: &StateVector,
) -> Result<f64> {
    let (d_b, d_e) = (dims.d_b() as u128, dims.d_e() as u128);
    let split = qubit_split(dims);
    match (family, split) {
        (StateFamily::Ghz | StateFamily::W, Some((n_i, n_b, n_e))) if n_i >= 1 && n_b >= 1 => {
            if fiducial && n_i + n_b == 3 {
                mean_purity_fiducial(FiducialFamily::try_from(family)?, n_b, n_e)
            } else if !fiducial && n_e >= 1 {
                let n = n_i + n_b + n_e;
                if family == StateFamily::Ghz {
                    mean_purity_ghz(n, n_i, n_b)
                } else {
                    mean_purity_w(n, n_i, n_b)
                }
            } else {
                mean_purity_pure(psi, dims)
            }
        }
        (StateFamily::Product, _) => mean_purity_product(d_b, d_e),
        (StateFamily::MaxEntangledIb, _) if dims.d_i() == dims.d_b() => mean_purity_max_entangled(d_b, d_e),
        _ => mean_purity_pure(psi, dims),
    }
}

/// One row per Haar draw with its conditional purity, then a summary row.
pub fn run_purity_scan(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let dims = config.dims()?;
    check_cap(dims.be())?;
    let psi = config.state_spec()?.build(dims)?;
    let analytic = analytic_mean_purity(config.family, config.fiducial, dims, &psi)?;
    let samples = PureScatterer::new(&psi, dims)?.purity_samples(config.samples, &config.sampling_stream())?;

    let rb = RowBuilder::new(&PURITY_SCAN_HEADER, config);
    let mut rows: Vec<Vec<String>> = samples
        .iter()
        .enumerate()
        .map(|(k, p)| rb.row(&[(0, "sample".into()), (1, k.to_string()), (2, num(*p))]))
        .collect();
    let w: Welford = samples.iter().copied().collect();
    let (se, z, passed, message) = match w.estimate() {
        Ok(est) => {
            let z = est.z_score(analytic);
            let ok = z.abs() <= Z_PASS;
            let msg = format!(
                "mean purity {:.6} vs analytic {:.6}: z = {:.3} ({})",
                est.mean,
                analytic,
                z,
                if ok { "pass" } else { "FAIL" }
            );
            (Some(est.standard_error), Some(z), ok, msg)
        }
        Err(_) => (
            None,
            None,
            true,
            format!("single draw {:.6} vs analytic {:.6}: standard error not available", w.mean(), analytic),
        ),
    };
    rows.push(rb.row(&[
        (0, "summary".into()),
        (3, num(analytic)),
        (4, num(w.mean())),
        (5, opt(se)),
        (6, opt(z)),
        (7, samples.len().to_string()),
    ]));
    Ok(ExperimentOutcome {
        kind: ExperimentKind::PurityScan,
        rows,
        passed,
        messages: vec![message],
    })
}

/// `100, 200, 500, 1000, ...` below `n`, followed by `n` itself.
pub fn default_checkpoints(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut decade = 100u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let Some(cp) = decade.checked_mul(m) else { break 'outer };
            if cp >= n {
                break 'outer;
            }
            out.push(cp);
        }
        match decade.checked_mul(10) {
            Some(d) => decade = d,
            None => break,
        }
    }
    out.push(n);
    out
}

fn decoupling_input(config: &ExperimentConfig, dims: TripartiteDims) -> Result<DensityMatrix> {
    let psi = config.state_spec()?.build(dims)?;
    if config.mixed_be {
        let rho_i = reduced_pure(&psi, dims, Subsystems::I)?;
        let mixed = DensityMatrix::maximally_mixed(dims.be())?;
        product_state(&[&rho_i, &mixed])
    } else {
        Ok(psi.to_density())
    }
}

/// Running distance between the Monte Carlo average and `rho_I ⊗ 1/d_B`.
pub fn run_decoupling(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let dims = config.dims()?;
    check_cap(dims.be())?;
    let rho = decoupling_input(config, dims)?;
    let checkpoints = match &config.checkpoints {
        Some(cps) => cps.clone(),
        None => default_checkpoints(config.samples),
    };
    let traj = mc_average_trajectory(&rho, dims, &checkpoints, &config.sampling_stream())?;
    let points: Vec<(f64, f64)> = traj
        .iter()
        .filter(|t| t.trace_distance > 0.0)
        .map(|t| (t.n_samples as f64, t.trace_distance))
        .collect();
    let slope = if points.len() >= 2 { log_log_slope(&points) } else { None };

    let rb = RowBuilder::new(&DECOUPLING_HEADER, config);
    let mut rows: Vec<Vec<String>> = traj
        .iter()
        .map(|t| {
            rb.row(&[
                (0, "checkpoint".into()),
                (1, t.n_samples.to_string()),
                (2, num(t.trace_distance)),
                (3, num(t.max_elementwise_deviation)),
            ])
        })
        .collect();
    let last = traj.last().expect("checkpoints are nonempty");
    rows.push(rb.row(&[
        (0, "summary".into()),
        (1, last.n_samples.to_string()),
        (2, num(last.trace_distance)),
        (3, num(last.max_elementwise_deviation)),
        (4, opt(slope)),
    ]));
    let passed = last.trace_distance < DECOUPLING_TOLERANCE;
    let mut messages = vec![format!(
        "final trace distance {:.4e} at n = {} ({} {DECOUPLING_TOLERANCE})",
        last.trace_distance,
        last.n_samples,
        if passed { "pass: <" } else { "FAIL: >=" }
    )];
    if let Some(s) = slope {
        messages.push(format!("fitted log-log slope {s:.3}"));
    }
    Ok(ExperimentOutcome {
        kind: ExperimentKind::Decoupling,
        rows,
        passed,
        messages,
    })
}

/// Cross weight `Δ - Γ` of `psi_sys` split after its first `n_i` qubits.
fn system_cross_weight(psi_sys: &StateVector, n_i: u32, n_b: u32) -> Result<f64> {
    Ok(delta_gamma(psi_sys, TripartiteDims::from_qubits(n_i, n_b, 0)?)?.difference())
}

fn fiducial_analytic(family: StateFamily, psi_sys: &StateVector, n_i: u32, n_b: u32, n_e: u32) -> Result<f64> {
    if n_i + n_b == 3 {
        return mean_purity_fiducial(FiducialFamily::try_from(family)?, n_b, n_e);
    }
    let d_b = 1u128 << n_b;
    let d_e = 1u128 << n_e;
    let exact = match family {
        StateFamily::Ghz => Some(Ratio::new(1, 2)),
        StateFamily::W => Some(crate::purity::w_cross_weight(n_i + n_b, n_i)),
        _ => None,
    };
    if let Some(x) = exact {
        if let Some(r) = mean_purity_exact(x, d_b, d_e)? {
            return Ok(*r.numer() as f64 / *r.denom() as f64);
        }
    }
    mean_purity_from_cross_weight(system_cross_weight(psi_sys, n_i, n_b)?, d_b, d_e)
}

/// Tail frequencies against the analytic bound, the mean distance against its
/// bound, and the spread of the conditional purity across environment sizes.
pub fn run_concentration(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let dims = config.dims()?;
    let psi = config.state_spec()?.build(dims)?;
    let rho_i = reduced_pure(&psi, dims, Subsystems::I)?;
    let stream = config.sampling_stream();
    let distances = distance_samples(&rho_i, dims, config.samples, &stream.derive(1))?;

    let rb = RowBuilder::new(&CONCENTRATION_HEADER, config);
    let mut rows = Vec::new();
    let mut messages = Vec::new();
    let mut passed = true;
    let (d_b, d_e) = (dims.d_b() as u128, dims.d_e() as u128);
    for &eps in &config.epsilon {
        let r = tail_report(scattering_levy_bound(d_b, d_e, eps)?, &distances);
        let ok = r.consistent();
        passed &= ok;
        messages.push(format!(
            "eps = {eps}: tail {:.4e} vs bound {:.4e} ({})",
            r.empirical_tail.unwrap_or(0.0),
            r.bound,
            if ok { "pass" } else { "FAIL" }
        ));
        rows.push(rb.row(&[
            (0, "tail".into()),
            (1, num(eps)),
            (2, num(r.offset)),
            (3, num(r.bound)),
            (4, opt(r.empirical_tail)),
            (5, opt(r.tail_standard_error())),
            (6, distances.len().to_string()),
        ]));
    }

    let w: Welford = distances.iter().copied().collect();
    let bound = mean_distance_upper_bound(d_b, d_e);
    let se = w.estimate().ok().map(|e| e.standard_error);
    let ok = w.mean() <= bound + TAIL_SLACK_SE * se.unwrap_or(0.0) + DISTANCE_ROUNDING;
    passed &= ok;
    messages.push(format!(
        "mean distance {:.4e} vs bound {:.4e} ({})",
        w.mean(),
        bound,
        if ok { "pass" } else { "FAIL" }
    ));
    rows.push(rb.row(&[
        (0, "mean-distance".into()),
        (2, num(bound)),
        (6, distances.len().to_string()),
        (9, num(w.mean())),
        (10, opt(se)),
        (11, num(bound)),
    ]));

    if let (StateFamily::Ghz | StateFamily::W, Some((n_i, n_b, _))) = (config.family, qubit_split(dims)) {
        if n_i >= 1 && n_b >= 1 && !config.ne_sweep.is_empty() {
            let (r, ok, msg) = spread_rows(config, &rb, n_i, n_b, &stream)?;
            rows.extend(r);
            passed &= ok;
            messages.push(msg);
        }
    }
    Ok(ExperimentOutcome {
        kind: ExperimentKind::Concentration,
        rows,
        passed,
        messages,
    })
}

/// Purity spread of the family on `n_i + n_b` qubits with a fiducial environment.
/// Environments too large to simulate get the closed-form mean only.
fn spread_rows(
    config: &ExperimentConfig,
    rb: &RowBuilder,
    n_i: u32,
    n_b: u32,
    stream: &RngStream,
) -> Result<(Vec<Vec<String>>, bool, String)> {
    let psi_sys = if config.family == StateFamily::Ghz { ghz(n_i + n_b)? } else { w(n_i + n_b)? };
    let mut rows = Vec::new();
    let mut simulated = Vec::new();
    for &n_e in &config.ne_sweep {
        let analytic = fiducial_analytic(config.family, &psi_sys, n_i, n_b, n_e)?;
        let fits = n_b + n_e < usize::BITS - 1 && check_cap(1usize << (n_b + n_e)).is_ok();
        if fits && config.samples >= 2 {
            let pt = purity_spread(&psi_sys, n_i, n_b, &[n_e], config.samples, &stream.derive(2))?[0];
            simulated.push(pt.std_dev);
            rows.push(rb.row(&[
                (0, "spread".into()),
                (6, config.samples.to_string()),
                (7, n_e.to_string()),
                (8, num(pt.std_dev)),
                (9, num(pt.estimate.mean)),
                (10, num(pt.estimate.standard_error)),
                (11, num(analytic)),
            ]));
        } else {
            rows.push(rb.row(&[
                (0, "spread".into()),
                (6, "0".into()),
                (7, n_e.to_string()),
                (8, NA.into()),
                (9, NA.into()),
                (10, NA.into()),
                (11, num(analytic)),
            ]));
        }
    }
    let ok = simulated.windows(2).all(|p| p[1] < p[0]);
    let msg = format!(
        "purity spread over N_E = {:?}: {:?} ({})",
        config.ne_sweep,
        simulated,
        if ok { "strictly decreasing, pass" } else { "not strictly decreasing, FAIL" }
    );
    Ok((rows, ok, msg))
}

/// A monomial of Haar matrix entries with its exact integral.
#[derive(Debug, Clone)]
pub struct MomentProbe {
    pub kind: &'static str,
    pub label: String,
    pub analytic: f64,
    monomial: Monomial,
}

#[derive(Debug, Clone, Copy)]
enum Monomial {
    /// `U*_{ij} U_{kl}`.
    P1 { i: usize, j: usize, k: usize, l: usize },
    P2(P2Monomial),
}

impl MomentProbe {
    fn evaluate(&self, u: &crate::tensor::CMatrix) -> f64 {
        match self.monomial {
            Monomial::P1 { i, j, k, l } => (u[(i, j)].conj() * u[(k, l)]).re,
            Monomial::P2(m) => m.evaluate(u).re,
        }
    }
}

/// The first-order diagonal moment, every second-order case realizable in
/// dimension `d`, and (for `d >= 2`) monomials whose integral vanishes.
pub fn moment_probes(d: usize) -> Result<Vec<MomentProbe>> {
    let mut probes = vec![MomentProbe {
        kind: "p1",
        label: "P1_DIAGONAL".into(),
        analytic: haar_moment_p1(d)?,
        monomial: Monomial::P1 { i: 0, j: 0, k: 0, l: 0 },
    }];
    for case in MomentCase::ALL {
        if d >= case.min_dim() {
            probes.push(MomentProbe {
                kind: "p2",
                label: case.tag().into(),
                analytic: case.representative().integral(d)?,
                monomial: Monomial::P2(case.representative()),
            });
        }
    }
    if d >= 2 {
        probes.push(MomentProbe {
            kind: "zero",
            label: "ZERO_P1_OFFSET_COLUMN".into(),
            analytic: 0.0,
            monomial: Monomial::P1 { i: 0, j: 0, k: 0, l: 1 },
        });
        for (label, idx) in [
            ("ZERO_P2_UNPAIRED_COLUMN", [0, 0, 0, 0, 0, 0, 0, 1]),
            ("ZERO_P2_MISMATCHED_COLUMNS", [0, 0, 1, 1, 0, 1, 1, 1]),
            ("ZERO_P2_MISMATCHED_ROWS", [0, 0, 1, 0, 1, 0, 1, 0]),
        ] {
            let m = P2Monomial::from_indices(idx);
            probes.push(MomentProbe {
                kind: "zero",
                label: label.into(),
                analytic: m.integral(d)?,
                monomial: Monomial::P2(m),
            });
        }
    }
    Ok(probes)
}

/// Monte Carlo means of each probe over `n` Haar unitaries of size `d`.
pub fn mc_moments(probes: &[MomentProbe], d: usize, n: u64, stream: &RngStream) -> Result<Vec<Welford>> {
    let init = || Ok(vec![Welford::new(); probes.len()]);
    par_fold(
        n as usize,
        init,
        |k| {
            let u = sample_haar_unitary(d, &stream.child(k as u64))?;
            Ok(probes
                .iter()
                .map(|p| {
                    let mut w = Welford::new();
                    w.push(p.evaluate(&u));
                    w
                })
                .collect())
        },
        merge_welfords,
        merge_welfords,
    )
}

fn merge_welfords(acc: &mut Result<Vec<Welford>>, x: Result<Vec<Welford>>) {
    match (acc.as_mut(), x) {
        (Ok(a), Ok(v)) => a.iter_mut().zip(&v).for_each(|(a, b)| a.merge(b)),
        (Ok(_), Err(e)) => *acc = Err(e),
        (Err(_), _) => {}
    }
}

/// Monte Carlo check of first- and second-order Haar moments in dimension `dim`.
pub fn run_moments(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let d = config.dim;
    if config.samples < 2 {
        return Err(ScatterError::param("samples", "moments need at least 2 samples"));
    }
    let probes = moment_probes(d)?;
    let stats = mc_moments(&probes, d, config.samples, &config.sampling_stream())?;
    let rb = RowBuilder::new(&MOMENTS_HEADER, config);
    let mut rows = Vec::new();
    let mut messages = Vec::new();
    let mut passed = true;
    for (p, w) in probes.iter().zip(&stats) {
        let est = w.estimate()?;
        let z = est.z_score(p.analytic);
        let ok = z.abs() <= Z_PASS;
        passed &= ok;
        messages.push(format!(
            "{} d = {d}: {:.6} vs {:.6}, z = {z:.3} ({})",
            p.label,
            est.mean,
            p.analytic,
            if ok { "pass" } else { "FAIL" }
        ));
        rows.push(rb.row(&[
            (0, p.kind.into()),
            (1, p.label.clone()),
            (2, d.to_string()),
            (3, num(p.analytic)),
            (4, num(est.mean)),
            (5, num(est.standard_error)),
            (6, num(z)),
            (7, est.n_samples.to_string()),
        ]));
    }
    Ok(ExperimentOutcome {
        kind: ExperimentKind::Moments,
        rows,
        passed,
        messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_checkpoint_sequence() {
        assert_eq!(default_checkpoints(10_000), vec![100, 200, 500, 1000, 2000, 5000, 10_000]);
        assert_eq!(default_checkpoints(50), vec![50]);
        assert_eq!(default_checkpoints(300), vec![100, 200, 300]);
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"purity-scan\"\nn-i = 1\nn-b = 2\nn-e = 2\nfamily = \"w\"\nfiducial = true\nsamples = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.kind().unwrap(), ExperimentKind::PurityScan);
        assert_eq!(cfg.dims().unwrap(), TripartiteDims::from_qubits(1, 2, 2).unwrap());
        cfg.validate().unwrap();
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());

        let both = ExperimentConfig::new(ExperimentKind::Decoupling).qubits(1, 1, 1).raw_dims(2, 2, 2);
        assert!(matches!(both.dims(), Err(ScatterError::InvalidParameter { name: "dims", .. })));
        let mut partial = ExperimentConfig::new(ExperimentKind::Decoupling);
        partial.d_i = Some(2);
        assert!(matches!(partial.dims(), Err(ScatterError::InvalidParameter { name: "d-b", .. })));
        let mut zero = ExperimentConfig::new(ExperimentKind::PurityScan);
        zero.samples = 0;
        assert!(matches!(zero.validate(), Err(ScatterError::InvalidParameter { name: "samples", .. })));
        let mut eps = ExperimentConfig::new(ExperimentKind::Concentration);
        eps.epsilon = vec![0.1, -0.2];
        assert!(matches!(eps.validate(), Err(ScatterError::InvalidParameter { name: "epsilon", .. })));
        let big = ExperimentConfig::new(ExperimentKind::PurityScan).qubits(1, 2, 20);
        assert!(matches!(big.validate(), Err(ScatterError::DimensionCap { .. })));
        assert!(ExperimentConfig::default().validate().is_err());
    }

    #[test]
    fn config_hash_ignores_output_only() {
        let a = ExperimentConfig::new(ExperimentKind::Moments);
        let mut b = a.clone();
        b.output = Some("x.csv".into());
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn analytic_purity_matches_general_formula() {
        let cases = [
            (StateFamily::Ghz, false, (1, 1, 1)),
            (StateFamily::W, false, (1, 1, 1)),
            (StateFamily::W, false, (2, 1, 2)),
            (StateFamily::Ghz, true, (1, 2, 2)),
            (StateFamily::W, true, (2, 1, 3)),
            (StateFamily::W, true, (1, 1, 2)),
            (StateFamily::Product, false, (1, 1, 1)),
            (StateFamily::MaxEntangledIb, false, (1, 1, 2)),
            (StateFamily::RandomPure, false, (1, 1, 2)),
        ];
        for (family, fiducial, (a, b, c)) in cases {
            let dims = TripartiteDims::from_qubits(a, b, c).unwrap();
            let psi = StateSpec::new(family).fiducial(fiducial).seed(3).build(dims).unwrap();
            assert_abs_diff_eq!(
                analytic_mean_purity(family, fiducial, dims, &psi).unwrap(),
                mean_purity_pure(&psi, dims).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn fiducial_analytic_beyond_three_qubits() {
        for family in [StateFamily::Ghz, StateFamily::W] {
            let psi_sys = if family == StateFamily::Ghz { ghz(4).unwrap() } else { w(4).unwrap() };
            for n_e in [1, 3] {
                let dims = TripartiteDims::from_qubits(1, 3, n_e).unwrap();
                let psi = crate::states::fiducial_extend(&psi_sys, n_e).unwrap();
                assert_abs_diff_eq!(
                    fiducial_analytic(family, &psi_sys, 1, 3, n_e).unwrap(),
                    mean_purity_pure(&psi, dims).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn purity_scan_small() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::PurityScan).qubits(1, 1, 1);
        cfg.samples = 300;
        cfg.seed = 42;
        let out = run(&cfg).unwrap();
        assert_eq!(out.rows.len(), 301);
        let summary = out.rows.last().unwrap();
        assert_eq!(summary[0], "summary");
        assert_eq!(summary[3], "0.6");
        assert!(out.passed, "{:?}", out.messages);
        let csv = out.to_csv().unwrap();
        assert!(csv.starts_with(&PURITY_SCAN_HEADER.join(",")));
    }

    #[test]
    fn purity_scan_single_sample() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::PurityScan);
        cfg.samples = 1;
        let out = run(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.rows[1][5], NA);
    }

    #[test]
    fn moments_table_contains_exact_values() {
        let probes = moment_probes(4).unwrap();
        let values: Vec<f64> = probes.iter().filter(|p| p.kind == "p2").map(|p| p.analytic).collect();
        let want = [1.0 / 15.0, -1.0 / 60.0, 1.0 / 20.0, 1.0 / 20.0, 1.0 / 10.0];
        for (v, w) in values.iter().zip(want) {
            assert_abs_diff_eq!(*v, w, epsilon = 1e-15);
        }
        assert_eq!(moment_probes(8).unwrap()[0].analytic, 0.125);
        assert!(probes.iter().filter(|p| p.kind == "zero").all(|p| p.analytic == 0.0));
        let d1 = moment_probes(1).unwrap();
        assert_eq!(d1.len(), 2);
    }

    #[test]
    fn mixed_input_is_a_fixed_point() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Decoupling).raw_dims(2, 2, 2);
        cfg.family = StateFamily::RandomPure;
        cfg.mixed_be = true;
        cfg.samples = 500;
        let out = run(&cfg).unwrap();
        assert!(out.passed);
        let last: f64 = out.rows.last().unwrap()[2].parse().unwrap();
        assert!(last < 1e-12);
    }
}
