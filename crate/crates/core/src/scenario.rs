//! Scenario files: parsing, validation and assembly into a model.
//!
//! Complex entries are written as `[re, im]` pairs. Errors carry the JSON path
//! of the offending value so the command line can report it.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decoherence::{AnalyticParams, Family, PairSigma};
use crate::error::Error;
use crate::linalg::CMatrix;
use crate::model::{
    lift_device, lift_system, CompositeModel, DeviceSpec, InteractionSpec, MatrixInput, Provenance,
    RhoInitial, SystemSpec,
};
use crate::observables::Observable;
use crate::output::file_stem;
use crate::protocol::{Protocol, PulseShape, DEFAULT_SMOOTHING_WIDTH};

pub type Cplx = [f64; 2];

/// A failure to read or validate an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputError {
    pub kind: String,
    pub path: String,
    pub message: String,
}

impl InputError {
    pub fn new(
        kind: impl Into<String>,
        path: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        InputError {
            kind: kind.into(),
            path: path.into(),
            message: message.into(),
        }
    }

    fn at(path: impl Into<String>, e: Error) -> Self {
        InputError::new(e.kind(), path, e.to_string())
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}: {}", self.kind, self.message)
        } else {
            write!(f, "{} at {}: {}", self.kind, self.path, self.message)
        }
    }
}

impl std::error::Error for InputError {}

/// Deserialize `text` and report the failing path on error.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, InputError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        // Segments the parser never entered show up as "?".
        let path = path.trim_end_matches(".?").trim_end_matches('?');
        let path = if path == "." {
            String::new()
        } else {
            path.to_string()
        };
        let inner = e.into_inner();
        let kind = match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => "syntax",
            _ => "schema",
        };
        InputError::new(kind, path, inner.to_string())
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub energies: Vec<f64>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub energies: Vec<f64>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            energies: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSection {
    /// `xi[j][n][k]`.
    #[serde(default)]
    pub xi: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub pulses: Vec<PulseShape>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Device-diagonal slices `slices[m][n][k] = ρ_mnk(0)`.
    Direct { slices: Vec<Vec<Vec<Cplx>>> },
    Product {
        rho_a: Vec<Vec<Cplx>>,
        rho_b: Vec<Vec<Cplx>>,
    },
    /// Full composite state, system-major (`row = n·K + k`).
    Composite { rho_ab: Vec<Vec<Cplx>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub samples: usize,
}

impl TimeGrid {
    pub fn validate(&self) -> Result<(), InputError> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(InputError::new(
                "invalid_parameter",
                "time_grid",
                "bounds must be finite",
            ));
        }
        if self.start < 0.0 {
            return Err(InputError::at(
                "time_grid.start",
                Error::NegativeTime(self.start),
            ));
        }
        if self.start > self.stop {
            return Err(InputError::new(
                "invalid_parameter",
                "time_grid",
                format!("start {} exceeds stop {}", self.start, self.stop),
            ));
        }
        if self.samples == 0 {
            return Err(InputError::new(
                "invalid_parameter",
                "time_grid.samples",
                "need at least one sample",
            ));
        }
        Ok(())
    }

    /// Evenly spaced samples including both ends.
    pub fn times(&self) -> Vec<f64> {
        if self.samples == 1 {
            return vec![self.start];
        }
        let last = self.samples - 1;
        let step = (self.stop - self.start) / last as f64;
        (0..self.samples)
            .map(|i| {
                if i == last {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    pub label: String,
    pub matrix: Vec<Vec<Cplx>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    Gaussian,
    Lorentz,
    /// The model's own effect densities.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceSection {
    pub family: FamilyChoice,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub overrides: Vec<PairSigma>,
    /// Also emit curves from this many atoms sampled from the parametric law.
    #[serde(default)]
    pub sampled_atoms: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_width")]
    pub smoothing_width: f64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_width() -> f64 {
    DEFAULT_SMOOTHING_WIDTH
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            dt: default_dt(),
            smoothing_width: default_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default)]
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    #[serde(default)]
    pub device: DeviceSection,
    #[serde(default)]
    pub interaction: InteractionSection,
    pub initial_state: InitialState,
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub observables: Vec<ObservableSection>,
    #[serde(default)]
    pub decoherence: Option<DecoherenceSection>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// How the decoherence curves of a scenario are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoherencePlan {
    Empirical,
    Analytic {
        params: AnalyticParams,
        sampled_atoms: Option<(usize, u64)>,
    },
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: CompositeModel,
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub decoherence: Option<DecoherencePlan>,
    pub oracle: OracleSection,
}

fn complex(z: Cplx) -> Complex64 {
    Complex64::new(z[0], z[1])
}

/// Square complex matrix from nested rows.
pub fn cmatrix(rows: &[Vec<Cplx>], dim: usize, path: &str) -> Result<CMatrix, InputError> {
    if rows.len() != dim {
        return Err(shape(path, format!("{dim} rows"), rows.len().to_string()));
    }
    let mut out = Array2::zeros((dim, dim));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(shape(
                &format!("{path}[{i}]"),
                format!("{dim} entries"),
                row.len().to_string(),
            ));
        }
        for (j, &z) in row.iter().enumerate() {
            if !(z[0].is_finite() && z[1].is_finite()) {
                return Err(InputError::new(
                    "non_finite",
                    format!("{path}[{i}][{j}]"),
                    "entry must be finite",
                ));
            }
            out[[i, j]] = complex(z);
        }
    }
    Ok(out)
}

fn shape(path: &str, expected: String, got: String) -> InputError {
    InputError::new(
        "shape_mismatch",
        path,
        format!("expected {expected}, got {got}"),
    )
}

fn check_finite(values: &[f64], path: &str) -> Result<(), InputError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(InputError::new(
            "non_finite",
            format!("{path}[{i}]"),
            "value must be finite",
        )),
        None => Ok(()),
    }
}

fn xi_tensor(xi: &[Vec<Vec<f64>>], n: usize, k: usize) -> Result<Array3<f64>, InputError> {
    let m = xi.len();
    let mut out = Array3::zeros((m, n, k));
    for (j, act) in xi.iter().enumerate() {
        if act.len() != n {
            return Err(shape(
                &format!("interaction.xi[{j}]"),
                format!("{n} system levels"),
                act.len().to_string(),
            ));
        }
        for (a, row) in act.iter().enumerate() {
            let path = format!("interaction.xi[{j}][{a}]");
            if row.len() != k {
                return Err(shape(
                    &path,
                    format!("{k} device levels"),
                    row.len().to_string(),
                ));
            }
            check_finite(row, &path)?;
            for (b, &v) in row.iter().enumerate() {
                out[[j, a, b]] = v;
            }
        }
    }
    Ok(out)
}

fn initial_state(state: &InitialState, n: usize, k: usize) -> Result<RhoInitial, InputError> {
    match state {
        InitialState::Direct { slices } => {
            let path = "initial_state.slices";
            if slices.len() != n {
                return Err(shape(path, format!("{n} rows"), slices.len().to_string()));
            }
            let mut t = Array3::zeros((n, n, k));
            for (a, row) in slices.iter().enumerate() {
                if row.len() != n {
                    return Err(shape(
                        &format!("{path}[{a}]"),
                        format!("{n} columns"),
                        row.len().to_string(),
                    ));
                }
                for (b, cell) in row.iter().enumerate() {
                    let p = format!("{path}[{a}][{b}]");
                    if cell.len() != k {
                        return Err(shape(
                            &p,
                            format!("{k} device levels"),
                            cell.len().to_string(),
                        ));
                    }
                    for (c, &z) in cell.iter().enumerate() {
                        if !(z[0].is_finite() && z[1].is_finite()) {
                            return Err(InputError::new(
                                "non_finite",
                                format!("{p}[{c}]"),
                                "entry must be finite",
                            ));
                        }
                        t[[a, b, c]] = complex(z);
                    }
                }
            }
            RhoInitial::new(t, Provenance::Direct).map_err(|e| InputError::at(path, e))
        }
        InitialState::Product { rho_a, rho_b } => {
            let a = cmatrix(rho_a, n, "initial_state.rho_a")?;
            let b = cmatrix(rho_b, k, "initial_state.rho_b")?;
            RhoInitial::from_product(&a, &b).map_err(|e| InputError::at("initial_state", e))
        }
        InitialState::Composite { rho_ab } => {
            let ab = cmatrix(rho_ab, n * k, "initial_state.rho_ab")?;
            RhoInitial::from_full_composite(&ab, n, k)
                .map_err(|e| InputError::at("initial_state.rho_ab", e))
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, InputError> {
        parse_json(text)
    }

    pub fn build_model(&self) -> Result<CompositeModel, InputError> {
        let system = match &self.system.labels {
            Some(labels) => SystemSpec::with_labels(self.system.energies.clone(), labels.clone()),
            None => SystemSpec::new(self.system.energies.clone()),
        }
        .map_err(|e| InputError::at("system", e))?;
        let device = DeviceSpec::new(self.device.energies.clone())
            .map_err(|e| InputError::at("device", e))?;
        let (n, k) = (system.dim(), device.dim());
        let protocol = Protocol::new(self.interaction.pulses.clone())
            .map_err(|e| InputError::at("interaction.pulses", e))?;
        let xi = xi_tensor(&self.interaction.xi, n, k)?;
        let interaction =
            InteractionSpec::new(xi, protocol).map_err(|e| InputError::at("interaction", e))?;
        let rho0 = initial_state(&self.initial_state, n, k)?;
        CompositeModel::build_from_spectral(system, device, interaction, rho0)
            .map_err(|e| InputError::at("", e))
    }

    pub fn prepare(&self) -> Result<Prepared, InputError> {
        let model = self.build_model()?;
        self.time_grid.validate()?;
        let n = model.system_dim();

        let mut labels = BTreeSet::new();
        let mut observables = Vec::with_capacity(self.observables.len());
        for (i, o) in self.observables.iter().enumerate() {
            let path = format!("observables[{i}]");
            if !labels.insert(file_stem(&o.label)) {
                return Err(InputError::new(
                    "duplicate_label",
                    format!("{path}.label"),
                    format!(
                        "label {:?} collides with an earlier one as a file name",
                        o.label
                    ),
                ));
            }
            let a = cmatrix(&o.matrix, n, &format!("{path}.matrix"))?;
            observables.push(
                Observable::new(o.label.clone(), a)
                    .map_err(|e| InputError::at(format!("{path}.matrix"), e))?,
            );
        }

        let decoherence = match &self.decoherence {
            None => None,
            Some(d) => Some(self.decoherence_plan(d, n)?),
        };

        let o = self.oracle;
        if !(o.dt.is_finite() && o.dt > 0.0) {
            return Err(InputError::new(
                "invalid_parameter",
                "oracle.dt",
                "step must be positive",
            ));
        }
        if !(o.smoothing_width.is_finite() && o.smoothing_width > 0.0) {
            return Err(InputError::new(
                "invalid_parameter",
                "oracle.smoothing_width",
                "width must be positive",
            ));
        }

        Ok(Prepared {
            model,
            times: self.time_grid.times(),
            observables,
            decoherence,
            oracle: o,
        })
    }

    fn decoherence_plan(
        &self,
        d: &DecoherenceSection,
        n: usize,
    ) -> Result<DecoherencePlan, InputError> {
        let family = match d.family {
            FamilyChoice::Empirical => {
                if d.sigma.is_some() || !d.overrides.is_empty() || d.sampled_atoms.is_some() {
                    return Err(InputError::new(
                        "invalid_parameter",
                        "decoherence",
                        "the empirical family takes no sigma, overrides or sampled atoms",
                    ));
                }
                return Ok(DecoherencePlan::Empirical);
            }
            FamilyChoice::Gaussian => Family::Gaussian,
            FamilyChoice::Lorentz => Family::Lorentz,
        };
        let sigma = d.sigma.ok_or_else(|| {
            InputError::new(
                "missing_field",
                "decoherence.sigma",
                "parametric families need sigma",
            )
        })?;
        let mut params = AnalyticParams::new(family, sigma)
            .map_err(|e| InputError::at("decoherence.sigma", e))?;
        for (i, o) in d.overrides.iter().enumerate() {
            let path = format!("decoherence.overrides[{i}]");
            if o.m >= n || o.n >= n {
                return Err(InputError::new(
                    "index_out_of_range",
                    path,
                    format!("pair ({}, {}) outside {n} levels", o.m, o.n),
                ));
            }
            params = params
                .with_override(o.m, o.n, o.sigma)
                .map_err(|e| InputError::at(format!("{path}.sigma"), e))?;
        }
        let sampled_atoms = match d.sampled_atoms {
            None => None,
            Some(0) => {
                return Err(InputError::new(
                    "invalid_parameter",
                    "decoherence.sampled_atoms",
                    "need at least one atom",
                ))
            }
            Some(count) => {
                let seed = self.seed.ok_or_else(|| {
                    InputError::new("missing_field", "seed", "sampled atoms need a seed")
                })?;
                Some((count, seed))
            }
        };
        Ok(DecoherencePlan::Analytic {
            params,
            sampled_atoms,
        })
    }
}

/// Input of the matrix-validation mode. `h_a` and `h_b` may be given either on
/// their own factor or already lifted to the composite space.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixScenario {
    pub system_dim: usize,
    pub device_dim: usize,
    pub h_a: Vec<Vec<Cplx>>,
    pub h_b: Vec<Vec<Cplx>>,
    pub x: Vec<Vec<Vec<Cplx>>>,
    /// Defaults to the maximally mixed composite state.
    #[serde(default)]
    pub rho_ab: Option<Vec<Vec<Cplx>>>,
    /// Defaults to unit kicks at `t = 1, 2, …`, one per interaction.
    #[serde(default)]
    pub pulses: Option<Vec<PulseShape>>,
}

impl MatrixScenario {
    pub fn from_json(text: &str) -> Result<Self, InputError> {
        parse_json(text)
    }

    pub fn to_input(&self) -> Result<MatrixInput, InputError> {
        let (n, k) = (self.system_dim, self.device_dim);
        if n == 0 || k == 0 {
            return Err(InputError::new(
                "invalid_parameter",
                "",
                "dimensions must be positive",
            ));
        }
        let dim = n * k;
        let h_a = if self.h_a.len() == dim {
            cmatrix(&self.h_a, dim, "h_a")?
        } else {
            lift_system(&cmatrix(&self.h_a, n, "h_a")?, k)
        };
        let h_b = if self.h_b.len() == dim {
            cmatrix(&self.h_b, dim, "h_b")?
        } else {
            lift_device(&cmatrix(&self.h_b, k, "h_b")?, n)
        };
        let x = self
            .x
            .iter()
            .enumerate()
            .map(|(j, m)| cmatrix(m, dim, &format!("x[{j}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let rho_ab = match &self.rho_ab {
            Some(r) => cmatrix(r, dim, "rho_ab")?,
            None => CMatrix::from_diag_elem(dim, Complex64::new(1.0 / dim as f64, 0.0)),
        };
        let protocol = match &self.pulses {
            Some(p) => Protocol::new(p.clone()),
            None => Protocol::kicks(&(1..=x.len()).map(|j| j as f64).collect::<Vec<_>>()),
        }
        .map_err(|e| InputError::at("pulses", e))?;
        Ok(MatrixInput {
            system_dim: n,
            device_dim: k,
            h_a,
            h_b,
            x,
            rho_ab,
            protocol,
        })
    }
}
