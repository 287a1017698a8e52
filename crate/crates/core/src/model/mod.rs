//! System, device and interaction in the joint eigenbasis `|n⟩⊗|k⟩`.
//!
//! Every downstream computation consumes the spectral form built here: the
//! system levels `E_n`, the device levels `β_k`, the interaction eigenvalues
//! `ξ_{jnk}` and the device-diagonal slices `ρ_{mnk}(0) = ⟨mk|ρ_AB(0)|nk⟩`.

mod matrices;

pub use matrices::{
    build_from_matrices, check_commutators, joint_spectra, lift_device, lift_system,
    CommutatorCheck, JointSpectra, MatrixInput, MatrixModel, COMMUTATOR_TOL,
};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};
use crate::protocol::Protocol;

/// Tolerance on the unit trace and Hermiticity of a stored initial state.
pub const STATE_TOL: f64 = 1e-12;
/// Tolerance on user-supplied density matrices (Hermiticity, trace, PSD).
pub const MATRIX_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    energies: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl SystemSpec {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        check_levels("system energies", &energies)?;
        Ok(SystemSpec {
            energies,
            labels: None,
        })
    }

    pub fn with_labels(energies: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != energies.len() {
            return Err(Error::ShapeMismatch {
                what: "system labels",
                expected: energies.len().to_string(),
                got: labels.len().to_string(),
            });
        }
        let mut spec = SystemSpec::new(energies)?;
        spec.labels = Some(labels);
        Ok(spec)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Transition frequency `ω_mn = E_m - E_n`.
    pub fn transition_frequency(&self, m: usize, n: usize) -> f64 {
        self.energies[m] - self.energies[n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    energies: Vec<f64>,
}

impl DeviceSpec {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        check_levels("device energies", &energies)?;
        Ok(DeviceSpec { energies })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }
}

fn check_levels(what: &'static str, energies: &[f64]) -> Result<()> {
    if energies.is_empty() {
        return Err(Error::Empty { what });
    }
    if let Some(i) = energies.iter().position(|e| !e.is_finite()) {
        return Err(Error::NonFinite {
            what,
            index: i.to_string(),
        });
    }
    Ok(())
}

/// Eigenvalues `ξ_{jnk}` of the measurement operators together with the
/// pulse schedule `f_j(t)` that switches each of them on.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    xi: Array3<f64>,
    protocol: Protocol,
}

impl InteractionSpec {
    /// `xi` has shape `(M, N, K)` and `protocol` must carry `M` pulses.
    pub fn new(xi: Array3<f64>, protocol: Protocol) -> Result<Self> {
        if xi.dim().0 != protocol.len() {
            return Err(Error::ShapeMismatch {
                what: "interaction eigenvalues vs pulses",
                expected: format!("{} measurement acts", protocol.len()),
                got: format!("{}", xi.dim().0),
            });
        }
        if let Some(((j, n, k), _)) = xi.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "interaction eigenvalues",
                index: format!("(j,n,k)=({j},{n},{k})"),
            });
        }
        Ok(InteractionSpec { xi, protocol })
    }

    /// No measurement at all on an `N × K` composite.
    pub fn none(n: usize, k: usize) -> Self {
        InteractionSpec {
            xi: Array3::zeros((0, n, k)),
            protocol: Protocol::empty(),
        }
    }

    pub fn xi(&self) -> &Array3<f64> {
        &self.xi
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn acts(&self) -> usize {
        self.xi.dim().0
    }

    /// Eigenvalue gap `x_{jmnk} = ξ_{jmk} - ξ_{jnk}`.
    pub fn gap(&self, j: usize, m: usize, n: usize, k: usize) -> f64 {
        self.xi[[j, m, k]] - self.xi[[j, n, k]]
    }

    /// Gap averaged over the measurement acts, `x_{mnk} = (1/M) Σ_j x_{jmnk}`.
    /// Zero when `M = 0`.
    pub fn mean_gap(&self, m: usize, n: usize, k: usize) -> f64 {
        let acts = self.acts();
        if acts == 0 {
            return 0.0;
        }
        (0..acts).map(|j| self.gap(j, m, n, k)).sum::<f64>() / acts as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Direct,
    Product,
    Composite,
}

/// Device-diagonal slices `ρ_{mnk}(0)` of the composite initial state,
/// stored as an `N × N × K` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoInitial {
    rho: Array3<Complex64>,
    provenance: Provenance,
}

impl RhoInitial {
    /// Validates Hermiticity of each device slice, nonnegative populations
    /// and unit total trace. Populations within `STATE_TOL` below zero are
    /// clamped to zero; each slice is symmetrized to exact Hermiticity.
    pub fn new(rho: Array3<Complex64>, provenance: Provenance) -> Result<Self> {
        Self::with_clamp(rho, provenance, STATE_TOL)
    }

    fn with_clamp(mut rho: Array3<Complex64>, provenance: Provenance, clamp: f64) -> Result<Self> {
        let (n, n2, k) = rho.dim();
        if n != n2 {
            return Err(Error::ShapeMismatch {
                what: "initial state",
                expected: format!("({n},{n},K)"),
                got: format!("({n},{n2},{k})"),
            });
        }
        if n == 0 || k == 0 {
            return Err(Error::Empty {
                what: "initial state",
            });
        }
        if let Some(((a, b, c), _)) = rho
            .indexed_iter()
            .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite {
                what: "initial state",
                index: format!("(m,n,k)=({a},{b},{c})"),
            });
        }
        for kk in 0..k {
            for m in 0..n {
                for l in m..n {
                    let residual = (rho[[m, l, kk]] - rho[[l, m, kk]].conj()).norm();
                    if residual > STATE_TOL {
                        return Err(Error::NotHermitian {
                            what: "initial state",
                            index: format!("(m,n,k)=({m},{l},{kk})"),
                            residual,
                        });
                    }
                    let avg = 0.5 * (rho[[m, l, kk]] + rho[[l, m, kk]].conj());
                    rho[[m, l, kk]] = avg;
                    rho[[l, m, kk]] = avg.conj();
                }
                let pop = rho[[m, m, kk]].re;
                if pop < -clamp {
                    return Err(Error::NegativeDiagonal {
                        what: "initial state",
                        index: format!("(n,k)=({m},{kk})"),
                        value: pop,
                    });
                }
                rho[[m, m, kk]] = Complex64::new(pop.max(0.0), 0.0);
            }
        }
        let trace: f64 = (0..n)
            .flat_map(|m| (0..k).map(move |kk| (m, kk)))
            .map(|(m, kk)| rho[[m, m, kk]].re)
            .sum();
        if (trace - 1.0).abs() > STATE_TOL {
            return Err(Error::Normalization { trace });
        }
        Ok(RhoInitial { rho, provenance })
    }

    /// Uncorrelated start `ρ_AB(0) = ρ_A ⊗ ρ_B`: `ρ_{mnk} = (ρ_A)_{mn} (ρ_B)_{kk}`.
    pub fn from_product(rho_a: &CMatrix, rho_b: &CMatrix) -> Result<Self> {
        check_density_matrix("system state", rho_a)?;
        check_density_matrix("device state", rho_b)?;
        let rho_a = linalg::hermitize(rho_a);
        let (n, k) = (rho_a.nrows(), rho_b.nrows());
        let rho = Array3::from_shape_fn((n, n, k), |(m, l, kk)| rho_a[[m, l]] * rho_b[[kk, kk]].re);
        Self::with_clamp(rho, Provenance::Product, MATRIX_TOL)
    }

    /// Device-diagonal slices of a full `(N·K) × (N·K)` composite state,
    /// system-major: `ρ_{mnk}` is the entry at row `m·K + k`, column `n·K + k`.
    pub fn from_full_composite(rho_ab: &CMatrix, n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Empty {
                what: "composite dimensions",
            });
        }
        if rho_ab.dim() != (n * k, n * k) {
            return Err(Error::ShapeMismatch {
                what: "composite state",
                expected: format!("({0},{0}) for N={n}, K={k}", n * k),
                got: format!("{:?}", rho_ab.dim()),
            });
        }
        check_density_matrix("composite state", rho_ab)?;
        let h = linalg::hermitize(rho_ab);
        let rho = Array3::from_shape_fn((n, n, k), |(m, l, kk)| h[[m * k + kk, l * k + kk]]);
        Self::with_clamp(rho, Provenance::Composite, MATRIX_TOL)
    }

    pub fn tensor(&self) -> &Array3<Complex64> {
        &self.rho
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn system_dim(&self) -> usize {
        self.rho.dim().0
    }

    pub fn device_dim(&self) -> usize {
        self.rho.dim().2
    }

    pub fn get(&self, m: usize, n: usize, k: usize) -> Complex64 {
        self.rho[[m, n, k]]
    }

    /// `ρ_mn = Σ_k ρ_{mnk}(0)`, summed in ascending `k`.
    pub fn marginal_element(&self, m: usize, n: usize) -> Complex64 {
        (0..self.device_dim()).fold(ZERO, |acc, k| acc + self.rho[[m, n, k]])
    }

    /// The initial reduced system state `ρ_A(0)`.
    pub fn marginal(&self) -> CMatrix {
        let n = self.system_dim();
        Array2::from_shape_fn((n, n), |(m, l)| self.marginal_element(m, l))
    }

    /// `ρ_nn`, the time-independent populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.system_dim())
            .map(|m| self.marginal_element(m, m).re)
            .collect()
    }
}

fn check_density_matrix(what: &'static str, rho: &CMatrix) -> Result<()> {
    let (r, c) = rho.dim();
    if r != c {
        return Err(Error::ShapeMismatch {
            what,
            expected: "square matrix".into(),
            got: format!("({r},{c})"),
        });
    }
    if r == 0 {
        return Err(Error::Empty { what });
    }
    if let Some(((i, j), _)) = rho
        .indexed_iter()
        .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::NonFinite {
            what,
            index: format!("({i},{j})"),
        });
    }
    let (residual, (i, j)) = linalg::hermiticity_residual(rho);
    if residual > MATRIX_TOL {
        return Err(Error::NotHermitian {
            what,
            index: format!("({i},{j})"),
            residual,
        });
    }
    let trace = linalg::trace(rho).re;
    if (trace - 1.0).abs() > MATRIX_TOL {
        return Err(Error::Normalization { trace });
    }
    let min_eigenvalue = linalg::min_eigenvalue(rho);
    if min_eigenvalue < -MATRIX_TOL {
        return Err(Error::NotPositive {
            what,
            min_eigenvalue,
        });
    }
    Ok(())
}

/// A validated system + device + interaction + initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeModel {
    system: SystemSpec,
    device: DeviceSpec,
    interaction: InteractionSpec,
    rho0: RhoInitial,
}

impl CompositeModel {
    /// Assembles a model whose operators are all given in the shared
    /// eigenbasis `|nk⟩`, so the nondestructive commutation conditions hold
    /// by construction. Only shape compatibility is checked here.
    pub fn build_from_spectral(
        system: SystemSpec,
        device: DeviceSpec,
        interaction: InteractionSpec,
        rho0: RhoInitial,
    ) -> Result<Self> {
        let (n, k) = (system.dim(), device.dim());
        let (_, xn, xk) = interaction.xi().dim();
        if (xn, xk) != (n, k) {
            return Err(Error::ShapeMismatch {
                what: "interaction eigenvalues",
                expected: format!("(M,{n},{k})"),
                got: format!("(M,{xn},{xk})"),
            });
        }
        if (rho0.system_dim(), rho0.device_dim()) != (n, k) {
            return Err(Error::ShapeMismatch {
                what: "initial state",
                expected: format!("({n},{n},{k})"),
                got: format!("{:?}", rho0.tensor().dim()),
            });
        }
        Ok(CompositeModel {
            system,
            device,
            interaction,
            rho0,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    pub fn interaction(&self) -> &InteractionSpec {
        &self.interaction
    }

    pub fn protocol(&self) -> &Protocol {
        self.interaction.protocol()
    }

    pub fn rho0(&self) -> &RhoInitial {
        &self.rho0
    }

    pub fn system_dim(&self) -> usize {
        self.system.dim()
    }

    pub fn device_dim(&self) -> usize {
        self.device.dim()
    }

    pub fn acts(&self) -> usize {
        self.interaction.acts()
    }

    /// Same model with the device levels `β_k` replaced.
    pub fn with_device(&self, device: DeviceSpec) -> Result<Self> {
        Self::build_from_spectral(
            self.system.clone(),
            device,
            self.interaction.clone(),
            self.rho0.clone(),
        )
    }

    /// Same model with a different pulse schedule (same `M`).
    pub fn with_protocol(&self, protocol: Protocol) -> Result<Self> {
        let interaction = InteractionSpec::new(self.interaction.xi().clone(), protocol)?;
        Self::build_from_spectral(
            self.system.clone(),
            self.device.clone(),
            interaction,
            self.rho0.clone(),
        )
    }

    pub(crate) fn check_indices(&self, m: usize, n: usize) -> Result<()> {
        let size = self.system_dim();
        for (what, index) in [("m", m), ("n", n)] {
            if index >= size {
                return Err(Error::IndexOutOfRange { what, index, size });
            }
        }
        Ok(())
    }
}
