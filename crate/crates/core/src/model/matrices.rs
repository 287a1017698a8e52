//! Matrix-mode input: arbitrary commuting Hermitian operators on the
//! composite space, reduced to the spectral form.
//!
//! The joint eigenbasis has to be a product basis `|n⟩⊗|k⟩` for the device
//! trace to make sense, so the system and device bases are found separately.
//! On the system side the family is `H_A` together with the partial
//! contractions `Tr_B[X_j (1⊗Y_j)]` for random Hermitian `Y_j`; these are all
//! diagonal in `|n⟩` whenever every `X_j` is diagonal in some product basis.
//! The device side is handled symmetrically.

use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompositeModel, DeviceSpec, InteractionSpec, RhoInitial, SystemSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};
use crate::protocol::Protocol;

/// Relative commutator tolerance: `‖[P,Q]‖_F ≤ ε_c ‖P‖_F ‖Q‖_F`.
pub const COMMUTATOR_TOL: f64 = 1e-10;
/// Relative off-diagonal residual accepted after diagonalization.
const DIAGONAL_TOL: f64 = 1e-9;
const RANDOM_ATTEMPTS: usize = 5;
const JOINT_SEED: u64 = 0x51ed_d1a6;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixInput {
    pub system_dim: usize,
    pub device_dim: usize,
    /// `H_A ⊗ 1`, already lifted to the composite space.
    pub h_a: CMatrix,
    /// `1 ⊗ H_B`, already lifted.
    pub h_b: CMatrix,
    pub x: Vec<CMatrix>,
    pub rho_ab: CMatrix,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorCheck {
    pub left: String,
    pub right: String,
    pub residual: f64,
    pub threshold: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectra {
    pub system_energies: Vec<f64>,
    pub device_energies: Vec<f64>,
    /// `ξ_{jnk}`, shape `(M, N, K)`.
    pub xi: Array3<f64>,
    /// Columns are the system eigenvectors `|n⟩` in the input basis.
    pub system_basis: CMatrix,
    pub device_basis: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixModel {
    pub model: CompositeModel,
    pub system_basis: CMatrix,
    pub device_basis: CMatrix,
    pub commutators: Vec<CommutatorCheck>,
}

impl MatrixModel {
    /// Expresses a system-space operator given in the input basis in the
    /// model's eigenbasis.
    pub fn to_model_basis(&self, a: &CMatrix) -> CMatrix {
        linalg::conjugate_by(a, &self.system_basis)
    }

    pub fn from_model_basis(&self, a: &CMatrix) -> CMatrix {
        self.system_basis
            .dot(a)
            .dot(&linalg::dagger(&self.system_basis))
    }
}

/// `H ⊗ 1_K`.
pub fn lift_system(h: &CMatrix, device_dim: usize) -> CMatrix {
    linalg::kron(h, &linalg::identity(device_dim))
}

/// `1_N ⊗ H`.
pub fn lift_device(h: &CMatrix, system_dim: usize) -> CMatrix {
    linalg::kron(&linalg::identity(system_dim), h)
}

fn operator_names(m: usize) -> Vec<String> {
    let mut names = vec!["H_A".to_string(), "H_B".to_string()];
    names.extend((1..=m).map(|j| format!("X_{j}")));
    names
}

/// Every pairwise commutator among `{H_A, H_B, X_1, …, X_M}`.
pub fn check_commutators(h_a: &CMatrix, h_b: &CMatrix, x: &[CMatrix]) -> Vec<CommutatorCheck> {
    let names = operator_names(x.len());
    let ops: Vec<&CMatrix> = [h_a, h_b].into_iter().chain(x.iter()).collect();
    let norms: Vec<f64> = ops.iter().map(|a| linalg::frobenius(a)).collect();
    let mut out = Vec::new();
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            let residual = linalg::frobenius(&linalg::commutator(ops[i], ops[j]));
            let threshold = COMMUTATOR_TOL * norms[i] * norms[j];
            out.push(CommutatorCheck {
                left: names[i].clone(),
                right: names[j].clone(),
                residual,
                threshold,
                ok: residual <= threshold,
            });
        }
    }
    out
}

fn check_square(what: &'static str, a: &CMatrix, dim: usize) -> Result<()> {
    if a.dim() != (dim, dim) {
        return Err(Error::ShapeMismatch {
            what,
            expected: format!("({dim},{dim})"),
            got: format!("{:?}", a.dim()),
        });
    }
    let (residual, (i, j)) = linalg::hermiticity_residual(a);
    if residual > super::MATRIX_TOL * linalg::frobenius(a).max(1.0) {
        return Err(Error::NotHermitian {
            what,
            index: format!("({i},{j})"),
            residual,
        });
    }
    Ok(())
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = Array2::from_shape_fn((n, n), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    linalg::hermitize(&a)
}

/// A unitary whose columns diagonalize every member of a commuting family.
fn diagonalize_family(family: &[(String, CMatrix)], rng: &mut ChaCha8Rng) -> Result<CMatrix> {
    let dim = family[0].1.nrows();
    let scale = family
        .iter()
        .map(|(_, a)| linalg::frobenius(a))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let verify = |u: &CMatrix| -> std::result::Result<(), (String, f64)> {
        for (name, a) in family {
            let r = linalg::off_diagonal_norm(&linalg::conjugate_by(a, u));
            if r > DIAGONAL_TOL * scale {
                return Err((name.clone(), r));
            }
        }
        Ok(())
    };

    for _ in 0..RANDOM_ATTEMPTS {
        let mut combo = Array2::from_elem((dim, dim), ZERO);
        for (_, a) in family {
            let c: f64 = rng.random_range(-1.0..1.0);
            combo = combo + a.mapv(|z| z * c);
        }
        let (_, u) = linalg::eigh(&combo);
        if verify(&u).is_ok() {
            return Ok(u);
        }
    }

    let u = blockwise(family, scale);
    verify(&u).map_err(|(operator, residual)| Error::JointDiagonalizationFailure {
        operator,
        residual,
    })?;
    Ok(u)
}

/// Sequential diagonalization, refining degenerate blocks one operator at a
/// time.
fn blockwise(family: &[(String, CMatrix)], scale: f64) -> CMatrix {
    let dim = family[0].1.nrows();
    let mut u = linalg::identity(dim);
    let mut blocks = vec![(0, dim)];
    for (_, a) in family {
        let mut refined = Vec::new();
        for &(start, end) in &blocks {
            let v = u.slice(s![.., start..end]).to_owned();
            let sub = linalg::conjugate_by(a, &v);
            let (vals, w) = linalg::eigh(&sub);
            let rotated = v.dot(&w);
            u.slice_mut(s![.., start..end]).assign(&rotated);
            let mut lo = 0;
            for i in 1..=vals.len() {
                if i == vals.len() || vals[i] - vals[i - 1] > DIAGONAL_TOL * scale {
                    refined.push((start + lo, start + i));
                    lo = i;
                }
            }
        }
        blocks = refined;
    }
    u
}

fn diagonal_entries(a: &CMatrix, u: &CMatrix) -> Vec<f64> {
    linalg::conjugate_by(a, u)
        .diag()
        .iter()
        .map(|z| z.re)
        .collect()
}

/// Joint product eigenbasis of the commuting family and the spectra read off
/// in it.
pub fn joint_spectra(
    system_dim: usize,
    device_dim: usize,
    h_a: &CMatrix,
    h_b: &CMatrix,
    x: &[CMatrix],
) -> Result<JointSpectra> {
    let (n, k) = (system_dim, device_dim);
    if n == 0 || k == 0 {
        return Err(Error::Empty {
            what: "factor dimensions",
        });
    }
    let total = n * k;
    check_square("H_A", h_a, total)?;
    check_square("H_B", h_b, total)?;
    for xj in x {
        check_square("X_j", xj, total)?;
    }

    let h_a_factor = linalg::trace_device(h_a, n, k).mapv(|z| z / k as f64);
    let h_b_factor = linalg::trace_system(h_b, n, k).mapv(|z| z / n as f64);
    for (name, lifted, rebuilt, expected) in [
        ("H_A", h_a, lift_system(&h_a_factor, k), "H ⊗ 1"),
        ("H_B", h_b, lift_device(&h_b_factor, n), "1 ⊗ H"),
    ] {
        let residual = linalg::frobenius(&(lifted - &rebuilt));
        if residual > COMMUTATOR_TOL * linalg::frobenius(lifted).max(1.0) {
            return Err(Error::FactorStructure {
                operator: name.to_string(),
                expected,
                residual,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(JOINT_SEED);
    let mut system_family = vec![("H_A".to_string(), h_a_factor)];
    let mut device_family = vec![("H_B".to_string(), h_b_factor)];
    for (j, xj) in x.iter().enumerate() {
        let y = lift_device(&random_hermitian(&mut rng, k), n);
        let z = lift_system(&random_hermitian(&mut rng, n), k);
        system_family.push((
            format!("X_{} (system part)", j + 1),
            linalg::hermitize(&linalg::trace_device(&xj.dot(&y), n, k)),
        ));
        device_family.push((
            format!("X_{} (device part)", j + 1),
            linalg::hermitize(&linalg::trace_system(&xj.dot(&z), n, k)),
        ));
    }
    let v_a = diagonalize_family(&system_family, &mut rng)?;
    let v_b = diagonalize_family(&device_family, &mut rng)?;
    let w = linalg::kron(&v_a, &v_b);

    let mut xi = Array3::zeros((x.len(), n, k));
    for (j, xj) in x.iter().enumerate() {
        let d = linalg::conjugate_by(xj, &w);
        let residual = linalg::off_diagonal_norm(&d);
        if residual > DIAGONAL_TOL * linalg::frobenius(xj).max(f64::MIN_POSITIVE) {
            return Err(Error::JointDiagonalizationFailure {
                operator: format!("X_{}", j + 1),
                residual,
            });
        }
        for m in 0..n {
            for kk in 0..k {
                xi[[j, m, kk]] = d[[m * k + kk, m * k + kk]].re;
            }
        }
    }

    Ok(JointSpectra {
        system_energies: diagonal_entries(&system_family[0].1, &v_a),
        device_energies: diagonal_entries(&device_family[0].1, &v_b),
        xi,
        system_basis: v_a,
        device_basis: v_b,
    })
}

/// Validates nondestructiveness, finds the joint eigenbasis and returns the
/// spectral model expressed in it.
pub fn build_from_matrices(input: &MatrixInput) -> Result<MatrixModel> {
    if input.x.len() != input.protocol.len() {
        return Err(Error::ShapeMismatch {
            what: "measurement operators vs pulses",
            expected: format!("{} operators", input.protocol.len()),
            got: input.x.len().to_string(),
        });
    }
    let commutators = check_commutators(&input.h_a, &input.h_b, &input.x);
    if let Some(bad) = commutators.iter().find(|c| !c.ok) {
        return Err(Error::CommutatorViolation {
            left: bad.left.clone(),
            right: bad.right.clone(),
            residual: bad.residual,
            threshold: bad.threshold,
        });
    }
    let (n, k) = (input.system_dim, input.device_dim);
    let spectra = joint_spectra(n, k, &input.h_a, &input.h_b, &input.x)?;
    let w = linalg::kron(&spectra.system_basis, &spectra.device_basis);
    if input.rho_ab.dim() != (n * k, n * k) {
        return Err(Error::ShapeMismatch {
            what: "composite state",
            expected: format!("({0},{0})", n * k),
            got: format!("{:?}", input.rho_ab.dim()),
        });
    }
    let rho = linalg::conjugate_by(&input.rho_ab, &w);
    let model = CompositeModel::build_from_spectral(
        SystemSpec::new(spectra.system_energies)?,
        DeviceSpec::new(spectra.device_energies)?,
        InteractionSpec::new(spectra.xi, input.protocol.clone())?,
        RhoInitial::from_full_composite(&rho, n, k)?,
    )?;
    Ok(MatrixModel {
        model,
        system_basis: spectra.system_basis,
        device_basis: spectra.device_basis,
        commutators,
    })
}
