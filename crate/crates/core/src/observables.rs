//! Expectation values of system observables and their diagonal-ensemble
//! limit.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoherence::{factorized_reduced_density, FactorSource};
use crate::error::{Error, Result};
use crate::evolution::ReducedDensitySeries;
use crate::linalg::{hermiticity_residual, CMatrix};
use crate::model::CompositeModel;

pub const HERMITIAN_TOL: f64 = 1e-12;
/// Largest imaginary part tolerated in an expectation value, relative to
/// `max(1, ‖A‖_max)`.
pub const REAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    label: String,
    matrix: CMatrix,
}

impl Observable {
    pub fn new(label: impl Into<String>, matrix: CMatrix) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::ShapeMismatch {
                what: "observable",
                expected: format!("{r}x{r}"),
                got: format!("{r}x{c}"),
            });
        }
        if let Some(((i, j), _)) = matrix
            .indexed_iter()
            .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite {
                what: "observable",
                index: format!("[{i}][{j}]"),
            });
        }
        let (residual, (i, j)) = hermiticity_residual(&matrix);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian {
                what: "observable",
                index: format!("[{i}][{j}]"),
                residual,
            });
        }
        Ok(Observable {
            label: label.into(),
            matrix,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest entry modulus `‖A‖_max`.
    pub fn max_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::ShapeMismatch {
                what: "observable",
                expected: format!("{n}x{n}"),
                got: format!("{0}x{0}", self.dim()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `Σ_n ρ_nn A_nn`.
    pub diagonal_part: Vec<f64>,
    /// Contribution of the coherences `m ≠ n`.
    pub coherent_part: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn real_part(z: Complex64, sample: usize, scale: f64) -> Result<f64> {
    if z.im.abs() > REAL_TOL * scale.max(1.0) {
        return Err(Error::NotReal { sample, imag: z.im });
    }
    Ok(z.re)
}

fn split(rho: &CMatrix, a: &CMatrix) -> (Complex64, Complex64) {
    let n = rho.nrows();
    let mut diag = Complex64::new(0.0, 0.0);
    let mut coh = Complex64::new(0.0, 0.0);
    for m in 0..n {
        for k in 0..n {
            let term = rho[[m, k]] * a[[k, m]];
            if m == k {
                diag += term;
            } else {
                coh += term;
            }
        }
    }
    (diag, coh)
}

fn assemble(
    a: &Observable,
    times: &[f64],
    parts: Vec<(Complex64, Complex64)>,
) -> Result<ObservableSeries> {
    let scale = a.max_norm();
    let mut out = ObservableSeries {
        label: a.label.clone(),
        times: times.to_vec(),
        values: Vec::with_capacity(parts.len()),
        diagonal_part: Vec::with_capacity(parts.len()),
        coherent_part: Vec::with_capacity(parts.len()),
    };
    for (i, (d, c)) in parts.into_iter().enumerate() {
        out.values.push(real_part(d + c, i, scale)?);
        out.diagonal_part.push(real_part(d, i, scale)?);
        out.coherent_part.push(real_part(c, i, scale)?);
    }
    Ok(out)
}

/// `⟨A(t)⟩ = Σ_mn ρ^A_mn(t) A_nm` for every sample of `series`.
pub fn expectation_direct(
    series: &ReducedDensitySeries,
    a: &Observable,
) -> Result<ObservableSeries> {
    if let Some(rho) = series.rho.first() {
        a.check_dim(rho.nrows())?;
    }
    let parts = series
        .rho
        .par_iter()
        .map(|rho| split(rho, &a.matrix))
        .collect();
    assemble(a, &series.times, parts)
}

/// `Σ_n ρ_nn A_nn + Σ_{m≠n} ρ_mn e^{-iω_mn t} D_mn(t) A_nm`.
pub fn expectation_factorized(
    model: &CompositeModel,
    a: &Observable,
    source: FactorSource<'_>,
    times: &[f64],
) -> Result<ObservableSeries> {
    let n = model.system_dim();
    a.check_dim(n)?;
    let mut parts = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); times.len()];
    for m in 0..n {
        for k in 0..n {
            let anm = a.matrix[[k, m]];
            if m != k && anm == Complex64::new(0.0, 0.0) {
                continue;
            }
            let column = factorized_reduced_density(model, (m, k), source, times)?;
            for (p, rho) in parts.iter_mut().zip(column) {
                if m == k {
                    p.0 += rho * anm;
                } else {
                    p.1 += rho * anm;
                }
            }
        }
    }
    assemble(a, times, parts)
}

/// Complete-decoherence limit `Σ_n ρ_nn A_nn`.
pub fn diagonal_ensemble(model: &CompositeModel, a: &Observable) -> Result<f64> {
    a.check_dim(model.system_dim())?;
    Ok(model
        .rho0()
        .populations()
        .iter()
        .enumerate()
        .map(|(n, p)| p * a.matrix[[n, n]].re)
        .sum())
}

/// `Σ_{m≠n} |ρ_mn| |A_nm|`; times `max |D_mn(t)|` it bounds the distance of
/// `⟨A(t)⟩` from the diagonal ensemble.
pub fn coherence_weight(model: &CompositeModel, a: &Observable) -> Result<f64> {
    let n = model.system_dim();
    a.check_dim(n)?;
    let mut total = 0.0;
    for m in 0..n {
        for k in 0..n {
            if m != k {
                total += model.rho0().marginal_element(m, k).norm() * a.matrix[[k, m]].norm();
            }
        }
    }
    Ok(total)
}
