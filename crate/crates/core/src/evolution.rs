//! Time evolution of the device-diagonal slices and the reduced system state.
//!
//! Because every operator is diagonal in `|nk⟩`, each slice only picks up a
//! phase: `ρ_{mnk}(t) = ρ_{mnk}(0) exp{-i[ω_mn t + Σ_j x_{jmnk} φ_j(t)]}`.
//! [`oracle_evolve`] reaches the same state by stepping the full composite
//! density matrix with pointwise pulse values and never touches the phase
//! integrals, so the two routes share no phase-assembly code.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};
use crate::model::CompositeModel;
use crate::protocol::{all_phases, Protocol};

/// Largest composite dimension `N·K` the oracle accepts.
pub const ORACLE_MAX_DIM: usize = 64;
/// Comparison windows around kicks extend this many smoothing widths.
pub const KICK_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensitySeries {
    pub times: Vec<f64>,
    pub rho: Vec<CMatrix>,
}

impl ReducedDensitySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rho.first().map_or(0, |r| r.nrows())
    }

    /// Hermiticity, unit trace and time-independent populations, each within
    /// `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let first = match self.rho.first() {
            Some(r) => r,
            None => return Ok(()),
        };
        for (s, r) in self.rho.iter().enumerate() {
            let (residual, (i, j)) = linalg::hermiticity_residual(r);
            if residual > tol {
                return Err(Error::NotHermitian {
                    what: "reduced density",
                    index: format!("sample {s}, ({i},{j})"),
                    residual,
                });
            }
            let trace = linalg::trace(r);
            if (trace - Complex64::new(1.0, 0.0)).norm() > tol {
                return Err(Error::Normalization { trace: trace.re });
            }
            for n in 0..r.nrows() {
                let drift = (r[[n, n]] - first[[n, n]]).norm();
                if drift > tol {
                    return Err(Error::InvalidParameter {
                        name: "populations",
                        reason: format!("population {n} drifted by {drift:e} at sample {s}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest entrywise `|Δρ|` over samples for which `keep(t)` holds.
    pub fn max_abs_difference(
        &self,
        other: &ReducedDensitySeries,
        keep: impl Fn(f64) -> bool,
    ) -> f64 {
        self.times
            .iter()
            .zip(self.rho.iter().zip(&other.rho))
            .filter(|(&t, _)| keep(t))
            .flat_map(|(_, (a, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Empty { what: "time grid" });
    }
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        if i > 0 && t < times[i - 1] {
            return Err(Error::UnsortedGrid(i));
        }
    }
    Ok(())
}

/// `ρ_{mnk}(t)` in closed form.
pub fn evolve_element(
    model: &CompositeModel,
    m: usize,
    n: usize,
    k: usize,
    t: f64,
) -> Result<Complex64> {
    model.check_indices(m, n)?;
    if k >= model.device_dim() {
        return Err(Error::IndexOutOfRange {
            what: "k",
            index: k,
            size: model.device_dim(),
        });
    }
    let phases = all_phases(model.protocol(), t)?;
    Ok(element_at(model, &phases.values, m, n, k, t))
}

fn element_at(
    model: &CompositeModel,
    phases: &[f64],
    m: usize,
    n: usize,
    k: usize,
    t: f64,
) -> Complex64 {
    let int = model.interaction();
    let impact: f64 = phases
        .iter()
        .enumerate()
        .map(|(j, phi)| int.gap(j, m, n, k) * phi)
        .sum();
    let angle = model.system().transition_frequency(m, n) * t + impact;
    model.rho0().get(m, n, k) * Complex64::from_polar(1.0, -angle)
}

/// `ρ^A_mn(t) = Σ_k ρ_{mnk}(t)` on every grid time. The `k` sum runs in
/// ascending order; samples are computed independently and may run on the
/// current rayon pool without affecting the result.
pub fn reduced_density(model: &CompositeModel, times: &[f64]) -> Result<ReducedDensitySeries> {
    check_grid(times)?;
    let (n, k) = (model.system_dim(), model.device_dim());
    let rho = times
        .par_iter()
        .map(|&t| {
            let phases = all_phases(model.protocol(), t)?;
            Ok(Array2::from_shape_fn((n, n), |(a, b)| {
                (0..k).fold(ZERO, |acc, kk| {
                    acc + element_at(model, &phases.values, a, b, kk, t)
                })
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedDensitySeries {
        times: times.to_vec(),
        rho,
    })
}

/// Brute-force reference: steps the full `N·K`-dimensional composite state
/// with `ρ ← U ρ U†`, `U = exp(-i H_AB(t_mid) Δt)`, where `H_AB` is assembled
/// from the level energies and the pointwise pulse values `f_j(t)`. True
/// deltas are replaced by smoothed kicks of width `smoothing_width`; step
/// boundaries are aligned with pulse breakpoints and output times.
pub fn oracle_evolve(
    model: &CompositeModel,
    times: &[f64],
    dt: f64,
    smoothing_width: f64,
) -> Result<ReducedDensitySeries> {
    check_grid(times)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("step must be positive, got {dt}"),
        });
    }
    if !(smoothing_width.is_finite() && smoothing_width > 0.0) {
        return Err(Error::InvalidParameter {
            name: "smoothing_width",
            reason: format!("must be positive, got {smoothing_width}"),
        });
    }
    let protocol = model.protocol();
    if protocol.has_kicks() && dt > smoothing_width / 10.0 {
        return Err(Error::StepTooLarge {
            dt,
            limit: smoothing_width / 10.0,
        });
    }
    let (n, k) = (model.system_dim(), model.device_dim());
    let dim = n * k;
    if dim > ORACLE_MAX_DIM {
        return Err(Error::TooLarge {
            dim,
            limit: ORACLE_MAX_DIM,
        });
    }
    let smooth = protocol.smoothed(smoothing_width)?;

    let mut rho = Array2::from_elem((dim, dim), ZERO);
    for a in 0..n {
        for b in 0..n {
            for kk in 0..k {
                rho[[a * k + kk, b * k + kk]] = model.rho0().get(a, b, kk);
            }
        }
    }

    let end = *times.last().expect("grid checked nonempty");
    let boundaries = step_boundaries(&smooth, times, dt, end);
    let mut out = Vec::with_capacity(times.len());
    let mut next_out = 0;
    let record = |rho: &CMatrix, now: f64, out: &mut Vec<CMatrix>, next: &mut usize| {
        while *next < times.len() && times[*next] <= now {
            out.push(linalg::trace_device(rho, n, k));
            *next += 1;
        }
    };
    record(&rho, 0.0, &mut out, &mut next_out);

    let mut levels = vec![0.0; dim];
    let mut phase = vec![ZERO; dim];
    let mut now = 0.0;
    for &b in &boundaries {
        let step = b - now;
        let mid = now + 0.5 * step;
        composite_levels(model, &smooth, mid, &mut levels);
        for (u, h) in phase.iter_mut().zip(&levels) {
            *u = Complex64::from_polar(1.0, -h * step);
        }
        for ((i, j), z) in rho.indexed_iter_mut() {
            *z *= phase[i] * phase[j].conj();
        }
        now = b;
        record(&rho, now, &mut out, &mut next_out);
    }
    debug_assert_eq!(out.len(), times.len());
    Ok(ReducedDensitySeries {
        times: times.to_vec(),
        rho: out,
    })
}

/// Diagonal of `H_AB(t) = E_n + β_k + Σ_j ξ_{jnk} f_j(t)` in system-major order.
fn composite_levels(model: &CompositeModel, protocol: &Protocol, t: f64, out: &mut [f64]) {
    let k = model.device_dim();
    let energies = model.system().energies();
    let betas = model.device().energies();
    let xi = model.interaction().xi();
    let drive: Vec<f64> = protocol
        .pulses()
        .iter()
        .map(|p| p.value(t).expect("smoothed protocol has pointwise values"))
        .collect();
    for (idx, h) in out.iter_mut().enumerate() {
        let (a, kk) = (idx / k, idx % k);
        *h = energies[a] + betas[kk];
        for (j, f) in drive.iter().enumerate() {
            *h += xi[[j, a, kk]] * f;
        }
    }
}

fn step_boundaries(protocol: &Protocol, times: &[f64], dt: f64, end: f64) -> Vec<f64> {
    let steps = (end / dt).ceil() as usize;
    let mut b: Vec<f64> = (1..=steps)
        .map(|i| i as f64 * dt)
        .filter(|&t| t < end)
        .collect();
    b.extend(times.iter().copied().filter(|&t| t > 0.0));
    b.extend(
        protocol
            .breakpoints()
            .into_iter()
            .filter(|&t| t > 0.0 && t < end),
    );
    b.push(end);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b.retain(|&t| t > 0.0);
    b
}

/// True when `t` is farther than `KICK_WINDOW · width` from every kick.
pub fn outside_kick_windows(protocol: &Protocol, width: f64, t: f64) -> bool {
    protocol
        .kick_times()
        .iter()
        .all(|&tk| (t - tk).abs() > KICK_WINDOW * width)
}
