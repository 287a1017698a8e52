//! Effect densities and decoherence factors.
//!
//! After the last measurement, with every integral impact equal to a common
//! `φ(t)`, the coherence `ρ^A_mn(t)` factorizes into `ρ_mn e^{-iω_mn t}` times
//! the decoherence factor `D_mn(t)`: the characteristic function of the
//! normalized effect density `p_mn(x)` evaluated at `u = Mφ(t)`.
//! Empirical densities are kept as exact weighted atoms; the Gaussian and
//! Lorentz laws have closed-form factors.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Cauchy, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{check_grid, ReducedDensitySeries};
use crate::linalg::ZERO;
use crate::model::CompositeModel;
use crate::protocol::{all_phases, Protocol, ProtocolKind};
use crate::random::sample_atoms;

/// A coherence whose weight `|ρ_mn|` is at or below this is treated as zero.
pub const ZERO_WEIGHT_TOL: f64 = 1e-14;
/// Tolerance on `Σ_k w_k = 1` for empirical densities.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Lorentz,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// Point masses at `positions` with complex `weights` summing to one.
    Atoms {
        positions: Vec<f64>,
        weights: Vec<Complex64>,
    },
    Parametric {
        family: Family,
        sigma: f64,
    },
}

/// `g_mn(x) = ρ_mn p_mn(x)` for one coherence `(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectDensity {
    pair: (usize, usize),
    weight: Complex64,
    repr: Representation,
}

impl EffectDensity {
    pub fn from_atoms(
        pair: (usize, usize),
        weight: Complex64,
        positions: Vec<f64>,
        weights: Vec<Complex64>,
    ) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                what: "effect density atoms",
                expected: positions.len().to_string(),
                got: weights.len().to_string(),
            });
        }
        if positions.is_empty() {
            return Err(Error::Empty {
                what: "effect density atoms",
            });
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "effect density atoms",
                index: i.to_string(),
            });
        }
        // Rounding in Σ_k w_k grows with the total variation of the weights.
        let total: Complex64 = weights.iter().sum();
        let spread: f64 = weights.iter().map(|w| w.norm()).sum();
        if (total - Complex64::new(1.0, 0.0)).norm() > NORMALIZATION_TOL * spread.max(1.0) {
            return Err(Error::Normalization { trace: total.re });
        }
        Ok(EffectDensity {
            pair,
            weight,
            repr: Representation::Atoms { positions, weights },
        })
    }

    pub fn parametric(
        pair: (usize, usize),
        weight: Complex64,
        family: Family,
        sigma: f64,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("scale must be positive, got {sigma}"),
            });
        }
        Ok(EffectDensity {
            pair,
            weight,
            repr: Representation::Parametric { family, sigma },
        })
    }

    /// `count` equally weighted atoms drawn i.i.d. from the Gaussian
    /// (standard deviation `sigma`) or Lorentz (half-width `sigma`) law.
    pub fn sampled<R: Rng + ?Sized>(
        pair: (usize, usize),
        family: Family,
        sigma: f64,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("scale must be positive, got {sigma}"),
            });
        }
        if count == 0 {
            return Err(Error::Empty {
                what: "sampled atoms",
            });
        }
        let positions = match family {
            Family::Gaussian => {
                sample_atoms(rng, Normal::new(0.0, sigma).expect("sigma > 0"), count)
            }
            Family::Lorentz => {
                sample_atoms(rng, Cauchy::new(0.0, sigma).expect("sigma > 0"), count)
            }
        };
        let w = Complex64::new(1.0 / count as f64, 0.0);
        Self::from_atoms(pair, Complex64::new(1.0, 0.0), positions, vec![w; count])
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    /// `ρ_mn`, the total mass of `g_mn`.
    pub fn weight(&self) -> Complex64 {
        self.weight
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Total mass of `g_mn = ρ_mn p_mn`; equals `ρ_mn` for any valid density.
    pub fn effect_mass(&self) -> Complex64 {
        match &self.repr {
            Representation::Atoms { weights, .. } => {
                weights.iter().fold(ZERO, |acc, w| acc + self.weight * w)
            }
            Representation::Parametric { .. } => self.weight,
        }
    }

    /// True when every atom weight is real and nonnegative, so `p_mn` is a
    /// probability law and `|D| ≤ 1`.
    pub fn is_probability(&self) -> bool {
        match &self.repr {
            Representation::Atoms { weights, .. } => weights
                .iter()
                .all(|w| w.re >= -NORMALIZATION_TOL && w.im.abs() <= NORMALIZATION_TOL),
            Representation::Parametric { .. } => true,
        }
    }

    /// Characteristic function `∫ p(x) e^{-ixu} dx` at `u`.
    pub fn characteristic(&self, u: f64) -> Complex64 {
        match self.repr {
            Representation::Atoms {
                ref positions,
                ref weights,
            } => atom_transform(positions, weights, u),
            Representation::Parametric { family, sigma } => {
                Complex64::new(analytic_factor(family, sigma, u), 0.0)
            }
        }
    }
}

fn atom_transform(positions: &[f64], weights: &[Complex64], u: f64) -> Complex64 {
    positions.iter().zip(weights).fold(ZERO, |acc, (&x, &w)| {
        acc + w * Complex64::from_polar(1.0, -x * u)
    })
}

fn analytic_factor(family: Family, sigma: f64, u: f64) -> f64 {
    match family {
        Family::Gaussian => (-0.5 * sigma * sigma * u * u).exp(),
        Family::Lorentz => (-sigma * u.abs()).exp(),
    }
}

/// Atoms at the act-averaged gaps `x_mnk` with weights `ρ_mnk(0)/ρ_mn`.
pub fn effect_density_from_model(
    model: &CompositeModel,
    m: usize,
    n: usize,
) -> Result<EffectDensity> {
    model.check_indices(m, n)?;
    if model.acts() == 0 {
        return Err(Error::InvalidParameter {
            name: "M",
            reason: "effect density needs at least one measurement act".into(),
        });
    }
    let weight = model.rho0().marginal_element(m, n);
    if weight.norm() <= ZERO_WEIGHT_TOL {
        return Err(Error::ZeroWeight { m, n });
    }
    let k = model.device_dim();
    let positions = (0..k)
        .map(|kk| model.interaction().mean_gap(m, n, kk))
        .collect();
    let weights = (0..k)
        .map(|kk| model.rho0().get(m, n, kk) / weight)
        .collect();
    EffectDensity::from_atoms((m, n), weight, positions, weights)
}

/// Exact `D = Σ_k w_k e^{-i x_k M φ}` over the atoms.
pub fn decoherence_factor_exact(
    density: &EffectDensity,
    acts: usize,
    phi: f64,
) -> Result<Complex64> {
    match density.repr {
        Representation::Atoms {
            ref positions,
            ref weights,
        } => Ok(atom_transform(positions, weights, acts as f64 * phi)),
        Representation::Parametric { .. } => Err(Error::ParametricDensity),
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("must be nonnegative, got {sigma}"),
        });
    }
    Ok(())
}

/// `exp(-σ² M² φ² / 2)`.
pub fn decoherence_factor_gaussian(sigma: f64, acts: usize, phi: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(analytic_factor(Family::Gaussian, sigma, acts as f64 * phi))
}

/// `exp(-σ M |φ|)`.
pub fn decoherence_factor_lorentz(sigma: f64, acts: usize, phi: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(analytic_factor(Family::Lorentz, sigma, acts as f64 * phi))
}

/// Decoherence time `1/σ`.
pub fn decoherence_time(sigma: f64) -> Option<f64> {
    (sigma > 0.0).then(|| 1.0 / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSigma {
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
}

/// Parametric law with a default scale and optional per-pair scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub family: Family,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<PairSigma>,
}

impl AnalyticParams {
    pub fn new(family: Family, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(AnalyticParams {
            family,
            sigma,
            overrides: Vec::new(),
        })
    }

    pub fn with_override(mut self, m: usize, n: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        self.overrides.push(PairSigma { m, n, sigma });
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        self.overrides.iter().try_for_each(|o| check_sigma(o.sigma))
    }

    /// Scale for `(m, n)`; an override for either ordering applies.
    pub fn sigma_for(&self, m: usize, n: usize) -> f64 {
        self.overrides
            .iter()
            .rev()
            .find(|o| (o.m, o.n) == (m, n) || (o.m, o.n) == (n, m))
            .map_or(self.sigma, |o| o.sigma)
    }

    pub fn factor(&self, m: usize, n: usize, acts: usize, phi: f64) -> f64 {
        analytic_factor(self.family, self.sigma_for(m, n), acts as f64 * phi)
    }
}

/// Where the decoherence factor comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoherenceLaw {
    Empirical(EffectDensity),
    Analytic { family: Family, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceCurve {
    pub pair: (usize, usize),
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub acts: usize,
    pub kind: ProtocolKind,
    pub family: Option<Family>,
    pub sigma: Option<f64>,
    /// `1/σ`, filled for parametric laws under continuous measurement.
    pub decoherence_time: Option<f64>,
}

/// `D_mn(t)` along a protocol. Every sampled time must satisfy the
/// uniform-impact condition.
pub fn decoherence_curve(
    law: &DecoherenceLaw,
    pair: (usize, usize),
    protocol: &Protocol,
    times: &[f64],
) -> Result<DecoherenceCurve> {
    check_grid(times)?;
    let acts = protocol.len();
    let kind = protocol.kind();
    if let DecoherenceLaw::Analytic { sigma, .. } = *law {
        check_sigma(sigma)?;
    }
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let phi = all_phases(protocol, t)?
            .uniform
            .ok_or(Error::NonUniformImpact(t))?;
        let d = match law {
            _ if acts == 0 => Complex64::new(1.0, 0.0),
            DecoherenceLaw::Empirical(density) => density.characteristic(acts as f64 * phi),
            DecoherenceLaw::Analytic { family, sigma } => {
                Complex64::new(analytic_factor(*family, *sigma, acts as f64 * phi), 0.0)
            }
        };
        values.push(d);
    }
    let (family, sigma) = match *law {
        DecoherenceLaw::Analytic { family, sigma } => (Some(family), Some(sigma)),
        DecoherenceLaw::Empirical(_) => (None, None),
    };
    let decoherence_time = match kind {
        ProtocolKind::Continuous => sigma.and_then(decoherence_time),
        _ => None,
    };
    Ok(DecoherenceCurve {
        pair,
        times: times.to_vec(),
        values,
        acts,
        kind,
        family,
        sigma,
        decoherence_time,
    })
}

/// Which decoherence factor the factorized pipeline multiplies in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorSource<'a> {
    /// The model's own effect densities.
    Empirical,
    Analytic(&'a AnalyticParams),
}

/// `ρ^A_mn(t) = ρ_mn e^{-iω_mn t} D_mn(t)` under the uniform-impact condition.
///
/// With the empirical source, a coherence with zero weight `ρ_mn` has no
/// normalized density; its contribution is then the unnormalized transform
/// `Σ_k ρ_mnk e^{-i x_mnk M φ}`, which still matches the slice sum even when
/// correlated slices cancel in `ρ_mn`.
pub fn factorized_reduced_density(
    model: &CompositeModel,
    pair: (usize, usize),
    source: FactorSource<'_>,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    check_grid(times)?;
    let (m, n) = pair;
    model.check_indices(m, n)?;
    let acts = model.acts();
    let rho_mn = model.rho0().marginal_element(m, n);
    let omega = model.system().transition_frequency(m, n);

    enum Factor {
        None,
        Density(EffectDensity),
        Unnormalized(Vec<f64>, Vec<Complex64>),
        Analytic(f64, Family),
    }
    let factor = if m == n || acts == 0 {
        Factor::None
    } else {
        match source {
            FactorSource::Empirical => match effect_density_from_model(model, m, n) {
                Ok(d) => Factor::Density(d),
                Err(Error::ZeroWeight { .. }) => {
                    let k = model.device_dim();
                    Factor::Unnormalized(
                        (0..k)
                            .map(|kk| model.interaction().mean_gap(m, n, kk))
                            .collect(),
                        (0..k).map(|kk| model.rho0().get(m, n, kk)).collect(),
                    )
                }
                Err(e) => return Err(e),
            },
            FactorSource::Analytic(params) => {
                params.validate()?;
                Factor::Analytic(params.sigma_for(m, n), params.family)
            }
        }
    };

    times
        .iter()
        .map(|&t| {
            let phi = all_phases(model.protocol(), t)?
                .uniform
                .ok_or(Error::NonUniformImpact(t))?;
            let u = acts as f64 * phi;
            let free = Complex64::from_polar(1.0, -omega * t);
            Ok(match &factor {
                Factor::None => rho_mn * free,
                Factor::Density(d) => rho_mn * free * d.characteristic(u),
                Factor::Unnormalized(x, g) => free * atom_transform(x, g, u),
                Factor::Analytic(sigma, family) => {
                    if rho_mn.norm() <= ZERO_WEIGHT_TOL {
                        ZERO
                    } else {
                        rho_mn * free * analytic_factor(*family, *sigma, u)
                    }
                }
            })
        })
        .collect()
}

/// Full reduced state through the factorized pipeline, pair by pair.
pub fn factorized_series(
    model: &CompositeModel,
    source: FactorSource<'_>,
    times: &[f64],
) -> Result<ReducedDensitySeries> {
    let n = model.system_dim();
    let mut rho = vec![ndarray::Array2::from_elem((n, n), ZERO); times.len()];
    for a in 0..n {
        for b in 0..n {
            let column = factorized_reduced_density(model, (a, b), source, times)?;
            for (r, z) in rho.iter_mut().zip(column) {
                r[[a, b]] = z;
            }
        }
    }
    Ok(ReducedDensitySeries {
        times: times.to_vec(),
        rho,
    })
}

/// Times of the grid at which the factorized form applies.
pub fn uniform_times(protocol: &Protocol, times: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &t in times {
        if all_phases(protocol, t)?.uniform.is_some() {
            out.push(t);
        }
    }
    Ok(out)
}
