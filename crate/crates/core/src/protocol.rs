//! Measurement pulse shapes `f_j(t)` and their integral impacts
//! `φ_j(t) = ∫_0^t f_j(t') dt'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two impacts closer than this count as equal for the uniform-impact test.
pub const UNIFORM_TOL: f64 = 1e-12;

/// Default width of the smoothed kick used by the time-stepping oracle.
pub const DEFAULT_SMOOTHING_WIDTH: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    /// Instantaneous kick `δ(t - t_j)`.
    Delta { t: f64 },
    /// `amplitude` on `[start, stop)`, zero elsewhere.
    Constant {
        start: f64,
        stop: f64,
        amplitude: f64,
    },
    /// Linear interpolation between `(time, value)` knots, zero outside.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
    /// Unit-area Gaussian centred on `t` with standard deviation `width / 2`,
    /// so that all but ~1e-9 of the area lies within `t ± 3·width`.
    SmoothedDelta { t: f64, width: f64 },
}

impl PulseShape {
    pub fn delta(t: f64) -> Self {
        PulseShape::Delta { t }
    }

    pub fn constant(start: f64, stop: f64, amplitude: f64) -> Self {
        PulseShape::Constant {
            start,
            stop,
            amplitude,
        }
    }

    pub fn piecewise_linear(knots: Vec<[f64; 2]>) -> Self {
        PulseShape::PiecewiseLinear { knots }
    }

    pub fn smoothed_delta(t: f64, width: f64) -> Self {
        PulseShape::SmoothedDelta { t, width }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidPulse {
                index,
                reason: reason.to_string(),
            })
        };
        match *self {
            PulseShape::Delta { t } => {
                if !t.is_finite() || t < 0.0 {
                    return bad("kick time must be finite and nonnegative");
                }
            }
            PulseShape::Constant {
                start,
                stop,
                amplitude,
            } => {
                if !(start.is_finite() && stop.is_finite()) || start < 0.0 || start >= stop {
                    return bad("constant pulse needs 0 <= start < stop, both finite");
                }
                if !amplitude.is_finite() || amplitude < 0.0 {
                    return bad("amplitude must be finite and nonnegative");
                }
            }
            PulseShape::PiecewiseLinear { ref knots } => {
                if knots.len() < 2 {
                    return bad("piecewise-linear pulse needs at least two knots");
                }
                for (i, [t, v]) in knots.iter().copied().enumerate() {
                    if !t.is_finite() || !v.is_finite() {
                        return bad("knots must be finite");
                    }
                    if v < 0.0 {
                        return bad("pulse values must be nonnegative");
                    }
                    if i > 0 && t <= knots[i - 1][0] {
                        return bad("knot times must be strictly increasing");
                    }
                }
            }
            PulseShape::SmoothedDelta { t, width } => {
                if !t.is_finite() || t < 0.0 {
                    return bad("kick time must be finite and nonnegative");
                }
                if !width.is_finite() || width <= 0.0 {
                    return bad("smoothing width must be positive");
                }
            }
        }
        Ok(())
    }

    /// Time after which the pulse no longer acts.
    pub fn end_time(&self) -> f64 {
        match *self {
            PulseShape::Delta { t } => t,
            PulseShape::Constant { stop, .. } => stop,
            PulseShape::PiecewiseLinear { ref knots } => knots.last().map_or(0.0, |k| k[0]),
            PulseShape::SmoothedDelta { t, width } => t + 3.0 * width,
        }
    }

    pub fn is_kick(&self) -> bool {
        matches!(
            self,
            PulseShape::Delta { .. } | PulseShape::SmoothedDelta { .. }
        )
    }

    /// Pointwise value `f(t)`. `None` for a true delta, which has no value.
    pub fn value(&self, t: f64) -> Option<f64> {
        match *self {
            PulseShape::Delta { .. } => None,
            PulseShape::Constant {
                start,
                stop,
                amplitude,
            } => Some(if t >= start && t < stop {
                amplitude
            } else {
                0.0
            }),
            PulseShape::PiecewiseLinear { ref knots } => Some(interpolate(knots, t)),
            PulseShape::SmoothedDelta { t: centre, width } => {
                let s = 0.5 * width;
                let z = (t - centre) / s;
                Some((-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
            }
        }
    }

    /// Times where the pulse value jumps or has a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            PulseShape::Delta { t } => vec![t],
            PulseShape::Constant { start, stop, .. } => vec![start, stop],
            PulseShape::PiecewiseLinear { ref knots } => knots.iter().map(|k| k[0]).collect(),
            PulseShape::SmoothedDelta { .. } => Vec::new(),
        }
    }

    /// Replaces a true delta by a smoothed kick of the given width.
    pub fn smoothed(&self, width: f64) -> PulseShape {
        match *self {
            PulseShape::Delta { t } => PulseShape::SmoothedDelta { t, width },
            ref other => other.clone(),
        }
    }
}

fn interpolate(knots: &[[f64; 2]], t: f64) -> f64 {
    for w in knots.windows(2) {
        let [a, va] = w[0];
        let [b, vb] = w[1];
        if t >= a && t <= b {
            return va + (vb - va) * (t - a) / (b - a);
        }
    }
    0.0
}

/// Integral impact `φ(t) = ∫_0^t f(t') dt'`, in closed form for every kind.
///
/// The delta step is right-continuous: a kick at `t_j` has already acted at
/// `t = t_j`.
pub fn phase_integral(pulse: &PulseShape, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(match *pulse {
        PulseShape::Delta { t: kick } => {
            if t >= kick {
                1.0
            } else {
                0.0
            }
        }
        PulseShape::Constant {
            start,
            stop,
            amplitude,
        } => amplitude * (t.min(stop) - start).max(0.0),
        PulseShape::PiecewiseLinear { ref knots } => {
            let mut total = 0.0;
            for w in knots.windows(2) {
                let lo = w[0][0].max(0.0);
                let hi = w[1][0].min(t);
                if hi > lo {
                    let (flo, fhi) = (interpolate(w, lo), interpolate(w, hi));
                    total += 0.5 * (hi - lo) * (flo + fhi);
                }
            }
            total
        }
        PulseShape::SmoothedDelta { t: centre, width } => {
            let scale = std::f64::consts::SQRT_2 * 0.5 * width;
            0.5 * (libm::erf((t - centre) / scale) - libm::erf(-centre / scale))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    None,
    Instantaneous,
    Continuous,
    Custom,
}

/// Integral impacts of all pulses at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Phases {
    pub values: Vec<f64>,
    /// The common impact `φ(t)` when every `φ_j(t)` coincides.
    pub uniform: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Protocol {
    pulses: Vec<PulseShape>,
}

impl Protocol {
    pub fn new(pulses: Vec<PulseShape>) -> Result<Self> {
        for (i, p) in pulses.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(Protocol { pulses })
    }

    pub fn empty() -> Self {
        Protocol::default()
    }

    /// `M` identical kicks at the given times.
    pub fn kicks(times: &[f64]) -> Result<Self> {
        Protocol::new(times.iter().map(|&t| PulseShape::delta(t)).collect())
    }

    /// A single continuous measurement of unit amplitude on `[0, stop)`.
    pub fn continuous(stop: f64) -> Result<Self> {
        Protocol::new(vec![PulseShape::constant(0.0, stop, 1.0)])
    }

    pub fn pulses(&self) -> &[PulseShape] {
        &self.pulses
    }

    /// Number of measurement acts `M`.
    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// `t_M`, the time after which no pulse acts. `None` when `M = 0`.
    pub fn last_measurement_time(&self) -> Option<f64> {
        self.pulses
            .iter()
            .map(PulseShape::end_time)
            .reduce(f64::max)
    }

    pub fn kind(&self) -> ProtocolKind {
        if self.pulses.is_empty() {
            ProtocolKind::None
        } else if self.pulses.iter().all(PulseShape::is_kick) {
            ProtocolKind::Instantaneous
        } else if self
            .pulses
            .iter()
            .all(|p| matches!(p, PulseShape::Constant { .. }))
        {
            ProtocolKind::Continuous
        } else {
            ProtocolKind::Custom
        }
    }

    pub fn has_kicks(&self) -> bool {
        self.pulses.iter().any(PulseShape::is_kick)
    }

    /// Every true delta replaced by a smoothed kick of width `width`.
    pub fn smoothed(&self, width: f64) -> Result<Self> {
        Protocol::new(self.pulses.iter().map(|p| p.smoothed(width)).collect())
    }

    /// Kick instants (true or smoothed), used to mask comparison windows.
    pub fn kick_times(&self) -> Vec<f64> {
        self.pulses
            .iter()
            .filter_map(|p| match *p {
                PulseShape::Delta { t } | PulseShape::SmoothedDelta { t, .. } => Some(t),
                _ => None,
            })
            .collect()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.pulses
            .iter()
            .flat_map(PulseShape::breakpoints)
            .collect()
    }
}

/// All `φ_j(t)` plus the uniform-impact verdict. With `M = 0` the condition
/// holds vacuously with `φ = 0`.
pub fn all_phases(protocol: &Protocol, t: f64) -> Result<Phases> {
    let values = protocol
        .pulses()
        .iter()
        .map(|p| phase_integral(p, t))
        .collect::<Result<Vec<_>>>()?;
    let uniform = match values.first() {
        None => Some(0.0),
        Some(&first) => values
            .iter()
            .all(|&v| (v - first).abs() <= UNIFORM_TOL)
            .then_some(first),
    };
    Ok(Phases { values, uniform })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Composite Simpson on a fine grid; test-only reference for the
    /// closed-form integrals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
        let n = intervals + intervals % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn delta_is_a_right_continuous_step() {
        let p = PulseShape::delta(1.0);
        assert_eq!(phase_integral(&p, 2.0).unwrap(), 1.0);
        assert_eq!(phase_integral(&p, 0.5).unwrap(), 0.0);
        assert_eq!(phase_integral(&p, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn constant_pulse_grows_linearly() {
        let p = PulseShape::constant(0.0, 1e6, 1.0);
        assert_eq!(phase_integral(&p, 3.5).unwrap(), 3.5);
        let q = PulseShape::constant(1.0, 2.0, 3.0);
        assert_eq!(phase_integral(&q, 0.5).unwrap(), 0.0);
        assert_eq!(phase_integral(&q, 1.5).unwrap(), 1.5);
        assert_eq!(phase_integral(&q, 7.0).unwrap(), 3.0);
    }

    #[test]
    fn ramp_integral_matches_quadrature() {
        let p = PulseShape::piecewise_linear(vec![[0.0, 0.0], [1.0, 2.0]]);
        let exact = phase_integral(&p, 1.0).unwrap();
        assert_abs_diff_eq!(exact, 1.0, epsilon = 1e-15);
        let numeric = simpson(|t| p.value(t).unwrap(), 0.0, 1.0, 1000);
        assert_abs_diff_eq!(exact, numeric, epsilon = 1e-12);
    }

    #[test]
    fn smoothed_kick_integrates_to_one() {
        let p = PulseShape::smoothed_delta(1.0, 1e-2);
        assert_abs_diff_eq!(phase_integral(&p, 1.03).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(phase_integral(&p, 0.97).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(phase_integral(&p, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        let numeric = simpson(|t| p.value(t).unwrap(), 0.0, 1.005, 20000);
        assert_abs_diff_eq!(phase_integral(&p, 1.005).unwrap(), numeric, epsilon = 1e-10);
    }

    #[test]
    fn negative_time_is_rejected() {
        let p = PulseShape::delta(0.0);
        assert_eq!(phase_integral(&p, -1.0), Err(Error::NegativeTime(-1.0)));
    }

    #[test]
    fn invalid_pulses_are_rejected() {
        assert!(Protocol::new(vec![PulseShape::delta(-1.0)]).is_err());
        assert!(Protocol::new(vec![PulseShape::constant(2.0, 1.0, 1.0)]).is_err());
        assert!(Protocol::new(vec![PulseShape::constant(0.0, 1.0, -1.0)]).is_err());
        assert!(Protocol::new(vec![PulseShape::piecewise_linear(vec![
            [0.0, 1.0],
            [0.0, 2.0]
        ])])
        .is_err());
        assert!(Protocol::new(vec![PulseShape::smoothed_delta(1.0, 0.0)]).is_err());
    }

    #[test]
    fn identical_kicks_are_uniform_after_the_last() {
        let proto = Protocol::kicks(&[0.5, 1.0, 1.5]).unwrap();
        let ph = all_phases(&proto, 2.0).unwrap();
        assert_eq!(ph.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(ph.uniform, Some(1.0));
        assert_eq!(proto.kind(), ProtocolKind::Instantaneous);
        assert_eq!(proto.last_measurement_time(), Some(1.5));
    }

    #[test]
    fn staggered_kicks_are_not_uniform_in_between() {
        let proto = Protocol::kicks(&[1.0, 3.0]).unwrap();
        let ph = all_phases(&proto, 2.0).unwrap();
        assert_eq!(ph.values, vec![1.0, 0.0]);
        assert_eq!(ph.uniform, None);
    }

    #[test]
    fn no_measurement_is_vacuously_uniform() {
        let ph = all_phases(&Protocol::empty(), 4.0).unwrap();
        assert!(ph.values.is_empty());
        assert_eq!(ph.uniform, Some(0.0));
        assert_eq!(Protocol::empty().kind(), ProtocolKind::None);
    }

    #[test]
    fn pulse_json_schema() {
        let json = r#"[{"kind":"delta","t":1.0},
                       {"kind":"constant","start":0,"stop":10,"amplitude":1},
                       {"kind":"piecewise_linear","knots":[[0,0],[1,2]]}]"#;
        let proto: Protocol = serde_json::from_str(json).unwrap();
        assert_eq!(proto.len(), 3);
        assert_eq!(proto.pulses()[1], PulseShape::constant(0.0, 10.0, 1.0));
        assert_eq!(proto.kind(), ProtocolKind::Custom);
    }

    fn ramp_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((0.01f64..1.0, 0.0f64..3.0), 2..8).prop_map(|steps| {
            let mut t = 0.0;
            steps
                .into_iter()
                .map(|(dt, v)| {
                    t += dt;
                    [t, v]
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn piecewise_integral_matches_simpson(knots in ramp_strategy(), frac in 0.0f64..1.2) {
            let end = knots.last().unwrap()[0] * frac;
            let p = PulseShape::piecewise_linear(knots.clone());
            // Simpson is exact on each linear piece; integrate piece by piece.
            // The pulse jumps at the outer knots, so integrate between them only.
            let last = knots.last().unwrap()[0];
            let mut cuts: Vec<f64> = knots.iter().map(|k| k[0]).filter(|&t| t < end).collect();
            cuts.push(end.min(last));
            let numeric: f64 = cuts.windows(2)
                .filter(|w| w[1] > w[0])
                .map(|w| simpson(|t| p.value(t).unwrap(), w[0], w[1], 2))
                .sum();
            let exact = phase_integral(&p, end).unwrap();
            prop_assert!((exact - numeric).abs() < 1e-12 * (1.0 + numeric.abs()));
        }

        #[test]
        fn impacts_are_nondecreasing(knots in ramp_strategy(), t1 in 0.0f64..5.0, dt in 0.0f64..5.0) {
            let pulses = [
                PulseShape::piecewise_linear(knots),
                PulseShape::constant(0.3, 2.0, 1.5),
                PulseShape::delta(1.0),
                PulseShape::smoothed_delta(1.0, 0.05),
            ];
            for p in &pulses {
                let a = phase_integral(p, t1).unwrap();
                let b = phase_integral(p, t1 + dt).unwrap();
                prop_assert!(b >= a - 1e-15);
                prop_assert_eq!(phase_integral(p, 0.0).unwrap().abs() < 1e-9, true);
            }
        }
    }
}
