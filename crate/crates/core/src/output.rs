//! CSV and JSON artifacts. Every float is written with 17 significant digits
//! so files from different runs can be compared byte for byte.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::decoherence::{DecoherenceCurve, Family};
use crate::evolution::ReducedDensitySeries;
use crate::observables::ObservableSeries;
use crate::protocol::ProtocolKind;
use crate::scenario::Cplx;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON formatter that writes floats as `{:.16e}`.
struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON with fixed-precision floats and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits);
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedDensityJson {
    pub times: Vec<f64>,
    /// `rho[t][m][n] = [re, im]`.
    pub rho: Vec<Vec<Vec<Cplx>>>,
}

impl From<&ReducedDensitySeries> for ReducedDensityJson {
    fn from(s: &ReducedDensitySeries) -> Self {
        ReducedDensityJson {
            times: s.times.clone(),
            rho: s
                .rho
                .iter()
                .map(|r| {
                    r.rows()
                        .into_iter()
                        .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

pub fn reduced_density_csv(s: &ReducedDensitySeries) -> String {
    let mut out = String::from("t,m,n,re,im\n");
    for (t, r) in s.times.iter().zip(&s.rho) {
        for ((m, n), z) in r.indexed_iter() {
            writeln!(
                out,
                "{},{m},{n},{},{}",
                fmt_f64(*t),
                fmt_f64(z.re),
                fmt_f64(z.im)
            )
            .unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveJson {
    pub m: usize,
    pub n: usize,
    pub times: Vec<f64>,
    pub values: Vec<Cplx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceJson {
    #[serde(rename = "M")]
    pub acts: usize,
    pub kind: ProtocolKind,
    pub curves: Vec<CurveJson>,
}

impl DecoherenceJson {
    pub fn new(acts: usize, kind: ProtocolKind, curves: &[DecoherenceCurve]) -> Self {
        DecoherenceJson {
            acts,
            kind,
            curves: curves
                .iter()
                .map(|c| CurveJson {
                    m: c.pair.0,
                    n: c.pair.1,
                    times: c.times.clone(),
                    values: c.values.iter().map(|z| [z.re, z.im]).collect(),
                })
                .collect(),
        }
    }
}

/// Rows ordered by time, then by pair in the order given.
pub fn decoherence_csv(curves: &[DecoherenceCurve]) -> String {
    let mut out = String::from("t,m,n,re_D,im_D,abs_D\n");
    let Some(first) = curves.first() else {
        return out;
    };
    for (i, t) in first.times.iter().enumerate() {
        for c in curves {
            let d = c.values[i];
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(*t),
                c.pair.0,
                c.pair.1,
                fmt_f64(d.re),
                fmt_f64(d.im),
                fmt_f64(d.norm())
            )
            .unwrap();
        }
    }
    out
}

/// Parameters of an analytic decoherence law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceSidecar {
    pub family: Family,
    pub sigma: f64,
    #[serde(rename = "M")]
    pub acts: usize,
    /// `1/σ` for continuous measurement, otherwise null.
    pub t_dec: Option<f64>,
}

pub fn observable_csv(s: &ObservableSeries) -> String {
    let mut out = String::from("t,value,diagonal_part,coherent_part\n");
    for i in 0..s.len() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(s.times[i]),
            fmt_f64(s.values[i]),
            fmt_f64(s.diagonal_part[i]),
            fmt_f64(s.coherent_part[i])
        )
        .unwrap();
    }
    out
}

/// Label reduced to characters that are safe in file names.
pub fn file_stem(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "unnamed".into()
    } else {
        s
    }
}
