//! Command-line front end: `simulate`, `compare`, `validate` and `limit`.
//!
//! Exit codes are 0 on success, 1 when a tolerance check or validation
//! verdict fails, and 2 for unreadable or invalid input. Input errors are
//! written to stderr as `{"error": {"kind", "path", "message"}}`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoherence::{
    decoherence_curve, decoherence_time, effect_density_from_model, factorized_series,
    uniform_times, DecoherenceCurve, DecoherenceLaw, EffectDensity, FactorSource,
};
use crate::error::Error;
use crate::evolution::{
    oracle_evolve, outside_kick_windows, reduced_density, ReducedDensitySeries, ORACLE_MAX_DIM,
};
use crate::model::{build_from_matrices, check_commutators, CommutatorCheck};
use crate::observables::{diagonal_ensemble, expectation_direct, expectation_factorized};
use crate::output::{
    decoherence_csv, file_stem, observable_csv, reduced_density_csv, to_json, DecoherenceJson,
    DecoherenceSidecar, ReducedDensityJson,
};
use crate::protocol::ProtocolKind;
use crate::scenario::{DecoherencePlan, Format, InputError, MatrixScenario, Prepared, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Tolerances of `compare`.
pub const TOL_FREE: f64 = 1e-12;
pub const TOL_SMOOTH: f64 = 1e-9;
pub const TOL_KICKED: f64 = 1e-6;
pub const TOL_FACTORIZED: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "qnd",
    version,
    about = "Decoherence of quantum systems under nondestructive measurement"
)]
pub struct Cli {
    /// Output directory (overrides the scenario's output.directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// File formats to write.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a scenario and write density, decoherence and observable files.
    Simulate { scenario: PathBuf },
    /// Cross-check the closed form, the brute-force oracle and the factorized form.
    Compare { scenario: PathBuf },
    /// Check commutators of matrix-form inputs and recover their joint spectra.
    Validate { matrices: PathBuf },
    /// Print the complete-decoherence values of the scenario's observables.
    Limit { scenario: PathBuf },
}

struct Failure {
    code: i32,
    error: InputError,
}

impl From<InputError> for Failure {
    fn from(error: InputError) -> Self {
        Failure {
            code: EXIT_INPUT,
            error,
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    InputError::new("io", "", format!("{}: {e}", path.display())).into()
}

fn runtime(e: Error) -> Failure {
    InputError::new(e.kind(), "", e.to_string()).into()
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a InputError,
}

/// Run the command line with explicit streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => {
            Err(
                InputError::new("invalid_parameter", "--threads", "need at least one thread")
                    .into(),
            )
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, stdout)),
            Err(e) => Err(InputError::new("threads", "--threads", e.to_string()).into()),
        },
        None => dispatch(&cli, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = stderr.write_all(to_json(&ErrorReport { error: &f.error }).as_bytes());
            f.code
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    match &cli.command {
        Command::Simulate { scenario } => simulate(cli, scenario, stdout),
        Command::Compare { scenario } => compare(cli, scenario, stdout),
        Command::Validate { matrices } => validate(cli, matrices, stdout),
        Command::Limit { scenario } => limit(cli, scenario, stdout),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn load(path: &Path) -> Result<(Scenario, Prepared), Failure> {
    let scenario = Scenario::from_json(&read(path)?)?;
    let prepared = scenario.prepare()?;
    Ok((scenario, prepared))
}

struct Sink {
    dir: PathBuf,
    formats: BTreeSet<Format>,
    written: Vec<String>,
}

impl Sink {
    fn new(dir: PathBuf, formats: BTreeSet<Format>) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Sink {
            dir,
            formats,
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn both(
        &mut self,
        stem: &str,
        csv: impl FnOnce() -> String,
        json: impl FnOnce() -> String,
    ) -> Result<(), Failure> {
        if self.formats.contains(&Format::Csv) {
            self.put(&format!("{stem}.csv"), &csv())?;
        }
        if self.formats.contains(&Format::Json) {
            self.put(&format!("{stem}.json"), &json())?;
        }
        Ok(())
    }
}

fn formats(cli: &Cli, scenario: &Scenario) -> BTreeSet<Format> {
    match cli.format {
        Some(FormatArg::Csv) => [Format::Csv].into(),
        Some(FormatArg::Json) => [Format::Json].into(),
        Some(FormatArg::Both) => [Format::Csv, Format::Json].into(),
        None if scenario.output.formats.is_empty() => [Format::Csv].into(),
        None => scenario.output.formats.iter().copied().collect(),
    }
}

fn out_dir(cli: &Cli, scenario: &Scenario) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| scenario.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|m| (m + 1..n).map(move |k| (m, k)))
        .collect()
}

fn constant_curve(
    pair: (usize, usize),
    times: &[f64],
    acts: usize,
    kind: ProtocolKind,
) -> DecoherenceCurve {
    DecoherenceCurve {
        pair,
        times: times.to_vec(),
        values: vec![Complex64::new(1.0, 0.0); times.len()],
        acts,
        kind,
        family: None,
        sigma: None,
        decoherence_time: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub directory: String,
    pub files: Vec<String>,
    /// Coherences skipped because `ρ_mn = 0` leaves no effect density.
    pub zero_weight_pairs: Vec<(usize, usize)>,
}

fn simulate(cli: &Cli, path: &Path, stdout: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    let (scenario, p) = load(path)?;
    let dir = out_dir(cli, &scenario);
    let mut sink = Sink::new(dir.clone(), formats(cli, &scenario))?;
    let model = &p.model;
    let protocol = model.protocol();
    let (acts, kind) = (model.acts(), protocol.kind());

    let series = reduced_density(model, &p.times).map_err(runtime)?;
    sink.both(
        "reduced_density",
        || reduced_density_csv(&series),
        || to_json(&ReducedDensityJson::from(&series)),
    )?;

    let mut zero_weight = Vec::new();
    if let Some(plan) = &p.decoherence {
        // Decoherence factors exist only where all impacts coincide.
        let times = uniform_times(protocol, &p.times).map_err(runtime)?;
        let mut curves = Vec::new();
        let mut sampled = Vec::new();
        let mut rng = None;
        for pair in pairs(model.system_dim()) {
            let law = match plan {
                DecoherencePlan::Empirical if acts == 0 => {
                    curves.push(constant_curve(pair, &times, acts, kind));
                    continue;
                }
                DecoherencePlan::Empirical => {
                    match effect_density_from_model(model, pair.0, pair.1) {
                        Ok(d) => DecoherenceLaw::Empirical(d),
                        Err(Error::ZeroWeight { .. }) => {
                            zero_weight.push(pair);
                            continue;
                        }
                        Err(e) => return Err(runtime(e)),
                    }
                }
                DecoherencePlan::Analytic {
                    params,
                    sampled_atoms,
                } => {
                    let sigma = params.sigma_for(pair.0, pair.1);
                    if let Some((count, seed)) = *sampled_atoms {
                        let rng = rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed));
                        let d = EffectDensity::sampled(pair, params.family, sigma, count, rng)
                            .map_err(runtime)?;
                        sampled.push(
                            decoherence_curve(
                                &DecoherenceLaw::Empirical(d),
                                pair,
                                protocol,
                                &times,
                            )
                            .map_err(runtime)?,
                        );
                    }
                    DecoherenceLaw::Analytic {
                        family: params.family,
                        sigma,
                    }
                }
            };
            curves.push(decoherence_curve(&law, pair, protocol, &times).map_err(runtime)?);
        }
        sink.both(
            "decoherence",
            || decoherence_csv(&curves),
            || to_json(&DecoherenceJson::new(acts, kind, &curves)),
        )?;
        if let DecoherencePlan::Analytic {
            params,
            sampled_atoms,
        } = plan
        {
            let sidecar = DecoherenceSidecar {
                family: params.family,
                sigma: params.sigma,
                acts,
                t_dec: match kind {
                    ProtocolKind::Continuous => decoherence_time(params.sigma),
                    _ => None,
                },
            };
            sink.put("decoherence_params.json", &to_json(&sidecar))?;
            if sampled_atoms.is_some() {
                sink.both(
                    "decoherence_sampled",
                    || decoherence_csv(&sampled),
                    || to_json(&DecoherenceJson::new(acts, kind, &sampled)),
                )?;
            }
        }
    }

    for a in &p.observables {
        let stem = format!("observable_{}", file_stem(a.label()));
        let s = expectation_direct(&series, a).map_err(runtime)?;
        sink.both(&stem, || observable_csv(&s), || to_json(&s))?;
        if let Some(DecoherencePlan::Analytic { params, .. }) = &p.decoherence {
            let times = uniform_times(protocol, &p.times).map_err(runtime)?;
            let s = expectation_factorized(model, a, FactorSource::Analytic(params), &times)
                .map_err(runtime)?;
            sink.both(
                &format!("{stem}_analytic"),
                || observable_csv(&s),
                || to_json(&s),
            )?;
        }
    }

    let summary = SimulateSummary {
        directory: dir.display().to_string(),
        files: sink.written,
        zero_weight_pairs: zero_weight,
    };
    let _ = stdout.write_all(to_json(&summary).as_bytes());
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub paths: String,
    pub applicable: bool,
    pub samples_compared: usize,
    pub max_abs_difference: Option<f64>,
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub dt: f64,
    pub smoothing_width: f64,
    pub comparisons: Vec<Comparison>,
    pub ok: bool,
}

fn compare_pair(
    paths: &str,
    a: &ReducedDensitySeries,
    b: Option<&ReducedDensitySeries>,
    keep: &dyn Fn(f64) -> bool,
    tolerance: f64,
) -> Comparison {
    match b {
        Some(b) => {
            let d = a.max_abs_difference(b, keep);
            Comparison {
                paths: paths.into(),
                applicable: true,
                samples_compared: a.times.iter().filter(|&&t| keep(t)).count(),
                max_abs_difference: Some(d),
                tolerance,
                ok: d < tolerance,
            }
        }
        None => Comparison {
            paths: paths.into(),
            applicable: false,
            samples_compared: 0,
            max_abs_difference: None,
            tolerance,
            ok: true,
        },
    }
}

/// Closed form, oracle and factorized paths on the scenario grid.
pub fn compare_paths(p: &Prepared) -> Result<CompareReport, Error> {
    let model = &p.model;
    let dim = model.system_dim() * model.device_dim();
    if dim > ORACLE_MAX_DIM {
        return Err(Error::TooLarge {
            dim,
            limit: ORACLE_MAX_DIM,
        });
    }
    let protocol = model.protocol();
    let (dt, w) = (p.oracle.dt, p.oracle.smoothing_width);
    let closed = reduced_density(model, &p.times)?;
    let oracle = oracle_evolve(model, &p.times, dt, w)?;
    let uniform = uniform_times(protocol, &p.times)?.len() == p.times.len();
    let factorized = if uniform {
        Some(factorized_series(model, FactorSource::Empirical, &p.times)?)
    } else {
        None
    };

    let kicked = protocol.has_kicks();
    let oracle_tol = if kicked {
        TOL_KICKED
    } else if protocol.is_empty() {
        TOL_FREE
    } else {
        TOL_SMOOTH
    };
    let all = |_: f64| true;
    let windows = |t: f64| outside_kick_windows(protocol, w, t);
    let keep: &dyn Fn(f64) -> bool = if kicked { &windows } else { &all };

    let comparisons = vec![
        compare_pair(
            "closed_form_vs_oracle",
            &closed,
            Some(&oracle),
            keep,
            oracle_tol,
        ),
        compare_pair(
            "closed_form_vs_factorized",
            &closed,
            factorized.as_ref(),
            &all,
            TOL_FACTORIZED,
        ),
        compare_pair(
            "oracle_vs_factorized",
            &oracle,
            factorized.as_ref(),
            keep,
            oracle_tol,
        ),
    ];
    let ok = comparisons.iter().all(|c| c.ok);
    Ok(CompareReport {
        dt,
        smoothing_width: w,
        comparisons,
        ok,
    })
}

fn write_report<T: Serialize>(
    cli: &Cli,
    name: &str,
    report: &T,
    stdout: &mut (dyn Write + Send),
) -> Result<(), Failure> {
    let text = to_json(report);
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join(name);
        fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
    }
    let _ = stdout.write_all(text.as_bytes());
    Ok(())
}

fn compare(cli: &Cli, path: &Path, stdout: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    let (_, p) = load(path)?;
    let report = compare_paths(&p).map_err(runtime)?;
    write_report(cli, "compare.json", &report, stdout)?;
    Ok(if report.ok { EXIT_OK } else { EXIT_TOLERANCE })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectra {
    pub system_energies: Vec<f64>,
    pub device_energies: Vec<f64>,
    /// `xi[j][n][k]`.
    pub xi: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub commutators: Vec<CommutatorCheck>,
    pub verdict: String,
    pub reason: Option<String>,
    pub spectra: Option<Spectra>,
}

fn validate(cli: &Cli, path: &Path, stdout: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    let input = MatrixScenario::from_json(&read(path)?)?.to_input()?;
    let commutators = check_commutators(&input.h_a, &input.h_b, &input.x);
    let (verdict, reason, spectra) = match build_from_matrices(&input) {
        Ok(built) => {
            let model = &built.model;
            let xi = model.interaction().xi();
            let spectra = Spectra {
                system_energies: model.system().energies().to_vec(),
                device_energies: model.device().energies().to_vec(),
                xi: xi
                    .outer_iter()
                    .map(|a| a.outer_iter().map(|r| r.to_vec()).collect())
                    .collect(),
            };
            ("accept", None, Some(spectra))
        }
        Err(
            e @ (Error::CommutatorViolation { .. }
            | Error::FactorStructure { .. }
            | Error::JointDiagonalizationFailure { .. }),
        ) => ("reject", Some(e.to_string()), None),
        Err(e) => return Err(runtime(e)),
    };
    let report = ValidateReport {
        commutators,
        verdict: verdict.into(),
        reason,
        spectra,
    };
    write_report(cli, "validate.json", &report, stdout)?;
    Ok(if verdict == "accept" {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitValue {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub populations: Vec<f64>,
    pub observables: Vec<LimitValue>,
}

fn limit(cli: &Cli, path: &Path, stdout: &mut (dyn Write + Send)) -> Result<i32, Failure> {
    let (_, p) = load(path)?;
    let observables = p
        .observables
        .iter()
        .map(|a| {
            Ok(LimitValue {
                label: a.label().to_string(),
                value: diagonal_ensemble(&p.model, a)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(runtime)?;
    let report = LimitReport {
        populations: p.model.rho0().populations(),
        observables,
    };
    write_report(cli, "limit.json", &report, stdout)?;
    Ok(EXIT_OK)
}
