//! Acceptance suite. Each criterion prints one PASS or FAIL line; the process
//! exits nonzero if any criterion fails.

use std::f64::consts::SQRT_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use qnd_decoherence::cli::compare_paths;
use qnd_decoherence::decoherence::{
    decoherence_curve, effect_density_from_model, factorized_series, AnalyticParams,
    DecoherenceLaw, EffectDensity, FactorSource, Family,
};
use qnd_decoherence::evolution::{oracle_evolve, outside_kick_windows, reduced_density};
use qnd_decoherence::linalg::{dagger, kron, CMatrix};
use qnd_decoherence::model::{
    build_from_matrices, check_commutators, lift_device, lift_system, CompositeModel, DeviceSpec,
    InteractionSpec, MatrixInput, Provenance, RhoInitial, SystemSpec,
};
use qnd_decoherence::observables::{
    coherence_weight, diagonal_ensemble, expectation_factorized, Observable,
};
use qnd_decoherence::protocol::{Protocol, PulseShape};
use qnd_decoherence::random::{random_hermitian, random_model, random_unitary, InitialKind};
use qnd_decoherence::scenario::Scenario;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn grid(start: f64, stop: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| start + (stop - start) * i as f64 / (samples - 1) as f64)
        .collect()
}

/// Qubit in |+⟩ coupled to `atoms.len()` equally populated device levels,
/// with `ξ_{j0k} = atoms[k]` and `ξ_{j1k} = 0` for every act, so the effect
/// density of the (0, 1) coherence sits on the atoms themselves.
fn atom_model(atoms: &[f64], protocol: Protocol) -> CompositeModel {
    let k = atoms.len();
    let m = protocol.len();
    let mut xi = Array3::zeros((m, 2, k));
    for j in 0..m {
        for (kk, &x) in atoms.iter().enumerate() {
            xi[[j, 0, kk]] = x;
        }
    }
    let slices = Array3::from_elem((2, 2, k), c(0.5 / k as f64, 0.0));
    CompositeModel::build_from_spectral(
        SystemSpec::new(vec![1.0, 0.0]).unwrap(),
        DeviceSpec::new(vec![0.0; k]).unwrap(),
        InteractionSpec::new(xi, protocol).unwrap(),
        RhoInitial::new(slices, Provenance::Direct).unwrap(),
    )
    .unwrap()
}

fn plateau(family: Family, acts: usize, dist_seed: u64) -> Outcome {
    let kicks: Vec<f64> = (1..=acts).map(|j| j as f64).collect();
    let protocol = Protocol::kicks(&kicks).unwrap();
    let last = acts as f64;
    let times: Vec<f64> = grid(last, last + 8.0, 161).into_iter().skip(1).collect();
    let expect = match family {
        Family::Gaussian => (-((acts * acts) as f64) / 2.0).exp(),
        Family::Lorentz => (-(acts as f64)).exp(),
    };
    let law = DecoherenceLaw::Analytic { family, sigma: 1.0 };
    let analytic = decoherence_curve(&law, (0, 1), &protocol, &times).unwrap();
    let analytic_err = analytic
        .values
        .iter()
        .map(|d| (d - expect).norm())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(dist_seed);
    let atoms: Vec<f64> = match family {
        Family::Gaussian => Normal::new(0.0, 1.0)
            .unwrap()
            .sample_iter(&mut rng)
            .take(10_000)
            .collect(),
        Family::Lorentz => Cauchy::new(0.0, 1.0)
            .unwrap()
            .sample_iter(&mut rng)
            .take(10_000)
            .collect(),
    };
    let model = atom_model(&atoms, protocol.clone());
    let density = effect_density_from_model(&model, 0, 1).unwrap();
    let empirical = decoherence_curve(
        &DecoherenceLaw::Empirical(density),
        (0, 1),
        &protocol,
        &times,
    )
    .unwrap();
    let empirical_err = empirical
        .values
        .iter()
        .map(|d| (d - expect).norm())
        .fold(0.0, f64::max);

    outcome(
        analytic_err < 1e-12 && empirical_err < 0.05,
        format!("plateau {expect:.7}, analytic err {analytic_err:.1e} (< 1e-12), empirical K=1e4 err {empirical_err:.2e} (< 0.05)"),
    )
}

fn criterion_1() -> Outcome {
    plateau(Family::Gaussian, 2, 1001)
}

fn criterion_2() -> Outcome {
    plateau(Family::Lorentz, 3, 1002)
}

fn criterion_3() -> Outcome {
    let sigma = 0.5;
    let step = 0.01;
    let protocol = Protocol::continuous(100.0).unwrap();
    let times: Vec<f64> = (0..=1000).map(|i| i as f64 * step).collect();
    let lorentz = decoherence_curve(
        &DecoherenceLaw::Analytic {
            family: Family::Lorentz,
            sigma,
        },
        (0, 1),
        &protocol,
        &times,
    )
    .unwrap();
    let t_dec = lorentz.decoherence_time.unwrap();
    let threshold = (-1.0f64).exp();
    let crossing = times
        .iter()
        .zip(&lorentz.values)
        .find(|(_, d)| d.norm() < threshold)
        .map(|(t, _)| *t)
        .unwrap();
    let gauss = decoherence_curve(
        &DecoherenceLaw::Analytic {
            family: Family::Gaussian,
            sigma,
        },
        (0, 1),
        &protocol,
        &[t_dec],
    )
    .unwrap();
    let g_err = (gauss.values[0] - (-0.5f64).exp()).norm();
    outcome(
        (t_dec - 2.0).abs() < 1e-15 && (crossing - t_dec).abs() <= step + 1e-12 && g_err < 1e-12,
        format!("t_dec {t_dec}, Lorentz first below 1/e at t={crossing:.2} (step {step}), Gaussian D(t_dec) err {g_err:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let model = random_model(
        &mut rng,
        4,
        6,
        Protocol::continuous(100.0).unwrap(),
        InitialKind::Product,
    );
    let a = Observable::new("A", random_hermitian(&mut rng, 4)).unwrap();
    let params = AnalyticParams::new(Family::Gaussian, 1.0).unwrap();
    let times = grid(5.0, 10.0, 101);
    let s = expectation_factorized(&model, &a, FactorSource::Analytic(&params), &times).unwrap();
    let de = diagonal_ensemble(&model, &a).unwrap();
    let weight = coherence_weight(&model, &a).unwrap();
    let bound: Vec<f64> = times
        .iter()
        .map(|t| weight * (-t * t / 2.0).exp())
        .collect();
    let monotone = bound.windows(2).all(|w| w[1] <= w[0]);
    let within = s
        .values
        .iter()
        .zip(&bound)
        .all(|(v, b)| (v - de).abs() <= b + 1e-15);
    let gap = (s.values.last().unwrap() - de).abs();
    let tol = 1e-3 * a.max_norm();
    outcome(
        gap < tol && monotone && within,
        format!("|<A(10)> - diag| = {gap:.1e} (< {tol:.1e}), bound monotone on [5,10]: {monotone}, deviation under bound: {within}"),
    )
}

fn criterion_5() -> Outcome {
    let (dt, w) = (1e-3, 1e-2);
    let times = grid(0.0, 2.0, 81);
    let mut worst_kicked: f64 = 0.0;
    let mut worst_free: f64 = 0.0;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let n = rng.random_range(2..=4);
        let k = rng.random_range(1..=6);
        let m = rng.random_range(1..=3);
        let kicks: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.6)).collect();
        let kind = if seed.is_multiple_of(2) {
            InitialKind::Product
        } else {
            InitialKind::Composite
        };
        let model = random_model(&mut rng, n, k, Protocol::kicks(&kicks).unwrap(), kind);
        let closed = reduced_density(&model, &times).unwrap();
        let oracle = oracle_evolve(&model, &times, dt, w).unwrap();
        let protocol = model.protocol().clone();
        worst_kicked = worst_kicked
            .max(closed.max_abs_difference(&oracle, |t| outside_kick_windows(&protocol, w, t)));

        let free = random_model(&mut rng, n, k, Protocol::empty(), kind);
        let closed = reduced_density(&free, &times).unwrap();
        let oracle = oracle_evolve(&free, &times, dt, w).unwrap();
        worst_free = worst_free.max(closed.max_abs_difference(&oracle, |_| true));
    }
    outcome(
        worst_kicked < 1e-6 && worst_free < 1e-12,
        format!("12 models; smoothed kicks max |Δρ| {worst_kicked:.1e} (< 1e-6 outside ±3w), M=0 max |Δρ| {worst_free:.1e} (< 1e-12)"),
    )
}

/// Random model under a uniform-impact protocol, and a grid on which the
/// impacts coincide.
fn uniform_case(seed: u64) -> (CompositeModel, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
    let n = rng.random_range(2..=4);
    let k = rng.random_range(1..=6);
    let kind = if seed.is_multiple_of(2) {
        InitialKind::Product
    } else {
        InitialKind::Composite
    };
    let (protocol, times) = match seed % 3 {
        0 => (Protocol::continuous(50.0).unwrap(), grid(0.0, 6.0, 61)),
        1 => {
            let p = PulseShape::constant(0.0, 4.0, 0.7);
            (
                Protocol::new(vec![p.clone(), p]).unwrap(),
                grid(0.0, 6.0, 61),
            )
        }
        _ => {
            let kicks: Vec<f64> = (0..rng.random_range(1..=3))
                .map(|_| rng.random_range(0.1..2.0))
                .collect();
            (Protocol::kicks(&kicks).unwrap(), grid(2.0, 8.0, 61))
        }
    };
    (random_model(&mut rng, n, k, protocol, kind), times)
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (model, times) = uniform_case(seed);
        let direct = reduced_density(&model, &times).unwrap();
        let fact = factorized_series(&model, FactorSource::Empirical, &times).unwrap();
        worst = worst.max(direct.max_abs_difference(&fact, |_| true));
    }
    outcome(
        worst < 1e-12,
        format!("100 seeded models, max entrywise gap {worst:.1e} (< 1e-12)"),
    )
}

/// Every invariant on one model; returns the largest violation.
fn invariant_violation(model: &CompositeModel, times: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let tol = 1e-12;
    let series = reduced_density(model, times).unwrap();
    let mut worst: f64 = 0.0;
    let rho0 = model.rho0().marginal();
    for r in &series.rho {
        let n = r.nrows();
        let tr: Complex64 = (0..n).map(|i| r[[i, i]]).sum();
        worst = worst.max((tr - c(1.0, 0.0)).norm());
        worst = worst.max(
            (r - &dagger(r))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
        );
        worst = worst.max(
            (0..n)
                .map(|i| (r[[i, i]] - rho0[[i, i]]).norm())
                .fold(0.0, f64::max),
        );
    }

    let betas = (0..model.device_dim())
        .map(|_| rng.random_range(-5.0..5.0))
        .collect();
    let shifted = reduced_density(
        &model.with_device(DeviceSpec::new(betas).unwrap()).unwrap(),
        times,
    )
    .unwrap();
    worst = worst.max(series.max_abs_difference(&shifted, |_| true));

    if model.acts() > 0 {
        let protocol = model.protocol();
        let uniform: Vec<f64> = std::iter::once(0.0)
            .chain(times.iter().copied().filter(|&t| {
                qnd_decoherence::protocol::all_phases(protocol, t)
                    .unwrap()
                    .uniform
                    .is_some()
            }))
            .collect();
        let n = model.system_dim();
        for m in 0..n {
            for k in (m + 1)..n {
                let (Ok(a), Ok(b)) = (
                    effect_density_from_model(model, m, k),
                    effect_density_from_model(model, k, m),
                ) else {
                    continue;
                };
                let probability = a.is_probability();
                let da =
                    decoherence_curve(&DecoherenceLaw::Empirical(a), (m, k), protocol, &uniform)
                        .unwrap();
                let db =
                    decoherence_curve(&DecoherenceLaw::Empirical(b), (k, m), protocol, &uniform)
                        .unwrap();
                worst = worst.max((da.values[0] - c(1.0, 0.0)).norm());
                for (x, y) in da.values.iter().zip(&db.values) {
                    worst = worst.max((x - y.conj()).norm());
                    if probability {
                        worst = worst.max(x.norm() - 1.0);
                    }
                }
            }
        }
    }
    worst.max(0.0) / tol
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut cases: Vec<(String, CompositeModel, Vec<f64>)> = Vec::new();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in [
        "two_level_kicks",
        "continuous_lorentz",
        "smoothed_kicks_compare",
        "minimal",
    ] {
        let text = std::fs::read_to_string(root.join(format!("{name}.json"))).unwrap();
        let p = Scenario::from_json(&text).unwrap().prepare().unwrap();
        cases.push((name.into(), p.model, p.times));
    }
    for seed in 0..20 {
        let (model, times) = uniform_case(seed);
        cases.push((format!("uniform-{seed}"), model, times));
    }
    let mut r4 = ChaCha8Rng::seed_from_u64(4004);
    cases.push((
        "equilibration".into(),
        random_model(
            &mut r4,
            4,
            6,
            Protocol::continuous(100.0).unwrap(),
            InitialKind::Product,
        ),
        grid(0.0, 10.0, 101),
    ));
    let mut atoms_rng = ChaCha8Rng::seed_from_u64(1001);
    let atoms: Vec<f64> = Normal::new(0.0, 1.0)
        .unwrap()
        .sample_iter(&mut atoms_rng)
        .take(2000)
        .collect();
    cases.push((
        "gaussian-atoms".into(),
        atom_model(&atoms, Protocol::kicks(&[1.0, 2.0]).unwrap()),
        grid(0.0, 6.0, 61),
    ));

    let mut worst = (0.0, String::new());
    for (name, model, times) in &cases {
        let v = invariant_violation(model, times, &mut rng);
        if v >= worst.0 {
            worst = (v, name.clone());
        }
    }
    outcome(
        worst.0 < 1.0,
        format!(
            "{} scenarios; worst violation {:.2} x 1e-12 ({})",
            cases.len(),
            worst.0,
            worst.1
        ),
    )
}

/// Replicates per sample size. A single realization of the sup-norm gap
/// fluctuates enough that roughly one seed in twenty lands below a ratio of 5
/// even though the median ratio is 10, so the gap is averaged.
const REPLICATES: u64 = 20;

fn criterion_8() -> Outcome {
    let protocol = Protocol::continuous(100.0).unwrap();
    let times = grid(0.0, 5.0, 201);
    let mut rows = Vec::new();
    for (family, seed) in [(Family::Gaussian, 8001u64), (Family::Lorentz, 8002)] {
        let analytic = decoherence_curve(
            &DecoherenceLaw::Analytic { family, sigma: 1.0 },
            (0, 1),
            &protocol,
            &times,
        )
        .unwrap();
        let gap = |count: usize, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = EffectDensity::sampled((0, 1), family, 1.0, count, &mut rng).unwrap();
            let curve = decoherence_curve(&DecoherenceLaw::Empirical(d), (0, 1), &protocol, &times)
                .unwrap();
            curve
                .values
                .iter()
                .zip(&analytic.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let mean = |count: usize| {
            (0..REPLICATES)
                .map(|r| gap(count, seed + 1000 * r))
                .sum::<f64>()
                / REPLICATES as f64
        };
        let (coarse, fine) = (mean(100), mean(10_000));
        let single = gap(100, seed) / gap(10_000, seed);
        rows.push((family, coarse, fine, coarse / fine, single));
    }
    let pass = rows.iter().all(|r| r.3 >= 5.0);
    let detail = rows
        .iter()
        .map(|(f, a, b, r, s)| {
            format!("{f:?} mean gap {a:.3e} -> {b:.3e} (ratio {r:.1}, single seed {s:.1})")
        })
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        pass,
        format!("{detail}; {REPLICATES} replicates, need ratio >= 5"),
    )
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn multiset_gap(a: Vec<f64>, b: Vec<f64>) -> f64 {
    sorted(a)
        .iter()
        .zip(sorted(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_9() -> Outcome {
    let (n, k) = (3usize, 2usize);
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let xi: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ua = random_unitary(&mut rng, n);
    let ub = random_unitary(&mut rng, k);
    let diag =
        |v: &[f64]| Array2::from_diag(&ndarray::Array1::from_iter(v.iter().map(|&x| c(x, 0.0))));
    let rotate = |u: &CMatrix, d: &CMatrix| u.dot(d).dot(&dagger(u));
    let w = kron(&ua, &ub);
    let input = MatrixInput {
        system_dim: n,
        device_dim: k,
        h_a: lift_system(&rotate(&ua, &diag(&e)), k),
        h_b: lift_device(&rotate(&ub, &diag(&beta)), n),
        x: vec![rotate(&w, &diag(&xi))],
        rho_ab: CMatrix::from_diag_elem(n * k, c(1.0 / (n * k) as f64, 0.0)),
        protocol: Protocol::kicks(&[1.0]).unwrap(),
    };
    let checks = check_commutators(&input.h_a, &input.h_b, &input.x);
    let residual = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let built = build_from_matrices(&input).unwrap();
    let m = &built.model;
    let spectra_gap = multiset_gap(m.system().energies().to_vec(), e.clone())
        .max(multiset_gap(m.device().energies().to_vec(), beta.clone()))
        .max(multiset_gap(
            m.interaction().xi().iter().copied().collect(),
            xi.clone(),
        ));

    let z = diag(&[1.0, -1.0]);
    let zz = MatrixInput {
        system_dim: 2,
        device_dim: 2,
        h_a: lift_system(&z, 2),
        h_b: lift_device(&z, 2),
        x: vec![kron(&z, &z)],
        rho_ab: CMatrix::from_diag_elem(4, c(0.25, 0.0)),
        protocol: Protocol::kicks(&[1.0]).unwrap(),
    };
    let zz_ok = build_from_matrices(&zz).is_ok();

    let sx = ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
    let bad = MatrixInput {
        system_dim: 2,
        device_dim: 1,
        h_a: z.clone(),
        h_b: CMatrix::zeros((2, 2)),
        x: vec![sx],
        rho_ab: CMatrix::from_diag_elem(2, c(0.5, 0.0)),
        protocol: Protocol::kicks(&[1.0]).unwrap(),
    };
    let rejected = build_from_matrices(&bad).is_err();
    let bad_residual = check_commutators(&bad.h_a, &bad.h_b, &bad.x)
        .iter()
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    let reject_err = (bad_residual - 2.0 * SQRT_2).abs();

    outcome(
        residual < 1e-10 && spectra_gap < 1e-9 && zz_ok && rejected && reject_err < 1e-12,
        format!(
            "commuting triple residual {residual:.1e} (< 1e-10), spectra gap {spectra_gap:.1e} (< 1e-9), ZZ accepted: {zz_ok}; \
             sz/sx rejected: {rejected} with residual {bad_residual:.15} (2√2 ± {reject_err:.0e})"
        ),
    )
}

fn criterion_compare_cli_consistency() -> bool {
    // The command-line comparison runs the same paths as criterion 5.
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let text = std::fs::read_to_string(root.join("smoothed_kicks_compare.json")).unwrap();
    let p = Scenario::from_json(&text).unwrap().prepare().unwrap();
    compare_paths(&p).unwrap().ok
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("instantaneous Gaussian plateau", criterion_1),
        ("instantaneous Lorentz plateau", criterion_2),
        ("continuous decoherence time", criterion_3),
        ("complete decoherence / equilibration", criterion_4),
        ("oracle equivalence", criterion_5),
        ("factorization consistency", criterion_6),
        ("invariant suite", criterion_7),
        ("empirical to analytic convergence", criterion_8),
        ("matrix-mode validation", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            o.detail
        );
    }
    assert!(
        criterion_compare_cli_consistency(),
        "compare report disagrees with the library paths"
    );
    if failed > 0 {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("acceptance: all {} criteria passed", criteria.len());
}
