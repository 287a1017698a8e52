//! Seeded random instances for property tests, benchmarks and sampled
//! effect densities.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{self, CMatrix};
use crate::model::{CompositeModel, DeviceSpec, InteractionSpec, RhoInitial, SystemSpec};
use crate::protocol::Protocol;

pub fn random_complex_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    Array2::from_shape_fn((rows, cols), |_| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    linalg::hermitize(&random_complex_matrix(rng, n, n))
}

/// Eigenvectors of a random Hermitian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    linalg::eigh(&random_hermitian(rng, n)).1
}

/// Full-rank mixed state `G G† / Tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_complex_matrix(rng, n, n);
    let rho = g.dot(&linalg::dagger(&g));
    let tr = linalg::trace(&rho).re;
    linalg::hermitize(&rho.mapv(|z| z / tr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// `ρ_A ⊗ ρ_B`; effect densities are then genuine probability laws.
    Product,
    /// A generic, typically entangled, composite state.
    Composite,
}

/// Random spectra in `[-2, 2]`, interaction eigenvalues in `[-1, 1]`, and a
/// random initial state of the requested kind.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    protocol: Protocol,
    initial: InitialKind,
) -> CompositeModel {
    let m = protocol.len();
    let energies = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let betas = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let xi = Array3::from_shape_fn((m, n, k), |_| rng.random_range(-1.0..1.0));
    let rho0 = match initial {
        InitialKind::Product => {
            let a = random_density(rng, n);
            let b = random_density(rng, k);
            RhoInitial::from_product(&a, &b)
        }
        InitialKind::Composite => {
            RhoInitial::from_full_composite(&random_density(rng, n * k), n, k)
        }
    }
    .expect("random state is valid");
    CompositeModel::build_from_spectral(
        SystemSpec::new(energies).expect("finite"),
        DeviceSpec::new(betas).expect("finite"),
        InteractionSpec::new(xi, protocol).expect("shapes match"),
        rho0,
    )
    .expect("shapes match")
}

/// `count` i.i.d. draws from `dist`.
pub fn sample_atoms<R: Rng + ?Sized, D: Distribution<f64>>(
    rng: &mut R,
    dist: D,
    count: usize,
) -> Vec<f64> {
    dist.sample_iter(rng).take(count).collect()
}
