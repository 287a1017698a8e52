//! Small dense complex linear algebra used by the model constructors.
//!
//! Composite indices are system-major: the basis state |m⟩⊗|k⟩ of an
//! `n × k` composite space sits at row `m * k_dim + k`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;

pub type CMatrix = Array2<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diag().iter().sum()
}

/// Largest `|a_ij - conj(a_ji)|` together with its location.
pub fn hermiticity_residual(a: &CMatrix) -> (f64, (usize, usize)) {
    let n = a.nrows();
    let mut worst = (0.0, (0, 0));
    for i in 0..n {
        for j in i..n {
            let r = (a[[i, j]] - a[[j, i]].conj()).norm();
            if r > worst.0 {
                worst = (r, (i, j));
            }
        }
    }
    worst
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

/// Off-diagonal Frobenius mass.
pub fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let mut s = 0.0;
    for ((i, j), z) in a.indexed_iter() {
        if i != j {
            s += z.norm_sqr();
        }
    }
    s.sqrt()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::from_elem((ar * br, ac * bc), ZERO);
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        for ((p, q), &y) in b.indexed_iter() {
            out[[i * br + p, j * bc + q]] = x * y;
        }
    }
    out
}

/// Tr_B of an `(n·k) × (n·k)` matrix.
pub fn trace_device(a: &CMatrix, n: usize, k: usize) -> CMatrix {
    let mut out = Array2::from_elem((n, n), ZERO);
    for m in 0..n {
        for l in 0..n {
            let mut s = ZERO;
            for d in 0..k {
                s += a[[m * k + d, l * k + d]];
            }
            out[[m, l]] = s;
        }
    }
    out
}

/// Tr_A of an `(n·k) × (n·k)` matrix.
pub fn trace_system(a: &CMatrix, n: usize, k: usize) -> CMatrix {
    let mut out = Array2::from_elem((k, k), ZERO);
    for p in 0..k {
        for q in 0..k {
            let mut s = ZERO;
            for m in 0..n {
                s += a[[m * k + p, m * k + q]];
            }
            out[[p, q]] = s;
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as the columns of the returned unitary.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let h = hermitize(a);
    let m = DMatrix::from_fn(n, n, |i, j| h[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::from_elem((n, n), ZERO);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = eig.eigenvectors[(row, src)];
        }
    }
    (values, vectors)
}

pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    eigh(a).0.first().copied().unwrap_or(0.0)
}

/// `U† A U`.
pub fn conjugate_by(a: &CMatrix, u: &CMatrix) -> CMatrix {
    dagger(u).dot(a).dot(u)
}
