//! Dense gate algebra over qubit registers (QS 0 is the most significant
//! bit) and the fidelity measure used throughout.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn diagonal_unitary(phases: &[f64]) -> CMatrix {
    let n = phases.len();
    CMatrix::from_fn(n, n, |r, col| {
        if r == col {
            Complex64::from_polar(1.0, phases[r])
        } else {
            c(0.0)
        }
    })
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Single-qubit `gate` on qubit `k` of an `n`-qubit register.
pub fn on_qubit(gate: &CMatrix, k: usize, n: usize) -> CMatrix {
    let mut out = identity(1);
    for q in 0..n {
        out = if q == k { kron(&out, gate) } else { kron(&out, &identity(2)) };
    }
    out
}

/// Hadamard with entries `±1/√2`.
pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)])
}

/// Phase −1 on `|1…1>` only.
pub fn multi_controlled_z(n: usize) -> CMatrix {
    let dim = 1 << n;
    let mut m = identity(dim);
    m[(dim - 1, dim - 1)] = c(-1.0);
    m
}

/// Flip the last qubit when every other qubit is 1.
pub fn multi_controlled_x(n: usize) -> CMatrix {
    let dim = 1 << n;
    let mut m = identity(dim);
    m[(dim - 1, dim - 1)] = c(0.0);
    m[(dim - 2, dim - 2)] = c(0.0);
    m[(dim - 1, dim - 2)] = c(1.0);
    m[(dim - 2, dim - 1)] = c(1.0);
    m
}

pub fn toffoli() -> CMatrix {
    multi_controlled_x(3)
}

pub fn cnot() -> CMatrix {
    multi_controlled_x(2)
}

/// `|Tr(T† U)|² / d²`; insensitive to a global phase and penalizing both
/// phase errors and population lost from the subspace.
pub fn fidelity(target: &CMatrix, u: &CMatrix) -> f64 {
    let d = target.nrows() as f64;
    // Tr(T† U) = Σ_ij conj(T_ij) U_ij
    let tr: Complex64 = target.iter().zip(u.iter()).map(|(t, v)| t.conj() * v).sum();
    (tr.norm_sqr() / (d * d)).clamp(0.0, 1.0)
}

/// `u` multiplied by the global phase that maximizes overlap with `target`.
pub fn align_global_phase(target: &CMatrix, u: &CMatrix) -> CMatrix {
    let tr: Complex64 = target.iter().zip(u.iter()).map(|(t, v)| t.conj() * v).sum();
    if tr.norm() == 0.0 {
        return u.clone();
    }
    u * (tr.conj() / tr.norm())
}

/// `max |U†U − 1|` elementwise.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let p = u.adjoint() * u;
    let n = p.nrows();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (p[(i, j)] - if i == j { c(1.0) } else { c(0.0) }).norm())
        .fold(0.0, f64::max)
}
