//! Small dense linear-algebra helpers shared by the certification code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// A real 2×2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

pub fn is_symmetric2(k: &Mat2) -> bool {
    k[0][1] == k[1][0]
}

pub fn add2(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

pub fn sub2(a: &Mat2, b: &Mat2) -> Mat2 {
    add2(a, &scale2(b, -1.0))
}

pub fn scale2(a: &Mat2, s: f64) -> Mat2 {
    [[s * a[0][0], s * a[0][1]], [s * a[1][0], s * a[1][1]]]
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix, closed form.
pub fn sym2_eigenvalues(k: &Mat2) -> (f64, f64) {
    let mean = 0.5 * (k[0][0] + k[1][1]);
    let half_diff = 0.5 * (k[0][0] - k[1][1]);
    let off = 0.5 * (k[0][1] + k[1][0]);
    let radius = half_diff.hypot(off);
    (mean - radius, mean + radius)
}

/// Spectral norm (largest singular value) of an arbitrary 2×2 matrix.
pub fn spectral_norm2(k: &Mat2) -> f64 {
    let [[a, b], [c, d]] = *k;
    // KᵀK = [[a²+c², ab+cd], [ab+cd, b²+d²]]
    let gram = [[a * a + c * c, a * b + c * d], [a * b + c * d, b * b + d * d]];
    sym2_eigenvalues(&gram).1.max(0.0).sqrt()
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn max_sym_eig(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Smallest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn min_sym_eig(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (v, x) = max_sym_eig(&(-m));
    (-v, x)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
