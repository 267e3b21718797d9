//! Small dense-matrix helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ComplexMatrix;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_error(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && hermiticity_error(m) <= tol
}

/// Whether `m† m` equals the identity within `tol` elementwise.
pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let prod = m.adjoint() * m;
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| (prod[(i, j)] - if i == j { ONE } else { ZERO }).norm() <= tol))
}

/// `(m + m†)/2`.
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigh(m: &ComplexMatrix) -> (DVector<f64>, ComplexMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> DVector<f64> {
    let mut v: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

/// Rebuild `V diag(values) V†`.
pub fn from_eigh(values: &DVector<f64>, vectors: &ComplexMatrix) -> ComplexMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = values[j];
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    hermitize(&(scaled * vectors.adjoint()))
}

/// Square root of a positive semidefinite matrix. Eigenvalues below
/// `floor` are treated as exact zeros.
pub fn psd_sqrt(m: &ComplexMatrix, floor: f64) -> ComplexMatrix {
    let (values, vectors) = hermitian_eigh(m);
    let roots = values.map(|v| if v > floor { v.sqrt() } else { 0.0 });
    from_eigh(&roots, &vectors)
}

/// Complex Gaussian matrix with i.i.d. standard-normal real and imaginary parts.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Random mixed state `GG†/Tr(GG†)`.
pub fn random_ginibre_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexMatrix {
    let g = ginibre(rng, dim, dim);
    let rho = &g * g.adjoint();
    let tr = trace(&rho).re;
    hermitize(&rho.unscale(tr))
}

/// Random Haar-ish unitary via QR of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexMatrix {
    let g = ginibre(rng, dim, dim);
    g.qr().q()
}

/// Random real orthogonal matrix via QR.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_ginibre_state(&mut rng, 5);
        let (vals, vecs) = hermitian_eigh(&rho);
        assert!(vals.iter().zip(vals.iter().skip(1)).all(|(a, b)| a <= b));
        assert!(frobenius(&(from_eigh(&vals, &vecs) - &rho)) < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_ginibre_state(&mut rng, 4);
        let s = psd_sqrt(&rho, 0.0);
        assert!(frobenius(&(&s * &s - &rho)) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(is_unitary(&random_unitary(&mut rng, 6), 1e-12));
    }
}
