//! Seeded randomness. Every generator in the crate draws from a single
//! [`SeededRng`] so identical seeds reproduce identical instances.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::linalg::{thin_qr, Mat, Vector};

pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix with i.i.d. standard normal entries, filled in column-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = normal(rng);
    }
    m
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    let mut v = Vector::zeros(len);
    for x in v.as_mut_slice() {
        *x = normal(rng);
    }
    v
}

/// Random `rows × cols` matrix with orthonormal columns: the Q factor of a
/// Gaussian matrix under the positive-diagonal convention.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let g = gaussian_matrix(rng, rows, cols);
    thin_qr(&g).0
}
