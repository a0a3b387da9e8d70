//! Seeded random number helpers shared by generators, initializers and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::math;

/// The RNG used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen();
        return math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2);
    }
}

/// Matrix of i.i.d. normal(0, std^2) entries.
pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| std * standard_normal(rng))
}

/// Random orthogonal matrix: QR of a standard-normal matrix with the diagonal
/// of R made positive.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    loop {
        let g = normal_matrix(rng, n, n, 1.0);
        if let Some((q, r)) = g.qr_thin() {
            let mut q = q;
            for j in 0..n {
                if r.get(j, j) < 0.0 {
                    for i in 0..n {
                        q.set(i, j, -q.get(i, j));
                    }
                }
            }
            return q;
        }
    }
}

/// Uniformly random permutation mapping of `0..n`.
pub fn random_mapping<R: Rng + ?Sized>(rng: &mut R, n: usize) -> alloc::vec::Vec<usize> {
    use rand::seq::SliceRandom;
    let mut m: alloc::vec::Vec<usize> = (0..n).collect();
    m.shuffle(rng);
    m
}
