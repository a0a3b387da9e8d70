//! Matching of positional encodings: over the whole orthogonal group
//! (orthogonal Procrustes) and over per-column sign flips only.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Optimal `Q* ∈ O(p)` and the residual `η = ‖Z1 - Z2 Q*‖_F`.
#[derive(Debug, Clone)]
pub struct ProcrustesResult {
    pub q_star: Matrix,
    pub eta: f64,
}

fn check_shapes(op: &'static str, z1: &Matrix, z2: &Matrix) -> Result<()> {
    if z1.shape() != z2.shape() {
        return Err(Error::ShapeMismatch { op, lhs: z1.shape(), rhs: z2.shape() });
    }
    Ok(())
}

/// `argmin_{Q ∈ O(p)} ‖Z1 - Z2 Q‖_F`, reflections allowed.
///
/// With `Z2^T Z1 = V Σ W^T`, the minimizer is `Q* = V W^T`.
pub fn pe_match(z1: &Matrix, z2: &Matrix) -> Result<ProcrustesResult> {
    check_shapes("pe_match", z1, z2)?;
    let cross = z2.t_matmul(z1);
    let svd = cross.svd();
    let q_star = svd.u.matmul_t(&svd.v);
    let eta = z1.sub(&z2.matmul(&q_star)).frobenius_norm();
    Ok(ProcrustesResult { q_star, eta })
}

/// `η(Z1, Z2)` alone.
pub fn pe_distance(z1: &Matrix, z2: &Matrix) -> Result<f64> {
    Ok(pe_match(z1, z2)?.eta)
}

/// Best diagonal sign matrix `S` and `‖Z1 - Z2 S‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatch {
    /// Diagonal of `S`, each entry `±1`.
    pub signs: Vec<f64>,
    pub distance: f64,
}

/// `argmin_{S ∈ SN(p)} ‖Z1 - Z2 S‖_F`. Columns decouple, so each sign is
/// chosen independently; a tie keeps `+1`.
pub fn sign_match(z1: &Matrix, z2: &Matrix) -> Result<SignMatch> {
    check_shapes("sign_match", z1, z2)?;
    let mut signs = Vec::with_capacity(z1.cols());
    let mut total = 0.0;
    for j in 0..z1.cols() {
        let a = z1.column(j);
        let b = z2.column(j);
        let s = if dot(&a, &b) >= 0.0 { 1.0 } else { -1.0 };
        total += a.iter().zip(&b).map(|(x, y)| (x - s * y) * (x - s * y)).sum::<f64>();
        signs.push(s);
    }
    Ok(SignMatch { signs, distance: crate::math::sqrt(total) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::rng::{normal_matrix, random_orthogonal, seeded};

    fn rotation(theta: f64) -> Matrix {
        let (s, c) = (theta.sin(), theta.cos());
        Matrix::from_rows(&[&[c, -s], &[s, c]])
    }

    #[test]
    fn identical_inputs() {
        let mut rng = seeded(1);
        let z = normal_matrix(&mut rng, 7, 3, 1.0);
        let r = pe_match(&z, &z).unwrap();
        assert!(r.eta < 1e-12);
        assert!(r.q_star.sub(&Matrix::identity(3)).max_abs() < 1e-10);
    }

    #[test]
    fn recovers_known_rotation() {
        let mut rng = seeded(2);
        let z = normal_matrix(&mut rng, 9, 4, 1.0);
        let r = random_orthogonal(&mut rng, 4);
        let out = pe_match(&z, &z.matmul(&r)).unwrap();
        assert!(out.eta < 1e-10);
        assert!(out.q_star.sub(&r.transpose()).max_abs() < 1e-9);
        assert!(out.q_star.t_matmul(&out.q_star).sub(&Matrix::identity(4)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn matches_angle_grid_for_p2() {
        let mut rng = seeded(3);
        let z1 = normal_matrix(&mut rng, 6, 2, 1.0);
        let z2 = normal_matrix(&mut rng, 6, 2, 1.0);
        let refl = Matrix::diag(&[1.0, -1.0]);
        let mut best = f64::INFINITY;
        let steps = (core::f64::consts::TAU / 1e-4) as usize;
        for i in 0..steps {
            let q = rotation(i as f64 * 1e-4);
            best = best.min(z1.sub(&z2.matmul(&q)).frobenius_norm());
            best = best.min(z1.sub(&z2.matmul(&refl.matmul(&q))).frobenius_norm());
        }
        let eta = pe_match(&z1, &z2).unwrap().eta;
        assert!(eta <= best + 1e-12);
        assert!(best - eta < 1e-6, "{best} vs {eta}");
    }

    #[test]
    fn sign_examples() {
        let mut rng = seeded(4);
        let z = normal_matrix(&mut rng, 5, 3, 1.0);
        let m = sign_match(&z, &z.scale(-1.0)).unwrap();
        assert_eq!(m.signs, vec![-1.0, -1.0, -1.0]);
        assert!(m.distance < 1e-12);
        let flipped = z.matmul(&Matrix::diag(&[1.0, -1.0, 1.0]));
        let m = sign_match(&z, &flipped).unwrap();
        assert_eq!(m.signs, vec![1.0, -1.0, 1.0]);
        assert!(m.distance < 1e-12);
    }

    #[test]
    fn rotation_defeats_sign_flips() {
        let mut rng = seeded(5);
        let z = normal_matrix(&mut rng, 8, 2, 1.0);
        let z2 = z.matmul(&rotation(core::f64::consts::FRAC_PI_4));
        assert!(sign_match(&z, &z2).unwrap().distance > 0.1);
        assert!(pe_match(&z, &z2).unwrap().eta < 1e-10);
    }

    #[test]
    fn rank_deficient_cross_covariance() {
        let z1 = Matrix::from_fn(5, 3, |i, j| if j == 0 { i as f64 } else { 0.0 });
        let r = pe_match(&z1, &z1).unwrap();
        assert!(r.eta < 1e-12);
        assert!(r.q_star.t_matmul(&r.q_star).sub(&Matrix::identity(3)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        assert!(pe_match(&Matrix::zeros(3, 2), &Matrix::zeros(3, 1)).is_err());
        assert!(sign_match(&Matrix::zeros(3, 2), &Matrix::zeros(2, 2)).is_err());
    }
}
