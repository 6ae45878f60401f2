//! Dense-matrix checks of the abstract commutator identities used with
//! symmetrized propagation observables.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

type Mat = DMatrix<f64>;

fn comm(x: &Mat, y: &Mat) -> Mat {
    x * y - y * x
}

fn relative(residual: &Mat, reference: &Mat) -> f64 {
    let r = reference.norm();
    if r == 0.0 {
        residual.norm()
    } else {
        residual.norm() / r
    }
}

/// `A²B + BA² = 2ABA + [A,[A,B]]`.
pub fn two_term_residual(a: &Mat, b: &Mat) -> f64 {
    let lhs = a * a * b + b * a * a;
    let rhs = (a * b * a) * 2.0 + comm(a, &comm(a, b));
    relative(&(&lhs - rhs), &lhs)
}

/// `ABC - CBA = A[B,C] + C[A,B]`, valid when `[A,C] = 0`.
pub fn anti_comm_residual(a: &Mat, b: &Mat, c: &Mat) -> f64 {
    let lhs = a * b * c - c * b * a;
    let rhs = a * comm(b, c) + c * comm(a, b);
    relative(&(&lhs - rhs), &lhs)
}

/// `ABC - CBA = A[B,C] + [A,C]B + C[A,B]`, valid for all `A, B, C`.
pub fn anti_comm_general_residual(a: &Mat, b: &Mat, c: &Mat) -> f64 {
    let lhs = a * b * c - c * b * a;
    let rhs = a * comm(b, c) + comm(a, c) * b + c * comm(a, b);
    relative(&(&lhs - rhs), &lhs)
}

/// Sign-flipped variant `ABC - CBA = A[B,C] + C[B,A]`, kept to show it fails.
pub fn anti_comm_flipped_residual(a: &Mat, b: &Mat, c: &Mat) -> f64 {
    let lhs = a * b * c - c * b * a;
    let rhs = a * comm(b, c) + c * comm(b, a);
    relative(&(&lhs - rhs), &lhs)
}

/// `A²BC² + C²BA² = 2(AC)B(AC) + R` with
/// `R = A[[A,B],C]C + C[[C,B],A]A + A[C,[C,B]]A + C[A,[A,B]]C`, for `[A,C] = 0`.
pub fn three_term_residual(a: &Mat, b: &Mat, c: &Mat) -> f64 {
    let lhs = a * a * b * c * c + c * c * b * a * a;
    let ac = a * c;
    let r = a * comm(&comm(a, b), c) * c
        + c * comm(&comm(c, b), a) * a
        + a * comm(c, &comm(c, b)) * a
        + c * comm(a, &comm(a, b)) * c;
    let rhs = &ac * b * &ac * 2.0 + r;
    relative(&(&lhs - rhs), &lhs)
}

/// Variant whose second remainder term lacks the trailing factor, `C[[C,B],A]`.
pub fn three_term_truncated_residual(a: &Mat, b: &Mat, c: &Mat) -> f64 {
    let lhs = a * a * b * c * c + c * c * b * a * a;
    let ac = a * c;
    let r = a * comm(&comm(a, b), c) * c
        + c * comm(&comm(c, b), a)
        + a * comm(c, &comm(c, b)) * a
        + c * comm(a, &comm(a, b)) * c;
    let rhs = &ac * b * &ac * 2.0 + r;
    relative(&(&lhs - rhs), &lhs)
}

/// Residuals of all identities on one random draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub dim: usize,
    pub seed: u64,
    pub anti_comm: f64,
    pub anti_comm_general: f64,
    pub two_term: f64,
    pub three_term: f64,
    /// Relative size of `[A,C]` for the commuting pair (should be roundoff).
    pub commuting_defect: f64,
    pub anti_comm_flipped_residual: f64,
    pub three_term_truncated_residual: f64,
    /// Three-term residual when `A` and `C` are independent (hypothesis violated).
    pub three_term_noncommuting: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn gaussian_matrix(dim: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(dim, dim, |_, _| StandardNormal.sample(rng))
}

/// Commuting symmetric pair `A = Q D₁ Qᵀ`, `C = Q D₂ Qᵀ` with a random orthogonal `Q`.
pub fn commuting_pair(dim: usize, rng: &mut ChaCha8Rng) -> (Mat, Mat) {
    let q = gaussian_matrix(dim, rng).qr().q();
    let d1 = Mat::from_diagonal(&nalgebra::DVector::from_fn(dim, |_, _| StandardNormal.sample(rng)));
    let d2 = Mat::from_diagonal(&nalgebra::DVector::from_fn(dim, |_, _| StandardNormal.sample(rng)));
    (&q * d1 * q.transpose(), &q * d2 * q.transpose())
}

pub const COMMUTATOR_TOLERANCE: f64 = 1e-12;

pub fn verify_commutator_identities(dim: usize, seed: u64) -> Result<CommutatorReport> {
    if !(1..=64).contains(&dim) {
        return Err(LabError::Precondition(format!(
            "commutator identities use dense matrices of dimension 1..=64, got {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, c) = commuting_pair(dim, &mut rng);
    let b = gaussian_matrix(dim, &mut rng);
    let a_free = gaussian_matrix(dim, &mut rng);
    let c_free = gaussian_matrix(dim, &mut rng);

    let anti_comm = anti_comm_residual(&a, &b, &c);
    let anti_comm_general = anti_comm_general_residual(&a_free, &b, &c_free);
    let two_term = two_term_residual(&a_free, &b);
    let three_term = three_term_residual(&a, &b, &c);
    let tolerance = COMMUTATOR_TOLERANCE;
    let pass = [anti_comm, anti_comm_general, two_term, three_term]
        .iter()
        .all(|&r| r <= tolerance);
    Ok(CommutatorReport {
        dim,
        seed,
        anti_comm,
        anti_comm_general,
        two_term,
        three_term,
        commuting_defect: relative(&comm(&a, &c), &(&a * &c)),
        anti_comm_flipped_residual: anti_comm_flipped_residual(&a, &b, &c),
        three_term_truncated_residual: three_term_truncated_residual(&a, &b, &c),
        three_term_noncommuting: three_term_residual(&a_free, &b, &c_free),
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identities_hold_at_dim_16() {
        let r = verify_commutator_identities(16, 2024).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.anti_comm <= 1e-12 && r.two_term <= 1e-12 && r.three_term <= 1e-12);
        assert!(r.commuting_defect < 1e-13);
    }

    #[test]
    fn identity_a_gives_exact_two_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = gaussian_matrix(16, &mut rng);
        assert_eq!(two_term_residual(&Mat::identity(16, 16), &b), 0.0);
    }

    #[test]
    fn non_commuting_three_term_is_detected() {
        let r = verify_commutator_identities(16, 5).unwrap();
        assert!(r.three_term_noncommuting > 1e-3, "{}", r.three_term_noncommuting);
    }

    #[test]
    fn variant_forms_leave_order_one_residuals() {
        let r = verify_commutator_identities(16, 9).unwrap();
        assert!(r.anti_comm_flipped_residual > 0.1);
        assert!(r.three_term_truncated_residual > 0.1);
    }

    #[test]
    fn dimension_limit() {
        assert!(matches!(
            verify_commutator_identities(65, 0),
            Err(LabError::Precondition(_))
        ));
        assert!(verify_commutator_identities(0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn identities_hold_for_any_seed(seed in any::<u64>(), dim in 2usize..24) {
            let r = verify_commutator_identities(dim, seed).unwrap();
            prop_assert!(r.pass, "{:?}", r);
        }
    }
}
