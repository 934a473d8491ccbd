//! Sampled surrogate of the restricted isometry constants.

use alloc::format;

use crate::error::{Error, Result};
use crate::operator::SensingOperator;
use crate::rng::{gaussian_matrix, seeded};

/// Extremes of `‖A(Z)‖² / ‖Z‖²_F` over sampled rank-k matrices. A diagnostic,
/// not a certified bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipEstimate {
    pub rank: usize,
    pub num_samples: usize,
    pub empirical_lower: f64,
    pub empirical_upper: f64,
}

pub fn estimate_rip_spectrum(op: &SensingOperator, k: usize, num_samples: usize, seed: u64) -> Result<RipEstimate> {
    let (p1, p2, _) = op.dims();
    if k == 0 || k > p1.min(p2) {
        return Err(Error::InvalidInput(format!("rank {k} outside 1..={}", p1.min(p2))));
    }
    let mut rng = seeded(seed);
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for _ in 0..num_samples {
        let l = gaussian_matrix(&mut rng, p1, k);
        let r = gaussian_matrix(&mut rng, p2, k);
        let z = &l * r.transpose();
        let ratio = op.apply(&z)?.norm_squared() / z.norm_squared();
        lower = lower.min(ratio);
        upper = upper.max(ratio);
    }
    if num_samples == 0 {
        lower = 0.0;
    }
    Ok(RipEstimate { rank: k, num_samples, empirical_lower: lower, empirical_upper: upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::operator::DenseSensing;

    #[test]
    fn orthonormal_basis_is_isometric() {
        let basis: alloc::vec::Vec<Mat> = (0..12)
            .map(|k| {
                let mut m = Mat::zeros(3, 4);
                m[(k % 3, k / 3)] = 1.0;
                m
            })
            .collect();
        let op: SensingOperator = DenseSensing::new(3, 4, &basis).unwrap().into();
        let est = estimate_rip_spectrum(&op, 2, 50, 1).unwrap();
        assert!((est.empirical_lower - 1.0).abs() < 1e-12);
        assert!((est.empirical_upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_measurement_has_near_zero_lower() {
        let op: SensingOperator = DenseSensing::new(5, 5, &[Mat::identity(5, 5)]).unwrap().into();
        let est = estimate_rip_spectrum(&op, 1, 500, 2).unwrap();
        assert!(est.empirical_lower < 1e-3);
        assert!(est.empirical_lower <= est.empirical_upper);
    }
}
