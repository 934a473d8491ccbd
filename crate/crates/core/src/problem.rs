use alloc::format;

use crate::error::{check_dim, Error, Result};
use crate::factored::FactoredMatrix;
use crate::linalg::{Mat, Vector};
use crate::operator::SensingOperator;

/// `min_{rank(X) ≤ r} ½‖y − A(X)‖²`, optionally with the ground truth used for
/// reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    operator: SensingOperator,
    y: Vector,
    rank: usize,
    truth: Option<Mat>,
}

impl ProblemInstance {
    pub fn new(operator: SensingOperator, y: Vector, rank: usize) -> Result<Self> {
        let (p1, p2, n) = operator.dims();
        check_dim("response length", n, y.len())?;
        if rank == 0 || rank > p1.min(p2) {
            return Err(Error::InvalidInput(format!(
                "rank {rank} outside 1..={} for {p1}×{p2} matrices",
                p1.min(p2)
            )));
        }
        Ok(ProblemInstance { operator, y, rank, truth: None })
    }

    pub fn with_truth(mut self, truth: Mat) -> Result<Self> {
        let (p1, p2, _) = self.operator.dims();
        check_dim("truth rows", p1, truth.nrows())?;
        check_dim("truth columns", p2, truth.ncols())?;
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn operator(&self) -> &SensingOperator {
        &self.operator
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn truth(&self) -> Option<&Mat> {
        self.truth.as_ref()
    }

    /// `(p1, p2, n)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.operator.dims()
    }

    /// `A(X) − y`.
    pub fn residual(&self, x: &FactoredMatrix) -> Result<Vector> {
        let left = x.u() * x.core();
        Ok(self.operator.apply_factors(&[(&left, x.v())])? - &self.y)
    }

    /// `½‖y − A(X)‖²`.
    pub fn objective(&self, x: &FactoredMatrix) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_squared())
    }

    /// `‖X − X*‖_F / ‖X*‖_F` when the truth is known (absolute error if `X* = 0`).
    pub fn relative_error(&self, x: &FactoredMatrix) -> Option<f64> {
        self.truth.as_ref().map(|t| {
            let err = (x.to_dense() - t).norm();
            let scale = t.norm();
            if scale > 0.0 {
                err / scale
            } else {
                err
            }
        })
    }
}
