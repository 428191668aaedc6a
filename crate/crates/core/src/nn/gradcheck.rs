//! Finite-difference validation of the analytic gradients.

use ndarray::ArrayView2;

use super::{Gradients, Network, Norm};
use crate::error::{invalid, Result};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so parameters whose gradient is
/// essentially zero are judged on absolute error.
const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Index of the worst parameter in flattened order.
    pub worst_parameter: usize,
    pub parameters: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

impl Network {
    pub fn gradient_check(
        &self,
        batch: ArrayView2<'_, f64>,
        labels: &[usize],
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        self.gradient_check_with(batch, labels, tolerance, |net, x, y| {
            Ok(net.loss_and_gradients(x, y)?.1)
        })
    }

    /// Like [`Network::gradient_check`] with a caller-supplied analytic
    /// gradient.
    pub fn gradient_check_with<F>(
        &self,
        batch: ArrayView2<'_, f64>,
        labels: &[usize],
        tolerance: f64,
        analytic: F,
    ) -> Result<GradCheckReport>
    where
        F: Fn(&Network, ArrayView2<'_, f64>, &[usize]) -> Result<Gradients>,
    {
        if batch.nrows() < 2 {
            return Err(invalid("gradient check needs a batch of at least 2"));
        }
        let expected = analytic(self, batch, labels)?.flatten();
        let count = self.parameter_count();
        if expected.len() != count {
            return Err(invalid("analytic gradient has the wrong length"));
        }
        let mut probe = self.clone();
        let mut report = GradCheckReport {
            max_relative_error: 0.0,
            max_absolute_error: 0.0,
            worst_parameter: 0,
            parameters: count,
            tolerance,
        };
        for (k, &g) in expected.iter().enumerate() {
            let original = *probe.parameters_mut()[k];
            *probe.parameters_mut()[k] = original + GRADCHECK_STEP;
            let plus = probe.loss(batch, labels, Norm::Batch)?;
            *probe.parameters_mut()[k] = original - GRADCHECK_STEP;
            let minus = probe.loss(batch, labels, Norm::Batch)?;
            *probe.parameters_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let abs = (numeric - g).abs();
            let rel = abs / numeric.abs().max(g.abs()).max(RELATIVE_FLOOR);
            report.max_absolute_error = report.max_absolute_error.max(abs);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_parameter = k;
            }
        }
        Ok(report)
    }
}
