use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Affine map `count ≈ a·sum + b` fitted by least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountCalibration {
    pub a: f64,
    pub b: f64,
}

impl CountCalibration {
    /// Closed-form least-squares fit of `counts` against image `sums`.
    pub fn fit(sums: &[f64], counts: &[f64]) -> Result<Self, AnalysisError> {
        if sums.len() != counts.len() {
            return Err(AnalysisError::DimensionMismatch { expected: sums.len(), found: counts.len() });
        }
        let n = sums.len() as f64;
        if sums.len() < 2 {
            return Err(AnalysisError::DegenerateFit);
        }
        let ms = sums.iter().sum::<f64>() / n;
        let mc = counts.iter().sum::<f64>() / n;
        let sxx: f64 = sums.iter().map(|s| (s - ms).powi(2)).sum();
        let sxy: f64 = sums.iter().zip(counts).map(|(s, c)| (s - ms) * (c - mc)).sum();
        let scale = sums.iter().map(|s| s.abs()).fold(0.0, f64::max);
        if !(sxx > (1e-12 * scale).powi(2) * n) {
            return Err(AnalysisError::DegenerateFit);
        }
        let a = sxy / sxx;
        Ok(CountCalibration { a, b: mc - a * ms })
    }

    pub fn predict(&self, sum: f64) -> f64 {
        self.a * sum + self.b
    }
}

/// Counts for `test_sums` from a calibration on (`cal_sums`, `cal_counts`).
pub fn count_by_integration(cal_sums: &[f64], cal_counts: &[f64], test_sums: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let c = CountCalibration::fit(cal_sums, cal_counts)?;
    Ok(test_sums.iter().map(|&s| c.predict(s)).collect())
}
