use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub p_value: f64,
    /// `[[correct A, incorrect A], [correct B, incorrect B]]`
    pub table: [[u64; 2]; 2],
}

/// Survival function of the chi-squared distribution with one degree of freedom.
pub fn chi2_sf_df1(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x / 2.0).sqrt())
    }
}

/// Pearson chi-squared on a 2×2 table, one degree of freedom. A zero margin
/// gives statistic 0 and p = 1.
pub fn chi_squared_from_table(table: [[u64; 2]; 2]) -> ChiSquared {
    let [[a, b], [c, d]] = table.map(|r| r.map(|v| v as f64));
    let n = a + b + c + d;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    let statistic = if denom == 0.0 {
        0.0
    } else {
        n * (a * d - b * c).powi(2) / denom
    };
    ChiSquared {
        statistic,
        p_value: chi2_sf_df1(statistic),
        table,
    }
}

/// Compares two systems by their per-example correctness on the same examples.
pub fn chi_squared_test(correct_a: &[bool], correct_b: &[bool]) -> Result<ChiSquared, EvalError> {
    if correct_a.len() != correct_b.len() {
        return Err(EvalError::LengthMismatch {
            left: correct_a.len(),
            right: correct_b.len(),
        });
    }
    if correct_a.is_empty() {
        return Err(EvalError::Empty("correctness vectors"));
    }
    let row = |v: &[bool]| {
        let ok = v.iter().filter(|&&c| c).count() as u64;
        [ok, v.len() as u64 - ok]
    };
    Ok(chi_squared_from_table([row(correct_a), row(correct_b)]))
}
