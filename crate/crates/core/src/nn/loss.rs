use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::NnError;

/// Log-sum-exp of a row, shifted by its maximum.
pub fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Negative log-likelihood of `target` in each row.
pub fn row_nll(logits: ArrayView2<f64>, targets: &[usize]) -> Result<Array1<f64>, NnError> {
    check_targets(logits, targets)?;
    Ok(logits
        .axis_iter(Axis(0))
        .zip(targets)
        .map(|(row, &t)| log_sum_exp(row) - row[t])
        .collect())
}

fn check_targets(logits: ArrayView2<f64>, targets: &[usize]) -> Result<(), NnError> {
    let (rows, classes) = logits.dim();
    if rows != targets.len() {
        return Err(NnError::Shape(format!("{rows} logit rows for {} targets", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(NnError::TargetOutOfRange { target: t, classes });
    }
    Ok(())
}

/// Mean cross-entropy over rows and its gradient `(softmax − one_hot) / rows`.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>), NnError> {
    check_targets(logits, targets)?;
    let n = targets.len() as f64;
    let mut grad = logits.to_owned();
    let mut total = 0.0;
    for (mut row, &t) in grad.axis_iter_mut(Axis(0)).zip(targets) {
        let lse = log_sum_exp(row.view());
        total += lse - row[t];
        row.mapv_inplace(|v| (v - lse).exp());
        row[t] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits() {
        let (loss, grad) = softmax_cross_entropy(Array2::zeros((3, 4)).view(), &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        for row in grad.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn two_class_hand_value() {
        let (loss, grad) = softmax_cross_entropy(array![[2.0, 0.0]].view(), &[0]).unwrap();
        let expected = (1.0 + (-2f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 0.126_928_011_042_973).abs() < 1e-12);
        let p0 = 1.0 / (1.0 + (-2f64).exp());
        assert!((grad[[0, 0]] - (p0 - 1.0)).abs() < 1e-15);
        assert!((grad[[0, 1]] - (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn stable_for_large_logits() {
        let (loss, grad) = softmax_cross_entropy(array![[1000.0, -1000.0, 0.0]].view(), &[1]).unwrap();
        assert!(loss.is_finite() && (loss - 2000.0).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn target_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(Array2::zeros((1, 3)).view(), &[3]),
            Err(NnError::TargetOutOfRange { target: 3, classes: 3 })
        ));
    }

    #[test]
    fn gradient_rows_sum_to_zero_random() {
        let logits = Array2::from_shape_fn((6, 9), |(i, j)| ((i * 31 + j * 17) % 13) as f64 * 0.7 - 4.0);
        let (_, grad) = softmax_cross_entropy(logits.view(), &[0, 8, 3, 3, 5, 1]).unwrap();
        for row in grad.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
        let nll = row_nll(logits.view(), &[0, 8, 3, 3, 5, 1]).unwrap();
        assert!(nll.iter().all(|&v| v > 0.0));
    }
}
