use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Mean squared error over every element, with its gradient
/// `2(pred − target) / (rows·cols)`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    pred.ensure_same_shape(target, "mse_loss")?;
    let count = pred.data().len();
    if count == 0 {
        return Err(Error::Data("mse_loss on an empty matrix".into()));
    }
    let scale = 2.0 / count as f64;
    let mut sum = 0.0f64;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let diff = f64::from(p) - f64::from(t);
            sum += diff * diff;
            (scale * diff) as f32
        })
        .collect();
    Ok((
        sum / count as f64,
        Matrix::from_vec(pred.rows(), pred.cols(), grad)?,
    ))
}

/// Sum of squared differences, for callers that aggregate MSE across
/// several batches.
pub(crate) fn squared_error_sum(pred: &Matrix, target: &Matrix) -> Result<f64> {
    pred.ensure_same_shape(target, "squared_error_sum")?;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = f64::from(p) - f64::from(t);
            d * d
        })
        .sum())
}

/// Per-row negative log-likelihoods, computed with the max-shifted
/// log-sum-exp.
pub(crate) fn row_nll(logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(logits, labels)?;
    Ok(logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
            let lse = max + row.iter().map(|&v| (f64::from(v) - max).exp()).sum::<f64>().ln();
            lse - f64::from(row[y])
        })
        .collect())
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension {
            op: "softmax_cross_entropy",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= logits.cols()) {
        return Err(Error::Data(format!(
            "label {y} at row {i} is out of range for {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

/// Mean cross-entropy of `softmax(logits)` against class indices, with the
/// gradient `(softmax − onehot) / rows`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let n = logits.rows();
    if n == 0 {
        return Err(Error::Data("softmax_cross_entropy on an empty batch".into()));
    }
    let mut grad = Matrix::zeros(n, logits.cols());
    let mut total = 0.0f64;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
        let exps: Vec<f64> = row.iter().map(|&v| (f64::from(v) - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() + max - f64::from(row[y]);
        for (c, (g, e)) in grad.row_mut(r).iter_mut().zip(&exps).enumerate() {
            let onehot = if c == y { 1.0 } else { 0.0 };
            *g = ((e / z - onehot) / n as f64) as f32;
        }
    }
    Ok((total / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_equal_inputs() {
        let a = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let (loss, grad) = mse_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_hand_values() {
        let (loss, grad) = mse_loss(
            &Matrix::from_rows(&[[0.0, 0.0]]),
            &Matrix::from_rows(&[[1.0, 1.0]]),
        )
        .unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad, Matrix::from_rows(&[[-1.0, -1.0]]));

        let (loss, grad) =
            mse_loss(&Matrix::from_rows(&[[2.0]]), &Matrix::from_rows(&[[0.0]])).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(grad, Matrix::from_rows(&[[4.0]]));
    }

    #[test]
    fn mse_shape_mismatch() {
        assert!(mse_loss(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn xent_symmetric_case() {
        let (loss, grad) =
            softmax_cross_entropy(&Matrix::from_rows(&[[0.0, 0.0]]), &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(grad, Matrix::from_rows(&[[-0.5, 0.5]]));
    }

    #[test]
    fn xent_large_logits_do_not_overflow() {
        let (loss, grad) =
            softmax_cross_entropy(&Matrix::from_rows(&[[1000.0, 0.0]]), &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12, "{loss}");
        assert!(grad.data().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn xent_out_of_range_label_names_row() {
        let err = softmax_cross_entropy(&Matrix::zeros(3, 2), &[0, 1, 2]).unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("row 2")), "{err}");
    }

    #[test]
    fn row_nll_matches_mean_loss() {
        let logits = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.0, 1.0, 0.0]]);
        let labels = [2, 0];
        let per_row = row_nll(&logits, &labels).unwrap();
        let (mean, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        assert!((per_row.iter().sum::<f64>() / 2.0 - mean).abs() < 1e-12);
    }
}
