//! Label-smoothed cross-entropy: the target distribution puts 1 - eps on
//! the true class and eps/K on every class, averaged over the batch.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Returns (mean loss, gradient with respect to the logits).
pub fn cross_entropy_label_smoothing(
    logits: &Tensor,
    labels: &[usize],
    eps: f64,
) -> Result<(f64, Tensor)> {
    if logits.ndim() != 2 || logits.dims()[0] != labels.len() {
        return Err(Error::Shape(format!(
            "loss: logits {:?} vs {} labels",
            logits.dims(),
            labels.len()
        )));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "label smoothing must lie in [0, 1), got {eps}"
        )));
    }
    let (n, k) = (logits.dims()[0], logits.dims()[1]);
    let mut grad = Tensor::zeros(logits.dims());
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (row, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {k} classes (row {row})"
            )));
        }
        let ls = &logits.data()[row * k..(row + 1) * k];
        let max = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = ls.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        let uniform = eps / k as f64;
        for (j, &l) in ls.iter().enumerate() {
            let q = uniform + if j == label { 1.0 - eps } else { 0.0 };
            let log_p = l - log_sum;
            total -= q * log_p;
            grad.data_mut()[row * k + j] = (log_p.exp() - q) * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// Count of rows whose arg-max logit matches the label.
pub fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    let k = logits.dims()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &label)| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == label
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_smoothing_is_standard_cross_entropy() {
        let logits = Tensor::from_rows(&[vec![2.0, 0.5, -1.0]]).unwrap();
        let (loss, _) = cross_entropy_label_smoothing(&logits, &[0], 0.0).unwrap();
        // -log softmax_0 computed directly.
        let z: f64 = logits.data().iter().map(|v| v.exp()).sum();
        let want = -(2.0f64.exp() / z).ln();
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_log_k_for_any_smoothing() {
        for k in [2usize, 4, 7] {
            let logits = Tensor::filled(&[3, k], 0.37);
            for eps in [0.0, 0.1, 0.5] {
                let (loss, _) =
                    cross_entropy_label_smoothing(&logits, &[0, k - 1, k / 2], eps).unwrap();
                assert!((loss - (k as f64).ln()).abs() < 1e-12, "k {k} eps {eps}");
            }
        }
    }

    #[test]
    fn smoothing_raises_loss_on_confident_correct_logits() {
        let logits = Tensor::from_rows(&[vec![10.0, 0.0, 0.0, 0.0]]).unwrap();
        let (plain, _) = cross_entropy_label_smoothing(&logits, &[0], 0.0).unwrap();
        let (smoothed, _) = cross_entropy_label_smoothing(&logits, &[0], 0.1).unwrap();
        assert!(smoothed > plain);
    }

    #[test]
    fn label_out_of_range_errors() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(cross_entropy_label_smoothing(&logits, &[3], 0.0).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = Tensor::from_rows(&[vec![0.3, -0.7, 1.1], vec![0.0, 0.2, -0.5]]).unwrap();
        let labels = [2usize, 1];
        let eps_smooth = 0.1;
        let (_, grad) = cross_entropy_label_smoothing(&logits, &labels, eps_smooth).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut lp = logits.clone();
            lp.data_mut()[i] += h;
            let mut lm = logits.clone();
            lm.data_mut()[i] -= h;
            let (fp, _) = cross_entropy_label_smoothing(&lp, &labels, eps_smooth).unwrap();
            let (fm, _) = cross_entropy_label_smoothing(&lm, &labels, eps_smooth).unwrap();
            let num = (fp - fm) / (2.0 * h);
            assert!((num - grad.data()[i]).abs() < 1e-8, "logit {i}");
        }
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let logits =
            Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0], vec![0.1, 0.2]]).unwrap();
        assert_eq!(count_correct(&logits, &[1, 0, 0]), 2);
    }
}
