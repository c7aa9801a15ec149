use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Softmax cross-entropy for one row of logits. Returns the loss and
/// `softmax(logits) − one_hot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let log_sum = sum.ln() + max;
    let loss = log_sum - logits[label];
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("cross-entropy loss {loss} for logits {logits:?}")));
    }
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over a `[N, C]` batch, with the gradient of the mean.
pub fn batch_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape("logits [N, C]", &[labels.len(), 0], s));
    }
    let (n, c) = (s[0], s[1]);
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * c);
    let scale = 1.0 / n as f64;
    for (row, &label) in logits.data().chunks_exact(c).zip(labels) {
        let (l, g) = softmax_cross_entropy(row, label)?;
        total += l;
        grad.extend(g.into_iter().map(|v| v * scale));
    }
    Ok((total * scale, Tensor::new(&[n, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let (l, g) = softmax_cross_entropy(&[0.3; 7], 2).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!((g.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn large_logits_are_stable() {
        let (l, g) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.iter().all(|v| v.is_finite()));
        let (l2, _) = softmax_cross_entropy(&[1e6, -1e6, 0.0], 1).unwrap();
        assert!(l2.is_finite());
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 1.0], 2),
            Err(Error::LabelOutOfRange { label: 2, num_classes: 2 })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = [0.3, -1.2, 2.0, 0.7];
        let (_, g) = softmax_cross_entropy(&logits, 2).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut p = logits;
            p[i] += h;
            let mut m = logits;
            m[i] -= h;
            let fd = (softmax_cross_entropy(&p, 2).unwrap().0 - softmax_cross_entropy(&m, 2).unwrap().0) / (2.0 * h);
            let rel = (fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-8);
            assert!(rel < 1e-6, "entry {i}: fd {fd} analytic {}", g[i]);
        }
    }
}
