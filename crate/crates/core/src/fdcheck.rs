//! Central finite differences for gradient verification. Only forward
//! evaluations are used, so the numeric gradient is independent of every
//! backward-pass code path it is compared against.

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = f(&probe);
        probe[i] = orig - eps;
        let fm = f(&probe);
        probe[i] = orig;
        out.push((fp - fm) / (2.0 * eps));
    }
    out
}

/// Largest guarded relative error between two gradient vectors:
/// |a - n| / max(|a|, |n|, 1).
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let x = [1.0, -2.0, 0.5];
        let g = central_diff(&mut f, &x, 1e-5);
        for (gi, xi) in g.iter().zip(x) {
            assert!((gi - 2.0 * xi).abs() < 1e-9);
        }
    }

    #[test]
    fn rel_err_guards_small_magnitudes() {
        assert!(max_rel_err(&[1e-12], &[0.0]) < 1e-11);
        assert!((max_rel_err(&[2.0], &[1.0]) - 0.5).abs() < 1e-12);
    }
}
