use super::GradError;

/// Central differences `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)`.
pub fn finite_difference<F>(mut f: F, x: &[f64], eps: f64) -> Result<Vec<f64>, GradError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(GradError::BadStep(eps));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let hi = f(&probe);
        probe[i] = x[i] - eps;
        let lo = f(&probe);
        probe[i] = x[i];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(GradError::OracleFault { coord: i });
        }
        out.push((hi - lo) / (2.0 * eps));
    }
    Ok(out)
}
