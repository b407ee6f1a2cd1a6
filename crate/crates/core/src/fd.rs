//! Central finite differences, used as an independent oracle in tests.

/// Central-difference estimate of the first or second derivative of `f` at `x`.
///
/// Orders other than 1 and 2 return NaN.
pub fn fd_derivative(f: impl Fn(f64) -> f64, x: f64, order: usize, h: f64) -> f64 {
    match order {
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        _ => f64::NAN,
    }
}

/// Central-difference gradient of a scalar function of many parameters.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative discrepancy between two gradients, with `floor` guarding
/// near-zero entries.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
