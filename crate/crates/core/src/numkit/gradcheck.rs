//! Central finite differences, used as an independent oracle for the tape.

use super::mlp::Mlp;

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn central_difference(params: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(&x);
            x[i] = orig - step;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Finite-difference gradient of `loss` over every weight of `net`, flattened
/// in [`Mlp::flat_params`] order.
pub fn mlp_central_difference(net: &Mlp, step: f64, mut loss: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let mut scratch = net.clone();
    central_difference(&net.flat_params(), step, |p| {
        scratch.set_flat_params(p).expect("same parameter count");
        loss(&scratch)
    })
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
