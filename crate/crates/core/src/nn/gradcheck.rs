//! Finite-difference verification of backpropagation.

use ndarray::ArrayView2;

use super::Mlp;
use crate::error::Result;

/// Denominator floor so near-zero gradients compare on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

pub fn analytic_gradient(net: &Mlp, x: &[f64], labels: &[Option<usize>]) -> Result<Vec<f64>> {
    let x = ArrayView2::from_shape((1, x.len()), x).expect("1-row view");
    let (_, g) = net.loss_and_grad(x, &[labels])?;
    Ok(g.flatten())
}

/// Central differences with step `h` on every parameter.
pub fn numeric_gradient(
    net: &Mlp,
    x: &[f64],
    labels: &[Option<usize>],
    h: f64,
) -> Result<Vec<f64>> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("1-row view");
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.param_count());
    for i in 0..net.param_count() {
        let p = net.param(i);
        probe.set_param(i, p + h);
        let (up, _) = probe.loss_and_grad(xv, &[labels])?;
        probe.set_param(i, p - h);
        let (down, _) = probe.loss_and_grad(xv, &[labels])?;
        probe.set_param(i, p);
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `max_i |a_i - n_i| / max(|a_i| + |n_i|, 1e-6)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

pub fn grad_check(net: &Mlp, x: &[f64], labels: &[Option<usize>]) -> Result<f64> {
    let a = analytic_gradient(net, x, labels)?;
    let n = numeric_gradient(net, x, labels, 1e-5)?;
    Ok(max_relative_error(&a, &n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backprop_matches_differences() {
        let net = Mlp::glorot(&[4, 5, 3], 3, 17).unwrap();
        let err = grad_check(&net, &[0.3, -0.7, 1.1, 0.05], &[Some(2)]).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let net = Mlp::glorot(&[4, 5, 3], 3, 17).unwrap();
        let x = [0.3, -0.7, 1.1, 0.05];
        let mut a = analytic_gradient(&net, &x, &[Some(1)]).unwrap();
        let n = numeric_gradient(&net, &x, &[Some(1)], 1e-5).unwrap();
        a[0] += 0.1;
        assert!(max_relative_error(&a, &n) > 1e-2);
    }

    #[test]
    fn degenerate_input_stays_finite() {
        let net = Mlp::glorot(&[4, 5, 3], 3, 2).unwrap();
        let err = grad_check(&net, &[0.0; 4], &[Some(0)]).unwrap();
        assert!(err.is_finite());
    }
}
