//! Differentiable building blocks: dense MLPs with exact parameter and
//! input gradients, and an Adam optimizer.

mod adam;
mod matrix;
mod mlp;

pub use adam::{adam_step, clip_grad_norm, OptimizerState};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardCache, MlpSpec, ParamVector};

/// L2-normalizes `v` in place and returns the original norm.
pub fn normalize_in_place(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Backpropagates `∂L/∂u` through `u = y/‖y‖`, given `u` and `‖y‖`.
pub fn normalize_backward(u: &[f64], norm: f64, d_u: &[f64]) -> Vec<f64> {
    let dot: f64 = u.iter().zip(d_u).map(|(a, b)| a * b).sum();
    u.iter().zip(d_u).map(|(ui, di)| (di - ui * dot) / norm).collect()
}

/// Numerically stable `log(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Wraps an angle to (−π, π].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}
