//! Central finite differences with one Richardson step (fourth order).

use nalgebra::{Matrix3, Vector3};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

pub trait Linear: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>> Linear for T {}

/// f'(0) from f(±h), f(±2h).
pub fn derivative<T: Linear, F: Fn(f64) -> T>(f: F, h: f64) -> T {
    let d1 = f(h) - f(-h);
    let d2 = f(2.0 * h) - f(-2.0 * h);
    (d1 * 8.0 - d2) * (1.0 / (12.0 * h))
}

/// f''(0) from the five-point stencil.
pub fn second_derivative<T: Linear, F: Fn(f64) -> T>(f: F, h: f64) -> T {
    let f0 = f(0.0);
    let s1 = f(h) + f(-h);
    let s2 = f(2.0 * h) + f(-2.0 * h);
    (s1 * 16.0 - s2 - f0 * 30.0) * (1.0 / (12.0 * h * h))
}

/// Like `derivative`, but fails when rounding noise at this step exceeds `tol`.
pub fn derivative_checked<F: Fn(f64) -> f64>(f: F, h: f64, tol: f64) -> Result<f64> {
    let vals = [f(-2.0 * h), f(-h), f(h), f(2.0 * h)];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::FdStepFailure(format!("non-finite value within step {h:.3e}")));
    }
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = (8.0 * (vals[2] - vals[1]) - (vals[3] - vals[0])) / (12.0 * h);
    let noise = 4.0 * f64::EPSILON * scale / h;
    if noise > tol {
        return Err(Error::StepTooSmall { noise, signal: d.abs() });
    }
    Ok(d)
}

pub fn gradient<F: Fn(&Vector3<f64>) -> f64>(f: F, x: &Vector3<f64>, h: f64) -> Vector3<f64> {
    Vector3::from_fn(|k, _| {
        let e = Vector3::ith(k, 1.0);
        derivative(|t| f(&(x + e * t)), h)
    })
}

pub fn divergence<F: Fn(&Vector3<f64>) -> Vector3<f64>>(f: F, x: &Vector3<f64>, h: f64) -> f64 {
    (0..3)
        .map(|k| {
            let e = Vector3::ith(k, 1.0);
            derivative(|t| f(&(x + e * t))[k], h)
        })
        .sum()
}

/// ∂_k of a matrix field, k = 0..3.
pub fn matrix_gradient<F: Fn(&Vector3<f64>) -> Matrix3<f64>>(f: F, x: &Vector3<f64>, h: f64) -> [Matrix3<f64>; 3] {
    let d = |k: usize| {
        let e = Vector3::ith(k, 1.0);
        derivative(|t| f(&(x + e * t)), h)
    };
    [d(0), d(1), d(2)]
}

pub fn hessian<F: Fn(&Vector3<f64>) -> f64>(f: F, x: &Vector3<f64>, h: f64) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let ei = Vector3::ith(i, 1.0);
            let ej = Vector3::ith(j, 1.0);
            let v = if i == j {
                second_derivative(|t| f(&(x + ei * t)), h)
            } else {
                derivative(|s| derivative(|t| f(&(x + ei * s + ej * t)), h), h)
            };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_derivative_of_exp() {
        let d = derivative(|t: f64| (1.0 + t).exp(), 1e-2);
        assert!((d - 1f64.exp()).abs() < 1e-9);
        let d2 = second_derivative(|t: f64| (1.0 + t).exp(), 1e-2);
        assert!((d2 - 1f64.exp()).abs() < 1e-8);
    }
}
