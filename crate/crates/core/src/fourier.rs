//! Trigonometric interpolation helpers for 2π-periodic samples on an equispaced grid.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Wavenumber attached to FFT bin `j` of an `n`-point transform.
fn wavenumber(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// First and second derivatives of a periodic complex signal sampled at `t_j = 2πj/n`.
///
/// The Nyquist mode is dropped for the odd derivative and kept for the even one.
pub fn periodic_derivatives(samples: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut spec = samples.to_vec();
    fwd.process(&mut spec);

    let mut d1 = spec.clone();
    let mut d2 = spec;
    for j in 0..n {
        let k = wavenumber(j, n);
        let nyquist = n % 2 == 0 && j == n / 2;
        d1[j] = if nyquist { Complex64::new(0.0, 0.0) } else { d1[j] * Complex64::new(0.0, k) };
        d2[j] *= -k * k;
    }
    inv.process(&mut d1);
    inv.process(&mut d2);
    let scale = 1.0 / n as f64;
    d1.iter_mut().for_each(|v| *v *= scale);
    d2.iter_mut().for_each(|v| *v *= scale);
    (d1, d2)
}

/// Derivative of a real periodic signal with respect to its parameter.
pub fn periodic_derivative_real(samples: &[f64]) -> Vec<f64> {
    let z: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    periodic_derivatives(&z).0.into_iter().map(|v| v.re).collect()
}

/// Real Fourier coefficients `(a0, [a_1..a_k], [b_1..b_k])` of
/// `f(θ) = a0 + Σ a_k cos kθ + b_k sin kθ` from equispaced samples.
pub fn real_coefficients(samples: &[f64], order: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let n = samples.len();
    assert!(order < n / 2, "order must stay below the Nyquist index");
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let mut spec: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut spec);
    let a0 = spec[0].re / n as f64;
    let ak = (1..=order).map(|k| 2.0 * spec[k].re / n as f64).collect();
    let bk = (1..=order).map(|k| -2.0 * spec[k].im / n as f64).collect();
    (a0, ak, bk)
}
