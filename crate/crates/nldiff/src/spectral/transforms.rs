//! Orthonormal 1D transform kernels and the process-wide plan cache.
//!
//! Every kernel here is unitary: the grid 2-norm of a line equals the 2-norm
//! of its coefficients, so Parseval holds with constant 1. The underlying
//! rustfft / rustdct plans are unnormalized; the scale factors below supply
//! the orthonormal convention.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustdct::{Dct1, DctPlanner, Dst1, TransformType2And3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

struct Planners {
    fft: FftPlanner<f64>,
    dct: DctPlanner<f64>,
}

static PLANNERS: OnceLock<Mutex<Planners>> = OnceLock::new();
static DCT23_CACHE: OnceLock<Mutex<HashMap<usize, Arc<dyn TransformType2And3<f64>>>>> =
    OnceLock::new();

fn planners() -> &'static Mutex<Planners> {
    PLANNERS.get_or_init(|| {
        Mutex::new(Planners {
            fft: FftPlanner::new(),
            dct: DctPlanner::new(),
        })
    })
}

fn fft_plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut guard = planners().lock().unwrap();
    if forward {
        guard.fft.plan_fft_forward(n)
    } else {
        guard.fft.plan_fft_inverse(n)
    }
}

fn dct23_plan(n: usize) -> Arc<dyn TransformType2And3<f64>> {
    let cache = DCT23_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(plan) = cache.lock().unwrap().get(&n) {
        return Arc::clone(plan);
    }
    let plan = planners().lock().unwrap().dct.plan_dct2(n);
    cache
        .lock()
        .unwrap()
        .entry(n)
        .or_insert_with(|| Arc::clone(&plan));
    plan
}

fn dst1_plan(n: usize) -> Arc<dyn Dst1<f64>> {
    planners().lock().unwrap().dct.plan_dst1(n)
}

fn dct1_plan(n: usize) -> Arc<dyn Dct1<f64>> {
    planners().lock().unwrap().dct.plan_dct1(n)
}

/// Unitary DFT of a real line; coefficients in standard FFT frequency order.
pub(super) fn fourier_forward(line: &[f64]) -> Vec<Complex<f64>> {
    let n = line.len();
    let mut buf: Vec<Complex<f64>> = line.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_plan(n, true).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Unitary forward DFT of an already-complex line, in place.
pub(super) fn fourier_forward_complex(buf: &mut [Complex<f64>]) {
    let n = buf.len();
    fft_plan(n, true).process(buf);
    let scale = 1.0 / (n as f64).sqrt();
    for c in buf.iter_mut() {
        *c *= scale;
    }
}

/// Unitary inverse DFT onto complex samples; callers take the real part.
pub(super) fn fourier_inverse(coeffs: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    fft_plan(n, false).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Signed frequency for FFT layout index `i`: 0, 1, ..., n/2, -n/2+1, ..., -1.
pub(super) fn fft_frequency(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Analysis in the orthonormal midpoint cosine basis
/// `phi_k(x_j) = s_k cos(pi k (2j+1)/(2n))`, modes k = 0..n-1.
pub(super) fn cosine_forward(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    let mut buf = line.to_vec();
    dct23_plan(n).process_dct2(&mut buf);
    buf[0] *= (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    for c in buf.iter_mut().skip(1) {
        *c *= s;
    }
    buf
}

/// Synthesis from orthonormal midpoint cosine coefficients.
pub(super) fn cosine_inverse(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    buf[0] *= 2.0 * (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    for c in buf.iter_mut().skip(1) {
        *c *= s;
    }
    dct23_plan(n).process_dct3(&mut buf);
    buf
}

/// Analysis in the orthonormal midpoint sine basis
/// `psi_k(x_j) = t_k sin(pi k (2j+1)/(2n))`, modes k = 1..n stored at k-1.
pub(super) fn sine_midpoint_forward(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    let mut buf = line.to_vec();
    dct23_plan(n).process_dst2(&mut buf);
    let s = (2.0 / n as f64).sqrt();
    for c in buf.iter_mut().take(n - 1) {
        *c *= s;
    }
    buf[n - 1] *= (1.0 / n as f64).sqrt();
    buf
}

/// Synthesis from orthonormal midpoint sine coefficients.
pub(super) fn sine_midpoint_inverse(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    let s = (2.0 / n as f64).sqrt();
    for c in buf.iter_mut().take(n - 1) {
        *c *= s;
    }
    buf[n - 1] *= 2.0 * (1.0 / n as f64).sqrt();
    dct23_plan(n).process_dst3(&mut buf);
    buf
}

/// Orthonormal DST-I on the interior grid x_j = j/(n+1); self-inverse.
pub(super) fn dst1_orthonormal(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    let mut buf = line.to_vec();
    dst1_plan(n).process_dst1(&mut buf);
    let s = (2.0 / (n + 1) as f64).sqrt();
    for c in &mut buf {
        *c *= s;
    }
    buf
}

/// Symmetric interior cosine evaluation `E[j] = sum_k v_k cos(pi k j/(n+1))`
/// for j, k = 1..n. Used for the Dirichlet gradient and its adjoint; E = E^T.
pub(super) fn interior_cosine_apply(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    let mut padded = vec![0.0; n + 2];
    padded[1..=n].copy_from_slice(line);
    dct1_plan(n + 2).process_dct1(&mut padded);
    padded[1..=n].to_vec()
}

/// 1D spectral derivative of one line, per boundary condition.
pub(super) fn gradient_line(line: &[f64], bc: crate::spectral::BoundaryCondition) -> Vec<f64> {
    use crate::spectral::BoundaryCondition::*;
    let n = line.len();
    match bc {
        Periodic => {
            let mut coeffs = fourier_forward(line);
            for (i, c) in coeffs.iter_mut().enumerate() {
                // The Nyquist mode has no resolved odd derivative; drop it.
                if i == n / 2 {
                    *c = Complex::new(0.0, 0.0);
                } else {
                    let k = fft_frequency(i, n) as f64;
                    *c *= Complex::new(0.0, 2.0 * PI * k);
                }
            }
            fourier_inverse(&coeffs).iter().map(|c| c.re).collect()
        }
        Neumann => {
            // d/dx of the cosine series lives in the midpoint sine basis.
            let y = cosine_forward(line);
            let mut b = vec![0.0; n];
            for k in 1..n {
                b[k - 1] = -PI * k as f64 * y[k];
            }
            sine_midpoint_inverse(&b)
        }
        Dirichlet => {
            // d/dx of the sine series, evaluated through the interior
            // cosines; the basis carries the DST-I normalization.
            let t = (2.0 / (n + 1) as f64).sqrt();
            let y = dst1_orthonormal(line);
            let d: Vec<f64> = y
                .iter()
                .enumerate()
                .map(|(i, &v)| t * PI * (i + 1) as f64 * v)
                .collect();
            interior_cosine_apply(&d)
        }
    }
}

/// Exact transpose of [`gradient_line`] as a real matrix.
pub(super) fn gradient_adjoint_line(
    line: &[f64],
    bc: crate::spectral::BoundaryCondition,
) -> Vec<f64> {
    use crate::spectral::BoundaryCondition::*;
    let n = line.len();
    match bc {
        // The periodic gradient matrix is antisymmetric.
        Periodic => gradient_line(line, bc).iter().map(|v| -v).collect(),
        Neumann => {
            let b = sine_midpoint_forward(line);
            let mut y = vec![0.0; n];
            for k in 1..n {
                y[k] = -PI * k as f64 * b[k - 1];
            }
            cosine_inverse(&y)
        }
        Dirichlet => {
            let t = (2.0 / (n + 1) as f64).sqrt();
            let e = interior_cosine_apply(line);
            let y: Vec<f64> = e
                .iter()
                .enumerate()
                .map(|(i, &v)| t * PI * (i + 1) as f64 * v)
                .collect();
            dst1_orthonormal(&y)
        }
    }
}
