//! Linear solvers for the per-step systems: dense direct factorization at
//! small sizes, matrix-free preconditioned Krylov iteration otherwise.
//!
//! Both paths re-verify the residual independently after the solve and are
//! fully deterministic: zero initial guess, fixed iteration order, no
//! randomized restarts.

use crate::error::{Error, Result};
use crate::spectral::{self, GridField, Spectrum};

/// Residual target for the dense direct path.
pub const DENSE_TOL: f64 = 1e-10;

/// Largest system the dense path will assemble.
pub const DENSE_MAX_DIM: usize = 4096;

/// Inner products below this magnitude abort a Krylov iteration.
pub const BREAKDOWN_THRESHOLD: f64 = 1e-30;

/// Which Krylov iteration to run. Conjugate gradients requires the caller to
/// assert a symmetric positive definite operator (the divergence form);
/// BiCGStab handles the general case (the integrated form).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    ConjugateGradient,
    BiCgStab,
}

/// How a system was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    Krylov,
}

/// Health record of one linear solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// Recomputed from scratch after the solve, not the recursion residual.
    pub relative_residual: f64,
    pub method: SolveMethod,
    /// Mean diffusivity used by the spectral preconditioner, when one ran.
    pub preconditioner_coefficient: Option<f64>,
}

/// A preconditioner approximating the system inverse.
pub trait Preconditioner {
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    /// Coefficient recorded in the [`SolveReport`], if meaningful.
    fn coefficient(&self) -> Option<f64> {
        None
    }
}

/// No-op preconditioner.
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
}

/// Exact spectral inverse of `(I - h_t * abar * A)` with `abar = mean(a)`.
///
/// The mean centers the multiplicative spread of `diag(a)`: the diffusivity
/// is close to 1 away from kinks and collapses near them, so the mean is the
/// better cluster center than the max.
pub struct ConstantCoefficientPreconditioner {
    spectrum: Spectrum,
    h_t: f64,
    abar: f64,
}

/// Build the constant-coefficient spectral preconditioner from a diffusivity
/// field. `abar` lands in `(0, 1]` because the diffusivity does.
pub fn make_constant_coefficient_preconditioner(
    a: &GridField,
    h_t: f64,
    s: &Spectrum,
) -> ConstantCoefficientPreconditioner {
    let abar = a.values().iter().sum::<f64>() / a.len() as f64;
    ConstantCoefficientPreconditioner {
        spectrum: s.clone(),
        h_t,
        abar,
    }
}

impl Preconditioner for ConstantCoefficientPreconditioner {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let f = GridField::from_values(
            self.spectrum.n(),
            self.spectrum.bc(),
            self.spectrum.dim(),
            v.to_vec(),
        )
        .expect("preconditioner input matches its spectrum");
        let h_t = self.h_t;
        let abar = self.abar;
        spectral::apply_filtered(&f, &self.spectrum, |lam| 1.0 / (1.0 + h_t * abar * lam))
            .expect("spectral filter on matching shapes")
            .into_values()
    }

    fn coefficient(&self) -> Option<f64> {
        Some(self.abar)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_relative_residual(
    apply: &impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    rhs: &[f64],
    norm_rhs: f64,
) -> f64 {
    let ax = apply(x);
    let r: f64 = ax
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if norm_rhs > 0.0 {
        r / norm_rhs
    } else {
        r
    }
}

// Row-major LU with partial pivoting. The diagonal-ratio of U doubles as a
// cheap condition estimate.
struct DenseLu {
    n: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl DenseLu {
    fn factor(mut data: Vec<f64>, n: usize) -> Result<Self> {
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_mag = data[k * n + k].abs();
            for i in (k + 1)..n {
                let mag = data[i * n + k].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = i;
                }
            }
            if pivot_mag == 0.0 {
                return Err(Error::SingularSystem {
                    condition_estimate: f64::INFINITY,
                });
            }
            pivots[k] = pivot_row;
            if pivot_row != k {
                for j in 0..n {
                    data.swap(k * n + j, pivot_row * n + j);
                }
            }
            let pivot = data[k * n + k];
            for i in (k + 1)..n {
                let factor = data[i * n + k] / pivot;
                data[i * n + k] = factor;
                let (head, tail) = data.split_at_mut(i * n);
                let row_k = &head[k * n + k + 1..k * n + n];
                let row_i = &mut tail[k + 1..n];
                for (a, b) in row_i.iter_mut().zip(row_k) {
                    *a -= factor * b;
                }
            }
        }
        Ok(DenseLu { n, data, pivots })
    }

    fn condition_estimate(&self) -> f64 {
        let mut max_d = 0.0f64;
        let mut min_d = f64::INFINITY;
        for k in 0..self.n {
            let d = self.data[k * self.n + k].abs();
            max_d = max_d.max(d);
            min_d = min_d.min(d);
        }
        if min_d > 0.0 {
            max_d / min_d
        } else {
            f64::INFINITY
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        for i in 1..n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.data[i * n + j] * x[j];
            }
            x[i] = sum;
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in (i + 1)..n {
                sum -= self.data[i * n + j] * x[j];
            }
            x[i] = sum / self.data[i * n + i];
        }
        x
    }
}

/// Solve `apply(x) = rhs` by explicit assembly and LU factorization.
///
/// The matrix is built column-by-column from unit vectors, so `apply` must be
/// linear. Systems with a diagonal-ratio condition estimate above 1e12 are
/// rejected as singular.
pub fn solve_dense(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &GridField,
) -> Result<(GridField, SolveReport)> {
    let dim = rhs.len();
    if dim > DENSE_MAX_DIM {
        return Err(Error::arg(format!(
            "dense solve limited to dimension {DENSE_MAX_DIM}, got {dim}"
        )));
    }
    let mut matrix = vec![0.0; dim * dim];
    let mut unit = vec![0.0; dim];
    for j in 0..dim {
        unit[j] = 1.0;
        let col = apply(&unit);
        unit[j] = 0.0;
        for i in 0..dim {
            matrix[i * dim + j] = col[i];
        }
    }
    let lu = DenseLu::factor(matrix, dim)?;
    let condition_estimate = lu.condition_estimate();
    if condition_estimate > 1e12 {
        return Err(Error::SingularSystem { condition_estimate });
    }
    let x = lu.solve(rhs.values());

    let norm_rhs = norm2(rhs.values());
    let rel = true_relative_residual(&apply, &x, rhs.values(), norm_rhs);
    let report = SolveReport {
        iterations: 1,
        relative_residual: rel,
        method: SolveMethod::Dense,
        preconditioner_coefficient: None,
    };
    if rel > DENSE_TOL {
        return Err(Error::SolverFailure {
            report,
            best_iterate: x,
        });
    }
    Ok((rhs.with_values(x)?, report))
}

/// Solve `apply(x) = rhs` iteratively, stopping when the independently
/// recomputed relative residual drops to `tol`.
pub fn solve_krylov(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &GridField,
    precond: &dyn Preconditioner,
    method: KrylovMethod,
    tol: f64,
    max_iter: usize,
) -> Result<(GridField, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("solver tolerance must be > 0, got {tol}")));
    }
    let b = rhs.values();
    let norm_b = norm2(b);
    let coeff = precond.coefficient();
    if norm_b == 0.0 {
        // The zero vector solves any of our nonsingular systems.
        let report = SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            method: SolveMethod::Krylov,
            preconditioner_coefficient: coeff,
        };
        return Ok((rhs.with_values(vec![0.0; b.len()])?, report));
    }
    let result = match method {
        KrylovMethod::ConjugateGradient => pcg(&apply, b, precond, tol, max_iter, norm_b),
        KrylovMethod::BiCgStab => bicgstab(&apply, b, precond, tol, max_iter, norm_b),
    };
    match result {
        Ok((x, iterations)) => {
            let rel = true_relative_residual(&apply, &x, b, norm_b);
            let report = SolveReport {
                iterations,
                relative_residual: rel,
                method: SolveMethod::Krylov,
                preconditioner_coefficient: coeff,
            };
            Ok((rhs.with_values(x)?, report))
        }
        Err(KrylovFailure::MaxIter { best, iterations }) => {
            let rel = true_relative_residual(&apply, &best, b, norm_b);
            Err(Error::SolverFailure {
                report: SolveReport {
                    iterations,
                    relative_residual: rel,
                    method: SolveMethod::Krylov,
                    preconditioner_coefficient: coeff,
                },
                best_iterate: best,
            })
        }
        Err(KrylovFailure::Breakdown { iteration, magnitude }) => Err(Error::Breakdown {
            iteration,
            magnitude,
        }),
    }
}

enum KrylovFailure {
    MaxIter { best: Vec<f64>, iterations: usize },
    Breakdown { iteration: usize, magnitude: f64 },
}

fn pcg(
    apply: &impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
    norm_b: f64,
) -> std::result::Result<(Vec<f64>, usize), KrylovFailure> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = precond.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for k in 1..=max_iter {
        let q = apply(&p);
        let pq = dot(&p, &q);
        if pq.abs() < BREAKDOWN_THRESHOLD {
            return Err(KrylovFailure::Breakdown {
                iteration: k,
                magnitude: pq.abs(),
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm2(&r) / norm_b <= tol {
            // Confirm against a residual computed from scratch before
            // declaring convergence; the recursion can drift.
            let true_rel = true_relative_residual(apply, &x, b, norm_b);
            if true_rel <= tol {
                return Ok((x, k));
            }
        }
        z = precond.apply(&r);
        let rz_new = dot(&r, &z);
        if rz.abs() < BREAKDOWN_THRESHOLD {
            return Err(KrylovFailure::Breakdown {
                iteration: k,
                magnitude: rz.abs(),
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(KrylovFailure::MaxIter {
        best: x,
        iterations: max_iter,
    })
}

fn bicgstab(
    apply: &impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
    norm_b: f64,
) -> std::result::Result<(Vec<f64>, usize), KrylovFailure> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < BREAKDOWN_THRESHOLD {
            return Err(KrylovFailure::Breakdown {
                iteration: k,
                magnitude: rho_new.abs(),
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond.apply(&p);
        v = apply(&p_hat);
        let rv = dot(&r_hat, &v);
        if rv.abs() < BREAKDOWN_THRESHOLD {
            return Err(KrylovFailure::Breakdown {
                iteration: k,
                magnitude: rv.abs(),
            });
        }
        alpha = rho / rv;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) / norm_b <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            let true_rel = true_relative_residual(apply, &x, b, norm_b);
            if true_rel <= tol {
                return Ok((x, k));
            }
            // Not converged after all: restore and keep iterating.
            for i in 0..n {
                x[i] -= alpha * p_hat[i];
            }
        }
        let s_hat = precond.apply(&s);
        let t = apply(&s_hat);
        let tt = dot(&t, &t);
        if tt.abs() < BREAKDOWN_THRESHOLD {
            return Err(KrylovFailure::Breakdown {
                iteration: k,
                magnitude: tt.abs(),
            });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) / norm_b <= tol {
            let true_rel = true_relative_residual(apply, &x, b, norm_b);
            if true_rel <= tol {
                return Ok((x, k));
            }
        }
    }
    Err(KrylovFailure::MaxIter {
        best: x,
        iterations: max_iter,
    })
}
