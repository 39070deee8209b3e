//! Discrete transforms, Laplacian spectra and fractional operator powers.
//!
//! The Laplacian `A` is diagonalized by a transform matched to the boundary
//! condition: DFT for periodic, DST-I on interior nodes for Dirichlet, DCT-II
//! on midpoint nodes for Neumann. Fractional powers `(-A)^gamma` act by
//! exponentiating the eigenvalues of `-A` in that basis; all transforms use
//! the unitary normalization so Parseval holds with constant 1.

mod transforms;

use std::f64::consts::PI;

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};

/// Boundary condition of a grid function, fixing both the node placement and
/// the transform that diagonalizes the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    /// 1-periodic on [0,1); nodes x_j = j/n; discrete Fourier transform.
    Periodic,
    /// Zero boundary values; interior nodes x_j = j/(n+1); DST-I.
    Dirichlet,
    /// Zero boundary flux; midpoint nodes x_j = (j+1/2)/n; DCT-II.
    Neumann,
}

impl BoundaryCondition {
    /// Coordinate of node `j` on a grid with `n` points per axis.
    pub fn node(self, j: usize, n: usize) -> f64 {
        match self {
            BoundaryCondition::Periodic => j as f64 / n as f64,
            BoundaryCondition::Dirichlet => (j + 1) as f64 / (n + 1) as f64,
            BoundaryCondition::Neumann => (j as f64 + 0.5) / n as f64,
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Periodic => write!(f, "periodic"),
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
            BoundaryCondition::Neumann => write!(f, "neumann"),
        }
    }
}

/// Spatial dimension of a field: a line or a square grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn as_usize(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }
}

/// A real-valued function sampled on the uniform grid of its boundary
/// condition: `n` values in 1D, `n x n` row-major values in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    dim: Dim,
    bc: BoundaryCondition,
    values: Vec<f64>,
}

impl GridField {
    /// Zero field.
    pub fn zeros(n: usize, bc: BoundaryCondition, dim: Dim) -> Self {
        let len = match dim {
            Dim::One => n,
            Dim::Two => n * n,
        };
        GridField {
            n,
            dim,
            bc,
            values: vec![0.0; len],
        }
    }

    /// Constant field.
    pub fn constant(n: usize, bc: BoundaryCondition, dim: Dim, c: f64) -> Self {
        let mut f = Self::zeros(n, bc, dim);
        f.values.fill(c);
        f
    }

    /// Sample a 1D function at the grid nodes of `bc`.
    pub fn from_fn_1d(n: usize, bc: BoundaryCondition, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|j| f(bc.node(j, n))).collect();
        GridField {
            n,
            dim: Dim::One,
            bc,
            values,
        }
    }

    /// Sample a 2D function at the tensor grid nodes of `bc`.
    pub fn from_fn_2d(n: usize, bc: BoundaryCondition, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            let x = bc.node(i, n);
            for j in 0..n {
                values.push(f(x, bc.node(j, n)));
            }
        }
        GridField {
            n,
            dim: Dim::Two,
            bc,
            values,
        }
    }

    /// Wrap existing values, checking the length against `n` and `dim`.
    pub fn from_values(
        n: usize,
        bc: BoundaryCondition,
        dim: Dim,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = match dim {
            Dim::One => n,
            Dim::Two => n * n,
        };
        if values.len() != expected {
            return Err(Error::shape(format!(
                "expected {} values for n={} dim={}, got {}",
                expected,
                n,
                dim.as_usize(),
                values.len()
            )));
        }
        Ok(GridField { n, dim, bc, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// Total number of grid points (n in 1D, n^2 in 2D).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Node coordinates along one axis.
    pub fn axis_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.bc.node(j, self.n)).collect()
    }

    /// A field of the same shape holding `values`.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.n, self.bc, self.dim, values)
    }

    pub(crate) fn same_shape(&self, other: &GridField) -> bool {
        self.n == other.n && self.dim == other.dim && self.bc == other.bc
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Eigenvalues of `-A` for one grid size and boundary condition, stored per
/// axis in the coefficient layout of the matching transform. 2D eigenvalues
/// are the sums `lambda_i + lambda_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    n: usize,
    dim: Dim,
    bc: BoundaryCondition,
    axis_eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// Per-axis eigenvalues of `-A` in coefficient order.
    pub fn axis_eigenvalues(&self) -> &[f64] {
        &self.axis_eigenvalues
    }

    /// Eigenvalues in coefficient order for the full grid (length n in 1D,
    /// n^2 in 2D).
    pub fn grid_eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            Dim::One => self.axis_eigenvalues.clone(),
            Dim::Two => {
                let n = self.n;
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        out.push(self.axis_eigenvalues[i] + self.axis_eigenvalues[j]);
                    }
                }
                out
            }
        }
    }

    fn check_field(&self, f: &GridField) -> Result<()> {
        if f.n != self.n || f.dim != self.dim || f.bc != self.bc {
            return Err(Error::shape(format!(
                "field (n={}, dim={}, bc={}) does not match spectrum (n={}, dim={}, bc={})",
                f.n,
                f.dim.as_usize(),
                f.bc,
                self.n,
                self.dim.as_usize(),
                self.bc
            )));
        }
        Ok(())
    }
}

/// Coefficients of a field in the transform basis of its boundary condition:
/// complex in FFT order for periodic, real modal coefficients otherwise.
#[derive(Debug, Clone)]
pub struct Coefficients {
    n: usize,
    dim: Dim,
    bc: BoundaryCondition,
    data: CoeffData,
}

#[derive(Debug, Clone)]
pub enum CoeffData {
    Real(Vec<f64>),
    Complex(Vec<Complex<f64>>),
}

impl Coefficients {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn data(&self) -> &CoeffData {
        &self.data
    }

    /// Squared magnitude per coefficient, basis-independent.
    pub fn magnitudes_sq(&self) -> Vec<f64> {
        match &self.data {
            CoeffData::Real(v) => v.iter().map(|c| c * c).collect(),
            CoeffData::Complex(v) => v.iter().map(|c| c.norm_sqr()).collect(),
        }
    }
}

pub(crate) fn validate_grid_size(n: usize) -> Result<()> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidSize { n });
    }
    Ok(())
}

/// Build the eigenvalue spectrum of `-A` for grid size `n`, boundary
/// condition `bc` and dimension `dim`.
///
/// Periodic eigenvalues are `4 pi^2 k^2` over the FFT frequencies; Dirichlet
/// and Neumann use the exact values `pi^2 k^2` of the continuous operator on
/// (0,1), which the matched transforms diagonalize exactly.
pub fn build_spectrum(n: usize, bc: BoundaryCondition, dim: Dim) -> Result<Spectrum> {
    validate_grid_size(n)?;
    let axis_eigenvalues = (0..n)
        .map(|i| match bc {
            BoundaryCondition::Periodic => {
                let k = transforms::fft_frequency(i, n) as f64;
                4.0 * PI * PI * k * k
            }
            BoundaryCondition::Dirichlet => {
                let k = (i + 1) as f64;
                PI * PI * k * k
            }
            BoundaryCondition::Neumann => {
                let k = i as f64;
                PI * PI * k * k
            }
        })
        .collect();
    Ok(Spectrum {
        n,
        dim,
        bc,
        axis_eigenvalues,
    })
}

// Apply a real->real line kernel along `axis` of a (possibly 2D) value grid.
fn map_lines(
    values: &[f64],
    n: usize,
    dim: Dim,
    axis: usize,
    kernel: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    match dim {
        Dim::One => kernel(values),
        Dim::Two => {
            let mut out = vec![0.0; n * n];
            if axis == 1 {
                for (row_in, row_out) in values.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                    row_out.copy_from_slice(&kernel(row_in));
                }
            } else {
                let mut line = vec![0.0; n];
                for j in 0..n {
                    for i in 0..n {
                        line[i] = values[i * n + j];
                    }
                    let t = kernel(&line);
                    for i in 0..n {
                        out[i * n + j] = t[i];
                    }
                }
            }
            out
        }
    }
}

fn real_analysis(f: &GridField) -> Vec<f64> {
    let kernel: fn(&[f64]) -> Vec<f64> = match f.bc {
        BoundaryCondition::Neumann => transforms::cosine_forward,
        BoundaryCondition::Dirichlet => transforms::dst1_orthonormal,
        BoundaryCondition::Periodic => unreachable!("periodic uses the complex path"),
    };
    let mut data = map_lines(&f.values, f.n, f.dim, 1, kernel);
    if f.dim == Dim::Two {
        data = map_lines(&data, f.n, f.dim, 0, kernel);
    }
    data
}

fn real_synthesis(data: &[f64], n: usize, dim: Dim, bc: BoundaryCondition) -> Vec<f64> {
    let kernel: fn(&[f64]) -> Vec<f64> = match bc {
        BoundaryCondition::Neumann => transforms::cosine_inverse,
        BoundaryCondition::Dirichlet => transforms::dst1_orthonormal,
        BoundaryCondition::Periodic => unreachable!("periodic uses the complex path"),
    };
    let mut out = map_lines(data, n, dim, 1, kernel);
    if dim == Dim::Two {
        out = map_lines(&out, n, dim, 0, kernel);
    }
    out
}

fn complex_map_lines(
    values: &mut Vec<Complex<f64>>,
    n: usize,
    dim: Dim,
    axis: usize,
    kernel: impl Fn(&[Complex<f64>]) -> Vec<Complex<f64>>,
) {
    match dim {
        Dim::One => {
            let out = kernel(values);
            *values = out;
        }
        Dim::Two => {
            if axis == 1 {
                for row in values.chunks_exact_mut(n) {
                    row.copy_from_slice(&kernel(row));
                }
            } else {
                let mut line = vec![Complex::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        line[i] = values[i * n + j];
                    }
                    let t = kernel(&line);
                    for i in 0..n {
                        values[i * n + j] = t[i];
                    }
                }
            }
        }
    }
}

fn fourier_analysis(f: &GridField) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = f.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let forward = |line: &[Complex<f64>]| {
        let mut buf = line.to_vec();
        transforms::fourier_forward_complex(&mut buf);
        buf
    };
    complex_map_lines(&mut data, f.n, f.dim, 1, forward);
    if f.dim == Dim::Two {
        complex_map_lines(&mut data, f.n, f.dim, 0, forward);
    }
    data
}

fn fourier_synthesis(data: &[Complex<f64>], n: usize, dim: Dim) -> Vec<Complex<f64>> {
    let mut buf = data.to_vec();
    complex_map_lines(&mut buf, n, dim, 1, |line| {
        transforms::fourier_inverse(line)
    });
    if dim == Dim::Two {
        complex_map_lines(&mut buf, n, dim, 0, |line| {
            transforms::fourier_inverse(line)
        });
    }
    buf
}

/// Forward transform of a field into the coefficient basis of its boundary
/// condition.
pub fn forward_transform(f: &GridField) -> Result<Coefficients> {
    validate_grid_size(f.n)?;
    let data = match f.bc {
        BoundaryCondition::Periodic => CoeffData::Complex(fourier_analysis(f)),
        _ => CoeffData::Real(real_analysis(f)),
    };
    Ok(Coefficients {
        n: f.n,
        dim: f.dim,
        bc: f.bc,
        data,
    })
}

/// Inverse transform back to grid samples.
pub fn inverse_transform(c: &Coefficients) -> Result<GridField> {
    validate_grid_size(c.n)?;
    let values = match &c.data {
        CoeffData::Complex(data) => {
            let expected = match c.dim {
                Dim::One => c.n,
                Dim::Two => c.n * c.n,
            };
            if data.len() != expected {
                return Err(Error::shape(format!(
                    "coefficient length {} does not match n={} dim={}",
                    data.len(),
                    c.n,
                    c.dim.as_usize()
                )));
            }
            fourier_synthesis(data, c.n, c.dim)
                .iter()
                .map(|z| z.re)
                .collect()
        }
        CoeffData::Real(data) => {
            let expected = match c.dim {
                Dim::One => c.n,
                Dim::Two => c.n * c.n,
            };
            if data.len() != expected {
                return Err(Error::shape(format!(
                    "coefficient length {} does not match n={} dim={}",
                    data.len(),
                    c.n,
                    c.dim.as_usize()
                )));
            }
            real_synthesis(data, c.n, c.dim, c.bc)
        }
    };
    GridField::from_values(c.n, c.bc, c.dim, values)
}

// Shared core: transform, multiply coefficient i by weight(lambda_i), invert.
fn apply_spectral_multiplier(
    f: &GridField,
    s: &Spectrum,
    weight: impl Fn(f64) -> f64,
) -> Result<GridField> {
    s.check_field(f)?;
    validate_grid_size(f.n)?;
    let n = f.n;
    let eig = &s.axis_eigenvalues;
    match f.bc {
        BoundaryCondition::Periodic => {
            let mut data = fourier_analysis(f);
            match f.dim {
                Dim::One => {
                    for (i, c) in data.iter_mut().enumerate() {
                        *c *= weight(eig[i]);
                    }
                }
                Dim::Two => {
                    for i in 0..n {
                        for j in 0..n {
                            data[i * n + j] *= weight(eig[i] + eig[j]);
                        }
                    }
                }
            }
            let values = fourier_synthesis(&data, n, f.dim)
                .iter()
                .map(|z| z.re)
                .collect();
            f.with_values(values)
        }
        _ => {
            let mut data = real_analysis(f);
            match f.dim {
                Dim::One => {
                    for (i, c) in data.iter_mut().enumerate() {
                        *c *= weight(eig[i]);
                    }
                }
                Dim::Two => {
                    for i in 0..n {
                        for j in 0..n {
                            data[i * n + j] *= weight(eig[i] + eig[j]);
                        }
                    }
                }
            }
            f.with_values(real_synthesis(&data, n, f.dim, f.bc))
        }
    }
}

/// Apply a general multiplier `weight(lambda)` over the eigenvalues of `-A`.
pub(crate) fn apply_filtered(
    f: &GridField,
    s: &Spectrum,
    weight: impl Fn(f64) -> f64,
) -> Result<GridField> {
    apply_spectral_multiplier(f, s, weight)
}

/// Apply the fractional power `(-A)^gamma` by eigenvalue exponentiation.
///
/// The zero eigenvalue contributes 0 for `gamma > 0`; `gamma = 0` is the
/// identity (the convention 0^0 = 1 applies).
pub fn apply_operator_power(f: &GridField, gamma: f64, s: &Spectrum) -> Result<GridField> {
    if !(gamma >= 0.0) {
        return Err(Error::arg(format!(
            "operator exponent must be >= 0, got {gamma}"
        )));
    }
    apply_spectral_multiplier(f, s, |lam| lam.powf(gamma))
}

/// Apply the Laplacian `A` itself (non-positive spectrum): `A f = -(-A) f`.
pub fn apply_laplacian(f: &GridField, s: &Spectrum) -> Result<GridField> {
    apply_spectral_multiplier(f, s, |lam| -lam)
}

/// Resample a band-limited field onto the grid with `factor * n` points per
/// axis by zero-padding its coefficients: exact for the trigonometric class
/// the transforms span. Used for dealiased quadrature of nonlinear
/// integrands.
pub(crate) fn oversample(f: &GridField, factor: usize) -> Result<GridField> {
    if factor == 0 {
        return Err(Error::arg("oversampling factor must be positive"));
    }
    if factor == 1 {
        return Ok(f.clone());
    }
    let n = f.n;
    let m = factor * n;
    match f.bc {
        BoundaryCondition::Periodic => {
            let coarse = fourier_analysis(f);
            let scale = (m as f64 / n as f64).sqrt();
            let pad_axis = |c: &[Complex<f64>]| {
                let mut fine = vec![Complex::new(0.0, 0.0); m];
                for (i, &v) in c.iter().enumerate() {
                    let k = transforms::fft_frequency(i, n);
                    if i == n / 2 {
                        // Split the Nyquist coefficient across +-n/2.
                        let half = v * 0.5 * scale;
                        fine[n / 2] += half;
                        fine[m - n / 2] += half;
                    } else {
                        let idx = if k >= 0 { k as usize } else { m - (-k) as usize };
                        fine[idx] = v * scale;
                    }
                }
                fine
            };
            match f.dim {
                Dim::One => {
                    let fine = pad_axis(&coarse);
                    let values = fourier_synthesis(&fine, m, Dim::One)
                        .iter()
                        .map(|z| z.re)
                        .collect();
                    GridField::from_values(m, f.bc, f.dim, values)
                }
                Dim::Two => {
                    let mut rows = Vec::with_capacity(n * m);
                    for row in coarse.chunks_exact(n) {
                        rows.extend(pad_axis(row));
                    }
                    let mut fine = vec![Complex::new(0.0, 0.0); m * m];
                    let mut col = vec![Complex::new(0.0, 0.0); n];
                    for j in 0..m {
                        for i in 0..n {
                            col[i] = rows[i * m + j];
                        }
                        let padded = pad_axis(&col);
                        for i in 0..m {
                            fine[i * m + j] = padded[i];
                        }
                    }
                    let values = fourier_synthesis(&fine, m, Dim::Two)
                        .iter()
                        .map(|z| z.re)
                        .collect();
                    GridField::from_values(m, f.bc, f.dim, values)
                }
            }
        }
        _ => {
            let coarse = real_analysis(f);
            let scale = match f.bc {
                // Orthonormal basis functions shrink with grid size; the
                // coefficient rescaling keeps the function values fixed.
                BoundaryCondition::Neumann => (m as f64 / n as f64).sqrt(),
                BoundaryCondition::Dirichlet => ((m + 1) as f64 / (n + 1) as f64).sqrt(),
                BoundaryCondition::Periodic => unreachable!(),
            };
            let pad_axis = |c: &[f64]| {
                let mut fine = vec![0.0; m];
                for (i, &v) in c.iter().enumerate() {
                    fine[i] = v * scale;
                }
                fine
            };
            match f.dim {
                Dim::One => {
                    let fine = pad_axis(&coarse);
                    let values = real_synthesis(&fine, m, Dim::One, f.bc);
                    GridField::from_values(m, f.bc, f.dim, values)
                }
                Dim::Two => {
                    let mut rows = Vec::with_capacity(n * m);
                    for row in coarse.chunks_exact(n) {
                        rows.extend(pad_axis(row));
                    }
                    let mut fine = vec![0.0; m * m];
                    let mut col = vec![0.0; n];
                    for j in 0..m {
                        for i in 0..n {
                            col[i] = rows[i * m + j];
                        }
                        let padded = pad_axis(&col);
                        for i in 0..m {
                            fine[i * m + j] = padded[i];
                        }
                    }
                    let values = real_synthesis(&fine, m, Dim::Two, f.bc);
                    GridField::from_values(m, f.bc, f.dim, values)
                }
            }
        }
    }
}

/// First derivative per axis, computed in the transform basis. The Neumann
/// derivative is represented in the midpoint sine basis, the Dirichlet one in
/// the interior cosine basis, the periodic one by frequency multiplication.
pub fn spectral_gradient(f: &GridField, s: &Spectrum) -> Result<Vec<GridField>> {
    s.check_field(f)?;
    validate_grid_size(f.n)?;
    let bc = f.bc;
    let axes = match f.dim {
        Dim::One => 1,
        Dim::Two => 2,
    };
    let mut out = Vec::with_capacity(axes);
    for axis in 0..axes {
        let data = map_lines(&f.values, f.n, f.dim, axis, |line| {
            transforms::gradient_line(line, bc)
        });
        out.push(f.with_values(data)?);
    }
    Ok(out)
}

/// Discrete adjoint of [`spectral_gradient`]: consumes one field per axis and
/// returns `sum_axis G_axis^T g_axis`. This is the exact matrix transpose of
/// the gradient, which makes `G^T diag(a) G` symmetric.
pub fn gradient_adjoint(components: &[GridField], s: &Spectrum) -> Result<GridField> {
    let axes = match s.dim {
        Dim::One => 1,
        Dim::Two => 2,
    };
    if components.len() != axes {
        return Err(Error::shape(format!(
            "expected {} gradient components, got {}",
            axes,
            components.len()
        )));
    }
    for c in components {
        s.check_field(c)?;
    }
    let bc = s.bc;
    let mut acc = vec![0.0; components[0].len()];
    for (axis, comp) in components.iter().enumerate() {
        let data = map_lines(&comp.values, comp.n, comp.dim, axis, |line| {
            transforms::gradient_adjoint_line(line, bc)
        });
        for (a, d) in acc.iter_mut().zip(&data) {
            *a += d;
        }
    }
    GridField::from_values(s.n, s.bc, s.dim, acc)
}
