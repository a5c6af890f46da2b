//! Spectral Galerkin machinery on 2-D tensor-product Laplacian eigenbases.
//!
//! Two bases are supported:
//! - periodic on (0, 2pi)^2: complex exponentials `exp(i(kx+ly))/(2pi)` with
//!   modes `k, l in {-N/2, ..., N/2-1}` and eigenvalues `k^2 + l^2`;
//! - homogeneous Neumann on (-1, 1)^2: normalized cosines
//!   `phi_k(x) phi_l(y)` with `phi_0 = 1/sqrt(2)`,
//!   `phi_k(x) = cos(k pi (x+1)/2)` and eigenvalues `(k pi/2)^2 + (l pi/2)^2`.
//!
//! Grids are uniform: `x_i = 2 pi i / M` for periodic, cell midpoints
//! `x_i = -1 + (i + 1/2) * 2/M` for Neumann. On the midpoint grid the cosine
//! system is exactly orthonormal under the equal-weight quadrature `(2/M)^2`,
//! so transforms round-trip to machine precision and Parseval holds discretely
//! (same for the periodic rectangle rule).
//!
//! The coefficient array is always `N x N` complex, indexed in FFT order for
//! periodic (`k = a` for `a < N/2`, else `a - N`) and by `k = a` for Neumann.
//! Neumann coefficients carry zero imaginary parts.
//!
//! With `dealias` enabled the grid has `M = 3N/2` points per dimension so
//! quadratic products are evaluated alias-free (2/3 rule). In that mode the
//! asymmetric periodic Nyquist row `k = -N/2` is dropped from the retained set
//! (it has no conjugate partner on the finer grid and would break realness).

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Fourier basis on (0, 2pi)^2.
    Periodic,
    /// Cosine basis on (-1, 1)^2.
    Neumann,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Periodic => write!(f, "periodic"),
            BoundaryCondition::Neumann => write!(f, "neumann"),
        }
    }
}

/// Immutable transform plans plus eigenvalue tables for one basis; shareable
/// across threads behind an `Arc`.
pub struct SpectralBasis {
    bc: BoundaryCondition,
    n_modes: usize,
    grid_points: usize,
    dealias: bool,
    eigenvalues: Array2<f64>,
    grid: Vec<f64>,
    // periodic machinery
    fft_fwd: Option<Arc<dyn Fft<f64>>>,
    fft_inv: Option<Arc<dyn Fft<f64>>>,
    // Neumann machinery: phi_k(x_i) and phi_k'(x_i), both M x N
    basis_mat: Option<Array2<f64>>,
    basis_mat_deriv: Option<Array2<f64>>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("bc", &self.bc)
            .field("n_modes", &self.n_modes)
            .field("grid_points", &self.grid_points)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl PartialEq for SpectralBasis {
    fn eq(&self, other: &Self) -> bool {
        self.bc == other.bc
            && self.n_modes == other.n_modes
            && self.grid_points == other.grid_points
            && self.dealias == other.dealias
    }
}

impl SpectralBasis {
    pub fn new(bc: BoundaryCondition, n_modes: usize, dealias: bool) -> Result<Arc<Self>> {
        if n_modes < 2 {
            return Err(Error::Config(format!("n_modes must be >= 2, got {n_modes}")));
        }
        if bc == BoundaryCondition::Periodic && n_modes % 2 != 0 {
            return Err(Error::Config(format!(
                "periodic basis needs even n_modes, got {n_modes}"
            )));
        }
        let grid_points = if dealias {
            if n_modes % 2 != 0 {
                return Err(Error::Config("dealiasing needs even n_modes".to_string()));
            }
            3 * n_modes / 2
        } else {
            n_modes
        };

        let mut basis = SpectralBasis {
            bc,
            n_modes,
            grid_points,
            dealias,
            eigenvalues: Array2::zeros((n_modes, n_modes)),
            grid: Vec::new(),
            fft_fwd: None,
            fft_inv: None,
            basis_mat: None,
            basis_mat_deriv: None,
        };

        match bc {
            BoundaryCondition::Periodic => {
                let m = grid_points;
                basis.grid = (0..m).map(|i| 2.0 * std::f64::consts::PI * i as f64 / m as f64).collect();
                let mut planner = FftPlanner::new();
                basis.fft_fwd = Some(planner.plan_fft_forward(m));
                basis.fft_inv = Some(planner.plan_fft_inverse(m));
            }
            BoundaryCondition::Neumann => {
                let m = grid_points;
                basis.grid = (0..m).map(|i| -1.0 + (i as f64 + 0.5) * 2.0 / m as f64).collect();
                let mut b = Array2::zeros((m, n_modes));
                let mut bd = Array2::zeros((m, n_modes));
                for (i, &x) in basis.grid.iter().enumerate() {
                    for k in 0..n_modes {
                        if k == 0 {
                            b[[i, 0]] = 1.0 / 2.0f64.sqrt();
                            bd[[i, 0]] = 0.0;
                        } else {
                            let w = k as f64 * std::f64::consts::PI / 2.0;
                            b[[i, k]] = (w * (x + 1.0)).cos();
                            bd[[i, k]] = -w * (w * (x + 1.0)).sin();
                        }
                    }
                }
                basis.basis_mat = Some(b);
                basis.basis_mat_deriv = Some(bd);
            }
        }

        for a in 0..n_modes {
            for b in 0..n_modes {
                basis.eigenvalues[[a, b]] = if basis.mode_dropped(a) || basis.mode_dropped(b) {
                    0.0
                } else {
                    basis.lambda_1d(a) + basis.lambda_1d(b)
                };
            }
        }
        Ok(Arc::new(basis))
    }

    pub fn periodic(n_modes: usize) -> Result<Arc<Self>> {
        Self::new(BoundaryCondition::Periodic, n_modes, false)
    }

    pub fn neumann(n_modes: usize) -> Result<Arc<Self>> {
        Self::new(BoundaryCondition::Neumann, n_modes, false)
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    /// Grid coordinates along one dimension (the grid is the tensor square).
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Eigenvalues `lambda_{k,l} >= 0` of `-Laplacian`, indexed like coefficients.
    pub fn eigenvalues(&self) -> &Array2<f64> {
        &self.eigenvalues
    }

    /// Side length of the square domain.
    pub fn domain_length(&self) -> f64 {
        match self.bc {
            BoundaryCondition::Periodic => 2.0 * std::f64::consts::PI,
            BoundaryCondition::Neumann => 2.0,
        }
    }

    pub fn domain_area(&self) -> f64 {
        let l = self.domain_length();
        l * l
    }

    /// Quadrature weight of one grid cell.
    pub fn cell_area(&self) -> f64 {
        let h = self.domain_length() / self.grid_points as f64;
        h * h
    }

    /// Signed mode number for coefficient slot `a`.
    pub fn mode_number(&self, a: usize) -> i64 {
        match self.bc {
            BoundaryCondition::Periodic => {
                if a < self.n_modes / 2 {
                    a as i64
                } else {
                    a as i64 - self.n_modes as i64
                }
            }
            BoundaryCondition::Neumann => a as i64,
        }
    }

    fn lambda_1d(&self, a: usize) -> f64 {
        let k = self.mode_number(a) as f64;
        match self.bc {
            BoundaryCondition::Periodic => k * k,
            BoundaryCondition::Neumann => {
                let w = k * std::f64::consts::PI / 2.0;
                w * w
            }
        }
    }

    /// Rank of slot `a` in the basis's natural per-dimension ordering
    /// (by eigenvalue): `0, 1, -1, 2, -2, ..., -N/2` for periodic, `k` for
    /// Neumann. Projection to `n` modes keeps ranks `< n` in both dimensions.
    pub fn mode_rank(&self, a: usize) -> usize {
        match self.bc {
            BoundaryCondition::Neumann => a,
            BoundaryCondition::Periodic => {
                let k = self.mode_number(a);
                if k == 0 {
                    0
                } else if k > 0 {
                    (2 * k - 1) as usize
                } else if k == -(self.n_modes as i64) / 2 {
                    self.n_modes - 1
                } else {
                    (-2 * k) as usize
                }
            }
        }
    }

    /// True for the periodic Nyquist slots dropped in dealiased mode.
    pub(crate) fn mode_dropped(&self, a: usize) -> bool {
        self.dealias
            && self.bc == BoundaryCondition::Periodic
            && self.mode_number(a) == -(self.n_modes as i64) / 2
    }

    /// Pointwise value of the (real-valued part of the) 1-D basis function for
    /// slot `a` at coordinate `x`. For periodic slots this is the complex
    /// exponential; callers needing it get the pair (cos, sin).
    pub fn basis_value_neumann(&self, a: usize, x: f64) -> f64 {
        if a == 0 {
            1.0 / 2.0f64.sqrt()
        } else {
            (a as f64 * std::f64::consts::PI / 2.0 * (x + 1.0)).cos()
        }
    }

    /// Neumann collocation matrices `phi_k(x_i)` and `phi_k'(x_i)` (M x N).
    pub(crate) fn neumann_matrices(&self) -> Option<(&Array2<f64>, &Array2<f64>)> {
        match (&self.basis_mat, &self.basis_mat_deriv) {
            (Some(b), Some(bd)) => Some((b, bd)),
            _ => None,
        }
    }

    fn check_field(&self, field: &Field) -> Result<()> {
        if field.basis.as_ref() != self {
            return Err(Error::Shape("field basis does not match".to_string()));
        }
        Ok(())
    }

    fn check_coeffs(&self, coeffs: &Coeffs) -> Result<()> {
        if coeffs.basis.as_ref() != self {
            return Err(Error::Shape("coefficient basis does not match".to_string()));
        }
        Ok(())
    }

    /// Expand grid values in the eigenbasis. Errors on non-finite input.
    pub fn forward(self: &Arc<Self>, field: &Field) -> Result<Coeffs> {
        self.check_field(field)?;
        if !field.values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("forward: grid values not finite".to_string()));
        }
        Ok(self.forward_unchecked(&field.values))
    }

    pub(crate) fn forward_unchecked(self: &Arc<Self>, values: &Array2<f64>) -> Coeffs {
        let n = self.n_modes;
        let m = self.grid_points;
        let data = match self.bc {
            BoundaryCondition::Periodic => {
                let mut buf: Vec<Complex64> =
                    values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft2(&mut buf, m, self.fft_fwd.as_ref().unwrap());
                let scale = 2.0 * std::f64::consts::PI / (m as f64 * m as f64);
                let mut out = Array2::zeros((n, n));
                for a in 0..n {
                    for b in 0..n {
                        if self.mode_dropped(a) || self.mode_dropped(b) {
                            continue;
                        }
                        let ia = self.mode_number(a).rem_euclid(m as i64) as usize;
                        let ib = self.mode_number(b).rem_euclid(m as i64) as usize;
                        out[[a, b]] = buf[ia * m + ib] * scale;
                    }
                }
                out
            }
            BoundaryCondition::Neumann => {
                let b = self.basis_mat.as_ref().unwrap();
                let scale = (2.0 / m as f64) * (2.0 / m as f64);
                let tmp = b.t().dot(values); // N x M
                let re = tmp.dot(b); // N x N
                re.mapv(|v| Complex64::new(v * scale, 0.0))
            }
        };
        Coeffs { basis: Arc::clone(self), data }
    }

    /// Synthesize grid values from coefficients; exact inverse of `forward`
    /// on the retained modes.
    pub fn inverse(self: &Arc<Self>, coeffs: &Coeffs) -> Result<Field> {
        self.check_coeffs(coeffs)?;
        Ok(self.inverse_unchecked(&coeffs.data))
    }

    pub(crate) fn inverse_unchecked(self: &Arc<Self>, data: &Array2<Complex64>) -> Field {
        let n = self.n_modes;
        let m = self.grid_points;
        let values = match self.bc {
            BoundaryCondition::Periodic => {
                let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
                for a in 0..n {
                    for b in 0..n {
                        if self.mode_dropped(a) || self.mode_dropped(b) {
                            continue;
                        }
                        let ia = self.mode_number(a).rem_euclid(m as i64) as usize;
                        let ib = self.mode_number(b).rem_euclid(m as i64) as usize;
                        buf[ia * m + ib] = data[[a, b]];
                    }
                }
                fft2(&mut buf, m, self.fft_inv.as_ref().unwrap());
                let scale = 1.0 / (2.0 * std::f64::consts::PI);
                let mut out = Array2::zeros((m, m));
                for i in 0..m {
                    for j in 0..m {
                        let z = buf[i * m + j];
                        debug_assert!(
                            z.im.abs() <= 1e-9 * (1.0 + z.re.abs()),
                            "imaginary residue {} in inverse transform",
                            z.im
                        );
                        out[[i, j]] = z.re * scale;
                    }
                }
                out
            }
            BoundaryCondition::Neumann => {
                let b = self.basis_mat.as_ref().unwrap();
                let re = data.mapv(|z| {
                    debug_assert!(z.im.abs() <= 1e-9 * (1.0 + z.re.abs()));
                    z.re
                });
                b.dot(&re).dot(&b.t())
            }
        };
        Field { basis: Arc::clone(self), values }
    }

    /// Grid values of the gradient (d/dx, d/dy) of the expansion.
    pub fn gradient(self: &Arc<Self>, coeffs: &Coeffs) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_coeffs(coeffs)?;
        let n = self.n_modes;
        match self.bc {
            BoundaryCondition::Periodic => {
                // The interpolant derivative of the unpaired Nyquist mode
                // -N/2 vanishes at the grid points (it is a sampled cosine at
                // its zeros), so its wavenumber is taken as 0 here; keeping
                // -iN/2 would also make the grid realization complex.
                let nyq = -(n as i64) / 2;
                let wave = |a: usize| {
                    let k = self.mode_number(a);
                    if k == nyq {
                        0.0
                    } else {
                        k as f64
                    }
                };
                let mut dx = Array2::zeros((n, n));
                let mut dy = Array2::zeros((n, n));
                for a in 0..n {
                    for b in 0..n {
                        let z = coeffs.data[[a, b]];
                        dx[[a, b]] = Complex64::new(0.0, wave(a)) * z;
                        dy[[a, b]] = Complex64::new(0.0, wave(b)) * z;
                    }
                }
                let gx = self.inverse_unchecked(&dx).values;
                let gy = self.inverse_unchecked(&dy).values;
                Ok((gx, gy))
            }
            BoundaryCondition::Neumann => {
                let b = self.basis_mat.as_ref().unwrap();
                let bd = self.basis_mat_deriv.as_ref().unwrap();
                let re = coeffs.data.mapv(|z| z.re);
                let gx = bd.dot(&re).dot(&b.t());
                let gy = b.dot(&re).dot(&bd.t());
                Ok((gx, gy))
            }
        }
    }

    /// Solve `(I + tau (sigma (-A) + shift)) u = rhs` per mode.
    pub fn implicit_solve(
        self: &Arc<Self>,
        rhs: &Field,
        sigma: f64,
        shift: f64,
        tau: f64,
    ) -> Result<Field> {
        let coeffs = self.forward(rhs)?;
        let solved = coeffs.implicit_solve(sigma, shift, tau)?;
        self.inverse(&solved)
    }

    /// Projection onto the first `n` modes (per dimension, natural ordering).
    pub fn project(self: &Arc<Self>, field: &Field, n: usize) -> Result<Field> {
        let coeffs = self.forward(field)?;
        let projected = coeffs.project(n)?;
        self.inverse(&projected)
    }
}

/// Builds a basis identical to `proto` except for the mode count; used by
/// tests comparing resolutions.
pub fn with_modes(proto: &SpectralBasis, n_modes: usize) -> Result<Arc<SpectralBasis>> {
    SpectralBasis::new(proto.bc(), n_modes, proto.dealias())
}

fn fft2(buf: &mut [Complex64], m: usize, plan: &Arc<dyn Fft<f64>>) {
    // rows
    for row in buf.chunks_exact_mut(m) {
        plan.process(row);
    }
    // columns via transpose, rows, transpose back
    transpose_square(buf, m);
    for row in buf.chunks_exact_mut(m) {
        plan.process(row);
    }
    transpose_square(buf, m);
}

fn transpose_square(buf: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

/// A real scalar field on the tensor grid of its basis.
#[derive(Clone)]
pub struct Field {
    basis: Arc<SpectralBasis>,
    values: Array2<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("basis", &self.basis)
            .field("sup", &self.sup_norm())
            .finish()
    }
}

impl Field {
    pub fn from_values(basis: Arc<SpectralBasis>, values: Array2<f64>) -> Result<Self> {
        let m = basis.grid_points();
        if values.dim() != (m, m) {
            return Err(Error::Shape(format!(
                "expected {m}x{m} grid values, got {:?}",
                values.dim()
            )));
        }
        Ok(Field { basis, values })
    }

    pub fn zeros(basis: Arc<SpectralBasis>) -> Self {
        let m = basis.grid_points();
        Field { basis, values: Array2::zeros((m, m)) }
    }

    pub fn constant(basis: Arc<SpectralBasis>, value: f64) -> Self {
        let m = basis.grid_points();
        Field { basis, values: Array2::from_elem((m, m), value) }
    }

    /// Evaluate `f(x, y)` on the grid.
    pub fn from_fn(basis: Arc<SpectralBasis>, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = basis.grid_points();
        let g = basis.grid().to_vec();
        let values = Array2::from_shape_fn((m, m), |(i, j)| f(g[i], g[j]));
        Field { basis, values }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max of |grid values|.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }

    /// Grid quadrature of `f(u(x))` over the domain.
    pub fn quadrature(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w = self.basis.cell_area();
        self.values.iter().map(|&v| f(v)).sum::<f64>() * w
    }

    /// Squared L² norm by grid quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        self.quadrature(|v| v * v)
    }

    /// Spectral Dirichlet form `sum lambda |u_hat|^2`; NaN on non-finite input.
    pub fn grad_norm_sq(&self) -> f64 {
        if !self.is_finite() {
            return f64::NAN;
        }
        self.basis.forward_unchecked(&self.values).grad_norm_sq()
    }

    pub fn to_coeffs(&self) -> Result<Coeffs> {
        self.basis.forward(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { basis: Arc::clone(&self.basis), values: self.values.mapv(f) }
    }
}

/// Eigenbasis expansion coefficients (N x N), paired with their basis.
#[derive(Clone)]
pub struct Coeffs {
    basis: Arc<SpectralBasis>,
    data: Array2<Complex64>,
}

impl Coeffs {
    pub fn zeros(basis: Arc<SpectralBasis>) -> Self {
        let n = basis.n_modes();
        Coeffs { basis, data: Array2::zeros((n, n)) }
    }

    pub fn from_data(basis: Arc<SpectralBasis>, data: Array2<Complex64>) -> Result<Self> {
        let n = basis.n_modes();
        if data.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "expected {n}x{n} coefficients, got {:?}",
                data.dim()
            )));
        }
        Ok(Coeffs { basis, data })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }

    pub fn to_field(&self) -> Result<Field> {
        self.basis.inverse(self)
    }

    /// Parseval mass `sum |u_hat|^2` (= squared L² norm of the expansion).
    pub fn l2_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `sum lambda |u_hat|^2`.
    pub fn grad_norm_sq(&self) -> f64 {
        self.data
            .indexed_iter()
            .map(|((a, b), z)| self.basis.eigenvalues[[a, b]] * z.norm_sqr())
            .sum()
    }

    /// Coefficients of `A u` (A the Laplacian): per-mode multiply by `-lambda`.
    pub fn laplacian(&self) -> Coeffs {
        let mut out = self.clone();
        for ((a, b), z) in out.data.indexed_iter_mut() {
            *z *= Complex64::new(-self.basis.eigenvalues[[a, b]], 0.0);
        }
        out
    }

    /// Zero all coefficients whose per-dimension rank is >= n; idempotent.
    pub fn project(&self, n: usize) -> Result<Coeffs> {
        if n < 1 {
            return Err(Error::Config(format!("projection needs n >= 1, got {n}")));
        }
        let mut out = self.clone();
        for ((a, b), z) in out.data.indexed_iter_mut() {
            if self.basis.mode_rank(a) >= n || self.basis.mode_rank(b) >= n {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }

    /// Per-mode division by `1 + tau (sigma lambda + shift)`.
    pub fn implicit_solve(&self, sigma: f64, shift: f64, tau: f64) -> Result<Coeffs> {
        let mut out = self.clone();
        for ((a, b), z) in out.data.indexed_iter_mut() {
            let denom = 1.0 + tau * (sigma * self.basis.eigenvalues[[a, b]] + shift);
            if denom <= 1e-12 {
                return Err(Error::Numerical(format!(
                    "degenerate implicit solve at mode ({}, {}): denominator {denom:.3e}",
                    self.basis.mode_number(a),
                    self.basis.mode_number(b)
                )));
            }
            *z /= denom;
        }
        Ok(out)
    }

    /// Project onto the coefficient subspace of real grid fields (conjugate
    /// symmetry for the periodic basis, zero imaginary part for Neumann).
    ///
    /// Real dynamics preserve this subspace exactly in exact arithmetic, but
    /// unstable modes amplify roundoff asymmetry exponentially over long
    /// runs if the state coefficients are never re-symmetrized; steppers call
    /// this once per step.
    pub fn enforce_real(&mut self) {
        match self.basis.bc() {
            BoundaryCondition::Neumann => {
                for z in self.data.iter_mut() {
                    z.im = 0.0;
                }
            }
            BoundaryCondition::Periodic => {
                let n = self.basis.n_modes();
                for a in 0..n {
                    for b in 0..n {
                        let (pa, pb) = ((n - a) % n, (n - b) % n);
                        if (a, b) > (pa, pb) {
                            continue;
                        }
                        if (a, b) == (pa, pb) {
                            self.data[[a, b]].im = 0.0;
                        } else {
                            let avg =
                                0.5 * (self.data[[a, b]] + self.data[[pa, pb]].conj());
                            self.data[[a, b]] = avg;
                            self.data[[pa, pb]] = avg.conj();
                        }
                    }
                }
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Coeffs {
        Coeffs { basis: Arc::clone(&self.basis), data: self.data.mapv(|z| z * s) }
    }

    pub fn add_assign(&mut self, other: &Coeffs) -> Result<()> {
        if self.basis.as_ref() != other.basis.as_ref() {
            return Err(Error::Shape("coefficient basis mismatch".to_string()));
        }
        self.data += &other.data;
        Ok(())
    }
}

/// Sidecar metadata stored next to a binary field snapshot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub bc: BoundaryCondition,
    pub n: usize,
    pub m: usize,
    pub domain: String,
    pub time: f64,
    pub seed: u64,
}

/// Write grid values as row-major little-endian f64 plus a JSON sidecar.
/// `path_base` gets `.bin` and `.json` extensions appended.
pub fn write_snapshot(field: &Field, time: f64, seed: u64, path_base: &Path) -> Result<()> {
    let basis = field.basis();
    let meta = SnapshotMeta {
        bc: basis.bc(),
        n: basis.n_modes(),
        m: basis.grid_points(),
        domain: match basis.bc() {
            BoundaryCondition::Periodic => "(0,2pi)^2".to_string(),
            BoundaryCondition::Neumann => "(-1,1)^2".to_string(),
        },
        time,
        seed,
    };
    let mut bytes = Vec::with_capacity(field.values().len() * 8);
    for &v in field.values().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path_base.with_extension("bin"), &bytes)?;
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(path_base.with_extension("json"), json)?;
    Ok(())
}

/// Read a snapshot written by [`write_snapshot`], rebuilding its basis.
pub fn read_snapshot(path_base: &Path) -> Result<(Field, SnapshotMeta)> {
    let meta: SnapshotMeta =
        serde_json::from_str(&std::fs::read_to_string(path_base.with_extension("json"))?)?;
    let bytes = std::fs::read(path_base.with_extension("bin"))?;
    let m = meta.m;
    if bytes.len() != m * m * 8 {
        return Err(Error::Shape(format!(
            "snapshot payload is {} bytes, expected {}",
            bytes.len(),
            m * m * 8
        )));
    }
    let dealias = meta.m != meta.n;
    let basis = SpectralBasis::new(meta.bc, meta.n, dealias)?;
    let mut values = Array2::zeros((m, m));
    for (idx, chunk) in bytes.chunks_exact(8).enumerate() {
        values[[idx / m, idx % m]] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((Field::from_values(basis, values)?, meta))
}

/// Unit-normalized basis function as a grid field (for tests and kernels).
pub fn basis_function(basis: &Arc<SpectralBasis>, a: usize, b: usize) -> Result<Field> {
    let n = basis.n_modes();
    if a >= n || b >= n {
        return Err(Error::Shape(format!("mode slot ({a},{b}) out of range for N={n}")));
    }
    let mut coeffs = Coeffs::zeros(Arc::clone(basis));
    coeffs.data_mut()[[a, b]] = Complex64::new(1.0, 0.0);
    match basis.bc() {
        BoundaryCondition::Periodic => {
            // make the grid function real by adding the conjugate mode, unless
            // the slot is self-conjugate
            let n = basis.n_modes();
            let ac = (n - a) % n;
            let bc_ = (n - b) % n;
            if (ac, bc_) != (a, b) {
                coeffs.data_mut()[[a, b]] = Complex64::new(0.5, 0.0);
                coeffs.data_mut()[[ac, bc_]] = Complex64::new(0.5, 0.0);
            }
            basis.inverse(&coeffs)
        }
        BoundaryCondition::Neumann => basis.inverse(&coeffs),
    }
}
