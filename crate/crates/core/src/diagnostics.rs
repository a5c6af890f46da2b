//! Scalar observables of a trajectory: the modified energy, sup norm,
//! bound-tail norms, violation-set measure, the Monte Carlo bound-violation
//! probability and the averaged energy-evolution-law residual.
//!
//! The modified energy of a field u is
//!
//! ```text
//! H(u) = sigma/2 ||grad u||^2 + integral F_d(u(x)) dx,
//! ```
//!
//! with the gradient part from the spectral Dirichlet form and the potential
//! part by the grid quadrature consistent with the transforms.
//!
//! The averaged evolution law states that along solutions
//!
//! ```text
//! E[H(u(t))] = E[H(u(0))] - int_0^t E ||sigma A u - F_d'(u)||^2 ds
//!            + eps^2/2 int_0^t sigma E ||grad B(u)||_L2^2
//!                      + E sum_j <F_d''(u) B(u) e_j, B(u) e_j> ds ,
//! ```
//!
//! whose Monte Carlo residual (left-endpoint time quadrature, trace sums over
//! the retained modes) is the check implemented here. The Hilbert-Schmidt
//! trace sums reduce to grid quadratures against precomputed mode kernels
//!
//! ```text
//! K0(x) = sum q_kl |e_kl(x)|^2,   K1(x) = sum q_kl e_kl grad e_kl,
//! K2(x) = sum q_kl |grad e_kl(x)|^2,
//! ```
//!
//! because B(u) e_kl = sqrt(q_kl) b(u(x)) e_kl(x) acts pointwise.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::noise::{mode_weights, NoiseSpec};
use crate::potential::{self, PotentialParams};
use crate::spectral::{BoundaryCondition, Coeffs, Field, SpectralBasis};

/// One per-step diagnostics record; streamed as CSV by the harness with the
/// column order `time,energy,sup_norm,tail_upper,tail_lower,violation_measure,blown_up`.
#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub energy: f64,
    pub sup_norm: f64,
    pub tail_upper: f64,
    pub tail_lower: f64,
    pub violation_measure: f64,
    pub blown_up: bool,
}

/// Modified energy `sigma/2 ||grad u||^2 + int F_d(u)`.
///
/// With `delta = 0` the potential is only defined on [-1, 1]; fields leaving
/// the interval are rejected.
pub fn energy(u: &Field, p: &PotentialParams, sigma: f64) -> Result<f64> {
    if p.delta == 0.0 && u.sup_norm() > 1.0 {
        return Err(Error::Domain(
            "energy with delta = 0 requires grid values in [-1, 1]".to_string(),
        ));
    }
    Ok(energy_total(u, &u.to_coeffs()?, p, sigma))
}

/// Non-failing energy for hot loops; NaN when undefined.
pub(crate) fn energy_total(u: &Field, coeffs: &Coeffs, p: &PotentialParams, sigma: f64) -> f64 {
    if !u.is_finite() {
        return f64::NAN;
    }
    let grad = coeffs.grad_norm_sq();
    let pot = u.quadrature(|v| potential::flog_delta_total(v, p.delta, p.c));
    0.5 * sigma * grad + pot
}

/// L² norms of the negative parts `(1-u)^-` and `(u+1)^-` by grid quadrature.
pub fn tail_norms(u: &Field) -> (f64, f64) {
    let upper = u.quadrature(|v| {
        let e = (v - 1.0).max(0.0);
        e * e
    });
    let lower = u.quadrature(|v| {
        let e = (-1.0 - v).max(0.0);
        e * e
    });
    (upper.sqrt(), lower.sqrt())
}

/// Grid-cell measure of `{ |u| > 1 + delta0 }`.
pub fn violation_measure(u: &Field, delta0: f64) -> f64 {
    let w = u.basis().cell_area();
    let count = u.values().iter().filter(|v| v.abs() > 1.0 + delta0).count();
    count as f64 * w
}

/// All per-step observables in one pass.
pub fn observe(
    u: &Field,
    coeffs: &Coeffs,
    p: &PotentialParams,
    sigma: f64,
    time: f64,
    delta0: f64,
    blown_up: bool,
) -> DiagnosticsRow {
    let (tail_upper, tail_lower) = tail_norms(u);
    DiagnosticsRow {
        time,
        energy: energy_total(u, coeffs, p, sigma),
        sup_norm: u.sup_norm(),
        tail_upper,
        tail_lower,
        violation_measure: violation_measure(u, delta0),
        blown_up,
    }
}

/// Binomial estimate with a Wilson 95% interval.
#[derive(Clone, Copy, Debug)]
pub struct ViolationEstimate {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_violating: usize,
    pub n_total: usize,
}

/// Fraction of realizations whose max sup norm exceeds `1 + delta0` (blow-ups
/// count as violations).
///
/// The inputs are per-realization (max sup norm, blown_up) pairs; the harness
/// extracts them from trajectory records.
pub fn bound_violation_probability(
    outcomes: &[(f64, bool)],
    delta0: f64,
) -> Result<ViolationEstimate> {
    if outcomes.len() < 2 {
        return Err(Error::Config(format!(
            "bound_violation_probability needs >= 2 realizations, got {}",
            outcomes.len()
        )));
    }
    let n = outcomes.len();
    let k = outcomes
        .iter()
        .filter(|(max_sup, blown)| *blown || *max_sup > 1.0 + delta0)
        .count();
    let p_hat = k as f64 / n as f64;
    let z = 1.959963984540054f64;
    let nf = n as f64;
    let denom = 1.0 + z * z / nf;
    let center = (p_hat + z * z / (2.0 * nf)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    Ok(ViolationEstimate {
        p_hat,
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
        n_violating: k,
        n_total: n,
    })
}

/// Precomputed mode kernels for the energy-law trace terms.
pub struct EnergyLawKernels {
    k0: Array2<f64>,
    k1x: Array2<f64>,
    k1y: Array2<f64>,
    k2: Array2<f64>,
}

impl EnergyLawKernels {
    pub fn new(basis: &SpectralBasis) -> Self {
        let q = mode_weights(basis);
        let m = basis.grid_points();
        match basis.bc() {
            BoundaryCondition::Periodic => {
                // |e_kl|^2 = 1/(2pi)^2 everywhere and e conj(grad e) is purely
                // imaginary, so K0 and K2 are constants and K1 vanishes.
                let area = basis.domain_area();
                let k0c: f64 = q.sum() / area;
                let k2c: f64 = q
                    .indexed_iter()
                    .map(|((a, b), &w)| w * basis.eigenvalues()[[a, b]])
                    .sum::<f64>()
                    / area;
                EnergyLawKernels {
                    k0: Array2::from_elem((m, m), k0c),
                    k1x: Array2::zeros((m, m)),
                    k1y: Array2::zeros((m, m)),
                    k2: Array2::from_elem((m, m), k2c),
                }
            }
            BoundaryCondition::Neumann => {
                let (b, bd) = basis.neumann_matrices().expect("Neumann matrices");
                let b2 = b * b;
                let bd2 = bd * bd;
                let bbd = b * bd;
                let k0 = b2.dot(&q).dot(&b2.t());
                let k2 = bd2.dot(&q).dot(&b2.t()) + b2.dot(&q).dot(&bd2.t());
                let k1x = bbd.dot(&q).dot(&b2.t());
                let k1y = b2.dot(&q).dot(&bbd.t());
                EnergyLawKernels { k0, k1x, k1y, k2 }
            }
        }
    }
}

/// The per-step integrands of the averaged energy evolution law.
#[derive(Clone, Copy, Debug)]
pub struct EnergyLawSample {
    /// H(u_j)
    pub h: f64,
    /// ||sigma A u - F_d'(u)||^2
    pub drift_sq: f64,
    /// sigma * sum_j q_j ||grad(b(u) e_j)||^2
    pub noise_grad: f64,
    /// sum_j q_j <F_d''(u) b(u) e_j, b(u) e_j>
    pub noise_hess: f64,
}

/// Evaluate the energy-law integrands for one state.
pub fn energy_law_terms(
    u: &Field,
    coeffs: &Coeffs,
    p: &PotentialParams,
    sigma: f64,
    noise: &NoiseSpec,
    kernels: &EnergyLawKernels,
) -> Result<EnergyLawSample> {
    let basis = u.basis();
    let h = energy_total(u, coeffs, p, sigma);

    // || sigma A u - F_d'(u) ||^2
    let au = coeffs.laplacian().to_field()?;
    let w = basis.cell_area();
    let mut drift_sq = 0.0;
    for (&a, &v) in au.values().iter().zip(u.values().iter()) {
        let r = sigma * a - potential::flog_delta_prime_raw(v, p.delta, p.c);
        drift_sq += r * r;
    }
    drift_sq *= w;

    let (gx, gy) = basis.gradient(coeffs)?;
    let b = noise.diffusion();

    let mut noise_grad = 0.0;
    let mut noise_hess = 0.0;
    for (idx, &v) in u.values().indexed_iter() {
        let bv = b.eval(v);
        let bp = b.deriv(v);
        let (gxv, gyv) = (gx[idx], gy[idx]);
        noise_grad += bp * bp * (gxv * gxv + gyv * gyv) * kernels.k0[idx]
            + 2.0 * bv * bp * (gxv * kernels.k1x[idx] + gyv * kernels.k1y[idx])
            + bv * bv * kernels.k2[idx];
        noise_hess += potential::flog_delta_second_raw(v, p.delta, p.c) * bv * bv * kernels.k0[idx];
    }
    noise_grad *= w * sigma;
    noise_hess *= w;

    Ok(EnergyLawSample { h, drift_sq, noise_grad, noise_hess })
}

/// One time point of the Monte Carlo energy-law residual.
#[derive(Clone, Copy, Debug)]
pub struct ResidualRow {
    pub time: f64,
    pub residual: f64,
    pub stderr: f64,
}

/// Monte Carlo residual of the averaged energy evolution law.
///
/// Each realization contributes, at step j,
///
/// ```text
/// Y_j = H(u_j) - H(u_0) + sum_{i<j} tau [ drift_sq_i
///        - eps^2/2 (noise_grad_i + noise_hess_i) ]
/// ```
///
/// (left-endpoint quadrature); the residual is the ensemble mean of Y_j and
/// the standard error its sample deviation over sqrt(M).
pub fn energy_law_residual(
    samples: &[&[EnergyLawSample]],
    times: &[f64],
    epsilon: f64,
    tau: f64,
) -> Result<Vec<ResidualRow>> {
    if samples.is_empty() {
        return Err(Error::Config("energy_law_residual needs at least one trajectory".to_string()));
    }
    let len = times.len();
    if len == 0 || samples.iter().any(|s| s.len() != len) {
        return Err(Error::Shape(
            "energy-law samples and times must share one common length".to_string(),
        ));
    }
    let m = samples.len();
    let half_eps_sq = 0.5 * epsilon * epsilon;

    // per-realization left-endpoint prefix sums, in fixed realization order
    let mut prefix = vec![0.0f64; m];
    let mut y = vec![0.0f64; m];
    let mut rows = Vec::with_capacity(len);
    for j in 0..len {
        for (i, traj) in samples.iter().enumerate() {
            y[i] = traj[j].h - traj[0].h + prefix[i];
            prefix[i] += tau
                * (traj[j].drift_sq - half_eps_sq * (traj[j].noise_grad + traj[j].noise_hess));
        }
        let mean = y.iter().sum::<f64>() / m as f64;
        let stderr = if m > 1 {
            let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0);
            (var / m as f64).sqrt()
        } else {
            0.0
        };
        rows.push(ResidualRow { time: times[j], residual: mean, stderr });
    }
    Ok(rows)
}
