//! Q-Wiener increment sampling in the Laplacian eigenbasis and the diffusion
//! operators applied to it.
//!
//! The covariance weights are `q_{k,l} = 1/(1 + k^2 + l^2)` over the retained
//! modes (signed integers for the periodic basis, cosine indices for Neumann),
//! so an increment over a step of size `tau` has independent mode coefficients
//! with mean zero and variance `q_{k,l} tau`. Periodic increments are sampled
//! with conjugate symmetry so the grid realization is real (truncated
//! Karhunen-Loeve synthesis).
//!
//! Increments are a pure function of `(seed, step index)`: every step seeds a
//! fresh counter-derived ChaCha8 stream, so trajectories are reproducible and
//! arbitrary step windows can be resampled independently. Coarse increments
//! are exact partial sums of fine ones, which is what couples refinement
//! levels to one common Brownian path for strong-error estimation.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{BoundaryCondition, Coeffs, Field, SpectralBasis};

/// splitmix64 finalizer; fixed constants keep seeds portable across platforms.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stable derivation of a child seed from a base seed and an index
/// (realization number or step number).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// Pointwise diffusion function b and its derivative.
#[derive(Clone)]
pub enum Diffusion {
    /// b = 1 (additive noise).
    One,
    /// b(x) = sin^2(pi x); vanishes at the pure phases x = ±1.
    SinSqPi,
    /// User-supplied b and b'; construction checks b(±1) = 0.
    Custom {
        b: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        db: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::One => write!(f, "One"),
            Diffusion::SinSqPi => write!(f, "SinSqPi"),
            Diffusion::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Diffusion {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Diffusion::One => 1.0,
            Diffusion::SinSqPi => {
                let s = (std::f64::consts::PI * x).sin();
                s * s
            }
            Diffusion::Custom { b, .. } => b(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Diffusion::One => 0.0,
            Diffusion::SinSqPi => std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).sin(),
            Diffusion::Custom { db, .. } => db(x),
        }
    }
}

/// Which of the two noise structures drives the equation.
#[derive(Clone, Debug)]
pub enum NoiseCase {
    /// Case 1: B(u) = identity on the Q-Wiener increment.
    Additive,
    /// Case 2: Nemytskii multiplication by b(u(x)), degenerate at u = ±1.
    Nemytskii(Diffusion),
}

/// Noise structure plus intensity.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub case: NoiseCase,
    pub epsilon: f64,
}

impl NoiseSpec {
    pub fn new(case: NoiseCase, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        if let NoiseCase::Nemytskii(b) = &case {
            for x in [1.0, -1.0] {
                if b.eval(x).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "Nemytskii diffusion must vanish at ±1, got b({x}) = {}",
                        b.eval(x)
                    )));
                }
            }
        }
        Ok(Self { case, epsilon })
    }

    pub fn additive(epsilon: f64) -> Result<Self> {
        Self::new(NoiseCase::Additive, epsilon)
    }

    pub fn nemytskii_sin2(epsilon: f64) -> Result<Self> {
        Self::new(NoiseCase::Nemytskii(Diffusion::SinSqPi), epsilon)
    }

    pub fn diffusion(&self) -> Diffusion {
        match &self.case {
            NoiseCase::Additive => Diffusion::One,
            NoiseCase::Nemytskii(b) => b.clone(),
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.case, NoiseCase::Additive)
    }
}

/// `q_{k,l} = 1/(1 + k^2 + l^2)` over the retained modes (zero on slots the
/// basis drops).
pub fn mode_weights(basis: &SpectralBasis) -> Array2<f64> {
    let n = basis.n_modes();
    Array2::from_shape_fn((n, n), |(a, b)| {
        if basis.mode_dropped(a) || basis.mode_dropped(b) {
            return 0.0;
        }
        let ka = basis.mode_number(a);
        let kb = basis.mode_number(b);
        1.0 / (1.0 + (ka * ka + kb * kb) as f64)
    })
}

/// Deterministic spectral Gaussian increments of the Q-Wiener process at one
/// fixed resolution `fine_tau`, addressable by step index.
pub struct NoisePath {
    basis: Arc<SpectralBasis>,
    seed: u64,
    fine_tau: f64,
    n_steps: usize,
    /// per-mode sqrt(q * fine_tau)
    scale: Array2<f64>,
}

impl NoisePath {
    pub fn new(basis: Arc<SpectralBasis>, seed: u64, fine_tau: f64, n_steps: usize) -> Result<Self> {
        if !(fine_tau > 0.0) || !fine_tau.is_finite() {
            return Err(Error::Config(format!("fine_tau must be finite and > 0, got {fine_tau}")));
        }
        let weights = mode_weights(&basis);
        let scale = weights.mapv(|q| (q * fine_tau).sqrt());
        Ok(Self { basis, seed, fine_tau, n_steps, scale })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fine_tau(&self) -> f64 {
        self.fine_tau
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn masked(&self, a: usize, b: usize) -> bool {
        self.scale[[a, b]] == 0.0
    }

    /// Spectral increment over `[j fine_tau, (j+1) fine_tau)`; bit-identical
    /// for identical `(seed, j)`.
    pub fn sample_increment(&self, j: usize) -> Result<Coeffs> {
        if j >= self.n_steps {
            return Err(Error::Config(format!(
                "step index {j} out of range (path has {} steps)",
                self.n_steps
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, j as u64));
        let n = self.basis.n_modes();
        let mut data = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        match self.basis.bc() {
            BoundaryCondition::Neumann => {
                // real coefficients, fixed row-major draw order
                for a in 0..n {
                    for b in 0..n {
                        let z: f64 = rng.sample(StandardNormal);
                        data[[a, b]] = Complex64::new(z * self.scale[[a, b]], 0.0);
                    }
                }
            }
            BoundaryCondition::Periodic => {
                // Conjugate symmetry: slot (a,b) pairs with ((n-a)%n, (n-b)%n).
                // Self-paired slots get a real Gaussian; each canonical
                // (lexicographically smaller) slot of a pair gets a complex
                // Gaussian with half the variance per component, the partner
                // its conjugate. Draw order is row-major over canonical slots
                // so sampling is reproducible.
                let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                for a in 0..n {
                    for b in 0..n {
                        if self.masked(a, b) {
                            continue;
                        }
                        let pa = (n - a) % n;
                        let pb = (n - b) % n;
                        if (pa, pb) == (a, b) {
                            let z: f64 = rng.sample(StandardNormal);
                            data[[a, b]] = Complex64::new(z * self.scale[[a, b]], 0.0);
                        } else if (a, b) < (pa, pb) {
                            let zr: f64 = rng.sample(StandardNormal);
                            let zi: f64 = rng.sample(StandardNormal);
                            let s = self.scale[[a, b]] * inv_sqrt2;
                            let z = Complex64::new(zr * s, zi * s);
                            data[[a, b]] = z;
                            data[[pa, pb]] = z.conj();
                        }
                    }
                }
            }
        }
        Coeffs::from_data(Arc::clone(&self.basis), data)
    }

    /// Sum of the fine increments making up coarse step `j_coarse` of size
    /// `coarse_tau`; `coarse_tau` must be an integer multiple of `fine_tau`.
    pub fn aggregate_increments(&self, coarse_tau: f64, j_coarse: usize) -> Result<Coeffs> {
        let r = self.ratio(coarse_tau)?;
        let mut acc = Coeffs::zeros(Arc::clone(&self.basis));
        for j in (r * j_coarse)..(r * (j_coarse + 1)) {
            acc.add_assign(&self.sample_increment(j)?)?;
        }
        Ok(acc)
    }

    pub fn ratio(&self, coarse_tau: f64) -> Result<usize> {
        let raw = coarse_tau / self.fine_tau;
        let r = raw.round();
        if r < 1.0 || (raw - r).abs() > 1e-9 * raw.abs() {
            return Err(Error::Config(format!(
                "coarse_tau {coarse_tau} is not an integer multiple of fine_tau {}",
                self.fine_tau
            )));
        }
        Ok(r as usize)
    }

    /// Precompute all increments (used by the strong-error harness to avoid
    /// resampling the fine path once per refinement level).
    pub fn materialize(&self) -> Result<MaterializedPath> {
        let mut increments = Vec::with_capacity(self.n_steps);
        for j in 0..self.n_steps {
            increments.push(self.sample_increment(j)?);
        }
        Ok(MaterializedPath {
            basis: Arc::clone(&self.basis),
            fine_tau: self.fine_tau,
            increments,
        })
    }
}

/// In-memory copy of a noise path; aggregation sums the same values in the
/// same order as [`NoisePath::aggregate_increments`], so results are
/// bit-identical.
pub struct MaterializedPath {
    basis: Arc<SpectralBasis>,
    fine_tau: f64,
    increments: Vec<Coeffs>,
}

impl MaterializedPath {
    pub fn fine_tau(&self) -> f64 {
        self.fine_tau
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn fine(&self, j: usize) -> Result<&Coeffs> {
        self.increments
            .get(j)
            .ok_or_else(|| Error::Config(format!("step index {j} out of range")))
    }

    pub fn aggregate(&self, ratio: usize, j_coarse: usize) -> Result<Coeffs> {
        let mut acc = Coeffs::zeros(Arc::clone(&self.basis));
        for j in (ratio * j_coarse)..(ratio * (j_coarse + 1)) {
            acc.add_assign(self.fine(j)?)?;
        }
        Ok(acc)
    }
}

/// A source of increments at the solver's step size; implementations couple a
/// trajectory to a fine path (possibly by aggregation).
pub trait IncrementSource: Sync {
    fn increment(&self, j: usize) -> Result<Coeffs>;
}

impl IncrementSource for NoisePath {
    fn increment(&self, j: usize) -> Result<Coeffs> {
        self.sample_increment(j)
    }
}

/// Aggregating view of a path: step `j` returns the sum of `ratio` fine
/// increments.
pub struct CoarseView<'a> {
    path: &'a NoisePath,
    ratio: usize,
}

impl<'a> CoarseView<'a> {
    pub fn new(path: &'a NoisePath, coarse_tau: f64) -> Result<Self> {
        let ratio = path.ratio(coarse_tau)?;
        Ok(Self { path, ratio })
    }
}

impl IncrementSource for CoarseView<'_> {
    fn increment(&self, j: usize) -> Result<Coeffs> {
        self.path.aggregate_increments(self.ratio as f64 * self.path.fine_tau(), j)
    }
}

/// Fine view of a materialized path.
pub struct MaterializedFine<'a>(pub &'a MaterializedPath);

impl IncrementSource for MaterializedFine<'_> {
    fn increment(&self, j: usize) -> Result<Coeffs> {
        self.0.fine(j).cloned()
    }
}

/// Aggregating view of a materialized path.
pub struct MaterializedCoarse<'a> {
    pub path: &'a MaterializedPath,
    pub ratio: usize,
}

impl IncrementSource for MaterializedCoarse<'_> {
    fn increment(&self, j: usize) -> Result<Coeffs> {
        self.path.aggregate(self.ratio, j)
    }
}

/// Spectral coefficients of `epsilon P^N B(u) dW` for the increment `dw`.
///
/// Additive case: the increment already lives in the retained modes, so this
/// is just the epsilon scaling. Nemytskii case: synthesize the grid
/// realization, multiply pointwise by `epsilon b(u(x))` and transform back
/// (the forward transform is the projection).
pub fn diffusion_coeffs(u: &Field, dw: &Coeffs, spec: &NoiseSpec) -> Result<Coeffs> {
    if u.basis().as_ref() != dw.basis().as_ref() {
        return Err(Error::Shape("field and increment bases differ".to_string()));
    }
    if spec.epsilon == 0.0 {
        return Ok(Coeffs::zeros(Arc::clone(u.basis())));
    }
    match &spec.case {
        NoiseCase::Additive => Ok(dw.scaled(spec.epsilon)),
        NoiseCase::Nemytskii(b) => {
            let w = dw.to_field()?;
            let mut prod = w.values().clone();
            for (p, uv) in prod.iter_mut().zip(u.values().iter()) {
                *p *= spec.epsilon * b.eval(*uv);
            }
            let f = Field::from_values(Arc::clone(u.basis()), prod)?;
            u.basis().forward(&f)
        }
    }
}

/// Grid realization of `epsilon P^N B(u) dW` as a field.
pub fn apply_diffusion(u: &Field, dw: &Coeffs, spec: &NoiseSpec) -> Result<Field> {
    diffusion_coeffs(u, dw, spec)?.to_field()
}
