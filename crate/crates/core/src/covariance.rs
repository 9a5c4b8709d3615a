//! Covariance machinery: Matérn/Whittle kernels, the multivariate t density
//! and the spectral-in-time space-time covariance.
//!
//! The space-time model is specified frequency by frequency: at temporal
//! frequency `ω` the cross-spectrum between sites `i` and `j` is
//! `S(ω) · C(d_ij γ(ω))`, with `C` a unit Matérn correlation whose range is a
//! fraction of the network's maximum distance. The phase is fixed at zero,
//! so every cross-spectral matrix is real and symmetric.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::gauge::GaugeNetwork;
use crate::linalg;
use crate::special;

/// Degrees of freedom of a t field; `Infinite` is the Gaussian limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dof {
    Finite(u32),
    Infinite,
}

impl Dof {
    pub fn is_finite(&self) -> bool {
        matches!(self, Dof::Finite(_))
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Dof::Finite(n) => f64::from(n),
            Dof::Infinite => f64::INFINITY,
        }
    }
}

impl core::fmt::Display for Dof {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Dof::Finite(n) => write!(f, "{n}"),
            Dof::Infinite => f.write_str("inf"),
        }
    }
}

/// Matérn parameters. `range` is a fraction of the network's maximum
/// inter-site distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternSpec {
    pub smoothness: f64,
    pub range: f64,
    pub scale: f64,
}

impl MaternSpec {
    /// Whittle case: smoothness 1, unit scale.
    pub fn whittle(range: f64) -> Self {
        Self {
            smoothness: 1.0,
            range,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("smoothness", self.smoothness),
            ("range", self.range),
            ("scale", self.scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn absolute_range(&self, d_max: f64) -> f64 {
        self.range * d_max
    }

    /// Unit correlation at distance `h`.
    pub fn correlation(&self, h: f64, d_max: f64) -> f64 {
        matern_corr(h, self.smoothness, self.absolute_range(d_max))
    }
}

impl Default for MaternSpec {
    fn default() -> Self {
        Self::whittle(0.5)
    }
}

/// Whittle covariance `2 φ α₀² M₁(h/α₀)` with absolute range `α₀`.
pub fn whittle_cov(h: f64, range: f64, scale: f64) -> f64 {
    2.0 * scale * range * range * special::whittle_m1(h / range)
}

/// Matérn correlation normalised to one at the origin.
pub fn matern_corr(h: f64, smoothness: f64, range: f64) -> f64 {
    special::matern_correlation(h, smoothness, range)
}

/// Multivariate t law with finite `nu`, location `mean` and row-major
/// positive-definite `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct TDistSpec {
    pub nu: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Log density of the multivariate t distribution.
pub fn mvt_logdensity(y: &[f64], spec: &TDistSpec) -> Result<f64> {
    let p = y.len();
    if spec.mean.len() != p || spec.scale.len() != p * p {
        return Err(Error::DimensionMismatch {
            expected: (p, p),
            got: (spec.mean.len(), spec.scale.len()),
        });
    }
    if !(spec.nu > 0.0 && spec.nu.is_finite()) {
        return Err(invalid("nu", "multivariate t density needs finite positive nu"));
    }
    let l = linalg::cholesky(&spec.scale, p)?;
    let mut z: Vec<f64> = y.iter().zip(&spec.mean).map(|(a, b)| a - b).collect();
    linalg::forward_substitute(&l, p, &mut z);
    let q: f64 = z.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..p).map(|i| 2.0 * libm::log(l[i * p + i])).sum();
    let nu = spec.nu;
    let pf = p as f64;
    Ok(special::ln_gamma(0.5 * (nu + pf))
        - special::ln_gamma(0.5 * nu)
        - 0.5 * pf * libm::log(nu * PI)
        - 0.5 * log_det
        - 0.5 * (nu + pf) * libm::log1p(q / nu))
}

/// Parameters of the spectral-in-time covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeCovSpec {
    pub matern: MaternSpec,
    /// Long-memory exponent of the temporal spectrum.
    pub beta: f64,
    /// `a_0..a_L` in `log γ(ω) = Σ a_k cos(kω)`.
    pub gamma_coefs: Vec<f64>,
    /// `c_0..c_L` in `log S(ω) = -β log|sin(ω/2)| + Σ c_k cos(kω)`.
    pub spectrum_coefs: Vec<f64>,
    /// Unit direction of the (zero) phase term.
    pub direction: [f64; 2],
}

impl Default for SpaceTimeCovSpec {
    fn default() -> Self {
        Self {
            matern: MaternSpec::default(),
            beta: 0.0,
            gamma_coefs: vec![0.0; 3],
            spectrum_coefs: vec![0.0; 3],
            direction: [1.0, 0.0],
        }
    }
}

fn cosine_series(coefs: &[f64], omega: f64) -> f64 {
    coefs
        .iter()
        .enumerate()
        .map(|(k, a)| a * libm::cos(k as f64 * omega))
        .sum()
}

impl SpaceTimeCovSpec {
    pub fn validate(&self) -> Result<()> {
        self.matern.validate()?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if self.gamma_coefs.len() != self.spectrum_coefs.len() {
            return Err(invalid(
                "coefficients",
                "a and c must both have L + 1 entries",
            ));
        }
        let norm = libm::hypot(self.direction[0], self.direction[1]);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(invalid("direction", format!("must be a unit vector, |u| = {norm}")));
        }
        if self
            .gamma_coefs
            .iter()
            .chain(&self.spectrum_coefs)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("coefficients", "must be finite"));
        }
        Ok(())
    }

    /// Harmonic truncation `L`.
    pub fn harmonics(&self) -> usize {
        self.gamma_coefs.len().saturating_sub(1)
    }

    pub fn with_range_and_beta(&self, range: f64, beta: f64) -> Self {
        let mut out = self.clone();
        out.matern.range = range;
        out.beta = beta;
        out
    }

    /// True when `γ(ω)` does not depend on `ω`.
    pub fn coherence_is_flat(&self) -> bool {
        self.gamma_coefs.iter().skip(1).all(|&a| a == 0.0)
    }
}

/// `γ(ω) = exp(Σ a_k cos kω)`.
pub fn gamma_fn(omega: f64, spec: &SpaceTimeCovSpec) -> f64 {
    libm::exp(cosine_series(&spec.gamma_coefs, omega))
}

/// `S(ω) = |sin(ω/2)|^{-β} exp(Σ c_k cos kω)`.
pub fn spectral_density(omega: f64, spec: &SpaceTimeCovSpec) -> Result<f64> {
    let s = libm::sin(0.5 * omega).abs();
    let smooth = libm::exp(cosine_series(&spec.spectrum_coefs, omega));
    if spec.beta == 0.0 {
        return Ok(smooth);
    }
    if s == 0.0 {
        return Err(Error::SingularFrequency);
    }
    Ok(libm::exp(-spec.beta * libm::log(s)) * smooth)
}

/// `p × p` cross-spectral matrix at `omega`, row-major.
pub fn cross_spectral_matrix(
    omega: f64,
    network: &GaugeNetwork,
    spec: &SpaceTimeCovSpec,
) -> Result<Vec<f64>> {
    let s = spectral_density(omega, spec)?;
    let mut m = coherence_matrix(gamma_fn(omega, spec), network, &spec.matern);
    m.iter_mut().for_each(|v| *v *= s);
    Ok(m)
}

/// Unit-diagonal spatial correlation at frequency scale `gamma`.
pub(crate) fn coherence_matrix(gamma: f64, network: &GaugeNetwork, matern: &MaternSpec) -> Vec<f64> {
    let p = network.len();
    let range = matern.absolute_range(network.d_max());
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = 1.0;
        for j in i + 1..p {
            let c = matern_corr(network.distance(i, j) * gamma, matern.smoothness, range);
            m[i * p + j] = c;
            m[j * p + i] = c;
        }
    }
    m
}

/// Angular frequency of Fourier index `k` on an `n`-point circle, in
/// `(-π, π]`.
pub fn fourier_frequency(k: usize, n: usize) -> f64 {
    let kk = if k > n / 2 { k as f64 - n as f64 } else { k as f64 };
    2.0 * PI * kk / n as f64
}

/// Spectrum on the Fourier grid of an `n`-point circle, for indices
/// `0..=n/2`, scaled so that the weights over the full circle sum to one
/// (unit marginal variance). With `β > 0` the zero frequency is capped at the
/// value of the first non-zero frequency.
#[derive(Debug, Clone)]
pub struct DiscreteSpectrum {
    pub n: usize,
    pub weights: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl DiscreteSpectrum {
    pub fn new(spec: &SpaceTimeCovSpec, n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(invalid("n", format!("circle length must be even and >= 2, got {n}")));
        }
        let half = n / 2;
        let mut weights = Vec::with_capacity(half + 1);
        let mut gammas = Vec::with_capacity(half + 1);
        for k in 0..=half {
            let omega = fourier_frequency(k, n);
            let s = if k == 0 && spec.beta > 0.0 {
                spectral_density(fourier_frequency(1, n), spec)?
            } else {
                spectral_density(omega, spec)?
            };
            weights.push(s);
            gammas.push(gamma_fn(omega, spec));
        }
        let total: f64 = (0..=half)
            .map(|k| if k == 0 || k == half { weights[k] } else { 2.0 * weights[k] })
            .sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { n, weights, gammas })
    }

    /// Multiplicity of index `k` on the full circle.
    pub fn multiplicity(&self, k: usize) -> f64 {
        if k == 0 || k == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }
}

/// Normalised space-time covariance `K(x, t)` of the process circularised
/// on `n` points, at spatial distance `distance` and integer time lag `lag`.
/// `K(0, 0) = 1`.
pub fn spacetime_cov(
    distance: f64,
    lag: i64,
    spec: &SpaceTimeCovSpec,
    d_max: f64,
    n: usize,
) -> Result<f64> {
    let ds = DiscreteSpectrum::new(spec, n)?;
    Ok(spacetime_cov_discrete(&ds, distance, lag, &spec.matern, d_max))
}

pub(crate) fn spacetime_cov_discrete(
    ds: &DiscreteSpectrum,
    distance: f64,
    lag: i64,
    matern: &MaternSpec,
    d_max: f64,
) -> f64 {
    let range = matern.absolute_range(d_max);
    (0..=ds.n / 2)
        .map(|k| {
            let omega = fourier_frequency(k, ds.n);
            ds.multiplicity(k)
                * ds.weights[k]
                * matern_corr(distance * ds.gammas[k], matern.smoothness, range)
                * libm::cos(omega * lag as f64)
        })
        .sum()
}
