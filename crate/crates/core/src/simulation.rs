//! Exact synthesis of the latent fields.
//!
//! The space-time Gaussian field is drawn by circulant embedding in the
//! frequency domain: the target spectrum is sampled on the Fourier grid of a
//! circle of length `N` (next power of two at or above twice the horizon),
//! each per-frequency coherence matrix is factored once, complex Gaussian
//! vectors are coloured by the factors with Hermitian symmetry between `k`
//! and `N - k`, and one inverse FFT per pair of sites returns two real
//! series. The scaling process `U(t)` is built from `ν` independent series
//! with a Whittle temporal correlation, drawn by classical covariance
//! embedding.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand_core::RngCore;

use crate::covariance::{self, DiscreteSpectrum, Dof, MaternSpec, SpaceTimeCovSpec};
use crate::cutoff::CutoffSurface;
use crate::error::{invalid, Error, Result};
use crate::fft::Radix2Fft;
use crate::field::{SiteSeries, TimeGrid};
use crate::gauge::{GaugeNetwork, OccurrenceField};
use crate::linalg;
use crate::par;
use crate::rng::{self, std_normal, StreamRng};
use crate::special;

const PSD_TOL: f64 = 1e-10;
const MAX_EMBEDDING: usize = 1 << 22;

/// Circle length used to embed a series of `n_steps` points.
pub fn embedding_len(n_steps: usize) -> usize {
    (2 * n_steps).next_power_of_two().max(2)
}

#[derive(Debug, Clone)]
enum Factors {
    /// Coherence independent of frequency: one factor, per-frequency gains.
    Shared { chol: Vec<f64>, gain: Vec<f64> },
    /// One gain-scaled factor per frequency `0..=N/2`.
    PerFrequency(Vec<f64>),
}

/// Precomputed spectral factorization of a multivariate stationary Gaussian
/// series on a gauge network.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    p: usize,
    n_steps: usize,
    fft: Radix2Fft,
    factors: Factors,
}

impl SpectralFactor {
    pub fn new(network: &GaugeNetwork, cov: &SpaceTimeCovSpec, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        cov.validate()?;
        let p = network.len();
        let n = embedding_len(n_steps);
        let ds = DiscreteSpectrum::new(cov, n)?;
        let half = n / 2;
        let factor_at = |k: usize| -> Result<Vec<f64>> {
            let m = covariance::coherence_matrix(ds.gammas[k], network, &cov.matern);
            linalg::cholesky_psd(&m, p, PSD_TOL).map_err(|e| match e {
                Error::NotPositiveDefinite { pivot, value } => Error::SpectralFactorization {
                    index: k,
                    pivot,
                    value,
                },
                other => other,
            })
        };
        let factors = if cov.coherence_is_flat() {
            Factors::Shared {
                chol: factor_at(0)?,
                gain: ds.weights.iter().map(|&w| libm::sqrt(w)).collect(),
            }
        } else {
            let mut all = Vec::with_capacity((half + 1) * p * p);
            for k in 0..=half {
                let g = libm::sqrt(ds.weights[k]);
                all.extend(factor_at(k)?.into_iter().map(|v| v * g));
            }
            Factors::PerFrequency(all)
        };
        Ok(Self {
            p,
            n_steps,
            fft: Radix2Fft::new(n),
            factors,
        })
    }

    pub fn sites(&self) -> usize {
        self.p
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn embedding_len(&self) -> usize {
        self.fft.len()
    }

    /// One realisation with unit marginal variance, `sites × n_steps`.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> SiteSeries<f64> {
        let p = self.p;
        let n = self.fft.len();
        let half = n / 2;
        let mut coloured = vec![Complex64::new(0.0, 0.0); (half + 1) * p];
        let mut re = vec![0.0; p];
        let mut im = vec![0.0; p];
        let mut out_re = vec![0.0; p];
        let mut out_im = vec![0.0; p];
        let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;
        for k in 0..=half {
            let real_freq = k == 0 || k == half;
            for i in 0..p {
                if real_freq {
                    re[i] = std_normal(rng);
                    im[i] = 0.0;
                } else {
                    re[i] = std_normal(rng) * inv_sqrt2;
                    im[i] = std_normal(rng) * inv_sqrt2;
                }
            }
            let (l, g) = match &self.factors {
                Factors::Shared { chol, gain } => (&chol[..], gain[k]),
                Factors::PerFrequency(all) => (&all[k * p * p..(k + 1) * p * p], 1.0),
            };
            linalg::lower_mul(l, p, &re, &mut out_re);
            linalg::lower_mul(l, p, &im, &mut out_im);
            for i in 0..p {
                coloured[k * p + i] = Complex64::new(out_re[i] * g, out_im[i] * g);
            }
        }
        let mut out = SiteSeries::filled(p, self.n_steps, 0.0);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut site = 0;
        while site < p {
            let pair = site + 1 < p;
            for k in 0..=half {
                let a = coloured[k * p + site];
                let b = if pair {
                    coloured[k * p + site + 1]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                // a + i b
                buf[k] = Complex64::new(a.re - b.im, a.im + b.re);
                if k != 0 && k != half {
                    // conj(a) + i conj(b)
                    buf[n - k] = Complex64::new(a.re + b.im, -a.im + b.re);
                }
            }
            self.fft.inverse(&mut buf);
            for t in 0..self.n_steps {
                out.set(site, t, buf[t].re);
                if pair {
                    out.set(site + 1, t, buf[t].im);
                }
            }
            site += 2;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Gaussian,
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    pub y: SiteSeries<f64>,
    pub kind: FieldKind,
    pub nu: Dof,
}

/// Latent Gaussian series for replication 0 of `seed`.
pub fn simulate_gaussian_mts(
    network: &GaugeNetwork,
    cov: &SpaceTimeCovSpec,
    n_steps: usize,
    seed: u64,
) -> Result<LatentField> {
    let factor = SpectralFactor::new(network, cov, n_steps)?;
    let mut rng = rng::substream(seed, 0, rng::LATENT_STREAM);
    Ok(LatentField {
        y: factor.sample(&mut rng),
        kind: FieldKind::Gaussian,
        nu: Dof::Infinite,
    })
}

/// Range of the scaling-process correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingRange {
    /// Fraction of the simulated horizon (`n_steps`).
    FractionOfHorizon(f64),
    /// Absolute range in time steps.
    Steps(f64),
}

impl ScalingRange {
    pub fn in_steps(&self, n_steps: usize) -> f64 {
        match *self {
            ScalingRange::FractionOfHorizon(f) => f * n_steps as f64,
            ScalingRange::Steps(s) => s,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            ScalingRange::FractionOfHorizon(v) | ScalingRange::Steps(v) => v,
        }
    }

    pub fn with_value(&self, v: f64) -> Self {
        match self {
            ScalingRange::FractionOfHorizon(_) => ScalingRange::FractionOfHorizon(v),
            ScalingRange::Steps(_) => ScalingRange::Steps(v),
        }
    }
}

/// Circulant embedding of the unit Whittle correlation `M₁(h / range)` in
/// time, shared by all `X_j` series of the scaling process.
#[derive(Debug, Clone)]
pub struct ScalingProcess {
    n_steps: usize,
    fft: Radix2Fft,
    /// `sqrt(λ_k / N)`
    amp: Vec<f64>,
    clamped: usize,
}

impl ScalingProcess {
    /// `range_steps` is the Whittle range in time steps; zero gives white
    /// noise.
    pub fn new(n_steps: usize, range_steps: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if !(range_steps >= 0.0 && range_steps.is_finite()) {
            return Err(invalid("alpha_u", "scaling range must be finite and >= 0"));
        }
        let mut n = embedding_len(n_steps);
        loop {
            let fft = Radix2Fft::new(n);
            let mut buf: Vec<Complex64> = (0..n)
                .map(|h| {
                    let lag = h.min(n - h) as f64;
                    let c = if lag == 0.0 {
                        1.0
                    } else if range_steps == 0.0 {
                        0.0
                    } else {
                        special::whittle_m1(lag / range_steps)
                    };
                    Complex64::new(c, 0.0)
                })
                .collect();
            fft.forward(&mut buf);
            let max = buf.iter().map(|c| c.re).fold(0.0, f64::max);
            let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
            if min >= -1e-10 * max || n >= MAX_EMBEDDING {
                let clamped = buf.iter().filter(|c| c.re < 0.0).count();
                let amp = buf
                    .iter()
                    .map(|c| libm::sqrt(c.re.max(0.0) / n as f64))
                    .collect();
                return Ok(Self {
                    n_steps,
                    fft,
                    amp,
                    clamped,
                });
            }
            n *= 2;
        }
    }

    pub fn embedding_len(&self) -> usize {
        self.fft.len()
    }

    /// Number of negative embedding eigenvalues set to zero.
    pub fn clamped_eigenvalues(&self) -> usize {
        self.clamped
    }

    /// Two independent unit-variance series from one FFT.
    fn sample_pair<R: RngCore>(&self, rng: &mut R, buf: &mut [Complex64]) {
        for (b, &a) in buf.iter_mut().zip(&self.amp) {
            *b = Complex64::new(a * std_normal(rng), a * std_normal(rng));
        }
        self.fft.inverse(buf);
    }

    /// The first `count` series `X_1..X_count` of replication `rep`. Series
    /// `2m` and `2m+1` share substream `m`, so a smaller `count` yields a
    /// prefix of a larger one.
    pub fn sample_series(&self, count: usize, seed: u64, rep: u64) -> Vec<Vec<f64>> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        let mut out = Vec::with_capacity(count);
        for m in 0..count.div_ceil(2) {
            let mut r = rng::substream(seed, rep, rng::SCALING_STREAM_BASE + m as u64);
            self.sample_pair(&mut r, &mut buf);
            out.push(buf[..self.n_steps].iter().map(|c| c.re).collect());
            if out.len() < count {
                out.push(buf[..self.n_steps].iter().map(|c| c.im).collect());
            }
        }
        out
    }

    /// `u(t) = sqrt((1/ν) Σ_j X_j(t)²)`.
    pub fn sample_u(&self, nu: u32, seed: u64, rep: u64) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_steps];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        let nu_us = nu as usize;
        for m in 0..nu_us.div_ceil(2) {
            let mut r = rng::substream(seed, rep, rng::SCALING_STREAM_BASE + m as u64);
            self.sample_pair(&mut r, &mut buf);
            let both = 2 * m + 1 < nu_us;
            for (a, c) in acc.iter_mut().zip(&buf[..self.n_steps]) {
                *a += c.re * c.re;
                if both {
                    *a += c.im * c.im;
                }
            }
        }
        let inv = 1.0 / f64::from(nu);
        acc.iter().map(|&s| libm::sqrt(s * inv)).collect()
    }
}

/// Scaling series `u(t)` for replication 0 of `seed`.
pub fn simulate_scaling_process(
    n_steps: usize,
    nu: Dof,
    alpha_u: ScalingRange,
    seed: u64,
) -> Result<Vec<f64>> {
    let nu = match nu {
        Dof::Finite(0) => return Err(invalid("nu", "must be at least 1")),
        Dof::Finite(v) => v,
        Dof::Infinite => return Err(Error::InfiniteScaling),
    };
    let sp = ScalingProcess::new(n_steps, alpha_u.in_steps(n_steps))?;
    Ok(sp.sample_u(nu, seed, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub network: GaugeNetwork,
    pub n_steps: usize,
    pub cov: SpaceTimeCovSpec,
    pub alpha_u: ScalingRange,
    pub nu: Dof,
    pub seed: u64,
    pub replications: usize,
}

/// Reusable space-time tRF sampler: `Y = Z / U`.
#[derive(Debug, Clone)]
pub struct TrfSimulator {
    factor: SpectralFactor,
    scaling: Option<ScalingProcess>,
    nu: Dof,
    seed: u64,
}

impl TrfSimulator {
    pub fn new(
        network: &GaugeNetwork,
        cov: &SpaceTimeCovSpec,
        n_steps: usize,
        alpha_u: ScalingRange,
        nu: Dof,
        seed: u64,
    ) -> Result<Self> {
        if nu == Dof::Finite(0) {
            return Err(invalid("nu", "must be at least 1"));
        }
        let factor = SpectralFactor::new(network, cov, n_steps)?;
        let scaling = if nu.is_finite() {
            Some(ScalingProcess::new(n_steps, alpha_u.in_steps(n_steps))?)
        } else {
            None
        };
        Ok(Self {
            factor,
            scaling,
            nu,
            seed,
        })
    }

    pub fn from_config(config: &SimConfig) -> Result<Self> {
        Self::new(
            &config.network,
            &config.cov,
            config.n_steps,
            config.alpha_u,
            config.nu,
            config.seed,
        )
    }

    pub fn nu(&self) -> Dof {
        self.nu
    }

    pub fn latent_gaussian(&self, rep: u64) -> SiteSeries<f64> {
        let mut r: StreamRng = rng::substream(self.seed, rep, rng::LATENT_STREAM);
        self.factor.sample(&mut r)
    }

    pub fn scaling(&self, rep: u64) -> Option<Vec<f64>> {
        match (self.nu, &self.scaling) {
            (Dof::Finite(nu), Some(sp)) => Some(sp.sample_u(nu, self.seed, rep)),
            _ => None,
        }
    }

    pub fn replicate(&self, rep: u64) -> LatentField {
        let mut z = self.latent_gaussian(rep);
        match self.scaling(rep) {
            None => LatentField {
                y: z,
                kind: FieldKind::Gaussian,
                nu: Dof::Infinite,
            },
            Some(u) => {
                for i in 0..z.sites() {
                    for (v, s) in z.row_mut(i).iter_mut().zip(&u) {
                        *v /= s;
                    }
                }
                LatentField {
                    y: z,
                    kind: FieldKind::T,
                    nu: self.nu,
                }
            }
        }
    }
}

/// Replication 0 of the configured tRF (the Gaussian field when `ν = ∞`).
pub fn simulate_trf(config: &SimConfig) -> Result<LatentField> {
    Ok(TrfSimulator::from_config(config)?.replicate(0))
}

/// All `config.replications` realisations, in replication order.
pub fn simulate_replications(config: &SimConfig) -> Result<Vec<LatentField>> {
    let sim = TrfSimulator::from_config(config)?;
    Ok(par::map_indexed(config.replications, |r| sim.replicate(r as u64)))
}

/// Independent replications of a purely spatial tRF at the network sites.
#[derive(Debug, Clone)]
pub struct SpatialTrfSampler {
    p: usize,
    chol: Vec<f64>,
    nu: Dof,
    seed: u64,
}

impl SpatialTrfSampler {
    pub fn new(network: &GaugeNetwork, matern: &MaternSpec, nu: Dof, seed: u64) -> Result<Self> {
        matern.validate()?;
        if nu == Dof::Finite(0) {
            return Err(invalid("nu", "must be at least 1"));
        }
        let p = network.len();
        let m = covariance::coherence_matrix(1.0, network, matern);
        Ok(Self {
            p,
            chol: linalg::cholesky_psd(&m, p, PSD_TOL)?,
            nu,
            seed,
        })
    }

    /// Draws replication `rep` into `out` (length = number of sites). The
    /// Gaussian vector comes first in the stream, then the `ν` chi-square
    /// components, so fields for different `ν` share their Gaussian part.
    pub fn sample_into(&self, rep: u64, out: &mut [f64]) {
        let mut r = rng::substream(self.seed, rep, rng::LATENT_STREAM);
        let xi: Vec<f64> = (0..self.p).map(|_| std_normal(&mut r)).collect();
        linalg::lower_mul(&self.chol, self.p, &xi, out);
        if let Dof::Finite(nu) = self.nu {
            let chi2: f64 = (0..nu)
                .map(|_| {
                    let x = std_normal(&mut r);
                    x * x
                })
                .sum();
            let u = libm::sqrt(chi2 / f64::from(nu));
            out.iter_mut().for_each(|v| *v /= u);
        }
    }
}

/// `n_replications` spatial fields, `sites × n_replications`.
pub fn simulate_spatial_trf(
    network: &GaugeNetwork,
    matern: &MaternSpec,
    nu: Dof,
    n_replications: usize,
    seed: u64,
) -> Result<SiteSeries<f64>> {
    let sampler = SpatialTrfSampler::new(network, matern, nu, seed)?;
    let p = network.len();
    let cols = par::map_indexed(n_replications, |r| {
        let mut v = vec![0.0; p];
        sampler.sample_into(r as u64, &mut v);
        v
    });
    let mut out = SiteSeries::filled(p, n_replications, 0.0);
    for (r, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out.set(i, r, v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub enum Cutoff<'a> {
    Scalar(f64),
    Surface(&'a CutoffSurface),
}

/// Wet where `y > c`.
pub fn threshold_values(y: &SiteSeries<f64>, cutoff: Cutoff<'_>) -> Result<SiteSeries<bool>> {
    match cutoff {
        Cutoff::Scalar(c) => Ok(y.map(|v| v > c)),
        Cutoff::Surface(s) => {
            if s.c.shape() != y.shape() {
                return Err(Error::DimensionMismatch {
                    expected: y.shape(),
                    got: s.c.shape(),
                });
            }
            let data = y
                .as_slice()
                .iter()
                .zip(s.c.as_slice())
                .map(|(v, c)| v > c)
                .collect();
            SiteSeries::from_vec(y.sites(), y.steps(), data)
        }
    }
}

pub fn threshold_occurrence(
    field: &LatentField,
    cutoff: Cutoff<'_>,
    grid: TimeGrid,
) -> Result<OccurrenceField> {
    Ok(OccurrenceField::new(threshold_values(&field.y, cutoff)?, grid))
}

/// Marginal quantile at `p_dry` of Student-t(ν), or of N(0,1) for `ν = ∞`.
pub fn marginal_cutoff(p_dry: f64, nu: Dof) -> Result<f64> {
    match nu {
        Dof::Infinite => special::normal_quantile(p_dry),
        Dof::Finite(0) => Err(invalid("nu", "must be at least 1")),
        Dof::Finite(v) => special::student_t_quantile(p_dry, f64::from(v)),
    }
}
