//! Serialized forms: cutoff-model and fit-result JSON, covariance TOML.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use trf_core::cutoff::{CutoffModel, HarmonicSelection, HOURS_PER_DAY};
use trf_core::fitting::{FitResult, ModelKind, Theta};
use trf_core::simulation::ScalingRange;
use trf_core::{Dof, MaternSpec, SpaceTimeCovSpec};

use crate::provenance::Provenance;

pub const CUTOFF_SCHEMA: &str = "trf-cutoff-model/1";
pub const FIT_SCHEMA: &str = "trf-fit-result/1";

/// Degrees of freedom as written in files: an integer, or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DofRepr {
    Finite(u32),
    Named(InfTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfTag {
    #[serde(rename = "inf")]
    Inf,
}

impl From<Dof> for DofRepr {
    fn from(d: Dof) -> Self {
        match d {
            Dof::Finite(n) => DofRepr::Finite(n),
            Dof::Infinite => DofRepr::Named(InfTag::Inf),
        }
    }
}

impl From<DofRepr> for Dof {
    fn from(d: DofRepr) -> Self {
        match d {
            DofRepr::Finite(n) => Dof::Finite(n),
            DofRepr::Named(InfTag::Inf) => Dof::Infinite,
        }
    }
}

/// Parses `3`, `inf` or `gaussian`.
pub fn parse_dof(s: &str) -> Result<Dof> {
    match s.trim() {
        "inf" | "infinity" | "gaussian" => Ok(Dof::Infinite),
        v => match v.parse::<u32>() {
            Ok(0) | Err(_) => bail!("degrees of freedom must be a positive integer or `inf`, got `{v}`"),
            Ok(n) => Ok(Dof::Finite(n)),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteCoefficient {
    pub site_id: String,
    pub intercept: f64,
    pub intercept_se: Option<f64>,
}

/// Cutoff model file. Harmonic coefficients are shared by all sites; the
/// logit at site `i` and clock hour `h` (1..=24) is
/// `intercept_i + Σ_j cos_j cos(2π j h / period) + sin_j sin(2π j h / period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffModelFile {
    pub schema: String,
    pub provenance: Option<Provenance>,
    pub period: f64,
    pub nu: DofRepr,
    pub harmonics: usize,
    pub sites: Vec<SiteCoefficient>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub cos_se: Vec<f64>,
    pub sin_se: Vec<f64>,
    pub loglik: Option<f64>,
    /// AIC for `H = 0..=H_max`; `null` where that order failed.
    pub aic: Vec<Option<f64>>,
    pub iterations: Option<usize>,
    pub ridge_used: Option<bool>,
}

impl CutoffModelFile {
    pub fn from_selection(sel: &HarmonicSelection, ids: &[String], nu: Dof, prov: &Provenance) -> Self {
        let m = &sel.best.model;
        let p = m.sites();
        let h = m.harmonics();
        let se = &sel.best.std_errors;
        Self {
            schema: CUTOFF_SCHEMA.to_string(),
            provenance: Some(prov.clone()),
            period: m.period,
            nu: nu.into(),
            harmonics: h,
            sites: ids
                .iter()
                .enumerate()
                .map(|(i, id)| SiteCoefficient {
                    site_id: id.clone(),
                    intercept: m.intercepts[i],
                    intercept_se: se.get(i).copied(),
                })
                .collect(),
            cos: m.cos.clone(),
            sin: m.sin.clone(),
            cos_se: (0..h).map(|j| se[p + 2 * j]).collect(),
            sin_se: (0..h).map(|j| se[p + 2 * j + 1]).collect(),
            loglik: Some(sel.best.loglik),
            aic: sel.aic.clone(),
            iterations: Some(sel.best.iterations),
            ridge_used: Some(sel.best.ridge_used),
        }
    }

    pub fn site_ids(&self) -> Vec<String> {
        self.sites.iter().map(|s| s.site_id.clone()).collect()
    }

    /// Core model with its sites reordered to `ids`.
    pub fn model_for(&self, ids: &[String]) -> Result<CutoffModel> {
        if self.schema != CUTOFF_SCHEMA {
            bail!("unsupported cutoff model schema `{}`", self.schema);
        }
        if self.cos.len() != self.harmonics || self.sin.len() != self.harmonics {
            bail!("cutoff model lists {} harmonics but {} cos / {} sin terms", self.harmonics, self.cos.len(), self.sin.len());
        }
        if self.period != HOURS_PER_DAY as f64 {
            bail!("cutoff model period must be {HOURS_PER_DAY}, got {}", self.period);
        }
        let intercepts = ids
            .iter()
            .map(|id| {
                self.sites
                    .iter()
                    .find(|s| &s.site_id == id)
                    .map(|s| s.intercept)
                    .ok_or_else(|| anyhow::anyhow!("site `{id}` has no intercept in the cutoff model"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CutoffModel {
            intercepts,
            cos: self.cos.clone(),
            sin: self.sin.clone(),
            period: self.period,
            nu_ref: self.nu.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Trf,
    Grf,
}

impl From<ModelName> for ModelKind {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Trf => ModelKind::Trf,
            ModelName::Grf => ModelKind::Grf,
        }
    }
}

impl From<ModelKind> for ModelName {
    fn from(m: ModelKind) -> Self {
        match m {
            ModelKind::Trf => ModelName::Trf,
            ModelKind::Grf => ModelName::Grf,
        }
    }
}

/// Units of `α_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlphaUUnits {
    /// Fraction of the simulated horizon.
    #[default]
    Fraction,
    /// Time steps.
    Steps,
}

impl AlphaUUnits {
    pub fn range(self, v: f64) -> ScalingRange {
        match self {
            AlphaUUnits::Fraction => ScalingRange::FractionOfHorizon(v),
            AlphaUUnits::Steps => ScalingRange::Steps(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaRepr {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_u: f64,
    pub nu: DofRepr,
}

impl From<Theta> for ThetaRepr {
    fn from(t: Theta) -> Self {
        Self {
            alpha: t.alpha,
            beta: t.beta,
            alpha_u: t.alpha_u,
            nu: t.nu.into(),
        }
    }
}

impl From<ThetaRepr> for Theta {
    fn from(t: ThetaRepr) -> Self {
        Self {
            alpha: t.alpha,
            beta: t.beta,
            alpha_u: t.alpha_u,
            nu: t.nu.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuTraceRepr {
    pub theta: ThetaRepr,
    pub value: f64,
    pub evaluations: usize,
    pub reflections: usize,
    pub converged: bool,
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub replications: usize,
    pub n_steps: usize,
    pub seed_base: u64,
    pub alpha_u_units: AlphaUUnits,
    pub cutoff: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResultFile {
    pub schema: String,
    pub provenance: Option<Provenance>,
    pub model: ModelName,
    pub theta: ThetaRepr,
    pub value: f64,
    pub evaluations: usize,
    pub degenerate_replications: usize,
    pub settings: FitSettings,
    pub per_nu: Vec<NuTraceRepr>,
}

impl FitResultFile {
    pub fn new(fit: &FitResult, settings: FitSettings, prov: &Provenance) -> Self {
        Self {
            schema: FIT_SCHEMA.to_string(),
            provenance: Some(prov.clone()),
            model: fit.kind.into(),
            theta: fit.theta.into(),
            value: fit.value,
            evaluations: fit.evaluations,
            degenerate_replications: fit.degenerate_replications,
            settings,
            per_nu: fit
                .per_nu
                .iter()
                .map(|t| NuTraceRepr {
                    theta: t.theta.into(),
                    value: t.value,
                    evaluations: t.evaluations,
                    reflections: t.reflections,
                    converged: t.converged,
                    failed_evaluations: t.failed_evaluations,
                })
                .collect(),
        }
    }
}

/// Covariance template. `range` is a fraction of `d_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovSpecFile {
    pub smoothness: f64,
    pub range: f64,
    pub scale: f64,
    pub beta: f64,
    /// `a_0..a_L` of the log coherence.
    pub gamma_coefs: Vec<f64>,
    /// `c_0..c_L` of the log spectrum.
    pub spectrum_coefs: Vec<f64>,
    pub direction: [f64; 2],
}

impl Default for CovSpecFile {
    fn default() -> Self {
        Self::from(&SpaceTimeCovSpec::default())
    }
}

impl From<&SpaceTimeCovSpec> for CovSpecFile {
    fn from(c: &SpaceTimeCovSpec) -> Self {
        Self {
            smoothness: c.matern.smoothness,
            range: c.matern.range,
            scale: c.matern.scale,
            beta: c.beta,
            gamma_coefs: c.gamma_coefs.clone(),
            spectrum_coefs: c.spectrum_coefs.clone(),
            direction: c.direction,
        }
    }
}

impl CovSpecFile {
    pub fn to_spec(&self) -> Result<SpaceTimeCovSpec> {
        let spec = SpaceTimeCovSpec {
            matern: MaternSpec {
                smoothness: self.smoothness,
                range: self.range,
                scale: self.scale,
            },
            beta: self.beta,
            gamma_coefs: self.gamma_coefs.clone(),
            spectrum_coefs: self.spectrum_coefs.clone(),
            direction: self.direction,
        };
        spec.validate()?;
        Ok(spec)
    }
}
