//! Simulation-based estimation of `θ = (α, β, α_u, ν)`.
//!
//! The criterion compares conditional dry and rain probabilities of simulated
//! occurrence fields with those of the observations. Every evaluation reuses
//! the same seed set, so the objective is a deterministic function of `θ`
//! and Nelder–Mead does not chase Monte Carlo noise.

use alloc::vec;
use alloc::vec::Vec;

use crate::covariance::{Dof, MaternSpec, SpaceTimeCovSpec};
use crate::cutoff::{cutoff_surface, CutoffModel, CutoffSurface};
use crate::error::{invalid, Error, Result};
use crate::field::{SiteSeries, TimeGrid};
use crate::gauge::GaugeNetwork;
use crate::linalg;
use crate::optim::{self, Bounds, NelderMeadOptions};
use crate::par;
use crate::rng;
use crate::simulation::{marginal_cutoff, threshold_values, Cutoff, ScalingRange, TrfSimulator};
use crate::stats::{cond_prob_table, CondProbTable, OccKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Trf,
    Grf,
}

/// Model parameters. `alpha` is a fraction of `d_max`; `alpha_u` is read in
/// the units of [`CriterionSpec::alpha_u_units`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_u: f64,
    pub nu: Dof,
}

/// How the cutoff is set for a given `ν`.
#[derive(Debug, Clone, PartialEq)]
pub enum CutoffRule {
    /// One marginal quantile everywhere.
    Marginal { p_dry: f64 },
    /// Quantiles of a fitted seasonal wet probability.
    Seasonal(CutoffModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSpec {
    pub network: GaugeNetwork,
    pub obs: CondProbTable,
    pub n_steps: usize,
    pub grid: TimeGrid,
    /// Template covariance; its range and `β` are replaced by `θ`.
    pub cov: SpaceTimeCovSpec,
    /// Units of `θ.alpha_u`; the stored value is ignored.
    pub alpha_u_units: ScalingRange,
    pub cutoff: CutoffRule,
    /// Replications `M` per evaluation.
    pub replications: usize,
    pub seed_base: u64,
}

impl CriterionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("M", "need at least one replication"));
        }
        if self.obs.sites() != self.network.len() {
            return Err(Error::DimensionMismatch {
                expected: (self.network.len(), self.network.len()),
                got: (self.obs.sites(), self.obs.orders()),
            });
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        Ok(())
    }
}

enum ResolvedCutoff {
    Scalar(f64),
    Surface(CutoffSurface),
}

/// Occurrence generator for one `θ` under a criterion spec. Replication `k`
/// uses random streams `(seed, k, ·)`.
pub struct ModelSimulator {
    sim: TrfSimulator,
    cutoff: ResolvedCutoff,
}

impl ModelSimulator {
    pub fn new(theta: &Theta, spec: &CriterionSpec, seed: u64) -> Result<Self> {
        let cov = spec.cov.with_range_and_beta(theta.alpha, theta.beta);
        let sim = TrfSimulator::new(
            &spec.network,
            &cov,
            spec.n_steps,
            spec.alpha_u_units.with_value(theta.alpha_u),
            theta.nu,
            seed,
        )?;
        let cutoff = match &spec.cutoff {
            CutoffRule::Marginal { p_dry } => ResolvedCutoff::Scalar(marginal_cutoff(*p_dry, theta.nu)?),
            CutoffRule::Seasonal(model) => {
                if model.sites() != spec.network.len() {
                    return Err(Error::DimensionMismatch {
                        expected: (spec.network.len(), spec.n_steps),
                        got: (model.sites(), spec.n_steps),
                    });
                }
                ResolvedCutoff::Surface(cutoff_surface(model, spec.grid, spec.n_steps, theta.nu)?)
            }
        };
        Ok(Self { sim, cutoff })
    }

    pub fn occurrence(&self, rep: u64) -> SiteSeries<bool> {
        let y = self.sim.replicate(rep).y;
        let cut = match &self.cutoff {
            ResolvedCutoff::Scalar(c) => Cutoff::Scalar(*c),
            ResolvedCutoff::Surface(s) => Cutoff::Surface(s),
        };
        threshold_values(&y, cut).expect("cutoff surface shape fixed at construction")
    }
}

/// One replication's contribution, `None` when neither block has a term.
pub fn criterion_terms(sim: &CondProbTable, obs: &CondProbTable) -> Option<f64> {
    let mut total = 0.0;
    let mut any = false;
    for kind in [OccKind::Dry, OccKind::Rain] {
        let p = sim.sites();
        let mut n_j = vec![0usize; p];
        let mut site_has = vec![false; p];
        for i in 0..p {
            for j in 1..p {
                if sim.available(kind, i, j) && obs.available(kind, i, j) {
                    n_j[j] += 1;
                    site_has[i] = true;
                }
            }
        }
        let n_total: usize = n_j.iter().sum();
        if n_total == 0 {
            continue;
        }
        any = true;
        let m = site_has.iter().filter(|&&h| h).count() as f64;
        let mut block = 0.0;
        for i in 0..p {
            for j in 1..p {
                if let (Some(s), Some(o)) = (sim.phi(kind, i, j), obs.phi(kind, i, j)) {
                    let w = n_j[j] as f64 / n_total as f64;
                    block += w * (s - o) * (s - o);
                }
            }
        }
        total += block / m;
    }
    any.then_some(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionValue {
    pub value: f64,
    /// Replications with no comparable term; they contribute zero.
    pub degenerate: usize,
}

/// Average discrepancy over `M` common-random-number replications.
pub fn criterion(theta: &Theta, spec: &CriterionSpec) -> Result<CriterionValue> {
    spec.validate()?;
    let model = ModelSimulator::new(theta, spec, spec.seed_base)?;
    let parts = par::map_indexed(spec.replications, |k| {
        let occ = model.occurrence(k as u64);
        let table = cond_prob_table(&occ, &spec.network).expect("network matches simulated field");
        criterion_terms(&table, &spec.obs)
    });
    let degenerate = parts.iter().filter(|v| v.is_none()).count();
    if degenerate == parts.len() {
        return Err(Error::DegenerateCriterion);
    }
    let sum: f64 = parts.iter().map(|v| v.unwrap_or(0.0)).sum();
    Ok(CriterionValue {
        value: sum / spec.replications as f64,
        degenerate,
    })
}

/// Conditional-probability tables of `reps` simulated seasons under `θ`.
pub fn simulate_tables(theta: &Theta, spec: &CriterionSpec, reps: usize, seed: u64) -> Result<Vec<CondProbTable>> {
    let model = ModelSimulator::new(theta, spec, seed)?;
    Ok(par::map_indexed(reps, |k| {
        cond_prob_table(&model.occurrence(k as u64), &spec.network).expect("network matches simulated field")
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaBounds {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub alpha_u: (f64, f64),
}

impl Default for ThetaBounds {
    fn default() -> Self {
        Self {
            alpha: (0.05, 1.5),
            beta: (0.0, 0.9),
            alpha_u: (0.01, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Integer degrees of freedom tried for the tRF.
    pub nu_grid: Vec<u32>,
    pub bounds: ThetaBounds,
    /// Starting point `(α, β, α_u)`; the centre of the bounds when `None`.
    pub start: Option<(f64, f64, f64)>,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            nu_grid: (2..=10).collect(),
            bounds: ThetaBounds::default(),
            start: None,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuTrace {
    pub nu: Dof,
    pub theta: Theta,
    pub value: f64,
    pub evaluations: usize,
    pub reflections: usize,
    pub converged: bool,
    /// Evaluations whose criterion could not be computed.
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: ModelKind,
    pub theta: Theta,
    pub value: f64,
    pub per_nu: Vec<NuTrace>,
    pub evaluations: usize,
    pub degenerate_replications: usize,
}

/// Minimizes the criterion by Nelder–Mead over the continuous parameters
/// for each `ν` (only `ν = ∞`, without `α_u`, for the GRF) and returns the
/// best.
pub fn fit(spec: &CriterionSpec, kind: ModelKind, options: &FitOptions) -> Result<FitResult> {
    spec.validate()?;
    let nus: Vec<Dof> = match kind {
        ModelKind::Trf => {
            if options.nu_grid.is_empty() {
                return Err(invalid("nu_grid", "must not be empty"));
            }
            if options.nu_grid.contains(&0) {
                return Err(invalid("nu_grid", "degrees of freedom must be at least 1"));
            }
            options.nu_grid.iter().map(|&v| Dof::Finite(v)).collect()
        }
        ModelKind::Grf => vec![Dof::Infinite],
    };
    let b = options.bounds;
    let centre = |r: (f64, f64)| 0.5 * (r.0 + r.1);
    let start = options
        .start
        .unwrap_or((centre(b.alpha), centre(b.beta), centre(b.alpha_u)));
    let (bounds, x0) = match kind {
        ModelKind::Trf => (
            Bounds::new(
                vec![b.alpha.0, b.beta.0, b.alpha_u.0],
                vec![b.alpha.1, b.beta.1, b.alpha_u.1],
            )?,
            vec![start.0, start.1, start.2],
        ),
        ModelKind::Grf => (
            Bounds::new(vec![b.alpha.0, b.beta.0], vec![b.alpha.1, b.beta.1])?,
            vec![start.0, start.1],
        ),
    };
    let to_theta = |x: &[f64], nu: Dof| Theta {
        alpha: x[0],
        beta: x[1],
        alpha_u: if x.len() > 2 { x[2] } else { start.2 },
        nu,
    };
    let mut per_nu = Vec::with_capacity(nus.len());
    let mut evaluations = 0;
    let mut degenerate_replications = 0;
    for nu in nus {
        let mut failed = 0;
        let mut degenerate = 0;
        let m = optim::minimize(
            |x| match criterion(&to_theta(x, nu), spec) {
                Ok(v) => {
                    degenerate += v.degenerate;
                    v.value
                }
                Err(_) => {
                    failed += 1;
                    f64::INFINITY
                }
            },
            &x0,
            &bounds,
            options.nelder_mead,
        )?;
        evaluations += m.evaluations;
        degenerate_replications += degenerate;
        per_nu.push(NuTrace {
            nu,
            theta: to_theta(&m.x, nu),
            value: m.value,
            evaluations: m.evaluations,
            reflections: m.reflections,
            converged: m.converged,
            failed_evaluations: failed,
        });
    }
    // the first minimum wins ties, i.e. the smaller ν
    let best = per_nu
        .iter()
        .fold(None::<&NuTrace>, |acc, t| match acc {
            Some(a) if a.value <= t.value => Some(a),
            _ => Some(t),
        })
        .expect("at least one ν");
    if !best.value.is_finite() {
        return Err(Error::DegenerateCriterion);
    }
    Ok(FitResult {
        kind,
        theta: best.theta,
        value: best.value,
        evaluations,
        degenerate_replications,
        per_nu,
    })
}

/// `ψ(0)` and `ψ(p)`: probabilities that no site and that every site is wet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchTargets {
    pub psi_none: f64,
    pub psi_all: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions {
    /// Search interval for the GRF range, as a fraction of `d_max`.
    pub bounds: (f64, f64),
    /// Points of the initial log-spaced scan.
    pub grid_points: usize,
    /// Monte Carlo replications per evaluation.
    pub mc_budget: usize,
    pub seed: u64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            bounds: (0.05, 5.0),
            grid_points: 25,
            mc_budget: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub alpha: f64,
    pub objective: f64,
    pub psi_none: f64,
    pub psi_all: f64,
    /// The optimum sits on a search bound; the targets may be unattainable.
    pub at_boundary: bool,
}

/// Monte Carlo `ψ(0)`, `ψ(p)` of a thresholded spatial Gaussian field, with
/// one fixed set of normal vectors shared by every range.
pub struct SpatialPsiEstimator<'a> {
    network: &'a GaugeNetwork,
    smoothness: f64,
    cutoff: f64,
    normals: Vec<f64>,
    reps: usize,
}

impl<'a> SpatialPsiEstimator<'a> {
    /// The vectors are the ones [`crate::simulation::SpatialTrfSampler`]
    /// draws for `ν = ∞` with the same seed.
    pub fn new(network: &'a GaugeNetwork, smoothness: f64, p_dry: f64, reps: usize, seed: u64) -> Result<Self> {
        if reps == 0 {
            return Err(invalid("mc_budget", "must be positive"));
        }
        let p = network.len();
        let blocks = par::map_indexed(reps, |r| {
            let mut g = rng::substream(seed, r as u64, rng::LATENT_STREAM);
            (0..p).map(|_| rng::std_normal(&mut g)).collect::<Vec<_>>()
        });
        Ok(Self {
            network,
            smoothness,
            cutoff: marginal_cutoff(p_dry, Dof::Infinite)?,
            normals: blocks.concat(),
            reps,
        })
    }

    pub fn psi(&self, alpha: f64) -> Result<MatchTargets> {
        let matern = MaternSpec {
            smoothness: self.smoothness,
            range: alpha,
            scale: 1.0,
        };
        matern.validate()?;
        let p = self.network.len();
        let m = crate::covariance::coherence_matrix(1.0, self.network, &matern);
        let l = linalg::cholesky_psd(&m, p, 1e-10)?;
        let chunk = 4096;
        let counts = par::map_indexed(self.reps.div_ceil(chunk), |c| {
            let mut z = vec![0.0; p];
            let (mut none, mut all) = (0usize, 0usize);
            for r in c * chunk..((c + 1) * chunk).min(self.reps) {
                linalg::lower_mul(&l, p, &self.normals[r * p..(r + 1) * p], &mut z);
                let wet = z.iter().filter(|&&v| v > self.cutoff).count();
                none += usize::from(wet == 0);
                all += usize::from(wet == p);
            }
            (none, all)
        });
        let (none, all) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        Ok(MatchTargets {
            psi_none: none as f64 / self.reps as f64,
            psi_all: all as f64 / self.reps as f64,
        })
    }
}

fn mismatch(psi: &MatchTargets, t: &MatchTargets, floor: f64) -> f64 {
    let term = |v: f64, target: f64| {
        let q = target.clamp(floor, 1.0 - floor);
        (v - target) * (v - target) / (q * (1.0 - q))
    };
    term(psi.psi_none, t.psi_none) + term(psi.psi_all, t.psi_all)
}

/// Range of a Gaussian field whose `ψ(0)` and `ψ(p)` match `targets`: a
/// log-spaced scan over the bounds followed by golden-section refinement
/// around the best scan point.
pub fn match_grf_range(
    network: &GaugeNetwork,
    smoothness: f64,
    p_dry: f64,
    targets: MatchTargets,
    options: &MatchOptions,
) -> Result<MatchResult> {
    let (lo, hi) = options.bounds;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(invalid("bounds", "need 0 < lower < upper"));
    }
    if options.grid_points < 3 {
        return Err(invalid("grid_points", "need at least 3"));
    }
    let est = SpatialPsiEstimator::new(network, smoothness, p_dry, options.mc_budget, options.seed)?;
    let floor = 1.0 / options.mc_budget as f64;
    let objective = |a: f64| -> Result<(f64, MatchTargets)> {
        let psi = est.psi(a)?;
        Ok((mismatch(&psi, &targets, floor), psi))
    };
    let n = options.grid_points;
    let grid: Vec<f64> = (0..n)
        .map(|k| lo * libm::pow(hi / lo, k as f64 / (n - 1) as f64))
        .collect();
    let mut vals = Vec::with_capacity(n);
    for &a in &grid {
        vals.push(objective(a)?.0);
    }
    let best = (0..n).fold(0, |b, k| if vals[k] < vals[b] { k } else { b });
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let g = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = objective(c)?.0;
    let mut fd = objective(d)?.0;
    for _ in 0..40 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d)?.0;
        }
    }
    let mut alpha = if fc <= fd { c } else { d };
    let (mut obj, mut psi) = objective(alpha)?;
    if vals[best] < obj {
        alpha = grid[best];
        (obj, psi) = objective(alpha)?;
    }
    let at_boundary = (best == 0 || best == n - 1) && (alpha == lo || alpha == hi || vals[best] <= obj);
    Ok(MatchResult {
        alpha,
        objective: obj,
        psi_none: psi.psi_none,
        psi_all: psi.psi_all,
        at_boundary,
    })
}

/// `ψ(0)`, `ψ(p)` of a thresholded spatial tRF estimated from `reps`
/// replications.
pub fn spatial_targets(
    network: &GaugeNetwork,
    matern: &MaternSpec,
    nu: Dof,
    p_dry: f64,
    reps: usize,
    seed: u64,
) -> Result<MatchTargets> {
    let y = crate::simulation::simulate_spatial_trf(network, matern, nu, reps, seed)?;
    let c = marginal_cutoff(p_dry, nu)?;
    let occ = threshold_values(&y, Cutoff::Scalar(c))?;
    let psi = crate::stats::simultaneous_rain_pmf(&occ);
    Ok(MatchTargets {
        psi_none: psi.psi[0],
        psi_all: psi.psi[network.len()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::Site;

    fn network() -> GaugeNetwork {
        let pts = [(0.1, 0.2), (0.8, 0.1), (0.5, 0.5), (0.2, 0.9), (0.9, 0.8), (0.4, 0.3)];
        GaugeNetwork::from_planar(
            pts.iter()
                .enumerate()
                .map(|(i, &(x, y))| Site::new(alloc::format!("g{i}"), y, x))
                .collect(),
        )
        .unwrap()
    }

    fn spec(obs: CondProbTable, m: usize) -> CriterionSpec {
        CriterionSpec {
            network: network(),
            obs,
            n_steps: 300,
            grid: TimeGrid::default(),
            cov: SpaceTimeCovSpec::default(),
            alpha_u_units: ScalingRange::FractionOfHorizon(0.0),
            cutoff: CutoffRule::Marginal { p_dry: 0.9 },
            replications: m,
            seed_base: 17,
        }
    }

    fn truth() -> Theta {
        Theta {
            alpha: 0.5,
            beta: 0.3,
            alpha_u: 0.1,
            nu: Dof::Finite(3),
        }
    }

    fn observed(theta: &Theta) -> CondProbTable {
        let dummy = cond_prob_table(&SiteSeries::filled(6, 2, false), &network()).unwrap();
        simulate_tables(theta, &spec(dummy, 1), 1, 99).unwrap().remove(0)
    }

    #[test]
    fn zero_at_generating_seed() {
        let t = truth();
        let mut s = spec(observed(&t), 1);
        s.obs = simulate_tables(&t, &s, 1, s.seed_base).unwrap().remove(0);
        assert_eq!(criterion(&t, &s).unwrap().value, 0.0);
    }

    #[test]
    fn deterministic_and_nonnegative() {
        let t = truth();
        let s = spec(observed(&t), 4);
        let a = criterion(&t, &s).unwrap();
        assert_eq!(a, criterion(&t, &s).unwrap());
        assert!(a.value >= 0.0);
    }

    #[test]
    fn truth_beats_doubled_range() {
        let t = truth();
        let far = Theta { alpha: 1.0, ..t };
        let mut wins = 0;
        for k in 0..20u64 {
            let mut s = spec(observed(&t), 10);
            s.n_steps = 1000;
            s.seed_base = 1000 + k;
            s.obs = simulate_tables(&t, &s, 1, 5000 + k).unwrap().remove(0);
            if criterion(&t, &s).unwrap().value < criterion(&far, &s).unwrap().value {
                wins += 1;
            }
        }
        assert!(wins >= 15, "{wins}");
    }

    #[test]
    fn terms_skip_unavailable_cells() {
        let net = network();
        let dry = cond_prob_table(&SiteSeries::filled(6, 10, false), &net).unwrap();
        // rain block has no term anywhere; the dry block is identical
        assert_eq!(criterion_terms(&dry, &dry), Some(0.0));
        let wet = cond_prob_table(&SiteSeries::filled(6, 10, true), &net).unwrap();
        assert_eq!(criterion_terms(&dry, &wet), None);
    }

    #[test]
    fn psi_estimator_matches_spatial_sampler() {
        let net = network();
        let est = SpatialPsiEstimator::new(&net, 1.0, 0.9, 3000, 5).unwrap();
        let direct = spatial_targets(&net, &MaternSpec::whittle(0.4), Dof::Infinite, 0.9, 3000, 5).unwrap();
        assert_eq!(est.psi(0.4).unwrap(), direct);
    }

    #[test]
    fn self_matching_recovers_range() {
        let net = network();
        let targets = spatial_targets(&net, &MaternSpec::whittle(0.7), Dof::Infinite, 0.9, 100_000, 3).unwrap();
        let r = match_grf_range(
            &net,
            1.0,
            0.9,
            targets,
            &MatchOptions {
                mc_budget: 100_000,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.alpha - 0.7).abs() < 0.02, "{r:?}");
        assert!(!r.at_boundary);
    }
}
