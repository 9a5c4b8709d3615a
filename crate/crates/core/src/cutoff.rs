//! Seasonal occurrence probability by harmonic logistic regression, and the
//! cutoff surface it implies.
//!
//! The linear predictor is a per-site intercept plus `H` hour-of-day
//! harmonics with period `T = 24`. Steps inside one clock hour share the same
//! covariates, so the fit runs on binomial counts grouped by (site, hour).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::covariance::Dof;
use crate::error::{invalid, Error, Result};
use crate::field::{SiteSeries, TimeGrid};
use crate::gauge::OccurrenceField;
use crate::linalg;
use crate::par;
use crate::simulation::marginal_cutoff;

pub const HOURS_PER_DAY: usize = 24;
const MAX_ITER: usize = 100;
const REL_TOL: f64 = 1e-9;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffModel {
    pub intercepts: Vec<f64>,
    /// `β_{1j}`, `j = 1..=H`
    pub cos: Vec<f64>,
    /// `β_{2j}`, `j = 1..=H`
    pub sin: Vec<f64>,
    pub period: f64,
    /// Degrees of freedom used when the model is turned into cutoffs.
    pub nu_ref: Dof,
}

impl CutoffModel {
    pub fn harmonics(&self) -> usize {
        self.cos.len()
    }

    pub fn sites(&self) -> usize {
        self.intercepts.len()
    }

    /// Logit of the wet probability at `site` and clock hour `hour` (1..=24).
    pub fn logit(&self, site: usize, hour: u32) -> f64 {
        let mut eta = self.intercepts[site];
        for j in 0..self.harmonics() {
            let arg = 2.0 * PI * (j + 1) as f64 * f64::from(hour) / self.period;
            eta += self.cos[j] * libm::cos(arg) + self.sin[j] * libm::sin(arg);
        }
        eta
    }

    pub fn wet_probability(&self, site: usize, hour: u32) -> f64 {
        logistic(self.logit(site, hour))
    }

    /// Parameters in design-column order: intercepts, then `(cos_j, sin_j)`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = self.intercepts.clone();
        for j in 0..self.harmonics() {
            v.push(self.cos[j]);
            v.push(self.sin[j]);
        }
        v
    }

    fn from_coefficients(p: usize, h: usize, beta: &[f64]) -> Self {
        Self {
            intercepts: beta[..p].to_vec(),
            cos: (0..h).map(|j| beta[p + 2 * j]).collect(),
            sin: (0..h).map(|j| beta[p + 2 * j + 1]).collect(),
            period: HOURS_PER_DAY as f64,
            nu_ref: Dof::Infinite,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: CutoffModel,
    pub loglik: f64,
    /// Asymptotic standard errors in [`CutoffModel::coefficients`] order.
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    /// The weighted normal equations needed the diagonal ridge.
    pub ridge_used: bool,
}

impl LogisticFit {
    pub fn aic(&self) -> f64 {
        2.0 * self.model.coefficients().len() as f64 - 2.0 * self.loglik
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Binomial counts by (site, hour).
struct Grouped {
    p: usize,
    trials: Vec<f64>,
    wet: Vec<f64>,
}

fn group(occ: &OccurrenceField) -> Grouped {
    let p = occ.occ.sites();
    let mut trials = vec![0.0; p * HOURS_PER_DAY];
    let mut wet = vec![0.0; p * HOURS_PER_DAY];
    for t in 0..occ.occ.steps() {
        let h = occ.grid.hour_of_day(t) as usize - 1;
        for i in 0..p {
            trials[i * HOURS_PER_DAY + h] += 1.0;
            if occ.occ.get(i, t) {
                wet[i * HOURS_PER_DAY + h] += 1.0;
            }
        }
    }
    Grouped { p, trials, wet }
}

fn design_row(p: usize, h: usize, site: usize, hour: usize, row: &mut [f64]) {
    row.iter_mut().for_each(|v| *v = 0.0);
    row[site] = 1.0;
    for j in 0..h {
        let arg = 2.0 * PI * (j + 1) as f64 * (hour + 1) as f64 / HOURS_PER_DAY as f64;
        row[p + 2 * j] = libm::cos(arg);
        row[p + 2 * j + 1] = libm::sin(arg);
    }
}

struct Irls<'a> {
    g: &'a Grouped,
    h: usize,
    k: usize,
    rows: Vec<f64>,
}

impl<'a> Irls<'a> {
    fn new(g: &'a Grouped, h: usize) -> Self {
        let k = g.p + 2 * h;
        let mut rows = vec![0.0; g.p * HOURS_PER_DAY * k];
        for i in 0..g.p {
            for hour in 0..HOURS_PER_DAY {
                let r = i * HOURS_PER_DAY + hour;
                design_row(g.p, h, i, hour, &mut rows[r * k..(r + 1) * k]);
            }
        }
        Self { g, h, k, rows }
    }

    fn eta(&self, beta: &[f64], r: usize) -> f64 {
        self.rows[r * self.k..(r + 1) * self.k]
            .iter()
            .zip(beta)
            .map(|(x, b)| x * b)
            .sum()
    }

    fn loglik(&self, beta: &[f64]) -> f64 {
        (0..self.g.trials.len())
            .filter(|&r| self.g.trials[r] > 0.0)
            .map(|r| {
                let e = self.eta(beta, r);
                self.g.wet[r] * e - self.g.trials[r] * log1p_exp(e)
            })
            .sum()
    }

    /// Information matrix `XᵀWX` and score `Xᵀ(y − nμ)`.
    fn information(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.k;
        let mut info = vec![0.0; k * k];
        let mut score = vec![0.0; k];
        for r in 0..self.g.trials.len() {
            let n = self.g.trials[r];
            if n == 0.0 {
                continue;
            }
            let mu = logistic(self.eta(beta, r));
            let w = n * mu * (1.0 - mu);
            let resid = self.g.wet[r] - n * mu;
            let x = &self.rows[r * k..(r + 1) * k];
            for a in 0..k {
                if x[a] == 0.0 {
                    continue;
                }
                score[a] += x[a] * resid;
                for b in 0..=a {
                    info[a * k + b] += w * x[a] * x[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[b * k + a] = info[a * k + b];
            }
        }
        (info, score)
    }

    /// Cholesky of the information, with a ridge when it is singular.
    fn factor(&self, mut info: Vec<f64>) -> Result<(Vec<f64>, bool)> {
        match linalg::cholesky(&info, self.k) {
            Ok(l) => Ok((l, false)),
            Err(_) => {
                for a in 0..self.k {
                    info[a * self.k + a] += RIDGE;
                }
                Ok((linalg::cholesky(&info, self.k)?, true))
            }
        }
    }
}

fn check_separation(g: &Grouped) -> Result<()> {
    for i in 0..g.p {
        let range = i * HOURS_PER_DAY..(i + 1) * HOURS_PER_DAY;
        let n: f64 = g.trials[range.clone()].iter().sum();
        let y: f64 = g.wet[range].iter().sum();
        if n == 0.0 {
            return Err(Error::Empty("occurrence series has no time steps"));
        }
        if y == 0.0 || y == n {
            let state = if y == 0.0 { "never wet" } else { "always wet" };
            return Err(Error::Separation {
                site: i,
                pattern: format!("site is {state} in all {n} steps; its intercept is unbounded"),
            });
        }
    }
    Ok(())
}

/// Maximum-likelihood fit of the harmonic logistic model of order `h`.
pub fn fit_logistic_harmonics(occ: &OccurrenceField, h: usize) -> Result<LogisticFit> {
    if occ.occ.steps() == 0 {
        return Err(Error::Empty("occurrence series has no time steps"));
    }
    if 2 * h >= HOURS_PER_DAY {
        return Err(invalid("H", "harmonic order must be below 12 for a 24-hour period"));
    }
    let g = group(occ);
    check_separation(&g)?;
    let irls = Irls::new(&g, h);
    let k = irls.k;
    let mut beta = vec![0.0; k];
    for i in 0..g.p {
        let range = i * HOURS_PER_DAY..(i + 1) * HOURS_PER_DAY;
        let q = g.wet[range.clone()].iter().sum::<f64>() / g.trials[range].iter().sum::<f64>();
        beta[i] = libm::log(q / (1.0 - q));
    }
    let mut ll = irls.loglik(&beta);
    let mut trace = vec![ll];
    let mut ridge_used = false;
    for iter in 1..=MAX_ITER {
        let (info, score) = irls.information(&beta);
        let (l, ridged) = irls.factor(info)?;
        ridge_used |= ridged;
        let mut step = score;
        linalg::cholesky_solve(&l, k, &mut step);
        // Newton step with halving so the log-likelihood never drops
        let mut scale = 1.0;
        let mut next;
        let mut ll_next;
        loop {
            next = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect::<Vec<_>>();
            ll_next = irls.loglik(&next);
            if ll_next >= ll || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let rel = libm::fabs(ll_next - ll) / (libm::fabs(ll) + 1e-300);
        beta = next;
        ll = ll_next;
        trace.push(ll);
        if rel < REL_TOL {
            let (info, _) = irls.information(&beta);
            let (l, ridged) = irls.factor(info)?;
            ridge_used |= ridged;
            let std_errors = linalg::inverse_diagonal(&l, k)
                .into_iter()
                .map(libm::sqrt)
                .collect();
            return Ok(LogisticFit {
                model: CutoffModel::from_coefficients(g.p, irls.h, &beta),
                loglik: ll,
                std_errors,
                iterations: iter,
                ridge_used,
            });
        }
    }
    let tail = trace.len().saturating_sub(5);
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        trace: trace[tail..].to_vec(),
    })
}

/// AIC comparison over `H = 0..=h_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSelection {
    pub best: LogisticFit,
    /// AIC for each `H`, `None` where the fit failed.
    pub aic: Vec<Option<f64>>,
    pub failures: Vec<(usize, Error)>,
}

impl HarmonicSelection {
    pub fn order(&self) -> usize {
        self.best.model.harmonics()
    }
}

/// Fits every order up to `h_max` and keeps the smallest AIC, preferring
/// the smaller order on ties.
pub fn select_h(occ: &OccurrenceField, h_max: usize) -> Result<HarmonicSelection> {
    let fits = par::map_indexed(h_max + 1, |h| fit_logistic_harmonics(occ, h));
    let mut best: Option<LogisticFit> = None;
    let mut aic = Vec::with_capacity(fits.len());
    let mut failures = Vec::new();
    for (h, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => {
                let a = f.aic();
                aic.push(Some(a));
                if best.as_ref().is_none_or(|b| a < b.aic()) {
                    best = Some(f);
                }
            }
            Err(e) => {
                aic.push(None);
                failures.push((h, e));
            }
        }
    }
    match best {
        Some(best) => Ok(HarmonicSelection {
            best,
            aic,
            failures,
        }),
        None => match failures.into_iter().next() {
            Some((_, e @ Error::Separation { .. })) => Err(e),
            _ => Err(Error::AllFitsFailed),
        },
    }
}

/// Fitted wet probability for every site and step of `grid`.
pub fn wet_probability_surface(model: &CutoffModel, grid: TimeGrid, n_steps: usize) -> SiteSeries<f64> {
    let p = model.sites();
    let by_hour: Vec<f64> = (0..p)
        .flat_map(|i| (1..=HOURS_PER_DAY as u32).map(move |h| (i, h)))
        .map(|(i, h)| model.wet_probability(i, h))
        .collect();
    let mut out = SiteSeries::filled(p, n_steps, 0.0);
    for t in 0..n_steps {
        let h = grid.hour_of_day(t) as usize - 1;
        for i in 0..p {
            out.set(i, t, by_hour[i * HOURS_PER_DAY + h]);
        }
    }
    out
}

/// Site- and time-varying cutoffs `c(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSurface {
    pub c: SiteSeries<f64>,
}

/// `c(x, t) = Q_ν(1 − p̂(x, t))`.
pub fn cutoff_surface(model: &CutoffModel, grid: TimeGrid, n_steps: usize, nu: Dof) -> Result<CutoffSurface> {
    let p = model.sites();
    let mut by_hour = vec![0.0; p * HOURS_PER_DAY];
    for i in 0..p {
        for h in 0..HOURS_PER_DAY {
            let q = model.wet_probability(i, h as u32 + 1);
            by_hour[i * HOURS_PER_DAY + h] = marginal_cutoff(1.0 - q, nu)?;
        }
    }
    let mut c = SiteSeries::filled(p, n_steps, 0.0);
    for t in 0..n_steps {
        let h = grid.hour_of_day(t) as usize - 1;
        for i in 0..p {
            c.set(i, t, by_hour[i * HOURS_PER_DAY + h]);
        }
    }
    Ok(CutoffSurface { c })
}
