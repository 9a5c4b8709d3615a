//! Occurrence summaries: conditional probabilities on nearest-neighbour sets,
//! the distribution of the number of wet sites, indicator correlations and
//! spell lengths.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::SiteSeries;
use crate::gauge::GaugeNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OccKind {
    Dry,
    Rain,
}

/// `φ_D(i, j)` and `φ_R(i, j)` for `j = 0..p-1`, with the number of time
/// steps in each conditioning set. Empty conditioning sets are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondProbTable {
    p: usize,
    phi_d: Vec<Option<f64>>,
    phi_r: Vec<Option<f64>>,
    counts_d: Vec<usize>,
    counts_r: Vec<usize>,
}

impl CondProbTable {
    pub fn sites(&self) -> usize {
        self.p
    }

    /// Number of `j` values, `0..p-1`.
    pub fn orders(&self) -> usize {
        self.p
    }

    pub fn phi(&self, kind: OccKind, i: usize, j: usize) -> Option<f64> {
        match kind {
            OccKind::Dry => self.phi_d[i * self.p + j],
            OccKind::Rain => self.phi_r[i * self.p + j],
        }
    }

    pub fn phi_d(&self, i: usize, j: usize) -> Option<f64> {
        self.phi(OccKind::Dry, i, j)
    }

    pub fn phi_r(&self, i: usize, j: usize) -> Option<f64> {
        self.phi(OccKind::Rain, i, j)
    }

    pub fn count(&self, kind: OccKind, i: usize, j: usize) -> usize {
        match kind {
            OccKind::Dry => self.counts_d[i * self.p + j],
            OccKind::Rain => self.counts_r[i * self.p + j],
        }
    }

    pub fn available(&self, kind: OccKind, i: usize, j: usize) -> bool {
        self.phi(kind, i, j).is_some()
    }

    /// Per-site values at order `j`.
    pub fn column(&self, kind: OccKind, j: usize) -> Vec<Option<f64>> {
        (0..self.p).map(|i| self.phi(kind, i, j)).collect()
    }

    /// Number of sites whose value is available at each `j`.
    pub fn available_counts(&self, kind: OccKind) -> Vec<usize> {
        (0..self.p)
            .map(|j| (0..self.p).filter(|&i| self.available(kind, i, j)).count())
            .collect()
    }

    /// Number of sites whose value equals one at each `j`.
    pub fn ones_counts(&self, kind: OccKind) -> Vec<usize> {
        (0..self.p)
            .map(|j| {
                (0..self.p)
                    .filter(|&i| self.phi(kind, i, j) == Some(1.0))
                    .count()
            })
            .collect()
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Conditional dry/rain probability table on the network's nearest-neighbour
/// orderings.
pub fn cond_prob_table(occ: &SiteSeries<bool>, network: &GaugeNetwork) -> Result<CondProbTable> {
    let p = occ.sites();
    if p != network.len() {
        return Err(Error::DimensionMismatch {
            expected: (network.len(), occ.steps()),
            got: occ.shape(),
        });
    }
    if p < 2 {
        return Err(Error::TooFewSites { needed: 2, got: p });
    }
    let n = occ.steps();
    let mut phi_d = vec![None; p * p];
    let mut phi_r = vec![None; p * p];
    let mut counts_d = vec![0; p * p];
    let mut counts_r = vec![0; p * p];
    // hist[k]: steps whose first k neighbours (and not k+1) share the state
    let mut hist_d = vec![0usize; p];
    let mut hist_d_hit = vec![0usize; p];
    let mut hist_r = vec![0usize; p];
    let mut hist_r_hit = vec![0usize; p];
    for i in 0..p {
        hist_d.iter_mut().for_each(|v| *v = 0);
        hist_d_hit.iter_mut().for_each(|v| *v = 0);
        hist_r.iter_mut().for_each(|v| *v = 0);
        hist_r_hit.iter_mut().for_each(|v| *v = 0);
        let nb = network.neighbors(i);
        let own = occ.row(i);
        for t in 0..n {
            let first = occ.get(nb[0], t);
            let mut run = 1;
            while run < nb.len() && occ.get(nb[run], t) == first {
                run += 1;
            }
            // the neighbours agreeing on the opposite state contribute j = 0 only
            if first {
                hist_r[run] += 1;
                hist_d[0] += 1;
                if own[t] {
                    hist_r_hit[run] += 1;
                } else {
                    hist_d_hit[0] += 1;
                }
            } else {
                hist_d[run] += 1;
                hist_r[0] += 1;
                if own[t] {
                    hist_r_hit[0] += 1;
                } else {
                    hist_d_hit[run] += 1;
                }
            }
        }
        let mut den_d = 0;
        let mut num_d = 0;
        let mut den_r = 0;
        let mut num_r = 0;
        for j in (0..p).rev() {
            den_d += hist_d[j];
            num_d += hist_d_hit[j];
            den_r += hist_r[j];
            num_r += hist_r_hit[j];
            let idx = i * p + j;
            counts_d[idx] = den_d;
            counts_r[idx] = den_r;
            phi_d[idx] = ratio(num_d, den_d);
            phi_r[idx] = ratio(num_r, den_r);
        }
        debug_assert_eq!(counts_d[i * p], n);
        // keep φ_D(i,0) + φ_R(i,0) = 1 exact in floating point
        phi_r[i * p] = phi_d[i * p].map(|d| 1.0 - d);
    }
    Ok(CondProbTable {
        p,
        phi_d,
        phi_r,
        counts_d,
        counts_r,
    })
}

/// Fraction of time steps with exactly `j` wet sites, `j = 0..=p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimultaneousRainPmf {
    pub psi: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn simultaneous_rain_pmf(occ: &SiteSeries<bool>) -> SimultaneousRainPmf {
    let p = occ.sites();
    let n = occ.steps();
    let mut counts = vec![0usize; p + 1];
    for t in 0..n {
        let wet = (0..p).filter(|&i| occ.get(i, t)).count();
        counts[wet] += 1;
    }
    let psi = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    SimultaneousRainPmf { psi, counts }
}

/// Correlations of the dry and rain indicators at two locations given
/// `p_D`, `p_{D|D}` and `p_{R|R}`.
pub fn indicator_correlations(p_d: f64, p_dd: f64, p_rr: f64) -> Result<(f64, f64)> {
    for (name, v) in [("p_d", p_d), ("p_dd", p_dd), ("p_rr", p_rr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(crate::error::invalid(name, "must lie in [0, 1]"));
        }
    }
    if p_d == 0.0 || p_d == 1.0 {
        return Err(Error::DegenerateMarginal(p_d));
    }
    Ok(((p_dd - p_d) / (1.0 - p_d), (p_rr - (1.0 - p_d)) / p_d))
}

/// `P(b dry | a dry)` and `P(b wet | a wet)` over time.
pub fn pair_conditionals(occ: &SiteSeries<bool>, a: usize, b: usize) -> (Option<f64>, Option<f64>) {
    let (ra, rb) = (occ.row(a), occ.row(b));
    let mut dry = (0, 0);
    let mut wet = (0, 0);
    for (&x, &y) in ra.iter().zip(rb) {
        if x {
            wet.1 += 1;
            wet.0 += usize::from(y);
        } else {
            dry.1 += 1;
            dry.0 += usize::from(!y);
        }
    }
    (ratio(dry.0, dry.1), ratio(wet.0, wet.1))
}

/// Per-site histograms of maximal run lengths, keyed by length in steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpellSummary {
    pub dry_runs: Vec<BTreeMap<usize, usize>>,
    pub wet_runs: Vec<BTreeMap<usize, usize>>,
}

/// Runs are counted within each series; nothing is merged across inputs.
pub fn spell_summary(occ: &SiteSeries<bool>) -> SpellSummary {
    let mut out = SpellSummary::default();
    for row in occ.rows() {
        let mut dry = BTreeMap::new();
        let mut wet = BTreeMap::new();
        let mut start = 0;
        for t in 1..=row.len() {
            if t == row.len() || row[t] != row[start] {
                let hist = if row[start] { &mut wet } else { &mut dry };
                *hist.entry(t - start).or_insert(0) += 1;
                start = t;
            }
        }
        out.dry_runs.push(dry);
        out.wet_runs.push(wet);
    }
    out
}

/// Median of the values; even counts average the two central values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Across-site median at each `j`, `None` where no site is available.
pub fn median_curve(table: &CondProbTable, kind: OccKind) -> Vec<Option<f64>> {
    (0..table.orders())
        .map(|j| {
            let mut v: Vec<f64> = table.column(kind, j).into_iter().flatten().collect();
            median(&mut v)
        })
        .collect()
}
