//! Modified band depth and functional boxplot summaries for ensembles of
//! curves on a shared grid, with possibly missing points.
//!
//! Depth is computed from integer counts: for curve `f`, over the grid
//! points where `f` is available, the number of curve pairs whose band
//! contains `f` and the number of pairs available there. The depth is their
//! ratio. With no missing points this is the usual modified band depth with
//! bands from pairs of curves.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveEnsemble {
    n_curves: usize,
    n_points: usize,
    values: Vec<f64>,
    available: Vec<bool>,
}

impl CurveEnsemble {
    /// One row per curve; `None` (or NaN) marks a missing point.
    pub fn new(curves: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_points = curves.first().map_or(0, Vec::len);
        if curves.iter().any(|c| c.len() != n_points) {
            return Err(invalid("curves", "all curves need the same number of points"));
        }
        let mut values = Vec::with_capacity(curves.len() * n_points);
        let mut available = Vec::with_capacity(curves.len() * n_points);
        for v in curves.iter().flatten() {
            let ok = v.is_some_and(|x| !x.is_nan());
            values.push(if ok { v.unwrap() } else { 0.0 });
            available.push(ok);
        }
        Ok(Self {
            n_curves: curves.len(),
            n_points,
            values,
            available,
        })
    }

    pub fn from_complete(curves: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Option<f64>>> = curves.iter().map(|c| c.iter().map(|&v| Some(v)).collect()).collect();
        Self::new(&rows)
    }

    pub fn n_curves(&self) -> usize {
        self.n_curves
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn get(&self, curve: usize, point: usize) -> Option<f64> {
        let k = curve * self.n_points + point;
        self.available[k].then_some(self.values[k])
    }

    fn check(&self) -> Result<()> {
        if self.n_curves < 3 {
            return Err(Error::TooFewSites {
                needed: 3,
                got: self.n_curves,
            });
        }
        Ok(())
    }
}

/// Band counts per curve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandCounts {
    /// Pairs whose band contains the curve, summed over its available points.
    pub contained: Vec<u64>,
    /// Pairs of curves available at those points, summed the same way.
    pub pairs: Vec<u64>,
}

impl BandCounts {
    /// Depth per curve; `None` for curves without a single comparable point.
    pub fn depths(&self) -> Vec<Option<f64>> {
        self.contained
            .iter()
            .zip(&self.pairs)
            .map(|(&c, &p)| (p > 0).then(|| c as f64 / p as f64))
            .collect()
    }
}

fn choose2(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

/// Rank-based counts: at each point, `C(m,2) − C(below,2) − C(above,2)` pairs
/// contain the curve, `m` being the number of curves available there.
pub fn band_counts(ensemble: &CurveEnsemble) -> Result<BandCounts> {
    ensemble.check()?;
    let n = ensemble.n_curves;
    let mut contained = vec![0u64; n];
    let mut pairs = vec![0u64; n];
    let mut sorted = Vec::with_capacity(n);
    for t in 0..ensemble.n_points {
        sorted.clear();
        sorted.extend((0..n).filter_map(|i| ensemble.get(i, t)));
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() as u64;
        let all = choose2(m);
        for i in 0..n {
            if let Some(v) = ensemble.get(i, t) {
                let below = sorted.partition_point(|&x| x < v) as u64;
                let above = m - sorted.partition_point(|&x| x <= v) as u64;
                contained[i] += all - choose2(below) - choose2(above);
                pairs[i] += all;
            }
        }
    }
    Ok(BandCounts { contained, pairs })
}

/// Reference enumeration over every pair of curves and every point.
pub fn band_counts_naive(ensemble: &CurveEnsemble) -> Result<BandCounts> {
    ensemble.check()?;
    let n = ensemble.n_curves;
    let mut contained = vec![0u64; n];
    let mut pairs = vec![0u64; n];
    for f in 0..n {
        for g in 0..n {
            for h in g + 1..n {
                for t in 0..ensemble.n_points {
                    if let (Some(x), Some(a), Some(b)) = (ensemble.get(f, t), ensemble.get(g, t), ensemble.get(h, t)) {
                        pairs[f] += 1;
                        if a.min(b) <= x && x <= a.max(b) {
                            contained[f] += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(BandCounts { contained, pairs })
}

pub fn modified_band_depth(ensemble: &CurveEnsemble) -> Result<Vec<Option<f64>>> {
    Ok(band_counts(ensemble)?.depths())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FBoxSummary {
    pub depth: Vec<Option<f64>>,
    pub median_index: usize,
    /// Curves in the central region, deepest first.
    pub central_indices: Vec<usize>,
    /// Pointwise `(lower, upper)` of the central region.
    pub central50: Vec<Option<(f64, f64)>>,
    /// Pointwise `(min, max)` over all curves.
    pub envelope: Vec<Option<(f64, f64)>>,
    /// Curves left out because no depth could be computed.
    pub excluded: Vec<usize>,
}

impl FBoxSummary {
    /// Whether each point of `curve` lies inside the central region.
    pub fn central_containment(&self, curve: &[Option<f64>]) -> Vec<Option<bool>> {
        self.central50
            .iter()
            .zip(curve)
            .map(|(band, v)| match (band, v) {
                (Some((lo, hi)), Some(x)) => Some(*lo <= *x && *x <= *hi),
                _ => None,
            })
            .collect()
    }
}

fn pointwise_range(ensemble: &CurveEnsemble, curves: &[usize]) -> Vec<Option<(f64, f64)>> {
    (0..ensemble.n_points)
        .map(|t| {
            curves
                .iter()
                .filter_map(|&i| ensemble.get(i, t))
                .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
                })
        })
        .collect()
}

/// Median (deepest curve, lower index on ties), the central region of the
/// `⌈n/2⌉` deepest curves and the envelope of all curves.
pub fn fbox_summary(ensemble: &CurveEnsemble) -> Result<FBoxSummary> {
    let depth = modified_band_depth(ensemble)?;
    let mut order: Vec<usize> = (0..ensemble.n_curves).filter(|&i| depth[i].is_some()).collect();
    let excluded: Vec<usize> = (0..ensemble.n_curves).filter(|&i| depth[i].is_none()).collect();
    if order.is_empty() {
        return Err(Error::Empty("no curve has an available point"));
    }
    // stable sort: equal depths keep ascending index
    order.sort_by(|&a, &b| depth[b].unwrap().total_cmp(&depth[a].unwrap()));
    let keep = order.len().div_ceil(2);
    let central_indices = order[..keep].to_vec();
    let all: Vec<usize> = (0..ensemble.n_curves).collect();
    Ok(FBoxSummary {
        median_index: order[0],
        central50: pointwise_range(ensemble, &central_indices),
        envelope: pointwise_range(ensemble, &all),
        central_indices,
        depth,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constants(levels: &[f64], points: usize) -> CurveEnsemble {
        CurveEnsemble::from_complete(&levels.iter().map(|&l| vec![l; points]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn middle_constant_is_deepest() {
        let d = modified_band_depth(&constants(&[0.0, 0.5, 1.0], 4)).unwrap();
        assert!(d[1] > d[0] && d[1] > d[2]);
    }

    #[test]
    fn duplicate_median_stays_deepest() {
        let e = constants(&[0.0, 0.5, 1.0, 0.5], 4);
        let s = fbox_summary(&e).unwrap();
        assert_eq!(s.median_index, 1);
        assert_eq!(s.depth[1], s.depth[3]);
    }

    #[test]
    fn five_constants() {
        let e = constants(&[0.0, 0.25, 0.5, 0.75, 1.0], 3);
        let s = fbox_summary(&e).unwrap();
        // pairs containing level k of 5: 10 - C(k,2) - C(4-k,2)
        let expect = [4.0, 7.0, 8.0, 7.0, 4.0].map(|c| Some(c / 10.0));
        assert_eq!(s.depth, expect.to_vec());
        assert_eq!(s.median_index, 2);
        assert_eq!(s.central_indices, vec![2, 1, 3]);
        assert!(s.central50.iter().all(|b| *b == Some((0.25, 0.75))));
        assert!(s.envelope.iter().all(|b| *b == Some((0.0, 1.0))));
        let inside = s.central_containment(&[Some(0.3), Some(0.9), None]);
        assert_eq!(inside, vec![Some(true), Some(false), None]);
    }

    #[test]
    fn identical_curves_collapse_the_region() {
        let c = vec![0.1, 0.4, 0.2];
        let e = CurveEnsemble::from_complete(&[c.clone(), c.clone(), c.clone()]).unwrap();
        let s = fbox_summary(&e).unwrap();
        for (t, band) in s.central50.iter().enumerate() {
            assert_eq!(*band, Some((c[t], c[t])));
        }
    }

    #[test]
    fn curve_without_points_is_excluded() {
        let e = CurveEnsemble::new(&[
            vec![Some(0.0), Some(1.0)],
            vec![Some(0.5), Some(0.5)],
            vec![Some(1.0), Some(0.0)],
            vec![None, None],
        ])
        .unwrap();
        let s = fbox_summary(&e).unwrap();
        assert_eq!(s.excluded, vec![3]);
        assert_eq!(s.depth[3], None);
        assert!(fbox_summary(&constants(&[0.0, 1.0], 2)).is_err());
    }

    fn ensemble_strategy() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
        (3usize..12, 1usize..8).prop_flat_map(|(n, t)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::option::weighted(0.85, (0u8..6).prop_map(|v| f64::from(v) / 5.0)), t),
                n,
            )
        })
    }

    proptest! {
        #[test]
        fn fast_equals_naive(curves in ensemble_strategy()) {
            let e = CurveEnsemble::new(&curves).unwrap();
            prop_assert_eq!(band_counts(&e).unwrap(), band_counts_naive(&e).unwrap());
        }

        #[test]
        fn monotone_transform_invariance(curves in ensemble_strategy()) {
            let e = CurveEnsemble::new(&curves).unwrap();
            let warped: Vec<Vec<Option<f64>>> = curves
                .iter()
                .map(|c| c.iter().map(|v| v.map(|x| libm::exp(3.0 * x) - 7.0)).collect())
                .collect();
            let w = CurveEnsemble::new(&warped).unwrap();
            prop_assert_eq!(band_counts(&e).unwrap(), band_counts(&w).unwrap());
        }

        #[test]
        fn permutation_equivariance(curves in ensemble_strategy(), shift in 0usize..20) {
            let n = curves.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let permuted: Vec<Vec<Option<f64>>> = perm.iter().map(|&i| curves[i].clone()).collect();
            let d = modified_band_depth(&CurveEnsemble::new(&curves).unwrap()).unwrap();
            let dp = modified_band_depth(&CurveEnsemble::new(&permuted).unwrap()).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(dp[k], d[i]);
            }
        }

        #[test]
        fn central_region_inside_envelope(curves in ensemble_strategy()) {
            let e = CurveEnsemble::new(&curves).unwrap();
            if let Ok(s) = fbox_summary(&e) {
                for (c, env) in s.central50.iter().zip(&s.envelope) {
                    if let (Some((lo, hi)), Some((elo, ehi))) = (c, env) {
                        prop_assert!(elo <= lo && hi <= ehi);
                    }
                }
                for t in 0..e.n_points() {
                    if let (Some((lo, hi)), Some(m)) = (s.central50[t], e.get(s.median_index, t)) {
                        prop_assert!(lo <= m && m <= hi);
                    }
                }
            }
        }
    }
}
