//! Rain gauge networks, tipping-bucket ingestion and occurrence series.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{SiteSeries, TimeGrid};

/// Rain depth of one bucket tip, mm.
pub const TIP_DEPTH_MM: f64 = 0.254;
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

impl Site {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64) -> Self {
        Self {
            id: id.into(),
            lat,
            lon,
        }
    }
}

/// Great-circle distance in km between two (lat, lon) points in degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let s1 = libm::sin(dp / 2.0);
    let s2 = libm::sin(dl / 2.0);
    let a = s1 * s1 + libm::cos(p1) * libm::cos(p2) * s2 * s2;
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(a.min(1.0)))
}

/// Sites with their pairwise distances and nearest-neighbour orderings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeNetwork {
    sites: Vec<Site>,
    dist: Vec<f64>,
    d_max: f64,
    neighbors: Vec<Vec<usize>>,
    coincident: Vec<(usize, usize)>,
}

impl GaugeNetwork {
    /// Builds a network from geographic coordinates (haversine distances).
    pub fn from_coords(sites: Vec<Site>) -> Result<Self> {
        for s in &sites {
            let ok = s.lat.is_finite()
                && s.lon.is_finite()
                && (-90.0..=90.0).contains(&s.lat)
                && (-180.0..=180.0).contains(&s.lon);
            if !ok {
                return Err(Error::InvalidCoordinate {
                    site: s.id.clone(),
                    lat: s.lat,
                    lon: s.lon,
                });
            }
        }
        Self::build(sites, |a, b| haversine_km(a.lat, a.lon, b.lat, b.lon))
    }

    /// Builds a network on a plane; `lat`/`lon` are read as `y`/`x` in
    /// arbitrary length units and distances are Euclidean.
    pub fn from_planar(sites: Vec<Site>) -> Result<Self> {
        for s in &sites {
            if !(s.lat.is_finite() && s.lon.is_finite()) {
                return Err(Error::InvalidCoordinate {
                    site: s.id.clone(),
                    lat: s.lat,
                    lon: s.lon,
                });
            }
        }
        Self::build(sites, |a, b| libm::hypot(a.lat - b.lat, a.lon - b.lon))
    }

    fn build(sites: Vec<Site>, metric: impl Fn(&Site, &Site) -> f64) -> Result<Self> {
        let p = sites.len();
        if p < 2 {
            return Err(Error::TooFewSites { needed: 2, got: p });
        }
        let mut seen = BTreeMap::new();
        for s in &sites {
            if seen.insert(s.id.as_str(), ()).is_some() {
                return Err(Error::DuplicateSite(s.id.clone()));
            }
        }
        let mut dist = vec![0.0; p * p];
        let mut coincident = Vec::new();
        for i in 0..p {
            for j in i + 1..p {
                let d = metric(&sites[i], &sites[j]);
                dist[i * p + j] = d;
                dist[j * p + i] = d;
                if d == 0.0 {
                    coincident.push((i, j));
                }
            }
        }
        let d_max = dist.iter().copied().fold(0.0, f64::max);
        let neighbors = (0..p)
            .map(|i| {
                let mut others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
                // stable sort keeps ascending index order among equal distances
                others.sort_by(|&a, &b| dist[i * p + a].total_cmp(&dist[i * p + b]));
                others
            })
            .collect();
        Ok(Self {
            sites,
            dist,
            d_max,
            neighbors,
            coincident,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Other sites ordered by distance from `i`, ties by ascending index.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Pairs of sites at zero distance.
    pub fn coincident_pairs(&self) -> &[(usize, usize)] {
        &self.coincident
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TipRecord {
    pub site_id: String,
    /// Unix seconds, UTC.
    pub time: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    /// Rain rate in mm/hr.
    pub values: SiteSeries<f64>,
    pub grid: TimeGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceField {
    pub occ: SiteSeries<bool>,
    pub grid: TimeGrid,
}

impl OccurrenceField {
    pub fn new(occ: SiteSeries<bool>, grid: TimeGrid) -> Self {
        Self { occ, grid }
    }

    /// Fraction of wet site-times.
    pub fn wet_fraction(&self) -> f64 {
        let n = self.occ.as_slice().len();
        if n == 0 {
            return 0.0;
        }
        self.occ.as_slice().iter().filter(|&&w| w).count() as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub rates: RateSeries,
    /// Tips falling outside `[from, to)`.
    pub skipped: usize,
}

/// Counts tips into half-open intervals `[start, start + step)` over
/// `[from, to)` and converts the counts to rain rates.
pub fn ingest_tips<I>(
    records: I,
    step_minutes: u32,
    from: i64,
    to: i64,
    network: &GaugeNetwork,
) -> Result<IngestReport>
where
    I: IntoIterator<Item = TipRecord>,
{
    if step_minutes == 0 {
        return Err(crate::error::invalid("step_minutes", "must be positive"));
    }
    let step_secs = i64::from(step_minutes) * 60;
    let span = to - from;
    if span <= 0 || span % step_secs != 0 {
        return Err(Error::UnevenSpan {
            span_secs: span,
            step_secs,
        });
    }
    let steps = (span / step_secs) as usize;
    let index: BTreeMap<&str, usize> = network
        .sites()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut counts = SiteSeries::filled(network.len(), steps, 0u32);
    let mut skipped = 0;
    for rec in records {
        let site = *index
            .get(rec.site_id.as_str())
            .ok_or_else(|| Error::UnknownSite(rec.site_id.clone()))?;
        if rec.time < from || rec.time >= to {
            skipped += 1;
            continue;
        }
        let t = ((rec.time - from) / step_secs) as usize;
        counts.set(site, t, counts.get(site, t) + 1);
    }
    let hours = f64::from(step_minutes) / 60.0;
    Ok(IngestReport {
        rates: RateSeries {
            values: counts.map(|c| f64::from(c) * TIP_DEPTH_MM / hours),
            grid: TimeGrid::new(from, step_minutes),
        },
        skipped,
    })
}

/// Wet wherever the rate is positive.
pub fn to_occurrence(rates: &RateSeries) -> OccurrenceField {
    OccurrenceField::new(rates.values.map(|v| v > 0.0), rates.grid)
}

/// Coarsens the time axis by `factor`: a coarse step is wet if any of its
/// fine steps is wet.
pub fn aggregate_occurrence(field: &OccurrenceField, factor: usize) -> Result<OccurrenceField> {
    if factor == 0 {
        return Err(crate::error::invalid("factor", "must be positive"));
    }
    let n = field.occ.steps();
    if n % factor != 0 {
        return Err(Error::NotDivisible {
            len: n,
            factor,
            remainder: n % factor,
        });
    }
    let coarse_n = n / factor;
    let mut out = SiteSeries::filled(field.occ.sites(), coarse_n, false);
    for i in 0..field.occ.sites() {
        let row = field.occ.row(i);
        for (t, chunk) in row.chunks_exact(factor).enumerate() {
            out.set(i, t, chunk.iter().any(|&w| w));
        }
    }
    Ok(OccurrenceField::new(
        out,
        TimeGrid::new(
            field.grid.origin,
            field.grid.step_minutes * factor as u32,
        ),
    ))
}
