//! Text formats: tip records, networks, occurrence matrices and curve tables.
//!
//! Every CSV written here starts with `#` comment lines carrying the
//! provenance; readers skip them. Timestamps are ISO-8601 UTC.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use trf_core::gauge::TipRecord;
use trf_core::{GaugeNetwork, OccurrenceField, Site, SiteSeries, TimeGrid};

use crate::bitset;
use crate::provenance::Provenance;

/// Parses an ISO-8601 timestamp into Unix seconds. Offsets are honoured;
/// timestamps without one, and bare dates, are read as UTC.
pub fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp());
    }
    bail!("cannot parse timestamp `{s}` (expected ISO-8601, e.g. 2024-06-01T00:00:00Z)")
}

pub fn format_timestamp(secs: i64) -> String {
    match DateTime::<Utc>::from_timestamp(secs, 0) {
        Some(t) => t.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => secs.to_string(),
    }
}

/// Fails with a message naming `path` when it does not exist.
pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file not found: {}", path.display());
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    require_file(path)?;
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Splits `#` comment lines off the front (and anywhere else) of a text file.
fn split_comments(text: &str) -> (Vec<&str>, String) {
    let mut comments = Vec::new();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if line.starts_with('#') {
            comments.push(line);
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    (comments, body)
}

fn csv_reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes())
}

/// Tips CSV with header `site_id,timestamp`.
pub fn read_tips(path: &Path) -> Result<Vec<TipRecord>> {
    let text = read_text(path)?;
    let (_, body) = split_comments(&text);
    let mut rdr = csv_reader(&body);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column `{name}`", path.display()))
    };
    let (si, ti) = (col("site_id")?, col("timestamp")?);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        out.push(TipRecord {
            site_id: rec[si].to_string(),
            time: parse_timestamp(&rec[ti])
                .with_context(|| format!("{}: record {}", path.display(), line + 1))?,
        });
    }
    // ingestion order does not matter for counting, but keep tips sorted per site
    out.sort_by(|a, b| a.site_id.cmp(&b.site_id).then(a.time.cmp(&b.time)));
    Ok(out)
}

/// Site list read from a network CSV, before distances are computed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub sites: Vec<Site>,
    /// Columns were `x,y` (Euclidean) instead of `lat,lon` (haversine).
    pub planar: bool,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<GaugeNetwork> {
        Ok(if self.planar {
            GaugeNetwork::from_planar(self.sites.clone())?
        } else {
            GaugeNetwork::from_coords(self.sites.clone())?
        })
    }

    /// Network with its sites reordered to `ids`.
    pub fn aligned(&self, ids: &[String]) -> Result<GaugeNetwork> {
        let sites = ids
            .iter()
            .map(|id| {
                self.sites
                    .iter()
                    .find(|s| &s.id == id)
                    .cloned()
                    .ok_or_else(|| anyhow!("site `{id}` is not in the network"))
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec {
            sites,
            planar: self.planar,
        }
        .build()
    }

    pub fn ids(&self) -> Vec<String> {
        self.sites.iter().map(|s| s.id.clone()).collect()
    }
}

/// Network CSV: `site_id,lat,lon` (degrees) or `site_id,x,y` (planar units).
pub fn read_network(path: &Path) -> Result<NetworkSpec> {
    let text = read_text(path)?;
    let (_, body) = split_comments(&text);
    let mut rdr = csv_reader(&body);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let si = find("site_id").ok_or_else(|| anyhow!("{}: missing column `site_id`", path.display()))?;
    let (planar, a, b) = match (find("lat"), find("lon"), find("x"), find("y")) {
        (Some(lat), Some(lon), _, _) => (false, lat, lon),
        (_, _, Some(x), Some(y)) => (true, y, x),
        _ => bail!("{}: need columns `lat,lon` or `x,y`", path.display()),
    };
    let mut sites = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .with_context(|| format!("{}: record {}: bad number `{}`", path.display(), line + 1, &rec[k]))
        };
        sites.push(Site::new(&rec[si], num(a)?, num(b)?));
    }
    Ok(NetworkSpec { sites, planar })
}

/// An occurrence matrix together with its site identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence {
    pub site_ids: Vec<String>,
    pub field: OccurrenceField,
}

impl Occurrence {
    /// Restricts to steps starting in `[from, to)`.
    pub fn window(&self, from: i64, to: i64) -> Result<Self> {
        let g = self.field.grid;
        let n = self.field.occ.steps();
        let ts: Vec<usize> = (0..n)
            .filter(|&t| {
                let s = g.time_of(t);
                s >= from && s < to
            })
            .collect();
        let (Some(&first), Some(&last)) = (ts.first(), ts.last()) else {
            bail!(
                "window {}..{} contains no time steps",
                format_timestamp(from),
                format_timestamp(to)
            );
        };
        let rows: Vec<Vec<bool>> = self
            .field
            .occ
            .rows()
            .map(|r| r[first..=last].to_vec())
            .collect();
        Ok(Self {
            site_ids: self.site_ids.clone(),
            field: OccurrenceField::new(
                SiteSeries::from_rows(&rows)?,
                TimeGrid::new(g.time_of(first), g.step_minutes),
            ),
        })
    }
}

/// Reads either format; the binary one is recognised by its magic bytes.
pub fn read_occurrence(path: &Path) -> Result<Occurrence> {
    require_file(path)?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(bitset::MAGIC) {
        let (occ, _) = bitset::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        return Ok(occ);
    }
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    parse_occurrence_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_occurrence_csv(text: &str) -> Result<Occurrence> {
    let (comments, body) = split_comments(text);
    let declared_step = comments.iter().find_map(|c| {
        c.trim_start_matches('#')
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("step_minutes="))
            .and_then(|v| v.parse::<u32>().ok())
    });
    let mut rdr = csv_reader(&body);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("site_id") {
        bail!("first header column must be `site_id`");
    }
    let times = headers
        .iter()
        .skip(1)
        .map(parse_timestamp)
        .collect::<Result<Vec<_>>>()?;
    if times.is_empty() {
        bail!("occurrence file has no time columns");
    }
    let step_secs = match (times.len(), declared_step) {
        (1, Some(m)) => i64::from(m) * 60,
        (1, None) => bail!("a single time column needs a `# step_minutes=` comment"),
        _ => times[1] - times[0],
    };
    if step_secs <= 0 || step_secs % 60 != 0 {
        bail!("time step of {step_secs} s is not a positive whole number of minutes");
    }
    if let Some(t) = times.windows(2).position(|w| w[1] - w[0] != step_secs) {
        bail!("time columns are not evenly spaced at column {}", t + 2);
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(anyhow!("site `{}`: occurrence value `{other}` is not 0 or 1", &rec[0])),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("occurrence file has no sites");
    }
    Ok(Occurrence {
        site_ids: ids,
        field: OccurrenceField::new(
            SiteSeries::from_rows(&rows)?,
            TimeGrid::new(times[0], (step_secs / 60) as u32),
        ),
    })
}

pub fn occurrence_csv(occ: &Occurrence, prov: &Provenance) -> String {
    let g = occ.field.grid;
    let n = occ.field.occ.steps();
    let mut s = String::new();
    s.push_str(&prov.comment_line());
    s.push('\n');
    s.push_str(&format!("# step_minutes={}\n", g.step_minutes));
    s.push_str("site_id");
    for t in 0..n {
        s.push(',');
        s.push_str(&format_timestamp(g.time_of(t)));
    }
    s.push('\n');
    for (id, row) in occ.site_ids.iter().zip(occ.field.occ.rows()) {
        s.push_str(id);
        for &w in row {
            s.push_str(if w { ",1" } else { ",0" });
        }
        s.push('\n');
    }
    s
}

/// Writes CSV when the extension is `.csv`, the bitset format otherwise.
pub fn write_occurrence(path: &Path, occ: &Occurrence, prov: &Provenance) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let bytes = if is_csv {
        occurrence_csv(occ, prov).into_bytes()
    } else {
        bitset::encode(occ, prov)
    };
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))
}

/// Formats an optional value; missing values are empty cells.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A provenance-stamped CSV table.
pub fn table_csv(prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
    format!("{}\n{body}", prov.comment_line())
}

pub fn write_table(path: &Path, prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_bytes(path, table_csv(prov, header, rows).as_bytes())
}

/// Curves table: header `curve,<label>...`, one curve per row; empty cells
/// and `NA` are missing points.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub labels: Vec<String>,
    pub names: Vec<String>,
    pub curves: Vec<Vec<Option<f64>>>,
}

pub fn read_curves(path: &Path) -> Result<CurveTable> {
    let text = read_text(path)?;
    let (_, body) = split_comments(&text);
    let mut rdr = csv_reader(&body);
    let labels: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut names = Vec::new();
    let mut curves = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != labels.len() + 1 {
            bail!("{}: curve `{}` has {} points, header has {}", path.display(), &rec[0], rec.len() - 1, labels.len());
        }
        names.push(rec[0].to_string());
        let values = rec
            .iter()
            .skip(1)
            .map(|v| match v {
                "" | "NA" | "NaN" => Ok(None),
                v => v.parse::<f64>().map(Some).map_err(|_| anyhow!("bad value `{v}`")),
            })
            .collect::<Result<Vec<_>>>()
            .with_context(|| format!("{}: curve `{}`", path.display(), &rec[0]))?;
        curves.push(values);
    }
    Ok(CurveTable {
        labels,
        names,
        curves,
    })
}

pub fn curves_csv(prov: &Provenance, table: &CurveTable) -> String {
    let mut header = vec!["curve"];
    header.extend(table.labels.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = table
        .names
        .iter()
        .zip(&table.curves)
        .map(|(n, c)| {
            let mut r = vec![n.clone()];
            r.extend(c.iter().map(|v| cell(*v)));
            r
        })
        .collect();
    table_csv(prov, &header, &rows)
}
