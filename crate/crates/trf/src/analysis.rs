//! Tables shared by the subcommands and the pipeline. Each function returns
//! `(file name, contents)` pairs so callers decide where they land.

use anyhow::{bail, Result};
use trf_core::depth::{fbox_summary, CurveEnsemble};
use trf_core::stats::{cond_prob_table, median_curve, simultaneous_rain_pmf, spell_summary, CondProbTable, OccKind};
use trf_core::GaugeNetwork;

use crate::io::{cell, table_csv, CurveTable, Occurrence};
use crate::provenance::Provenance;

pub type Artifact = (String, String);

pub fn kind_name(kind: OccKind) -> &'static str {
    match kind {
        OccKind::Dry => "dry",
        OccKind::Rain => "rain",
    }
}

/// Statistics of one occurrence matrix; `network` must follow the
/// occurrence's site order.
pub fn stats_tables(occ: &Occurrence, network: &GaugeNetwork, prov: &Provenance, plot_data: bool) -> Result<Vec<Artifact>> {
    let table = cond_prob_table(&occ.field.occ, network)?;
    let p = table.sites();
    let ids = &occ.site_ids;
    let mut out = Vec::new();

    let mut rows = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        for j in 0..table.orders() {
            rows.push(vec![
                id.clone(),
                j.to_string(),
                cell(table.phi_d(i, j)),
                cell(table.phi_r(i, j)),
                table.count(OccKind::Dry, i, j).to_string(),
                table.count(OccKind::Rain, i, j).to_string(),
            ]);
        }
    }
    out.push((
        "cond_prob.csv".to_string(),
        table_csv(prov, &["site_id", "j", "phi_d", "phi_r", "count_d", "count_r"], &rows),
    ));

    let psi = simultaneous_rain_pmf(&occ.field.occ);
    let rows: Vec<Vec<String>> = (0..=p)
        .map(|k| vec![k.to_string(), psi.psi[k].to_string(), psi.counts[k].to_string()])
        .collect();
    out.push(("psi.csv".to_string(), table_csv(prov, &["wet_sites", "psi", "count"], &rows)));

    let spells = spell_summary(&occ.field.occ);
    let mut rows = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        for (state, hist) in [("dry", &spells.dry_runs[i]), ("wet", &spells.wet_runs[i])] {
            for (len, count) in hist {
                rows.push(vec![id.clone(), state.to_string(), len.to_string(), count.to_string()]);
            }
        }
    }
    out.push((
        "spells.csv".to_string(),
        table_csv(prov, &["site_id", "state", "length_steps", "count"], &rows),
    ));

    if plot_data {
        for kind in [OccKind::Dry, OccKind::Rain] {
            out.push((format!("plot_phi_{}.csv", kind_name(kind)), plot_series(&table, ids, kind, prov)));
        }
    }
    Ok(out)
}

fn plot_series(table: &CondProbTable, ids: &[String], kind: OccKind, prov: &Provenance) -> String {
    let mut header = vec!["j"];
    header.extend(ids.iter().map(String::as_str));
    header.extend(["median", "n_available", "n_ones"]);
    let med = median_curve(table, kind);
    let avail = table.available_counts(kind);
    let ones = table.ones_counts(kind);
    let rows: Vec<Vec<String>> = (0..table.orders())
        .map(|j| {
            let mut r = vec![j.to_string()];
            r.extend(table.column(kind, j).into_iter().map(cell));
            r.extend([cell(med[j]), avail[j].to_string(), ones[j].to_string()]);
            r
        })
        .collect();
    table_csv(prov, &header, &rows)
}

/// Across-site median curve at `j = 1..p-1`.
pub fn median_curve_from(table: &CondProbTable, kind: OccKind) -> Vec<Option<f64>> {
    median_curve(table, kind).into_iter().skip(1).collect()
}

/// One median curve per table, labelled `j = 1..p-1`.
pub fn curve_table(tables: &[CondProbTable], kind: OccKind, prefix: &str) -> CurveTable {
    let p = tables.first().map_or(0, |t| t.sites());
    CurveTable {
        labels: (1..p).map(|j| j.to_string()).collect(),
        names: (0..tables.len()).map(|k| format!("{prefix}{k}")).collect(),
        curves: tables.iter().map(|t| median_curve_from(t, kind)).collect(),
    }
}

/// Functional boxplot summary with an optional overlay curve.
pub fn fbplot_table(curves: &CurveTable, obs: Option<&[Option<f64>]>, prov: &Provenance) -> Result<String> {
    if curves.curves.is_empty() {
        bail!("curve ensemble is empty");
    }
    if let Some(o) = obs {
        if o.len() != curves.labels.len() {
            bail!("overlay curve has {} points, ensemble has {}", o.len(), curves.labels.len());
        }
    }
    let ens = CurveEnsemble::new(&curves.curves)?;
    let s = fbox_summary(&ens)?;
    let inside = obs.map(|o| s.central_containment(o));
    let rows: Vec<Vec<String>> = curves
        .labels
        .iter()
        .enumerate()
        .map(|(t, label)| {
            let (c_lo, c_hi) = split(s.central50[t]);
            let (e_lo, e_hi) = split(s.envelope[t]);
            vec![
                label.clone(),
                cell(ens.get(s.median_index, t)),
                c_lo,
                c_hi,
                e_lo,
                e_hi,
                cell(obs.and_then(|o| o[t])),
                match inside.as_ref().and_then(|v| v[t]) {
                    Some(true) => "1".to_string(),
                    Some(false) => "0".to_string(),
                    None => String::new(),
                },
            ]
        })
        .collect();
    let mut text = table_csv(
        prov,
        &["j", "median", "c50_lo", "c50_hi", "env_lo", "env_hi", "obs", "obs_in_c50"],
        &rows,
    );
    let first_line_end = text.find('\n').map_or(text.len(), |i| i + 1);
    text.insert_str(
        first_line_end,
        &format!(
            "# curves={} median_curve={} excluded={}\n",
            curves.curves.len(),
            curves.names[s.median_index],
            s.excluded.len()
        ),
    );
    Ok(text)
}

fn split(band: Option<(f64, f64)>) -> (String, String) {
    match band {
        Some((lo, hi)) => (lo.to_string(), hi.to_string()),
        None => (String::new(), String::new()),
    }
}
