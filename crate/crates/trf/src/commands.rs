//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use trf_core::cutoff::{cutoff_surface, select_h};
use trf_core::fitting::{
    fit, match_grf_range, spatial_targets, CriterionSpec, CutoffRule, FitOptions, MatchOptions, Theta, ThetaBounds,
};
use trf_core::gauge::{aggregate_occurrence, ingest_tips, to_occurrence};
use trf_core::optim::NelderMeadOptions;
use trf_core::simulation::{marginal_cutoff, simulate_spatial_trf, threshold_values, Cutoff, TrfSimulator};
use trf_core::stats::{cond_prob_table, median_curve, simultaneous_rain_pmf, OccKind};
use trf_core::{Dof, GaugeNetwork, MaternSpec, OccurrenceField, Site, SpaceTimeCovSpec, TimeGrid};

use crate::analysis::{fbplot_table, stats_tables};
use crate::cli::{CutoffArgs, FbplotArgs, FitArgs, IngestArgs, MatchRangeArgs, SimulateArgs, StatsArgs};
use crate::io::{self, cell, parse_timestamp, read_curves, read_network, read_occurrence, write_bytes, write_occurrence, Occurrence};
use crate::provenance::Provenance;
use crate::schema::{parse_dof, AlphaUUnits, CovSpecFile, CutoffModelFile, DofRepr, FitResultFile, FitSettings};

/// Settings shared by every subcommand.
pub struct Ctx {
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub prov: Provenance,
}

impl Ctx {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

pub fn ingest(args: &IngestArgs, ctx: &Ctx) -> Result<()> {
    let net = read_network(&args.network)?.build()?;
    let tips = io::read_tips(&args.tips)?;
    let report = ingest_tips(
        tips,
        args.step_minutes,
        parse_timestamp(&args.from)?,
        parse_timestamp(&args.to)?,
        &net,
    )?;
    let mut field = to_occurrence(&report.rates);
    if args.aggregate > 1 {
        field = aggregate_occurrence(&field, args.aggregate)?;
    }
    if report.skipped > 0 {
        eprintln!("skipped {} tips outside the span", report.skipped);
    }
    let occ = Occurrence {
        site_ids: net.sites().iter().map(|s| s.id.clone()).collect(),
        field,
    };
    write_occurrence(&ctx.resolve(&args.out), &occ, &ctx.prov)
}

/// `FROM..TO` in ISO-8601.
pub fn parse_window(s: &str) -> Result<(i64, i64)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| anyhow!("window must look like FROM..TO, got `{s}`"))?;
    let (from, to) = (parse_timestamp(a)?, parse_timestamp(b)?);
    if from >= to {
        bail!("window end must be after its start");
    }
    Ok((from, to))
}

pub fn cutoff(args: &CutoffArgs, ctx: &Ctx) -> Result<()> {
    let nu = parse_dof(&args.nu)?;
    let mut occ = read_occurrence(&args.occ)?;
    if let Some(w) = &args.window {
        let (from, to) = parse_window(w)?;
        occ = occ.window(from, to)?;
    }
    let sel = select_h(&occ.field, args.h_max)?;
    for (h, e) in &sel.failures {
        eprintln!("H = {h} failed: {e}");
    }
    let file = CutoffModelFile::from_selection(&sel, &occ.site_ids, nu, &ctx.prov);
    write_json(&ctx.resolve(&args.out), &file)?;
    if let Some(path) = &args.surface {
        let n = occ.field.occ.steps();
        let s = cutoff_surface(&sel.best.model, occ.field.grid, n, nu)?;
        let mut rows = Vec::with_capacity(n);
        for t in 0..n {
            let mut r = vec![io::format_timestamp(occ.field.grid.time_of(t))];
            r.extend((0..occ.site_ids.len()).map(|i| s.c.get(i, t).to_string()));
            rows.push(r);
        }
        let mut header = vec!["timestamp"];
        header.extend(occ.site_ids.iter().map(String::as_str));
        io::write_table(&ctx.resolve(path), &ctx.prov, &header, &rows)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    io::require_file(path)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_cov(path: Option<&Path>) -> Result<SpaceTimeCovSpec> {
    match path {
        None => Ok(SpaceTimeCovSpec::default()),
        Some(p) => {
            io::require_file(p)?;
            let text = std::fs::read_to_string(p)?;
            let f: CovSpecFile = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            f.to_spec().with_context(|| format!("invalid covariance in {}", p.display()))
        }
    }
}

/// Planar `w × h` lattice with cell-centred sites on the unit square.
pub fn lattice_network(w: usize, h: usize) -> Result<GaugeNetwork> {
    let sites = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            Site::new(
                format!("g{x}_{y}"),
                (y as f64 + 0.5) / h as f64,
                (x as f64 + 0.5) / w as f64,
            )
        })
        .collect();
    Ok(GaugeNetwork::from_planar(sites)?)
}

/// Path of replication `k` when several are written.
pub fn replication_path(out: &Path, k: usize, reps: usize) -> PathBuf {
    if reps == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.r{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}.r{k}"),
    };
    out.with_file_name(name)
}

pub fn simulate(args: &SimulateArgs, ctx: &Ctx) -> Result<()> {
    let network = match (&args.network, &args.grid) {
        (Some(p), _) => read_network(p)?.build()?,
        (None, Some(g)) => lattice_network(g[0], g[1])?,
        (None, None) => bail!("need --network or --grid"),
    };
    let mut cov = load_cov(args.cov_spec.as_deref())?;
    let mut units = args.alpha_u_units;
    let mut theta = Theta {
        alpha: cov.matern.range,
        beta: cov.beta,
        alpha_u: 0.1,
        nu: Dof::Infinite,
    };
    if let Some(p) = &args.fit {
        let f: FitResultFile = read_json(p)?;
        theta = f.theta.into();
        units = f.settings.alpha_u_units;
    }
    if let Some(a) = args.alpha {
        theta.alpha = a;
    }
    if let Some(b) = args.beta {
        theta.beta = b;
    }
    if let Some(a) = args.alpha_u {
        theta.alpha_u = a;
    }
    if let Some(nu) = &args.nu {
        theta.nu = parse_dof(nu)?;
    }
    cov = cov.with_range_and_beta(theta.alpha, theta.beta);
    if args.steps == 0 || args.reps == 0 {
        bail!("--steps and --reps must be positive");
    }
    let grid = TimeGrid::new(parse_timestamp(&args.origin)?, args.step_minutes);
    let ids: Vec<String> = network.sites().iter().map(|s| s.id.clone()).collect();
    let sim = TrfSimulator::new(&network, &cov, args.steps, units.range(theta.alpha_u), theta.nu, ctx.seed)?;
    let surface = match (&args.cutoff_p, &args.cutoff_model) {
        (Some(_), _) => None,
        (None, Some(p)) => {
            let f: CutoffModelFile = read_json(p)?;
            Some(cutoff_surface(&f.model_for(&ids)?, grid, args.steps, theta.nu)?)
        }
        (None, None) => bail!("need --cutoff-p or --cutoff-model"),
    };
    let scalar = match args.cutoff_p {
        Some(p) => marginal_cutoff(p, theta.nu)?,
        None => 0.0,
    };
    let out = ctx.resolve(&args.out);
    // generate in parallel, write in replication order
    let fields: Vec<Result<Occurrence>> = (0..args.reps)
        .into_par_iter()
        .map(|k| {
            let y = sim.replicate(k as u64).y;
            let cut = match &surface {
                Some(s) => Cutoff::Surface(s),
                None => Cutoff::Scalar(scalar),
            };
            Ok(Occurrence {
                site_ids: ids.clone(),
                field: OccurrenceField::new(threshold_values(&y, cut)?, grid),
            })
        })
        .collect();
    for (k, occ) in fields.into_iter().enumerate() {
        write_occurrence(&replication_path(&out, k, args.reps), &occ?, &ctx.prov)?;
    }
    Ok(())
}

pub fn stats(args: &StatsArgs, ctx: &Ctx) -> Result<()> {
    let mut occ = read_occurrence(&args.occ)?;
    if args.aggregate > 1 {
        occ.field = aggregate_occurrence(&occ.field, args.aggregate)?;
    }
    let network = read_network(&args.network)?.aligned(&occ.site_ids)?;
    let dir = ctx.resolve(&args.out);
    for (name, text) in stats_tables(&occ, &network, &ctx.prov, args.plot_data)? {
        write_bytes(&dir.join(name), text.as_bytes())?;
    }
    Ok(())
}

/// `2..10` (inclusive) or `3,5,7`.
pub fn parse_nu_grid(s: &str) -> Result<Vec<u32>> {
    let grid: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.contains(&0) {
        bail!("ν grid must be non-empty and positive, got `{s}`");
    }
    Ok(grid)
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("interval must look like LO:HI, got `{s}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// `alpha=LO:HI,beta=LO:HI,alpha_u=LO:HI`, any subset.
pub fn parse_bounds(s: &str) -> Result<ThetaBounds> {
    let mut b = ThetaBounds::default();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, iv) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("bound `{part}` must look like name=LO:HI"))?;
        let iv = parse_interval(iv)?;
        match key.trim() {
            "alpha" => b.alpha = iv,
            "beta" => b.beta = iv,
            "alpha_u" => b.alpha_u = iv,
            other => bail!("unknown parameter `{other}` in --bounds"),
        }
    }
    Ok(b)
}

fn parse_start(s: &str) -> Result<(f64, f64, f64)> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => bail!("--start needs three values α,β,α_u"),
    }
}

pub fn fit_command(args: &FitArgs, ctx: &Ctx) -> Result<()> {
    let obs = read_occurrence(&args.obs)?;
    let network = read_network(&args.network)?.aligned(&obs.site_ids)?;
    let cutoff = match (&args.cutoff_model, args.cutoff_p) {
        (Some(p), _) => {
            let f: CutoffModelFile = read_json(p)?;
            CutoffRule::Seasonal(f.model_for(&obs.site_ids)?)
        }
        (None, Some(p_dry)) => CutoffRule::Marginal { p_dry },
        (None, None) => bail!("need --cutoff-model or --cutoff-p"),
    };
    let options = FitOptions {
        nu_grid: parse_nu_grid(&args.nu_grid)?,
        bounds: args.bounds.as_deref().map(parse_bounds).transpose()?.unwrap_or_default(),
        start: args.start.as_deref().map(parse_start).transpose()?,
        nelder_mead: NelderMeadOptions {
            max_evals: args.max_evals,
            ..Default::default()
        },
    };
    let result = run_fit(
        &obs,
        network,
        load_cov(args.cov_spec.as_deref())?,
        args.alpha_u_units,
        cutoff,
        args.m,
        ctx.seed,
        args.model.into(),
        &options,
    )?;
    write_json(&ctx.resolve(&args.out), &FitResultFile::new(&result.0, result.1, &ctx.prov))
}

#[allow(clippy::too_many_arguments)]
pub fn run_fit(
    obs: &Occurrence,
    network: GaugeNetwork,
    cov: SpaceTimeCovSpec,
    units: AlphaUUnits,
    cutoff: CutoffRule,
    m: usize,
    seed: u64,
    kind: trf_core::fitting::ModelKind,
    options: &FitOptions,
) -> Result<(trf_core::fitting::FitResult, FitSettings)> {
    let spec = criterion_spec(obs, network, cov, units, cutoff, m, seed)?;
    let settings = FitSettings {
        replications: m,
        n_steps: spec.n_steps,
        seed_base: seed,
        alpha_u_units: units,
        cutoff: match &spec.cutoff {
            CutoffRule::Marginal { p_dry } => format!("marginal p_dry={p_dry}"),
            CutoffRule::Seasonal(mdl) => format!("seasonal H={}", mdl.harmonics()),
        },
    };
    Ok((fit(&spec, kind, options)?, settings))
}

pub fn criterion_spec(
    obs: &Occurrence,
    network: GaugeNetwork,
    cov: SpaceTimeCovSpec,
    units: AlphaUUnits,
    cutoff: CutoffRule,
    m: usize,
    seed: u64,
) -> Result<CriterionSpec> {
    let table = cond_prob_table(&obs.field.occ, &network)?;
    let spec = CriterionSpec {
        network,
        obs: table,
        n_steps: obs.field.occ.steps(),
        grid: obs.field.grid,
        cov,
        alpha_u_units: units.range(0.0),
        cutoff,
        replications: m,
        seed_base: seed,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Serialize)]
struct FieldCheck {
    psi: Vec<f64>,
    median_phi_r: Vec<Option<f64>>,
    median_phi_d: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
struct MatchReport {
    schema: &'static str,
    provenance: Provenance,
    nu: DofRepr,
    alpha_trf: f64,
    p_dry: f64,
    target_psi_none: f64,
    target_psi_all: f64,
    alpha_matched: f64,
    objective: f64,
    matched_psi_none: f64,
    matched_psi_all: f64,
    at_boundary: bool,
    check_reps: usize,
    trf: Option<FieldCheck>,
    grf: Option<FieldCheck>,
}

fn spatial_check(network: &GaugeNetwork, matern: &MaternSpec, nu: Dof, p_dry: f64, reps: usize, seed: u64) -> Result<FieldCheck> {
    let y = simulate_spatial_trf(network, matern, nu, reps, seed)?;
    let occ = threshold_values(&y, Cutoff::Scalar(marginal_cutoff(p_dry, nu)?))?;
    // replications play the role of time steps
    let table = cond_prob_table(&occ, network)?;
    Ok(FieldCheck {
        psi: simultaneous_rain_pmf(&occ).psi,
        median_phi_r: median_curve(&table, OccKind::Rain),
        median_phi_d: median_curve(&table, OccKind::Dry),
    })
}

pub fn match_range(args: &MatchRangeArgs, ctx: &Ctx) -> Result<()> {
    let network = read_network(&args.network)?.build()?;
    let nu = parse_dof(&args.nu)?;
    let matern = MaternSpec {
        smoothness: args.smoothness,
        range: args.alpha,
        scale: 1.0,
    };
    let targets = spatial_targets(&network, &matern, nu, args.p_dry, args.target_reps, ctx.seed)?;
    let res = match_grf_range(
        &network,
        args.smoothness,
        args.p_dry,
        targets,
        &MatchOptions {
            bounds: parse_interval(&args.bounds)?,
            grid_points: args.grid_points,
            mc_budget: args.mc_budget,
            seed: ctx.seed.wrapping_add(1),
        },
    )?;
    let (trf, grf) = if args.check_reps > 0 {
        let grf_matern = MaternSpec {
            range: res.alpha,
            ..matern
        };
        (
            Some(spatial_check(&network, &matern, nu, args.p_dry, args.check_reps, ctx.seed.wrapping_add(2))?),
            Some(spatial_check(&network, &grf_matern, Dof::Infinite, args.p_dry, args.check_reps, ctx.seed.wrapping_add(3))?),
        )
    } else {
        (None, None)
    };
    let report = MatchReport {
        schema: "trf-match-range/1",
        provenance: ctx.prov.clone(),
        nu: nu.into(),
        alpha_trf: args.alpha,
        p_dry: args.p_dry,
        target_psi_none: targets.psi_none,
        target_psi_all: targets.psi_all,
        alpha_matched: res.alpha,
        objective: res.objective,
        matched_psi_none: res.psi_none,
        matched_psi_all: res.psi_all,
        at_boundary: res.at_boundary,
        check_reps: args.check_reps,
        trf,
        grf,
    };
    if res.at_boundary {
        eprintln!("warning: matched range {} sits on the search boundary", res.alpha);
    }
    write_json(&ctx.resolve(&args.out), &report)
}

pub fn fbplot(args: &FbplotArgs, ctx: &Ctx) -> Result<()> {
    let curves = read_curves(&args.curves)?;
    let obs = match &args.obs {
        Some(p) => {
            let t = read_curves(p)?;
            if t.labels != curves.labels {
                bail!("{}: column labels differ from the ensemble's", p.display());
            }
            Some(
                t.curves
                    .into_iter()
                    .next()
                    .ok_or_else(|| anyhow!("{}: no overlay curve", p.display()))?,
            )
        }
        None => None,
    };
    let text = fbplot_table(&curves, obs.as_deref(), &ctx.prov)?;
    write_bytes(&ctx.resolve(&args.out), text.as_bytes())
}

/// Formats a curve for one-line display.
pub fn curve_line(c: &[Option<f64>]) -> String {
    c.iter().map(|v| cell(*v)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_grid_forms() {
        assert_eq!(parse_nu_grid("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_nu_grid("3, 7").unwrap(), vec![3, 7]);
        assert!(parse_nu_grid("0,1").is_err());
        assert!(parse_nu_grid("x").is_err());
    }

    #[test]
    fn bounds_subset() {
        let b = parse_bounds("beta=0.1:0.2").unwrap();
        assert_eq!(b.beta, (0.1, 0.2));
        assert_eq!(b.alpha, ThetaBounds::default().alpha);
        assert!(parse_bounds("gamma=0:1").is_err());
    }

    #[test]
    fn replication_names() {
        let p = Path::new("out/sim.csv");
        assert_eq!(replication_path(p, 0, 1), PathBuf::from("out/sim.csv"));
        assert_eq!(replication_path(p, 3, 5), PathBuf::from("out/sim.r3.csv"));
        assert_eq!(replication_path(Path::new("sim"), 1, 2), PathBuf::from("sim.r1"));
    }

    #[test]
    fn lattice_is_unit_square() {
        let n = lattice_network(3, 2).unwrap();
        assert_eq!(n.len(), 6);
        assert!(n.d_max() < std::f64::consts::SQRT_2);
    }
}
