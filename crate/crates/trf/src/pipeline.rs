//! The `run` subcommand: ingest → cutoff → fit → simulate → stats → fbplot
//! driven by one TOML file.
//!
//! ```toml
//! seed = 42
//! out_dir = "results"
//!
//! [inputs]
//! network = "network.csv"
//! tips = "tips.csv"            # or: occurrence = "occ.csv"
//! window = ["2024-06-01", "2024-09-01"]   # optional season slice
//!
//! [ingest]                     # only with `tips`
//! step_minutes = 15
//! from = "2024-06-01T00:00:00Z"
//! to = "2024-09-01T00:00:00Z"
//! aggregate = 4                # optional OR-aggregation
//!
//! [cutoff]
//! mode = "seasonal"            # or "marginal"
//! h_max = 3
//! nu = 3                       # or "inf"
//! p_dry = 0.975                # marginal mode; default 1 - observed wet fraction
//!
//! [model]
//! alpha_u_units = "fraction"   # or "steps"
//! [model.cov]                  # same keys as a --cov-spec file
//! smoothness = 1.0
//!
//! [fit]
//! model = "trf"
//! nu_grid = [2, 3, 4, 5]
//! replications = 50
//! max_evals = 500
//! alpha = [0.05, 1.5]          # optional bounds, also beta and alpha_u
//!
//! [simulate]
//! replications = 100
//! ```
//!
//! Relative input paths are resolved against the config file's directory,
//! `out_dir` against the working directory. The config hash covers
//! everything except `out_dir` and `threads`. Stage seeds: the fit uses
//! `seed`, validation simulations `seed + 1`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use trf_core::cutoff::select_h;
use trf_core::fitting::{simulate_tables, CutoffRule, FitOptions, ModelSimulator, ThetaBounds};
use trf_core::gauge::{aggregate_occurrence, ingest_tips, to_occurrence};
use trf_core::optim::NelderMeadOptions;
use trf_core::stats::{cond_prob_table, OccKind};
use trf_core::Dof;

use crate::analysis::{curve_table, fbplot_table, kind_name, median_curve_from, stats_tables};
use crate::commands::{criterion_spec, run_fit};
use crate::io::{self, curves_csv, format_timestamp, parse_timestamp, read_network, read_occurrence, Occurrence};
use crate::provenance::{sha256_hex, Provenance, TOOL, VERSION};
use crate::schema::{AlphaUUnits, CovSpecFile, CutoffModelFile, DofRepr, FitResultFile, ModelName};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub inputs: Inputs,
    pub ingest: Option<IngestCfg>,
    #[serde(default)]
    pub cutoff: CutoffCfg,
    #[serde(default)]
    pub model: ModelCfg,
    #[serde(default)]
    pub fit: FitCfg,
    #[serde(default)]
    pub simulate: SimulateCfg,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("trf-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub network: PathBuf,
    pub tips: Option<PathBuf>,
    pub occurrence: Option<PathBuf>,
    pub window: Option<[String; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestCfg {
    pub step_minutes: u32,
    pub from: String,
    pub to: String,
    #[serde(default = "one")]
    pub aggregate: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CutoffMode {
    #[default]
    Seasonal,
    Marginal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffCfg {
    #[serde(default)]
    pub mode: CutoffMode,
    #[serde(default = "three")]
    pub h_max: usize,
    #[serde(default = "inf")]
    pub nu: DofRepr,
    pub p_dry: Option<f64>,
}

fn three() -> usize {
    3
}

fn inf() -> DofRepr {
    Dof::Infinite.into()
}

impl Default for CutoffCfg {
    fn default() -> Self {
        Self {
            mode: CutoffMode::Seasonal,
            h_max: 3,
            nu: inf(),
            p_dry: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    #[serde(default)]
    pub alpha_u_units: AlphaUUnits,
    #[serde(default)]
    pub cov: CovSpecFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCfg {
    #[serde(default = "trf_model")]
    pub model: ModelName,
    #[serde(default = "default_nu_grid")]
    pub nu_grid: Vec<u32>,
    #[serde(default = "fifty")]
    pub replications: usize,
    #[serde(default = "five_hundred")]
    pub max_evals: usize,
    pub alpha: Option<[f64; 2]>,
    pub beta: Option<[f64; 2]>,
    pub alpha_u: Option<[f64; 2]>,
    pub start: Option<[f64; 3]>,
}

fn trf_model() -> ModelName {
    ModelName::Trf
}
fn default_nu_grid() -> Vec<u32> {
    (2..=10).collect()
}
fn fifty() -> usize {
    50
}
fn five_hundred() -> usize {
    500
}

impl Default for FitCfg {
    fn default() -> Self {
        Self {
            model: trf_model(),
            nu_grid: default_nu_grid(),
            replications: 50,
            max_evals: 500,
            alpha: None,
            beta: None,
            alpha_u: None,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    #[serde(default = "hundred")]
    pub replications: usize,
}

fn hundred() -> usize {
    100
}

impl Default for SimulateCfg {
    fn default() -> Self {
        Self { replications: 100 }
    }
}

/// Global flags that override config keys.
#[derive(Debug, Default, Clone)]
pub struct GlobalOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// A loaded config: the parsed form, its canonical text and the directory
/// that relative inputs hang off.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub canonical: String,
    pub base: PathBuf,
}

fn set_key(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty key in override"))?;
    let mut table = root;
    for p in parts {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{p}` in `{key}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses `VALUE` as a TOML value, falling back to a bare string.
fn parse_value(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

pub fn load_config(path: &Path, overrides: &[String], globals: &GlobalOverrides) -> Result<LoadedConfig> {
    io::require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{o}` must look like KEY=VALUE"))?;
        set_key(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    if let Some(s) = globals.seed {
        table.insert("seed".into(), toml::Value::Integer(i64::try_from(s)?));
    }
    if let Some(d) = &globals.out_dir {
        table.insert("out_dir".into(), toml::Value::String(d.to_string_lossy().into_owned()));
    }
    // the thread count cannot change results, so it stays out of the hash
    table.remove("threads");
    let config: RunConfig = table
        .clone()
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    // where results go does not change what they are
    let canonical = toml::to_string(&RunConfig {
        out_dir: PathBuf::new(),
        ..config.clone()
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = LoadedConfig {
        config: RunConfig {
            threads: globals.threads.or(config.threads),
            ..config
        },
        canonical,
        base,
    };
    loaded.check_inputs()?;
    Ok(loaded)
}

impl LoadedConfig {
    fn input(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn check_inputs(&self) -> Result<()> {
        let i = &self.config.inputs;
        io::require_file(&self.input(&i.network))?;
        match (&i.tips, &i.occurrence) {
            (Some(t), None) => {
                io::require_file(&self.input(t))?;
                if self.config.ingest.is_none() {
                    bail!("`inputs.tips` needs an [ingest] section");
                }
            }
            (None, Some(o)) => io::require_file(&self.input(o))?,
            (Some(_), Some(_)) => bail!("give either `inputs.tips` or `inputs.occurrence`, not both"),
            (None, None) => bail!("config needs `inputs.tips` or `inputs.occurrence`"),
        }
        if let Some([a, b]) = &i.window {
            if parse_timestamp(a)? >= parse_timestamp(b)? {
                bail!("inputs.window end must be after its start");
            }
        }
        if self.config.fit.replications == 0 || self.config.simulate.replications == 0 {
            bail!("replication counts must be positive");
        }
        self.config.model.cov.to_spec()?;
        Ok(())
    }

    pub fn stages(&self) -> Vec<(&'static str, String)> {
        let c = &self.config;
        let mut v = Vec::new();
        if let Some(t) = &c.inputs.tips {
            let ing = c.ingest.as_ref().expect("checked at load");
            v.push((
                "ingest",
                format!(
                    "{} -> occurrence.csv ({} min steps, aggregate {})",
                    self.input(t).display(),
                    ing.step_minutes,
                    ing.aggregate
                ),
            ));
        }
        v.push((
            "cutoff",
            match c.cutoff.mode {
                CutoffMode::Seasonal => format!("seasonal logistic, H <= {} -> cutoff_model.json", c.cutoff.h_max),
                CutoffMode::Marginal => "marginal quantile -> cutoff.json".to_string(),
            },
        ));
        v.push((
            "fit",
            format!(
                "{:?}, nu in {:?}, M = {} -> fit.json",
                c.fit.model, c.fit.nu_grid, c.fit.replications
            ),
        ));
        v.push((
            "simulate",
            format!("{} seasons from the fit -> simulated.trfo, sim_curves_*.csv", c.simulate.replications),
        ));
        v.push(("stats", "observed tables -> stats/".to_string()));
        v.push(("fbplot", "functional boxplots -> fbplot_dry.csv, fbplot_rain.csv".to_string()));
        v
    }
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub outputs: Vec<ManifestEntry>,
}

/// Writes artifacts under the output directory and remembers them.
struct Sink {
    dir: PathBuf,
    written: Vec<(String, PathBuf, String, usize)>,
}

impl Sink {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        io::write_bytes(&path, bytes)?;
        self.written.push((name.to_string(), path, sha256_hex(bytes), bytes.len()));
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(v)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    /// Renames everything written so far to `<name>.partial`.
    fn mark_partial(&self) {
        for (_, path, _, _) in &self.written {
            let mut p = path.clone().into_os_string();
            p.push(".partial");
            let _ = fs::rename(path, p);
        }
    }
}

#[derive(Serialize)]
struct MarginalCutoffFile {
    schema: &'static str,
    provenance: Provenance,
    p_dry: f64,
}

/// Runs every stage; on failure the outputs written so far get a
/// `.partial` suffix and the error names the stage.
pub fn run(loaded: &LoadedConfig) -> Result<Manifest> {
    let c = &loaded.config;
    let prov = Provenance::new(&loaded.canonical, c.seed);
    let mut sink = Sink {
        dir: c.out_dir.clone(),
        written: Vec::new(),
    };
    let mut stages = Vec::new();
    match execute(loaded, &prov, &mut sink, &mut stages) {
        Ok(()) => {
            let mut outputs: Vec<ManifestEntry> = sink
                .written
                .iter()
                .map(|(name, _, hash, bytes)| ManifestEntry {
                    path: name.clone(),
                    sha256: hash.clone(),
                    bytes: *bytes,
                })
                .collect();
            outputs.sort_by(|a, b| a.path.cmp(&b.path));
            let manifest = Manifest {
                tool: TOOL.to_string(),
                version: VERSION.to_string(),
                config_hash: prov.config_hash.clone(),
                seed: c.seed,
                stages: stages.iter().map(|s| s.to_string()).collect(),
                outputs,
            };
            sink.put_json("manifest.json", &manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            sink.mark_partial();
            Err(e)
        }
    }
}

fn stage<T>(name: &'static str, stages: &mut Vec<&'static str>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    eprintln!("[{name}]");
    let out = f().map_err(|e| e.context(format!("stage `{name}` failed")))?;
    stages.push(name);
    Ok(out)
}

fn execute(loaded: &LoadedConfig, prov: &Provenance, sink: &mut Sink, stages: &mut Vec<&'static str>) -> Result<()> {
    let c = &loaded.config;
    let net_spec = read_network(&loaded.input(&c.inputs.network))?;

    let mut obs = if let Some(t) = &c.inputs.tips {
        stage("ingest", stages, || {
            let ing = c.ingest.as_ref().expect("checked at load");
            let net = net_spec.build()?;
            let report = ingest_tips(
                io::read_tips(&loaded.input(t))?,
                ing.step_minutes,
                parse_timestamp(&ing.from)?,
                parse_timestamp(&ing.to)?,
                &net,
            )?;
            let mut field = to_occurrence(&report.rates);
            if ing.aggregate > 1 {
                field = aggregate_occurrence(&field, ing.aggregate)?;
            }
            let occ = Occurrence {
                site_ids: net_spec.ids(),
                field,
            };
            sink.put("occurrence.csv", io::occurrence_csv(&occ, prov).as_bytes())?;
            Ok(occ)
        })?
    } else {
        read_occurrence(&loaded.input(c.inputs.occurrence.as_ref().expect("checked at load")))?
    };
    if let Some([a, b]) = &c.inputs.window {
        obs = obs.window(parse_timestamp(a)?, parse_timestamp(b)?)?;
    }
    let network = net_spec.aligned(&obs.site_ids)?;

    let cutoff = stage("cutoff", stages, || match c.cutoff.mode {
        CutoffMode::Seasonal => {
            let sel = select_h(&obs.field, c.cutoff.h_max)?;
            let file = CutoffModelFile::from_selection(&sel, &obs.site_ids, c.cutoff.nu.into(), prov);
            sink.put_json("cutoff_model.json", &file)?;
            Ok(CutoffRule::Seasonal(file.model_for(&obs.site_ids)?))
        }
        CutoffMode::Marginal => {
            let p_dry = c.cutoff.p_dry.unwrap_or(1.0 - obs.field.wet_fraction());
            sink.put_json(
                "cutoff.json",
                &MarginalCutoffFile {
                    schema: "trf-marginal-cutoff/1",
                    provenance: prov.clone(),
                    p_dry,
                },
            )?;
            Ok(CutoffRule::Marginal { p_dry })
        }
    })?;

    let cov = c.model.cov.to_spec()?;
    let units = c.model.alpha_u_units;
    let fit_result = stage("fit", stages, || {
        let d = ThetaBounds::default();
        let options = FitOptions {
            nu_grid: c.fit.nu_grid.clone(),
            bounds: ThetaBounds {
                alpha: c.fit.alpha.map_or(d.alpha, |[a, b]| (a, b)),
                beta: c.fit.beta.map_or(d.beta, |[a, b]| (a, b)),
                alpha_u: c.fit.alpha_u.map_or(d.alpha_u, |[a, b]| (a, b)),
            },
            start: c.fit.start.map(|[a, b, u]| (a, b, u)),
            nelder_mead: NelderMeadOptions {
                max_evals: c.fit.max_evals,
                ..Default::default()
            },
        };
        let (res, settings) = run_fit(
            &obs,
            network.clone(),
            cov.clone(),
            units,
            cutoff.clone(),
            c.fit.replications,
            c.seed,
            c.fit.model.into(),
            &options,
        )?;
        sink.put_json("fit.json", &FitResultFile::new(&res, settings, prov))?;
        Ok(res)
    })?;

    let sim_tables = stage("simulate", stages, || {
        let spec = criterion_spec(&obs, network.clone(), cov.clone(), units, cutoff.clone(), 1, c.seed)?;
        let seed = c.seed.wrapping_add(1);
        let first = ModelSimulator::new(&fit_result.theta, &spec, seed)?.occurrence(0);
        let occ = Occurrence {
            site_ids: obs.site_ids.clone(),
            field: trf_core::OccurrenceField::new(first, obs.field.grid),
        };
        sink.put("simulated.trfo", &crate::bitset::encode(&occ, prov))?;
        let tables = simulate_tables(&fit_result.theta, &spec, c.simulate.replications, seed)?;
        for kind in [OccKind::Dry, OccKind::Rain] {
            let t = curve_table(&tables, kind, "sim");
            sink.put(&format!("sim_curves_{}.csv", kind_name(kind)), curves_csv(prov, &t).as_bytes())?;
        }
        Ok(tables)
    })?;

    stage("stats", stages, || {
        for (name, text) in stats_tables(&obs, &network, prov, true)? {
            sink.put(&format!("stats/{name}"), text.as_bytes())?;
        }
        Ok(())
    })?;

    stage("fbplot", stages, || {
        let obs_table = cond_prob_table(&obs.field.occ, &network)?;
        for kind in [OccKind::Dry, OccKind::Rain] {
            let curves = curve_table(&sim_tables, kind, "sim");
            let overlay = median_curve_from(&obs_table, kind);
            let text = fbplot_table(&curves, Some(&overlay), prov)?;
            sink.put(&format!("fbplot_{}.csv", kind_name(kind)), text.as_bytes())?;
        }
        Ok(())
    })?;

    eprintln!(
        "fitted {:?}: alpha {:.4} beta {:.4} alpha_u {:.4} nu {} (criterion {:.6}); span {} .. {}",
        fit_result.kind,
        fit_result.theta.alpha,
        fit_result.theta.beta,
        fit_result.theta.alpha_u,
        fit_result.theta.nu,
        fit_result.value,
        format_timestamp(obs.field.grid.origin),
        format_timestamp(obs.field.grid.time_of(obs.field.occ.steps()))
    );
    Ok(())
}
