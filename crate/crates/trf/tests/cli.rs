use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trf::bitset;
use trf::io::{read_curves, read_occurrence};

fn trf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = trf(dir, args);
    assert!(
        out.status.success(),
        "trf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const NETWORK: &str = "site_id,x,y\na,0,0\nb,1,0\nc,0,1\nd,1,1\ne,0.5,0.4\n";

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("net.csv"), NETWORK).unwrap();
    dir
}

fn simulate_obs(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec![
        "simulate", "--network", "net.csv", "--nu", "3", "--alpha", "0.5", "--alpha-u", "0.2", "--steps", "480",
        "--cutoff-p", "0.85", "--seed", "3", "--out", out,
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn ingest_counts_tips_into_half_open_intervals() {
    let dir = workspace();
    let d = dir.path();
    fs::write(
        d.join("tips.csv"),
        "site_id,timestamp\n\
         a,2024-06-01T00:05:00Z\n\
         b,2024-06-01T00:15:00Z\n\
         a,2024-06-01T00:59:59Z\n\
         c,2024-06-01T01:00:00Z\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "ingest", "--tips", "tips.csv", "--network", "net.csv", "--step-minutes", "15", "--from",
            "2024-06-01T00:00:00Z", "--to", "2024-06-01T01:00:00Z", "--out", "occ.csv",
        ],
    );
    let occ = read_occurrence(&d.join("occ.csv")).unwrap();
    assert_eq!(occ.site_ids, ["a", "b", "c", "d", "e"]);
    assert_eq!(occ.field.occ.row(0), &[true, false, false, true]);
    // a tip on a boundary belongs to the later interval
    assert_eq!(occ.field.occ.row(1), &[false, true, false, false]);
    // the 01:00 tip lies outside [from, to)
    assert!(occ.field.occ.row(2).iter().all(|&w| !w));
    assert_eq!(occ.field.grid.step_minutes, 15);

    ok(
        d,
        &[
            "ingest", "--tips", "tips.csv", "--network", "net.csv", "--step-minutes", "15", "--from",
            "2024-06-01T00:00:00Z", "--to", "2024-06-01T01:00:00Z", "--aggregate", "4", "--out", "hourly.csv",
        ],
    );
    let hourly = read_occurrence(&d.join("hourly.csv")).unwrap();
    assert_eq!(hourly.field.occ.steps(), 1);
    assert_eq!(hourly.field.grid.step_minutes, 60);
    assert!(hourly.field.occ.get(0, 0) && hourly.field.occ.get(1, 0) && !hourly.field.occ.get(3, 0));
}

#[test]
fn ingest_rejects_unknown_site_by_name() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("tips.csv"), "site_id,timestamp\nzz9,2024-06-01T00:05:00Z\n").unwrap();
    let out = trf(
        d,
        &[
            "ingest", "--tips", "tips.csv", "--network", "net.csv", "--step-minutes", "15", "--from",
            "2024-06-01", "--to", "2024-06-02", "--out", "occ.csv",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("zz9"), "{}", stderr(&out));
}

#[test]
fn csv_and_bitset_outputs_agree() {
    let dir = workspace();
    let d = dir.path();
    simulate_obs(d, "obs.csv", &[]);
    simulate_obs(d, "obs.trfo", &[]);
    let a = read_occurrence(&d.join("obs.csv")).unwrap();
    let b = read_occurrence(&d.join("obs.trfo")).unwrap();
    assert_eq!(a, b);
    let wet = a.field.wet_fraction();
    assert!(wet > 0.05 && wet < 0.3, "wet fraction {wet}");
    let (_, header) = bitset::decode(&fs::read(d.join("obs.trfo")).unwrap()).unwrap();
    assert_eq!(header.seed, 3);
}

#[test]
fn simulation_is_identical_across_thread_counts() {
    let dir = workspace();
    let d = dir.path();
    simulate_obs(d, "one.trfo", &["--threads", "1", "--reps", "3"]);
    simulate_obs(d, "four.trfo", &["--threads", "4", "--reps", "3"]);
    for k in 0..3 {
        let a = fs::read(d.join(format!("one.r{k}.trfo"))).unwrap();
        let b = fs::read(d.join(format!("four.r{k}.trfo"))).unwrap();
        // the config hash covers the output name, so compare past the header
        assert_eq!(a[..40], b[..40]);
        assert_eq!(a[72..], b[72..]);
    }
    assert_ne!(
        fs::read(d.join("one.r0.trfo")).unwrap()[72..],
        fs::read(d.join("one.r1.trfo")).unwrap()[72..]
    );
}

#[test]
fn outputs_carry_provenance_lines() {
    let dir = workspace();
    let d = dir.path();
    simulate_obs(d, "obs.csv", &[]);
    ok(d, &["stats", "--occ", "obs.csv", "--network", "net.csv", "--plot-data", "--out", "st"]);
    ok(d, &["cutoff", "--occ", "obs.csv", "--H-max", "2", "--out", "cm.json", "--surface", "surf.csv"]);
    for f in ["obs.csv", "st/cond_prob.csv", "st/psi.csv", "st/spells.csv", "st/plot_phi_dry.csv", "surf.csv"] {
        let text = fs::read_to_string(d.join(f)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("# trf ") && first.contains("config=") && first.contains("seed="), "{f}: {first}");
    }
    let cm: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("cm.json")).unwrap()).unwrap();
    assert_eq!(cm["schema"], "trf-cutoff-model/1");
    assert!(cm["provenance"]["config_hash"].as_str().unwrap().len() == 64);
    assert_eq!(cm["sites"].as_array().unwrap().len(), 5);
}

#[test]
fn stats_psi_sums_to_one_and_matches_counts() {
    let dir = workspace();
    let d = dir.path();
    simulate_obs(d, "obs.csv", &[]);
    ok(d, &["stats", "--occ", "obs.csv", "--network", "net.csv", "--out", "st"]);
    let text = fs::read_to_string(d.join("st/psi.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let (mut total, mut steps) = (0.0, 0usize);
    for r in rdr.records() {
        let r = r.unwrap();
        total += r[1].parse::<f64>().unwrap();
        steps += r[2].parse::<usize>().unwrap();
    }
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(steps, 480);
}

#[test]
fn fbplot_reports_bands_and_containment() {
    let dir = workspace();
    let d = dir.path();
    fs::write(
        d.join("curves.csv"),
        "curve,1,2,3\nc0,0.1,0.2,0.3\nc1,0.2,0.3,0.4\nc2,0.3,0.4,0.5\nc3,0.4,0.5,0.6\nc4,0.5,0.6,0.7\n",
    )
    .unwrap();
    fs::write(d.join("obs.csv"), "curve,1,2,3\nobs,0.25,0.9,NA\n").unwrap();
    ok(d, &["fbplot", "--curves", "curves.csv", "--obs", "obs.csv", "--out", "fb.csv"]);
    let text = fs::read_to_string(d.join("fb.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    // parallel curves: the middle one is deepest, the 3 deepest form the central region
    assert_eq!(&rows[0][1], "0.3");
    assert_eq!((&rows[0][2], &rows[0][3]), ("0.2", "0.4"));
    assert_eq!((&rows[0][4], &rows[0][5]), ("0.1", "0.5"));
    assert_eq!(&rows[0][7], "1");
    assert_eq!(&rows[1][7], "0");
    assert_eq!(&rows[2][7], "");

    fs::write(d.join("bad.csv"), "curve,1,2\nobs,0.1,0.2\n").unwrap();
    let out = trf(d, &["fbplot", "--curves", "curves.csv", "--obs", "bad.csv", "--out", "fb2.csv"]);
    assert!(!out.status.success());
}

#[test]
fn fit_and_simulate_from_fit_round_trip() {
    let dir = workspace();
    let d = dir.path();
    simulate_obs(d, "obs.csv", &[]);
    ok(
        d,
        &[
            "fit", "--obs", "obs.csv", "--network", "net.csv", "--cutoff-p", "0.85", "--nu-grid", "3,4", "--M", "2",
            "--max-evals", "15", "--bounds", "alpha=0.1:1.0", "--seed", "4", "--out", "fit.json",
        ],
    );
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["schema"], "trf-fit-result/1");
    assert_eq!(fit["per_nu"].as_array().unwrap().len(), 2);
    let alpha = fit["theta"]["alpha"].as_f64().unwrap();
    assert!((0.1..=1.0).contains(&alpha));
    ok(d, &["simulate", "--network", "net.csv", "--fit", "fit.json", "--steps", "100", "--cutoff-p", "0.85", "--out", "s.csv"]);
    assert_eq!(read_occurrence(&d.join("s.csv")).unwrap().field.occ.steps(), 100);
}

#[test]
fn match_range_writes_report() {
    let dir = workspace();
    let d = dir.path();
    ok(
        d,
        &[
            "match-range", "--network", "net.csv", "--nu", "3", "--alpha", "0.5", "--p-dry", "0.9", "--target-reps",
            "20000", "--mc-budget", "20000", "--grid-points", "9", "--check-reps", "2000", "--out", "m.json",
        ],
    );
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    let a = m["alpha_matched"].as_f64().unwrap();
    assert!(a > 0.05 && a < 5.0);
    assert_eq!(m["trf"]["psi"].as_array().unwrap().len(), 6);
}

fn write_run_config(d: &Path, extra: &str) -> PathBuf {
    simulate_obs(d, "obs.csv", &[]);
    let path = d.join("run.toml");
    fs::write(
        &path,
        format!(
            "seed = 5\nout_dir = \"res\"\n[inputs]\nnetwork = \"net.csv\"\noccurrence = \"obs.csv\"\n\
             [cutoff]\nh_max = 2\n[fit]\nnu_grid = [3]\nreplications = 2\nmax_evals = 15\n\
             [simulate]\nreplications = 8\n{extra}"
        ),
    )
    .unwrap();
    path
}

#[test]
fn pipeline_manifests_are_byte_identical_across_runs_and_threads() {
    let dir = workspace();
    let d = dir.path();
    write_run_config(d, "");
    ok(d, &["run", "run.toml", "--threads", "1", "--out-dir", "r1"]);
    ok(d, &["run", "run.toml", "--threads", "4", "--out-dir", "r4"]);
    ok(d, &["run", "run.toml", "--threads", "2", "--out-dir", "r2"]);
    let m1 = fs::read(d.join("r1/manifest.json")).unwrap();
    assert_eq!(m1, fs::read(d.join("r4/manifest.json")).unwrap());
    assert_eq!(m1, fs::read(d.join("r2/manifest.json")).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&m1).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    for o in outputs {
        let path = o["path"].as_str().unwrap();
        let a = fs::read(d.join("r1").join(path)).unwrap();
        assert_eq!(a, fs::read(d.join("r4").join(path)).unwrap(), "{path}");
        assert_eq!(o["bytes"].as_u64().unwrap() as usize, a.len());
        assert_eq!(o["sha256"].as_str().unwrap(), trf::provenance::sha256_hex(&a));
    }
    let listed: Vec<&str> = outputs.iter().map(|o| o["path"].as_str().unwrap()).collect();
    for f in ["fit.json", "cutoff_model.json", "fbplot_dry.csv", "fbplot_rain.csv", "simulated.trfo", "stats/psi.csv"] {
        assert!(listed.contains(&f), "{f} missing from manifest");
    }

    // a different seed changes the artifacts
    ok(d, &["run", "run.toml", "--seed", "6", "--out-dir", "r6"]);
    assert_ne!(m1, fs::read(d.join("r6/manifest.json")).unwrap());
}

#[test]
fn dry_run_prints_plan_without_writing() {
    let dir = workspace();
    let d = dir.path();
    write_run_config(d, "");
    let out = ok(d, &["run", "run.toml", "--dry-run"]);
    let plan = String::from_utf8_lossy(&out.stdout);
    for stage in ["cutoff", "fit", "simulate", "stats", "fbplot"] {
        assert!(plan.contains(stage), "{plan}");
    }
    assert!(!d.join("res").exists());
}

#[test]
fn missing_input_is_named() {
    let dir = workspace();
    let d = dir.path();
    write_run_config(d, "");
    for extra in [&[][..], &["--dry-run"][..]] {
        let mut args = vec!["run", "run.toml", "--set", "inputs.occurrence=\"nowhere/occ.csv\""];
        args.extend_from_slice(extra);
        let out = trf(d, &args);
        assert!(!out.status.success());
        assert!(stderr(&out).contains("nowhere/occ.csv"), "{}", stderr(&out));
    }
    let out = trf(d, &["run", "absent.toml"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("absent.toml"));
    let out = trf(d, &["stats", "--occ", "ghost.csv", "--network", "net.csv", "--out", "st"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ghost.csv"));
}

#[test]
fn failed_stage_leaves_partial_outputs() {
    let dir = workspace();
    let d = dir.path();
    // inverted bounds pass config parsing but make the fit stage fail
    write_run_config(d, "");
    let out = trf(d, &["run", "run.toml", "--set", "fit.alpha=[1.0, 0.5]"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("stage `fit` failed"), "{}", stderr(&out));
    assert!(d.join("res/cutoff_model.json.partial").exists());
    assert!(!d.join("res/cutoff_model.json").exists());
    assert!(!d.join("res/manifest.json").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = workspace();
    let d = dir.path();
    write_run_config(d, "[fit2]\nx = 1\n");
    let out = trf(d, &["run", "run.toml", "--dry-run"]);
    assert!(!out.status.success());
}

#[test]
fn curves_written_by_the_pipeline_read_back() {
    let dir = workspace();
    let d = dir.path();
    write_run_config(d, "");
    ok(d, &["run", "run.toml"]);
    let t = read_curves(&d.join("res/sim_curves_dry.csv")).unwrap();
    assert_eq!(t.curves.len(), 8);
    assert_eq!(t.labels, ["1", "2", "3", "4"]);
    ok(d, &["fbplot", "--curves", "res/sim_curves_dry.csv", "--out", "fb.csv"]);
}
