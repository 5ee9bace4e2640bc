//! Experiment runner: binds the library to config files and deterministic
//! output directories. Every run writes a manifest echoing the resolved
//! configuration, the seed and the crate versions; data files are CSV and
//! summaries JSON. Re-running the same config with the same seed reproduces
//! every output byte for byte.

mod config;

use anyhow::Context;
use clap::Parser;
use config::{ExperimentConfig, Kind};
use serde::Serialize;
use ssmp::battery;
use ssmp::conditioning::EntranceBuilder;
use ssmp::fluctuation::PassageConfig;
use ssmp::lamperti::lamperti_kiu;
use ssmp::rng::rng_fork;
use ssmp::simulate::simulate_map;
use ssmp::spec::stationary_pi;
use ssmp::stats::EmpiricalDist;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "ssmp", about = "MAP / self-similar Markov process experiment runner")]
struct Args {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replica-parallel reductions.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    core_version: &'static str,
    cli_version: &'static str,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn write_dist_csv(path: &Path, dist: &EmpiricalDist, header: &str) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for (row, w) in dist.samples.iter().zip(&dist.weights) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{}", cells.join(","), w)?;
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<bool> {
    let seed = cfg.seed;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    write_json(
        &out_dir.join("manifest.json"),
        &Manifest {
            config: cfg,
            seed,
            core_version: env!("CARGO_PKG_VERSION"),
            cli_version: env!("CARGO_PKG_VERSION"),
        },
    )?;
    let passage_cfg = PassageConfig {
        mesh: cfg.mesh,
        ..Default::default()
    };
    match cfg.kind {
        Kind::Simulate => {
            let spec = require_map(cfg)?;
            let path = simulate_map(
                &spec,
                cfg.x0,
                cfg.theta0_state,
                cfg.horizon,
                cfg.mesh,
                rng_fork(seed, 0),
            )?;
            let mut f = fs::File::create(out_dir.join("map_path.csv"))?;
            path.write_csv(&mut f)?;
            let ss = lamperti_kiu(&path, cfg.alpha)?;
            let mut f = fs::File::create(out_dir.join("ssmp_path.csv"))?;
            ss.write_csv(&mut f)?;
            write_json(
                &out_dir.join("summary.json"),
                &serde_json::json!({
                    "samples": path.len(),
                    "final_xi": path.xi.last(),
                    "lifetime": path.lifetime,
                    "clock_end": ss.times.last(),
                }),
            )?;
        }
        Kind::Passage => {
            let spec = require_map(cfg)?;
            let level = *cfg.levels.last().unwrap();
            let ens = ssmp::fluctuation::overshoot_ensemble(
                &spec,
                cfg.theta0_state,
                level,
                cfg.n,
                rng_fork(seed, 0),
                &passage_cfg,
            )?;
            write_dist_csv(
                &out_dir.join("passage.csv"),
                &ens,
                "state_before,neg_undershoot,state_after,overshoot,weight",
            )?;
            let z = ens.marginal(3)?;
            let mean: f64 = z.iter().map(|(v, w)| v * w).sum();
            write_json(
                &out_dir.join("summary.json"),
                &serde_json::json!({ "level": level, "n": ens.len(), "mean_overshoot": mean }),
            )?;
        }
        Kind::Rho => {
            let spec = require_map(cfg)?;
            let est = ssmp::stationary::estimate_rho(
                &spec,
                cfg.theta0_state,
                &cfg.levels,
                cfg.n,
                rng_fork(seed, 0),
                &passage_cfg,
            )?;
            for (level, dist) in est.levels.iter().zip(&est.per_level) {
                write_dist_csv(
                    &out_dir.join(format!("rho_x{level}.csv")),
                    dist,
                    "state_before,neg_undershoot,state_after,overshoot,weight",
                )?;
            }
            write_json(
                &out_dir.join("summary.json"),
                &serde_json::json!({
                    "levels": est.levels,
                    "distances_to_deepest": est.distances_to_deepest,
                }),
            )?;
        }
        Kind::Entrance => {
            let spec = require_map(cfg)?;
            let pi = stationary_pi(&spec.q)?;
            let deepest = *cfg.levels.last().unwrap();
            let oplus = ssmp::stationary::sample_rho_oplus(
                &spec,
                deepest,
                cfg.n,
                rng_fork(seed, 1),
                &passage_cfg,
            )?;
            let mut builder = EntranceBuilder::new(&spec, &pi, cfg.alpha)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            builder.k_stop = cfg.k_stop;
            builder.mesh = cfg.mesh;
            let mut quads = Vec::with_capacity(cfg.n);
            let mut masses = Vec::with_capacity(cfg.n);
            for (i, row) in oplus.samples.iter().enumerate().take(cfg.n) {
                let s = builder
                    .sample(row[0], row[1] as usize, rng_fork(seed, (2 << 40) + i as u64))
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                if i == 0 {
                    let mut f = fs::File::create(out_dir.join("entrance_path_0.csv"))?;
                    s.path.write_csv(&mut f)?;
                }
                masses.push(s.truncated_clock_mass);
                quads.push(s.exit.to_vec());
            }
            let dist = EmpiricalDist::new(quads)?;
            write_dist_csv(
                &out_dir.join("entrance_quadruples.csv"),
                &dist,
                "pre_state,pre_logr,post_state,post_logr,weight",
            )?;
            let worst = masses.iter().cloned().fold(0.0, f64::max);
            write_json(
                &out_dir.join("summary.json"),
                &serde_json::json!({
                    "n": cfg.n,
                    "k_stop": builder.k_stop,
                    "max_truncated_clock_mass": worst,
                }),
            )?;
        }
        Kind::Cone => {
            let cone_cfg = cfg
                .cone
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("cone experiment needs a [cone] block"))?;
            let model =
                ssmp::cones::ConeModel::new(cone_cfg.theta0).map_err(|e| anyhow::anyhow!("{e}"))?;
            let ensembles = ssmp::cones::apex_exit_law(
                &model,
                &cfg.radii,
                cfg.n,
                cfg.mesh.min(5e-4),
                rng_fork(seed, 0),
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            for (r, angles) in cfg.radii.iter().zip(&ensembles) {
                let mut f = fs::File::create(out_dir.join(format!("exit_angles_r{r}.csv")))?;
                writeln!(f, "angle")?;
                for a in angles {
                    writeln!(f, "{a}")?;
                }
            }
            write_json(
                &out_dir.join("model.json"),
                &serde_json::json!({
                    "theta0": model.theta0,
                    "lambda1": model.lambda1,
                    "p": model.p,
                }),
            )?;
        }
        Kind::Check => {
            let results = battery::run_all(seed).map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut all_pass = true;
            for c in &results {
                for r in &c.reports {
                    println!(
                        "criterion {:>2} [{}] {} :: {} = {:.6} ({} {:.6}) -> {}",
                        c.index,
                        c.name,
                        r.name,
                        r.statistic,
                        r.value,
                        r.relation,
                        r.threshold,
                        if r.pass { "PASS" } else { "FAIL" }
                    );
                }
                all_pass &= c.pass;
            }
            write_json(&out_dir.join("summary.json"), &results)?;
            return Ok(all_pass);
        }
    }
    Ok(true)
}

fn require_map(cfg: &ExperimentConfig) -> anyhow::Result<ssmp::MapSpec> {
    let map = cfg
        .map
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("this experiment needs a [map] block"))?;
    map.to_spec()
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not configure {jobs} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out.display().to_string();
    }
    // namespace outputs by experiment kind and seed
    let kind = match serde_json::to_value(&cfg.kind) {
        Ok(serde_json::Value::String(s)) => s,
        _ => "experiment".into(),
    };
    let out_dir = PathBuf::from(&cfg.out).join(format!("{kind}-seed{}", cfg.seed));
    match run(&cfg, &out_dir) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_passage_config() -> ExperimentConfig {
        toml::from_str(
            r#"
kind = "passage"
seed = 11
n = 2000
levels = [3.0]

[map]
states = 1
q = [[0.0]]
drift = [-0.2]
sigma = [0.0]

[[map.jump]]
state = 0
rate = 1.0
law = { kind = "exponential", beta = 1.0, up = true }
"#,
        )
        .unwrap()
    }

    #[test]
    fn passage_run_writes_manifest_and_data() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_passage_config();
        assert!(run(&cfg, dir.path()).unwrap());
        for file in ["manifest.json", "passage.csv", "summary.json"] {
            assert!(dir.path().join(file).exists(), "{file} missing");
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = tiny_passage_config();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run(&cfg, d1.path()).unwrap();
        run(&cfg, d2.path()).unwrap();
        for file in ["manifest.json", "passage.csv", "summary.json"] {
            let a = fs::read(d1.path().join(file)).unwrap();
            let b = fs::read(d2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between reruns");
        }
    }

    #[test]
    fn simulate_run_exports_both_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: ExperimentConfig = toml::from_str(
            r#"
kind = "simulate"
seed = 5
horizon = 0.5
mesh = 0.01

[map]
states = 2
q = [[-1.0, 1.0], [1.0, -1.0]]
drift = [0.4, -0.4]
sigma = [0.5, 0.5]
"#,
        )
        .unwrap();
        assert!(run(&cfg, dir.path()).unwrap());
        let map_csv = fs::read_to_string(dir.path().join("map_path.csv")).unwrap();
        assert!(map_csv.starts_with("t,xi,theta"));
        let ss_csv = fs::read_to_string(dir.path().join("ssmp_path.csv")).unwrap();
        assert!(ss_csv.starts_with("t,r,theta"));
    }
}
