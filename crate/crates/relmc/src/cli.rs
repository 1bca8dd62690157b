//! Command-line interface: argument parsing, run orchestration, and
//! output writing.
//!
//! Every subcommand writes a run manifest next to its primary output.
//! Output files are timing-free by default so that re-running the
//! manifest's argument vector with `--workers 1` reproduces them
//! byte-for-byte; pass `--timing` to record wall-clock measurements
//! instead (at the price of reproducibility of those fields).

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

use crate::diagnostics::{diagnose_levels, fit_rates, speedup_curve, CostSeries, LevelSummary};
use crate::dist::RngStream;
use crate::error::{Error, Result};
use crate::estimator::{run_mc, run_mlmc, EstimateResult, McConfig};
use crate::generator::{grow, GrowthConfig};
use crate::io::{
    csv_num, load_system, save_system, write_csv, write_json, RunManifest, SystemFile,
};
use crate::levels::{build_partition, pilot_scores, LevelPartition};
use crate::simulator::{sample_lifetime, sample_lifetime_repairable};
use crate::system::{enumerate_min_cutsets, DEFAULT_CUTSET_CAP};

/// Estimate expected lifetimes of cut-set systems by multilevel Monte
/// Carlo.
#[derive(Debug, Parser)]
#[command(name = "relmc", version, about)]
pub struct Cli {
    /// Worker threads for sampling (0 = all cores). Results are
    /// identical for every worker count.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Grow a random two-terminal system and write it with its cut
    /// sets and move log.
    Generate(GenerateArgs),
    /// Enumerate the minimal cut sets of a system file and write the
    /// file back with the `cutsets` field populated.
    Cutsets(CutsetsArgs),
    /// Run the pilot simulation and write the nested level partition.
    SelectLevels(SelectLevelsArgs),
    /// Single-level Monte Carlo estimate of the expected lifetime.
    Mc(McArgs),
    /// Multilevel Monte Carlo estimate over a saved partition.
    Mlmc(MlmcArgs),
    /// Draw raw lifetime samples as CSV.
    Simulate(SimulateArgs),
    /// Sample every level a fixed number of times and fit the
    /// mean-decay, variance-decay, and cost-growth rates.
    Diagnose(DiagnoseArgs),
    /// Predicted MC-over-MLMC cost ratio across an accuracy grid.
    Speedup(SpeedupArgs),
}

/// Accept plain decimals and `2^-k` powers (the usual accuracy
/// presets are `2^-4` and `2^-7`).
fn parse_eps(s: &str) -> std::result::Result<f64, String> {
    let v = if let Some(exp) = s.strip_prefix("2^") {
        let e: i32 = exp.parse().map_err(|_| format!("bad exponent in eps `{s}`"))?;
        2f64.powi(e)
    } else {
        s.parse::<f64>().map_err(|_| format!("eps `{s}` is not a number"))?
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("eps must be a positive finite number, got `{s}`"))
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of components to grow.
    #[arg(long)]
    pub n: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weibull shape shared by all components.
    #[arg(long, default_value_t = 1.0)]
    pub shape: f64,
    /// Lower end of the uniform scale-parameter range.
    #[arg(long, default_value_t = 2.0)]
    pub scale_min: f64,
    /// Upper end of the uniform scale-parameter range.
    #[arg(long, default_value_t = 10.0)]
    pub scale_max: f64,
    /// Exponential repair rate; omit for non-repairable components.
    #[arg(long)]
    pub repair_rate: Option<f64>,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub p_series: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub p_parallel: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub p_bridge: f64,
    /// Abort if the system has more minimal cut sets than this.
    #[arg(long, default_value_t = DEFAULT_CUTSET_CAP)]
    pub cutset_cap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CutsetsArgs {
    /// System file (the `cutsets` field may be absent).
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CUTSET_CAP)]
    pub cutset_cap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectLevelsArgs {
    pub input: PathBuf,
    /// Pilot replicate count.
    #[arg(long, default_value_t = 100)]
    pub pilot: usize,
    /// Top level L (levels 0..=L); defaults to floor(log2(#cut sets)).
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulate the failure/repair process in the pilot.
    #[arg(long)]
    pub repairable: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct McArgs {
    pub input: PathBuf,
    /// Target accuracy; accepts decimals or `2^-k`.
    #[arg(long, value_parser = parse_eps)]
    pub eps: f64,
    /// First-stage sample count for the variance estimate.
    #[arg(long, default_value_t = 100)]
    pub pilot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub repairable: bool,
    /// Record wall-clock fields in the outputs (not reproducible).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MlmcArgs {
    pub input: PathBuf,
    /// Partition file from `select-levels`.
    #[arg(long)]
    pub partition: PathBuf,
    #[arg(long, value_parser = parse_eps)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub repairable: bool,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub repairable: bool,
    /// Truncate repairable trajectories at this time.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub partition: PathBuf,
    /// Samples per level.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub repairable: bool,
    /// Record per-sample wall times and fit the cost-growth rate from
    /// them instead of the cut-set-count proxy.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpeedupArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub partition: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub repairable: bool,
    /// Use measured per-sample seconds as the cost; default is the
    /// cut-set-count proxy, which is deterministic.
    #[arg(long)]
    pub timing: bool,
    /// Comma-separated accuracy grid.
    #[arg(long, value_delimiter = ',', value_parser = parse_eps,
          default_value = "0.5,0.25,0.125,0.0625,0.03125,0.015625,0.0078125")]
    pub eps_grid: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Run a parsed command; returns the process exit code.
pub fn dispatch(cli: Cli) -> i32 {
    if cli.workers > 0 {
        // Ignore the error from configuring twice (tests call dispatch
        // repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let run = match &cli.cmd {
        Cmd::Generate(a) => cmd_generate(a, &argv, cli.workers),
        Cmd::Cutsets(a) => cmd_cutsets(a, &argv, cli.workers),
        Cmd::SelectLevels(a) => cmd_select_levels(a, &argv, cli.workers),
        Cmd::Mc(a) => cmd_mc(a, &argv, cli.workers),
        Cmd::Mlmc(a) => cmd_mlmc(a, &argv, cli.workers),
        Cmd::Simulate(a) => cmd_simulate(a, &argv, cli.workers),
        Cmd::Diagnose(a) => cmd_diagnose(a, &argv, cli.workers),
        Cmd::Speedup(a) => cmd_speedup(a, &argv, cli.workers),
    };
    match run {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

/// Sibling output path `<stem><suffix>` next to the primary output.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

struct ManifestSpec<'a> {
    subcommand: &'a str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: u64,
    eps: Option<f64>,
    repairable: bool,
    partition: Option<PathBuf>,
    growth: Option<GrowthConfig>,
}

fn write_manifest(out: &Path, spec: ManifestSpec, argv: &[String], workers: usize) -> Result<()> {
    let manifest = RunManifest {
        subcommand: spec.subcommand.to_string(),
        argv: argv.to_vec(),
        inputs: spec.inputs,
        outputs: spec.outputs,
        seed: spec.seed,
        eps: spec.eps,
        repairable: spec.repairable,
        partition: spec.partition,
        growth: spec.growth,
        workers,
    };
    write_json(&manifest_path(out), &manifest)
}

fn load_system_with_cuts(path: &Path) -> Result<crate::system::System> {
    let sys = load_system(path)?;
    if sys.cutsets.is_empty() {
        return Err(Error::Input(format!(
            "{}: system file has no cut sets; run `relmc cutsets` first",
            path.display()
        )));
    }
    Ok(sys)
}

fn check_repairable(sys: &crate::system::System, repairable: bool) -> Result<()> {
    if repairable && !sys.all_repairable() {
        return Err(Error::Input(
            "--repairable requires a repair distribution on every component".into(),
        ));
    }
    Ok(())
}

fn load_partition(path: &Path) -> Result<LevelPartition> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Zero the wall-clock fields so the document is reproducible.
fn scrub_result(r: &mut EstimateResult) {
    r.wall_seconds = 0.0;
    r.cost_seconds_proxy = 0.0;
    for s in &mut r.levels {
        s.kappa_seconds = 0.0;
    }
}

fn write_result(out: &Path, result: &EstimateResult) -> Result<()> {
    write_json(out, result)?;
    let rows: Vec<Vec<String>> = result
        .levels
        .iter()
        .map(|s| {
            vec![
                s.level.to_string(),
                s.n.to_string(),
                csv_num(s.mean),
                csv_num(s.var),
                s.n_cutsets.to_string(),
                csv_num(s.kappa_seconds),
            ]
        })
        .collect();
    write_csv(
        &sibling(out, "-levels.csv"),
        &["level", "n", "mean", "var", "cost_proxy", "kappa_seconds"],
        &rows,
    )
}

fn cmd_generate(a: &GenerateArgs, argv: &[String], workers: usize) -> Result<()> {
    let cfg = GrowthConfig {
        target: a.n,
        p_series: a.p_series,
        p_parallel: a.p_parallel,
        p_bridge: a.p_bridge,
        shape: a.shape,
        scale_min: a.scale_min,
        scale_max: a.scale_max,
        repair_rate: a.repair_rate,
        cutset_cap: a.cutset_cap,
    };
    let grown = grow(&cfg, RngStream::new(a.seed, 0))?;
    save_system(&a.out, &grown.system, Some(grown.moves))?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "generate",
            inputs: vec![],
            outputs: vec![a.out.clone()],
            seed: a.seed,
            eps: None,
            repairable: a.repair_rate.is_some(),
            partition: None,
            growth: Some(cfg),
        },
        argv,
        workers,
    )?;
    println!(
        "generated {} components, {} minimal cut sets -> {}",
        grown.system.n_components(),
        grown.system.cutsets.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_cutsets(a: &CutsetsArgs, argv: &[String], workers: usize) -> Result<()> {
    // Keep the move log if the input carries one.
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| Error::Input(format!("{}: {e}", a.input.display())))?;
    let file: SystemFile = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", a.input.display())))?;
    let move_log = file.move_log.clone();
    let mut sys = file.into_system()?;
    sys.cutsets = enumerate_min_cutsets(&sys.network, a.cutset_cap)?;
    save_system(&a.out, &sys, move_log)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "cutsets",
            inputs: vec![a.input.clone()],
            outputs: vec![a.out.clone()],
            seed: 0,
            eps: None,
            repairable: false,
            partition: None,
            growth: None,
        },
        argv,
        workers,
    )?;
    println!("{} minimal cut sets -> {}", sys.cutsets.len(), a.out.display());
    Ok(())
}

fn cmd_select_levels(a: &SelectLevelsArgs, argv: &[String], workers: usize) -> Result<()> {
    let sys = load_system_with_cuts(&a.input)?;
    check_repairable(&sys, a.repairable)?;
    let pilot = pilot_scores(&sys, a.pilot, RngStream::new(a.seed, 1), a.repairable)?;
    let mut partition = build_partition(&sys, &pilot, a.levels)?;
    // The pilot's wall time is a measurement; keep the file reproducible.
    partition.pilot_wall_seconds = 0.0;
    write_json(&a.out, &partition)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "select-levels",
            inputs: vec![a.input.clone()],
            outputs: vec![a.out.clone()],
            seed: a.seed,
            eps: None,
            repairable: a.repairable,
            partition: Some(a.out.clone()),
            growth: None,
        },
        argv,
        workers,
    )?;
    println!(
        "partition with {} levels over {} cut sets -> {}",
        partition.levels.len(),
        partition.n_cutsets,
        a.out.display()
    );
    Ok(())
}

fn cmd_mc(a: &McArgs, argv: &[String], workers: usize) -> Result<()> {
    let sys = load_system_with_cuts(&a.input)?;
    check_repairable(&sys, a.repairable)?;
    let cfg = McConfig { eps: a.eps, z: 1.96, pilot: a.pilot };
    let mut result =
        run_mc(&sys, &sys.cutsets, &cfg, RngStream::new(a.seed, 2), a.repairable)?;
    if !a.timing {
        scrub_result(&mut result);
    }
    write_result(&a.out, &result)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "mc",
            inputs: vec![a.input.clone()],
            outputs: vec![a.out.clone(), sibling(&a.out, "-levels.csv")],
            seed: a.seed,
            eps: Some(a.eps),
            repairable: a.repairable,
            partition: None,
            growth: None,
        },
        argv,
        workers,
    )?;
    println!(
        "mc estimate {} (se {}) with {} samples -> {}",
        result.estimate,
        result.variance.sqrt(),
        result.levels[0].n,
        a.out.display()
    );
    Ok(())
}

fn cmd_mlmc(a: &MlmcArgs, argv: &[String], workers: usize) -> Result<()> {
    let sys = load_system_with_cuts(&a.input)?;
    check_repairable(&sys, a.repairable)?;
    let partition = load_partition(&a.partition)?;
    let mut result = run_mlmc(&sys, &partition, a.eps, RngStream::new(a.seed, 3), a.repairable)?;
    if !a.timing {
        scrub_result(&mut result);
    }
    write_result(&a.out, &result)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "mlmc",
            inputs: vec![a.input.clone(), a.partition.clone()],
            outputs: vec![a.out.clone(), sibling(&a.out, "-levels.csv")],
            seed: a.seed,
            eps: Some(a.eps),
            repairable: a.repairable,
            partition: Some(a.partition.clone()),
            growth: None,
        },
        argv,
        workers,
    )?;
    println!(
        "mlmc estimate {} (se {}) over {} levels -> {}",
        result.estimate,
        result.variance.sqrt(),
        result.levels.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, argv: &[String], workers: usize) -> Result<()> {
    let sys = load_system_with_cuts(&a.input)?;
    check_repairable(&sys, a.repairable)?;
    if a.samples < 1 {
        return Err(Error::Parameter("--samples must be >= 1".into()));
    }
    const CHUNK: usize = 256;
    let stream = RngStream::new(a.seed, 4);
    let n_chunks = a.samples.div_ceil(CHUNK);
    let rows: Vec<(f64, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream.derive(chunk as u64).rng();
            let count = CHUNK.min(a.samples - chunk * CHUNK);
            let mut local = Vec::with_capacity(count);
            for _ in 0..count {
                if a.repairable {
                    let s = sample_lifetime_repairable(&sys, &sys.cutsets, &mut rng, a.horizon)?;
                    local.push((s.lifetime, s.n_repairs));
                } else {
                    local.push((sample_lifetime(&sys, &sys.cutsets, &mut rng), 0));
                }
            }
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, &(t, r))| vec![i.to_string(), csv_num(t), r.to_string()])
        .collect();
    write_csv(&a.out, &["sample_index", "lifetime", "n_repairs"], &csv_rows)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "simulate",
            inputs: vec![a.input.clone()],
            outputs: vec![a.out.clone()],
            seed: a.seed,
            eps: None,
            repairable: a.repairable,
            partition: None,
            growth: None,
        },
        argv,
        workers,
    )?;
    println!("{} samples -> {}", rows.len(), a.out.display());
    Ok(())
}

fn summaries_to_csv(levels: &[LevelSummary], timing: bool) -> Vec<Vec<String>> {
    levels
        .iter()
        .map(|s| {
            vec![
                s.level.to_string(),
                csv_num(s.mean),
                csv_num(s.var),
                s.n_cutsets.to_string(),
                csv_num(if timing { s.kappa_seconds } else { 0.0 }),
            ]
        })
        .collect()
}

fn cmd_diagnose(a: &DiagnoseArgs, argv: &[String], workers: usize) -> Result<()> {
    let sys = load_system_with_cuts(&a.input)?;
    check_repairable(&sys, a.repairable)?;
    let partition = load_partition(&a.partition)?;
    let levels =
        diagnose_levels(&sys, &partition, a.samples, RngStream::new(a.seed, 5), a.repairable)?;
    let cost = if a.repairable && a.timing { CostSeries::Kappa } else { CostSeries::Geometric };
    let rates = fit_rates(&levels, cost)?;
    write_csv(
        &a.out,
        &["level", "mean", "var", "cost_proxy", "kappa_seconds"],
        &summaries_to_csv(&levels, a.timing),
    )?;
    let rates_path = sibling(&a.out, "-rates.json");
    write_json(&rates_path, &rates)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "diagnose",
            inputs: vec![a.input.clone(), a.partition.clone()],
            outputs: vec![a.out.clone(), rates_path],
            seed: a.seed,
            eps: None,
            repairable: a.repairable,
            partition: Some(a.partition.clone()),
            growth: None,
        },
        argv,
        workers,
    )?;
    println!(
        "alpha {} beta {} gamma {} -> {}",
        rates.alpha,
        rates.beta,
        rates.gamma,
        a.out.display()
    );
    Ok(())
}

fn cmd_speedup(a: &SpeedupArgs, argv: &[String], workers: usize) -> Result<()> {
    let sys = load_system_with_cuts(&a.input)?;
    check_repairable(&sys, a.repairable)?;
    let partition = load_partition(&a.partition)?;
    let stream = RngStream::new(a.seed, 6);
    let mut levels = diagnose_levels(&sys, &partition, a.samples, stream, a.repairable)?;

    // Full-system variance and per-sample cost: the top level of the
    // partition samples the complete cut-set collection.
    let top = partition.top_level();
    let full = diagnose_levels(
        &sys,
        &LevelPartition {
            levels: vec![partition.levels[top].clone()],
            n_cutsets: partition.n_cutsets,
            pilot_cost_proxy: 0.0,
            pilot_wall_seconds: 0.0,
        },
        a.samples,
        stream.derive(0xf011),
        a.repairable,
    )?;
    let (mc_var, kappa_full) = if a.timing {
        (full[0].var, full[0].kappa_seconds)
    } else {
        // Deterministic cost proxy: cut sets evaluated per sample.
        for s in &mut levels {
            s.kappa_seconds = s.n_cutsets as f64;
        }
        (full[0].var, sys.cutsets.len() as f64)
    };

    let mut grid = a.eps_grid.clone();
    grid.sort_by(f64::total_cmp);
    let curve = speedup_curve(mc_var, kappa_full, &levels, &grid);
    let rows: Vec<Vec<String>> =
        curve.iter().map(|&(e, s)| vec![csv_num(e), csv_num(s)]).collect();
    write_csv(&a.out, &["eps", "speedup"], &rows)?;
    write_manifest(
        &a.out,
        ManifestSpec {
            subcommand: "speedup",
            inputs: vec![a.input.clone(), a.partition.clone()],
            outputs: vec![a.out.clone()],
            seed: a.seed,
            eps: None,
            repairable: a.repairable,
            partition: Some(a.partition.clone()),
            growth: None,
        },
        argv,
        workers,
    )?;
    println!("speedup at coarsest eps {}: {} -> {}", curve.last().unwrap().0, curve.last().unwrap().1, a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_parser_accepts_presets_and_decimals() {
        assert_eq!(parse_eps("0.0625").unwrap(), 0.0625);
        assert_eq!(parse_eps("2^-4").unwrap(), 0.0625);
        assert_eq!(parse_eps("2^-7").unwrap(), 0.0078125);
        assert!(parse_eps("0").is_err());
        assert!(parse_eps("-1").is_err());
        assert!(parse_eps("nan").is_err());
    }

    #[test]
    fn manifest_and_sibling_paths() {
        let out = Path::new("runs/result.json");
        assert_eq!(manifest_path(out), Path::new("runs/result.manifest.json"));
        assert_eq!(sibling(out, "-levels.csv"), Path::new("runs/result-levels.csv"));
    }
}
