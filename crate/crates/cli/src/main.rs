//! `itisim` command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
//! runtime and numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use itisim::estimation::{crlb_general, crlb_joint_closed_form};
use itisim::harness::presets::load_preset;
use itisim::harness::{self, write_csv, MetricRecord, RunOptions, ScenarioConfig, SIGMA2_FORMULA};
use itisim::pilots::{make_joint_plan, PilotFamily};

#[derive(Parser, Debug)]
#[command(name = "itisim", version, about = "Reuse-1 OFDMA inter-tower interference link simulator")]
struct Cli {
    /// Worker threads for Monte Carlo trials (results do not depend on it).
    #[arg(long, global = true, env = "ITISIM_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Full-band estimation MSE against the bound.
    Fig2(PresetArgs),
    /// Used-band estimation MSE with carrier offsets.
    Fig3(PresetArgs),
    /// BLER for mean, no and maximum-offset derotation.
    Fig4(PresetArgs),
    /// BLER against the offset range.
    Fig5(PresetArgs),
    /// BLER against interferer count, power and constellation.
    Fig6(PresetArgs),
    /// BLER of the code-rate improvement scheme.
    Fig7(PresetArgs),
    /// Print the estimation bound for full-band unit pilots.
    Crlb {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma2: f64,
    },
    /// Check a scenario file or preset without running it.
    Validate {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        full_scale: bool,
        /// `key=value` overrides (dotted paths, e.g. `towers.1.power_db=-9`).
        overrides: Vec<String>,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Replace the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `results/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` overrides applied after loading (dotted paths).
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct PresetArgs {
    /// Use the N = 2048 numerology instead of the desk-scale one (slow).
    #[arg(long)]
    full_scale: bool,
    #[command(flatten)]
    common: CommonArgs,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<itisim::Error> for Failure {
    fn from(e: itisim::Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(format!("{e:#}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let opts = RunOptions { workers: cli.workers };
    match cli.command {
        Command::Run { config, common } => {
            let overrides = with_seed(&common);
            let text = fs::read_to_string(&config)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg = ScenarioConfig::from_toml_str_with_overrides(&text, &overrides)?;
            let out = common.out.clone().unwrap_or_else(|| Path::new("results").join(&cfg.scenario_id));
            let source = format!("run --config {}", config.display());
            execute(&source, vec![cfg], &overrides, false, &out, &opts)
        }
        Command::Fig2(a) => preset("fig2", a, &opts),
        Command::Fig3(a) => preset("fig3", a, &opts),
        Command::Fig4(a) => preset("fig4", a, &opts),
        Command::Fig5(a) => preset("fig5", a, &opts),
        Command::Fig6(a) => preset("fig6", a, &opts),
        Command::Fig7(a) => preset("fig7", a, &opts),
        Command::Crlb { m, l, n, sigma2 } => {
            let closed = crlb_joint_closed_form(m, l, n, sigma2);
            let bins: Vec<usize> = (0..n).collect();
            let plan = make_joint_plan(m, &bins, &bins, l, n, PilotFamily::CyclicShift, 0)?;
            let general = crlb_general(&plan, l, sigma2, n)?;
            println!("closed_form {}", round_sig(closed));
            println!("general_trace {}", round_sig(general));
            Ok(())
        }
        Command::Validate { config, preset, full_scale, overrides } => {
            let configs = match (config, preset) {
                (Some(path), _) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
                    vec![ScenarioConfig::from_toml_str_with_overrides(&text, &overrides)?]
                }
                (None, Some(name)) => load_preset(&name, full_scale, &overrides)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            for c in &configs {
                let r = c.resolve()?;
                eprintln!("ok: {} (L = {}, {} pilot bins)", c.scenario_id, r.l_taps, r.plan.n_pilots_total);
            }
            Ok(())
        }
    }
}

/// Rounds to 12 significant digits so exact values print exactly.
fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(11 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

fn with_seed(common: &CommonArgs) -> Vec<String> {
    let mut ov = common.overrides.clone();
    if let Some(s) = common.seed {
        ov.push(format!("master_seed={s}"));
    }
    ov
}

fn preset(name: &str, a: PresetArgs, opts: &RunOptions) -> Result<(), Failure> {
    let overrides = with_seed(&a.common);
    if a.full_scale {
        eprintln!("warning: full-scale presets (N = 2048) take orders of magnitude longer than desk scale");
    }
    let configs = load_preset(name, a.full_scale, &overrides)?;
    let out = a.common.out.clone().unwrap_or_else(|| Path::new("results").join(name));
    execute(name, configs, &overrides, a.full_scale, &out, opts)
}

fn execute(
    source: &str,
    configs: Vec<ScenarioConfig>,
    overrides: &[String],
    full_scale: bool,
    out: &Path,
    opts: &RunOptions,
) -> Result<(), Failure> {
    let scen_dir = out.join("scenarios");
    fs::create_dir_all(&scen_dir).with_context(|| format!("cannot create {}", scen_dir.display()))?;
    for c in &configs {
        let path = scen_dir.join(format!("{}.toml", c.scenario_id));
        fs::write(&path, c.to_toml_string()?).with_context(|| format!("cannot write {}", path.display()))?;
    }
    fs::write(out.join("run.toml"), metadata(source, &configs, overrides, full_scale))
        .context("cannot write run metadata")?;

    let mut records: Vec<MetricRecord> = Vec::new();
    for c in &configs {
        let start = Instant::now();
        let recs = harness::run(c, opts)?;
        eprintln!("{}: {} records in {:.1} s", c.scenario_id, recs.len(), start.elapsed().as_secs_f64());
        for r in &recs {
            println!(
                "{:<28} {:<16} {:>6.2} dB  {:<12.5e} {}",
                r.scenario_id,
                r.metric_kind.as_str(),
                r.eb_n0_db,
                r.value,
                match (r.crlb_value, r.error_blocks) {
                    (Some(b), _) => format!("bound {b:.5e}"),
                    (_, Some(e)) => format!("{e}/{} blocks", r.trials),
                    _ => String::new(),
                }
            );
        }
        records.extend(recs);
    }
    let csv = out.join("results.csv");
    write_csv(&records, &csv)?;
    eprintln!("wrote {}", csv.display());
    Ok(())
}

fn metadata(source: &str, configs: &[ScenarioConfig], overrides: &[String], full_scale: bool) -> String {
    let list = |v: &[String]| v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
    let ids: Vec<String> = configs.iter().map(|c| c.scenario_id.clone()).collect();
    format!(
        "# Written by itisim {}; every scenario's resolved config is under scenarios/.\n\
         source = {source:?}\n\
         full_scale = {full_scale}\n\
         overrides = [{}]\n\
         scenarios = [{}]\n\
         sigma2_formula = {SIGMA2_FORMULA:?}\n\
         csv_columns = [{}]\n",
        env!("CARGO_PKG_VERSION"),
        list(overrides),
        list(&ids),
        list(&harness::CSV_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
    )
}
