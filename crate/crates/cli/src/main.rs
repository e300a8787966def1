use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msnoma::config::{ExperimentConfig, ExperimentKind, KEYS};
use msnoma::experiments::{run, write_output};
use msnoma::{Error, Exec};

const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "msnoma", version, about = "MS-NOMA positioning and communication experiments")]
#[command(after_help = "Exit codes: 0 ok, 2 configuration error, 3 a PCJPA run did not converge.\n\
Environment: MSNOMA_THREADS caps the worker pool.\n\
Every run writes resolved_config.txt and one <name>.plot.txt sidecar per plottable CSV.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average and per-sub-carrier BER under positioning interference.
    #[command(after_help = "ber_sweep.csv: eb_n0_db,cpr_db,avg_ber (cpr_db = inf is the noise-only reference)\n\
ber_per_subcarrier.csv: n,ber_ipp,ber_dpp,ber_np")]
    BerSweep(Common),
    /// Ranging accuracy versus CPR at fixed C/N0.
    #[command(
        after_help = "ranging_sweep.csv: cpr_db,bandwidth,sigma_exact_m,sigma_approx_m,sigma_nocomm_m,rel_err\n\
ranging_worst_by_puser.csv: bandwidth,puser,max_rel_err,at_cpr_db"
    )]
    RangingSweep(Common),
    /// PCJPA and equal power on one scenario.
    #[command(after_help = "allocate_powers.csv: gnb,puser,gain_db,pcjpa_power_w,ep_power_w\n\
allocate_users.csv: puser,x_m,y_m,pcjpa_covered,pcjpa_psi_m,ep_covered,ep_psi_m\n\
allocate_trace.csv: iteration,objective,max_qos_violation,max_budget_violation,max_hearability_violation\n\
allocate_summary.csv: strategy,flag,iterations_outer,iterations_inner,coverage,mean_psi_m,\
max_qos_violation,max_budget_violation,max_hearability_violation\n\
scenario.txt: kind index x y z lines")]
    Allocate(Common),
    /// Monte-Carlo comparison of PCJPA against equal power.
    #[command(after_help = "montecarlo_runs.csv: run,seed,flag,iterations_outer,iterations_inner,seconds,\
pcjpa_coverage,ep_coverage,pcjpa_mean_psi_m,ep_mean_psi_m,common_users,pcjpa_common_psi_m,ep_common_psi_m,\
max_qos_violation,max_budget_violation,max_hearability_violation\n\
montecarlo_users.csv: run,seed,puser,pcjpa_covered,pcjpa_psi_m,ep_covered,ep_psi_m\n\
montecarlo_powers.csv: run,seed,gnb,puser,pcjpa_power_w,ep_power_w\n\
montecarlo_summary.csv: strategy,runs,converged_runs,coverage,mean_psi_m,common_mean_psi_m,common_wins,comparable_runs\n\
montecarlo_cdf.csv: strategy,psi_m,cdf")]
    Montecarlo(Common),
    /// Coverage and accuracy of a probe P-User over a grid.
    #[command(after_help = "coverage_map_pcjpa.csv, coverage_map_equal.csv: x_m,y_m,covered,psi_m\n\
coverage_map_summary.csv: strategy,covered_fraction,mean_psi_m,corner_mean_psi_m,center_mean_psi_m")]
    CoverageMap(Common),
    /// Allocated power against positioning channel gain.
    #[command(after_help = "power_vs_gain.csv: p_user_index,gnb_index,gain_db,allocated_power\n\
power_vs_gain_spearman.csv: gnb_index,spearman_rho")]
    PowerVsGain(Common),
    /// List every configuration key with its default.
    Keys,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 0 even when a PCJPA run hits the iteration cap.
    #[arg(long)]
    allow_nonconverged: bool,
    /// Run replicas and inner loops on one thread.
    #[arg(long)]
    sequential: bool,
    /// Extra `key=value` override; repeatable, applied after the other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(common: &Common, kind: ExperimentKind) -> msnoma::Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::parse_file(p)?,
        None => ExperimentConfig::default(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(s) = common.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(r) = common.runs {
        overrides.push(("runs".into(), r.to_string()));
    }
    if let Some(o) = &common.out {
        overrides.push(("out".into(), o.display().to_string()));
    }
    if common.allow_nonconverged {
        overrides.push(("allow_nonconverged".into(), "true".into()));
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        overrides.push((k.trim().into(), v.trim().into()));
    }
    let mut cfg = cfg.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    cfg.experiment = Some(kind);
    Ok(cfg)
}

fn init_pool() -> Result<(), String> {
    let Ok(v) = std::env::var("MSNOMA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("MSNOMA_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("MSNOMA_THREADS must be at least 1".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::BerSweep(c) => (ExperimentKind::BerSweep, c),
        Command::RangingSweep(c) => (ExperimentKind::RangingSweep, c),
        Command::Allocate(c) => (ExperimentKind::Allocate, c),
        Command::Montecarlo(c) => (ExperimentKind::MonteCarlo, c),
        Command::CoverageMap(c) => (ExperimentKind::CoverageMap, c),
        Command::PowerVsGain(c) => (ExperimentKind::PowerVsGain, c),
        Command::Keys => {
            let defaults = ExperimentConfig::default().to_text();
            for ((key, doc), line) in KEYS.iter().zip(defaults.lines().skip(1)) {
                println!("{line:<60} # {doc}");
                debug_assert!(line.starts_with(key));
            }
            return ExitCode::SUCCESS;
        }
    };
    if let Err(e) = init_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let cfg = match resolve(&common, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let exec = if common.sequential { Exec::Sequential } else { Exec::Parallel };
    let out = match run(&cfg, kind, exec) {
        Ok(o) => o,
        Err(e @ (Error::Config(_) | Error::Parse { .. })) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e @ Error::NotConverged { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NONCONVERGED);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let dir = PathBuf::from(&cfg.out);
    match write_output(&dir, &cfg, &out) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    for n in &out.notes {
        println!("{n}");
    }
    if !out.nonconverged.is_empty() {
        let seeds: Vec<String> = out.nonconverged.iter().map(|s| s.to_string()).collect();
        eprintln!("PCJPA did not converge for seed(s) {}", seeds.join(", "));
        if !cfg.allow_nonconverged {
            return ExitCode::from(EXIT_NONCONVERGED);
        }
    }
    ExitCode::SUCCESS
}
