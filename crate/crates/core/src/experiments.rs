//! Experiment suites: BER and ranging sweeps, single allocations,
//! Monte-Carlo comparison against equal power, coverage maps and
//! power-versus-gain tables. Results are CSV text plus plot sidecars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::allocator::{equal_power, pcjpa, probe_response, trace_csv, AllocationReport, Problem};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::Position;
use crate::mathkit::{erfc, QuadratureSpec};
use crate::ranging::{equivalent_comm_gain, ranging_var_approx, ranging_var_exact, C};
use crate::scenario::{build_scenario, Scenario};
use crate::signal::{ber_single_cell, ChannelGains, PowerMatrix, SignalPlan};

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub contents: String,
}

/// Axis labels and series of one plot over a CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub data: String,
    pub kind: &'static str,
    pub title: String,
    pub x: String,
    pub x_label: String,
    pub y: String,
    pub y_label: String,
    /// Column whose values split the rows into series.
    pub series: Option<String>,
    pub log_y: bool,
}

impl PlotSpec {
    fn new(data: &str, kind: &'static str, title: &str, x: (&str, &str), y: (&str, &str)) -> Self {
        Self {
            data: data.into(),
            kind,
            title: title.into(),
            x: x.0.into(),
            x_label: x.1.into(),
            y: y.0.into(),
            y_label: y.1.into(),
            series: None,
            log_y: false,
        }
    }

    fn series(mut self, column: &str) -> Self {
        self.series = Some(column.into());
        self
    }

    fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn sidecar_name(&self) -> String {
        let stem = self.data.strip_suffix(".csv").unwrap_or(&self.data);
        format!("{stem}.plot.txt")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "data = {}", self.data);
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "title = {}", self.title);
        let _ = writeln!(s, "x = {}", self.x);
        let _ = writeln!(s, "x_label = {}", self.x_label);
        let _ = writeln!(s, "y = {}", self.y);
        let _ = writeln!(s, "y_label = {}", self.y_label);
        let _ = writeln!(s, "y_scale = {}", if self.log_y { "log" } else { "linear" });
        if let Some(c) = &self.series {
            let _ = writeln!(s, "series = {c}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub artifacts: Vec<Artifact>,
    pub plots: Vec<PlotSpec>,
    /// Seeds whose PCJPA run hit the iteration cap.
    pub nonconverged: Vec<u64>,
    /// Short human-readable summary lines.
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    fn new(kind: ExperimentKind) -> Self {
        Self { kind, artifacts: Vec::new(), plots: Vec::new(), nonconverged: Vec::new(), notes: Vec::new() }
    }

    fn push(&mut self, file: &str, csv: Csv) {
        self.artifacts.push(Artifact { file: file.into(), contents: csv.text });
    }

    pub fn artifact(&self, file: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.file == file).map(|a| a.contents.as_str())
    }
}

/// CSV text builder with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    width: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { width: header.len(), text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, fields: &[&dyn Field]) {
        debug_assert_eq!(fields.len(), self.width);
        let line: Vec<String> = fields.iter().map(|f| f.field()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_text(self) -> String {
        self.text
    }
}

/// One CSV cell.
pub trait Field {
    fn field(&self) -> String;
}

impl Field for f64 {
    /// Shortest round-trip form; scientific outside [1e-3, 1e7).
    fn field(&self) -> String {
        let a = self.abs();
        if self.is_nan() {
            "nan".into()
        } else if self.is_infinite() {
            if *self > 0.0 {
                "inf".into()
            } else {
                "-inf".into()
            }
        } else if a != 0.0 && !(1e-3..1e7).contains(&a) {
            format!("{self:e}")
        } else {
            format!("{self}")
        }
    }
}

macro_rules! display_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            fn field(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_field!(usize, u64, i32, bool, &str, String);

fn db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| lo + step * i as f64).collect()
}

fn lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Runs one experiment; `kind` overrides the config's `experiment` key.
pub fn run(cfg: &ExperimentConfig, kind: ExperimentKind, exec: Exec) -> Result<ExperimentOutput> {
    match kind {
        ExperimentKind::BerSweep => ber_sweep(cfg),
        ExperimentKind::RangingSweep => ranging_sweep(cfg, exec),
        ExperimentKind::Allocate => allocate(cfg, exec),
        ExperimentKind::MonteCarlo => montecarlo(cfg, exec),
        ExperimentKind::CoverageMap => coverage_map(cfg, exec),
        ExperimentKind::PowerVsGain => power_vs_gain(cfg, exec),
    }
}

/// Writes artifacts, plot sidecars and the resolved configuration into `dir`.
pub fn write_output(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    let io = |p: &Path, e: std::io::Error| Error::Config(format!("cannot write {}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for a in &out.artifacts {
        put(&a.file, &a.contents)?;
    }
    for p in &out.plots {
        put(&p.sidecar_name(), &p.to_text())?;
    }
    let mut echo = cfg.clone();
    echo.experiment = Some(out.kind);
    put("resolved_config.txt", &echo.to_text())?;
    Ok(written)
}

/// Average BER over E_b/N₀ × CPR with uniform P-User powers, single cell,
/// and the per-sub-carrier BER at the probe point.
pub fn ber_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let base = cfg.plan()?;
    let (m, n) = (base.n_pusers(), base.n_cusers());
    let at = |eb_db: f64, powers: &dyn Fn(f64) -> Vec<f64>| -> Result<(SignalPlan, Vec<f64>)> {
        let mut plan = base.clone();
        plan.pc = lin(eb_db) * plan.n0 / plan.t_c();
        let p = powers(plan.pc);
        Ok((plan, p))
    };
    let uniform = |cpr_db: f64| {
        let g = base.g();
        move |pc: f64| vec![if cpr_db.is_infinite() { 0.0 } else { 2.0 * g * pc / lin(cpr_db) }; m]
    };
    let mut out = ExperimentOutput::new(ExperimentKind::BerSweep);
    let mut csv = Csv::new(&["eb_n0_db", "cpr_db", "avg_ber"]);
    for &cpr in &cfg.cpr_list_db {
        for eb in grid(cfg.ebn0_min_db, cfg.ebn0_max_db, cfg.ebn0_step_db) {
            let (plan, p) = at(eb, &uniform(cpr))?;
            let mut total = 0.0;
            for n1 in 1..=n {
                total += ber_single_cell(&plan, &p, n1)?;
            }
            csv.row(&[&eb, &db(cpr), &(total / n as f64)]);
        }
    }
    out.push("ber_sweep.csv", csv);
    out.plots.push(
        PlotSpec::new("ber_sweep.csv", "line", "Average BER", ("eb_n0_db", "Eb/N0 (dB)"), ("avg_ber", "average BER"))
            .series("cpr_db")
            .log_y(),
    );

    let (plan, ipp) = at(cfg.probe_ebn0_db, &uniform(cfg.probe_cpr_db))?;
    let p_mean = ipp[0];
    let dpp: Vec<f64> = (0..m).map(|i| p_mean * if m > 1 { 0.5 + i as f64 / (m - 1) as f64 } else { 1.0 }).collect();
    let none = vec![0.0; m];
    let mut csv = Csv::new(&["n", "ber_ipp", "ber_dpp", "ber_np"]);
    for n1 in 1..=n {
        csv.row(&[
            &n1,
            &ber_single_cell(&plan, &ipp, n1)?,
            &ber_single_cell(&plan, &dpp, n1)?,
            &ber_single_cell(&plan, &none, n1)?,
        ]);
    }
    out.push("ber_per_subcarrier.csv", csv);
    out.plots.push(
        PlotSpec::new(
            "ber_per_subcarrier.csv",
            "line",
            "BER per C-User at the probe point",
            ("n", "C-User index"),
            ("ber_ipp,ber_dpp,ber_np", "BER"),
        )
        .log_y(),
    );
    let floor = base.ber_scale * erfc(base.ber_snr_scale * lin(cfg.probe_ebn0_db) / 2.0);
    out.notes.push(format!("noise-only BER at the probe point: {floor:e}"));
    Ok(out)
}

/// Single-cell plan, unit gains and unit powers at C/N₀ and CPR (linear).
pub fn single_cell_ranging(plan: &SignalPlan, cn0: f64, cpr: f64) -> (SignalPlan, ChannelGains, PowerMatrix) {
    let mut plan = plan.clone();
    let m = plan.n_pusers();
    let gains = ChannelGains::unit(1, m, plan.n_cusers());
    plan.n0 = 1.0 / cn0;
    let hbar = equivalent_comm_gain(&plan, gains.hcp_row(0, 0));
    plan.pc = cpr / (2.0 * plan.g() * hbar);
    (plan, gains, PowerMatrix::filled(1, m, 1.0))
}

/// One ranging sweep point in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangingPoint {
    pub cpr_db: f64,
    pub bandwidth_hz: f64,
    pub puser: usize,
    pub sigma_exact_m: f64,
    pub sigma_approx_m: f64,
    pub sigma_nocomm_m: f64,
}

impl RangingPoint {
    pub fn relative_error(&self) -> f64 {
        (self.sigma_exact_m - self.sigma_approx_m).abs() / self.sigma_exact_m
    }
}

/// Exact, approximate and noise-only σ of P-User `puser` over the CPR grid.
pub fn ranging_points(cfg: &ExperimentConfig, bandwidth: f64, puser: usize, exec: Exec) -> Result<Vec<RangingPoint>> {
    let base = cfg.plan_for(bandwidth, cfg.spacing_ratio_for(bandwidth))?;
    let dll = cfg.dll();
    let cn0 = lin(cfg.cn0_dbhz);
    let cprs = grid(cfg.cpr_min_db, cfg.cpr_max_db, cfg.cpr_step_db);
    exec.map(cprs.len(), |i| {
        let (plan, gains, powers) = single_cell_ranging(&base, cn0, lin(cprs[i]));
        let exact = ranging_var_exact(&plan, &gains, &powers, &dll, 1, puser, QuadratureSpec::default())?;
        let approx = ranging_var_approx(&plan, &gains, &powers, &dll, 1, puser)?;
        Ok(RangingPoint {
            cpr_db: cprs[i],
            bandwidth_hz: bandwidth,
            puser,
            sigma_exact_m: C * exact.sqrt(),
            sigma_approx_m: approx.sigma_meters,
            sigma_nocomm_m: C * approx.sigma2_noise.sqrt(),
        })
    })
    .into_iter()
    .collect()
}

/// Ranging accuracy versus CPR at fixed C/N₀ for every configured bandwidth.
pub fn ranging_sweep(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new(ExperimentKind::RangingSweep);
    let mut csv = Csv::new(&["cpr_db", "bandwidth", "sigma_exact_m", "sigma_approx_m", "sigma_nocomm_m", "rel_err"]);
    let mut worst = Csv::new(&["bandwidth", "puser", "max_rel_err", "at_cpr_db"]);
    for &bw in &cfg.ranging_bandwidths_hz {
        for p in ranging_points(cfg, bw, cfg.probe_puser, exec)? {
            csv.row(&[
                &p.cpr_db,
                &p.bandwidth_hz,
                &p.sigma_exact_m,
                &p.sigma_approx_m,
                &p.sigma_nocomm_m,
                &p.relative_error(),
            ]);
        }
        let m = cfg.plan_for(bw, cfg.spacing_ratio_for(bw))?.n_pusers();
        for puser in 1..=m {
            let pts = ranging_points(cfg, bw, puser, exec)?;
            let w = pts.iter().max_by(|a, b| a.relative_error().total_cmp(&b.relative_error()));
            if let Some(w) = w {
                worst.row(&[&bw, &puser, &w.relative_error(), &w.cpr_db]);
            }
        }
    }
    out.push("ranging_sweep.csv", csv);
    out.push("ranging_worst_by_puser.csv", worst);
    out.plots.push(
        PlotSpec::new(
            "ranging_sweep.csv",
            "line",
            "Range measurement accuracy",
            ("cpr_db", "CPR (dB)"),
            ("sigma_exact_m,sigma_approx_m,sigma_nocomm_m", "ranging error (m)"),
        )
        .series("bandwidth")
        .log_y(),
    );
    out.plots.push(
        PlotSpec::new(
            "ranging_worst_by_puser.csv",
            "line",
            "Worst exact-vs-approx gap per P-User",
            ("puser", "P-User index"),
            ("max_rel_err", "relative error"),
        )
        .series("bandwidth"),
    );
    Ok(out)
}

/// PCJPA and equal-power outcomes of one random scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    pub seed: u64,
    pub pusers: Vec<Position>,
    /// |h_p^{km}|², K×M.
    pub gains: Vec<f64>,
    pub pcjpa: AllocationReport,
    pub equal: AllocationReport,
    /// Relative (QoS, budget, hearability) violations of the PCJPA powers.
    pub violations: (f64, f64, f64),
    pub seconds: f64,
}

impl Replica {
    /// P-Users covered by both strategies.
    pub fn common(&self) -> Vec<usize> {
        (0..self.pcjpa.coverage.len()).filter(|&i| self.pcjpa.coverage[i] && self.equal.coverage[i]).collect()
    }

    /// Mean Ψ of (PCJPA, equal power) over the common users, None if there are none.
    pub fn common_means(&self) -> Option<(f64, f64)> {
        let c = self.common();
        if c.is_empty() {
            return None;
        }
        let mean = |r: &AllocationReport| c.iter().map(|&i| r.psi[i]).sum::<f64>() / c.len() as f64;
        Some((mean(&self.pcjpa), mean(&self.equal)))
    }
}

/// Builds the scenario of `seed` and runs both strategies on it.
pub fn run_replica(cfg: &ExperimentConfig, plan: &SignalPlan, seed: u64, exec: Exec) -> Result<Replica> {
    solve(cfg, plan, seed, exec).map(|(_, r)| r)
}

fn solve(cfg: &ExperimentConfig, plan: &SignalPlan, seed: u64, exec: Exec) -> Result<(Scenario, Replica)> {
    let start = Instant::now();
    let dll = cfg.dll();
    let scenario = build_scenario(&cfg.scenario_config(), plan, seed)?;
    let cons = cfg.constraints();
    let problem = Problem::new(plan, &dll, &scenario, &cons, cfg.solver_options(exec, seed))?;
    let pc = pcjpa(&problem, &cfg.duals_init(plan))?;
    let ep = equal_power(&problem);
    let violations = problem.violations(&pc.powers);
    let seconds = start.elapsed().as_secs_f64();
    let rep = Replica {
        seed,
        pusers: scenario.pusers.clone(),
        gains: scenario.gains.h_p.clone(),
        pcjpa: pc,
        equal: ep,
        violations,
        seconds,
    };
    Ok((scenario, rep))
}

/// `cfg.runs` replicas with seeds seed, seed+1, …, sorted by seed.
pub fn run_replicas(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<Replica>> {
    let plan = cfg.plan()?;
    let inner = Exec::Sequential;
    let mut reps: Vec<Replica> = exec
        .map(cfg.runs, |i| run_replica(cfg, &plan, cfg.seed + i as u64, inner))
        .into_iter()
        .collect::<Result<_>>()?;
    reps.sort_by_key(|r| r.seed);
    Ok(reps)
}

/// Aggregate of a Monte-Carlo batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub converged: usize,
    pub pcjpa_coverage: f64,
    pub equal_coverage: f64,
    pub pcjpa_mean_psi: f64,
    pub equal_mean_psi: f64,
    pub pcjpa_common_psi: f64,
    pub equal_common_psi: f64,
    /// Runs where PCJPA's common-user mean Ψ is not above equal power's.
    pub wins: usize,
    /// Runs with at least one commonly covered user.
    pub comparable: usize,
    /// Runs where PCJPA covers at least as many P-Users as equal power.
    pub coverage_dominates: usize,
}

pub fn summarize(reps: &[Replica]) -> MonteCarloSummary {
    let n = reps.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Replica) -> f64| reps.iter().map(f).sum::<f64>() / n;
    let commons: Vec<(f64, f64)> = reps.iter().filter_map(Replica::common_means).collect();
    let cn = commons.len().max(1) as f64;
    MonteCarloSummary {
        runs: reps.len(),
        converged: reps.iter().filter(|r| r.pcjpa.converged).count(),
        pcjpa_coverage: mean(&|r| r.pcjpa.coverage_fraction()),
        equal_coverage: mean(&|r| r.equal.coverage_fraction()),
        pcjpa_mean_psi: mean(&|r| r.pcjpa.mean_psi_covered),
        equal_mean_psi: mean(&|r| r.equal.mean_psi_covered),
        pcjpa_common_psi: commons.iter().map(|c| c.0).sum::<f64>() / cn,
        equal_common_psi: commons.iter().map(|c| c.1).sum::<f64>() / cn,
        wins: commons.iter().filter(|c| c.0 <= c.1).count(),
        comparable: commons.len(),
        coverage_dominates: reps.iter().filter(|r| r.pcjpa.coverage_fraction() >= r.equal.coverage_fraction()).count(),
    }
}

fn flag(r: &AllocationReport) -> &'static str {
    if r.converged {
        "ok"
    } else {
        "not_converged"
    }
}

fn users_csv(scenario: &Scenario, pc: &AllocationReport, ep: &AllocationReport) -> Csv {
    let mut csv = Csv::new(&["puser", "x_m", "y_m", "pcjpa_covered", "pcjpa_psi_m", "ep_covered", "ep_psi_m"]);
    for (i, p) in scenario.pusers.iter().enumerate() {
        csv.row(&[&(i + 1), &p.x, &p.y, &pc.coverage[i], &pc.psi[i], &ep.coverage[i], &ep.psi[i]]);
    }
    csv
}

fn powers_csv(scenario: &Scenario, pc: &AllocationReport, ep: &AllocationReport) -> Csv {
    let mut csv = Csv::new(&["gnb", "puser", "gain_db", "pcjpa_power_w", "ep_power_w"]);
    let g = &scenario.gains;
    for k0 in 0..g.k {
        for m0 in 0..g.m {
            csv.row(&[
                &(k0 + 1),
                &(m0 + 1),
                &(10.0 * g.hp(k0, m0).log10()),
                &pc.powers.at(k0, m0),
                &ep.powers.at(k0, m0),
            ]);
        }
    }
    csv
}

/// One scenario at `seed`: powers, per-user accuracy and the PCJPA trace.
pub fn allocate(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let plan = cfg.plan()?;
    let (scenario, r) = solve(cfg, &plan, cfg.seed, exec)?;
    let mut out = ExperimentOutput::new(ExperimentKind::Allocate);
    out.push("allocate_powers.csv", powers_csv(&scenario, &r.pcjpa, &r.equal));
    out.push("allocate_users.csv", users_csv(&scenario, &r.pcjpa, &r.equal));
    out.artifacts.push(Artifact { file: "allocate_trace.csv".into(), contents: trace_csv(&r.pcjpa.trace) });
    out.artifacts.push(Artifact { file: "scenario.txt".into(), contents: scenario.to_text() });
    let mut csv = Csv::new(&[
        "strategy",
        "flag",
        "iterations_outer",
        "iterations_inner",
        "coverage",
        "mean_psi_m",
        "max_qos_violation",
        "max_budget_violation",
        "max_hearability_violation",
    ]);
    let last = r.equal.trace[0];
    let (q, b, h) = r.violations;
    csv.row(&[
        &"pcjpa",
        &flag(&r.pcjpa),
        &r.pcjpa.iterations_outer,
        &r.pcjpa.iterations_inner,
        &r.pcjpa.coverage_fraction(),
        &r.pcjpa.mean_psi_covered,
        &q,
        &b,
        &h,
    ]);
    csv.row(&[
        &"equal",
        &flag(&r.equal),
        &0,
        &0,
        &r.equal.coverage_fraction(),
        &r.equal.mean_psi_covered,
        &last.qos_violation,
        &last.budget_violation,
        &last.hearability_violation,
    ]);
    out.push("allocate_summary.csv", csv);
    out.plots.push(
        PlotSpec::new(
            "allocate_trace.csv",
            "line",
            "PCJPA convergence",
            ("iteration", "outer iteration"),
            ("objective", "objective (m^2)"),
        )
        .log_y(),
    );
    out.plots.push(PlotSpec::new(
        "allocate_users.csv",
        "scatter",
        "P-User accuracy",
        ("x_m", "x (m)"),
        ("y_m", "y (m)"),
    ));
    if !r.pcjpa.converged {
        out.nonconverged.push(r.seed);
    }
    out.notes.push(format!(
        "seed {}: pcjpa coverage {:.3} mean psi {:.4} m ({}), equal power coverage {:.3} mean psi {:.4} m",
        r.seed,
        r.pcjpa.coverage_fraction(),
        r.pcjpa.mean_psi_covered,
        flag(&r.pcjpa),
        r.equal.coverage_fraction(),
        r.equal.mean_psi_covered
    ));
    Ok(out)
}

/// `runs` replicas: per-run and per-user tables, summary and Ψ CDF.
pub fn montecarlo(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let reps = run_replicas(cfg, exec)?;
    let mut out = ExperimentOutput::new(ExperimentKind::MonteCarlo);

    let mut runs = Csv::new(&[
        "run",
        "seed",
        "flag",
        "iterations_outer",
        "iterations_inner",
        "seconds",
        "pcjpa_coverage",
        "ep_coverage",
        "pcjpa_mean_psi_m",
        "ep_mean_psi_m",
        "common_users",
        "pcjpa_common_psi_m",
        "ep_common_psi_m",
        "max_qos_violation",
        "max_budget_violation",
        "max_hearability_violation",
    ]);
    let mut users = Csv::new(&["run", "seed", "puser", "pcjpa_covered", "pcjpa_psi_m", "ep_covered", "ep_psi_m"]);
    let mut powers = Csv::new(&["run", "seed", "gnb", "puser", "pcjpa_power_w", "ep_power_w"]);
    for (i, r) in reps.iter().enumerate() {
        let (cp, ce) = r.common_means().unwrap_or((f64::NAN, f64::NAN));
        let (q, b, h) = r.violations;
        runs.row(&[
            &(i + 1),
            &r.seed,
            &flag(&r.pcjpa),
            &r.pcjpa.iterations_outer,
            &r.pcjpa.iterations_inner,
            &format!("{:.3}", r.seconds),
            &r.pcjpa.coverage_fraction(),
            &r.equal.coverage_fraction(),
            &r.pcjpa.mean_psi_covered,
            &r.equal.mean_psi_covered,
            &r.common().len(),
            &cp,
            &ce,
            &q,
            &b,
            &h,
        ]);
        for m0 in 0..r.pcjpa.psi.len() {
            users.row(&[
                &(i + 1),
                &r.seed,
                &(m0 + 1),
                &r.pcjpa.coverage[m0],
                &r.pcjpa.psi[m0],
                &r.equal.coverage[m0],
                &r.equal.psi[m0],
            ]);
        }
        let (k, m) = (r.pcjpa.powers.k, r.pcjpa.powers.m);
        for k0 in 0..k {
            for m0 in 0..m {
                powers.row(&[
                    &(i + 1),
                    &r.seed,
                    &(k0 + 1),
                    &(m0 + 1),
                    &r.pcjpa.powers.at(k0, m0),
                    &r.equal.powers.at(k0, m0),
                ]);
            }
        }
        if !r.pcjpa.converged {
            out.nonconverged.push(r.seed);
        }
    }
    out.push("montecarlo_runs.csv", runs);
    out.push("montecarlo_users.csv", users);
    out.push("montecarlo_powers.csv", powers);

    let s = summarize(&reps);
    let mut summary = Csv::new(&[
        "strategy",
        "runs",
        "converged_runs",
        "coverage",
        "mean_psi_m",
        "common_mean_psi_m",
        "common_wins",
        "comparable_runs",
    ]);
    summary.row(&[
        &"pcjpa",
        &s.runs,
        &s.converged,
        &s.pcjpa_coverage,
        &s.pcjpa_mean_psi,
        &s.pcjpa_common_psi,
        &s.wins,
        &s.comparable,
    ]);
    summary.row(&[
        &"equal",
        &s.runs,
        &s.runs,
        &s.equal_coverage,
        &s.equal_mean_psi,
        &s.equal_common_psi,
        &(s.comparable - s.wins),
        &s.comparable,
    ]);
    out.push("montecarlo_summary.csv", summary);

    let mut cdf = Csv::new(&["strategy", "psi_m", "cdf"]);
    for (name, pick) in [("pcjpa", 0usize), ("equal", 1)] {
        let mut v: Vec<f64> = reps
            .iter()
            .flat_map(|r| {
                let rep = if pick == 0 { &r.pcjpa } else { &r.equal };
                rep.psi.iter().zip(&rep.coverage).filter(|(_, c)| **c).map(|(p, _)| *p).collect::<Vec<_>>()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        let total = v.len();
        for (i, p) in v.iter().enumerate() {
            cdf.row(&[&name, p, &((i + 1) as f64 / total as f64)]);
        }
    }
    out.push("montecarlo_cdf.csv", cdf);
    out.plots.push(
        PlotSpec::new("montecarlo_cdf.csv", "step", "CDF of horizontal accuracy", ("psi_m", "Psi (m)"), ("cdf", "CDF"))
            .series("strategy"),
    );
    out.plots.push(PlotSpec::new(
        "montecarlo_runs.csv",
        "scatter",
        "Common-user accuracy per run",
        ("ep_common_psi_m", "equal power Psi (m)"),
        ("pcjpa_common_psi_m", "PCJPA Psi (m)"),
    ));
    out.notes.push(format!(
        "{} runs, {} converged; coverage pcjpa {:.3} equal {:.3}; mean psi pcjpa {:.4} m equal {:.4} m; \
         common users pcjpa {:.4} m equal {:.4} m, pcjpa not worse on {}/{} runs",
        s.runs,
        s.converged,
        s.pcjpa_coverage,
        s.equal_coverage,
        s.pcjpa_mean_psi,
        s.equal_mean_psi,
        s.pcjpa_common_psi,
        s.equal_common_psi,
        s.wins,
        s.comparable
    ));
    Ok(out)
}

/// One grid cell of a coverage map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    pub covered: bool,
    pub psi: f64,
}

/// Coverage and Ψ of a probe P-User at every cell center, for PCJPA and
/// equal power. The probe replaces P-User `probe_puser`; PCJPA answers it
/// with [`probe_response`] under the converged duals.
pub fn coverage_cells(cfg: &ExperimentConfig, exec: Exec) -> Result<(Scenario, Replica, Vec<MapCell>, Vec<MapCell>)> {
    let plan = cfg.plan()?;
    let (base, rep) = solve(cfg, &plan, cfg.seed, exec)?;
    let m = plan.n_pusers();
    if cfg.probe_puser > m {
        return Err(Error::Config(format!("probe_puser {} exceeds M = {m}", cfg.probe_puser)));
    }
    let slot = cfg.probe_puser - 1;
    let [x0, y0, x1, y1] = cfg.region;
    let step = cfg.grid_step_m;
    let nx = ((x1 - x0) / step).ceil().max(1.0) as usize;
    let ny = ((y1 - y0) / step).ceil().max(1.0) as usize;
    let dll = cfg.dll();
    let cons = cfg.constraints();
    let duals = rep.pcjpa.duals.clone().ok_or_else(|| Error::Config("PCJPA returned no duals".into()))?;
    let cells = exec.map(nx * ny, |c| -> Result<(MapCell, MapCell)> {
        let x = (x0 + step * ((c % nx) as f64 + 0.5)).min(x1);
        let y = (y0 + step * ((c / nx) as f64 + 0.5)).min(y1);
        let mut pusers = base.pusers.clone();
        pusers[slot] = Position::new(x, y, cfg.user_height_m);
        let s = &base;
        let scen =
            Scenario::from_positions(s.gnbs.clone(), pusers, s.cusers.clone(), s.cusers_per_gnb, s.carrier_hz, s.seed)?;
        let problem = Problem::new(&plan, &dll, &scen, &cons, cfg.solver_options(Exec::Sequential, cfg.seed))?;
        let col = probe_response(&problem, &duals, &rep.pcjpa.powers, cfg.probe_puser, cfg.probe_rounds)?;
        let mut pc = rep.pcjpa.powers.clone();
        for (k0, p) in col.iter().enumerate() {
            *pc.at_mut(k0, slot) = *p;
        }
        let e_pc = problem.evaluate(&pc);
        let e_ep = problem.evaluate(&rep.equal.powers);
        Ok((
            MapCell { x, y, covered: e_pc.coverage[slot], psi: e_pc.psi[slot] },
            MapCell { x, y, covered: e_ep.coverage[slot], psi: e_ep.psi[slot] },
        ))
    });
    let mut pc = Vec::with_capacity(cells.len());
    let mut ep = Vec::with_capacity(cells.len());
    for c in cells {
        let (a, b) = c?;
        pc.push(a);
        ep.push(b);
    }
    Ok((base, rep, pc, ep))
}

/// Covered fraction, mean Ψ over covered cells, and mean Ψ over covered
/// cells in the outer corners and the inner square of the region.
pub fn map_stats(cells: &[MapCell], region: [f64; 4]) -> (f64, f64, f64, f64) {
    let [x0, y0, x1, y1] = region;
    let (cx, cy, w, h) = (0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0);
    let covered: Vec<&MapCell> = cells.iter().filter(|c| c.covered).collect();
    let mean = |v: &[&&MapCell]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().map(|c| c.psi).sum::<f64>() / v.len() as f64
        }
    };
    let all: Vec<&&MapCell> = covered.iter().collect();
    let corner: Vec<&&MapCell> =
        covered.iter().filter(|c| (c.x - cx).abs() > 0.35 * w && (c.y - cy).abs() > 0.35 * h).collect();
    let center: Vec<&&MapCell> =
        covered.iter().filter(|c| (c.x - cx).abs() < 0.15 * w && (c.y - cy).abs() < 0.15 * h).collect();
    (covered.len() as f64 / cells.len().max(1) as f64, mean(&all), mean(&corner), mean(&center))
}

pub fn coverage_map(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let (scenario, rep, pc, ep) = coverage_cells(cfg, exec)?;
    let mut out = ExperimentOutput::new(ExperimentKind::CoverageMap);
    let mut summary =
        Csv::new(&["strategy", "covered_fraction", "mean_psi_m", "corner_mean_psi_m", "center_mean_psi_m"]);
    for (name, cells) in [("pcjpa", &pc), ("equal", &ep)] {
        let mut csv = Csv::new(&["x_m", "y_m", "covered", "psi_m"]);
        for c in cells.iter() {
            csv.row(&[&c.x, &c.y, &c.covered, &c.psi]);
        }
        let file = format!("coverage_map_{name}.csv");
        out.push(&file, csv);
        out.plots.push(
            PlotSpec::new(
                &file,
                "heatmap",
                &format!("Coverage and accuracy, {name}"),
                ("x_m", "x (m)"),
                ("y_m", "y (m)"),
            )
            .series("psi_m"),
        );
        let (f, all, corner, center) = map_stats(cells, cfg.region);
        summary.row(&[&name, &f, &all, &corner, &center]);
        out.notes.push(format!("{name}: covered fraction {f:.3}, mean psi {all:.4} m"));
    }
    out.push("coverage_map_summary.csv", summary);
    out.artifacts.push(Artifact { file: "scenario.txt".into(), contents: scenario.to_text() });
    if !rep.pcjpa.converged {
        out.nonconverged.push(rep.seed);
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties; NaN for
/// fewer than two points or a constant sample.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (a, b) = (rx[i] - mx, ry[i] - my);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    sxy / (sxx * syy).sqrt()
}

/// Allocated PCJPA power against positioning gain for one scenario, with
/// the per-gNB Spearman correlation.
pub fn power_vs_gain(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let plan = cfg.plan()?;
    let (scenario, r) = solve(cfg, &plan, cfg.seed, exec)?;
    let g = &scenario.gains;
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(g.k * g.m);
    for k0 in 0..g.k {
        for m0 in 0..g.m {
            rows.push((m0 + 1, k0 + 1, 10.0 * g.hp(k0, m0).log10(), r.pcjpa.powers.at(k0, m0)));
        }
    }
    rows.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)));
    let mut out = ExperimentOutput::new(ExperimentKind::PowerVsGain);
    let mut csv = Csv::new(&["p_user_index", "gnb_index", "gain_db", "allocated_power"]);
    for (m, k, gain, p) in &rows {
        csv.row(&[m, k, gain, p]);
    }
    out.push("power_vs_gain.csv", csv);
    let mut corr = Csv::new(&["gnb_index", "spearman_rho"]);
    for k in 1..=g.k {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.1 == k).map(|r| (r.2, r.3)).unzip();
        let rho = spearman(&x, &y);
        corr.row(&[&k, &rho]);
        out.notes.push(format!("gNB {k}: Spearman rho between gain and power {rho:.3}"));
    }
    out.push("power_vs_gain_spearman.csv", corr);
    out.plots.push(
        PlotSpec::new(
            "power_vs_gain.csv",
            "line",
            "Allocated power against channel gain",
            ("gain_db", "positioning gain (dB)"),
            ("allocated_power", "power (W)"),
        )
        .series("gnb_index"),
    );
    if !r.pcjpa.converged {
        out.nonconverged.push(r.seed);
    }
    Ok(out)
}
