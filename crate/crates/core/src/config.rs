//! Flat `key = value` experiment configuration: parsing, defaults,
//! validation, resolved echo and conversion into the model types.

use std::fmt::Write as _;
use std::path::Path;

use crate::allocator::{
    BandMapping, Constraints, DualState, LambdaMode, QosPricing, SolverOptions, StepScaling, UpdateDirection,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{GeometryMode, Position};
use crate::mathkit::erfc_inv;
use crate::ranging::DllConfig;
use crate::scenario::{free_space_gain, HearabilityConfig, ScenarioConfig};
use crate::signal::SignalPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    BerSweep,
    RangingSweep,
    Allocate,
    MonteCarlo,
    CoverageMap,
    PowerVsGain,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BerSweep => "ber-sweep",
            ExperimentKind::RangingSweep => "ranging-sweep",
            ExperimentKind::Allocate => "allocate",
            ExperimentKind::MonteCarlo => "montecarlo",
            ExperimentKind::CoverageMap => "coverage-map",
            ExperimentKind::PowerVsGain => "power-vs-gain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ExperimentKind::BerSweep,
            ExperimentKind::RangingSweep,
            ExperimentKind::Allocate,
            ExperimentKind::MonteCarlo,
            ExperimentKind::CoverageMap,
            ExperimentKind::PowerVsGain,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Every recognized key with a one-line description, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "ber-sweep | ranging-sweep | allocate | montecarlo | coverage-map | power-vs-gain"),
    ("bandwidth_hz", "total bandwidth B"),
    ("spacing_ratio", "G = Δf_p/Δf_c; 0 picks 80 at 50 MHz and 30 at 20 MHz"),
    ("delta_f_c_hz", "C-User sub-carrier spacing"),
    ("b0_hz", "central frequency of the baseband model"),
    ("bfe_hz", "front-end bandwidth; 0 means 2B"),
    ("ber_scale", "Γ"),
    ("ber_snr_scale", "γ"),
    ("num_pusers", "M; 0 means floor(B/Δf_p)"),
    ("noise_dbm_hz", "effective noise floor N₀"),
    ("cuser_power_w", "P_c; 0 derives it from edge_margin"),
    ("edge_margin", "interference tolerated by a C-User at the cell corner, in units of N₀"),
    ("loop_bandwidth_hz", "DLL B_L"),
    ("coherent_time_s", "DLL T_coh"),
    ("correlator_spacing", "early-late spacing D (chips)"),
    ("loop_factor", "DLL a; 0 means B_L(1 − 0.5B_LT_coh)"),
    ("gnbs", "gNB positions x,y[,z] separated by ;"),
    ("region", "x_min,y_min,x_max,y_max"),
    ("carrier_hz", "carrier frequency"),
    ("user_height_m", "height of every user"),
    ("min_gnb_distance_m", "minimum P-User to gNB distance"),
    ("geometry", "2d | 3d"),
    ("xi_th", "C-User BER bound Ξ_th"),
    ("p_th_w", "positioning budget per gNB"),
    ("rho", "receiver margin ϱ (≥ 1)"),
    ("omega_eff", "cross/auto correlation power ratio Ω_eff"),
    ("min_gnbs", "hearable gNBs needed for a fix"),
    ("b1", "budget multiplier step"),
    ("b2", "QoS multiplier step"),
    ("b3", "hearability multiplier step"),
    ("eps", "dual convergence tolerance"),
    ("iter_n", "iteration cap of each loop"),
    ("update", "descent | ascent"),
    ("steps", "root | fixed"),
    ("band_mapping", "mainlobe | verbatim"),
    ("qos_pricing", "joint | own-cell"),
    ("lambda_mode", "true | estimated"),
    ("runs", "Monte-Carlo replicas"),
    ("seed", "base seed; replica i uses seed + i"),
    ("out", "output directory"),
    ("allow_nonconverged", "exit 0 even when a run does not converge"),
    ("ebn0_min_db", "BER sweep start"),
    ("ebn0_max_db", "BER sweep end"),
    ("ebn0_step_db", "BER sweep step"),
    ("cpr_list_db", "BER sweep CPR values, comma separated; inf adds the reference"),
    ("probe_ebn0_db", "per-sub-carrier BER table E_b/N₀"),
    ("probe_cpr_db", "per-sub-carrier BER table CPR"),
    ("cn0_dbhz", "ranging sweep C/N₀"),
    ("cpr_min_db", "ranging sweep start"),
    ("cpr_max_db", "ranging sweep end"),
    ("cpr_step_db", "ranging sweep step"),
    ("ranging_bandwidths_hz", "ranging sweep bandwidths, comma separated"),
    ("probe_puser", "P-User (1-based) of the exact ranging integral"),
    ("grid_step_m", "coverage map cell size"),
    ("probe_rounds", "fixed-point rounds of the coverage map probe"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub bandwidth_hz: f64,
    pub spacing_ratio: u32,
    pub delta_f_c_hz: f64,
    pub b0_hz: f64,
    pub bfe_hz: f64,
    pub ber_scale: f64,
    pub ber_snr_scale: f64,
    pub num_pusers: usize,
    pub noise_dbm_hz: f64,
    pub cuser_power_w: f64,
    pub edge_margin: f64,
    pub loop_bandwidth_hz: f64,
    pub coherent_time_s: f64,
    pub correlator_spacing: f64,
    pub loop_factor: f64,
    pub gnbs: Vec<Position>,
    pub region: [f64; 4],
    pub carrier_hz: f64,
    pub user_height_m: f64,
    pub min_gnb_distance_m: f64,
    pub geometry: GeometryMode,
    pub xi_th: f64,
    pub p_th_w: f64,
    pub rho: f64,
    pub omega_eff: f64,
    pub min_gnbs: usize,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub eps: f64,
    pub iter_n: usize,
    pub update: UpdateDirection,
    pub steps: StepScaling,
    pub band_mapping: BandMapping,
    pub qos_pricing: QosPricing,
    pub lambda_estimated: bool,
    pub runs: usize,
    pub seed: u64,
    pub out: String,
    pub allow_nonconverged: bool,
    pub ebn0_min_db: f64,
    pub ebn0_max_db: f64,
    pub ebn0_step_db: f64,
    pub cpr_list_db: Vec<f64>,
    pub probe_ebn0_db: f64,
    pub probe_cpr_db: f64,
    pub cn0_dbhz: f64,
    pub cpr_min_db: f64,
    pub cpr_max_db: f64,
    pub cpr_step_db: f64,
    pub ranging_bandwidths_hz: Vec<f64>,
    pub probe_puser: usize,
    pub grid_step_m: f64,
    pub probe_rounds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            bandwidth_hz: 50e6,
            spacing_ratio: 0,
            delta_f_c_hz: 30e3,
            b0_hz: 0.0,
            bfe_hz: 0.0,
            ber_scale: 0.5,
            ber_snr_scale: 1.0,
            num_pusers: 20,
            noise_dbm_hz: -120.0,
            cuser_power_w: 0.0,
            edge_margin: 0.01,
            loop_bandwidth_hz: 0.2,
            coherent_time_s: 0.02,
            correlator_spacing: 0.02,
            loop_factor: 0.0,
            gnbs: ScenarioConfig::default().gnbs,
            region: [0.0, 0.0, 200.0, 200.0],
            carrier_hz: 3.5e9,
            user_height_m: 0.0,
            min_gnb_distance_m: 0.0,
            geometry: GeometryMode::TwoD,
            xi_th: 8e-3,
            p_th_w: 0.8,
            rho: 2.0,
            omega_eff: 0.092,
            min_gnbs: 3,
            b1: 1.0,
            b2: 1.0,
            b3: 1.0,
            eps: 1e-6,
            iter_n: 500,
            update: UpdateDirection::Descent,
            steps: StepScaling::RootDirected,
            band_mapping: BandMapping::MainLobe,
            qos_pricing: QosPricing::Joint,
            lambda_estimated: false,
            runs: 50,
            seed: 1,
            out: "out".into(),
            allow_nonconverged: false,
            ebn0_min_db: 0.0,
            ebn0_max_db: 20.0,
            ebn0_step_db: 1.0,
            cpr_list_db: vec![5.0, 10.0, 15.0, 20.0, f64::INFINITY],
            probe_ebn0_db: 5.0,
            probe_cpr_db: 15.0,
            cn0_dbhz: 45.0,
            cpr_min_db: 10.0,
            cpr_max_db: 30.0,
            cpr_step_db: 2.0,
            ranging_bandwidths_hz: vec![20e6, 50e6],
            probe_puser: 1,
            grid_step_m: 5.0,
            probe_rounds: 8,
        }
    }
}

fn num(v: &str) -> std::result::Result<f64, String> {
    match v.trim() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| format!("'{t}' is not a number")),
    }
}

fn int<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim().parse::<T>().map_err(|_| format!("'{}' is not a nonnegative integer", v.trim()))
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(num).collect()
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        t => Err(format!("'{t}' is not a boolean")),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| if x.is_infinite() { "inf".to_string() } else { format!("{x}") }).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "experiment" => {
                self.experiment = Some(ExperimentKind::parse(v).ok_or_else(|| format!("unknown experiment '{v}'"))?)
            }
            "bandwidth_hz" => self.bandwidth_hz = num(v)?,
            "spacing_ratio" => self.spacing_ratio = int(v)?,
            "delta_f_c_hz" => self.delta_f_c_hz = num(v)?,
            "b0_hz" => self.b0_hz = num(v)?,
            "bfe_hz" => self.bfe_hz = num(v)?,
            "ber_scale" => self.ber_scale = num(v)?,
            "ber_snr_scale" => self.ber_snr_scale = num(v)?,
            "num_pusers" => self.num_pusers = int(v)?,
            "noise_dbm_hz" => self.noise_dbm_hz = num(v)?,
            "cuser_power_w" => self.cuser_power_w = num(v)?,
            "edge_margin" => self.edge_margin = num(v)?,
            "loop_bandwidth_hz" => self.loop_bandwidth_hz = num(v)?,
            "coherent_time_s" => self.coherent_time_s = num(v)?,
            "correlator_spacing" => self.correlator_spacing = num(v)?,
            "loop_factor" => self.loop_factor = num(v)?,
            "gnbs" => {
                let mut out = Vec::new();
                for item in v.split(';').filter(|s| !s.trim().is_empty()) {
                    let c = list(item)?;
                    match c.as_slice() {
                        [x, y] => out.push(Position::planar(*x, *y)),
                        [x, y, z] => out.push(Position::new(*x, *y, *z)),
                        _ => return Err(format!("gNB '{}' needs 2 or 3 coordinates", item.trim())),
                    }
                }
                self.gnbs = out;
            }
            "region" => {
                let c = list(v)?;
                self.region = c.try_into().map_err(|_| "region needs 4 numbers".to_string())?;
            }
            "carrier_hz" => self.carrier_hz = num(v)?,
            "user_height_m" => self.user_height_m = num(v)?,
            "min_gnb_distance_m" => self.min_gnb_distance_m = num(v)?,
            "geometry" => {
                self.geometry = match v {
                    "2d" => GeometryMode::TwoD,
                    "3d" => GeometryMode::ThreeD,
                    _ => return Err(format!("geometry must be 2d or 3d, got '{v}'")),
                }
            }
            "xi_th" => self.xi_th = num(v)?,
            "p_th_w" => self.p_th_w = num(v)?,
            "rho" => self.rho = num(v)?,
            "omega_eff" => self.omega_eff = num(v)?,
            "min_gnbs" => self.min_gnbs = int(v)?,
            "b1" => self.b1 = num(v)?,
            "b2" => self.b2 = num(v)?,
            "b3" => self.b3 = num(v)?,
            "eps" => self.eps = num(v)?,
            "iter_n" => self.iter_n = int(v)?,
            "update" => {
                self.update = match v {
                    "descent" => UpdateDirection::Descent,
                    "ascent" => UpdateDirection::Ascent,
                    _ => return Err(format!("update must be descent or ascent, got '{v}'")),
                }
            }
            "steps" => {
                self.steps = match v {
                    "root" => StepScaling::RootDirected,
                    "fixed" => StepScaling::Fixed,
                    _ => return Err(format!("steps must be root or fixed, got '{v}'")),
                }
            }
            "band_mapping" => {
                self.band_mapping = match v {
                    "mainlobe" => BandMapping::MainLobe,
                    "verbatim" => BandMapping::Verbatim,
                    _ => return Err(format!("band_mapping must be mainlobe or verbatim, got '{v}'")),
                }
            }
            "qos_pricing" => {
                self.qos_pricing = match v {
                    "joint" => QosPricing::Joint,
                    "own-cell" => QosPricing::OwnCell,
                    _ => return Err(format!("qos_pricing must be joint or own-cell, got '{v}'")),
                }
            }
            "lambda_mode" => {
                self.lambda_estimated = match v {
                    "true" => false,
                    "estimated" => true,
                    _ => return Err(format!("lambda_mode must be true or estimated, got '{v}'")),
                }
            }
            "runs" => self.runs = int(v)?,
            "seed" => self.seed = int(v)?,
            "out" => self.out = v.to_string(),
            "allow_nonconverged" => self.allow_nonconverged = boolean(v)?,
            "ebn0_min_db" => self.ebn0_min_db = num(v)?,
            "ebn0_max_db" => self.ebn0_max_db = num(v)?,
            "ebn0_step_db" => self.ebn0_step_db = num(v)?,
            "cpr_list_db" => self.cpr_list_db = list(v)?,
            "probe_ebn0_db" => self.probe_ebn0_db = num(v)?,
            "probe_cpr_db" => self.probe_cpr_db = num(v)?,
            "cn0_dbhz" => self.cn0_dbhz = num(v)?,
            "cpr_min_db" => self.cpr_min_db = num(v)?,
            "cpr_max_db" => self.cpr_max_db = num(v)?,
            "cpr_step_db" => self.cpr_step_db = num(v)?,
            "ranging_bandwidths_hz" => self.ranging_bandwidths_hz = list(v)?,
            "probe_puser" => self.probe_puser = int(v)?,
            "grid_step_m" => self.grid_step_m = num(v)?,
            "probe_rounds" => self.probe_rounds = int(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Parses configuration text; later duplicates of a key are rejected.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected 'key = value'".into()))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Applies `key=value` overrides in order, then validates.
    pub fn with_overrides<'s>(mut self, overrides: impl IntoIterator<Item = (&'s str, &'s str)>) -> Result<Self> {
        for (k, v) in overrides {
            self.set(k.trim(), v).map_err(|reason| Error::Config(format!("override {k}: {reason}")))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn resolved_spacing_ratio(&self) -> u32 {
        self.spacing_ratio_for(self.bandwidth_hz)
    }

    /// Configured ratio at the configured bandwidth, otherwise 30 at 20 MHz and 80 elsewhere.
    pub fn spacing_ratio_for(&self, bandwidth: f64) -> u32 {
        if self.spacing_ratio > 0 && bandwidth == self.bandwidth_hz {
            self.spacing_ratio
        } else if (bandwidth - 20e6).abs() < 1.0 {
            30
        } else {
            80
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.rho >= 1.0) {
            return bad("rho must be at least 1");
        }
        if !(self.omega_eff > 0.0 && self.rho * self.omega_eff < 1.0) {
            return bad("omega_eff must be positive with rho·omega_eff < 1");
        }
        if self.min_gnbs < 1 {
            return bad("min_gnbs must be at least 1");
        }
        if !(self.xi_th > 0.0 && self.xi_th < self.ber_scale) {
            return bad("xi_th must lie in (0, ber_scale)");
        }
        if !(self.p_th_w > 0.0) {
            return bad("p_th_w must be positive");
        }
        if !(self.b1 > 0.0 && self.b2 > 0.0 && self.b3 > 0.0 && self.eps > 0.0) || self.iter_n < 1 {
            return bad("b1, b2, b3 and eps must be positive and iter_n at least 1");
        }
        if !(self.edge_margin > 0.0) && !(self.cuser_power_w > 0.0) {
            return bad("edge_margin must be positive when cuser_power_w is not set");
        }
        if self.cuser_power_w < 0.0 || self.bfe_hz < 0.0 || self.loop_factor < 0.0 {
            return bad("cuser_power_w, bfe_hz and loop_factor must be nonnegative");
        }
        if self.runs < 1 {
            return bad("runs must be at least 1");
        }
        if !(self.ebn0_step_db > 0.0 && self.cpr_step_db > 0.0 && self.grid_step_m > 0.0) {
            return bad("sweep steps and grid_step_m must be positive");
        }
        if self.ebn0_max_db < self.ebn0_min_db || self.cpr_max_db < self.cpr_min_db {
            return bad("sweep ranges must be nondecreasing");
        }
        if self.ranging_bandwidths_hz.iter().any(|b| !(*b > 0.0)) {
            return bad("ranging bandwidths must be positive");
        }
        if self.probe_puser < 1 {
            return bad("probe_puser is 1-based");
        }
        self.plan()?;
        self.dll().validate()?;
        self.scenario_config().validate()?;
        Ok(())
    }

    /// Signal plan at the configured bandwidth.
    pub fn plan(&self) -> Result<SignalPlan> {
        self.plan_for(self.bandwidth_hz, self.resolved_spacing_ratio())
    }

    /// Signal plan at another bandwidth with the same noise floor and C-User power.
    pub fn plan_for(&self, bandwidth: f64, spacing_ratio: u32) -> Result<SignalPlan> {
        let mut plan = SignalPlan::new(bandwidth, spacing_ratio);
        plan.delta_f_c = self.delta_f_c_hz;
        plan.b0 = self.b0_hz;
        plan.bfe = if self.bfe_hz > 0.0 { self.bfe_hz } else { 2.0 * bandwidth };
        plan.ber_scale = self.ber_scale;
        plan.ber_snr_scale = self.ber_snr_scale;
        plan.n0 = 10f64.powf((self.noise_dbm_hz - 30.0) / 10.0);
        plan.num_pusers = if self.num_pusers > 0 { Some(self.num_pusers) } else { None };
        plan.validate()?;
        plan.pc = self.cuser_power(&plan)?;
        plan.validate()?;
        Ok(plan)
    }

    /// P_c such that the interference-free C-User at the farthest cell point
    /// tolerates `edge_margin`·N₀ before its BER reaches Ξ_th.
    pub fn cuser_power(&self, plan: &SignalPlan) -> Result<f64> {
        if self.cuser_power_w > 0.0 {
            return Ok(self.cuser_power_w);
        }
        let edge = free_space_gain(self.cell_edge_distance(), self.carrier_hz)?;
        let inv = erfc_inv(self.xi_th / self.ber_scale)?;
        Ok(inv * (2.0 + self.edge_margin) * plan.n0 / (self.ber_snr_scale * edge * plan.t_c()))
    }

    /// Largest distance from a region point to its nearest gNB, on a fine grid.
    pub fn cell_edge_distance(&self) -> f64 {
        let [x0, y0, x1, y1] = self.region;
        let steps = 200;
        let mut worst: f64 = 0.0;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = Position::new(
                    x0 + (x1 - x0) * i as f64 / steps as f64,
                    y0 + (y1 - y0) * j as f64 / steps as f64,
                    self.user_height_m,
                );
                let d = self.gnbs.iter().map(|g| g.distance(&p)).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn dll(&self) -> DllConfig {
        DllConfig {
            b_l: self.loop_bandwidth_hz,
            t_coh: self.coherent_time_s,
            d: self.correlator_spacing,
            a: if self.loop_factor > 0.0 { Some(self.loop_factor) } else { None },
        }
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            gnbs: self.gnbs.clone(),
            region: self.region,
            carrier_hz: self.carrier_hz,
            user_height: self.user_height_m,
            min_gnb_distance: self.min_gnb_distance_m,
        }
    }

    pub fn hearability(&self) -> HearabilityConfig {
        HearabilityConfig { rho: self.rho, omega: self.omega_eff, min_gnbs: self.min_gnbs }
    }

    pub fn constraints(&self) -> Constraints {
        Constraints { xi_th: self.xi_th, p_th: vec![self.p_th_w; self.gnbs.len()], hear: self.hearability() }
    }

    pub fn solver_options(&self, exec: Exec, replica_seed: u64) -> SolverOptions {
        SolverOptions {
            direction: self.update,
            bands: self.band_mapping,
            lambda_mode: if self.lambda_estimated {
                LambdaMode::Estimated { seed: replica_seed }
            } else {
                LambdaMode::TruePositions
            },
            geometry: self.geometry,
            steps: self.steps,
            qos_pricing: self.qos_pricing,
            exec,
        }
    }

    pub fn duals_init(&self, plan: &SignalPlan) -> DualState {
        let mut d = DualState::zeros(self.gnbs.len(), plan.n_pusers(), plan.n_cusers());
        d.b1 = self.b1;
        d.b2 = self.b2;
        d.b3 = self.b3;
        d.eps = self.eps;
        d.iter_n = self.iter_n;
        d
    }

    /// Resolved configuration as parseable text.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (key, _) in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        let name = |b: bool, t: &str, f: &str| if b { t.to_string() } else { f.to_string() };
        match key {
            "experiment" => self.experiment.map(|e| e.name().to_string()).unwrap_or_else(|| "allocate".into()),
            "bandwidth_hz" => format!("{}", self.bandwidth_hz),
            "spacing_ratio" => format!("{}", self.resolved_spacing_ratio()),
            "delta_f_c_hz" => format!("{}", self.delta_f_c_hz),
            "b0_hz" => format!("{}", self.b0_hz),
            "bfe_hz" => format!("{}", if self.bfe_hz > 0.0 { self.bfe_hz } else { 2.0 * self.bandwidth_hz }),
            "ber_scale" => format!("{}", self.ber_scale),
            "ber_snr_scale" => format!("{}", self.ber_snr_scale),
            "num_pusers" => format!("{}", self.num_pusers),
            "noise_dbm_hz" => format!("{}", self.noise_dbm_hz),
            "cuser_power_w" => match self.plan() {
                Ok(p) => format!("{:e}", p.pc),
                Err(_) => format!("{}", self.cuser_power_w),
            },
            "edge_margin" => format!("{}", self.edge_margin),
            "loop_bandwidth_hz" => format!("{}", self.loop_bandwidth_hz),
            "coherent_time_s" => format!("{}", self.coherent_time_s),
            "correlator_spacing" => format!("{}", self.correlator_spacing),
            "loop_factor" => format!("{}", self.dll().loop_factor()),
            "gnbs" => self.gnbs.iter().map(|g| format!("{},{},{}", g.x, g.y, g.z)).collect::<Vec<_>>().join(";"),
            "region" => fmt_list(&self.region),
            "carrier_hz" => format!("{}", self.carrier_hz),
            "user_height_m" => format!("{}", self.user_height_m),
            "min_gnb_distance_m" => format!("{}", self.min_gnb_distance_m),
            "geometry" => name(self.geometry == GeometryMode::TwoD, "2d", "3d"),
            "xi_th" => format!("{}", self.xi_th),
            "p_th_w" => format!("{}", self.p_th_w),
            "rho" => format!("{}", self.rho),
            "omega_eff" => format!("{}", self.omega_eff),
            "min_gnbs" => format!("{}", self.min_gnbs),
            "b1" => format!("{}", self.b1),
            "b2" => format!("{}", self.b2),
            "b3" => format!("{}", self.b3),
            "eps" => format!("{}", self.eps),
            "iter_n" => format!("{}", self.iter_n),
            "update" => name(self.update == UpdateDirection::Descent, "descent", "ascent"),
            "steps" => name(self.steps == StepScaling::RootDirected, "root", "fixed"),
            "band_mapping" => name(self.band_mapping == BandMapping::MainLobe, "mainlobe", "verbatim"),
            "qos_pricing" => name(self.qos_pricing == QosPricing::Joint, "joint", "own-cell"),
            "lambda_mode" => name(self.lambda_estimated, "estimated", "true"),
            "runs" => format!("{}", self.runs),
            "seed" => format!("{}", self.seed),
            "out" => self.out.clone(),
            "allow_nonconverged" => format!("{}", self.allow_nonconverged),
            "ebn0_min_db" => format!("{}", self.ebn0_min_db),
            "ebn0_max_db" => format!("{}", self.ebn0_max_db),
            "ebn0_step_db" => format!("{}", self.ebn0_step_db),
            "cpr_list_db" => fmt_list(&self.cpr_list_db),
            "probe_ebn0_db" => format!("{}", self.probe_ebn0_db),
            "probe_cpr_db" => format!("{}", self.probe_cpr_db),
            "cn0_dbhz" => format!("{}", self.cn0_dbhz),
            "cpr_min_db" => format!("{}", self.cpr_min_db),
            "cpr_max_db" => format!("{}", self.cpr_max_db),
            "cpr_step_db" => format!("{}", self.cpr_step_db),
            "ranging_bandwidths_hz" => fmt_list(&self.ranging_bandwidths_hz),
            "probe_puser" => format!("{}", self.probe_puser),
            "grid_step_m" => format!("{}", self.grid_step_m),
            "probe_rounds" => format!("{}", self.probe_rounds),
            _ => String::new(),
        }
    }
}
