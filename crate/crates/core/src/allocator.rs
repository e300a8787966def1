//! Positioning power allocation: QoS interference thresholds, the KKT
//! closed-form power, the nested projected-subgradient dual solver (PCJPA),
//! the equal-power baseline, and a numerical check of the dual subgradients.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_index, Error, Result};
use crate::exec::Exec;
use crate::geometry::{dilution, horizontal_accuracy, GeometryMode, Position};
use crate::mathkit::erfc_inv;
use crate::ranging::{equivalent_comm_gain_sum, DllConfig, FactorCoefficients, C};
use crate::scenario::{hearable_from_received, HearabilityConfig, Scenario};
use crate::signal::{overlap, ChannelGains, OverlapTable, PowerMatrix, SignalPlan};

/// QoS, budget and hearability limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    /// Maximum tolerable C-User BER Ξ_th.
    pub xi_th: f64,
    /// Positioning power budget P_th^k per gNB (W).
    pub p_th: Vec<f64>,
    pub hear: HearabilityConfig,
}

/// Interference cap of one C-User.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    /// I_th^{kn}, clamped at zero.
    pub value: f64,
    /// Noise alone already violates the QoS bound.
    pub infeasible: bool,
}

fn threshold_from(plan: &SignalPlan, hc: f64, inv: f64) -> Threshold {
    let raw = plan.ber_snr_scale * hc * plan.pc * plan.t_c() / inv - 2.0 * plan.n0;
    Threshold { value: raw.max(0.0), infeasible: raw < 0.0 }
}

fn qos_inverse(plan: &SignalPlan, xi_th: f64) -> Result<f64> {
    if !(xi_th > 0.0 && xi_th < plan.ber_scale) {
        return Err(Error::Domain(format!("BER bound must lie in (0, {}), got {xi_th}", plan.ber_scale)));
    }
    erfc_inv(xi_th / plan.ber_scale)
}

/// I_th^{kn} = γ|h_c^{kn}|²P_cT_c / erfc⁻¹(Ξ_th/Γ) − 2N₀.
pub fn interference_threshold(
    plan: &SignalPlan,
    gains: &ChannelGains,
    xi_th: f64,
    k: usize,
    n: usize,
) -> Result<Threshold> {
    let k0 = check_index("k", k, gains.k)?;
    let n0 = check_index("n", n, gains.n)?;
    Ok(threshold_from(plan, gains.hc(k0, n0), qos_inverse(plan, xi_th)?))
}

/// C-User sub-carriers whose interference caps enter the KKT power of P-User m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandMapping {
    /// Main lobe of P-User m, n ∈ {G(m−1)+1, …, G(m+1)−1}.
    #[default]
    MainLobe,
    /// n ∈ {(2G−1)(m−1)+1, …, (2G−1)m}, clipped to 1..=N.
    Verbatim,
}

/// 0-based range of n for 1-based m.
pub fn band(plan: &SignalPlan, m: usize, mapping: BandMapping) -> Range<usize> {
    let g = plan.spacing_ratio as usize;
    let n = plan.n_cusers();
    let (lo, hi) = match mapping {
        BandMapping::MainLobe => (g * (m - 1) + 1, g * (m + 1) - 1),
        BandMapping::Verbatim => ((2 * g - 1) * (m - 1) + 1, (2 * g - 1) * m),
    };
    let lo = lo.min(n + 1);
    let hi = hi.min(n);
    (lo - 1)..hi.max(lo - 1)
}

fn j0(plan: &SignalPlan, gains: &ChannelGains, k0: usize, n0: usize, m0: usize) -> f64 {
    let s = overlap(plan, m0 + 1, n0 + 1);
    (0..gains.k).map(|k2| gains.hpc(k0, n0, k2, m0)).sum::<f64>() * plan.t_p() * s
}

/// J^{kn←m} = Σ_{k'} |h_p^{kn←k'm}|²·T_p·sinc²(m − n/G).
pub fn j_leakage(plan: &SignalPlan, gains: &ChannelGains, k: usize, n: usize, m: usize) -> Result<f64> {
    let k0 = check_index("k", k, gains.k)?;
    let n0 = check_index("n", n, gains.n)?;
    let m0 = check_index("m", m, gains.m)?;
    Ok(j0(plan, gains, k0, n0, m0))
}

/// Lagrange multipliers with their step sizes and stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// μ^{kn}, K×N row-major.
    pub mu: Vec<f64>,
    /// ν^k.
    pub nu: Vec<f64>,
    /// β^{km}, K×M row-major.
    pub beta: Vec<f64>,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub eps: f64,
    pub iter_n: usize,
}

impl DualState {
    pub fn zeros(k: usize, m: usize, n: usize) -> Self {
        Self {
            mu: vec![0.0; k * n],
            nu: vec![0.0; k],
            beta: vec![0.0; k * m],
            b1: 1.0,
            b2: 1.0,
            b3: 0.3,
            eps: 1e-6,
            iter_n: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !(nonneg(&self.mu) && nonneg(&self.nu) && nonneg(&self.beta)) {
            return Err(Error::Domain("multipliers must be finite and nonnegative".into()));
        }
        if !(self.b1 > 0.0 && self.b2 > 0.0 && self.b3 > 0.0 && self.eps > 0.0) || self.iter_n < 1 {
            return Err(Error::Config("step sizes and tolerance must be positive, iter_n ≥ 1".into()));
        }
        Ok(())
    }
}

fn cross_power(gains: &ChannelGains, powers: &PowerMatrix, k0: usize, m0: usize) -> f64 {
    (0..gains.k).filter(|&k2| k2 != k0).map(|k2| gains.hp(k2, m0) * powers.at(k2, m0)).sum()
}

/// Strongest other gNB at P-User m0, None when all others are silent.
fn competitor(gains: &ChannelGains, powers: &PowerMatrix, k0: usize, m0: usize) -> Option<usize> {
    let mut best = None;
    let mut best_r = 0.0;
    for k2 in (0..gains.k).filter(|&k2| k2 != k0) {
        let r = gains.hp(k2, m0) * powers.at(k2, m0);
        if r > best_r {
            best_r = r;
            best = Some(k2);
        }
    }
    best
}

/// Stationary point of the per-link Lagrangian: P = λσ̃/√(M·D) with
/// D = ν + Σ_{n∈ℕ_m}μJ − β|h_p^{km}|² + ϱΩ|h_p^{km}|²Σ_jβ^{jm}, the last sum over the
/// gNBs j whose strongest competitor at P-User m is k.
///
/// The ranging factor and competitor identities use `powers`. Returns
/// `InactiveBracket` when D is not positive; the Lagrangian is then
/// increasing in P and the caller clamps to its power limit.
pub fn kkt_power(
    problem: &Problem,
    powers: &PowerMatrix,
    lambda: f64,
    duals: &DualState,
    k: usize,
    m: usize,
) -> Result<f64> {
    let g = problem.gains();
    let k0 = check_index("k", k, g.k)?;
    let m0 = check_index("m", m, g.m)?;
    let (a, price) = problem.link_terms(powers, lambda, duals, k0, m0);
    if !(price > 0.0) {
        return Err(Error::InactiveBracket { k, m, bracket: g.m as f64 * price });
    }
    Ok((a / price).sqrt())
}

/// Per-link Lagrangian −(1/M)(λσ̃)²/P − D·P, up to P-independent terms.
pub fn op2_lagrangian(
    problem: &Problem,
    powers: &PowerMatrix,
    lambda: f64,
    duals: &DualState,
    k: usize,
    m: usize,
    p: f64,
) -> Result<f64> {
    let g = problem.gains();
    let k0 = check_index("k", k, g.k)?;
    let m0 = check_index("m", m, g.m)?;
    let (a, price) = problem.link_terms(powers, lambda, duals, k0, m0);
    Ok(-a / p - price * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateDirection {
    /// x ← [x − b·s]⁺, minimizing the dual function.
    #[default]
    Descent,
    /// x ← [x + b·s]⁺.
    Ascent,
}

impl UpdateDirection {
    fn sign(self) -> f64 {
        match self {
            UpdateDirection::Descent => -1.0,
            UpdateDirection::Ascent => 1.0,
        }
    }
}

/// Source of the geometric dilution used inside the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LambdaMode {
    /// Geometry of the true P-User positions.
    #[default]
    TruePositions,
    /// Positions perturbed by the previous accuracy estimate.
    Estimated { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub direction: UpdateDirection,
    pub bands: BandMapping,
    pub lambda_mode: LambdaMode,
    pub geometry: GeometryMode,
    pub steps: StepScaling,
    pub qos_pricing: QosPricing,
    pub exec: Exec,
}

/// Step length of the ν and β updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepScaling {
    /// x ← [x ∓ (b/√t)·s] with the normalized subgradient s.
    Fixed,
    /// Each multiplier moves the fraction b/√t of the way to the value that
    /// zeroes its own subgradient, all other variables held fixed; a
    /// per-coordinate positive step along the same subgradient.
    #[default]
    RootDirected,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            steps: StepScaling::RootDirected,
            qos_pricing: QosPricing::Joint,
            direction: UpdateDirection::Descent,
            bands: BandMapping::MainLobe,
            lambda_mode: LambdaMode::TruePositions,
            geometry: GeometryMode::TwoD,
            exec: Exec::Parallel,
        }
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub inner_iterations: usize,
    /// (1/M)Σ_mΣ_k(λσ)² in m².
    pub objective: f64,
    /// max (I − I_th)/I_th over C-Users, floored at 0.
    pub qos_violation: f64,
    /// max (ΣP − P_th)/P_th over gNBs, floored at 0.
    pub budget_violation: f64,
    /// max relative hearability shortfall over unclamped links.
    pub hearability_violation: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str =
        "iteration,objective,max_qos_violation,max_budget_violation,max_hearability_violation";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e}",
            self.iteration, self.objective, self.qos_violation, self.budget_violation, self.hearability_violation
        )
    }
}

/// Iteration trace as CSV text with header.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from(TraceRow::CSV_HEADER);
    s.push('\n');
    for r in trace {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationReport {
    pub powers: PowerMatrix,
    /// Ψ^m (m); 0 for users without a fix.
    pub psi: Vec<f64>,
    pub coverage: Vec<bool>,
    pub mean_psi_covered: f64,
    /// σ_ρ^{km} (m), K×M; 0 where the link is not used.
    pub sigma: Vec<f64>,
    /// λ^{km} of the hearable geometry, K×M; 0 where not used.
    pub lambda: Vec<f64>,
    pub iterations_outer: usize,
    pub iterations_inner: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    pub duals: Option<DualState>,
}

impl AllocationReport {
    pub fn coverage_fraction(&self) -> f64 {
        self.coverage.iter().filter(|c| **c).count() as f64 / self.coverage.len().max(1) as f64
    }
}

/// Which multipliers price a link's leakage into the C-User bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QosPricing {
    /// Every gNB prices its leakage into every C-User n ∈ ℕ_m:
    /// Σ_{k,n} μ^{kn}|h_p^{kn←k'm}|²T_p sinc²(m − n/G).
    #[default]
    Joint,
    /// gNB k prices only its own C-Users, Σ_n μ^{kn}J^{kn←m}.
    OwnCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QosLink {
    link: usize,
    /// Contribution of this link's power to the C-User interference.
    coef: f64,
    /// Contribution of this C-User's multiplier to the link price.
    price: f64,
}

/// Data shared by allocation runs on one scenario.
pub struct Problem<'a> {
    pub plan: &'a SignalPlan,
    pub dll: &'a DllConfig,
    pub scenario: &'a Scenario,
    pub constraints: &'a Constraints,
    pub options: SolverOptions,
    table: OverlapTable,
    /// |h_p^{kn←k'm}|²·T_p·sinc²(m − n/G), one K·M block per C-User.
    weights: Vec<f64>,
    i_th: Vec<f64>,
    i_scale: Vec<f64>,
    pub qos_infeasible: Vec<bool>,
    /// Priced links of each C-User, indexed k0·N + n0.
    qos_links: Vec<Vec<QosLink>>,
    /// C-Users priced by each link, indexed k0·M + m0: (k0·N + n0, price coefficient).
    link_qos: Vec<Vec<(usize, f64)>>,
    hbar: Vec<f64>,
    coef: FactorCoefficients,
    lambda_true: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        plan: &'a SignalPlan,
        dll: &'a DllConfig,
        scenario: &'a Scenario,
        constraints: &'a Constraints,
        options: SolverOptions,
    ) -> Result<Self> {
        plan.validate()?;
        dll.validate()?;
        constraints.hear.validate()?;
        let gains = &scenario.gains;
        gains.check_plan(plan)?;
        let (k, m, n) = (gains.k, gains.m, gains.n);
        if constraints.p_th.len() != k {
            return Err(Error::LengthMismatch { left: constraints.p_th.len(), right: k });
        }
        if constraints.p_th.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Config("power budgets must be positive".into()));
        }
        let inv = qos_inverse(plan, constraints.xi_th)?;
        let mut i_th = vec![0.0; k * n];
        let mut qos_infeasible = vec![false; k * n];
        for k0 in 0..k {
            for n0 in 0..n {
                let t = threshold_from(plan, gains.hc(k0, n0), inv);
                i_th[k0 * n + n0] = t.value;
                qos_infeasible[k0 * n + n0] = t.infeasible;
            }
        }
        let floor = 1e-12 * plan.n0;
        let i_scale = i_th.iter().map(|v| v.max(floor)).collect();
        let tp = plan.t_p();
        let table = OverlapTable::new(plan);
        let mut weights = gains.h_p_to_c.clone();
        for (i, block) in weights.chunks_exact_mut(k * m).enumerate() {
            let s = table.row(i % n);
            for (j, w) in block.iter_mut().enumerate() {
                *w *= tp * s[j % m];
            }
        }
        let mut qos_links = vec![Vec::new(); k * n];
        let mut link_qos = vec![Vec::new(); k * m];
        for m0 in 0..m {
            for n0 in band(plan, m0 + 1, options.bands) {
                let s = table.at(m0, n0);
                for k0 in 0..k {
                    let i = k0 * n + n0;
                    match options.qos_pricing {
                        QosPricing::Joint => {
                            for k2 in 0..k {
                                let c = gains.hpc(k0, n0, k2, m0) * tp * s;
                                qos_links[i].push(QosLink { link: k2 * m + m0, coef: c, price: c });
                                link_qos[k2 * m + m0].push((i, c));
                            }
                        }
                        QosPricing::OwnCell => {
                            let j = j0(plan, gains, k0, n0, m0);
                            let c = gains.hpc(k0, n0, k0, m0) * tp * s;
                            qos_links[i].push(QosLink { link: k0 * m + m0, coef: c, price: j });
                            link_qos[k0 * m + m0].push((i, j));
                        }
                    }
                }
            }
        }
        let hbar = (0..m).map(|m0| equivalent_comm_gain_sum(plan, gains, m0)).collect();
        let mut lambda_true = vec![0.0; k * m];
        for m0 in 0..m {
            let geo = dilution(&scenario.gnbs, &scenario.pusers[m0], options.geometry)?;
            for k0 in 0..k {
                lambda_true[k0 * m + m0] = geo.lambda[k0];
            }
        }
        Ok(Self {
            plan,
            dll,
            scenario,
            constraints,
            options,
            table,
            weights,
            i_th,
            i_scale,
            qos_infeasible,
            qos_links,
            link_qos,
            hbar,
            coef: FactorCoefficients::new(plan, dll),
            lambda_true,
        })
    }

    fn gains(&self) -> &ChannelGains {
        &self.scenario.gains
    }

    pub fn i_th(&self) -> &[f64] {
        &self.i_th
    }

    /// Geometric dilution of every link with all gNBs, K×M.
    pub fn lambda_true(&self) -> &[f64] {
        &self.lambda_true
    }

    /// (1/M)(λσ̃)² and the bracket D of link (k0, m0) under physical duals.
    fn link_terms(&self, powers: &PowerMatrix, lambda: f64, duals: &DualState, k0: usize, m0: usize) -> (f64, f64) {
        let g = self.gains();
        let m = g.m;
        let a = lambda * lambda * self.sig2(powers, k0, m0, true) / m as f64;
        let leak: f64 = self.link_qos[k0 * m + m0].iter().map(|(i, c)| duals.mu[*i] * c).sum();
        let rival: f64 = (0..g.k)
            .filter(|&j| j != k0 && competitor(g, powers, j, m0) == Some(k0))
            .map(|j| duals.beta[j * m + m0])
            .sum();
        let h = g.hp(k0, m0);
        let price = duals.nu[k0] + leak - duals.beta[k0 * m + m0] * h + self.constraints.hear.threshold() * h * rival;
        (a, price)
    }

    /// (λσ̃)² in m²·W for link (k0, m0), cross powers from `powers` when `cross`.
    fn sig2(&self, powers: &PowerMatrix, k0: usize, m0: usize, cross: bool) -> f64 {
        let q = if cross { cross_power(self.gains(), powers, k0, m0) } else { 0.0 };
        C * C * self.coef.factor(self.gains().hp(k0, m0), self.hbar[m0], q)
    }

    pub fn objective(&self, powers: &PowerMatrix, lambda: &[f64]) -> f64 {
        let (k, m) = (self.gains().k, self.gains().m);
        let mut total = 0.0;
        for k0 in 0..k {
            for m0 in 0..m {
                let p = powers.at(k0, m0);
                if p > 0.0 {
                    total += lambda[k0 * m + m0].powi(2) * self.sig2(powers, k0, m0, true) / p;
                } else {
                    return f64::INFINITY;
                }
            }
        }
        total / m as f64
    }

    /// Interference at every C-User, K×N.
    pub fn interference(&self, powers: &PowerMatrix) -> Vec<f64> {
        let g = self.gains();
        let km = g.k * g.m;
        let p = powers.as_slice();
        self.options.exec.map(g.k * g.n, |i| dot(&self.weights[i * km..(i + 1) * km], p))
    }

    /// Receiver threshold H^{km} = ϱΩ·max_{k'≠k}|h_p^{k'm}|²P_p^{k'm}.
    fn hear_target(&self, powers: &PowerMatrix, k0: usize, m0: usize) -> f64 {
        let g = self.gains();
        let strongest = (0..g.k).filter(|&k2| k2 != k0).map(|k2| g.hp(k2, m0) * powers.at(k2, m0)).fold(0.0, f64::max);
        self.constraints.hear.threshold() * strongest
    }

    /// Link-level σ, λ, coverage and Ψ for a power matrix.
    pub fn evaluate(&self, powers: &PowerMatrix) -> Evaluation {
        let g = self.gains();
        let (k, m) = (g.k, g.m);
        let hear = &self.constraints.hear;
        let mut sigma = vec![0.0; k * m];
        let mut lambda = vec![0.0; k * m];
        let mut psi = vec![0.0; m];
        let mut coverage = vec![false; m];
        for m0 in 0..m {
            let rx: Vec<f64> = (0..k).map(|k0| g.hp(k0, m0) * powers.at(k0, m0)).collect();
            let heard = hearable_from_received(&rx, hear.threshold());
            if heard.len() < hear.min_gnbs {
                continue;
            }
            let sub: Vec<Position> = heard.iter().map(|&k0| self.scenario.gnbs[k0]).collect();
            let Ok(geo) = dilution(&sub, &self.scenario.pusers[m0], self.options.geometry) else {
                continue;
            };
            let sig: Vec<f64> =
                heard.iter().map(|&k0| (self.sig2(powers, k0, m0, true) / powers.at(k0, m0)).sqrt()).collect();
            for (i, &k0) in heard.iter().enumerate() {
                sigma[k0 * m + m0] = sig[i];
                lambda[k0 * m + m0] = geo.lambda[i];
            }
            psi[m0] = horizontal_accuracy(&geo.lambda, &sig).unwrap_or(0.0);
            coverage[m0] = true;
        }
        let covered: Vec<f64> = psi.iter().zip(&coverage).filter(|(_, c)| **c).map(|(p, _)| *p).collect();
        let mean_psi_covered =
            if covered.is_empty() { 0.0 } else { covered.iter().sum::<f64>() / covered.len() as f64 };
        Evaluation { sigma, lambda, psi, coverage, mean_psi_covered }
    }

    /// Relative violations (QoS, budget, hearability) of a power matrix.
    pub fn violations(&self, powers: &PowerMatrix) -> (f64, f64, f64) {
        let g = self.gains();
        let interference = self.interference(powers);
        let qos =
            interference.iter().zip(&self.i_th).zip(&self.i_scale).map(|((i, t), s)| (i - t) / s).fold(0.0, f64::max);
        let budget = (0..g.k)
            .map(|k0| (powers.row0(k0).iter().sum::<f64>() - self.constraints.p_th[k0]) / self.constraints.p_th[k0])
            .fold(0.0, f64::max);
        let mut hearing: f64 = 0.0;
        for k0 in 0..g.k {
            let pmax = self.constraints.p_th[k0];
            for m0 in 0..g.m {
                let p = powers.at(k0, m0);
                if p >= pmax * (1.0 - 1e-9) {
                    continue;
                }
                let h = self.hear_target(powers, k0, m0);
                if h > 0.0 {
                    hearing = hearing.max((h - g.hp(k0, m0) * p) / h);
                }
            }
        }
        (qos, budget, hearing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub psi: Vec<f64>,
    pub coverage: Vec<bool>,
    pub mean_psi_covered: f64,
}

fn estimated_lambda(problem: &Problem, psi: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = problem.gains();
    let (k, m) = (g.k, g.m);
    let mut out = problem.lambda_true.clone();
    for m0 in 0..m {
        let spread = psi[m0] / std::f64::consts::SQRT_2;
        let u = problem.scenario.pusers[m0];
        let gauss = |rng: &mut ChaCha8Rng| {
            let (a, b): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
            (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
        };
        let est = Position::new(u.x + spread * gauss(rng), u.y + spread * gauss(rng), u.z);
        if let Ok(geo) = dilution(&problem.scenario.gnbs, &est, problem.options.geometry) {
            for k0 in 0..k {
                out[k0 * m + m0] = geo.lambda[k0];
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn step(base: f64, t: usize) -> f64 {
    base / (t as f64).sqrt()
}

fn kkt_value(a: f64, price: f64, pmax: f64) -> f64 {
    if price > 0.0 {
        (a / price).sqrt().min(pmax)
    } else {
        pmax
    }
}

/// ν̂ with Σ_m P_m(ν̂) = P_th, by bisection; 0 when the budget is slack at ν̂ = 0.
fn budget_root(a: &[f64], offset: &[f64], s: f64, pmax: f64, budget: f64) -> f64 {
    let total = |nu: f64| -> f64 { a.iter().zip(offset).map(|(ai, oi)| kkt_value(*ai, s * (nu + oi), pmax)).sum() };
    if total(0.0) <= budget {
        return 0.0;
    }
    let mut hi = 1.0;
    while total(hi) > budget && hi < 1e300 {
        hi *= 4.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// μ̂ that brings C-User i = k0·N + n0 to its cap, other multipliers and
/// other gNBs' powers fixed; None when the own links cannot reach the cap.
#[allow(clippy::too_many_arguments)]
fn qos_root(
    problem: &Problem,
    powers: &PowerMatrix,
    a: &[f64],
    leak: &[f64],
    nu: &[f64],
    beta: &[f64],
    mu: &[f64],
    scale: &[f64],
    interference: &[f64],
    i: usize,
    links: &mut Vec<(f64, usize, f64, f64, f64)>,
) -> Option<f64> {
    let g = problem.gains();
    let (m, n) = (g.m, g.n);
    let k0 = i / n;
    if problem.qos_links[i].is_empty() {
        return None;
    }
    // With μ̂ = 0 the response at unchanged prices is `powers` itself.
    if mu[i] == 0.0 && interference[i] <= problem.i_th[i] {
        return Some(0.0);
    }
    let p_th = &problem.constraints.p_th;
    let unit = scale[k0] * p_th[k0] / problem.i_scale[i];
    // (coefficient into I, link, price weight of μ̂, price without this μ̂, power cap)
    links.clear();
    links.extend(problem.qos_links[i].iter().map(|e| {
        let k2 = e.link / m;
        let w = unit * e.price / scale[k2];
        (e.coef, e.link, w, nu[k2] + leak[e.link] - mu[i] * w - beta[e.link], p_th[k2])
    }));
    let links = &*links;
    let other = interference[i] - links.iter().map(|(c, l, ..)| c * powers.as_slice()[*l]).sum::<f64>();
    let level = |x: f64| -> f64 {
        other
            + links
                .iter()
                .map(|(c, l, w, base, pmax)| c * kkt_value(a[*l], scale[l / m] * (base + x * w), *pmax))
                .sum::<f64>()
    };
    let cap = problem.i_th[i];
    if level(0.0) <= cap {
        return Some(0.0);
    }
    if other >= cap {
        return None;
    }
    let mut hi = 1.0;
    while level(hi) > cap {
        hi *= 4.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if level(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Some(hi)
}

/// Nested projected-subgradient dual solver.
///
/// Multipliers are iterated in a per-gNB normalized form: ν^k = s_kν̂^k,
/// μ^{kn} = s_kP_th^kμ̂^{kn}/I_th^{kn}, β^{km} = s_kβ̂^{km}/|h_p^{km}|², where s_k is
/// the budget-only water-filling price of the first iteration. Subgradients
/// are scaled by P_th^k, I_th^{kn} and P_th^k/M, so the step sizes in `duals`
/// are dimensionless. Zero initial ν starts from the water-filling price.
/// Powers are clamped to [0, P_th^k]; a nonpositive KKT bracket gives P_th^k.
pub fn pcjpa(problem: &Problem, duals_init: &DualState) -> Result<AllocationReport> {
    duals_init.validate()?;
    let g = problem.gains();
    let (k, m, n) = (g.k, g.m, g.n);
    if duals_init.mu.len() != k * n || duals_init.nu.len() != k || duals_init.beta.len() != k * m {
        return Err(Error::LengthMismatch { left: duals_init.mu.len(), right: k * n });
    }
    let exec = problem.options.exec;
    let sign = problem.options.direction.sign();
    let rooted = problem.options.steps == StepScaling::RootDirected;
    let p_th = &problem.constraints.p_th;
    let mf = m as f64;

    // First iteration: λ ≡ 1, no cross-gNB positioning interference.
    let mut lambda = vec![1.0; k * m];
    let mut cross = false;
    let zero = PowerMatrix::zeros(k, m);
    let scale: Vec<f64> = (0..k)
        .map(|k0| {
            let s: f64 = (0..m).map(|m0| problem.sig2(&zero, k0, m0, false).sqrt()).sum();
            s * s / (mf * p_th[k0] * p_th[k0])
        })
        .collect();
    let mut nu: Vec<f64> =
        (0..k).map(|k0| if duals_init.nu[k0] > 0.0 { duals_init.nu[k0] / scale[k0] } else { 1.0 }).collect();
    let mut mu: Vec<f64> =
        (0..k * n).map(|i| duals_init.mu[i] * problem.i_scale[i] / (scale[i / n] * p_th[i / n])).collect();
    let mut beta: Vec<f64> = (0..k * m).map(|i| duals_init.beta[i] * g.h_p[i] / scale[i / m]).collect();
    // One multiplier per pairwise form |h^{km}|²P^{km} ≥ ϱΩ|h^{k'm}|²P^{k'm}; β^{km} is their sum.
    let mut pair = vec![0.0; k * m * k];
    if k > 1 {
        for i in 0..k * m {
            for k2 in (0..k).filter(|&k2| k2 != i / m) {
                pair[i * k + k2] = beta[i] / (k - 1) as f64;
            }
        }
    }

    let rho_omega = problem.constraints.hear.threshold();
    let mut powers = PowerMatrix::zeros(k, m);
    let mut next = PowerMatrix::zeros(k, m);
    let mut a = vec![0.0; k * m];
    // Leakage plus competitor price per link, normalized.
    let mut leak = vec![0.0; k * m];
    let mut trace = Vec::new();
    let mut inner_total = 0usize;
    let mut converged = false;
    let mut outer = 0usize;
    let mut rng = match problem.options.lambda_mode {
        LambdaMode::Estimated { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        LambdaMode::TruePositions => None,
    };
    let mut last_psi = vec![0.0; m];
    let mut scratch = Vec::new();

    for t in 1..=duals_init.iter_n {
        outer = t;
        if t >= 2 {
            lambda = match rng.as_mut() {
                Some(r) => estimated_lambda(problem, &last_psi, r),
                None => problem.lambda_true.clone(),
            };
            cross = true;
        }
        let mut inner_done = false;
        let mut inner = 0usize;
        for t2 in 1..=duals_init.iter_n {
            inner = t2;
            {
                let (cur, lam) = (&powers, &lambda);
                exec.fill(&mut a, |i| lam[i] * lam[i] * problem.sig2(cur, i / m, i % m, cross) / mf);
            }
            leak.fill(0.0);
            for (i, links) in problem.qos_links.iter().enumerate() {
                if mu[i] > 0.0 {
                    let unit = mu[i] * scale[i / n] * p_th[i / n] / problem.i_scale[i];
                    for e in links {
                        leak[e.link] += unit * e.price / scale[e.link / m];
                    }
                }
            }
            // Competitor coupling ϱΩ|h^{km}|²Σ_jβ^{jm←k}, in units of s_k.
            for m0 in 0..m {
                for j in 0..k {
                    for k0 in (0..k).filter(|&k0| k0 != j) {
                        let bp = pair[(j * m + m0) * k + k0];
                        if bp > 0.0 {
                            leak[k0 * m + m0] += rho_omega * g.hp(k0, m0) * scale[j] * bp / (scale[k0] * g.hp(j, m0));
                        }
                    }
                }
            }
            for i in 0..k * m {
                let k0 = i / m;
                next.as_mut_slice()[i] = kkt_value(a[i], scale[k0] * (nu[k0] + leak[i] - beta[i]), p_th[k0]);
            }
            let interference = problem.interference(&next);
            let b2 = step(duals_init.b2, t2);
            let b3 = step(duals_init.b3, t2);
            let mut delta: f64 = 0.0;
            for i in 0..k * n {
                let fixed = mu[i] + sign * b2 * (problem.i_th[i] - interference[i]) / problem.i_scale[i];
                let v = if rooted {
                    match qos_root(problem, &next, &a, &leak, &nu, &beta, &mu, &scale, &interference, i, &mut scratch) {
                        Some(root) => {
                            let reach = mu[i].max(1.0);
                            mu[i] - sign * b2 * (root - mu[i]).clamp(-reach, reach)
                        }
                        None => fixed,
                    }
                } else {
                    fixed
                };
                let v = v.max(0.0);
                delta = delta.max((v - mu[i]).abs());
                mu[i] = v;
            }
            for k0 in 0..k {
                let p_ref = p_th[k0] / mf;
                for m0 in 0..m {
                    let i = k0 * m + m0;
                    let cap = (nu[k0] + leak[i]).max(0.0);
                    for k2 in (0..k).filter(|&k2| k2 != k0) {
                        let ip = i * k + k2;
                        let target = rho_omega * g.hp(k2, m0) * next.at(k2, m0) / g.hp(k0, m0);
                        let rest = beta[i] - pair[ip];
                        let room = (cap - rest).max(0.0);
                        let v = if rooted {
                            let root =
                                if target > 0.0 { cap - a[i] / (scale[k0] * target * target) - rest } else { 0.0 };
                            pair[ip] - sign * b3 * (root.clamp(0.0, room) - pair[ip])
                        } else {
                            pair[ip] + sign * b3 * (next.at(k0, m0) - target) / p_ref
                        };
                        let v = v.clamp(0.0, room);
                        delta = delta.max((v - pair[ip]).abs());
                        beta[i] = rest + v;
                        pair[ip] = v;
                    }
                }
            }
            std::mem::swap(&mut powers, &mut next);
            if delta <= duals_init.eps {
                inner_done = true;
                break;
            }
        }
        inner_total += inner;

        let b1 = step(duals_init.b1, t);
        let mut delta: f64 = 0.0;
        for k0 in 0..k {
            let v = if rooted {
                let row = k0 * m..(k0 + 1) * m;
                let offset: Vec<f64> = row.clone().map(|i| leak[i] - beta[i]).collect();
                let root = budget_root(&a[row], &offset, scale[k0], p_th[k0], p_th[k0]);
                nu[k0] - sign * b1 * (root - nu[k0])
            } else {
                let s = (p_th[k0] - powers.row0(k0).iter().sum::<f64>()) / p_th[k0];
                nu[k0] + sign * b1 * s
            };
            let v = v.max(0.0);
            delta = delta.max((v - nu[k0]).abs());
            nu[k0] = v;
        }
        let (qos, budget, hearing) = problem.violations(&powers);
        trace.push(TraceRow {
            iteration: t,
            inner_iterations: inner,
            objective: problem.objective(&powers, &problem.lambda_true),
            qos_violation: qos,
            budget_violation: budget,
            hearability_violation: hearing,
        });
        if rng.is_some() {
            last_psi = problem.evaluate(&powers).psi;
        }
        if t >= 2 && inner_done && delta <= duals_init.eps {
            converged = true;
            break;
        }
    }

    let eval = problem.evaluate(&powers);
    let duals = DualState {
        mu: (0..k * n).map(|i| mu[i] * scale[i / n] * p_th[i / n] / problem.i_scale[i]).collect(),
        nu: (0..k).map(|k0| nu[k0] * scale[k0]).collect(),
        beta: (0..k * m).map(|i| beta[i] * scale[i / m] / g.h_p[i]).collect(),
        ..duals_init.clone()
    };
    Ok(AllocationReport {
        powers,
        psi: eval.psi,
        coverage: eval.coverage,
        mean_psi_covered: eval.mean_psi_covered,
        sigma: eval.sigma,
        lambda: eval.lambda,
        iterations_outer: outer,
        iterations_inner: inner_total,
        converged,
        trace,
        duals: Some(duals),
    })
}

/// Equal split of each budget, scaled down uniformly if any QoS cap binds.
pub fn equal_power(problem: &Problem) -> AllocationReport {
    let g = problem.gains();
    let (k, m) = (g.k, g.m);
    let mut powers = PowerMatrix::zeros(k, m);
    for k0 in 0..k {
        for m0 in 0..m {
            *powers.at_mut(k0, m0) = problem.constraints.p_th[k0] / m as f64;
        }
    }
    let interference = problem.interference(&powers);
    let worst = interference
        .iter()
        .zip(&problem.i_th)
        .map(|(i, t)| {
            if *t > 0.0 {
                i / t
            } else if *i > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    if worst > 1.0 {
        powers = if worst.is_finite() { powers.scale(1.0 / worst) } else { PowerMatrix::zeros(k, m) };
    }
    let eval = problem.evaluate(&powers);
    let (qos, budget, hearing) = problem.violations(&powers);
    AllocationReport {
        psi: eval.psi,
        coverage: eval.coverage,
        mean_psi_covered: eval.mean_psi_covered,
        sigma: eval.sigma,
        lambda: eval.lambda,
        iterations_outer: 0,
        iterations_inner: 0,
        converged: true,
        trace: vec![TraceRow {
            iteration: 0,
            inner_iterations: 0,
            objective: problem.objective(&powers, &problem.lambda_true),
            qos_violation: qos,
            budget_violation: budget,
            hearability_violation: hearing,
        }],
        duals: None,
        powers,
    }
}

/// Powers of P-User slot `m` by every gNB under fixed duals and fixed other
/// slots, iterated `rounds` times: the KKT response without the slot's own
/// hearability multipliers, raised toward the hearability target and then
/// lowered wherever it drowns another gNB. Each power is capped by the
/// remaining budget and the exact QoS headroom.
pub fn probe_response(
    problem: &Problem,
    duals: &DualState,
    powers: &PowerMatrix,
    m: usize,
    rounds: usize,
) -> Result<Vec<f64>> {
    let g = problem.gains();
    let (k, mm, n) = (g.k, g.m, g.n);
    let m0 = check_index("m", m, mm)?;
    if duals.mu.len() != k * n || duals.nu.len() != k || duals.beta.len() != k * mm {
        return Err(Error::LengthMismatch { left: duals.mu.len(), right: k * n });
    }
    let mut duals = duals.clone();
    for k0 in 0..k {
        duals.beta[k0 * mm + m0] = 0.0;
    }
    let tp = problem.plan.t_p();
    let mut cur = powers.clone();
    for k0 in 0..k {
        *cur.at_mut(k0, m0) = 0.0;
    }
    let base = problem.interference(&cur);
    for k0 in 0..k {
        *cur.at_mut(k0, m0) = powers.at(k0, m0);
    }
    let rho_omega = problem.constraints.hear.threshold();
    for _ in 0..rounds.max(1) {
        let col: Vec<f64> = (0..k).map(|k0| cur.at(k0, m0)).collect();
        let mut next = vec![0.0; k];
        for k0 in 0..k {
            let room = problem.constraints.p_th[k0] - (0..mm).filter(|&j| j != m0).map(|j| cur.at(k0, j)).sum::<f64>();
            let mut cap = room.max(0.0);
            for i in 0..k * n {
                let s = tp * problem.table.at(m0, i % n);
                let c = g.hpc(i / n, i % n, k0, m0) * s;
                if c > 0.0 {
                    let others: f64 =
                        (0..k).filter(|&j| j != k0).map(|j| g.hpc(i / n, i % n, j, m0) * s * col[j]).sum();
                    cap = cap.min(((problem.i_th[i] - base[i] - others) / c).max(0.0));
                }
            }
            let lambda = problem.lambda_true[k0 * mm + m0];
            let (a, price) = problem.link_terms(&cur, lambda, &duals, k0, m0);
            let mut p = kkt_value(a, price, cap);
            let target = rho_omega * (0..k).filter(|&j| j != k0).map(|j| g.hp(j, m0) * col[j]).fold(0.0, f64::max)
                / g.hp(k0, m0);
            if p < target {
                p = target.min(cap);
            }
            next[k0] = p;
        }
        // Lower any gNB that drowns another below the hearability ratio.
        for k0 in 0..k {
            let ceiling = (0..k)
                .filter(|&j| j != k0)
                .map(|j| g.hp(j, m0) * next[j] / (rho_omega * g.hp(k0, m0)))
                .fold(f64::INFINITY, f64::min);
            *cur.at_mut(k0, m0) = next[k0].min(ceiling);
        }
    }
    Ok((0..k).map(|k0| cur.at(k0, m0)).collect())
}

/// Outcome of [`dual_function_check`] for one gNB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientCheck {
    pub k: usize,
    pub g_a: f64,
    pub g_b: f64,
    /// g(b) − g(a) − ⟨b − a, s(a)⟩.
    pub slack: f64,
    /// slack / max(|g(a)|, |g(b)|, |⟨b − a, s(a)⟩|), zero when all three vanish.
    pub relative_slack: f64,
}

/// Subgradients of the dual function at a maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgradients {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Grid search over each P_p^{km} in (0, P_th^k] for the per-gNB dual function.
pub struct DualGrid {
    pub points: usize,
}

impl Default for DualGrid {
    fn default() -> Self {
        Self { points: 4000 }
    }
}

/// Per-gNB dual function g^k and its maximizing powers; other gNBs' powers
/// and the geometric dilution are held fixed.
pub fn dual_function(
    problem: &Problem,
    duals: &DualState,
    others: &PowerMatrix,
    lambda: &[f64],
    k0: usize,
    grid: &DualGrid,
) -> (f64, Vec<f64>) {
    let g = problem.gains();
    let (m, n) = (g.m, g.n);
    let pmax = problem.constraints.p_th[k0];
    let tp = problem.plan.t_p();
    let mut best_p = vec![0.0; m];
    let mut value = 0.0;
    for m0 in 0..m {
        let a = lambda[k0 * m + m0].powi(2) * problem.sig2(others, k0, m0, true) / m as f64;
        let own_leak: f64 =
            (0..n).map(|n0| duals.mu[k0 * n + n0] * g.hpc(k0, n0, k0, m0) * tp * problem.table.at(m0, n0)).sum();
        let price = duals.nu[k0] + own_leak - duals.beta[k0 * m + m0] * g.hp(k0, m0);
        let mut best = f64::NEG_INFINITY;
        for i in 1..=grid.points {
            let p = pmax * i as f64 / grid.points as f64;
            let v = -a / p - price * p;
            if v > best {
                best = v;
                best_p[m0] = p;
            }
        }
        value += best;
    }
    // P-independent parts: μ(I_th − I_others), νP_th, −βH.
    let mut trial = others.clone();
    for m0 in 0..m {
        *trial.at_mut(k0, m0) = 0.0;
    }
    let base = problem.interference(&trial);
    for n0 in 0..n {
        value += duals.mu[k0 * n + n0] * (problem.i_th[k0 * n + n0] - base[k0 * n + n0]);
    }
    value += duals.nu[k0] * problem.constraints.p_th[k0];
    for m0 in 0..m {
        value -= duals.beta[k0 * m + m0] * problem.hear_target(others, k0, m0);
    }
    (value, best_p)
}

/// Subgradients of g^k at the maximizer `p_k` (row k of the returned powers).
pub fn subgradients(problem: &Problem, others: &PowerMatrix, k0: usize, p_k: &[f64]) -> Subgradients {
    let g = problem.gains();
    let (m, n) = (g.m, g.n);
    let mut full = others.clone();
    for m0 in 0..m {
        *full.at_mut(k0, m0) = p_k[m0];
    }
    let interference = problem.interference(&full);
    Subgradients {
        mu: (0..n).map(|n0| problem.i_th[k0 * n + n0] - interference[k0 * n + n0]).collect(),
        nu: vec![problem.constraints.p_th[k0] - p_k.iter().sum::<f64>()],
        beta: (0..m).map(|m0| g.hp(k0, m0) * p_k[m0] - problem.hear_target(others, k0, m0)).collect(),
    }
}

/// Checks g^k(b) ≥ g^k(a) + ⟨b − a, s(a)⟩ for every gNB.
///
/// `flip` negates the subgradient, which should make the check fail.
pub fn dual_function_check(
    problem: &Problem,
    duals_a: &DualState,
    duals_b: &DualState,
    powers: &PowerMatrix,
    grid: &DualGrid,
    flip: bool,
) -> Vec<SubgradientCheck> {
    let g = problem.gains();
    let (k, m, n) = (g.k, g.m, g.n);
    let lambda = &problem.lambda_true;
    (0..k)
        .map(|k0| {
            let (ga, pa) = dual_function(problem, duals_a, powers, lambda, k0, grid);
            let (gb, _) = dual_function(problem, duals_b, powers, lambda, k0, grid);
            let s = subgradients(problem, powers, k0, &pa);
            let sgn = if flip { -1.0 } else { 1.0 };
            let mut inner = (duals_b.nu[k0] - duals_a.nu[k0]) * s.nu[0];
            for n0 in 0..n {
                inner += (duals_b.mu[k0 * n + n0] - duals_a.mu[k0 * n + n0]) * s.mu[n0];
            }
            for m0 in 0..m {
                inner += (duals_b.beta[k0 * m + m0] - duals_a.beta[k0 * m + m0]) * s.beta[m0];
            }
            let slack = gb - ga - sgn * inner;
            let norm = ga.abs().max(gb.abs()).max(inner.abs());
            let relative_slack = if norm > 0.0 { slack / norm } else { 0.0 };
            SubgradientCheck { k: k0 + 1, g_a: ga, g_b: gb, slack, relative_slack }
        })
        .collect()
}
