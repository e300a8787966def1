//! DLL ranging error of a positioning sub-carrier: exact quotient of
//! integrals, its three-term approximation, the ranging factor, and the
//! intermediate integrals A₀–A₃ used to derive the approximation.

use std::f64::consts::PI;

use crate::error::{check_index, Error, Result};
use crate::mathkit::{integrate_panels, sinc2, sinc2_comb, QuadratureSpec};
use crate::signal::{check_shape, ChannelGains, PowerMatrix, SignalPlan};

/// Speed of light (m/s).
pub const C: f64 = 299_792_458.0;

/// Delay-locked loop parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DllConfig {
    /// Code loop noise bandwidth B_L (Hz).
    pub b_l: f64,
    /// Predetection integration time T_coh (s).
    pub t_coh: f64,
    /// Early-late spacing D (chips).
    pub d: f64,
    /// Loop factor override (Hz).
    pub a: Option<f64>,
}

impl Default for DllConfig {
    fn default() -> Self {
        Self { b_l: 0.2, t_coh: 0.02, d: 0.02, a: None }
    }
}

impl DllConfig {
    /// a = B_L(1 − 0.5·B_L·T_coh) unless overridden.
    pub fn loop_factor(&self) -> f64 {
        self.a.unwrap_or(self.b_l * (1.0 - 0.5 * self.b_l * self.t_coh))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_l > 0.0 && self.t_coh > 0.0) {
            return Err(Error::Config("loop bandwidth and integration time must be positive".into()));
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(Error::Config("early-late spacing must lie in (0, 1)".into()));
        }
        if !(self.loop_factor() > 0.0) {
            return Err(Error::Config("loop factor must be positive".into()));
        }
        Ok(())
    }
}

/// Decomposition of the approximate ranging variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangingBreakdown {
    pub sigma2_noise: f64,
    pub sigma2_comm: f64,
    pub sigma2_xpos: f64,
    pub sigma2_total: f64,
    pub sigma_meters: f64,
}

impl RangingBreakdown {
    fn from_terms(noise: f64, comm: f64, xpos: f64) -> Self {
        let total = noise + comm + xpos;
        Self {
            sigma2_noise: noise,
            sigma2_comm: comm,
            sigma2_xpos: xpos,
            sigma2_total: total,
            sigma_meters: C * total.sqrt(),
        }
    }
}

/// Normalized equivalent communication gain (2/N)·Σ_n |h_c^{m←k'n}|²·sin²(nπ/G).
pub fn equivalent_comm_gain(plan: &SignalPlan, row: &[f64]) -> f64 {
    let g = plan.g();
    let n = row.len() as f64;
    let s: f64 = row
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let s = ((i + 1) as f64 * PI / g).sin();
            h * s * s
        })
        .sum();
    2.0 / n * s
}

/// Σ_{k'} of [`equivalent_comm_gain`] for P-User m (0-based).
pub(crate) fn equivalent_comm_gain_sum(plan: &SignalPlan, gains: &ChannelGains, m0: usize) -> f64 {
    (0..gains.k).map(|k2| equivalent_comm_gain(plan, gains.hcp_row(m0, k2))).sum()
}

/// Per-plan constants of the three-term ranging factor.
#[derive(Debug, Clone, Copy)]
pub struct FactorCoefficients {
    /// aT_p²/2 · N₀/(B_fe T_p).
    pub noise: f64,
    /// aT_p²/2 · B G P_c / B_fe².
    pub comm: f64,
    /// aT_p²/2 / (B_fe² T_p).
    pub xpos: f64,
}

impl FactorCoefficients {
    pub fn new(plan: &SignalPlan, dll: &DllConfig) -> Self {
        let tp = plan.t_p();
        let lead = 0.5 * dll.loop_factor() * tp * tp;
        let bfe = plan.bfe;
        Self {
            noise: lead * plan.n0 / (bfe * tp),
            comm: lead * plan.bandwidth * plan.g() * plan.pc / (bfe * bfe),
            xpos: lead / (bfe * bfe * tp),
        }
    }

    /// Noise, communication and cross-positioning parts of σ²·P (s²·W).
    #[inline]
    pub fn parts(&self, gain: f64, comm_gain_sum: f64, cross_power: f64) -> (f64, f64, f64) {
        (self.noise / gain, self.comm * comm_gain_sum / gain, self.xpos * cross_power / gain)
    }

    /// σ̃² = σ²·P (s²·W).
    #[inline]
    pub fn factor(&self, gain: f64, comm_gain_sum: f64, cross_power: f64) -> f64 {
        let (a, b, c) = self.parts(gain, comm_gain_sum, cross_power);
        a + b + c
    }
}

struct Link {
    k0: usize,
    m0: usize,
    gain: f64,
    power: f64,
}

fn link(gains: &ChannelGains, powers: &PowerMatrix, k: usize, m: usize) -> Result<Link> {
    check_shape(gains, powers)?;
    let k0 = check_index("k", k, gains.k)?;
    let m0 = check_index("m", m, gains.m)?;
    Ok(Link { k0, m0, gain: gains.hp(k0, m0), power: powers.at(k0, m0) })
}

fn cross_power(gains: &ChannelGains, powers: &PowerMatrix, k0: usize, m0: usize) -> f64 {
    (0..gains.k).filter(|&k2| k2 != k0).map(|k2| gains.hp(k2, m0) * powers.at(k2, m0)).sum()
}

/// Three-term approximation of the ranging variance of link km (s²).
pub fn ranging_var_approx(
    plan: &SignalPlan,
    gains: &ChannelGains,
    powers: &PowerMatrix,
    dll: &DllConfig,
    k: usize,
    m: usize,
) -> Result<RangingBreakdown> {
    let l = link(gains, powers, k, m)?;
    if l.gain == 0.0 || l.power == 0.0 {
        return Err(Error::ZeroPower { k, m });
    }
    let tp = plan.t_p();
    let lead = 0.5 * dll.loop_factor() * tp * tp;
    let signal = l.gain * l.power;
    let cn0 = signal / plan.n0;
    let cpr_sum: f64 = (0..gains.k)
        .map(|k2| {
            let h = equivalent_comm_gain(plan, gains.hcp_row(l.m0, k2));
            2.0 * plan.g() * h * plan.pc / signal
        })
        .sum();
    let ppr_sum = cross_power(gains, powers, l.k0, l.m0) / signal;
    let bfe = plan.bfe;
    Ok(RangingBreakdown::from_terms(
        lead / (bfe * tp * cn0),
        lead * plan.bandwidth * cpr_sum / (2.0 * bfe * bfe),
        lead * ppr_sum / (bfe * bfe * tp),
    ))
}

/// σ̃² = σ²·P_p^{km} (s²·W); independent of P_p^{km}.
pub fn ranging_factor(
    plan: &SignalPlan,
    gains: &ChannelGains,
    powers: &PowerMatrix,
    dll: &DllConfig,
    k: usize,
    m: usize,
) -> Result<f64> {
    let l = link(gains, powers, k, m)?;
    if l.gain == 0.0 {
        return Err(Error::ZeroPower { k, m });
    }
    let coef = FactorCoefficients::new(plan, dll);
    Ok(coef.factor(l.gain, equivalent_comm_gain_sum(plan, gains, l.m0), cross_power(gains, powers, l.k0, l.m0)))
}

/// Single-cell approximation from C/N₀ (Hz) and CPR (linear).
pub fn ranging_var_single_cell(plan: &SignalPlan, dll: &DllConfig, cn0: f64, cpr: f64) -> f64 {
    let tp = plan.t_p();
    let lead = 0.5 * dll.loop_factor() * tp * tp;
    lead * (1.0 / (plan.bfe * tp * cn0) + plan.bandwidth * cpr / (2.0 * plan.bfe * plan.bfe))
}

/// Communication PSD received by a P-User, evaluated at absolute frequency f'.
enum CommSpectrum<'a> {
    None,
    /// Gains identical over n: P_c·T_c·w·Σ_n sinc²(f'T_c − n).
    Uniform {
        weight: f64,
        count: usize,
    },
    /// Per-(k', n) gains.
    General {
        rows: Vec<&'a [f64]>,
    },
}

impl CommSpectrum<'_> {
    fn eval(&self, plan: &SignalPlan, f_abs: f64) -> f64 {
        let tc = plan.t_c();
        let x = f_abs * tc;
        match self {
            CommSpectrum::None => 0.0,
            CommSpectrum::Uniform { weight, count } => plan.pc * tc * weight * sinc2_comb(x, *count),
            CommSpectrum::General { rows } => {
                let s = (PI * x).sin();
                let s2 = s * s / (PI * PI);
                let mut total = 0.0;
                for row in rows {
                    for (i, h) in row.iter().enumerate() {
                        let d = x - (i + 1) as f64;
                        total += if d.abs() < 1e-6 { h * sinc2(d) } else { h * s2 / (d * d) };
                    }
                }
                plan.pc * tc * total
            }
        }
    }

    fn active(&self) -> bool {
        !matches!(self, CommSpectrum::None)
    }
}

fn comm_spectrum<'a>(plan: &SignalPlan, gains: &'a ChannelGains, m0: usize) -> CommSpectrum<'a> {
    if plan.pc == 0.0 {
        return CommSpectrum::None;
    }
    if gains.comm_gains_uniform() {
        let weight: f64 = (0..gains.k).map(|k2| gains.hcp_row(m0, k2)[0]).sum();
        if weight == 0.0 {
            return CommSpectrum::None;
        }
        CommSpectrum::Uniform { weight, count: gains.n }
    } else {
        CommSpectrum::General { rows: (0..gains.k).map(|k2| gains.hcp_row(m0, k2)).collect() }
    }
}

fn seed_panels(plan: &SignalPlan, comm: bool) -> usize {
    let period = if comm { plan.delta_f_c } else { plan.delta_f_p() };
    (8.0 * plan.bfe / period).max(16.0).ceil() as usize
}

/// Quadrature values of A₀–A₃ together with their closed-form counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixIntegrals {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// ∫ f²·sinc⁴(fT_p) df over the front-end band.
    pub a3_bar: f64,
    /// D·B_fe/(2π).
    pub a0_closed: f64,
    /// π·D·T_p·N₀·A₀ with the quadrature A₀.
    pub a1_closed: f64,
    /// D²·T_p·P_c·Σ_{k'}Σ_n |h_c^{m←k'n}|²·sin²(nπ/G).
    pub a2_closed: f64,
    /// π²D²T_p⁴·Σ_{k'≠k}|h|²P·Ā₃ with the closed-form Ā₃.
    pub a3_closed: f64,
    /// 1/(2π²T_p³).
    pub a3_bar_closed: f64,
    /// a(A₁+A₂+A₃)/((2π)²|h|²P·A₀²) from the quadrature values (s²).
    pub sigma2: f64,
}

/// The four intermediate integrals of link km and their closed forms.
pub fn appendix_integrals(
    plan: &SignalPlan,
    gains: &ChannelGains,
    powers: &PowerMatrix,
    dll: &DllConfig,
    k: usize,
    m: usize,
    quad: QuadratureSpec,
) -> Result<AppendixIntegrals> {
    let l = link(gains, powers, k, m)?;
    if l.gain == 0.0 || l.power == 0.0 {
        return Err(Error::ZeroPower { k, m });
    }
    let tp = plan.t_p();
    let d = dll.d;
    let shift = (l.m0 + 1) as f64 * plan.delta_f_p();
    let comm = comm_spectrum(plan, gains, l.m0);
    let q = cross_power(gains, powers, l.k0, l.m0);
    let (lo, hi) = (plan.b0 - 0.5 * plan.bfe, plan.b0 + 0.5 * plan.bfe);
    let plain = seed_panels(plan, false);
    let lobe = |f: f64| tp * sinc2(f * tp);
    let disc = |f: f64| {
        let s = (PI * f * d * tp).sin();
        s * s
    };

    let a0 = integrate_panels(|f| f * lobe(f) * (PI * f * d * tp).sin(), lo, hi, plain, quad)?;
    let a1 = plan.n0 * integrate_panels(|f| lobe(f) * disc(f), lo, hi, plain, quad)?;
    let a2 = if comm.active() {
        integrate_panels(|f| comm.eval(plan, f + shift) * lobe(f) * disc(f), lo, hi, seed_panels(plan, true), quad)?
    } else {
        0.0
    };
    let a3_bar = integrate_panels(|f| f * f * sinc2(f * tp).powi(2), lo, hi, plain, quad)?;
    let a3 = q * integrate_panels(|f| lobe(f) * lobe(f) * disc(f), lo, hi, plain, quad)?;

    let g = plan.g();
    let comm_sum: f64 = if plan.pc == 0.0 {
        0.0
    } else {
        (0..gains.k)
            .map(|k2| {
                gains
                    .hcp_row(l.m0, k2)
                    .iter()
                    .enumerate()
                    .map(|(i, h)| h * ((i + 1) as f64 * PI / g).sin().powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    let a3_bar_closed = 1.0 / (2.0 * PI * PI * tp.powi(3));
    let sigma2 = dll.loop_factor() * (a1 + a2 + a3) / ((2.0 * PI).powi(2) * l.gain * l.power * a0 * a0);
    Ok(AppendixIntegrals {
        a0,
        a1,
        a2,
        a3,
        a3_bar,
        a0_closed: d * plan.bfe / (2.0 * PI),
        a1_closed: PI * d * tp * plan.n0 * a0,
        a2_closed: d * d * tp * plan.pc * comm_sum,
        a3_closed: PI * PI * d * d * tp.powi(4) * q * a3_bar_closed,
        a3_bar_closed,
        sigma2,
    })
}

/// Ranging variance of link km by direct quadrature of the DLL error quotient (s²).
pub fn ranging_var_exact(
    plan: &SignalPlan,
    gains: &ChannelGains,
    powers: &PowerMatrix,
    dll: &DllConfig,
    k: usize,
    m: usize,
    quad: QuadratureSpec,
) -> Result<f64> {
    let l = link(gains, powers, k, m)?;
    if l.gain == 0.0 || l.power == 0.0 {
        return Err(Error::ZeroPower { k, m });
    }
    let tp = plan.t_p();
    let d = dll.d;
    let shift = (l.m0 + 1) as f64 * plan.delta_f_p();
    let comm = comm_spectrum(plan, gains, l.m0);
    let q = cross_power(gains, powers, l.k0, l.m0);
    let (lo, hi) = (plan.b0 - 0.5 * plan.bfe, plan.b0 + 0.5 * plan.bfe);
    let lobe = |f: f64| tp * sinc2(f * tp);

    let num = integrate_panels(
        |f| {
            let s = (PI * f * d * tp).sin();
            let lob = lobe(f);
            (plan.n0 + comm.eval(plan, f + shift) + q * lob) * lob * s * s
        },
        lo,
        hi,
        seed_panels(plan, comm.active()),
        quad,
    )?;
    let den = integrate_panels(|f| f * lobe(f) * (PI * f * d * tp).sin(), lo, hi, seed_panels(plan, false), quad)?;
    let den = (2.0 * PI * den).powi(2);
    Ok(dll.loop_factor() * num / (l.gain * l.power * den))
}
