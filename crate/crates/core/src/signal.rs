//! Spectral layout of the multi-scale signal, PSDs, positioning-to-communication
//! interference and the C-User bit error rate.

use crate::error::{check_index, Error, Result};
use crate::exec::Exec;
use crate::mathkit::{erfc, sinc2};

/// Spectral layout and symbol timing.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlan {
    /// Total bandwidth B (Hz).
    pub bandwidth: f64,
    /// C-User sub-carrier spacing Δf_c (Hz).
    pub delta_f_c: f64,
    /// Spacing ratio G, so that Δf_p = G·Δf_c.
    pub spacing_ratio: u32,
    /// Central frequency B₀ (Hz). Integrals are taken around the signal's own sub-carrier.
    pub b0: f64,
    /// Double-sided front-end bandwidth B_fe (Hz).
    pub bfe: f64,
    /// BER scale Γ.
    pub ber_scale: f64,
    /// BER SNR scale γ.
    pub ber_snr_scale: f64,
    /// Per-C-User power P_c (W).
    pub pc: f64,
    /// Single-sided noise PSD N₀ (W/Hz).
    pub n0: f64,
    /// Number of P-Users; `None` uses floor(B/Δf_p) − 1.
    pub num_pusers: Option<usize>,
}

const FLOOR_EPS: f64 = 1e-9;

impl SignalPlan {
    /// Plan with Δf_c = 30 kHz, B_fe = 2B, Γ = 0.5, γ = 1 and unit P_c, N₀.
    pub fn new(bandwidth: f64, spacing_ratio: u32) -> Self {
        Self {
            bandwidth,
            delta_f_c: 30e3,
            spacing_ratio,
            b0: 0.0,
            bfe: 2.0 * bandwidth,
            ber_scale: 0.5,
            ber_snr_scale: 1.0,
            pc: 1.0,
            n0: 1.0,
            num_pusers: None,
        }
    }

    pub fn delta_f_p(&self) -> f64 {
        self.spacing_ratio as f64 * self.delta_f_c
    }

    pub fn t_c(&self) -> f64 {
        1.0 / self.delta_f_c
    }

    pub fn t_p(&self) -> f64 {
        1.0 / self.delta_f_p()
    }

    /// N = floor(B/Δf_c) − 1.
    pub fn n_cusers(&self) -> usize {
        ((self.bandwidth / self.delta_f_c + FLOOR_EPS).floor() as usize).saturating_sub(1)
    }

    /// Largest P-User count whose sub-carriers m·Δf_p stay within B.
    pub fn max_pusers(&self) -> usize {
        (self.bandwidth / self.delta_f_p() + FLOOR_EPS).floor() as usize
    }

    /// M, either the explicit override or floor(B/Δf_p) − 1.
    pub fn n_pusers(&self) -> usize {
        self.num_pusers.unwrap_or_else(|| self.max_pusers().saturating_sub(1))
    }

    pub fn g(&self) -> f64 {
        self.spacing_ratio as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive");
        }
        if !(self.delta_f_c > 0.0) {
            return bad("sub-carrier spacing must be positive");
        }
        if self.spacing_ratio < 1 {
            return bad("spacing ratio must be at least 1");
        }
        if !(self.bfe >= self.bandwidth) {
            return bad("front-end bandwidth must be at least the total bandwidth");
        }
        if !(self.ber_scale > 0.0 && self.ber_snr_scale > 0.0) {
            return bad("BER scales must be positive");
        }
        if !(self.pc > 0.0 && self.n0 > 0.0) {
            return bad("C-User power and noise PSD must be positive");
        }
        if self.n_cusers() < 1 {
            return bad("plan has no C-User sub-carriers");
        }
        let m = self.n_pusers();
        if m < 1 || m > self.max_pusers() {
            return bad("P-User count must lie in 1..=floor(B/Δf_p)");
        }
        Ok(())
    }
}

/// Channel power gains for K gNBs, M P-Users and N C-Users per gNB.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// |h_p^{km}|², K×M row-major.
    pub h_p: Vec<f64>,
    /// |h_c^{kn}|², K×N row-major.
    pub h_c: Vec<f64>,
    /// |h_p^{kn←k'm}|², indexed [(k·N+n)·K+k']·M+m.
    pub h_p_to_c: Vec<f64>,
    /// |h_c^{m←k'n}|², indexed (m·K+k')·N+n.
    pub h_c_to_p: Vec<f64>,
    comm_uniform: bool,
}

impl ChannelGains {
    pub fn new(
        k: usize,
        m: usize,
        n: usize,
        h_p: Vec<f64>,
        h_c: Vec<f64>,
        h_p_to_c: Vec<f64>,
        h_c_to_p: Vec<f64>,
    ) -> Result<Self> {
        let check = |v: &[f64], len: usize| -> Result<()> {
            if v.len() != len {
                return Err(Error::LengthMismatch { left: v.len(), right: len });
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Domain("channel gains must be finite and nonnegative".into()));
            }
            Ok(())
        };
        check(&h_p, k * m)?;
        check(&h_c, k * n)?;
        check(&h_p_to_c, k * n * k * m)?;
        check(&h_c_to_p, m * k * n)?;
        let comm_uniform = h_c_to_p.chunks(n.max(1)).all(|c| c.iter().all(|&x| x == c[0]));
        Ok(Self { k, m, n, h_p, h_c, h_p_to_c, h_c_to_p, comm_uniform })
    }

    /// Single-cell gains with every entry equal to one.
    pub fn unit(k: usize, m: usize, n: usize) -> Self {
        Self::new(k, m, n, vec![1.0; k * m], vec![1.0; k * n], vec![1.0; k * n * k * m], vec![1.0; m * k * n])
            .expect("unit gains are valid")
    }

    #[inline]
    pub(crate) fn hp(&self, k0: usize, m0: usize) -> f64 {
        self.h_p[k0 * self.m + m0]
    }

    #[inline]
    pub(crate) fn hc(&self, k0: usize, n0: usize) -> f64 {
        self.h_c[k0 * self.n + n0]
    }

    #[inline]
    pub(crate) fn hpc(&self, k0: usize, n0: usize, k2: usize, m0: usize) -> f64 {
        self.h_p_to_c[((k0 * self.n + n0) * self.k + k2) * self.m + m0]
    }

    #[inline]
    pub(crate) fn hcp_row(&self, m0: usize, k2: usize) -> &[f64] {
        let start = (m0 * self.k + k2) * self.n;
        &self.h_c_to_p[start..start + self.n]
    }

    /// True when |h_c^{m←k'n}|² does not depend on n for every (m, k').
    pub fn comm_gains_uniform(&self) -> bool {
        self.comm_uniform
    }

    pub(crate) fn check_plan(&self, plan: &SignalPlan) -> Result<()> {
        if self.m != plan.n_pusers() {
            return Err(Error::LengthMismatch { left: self.m, right: plan.n_pusers() });
        }
        if self.n != plan.n_cusers() {
            return Err(Error::LengthMismatch { left: self.n, right: plan.n_cusers() });
        }
        Ok(())
    }
}

/// K×M matrix of positioning powers (W).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix {
    pub k: usize,
    pub m: usize,
    data: Vec<f64>,
}

impl PowerMatrix {
    pub fn zeros(k: usize, m: usize) -> Self {
        Self { k, m, data: vec![0.0; k * m] }
    }

    pub fn filled(k: usize, m: usize, value: f64) -> Self {
        Self { k, m, data: vec![value; k * m] }
    }

    /// Matrix from row-major data.
    pub fn from_rows(k: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * m {
            return Err(Error::LengthMismatch { left: data.len(), right: k * m });
        }
        if data.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("powers must be finite and nonnegative".into()));
        }
        Ok(Self { k, m, data })
    }

    /// P_p^{km} with 1-based indices.
    pub fn get(&self, k: usize, m: usize) -> Result<f64> {
        let k0 = check_index("k", k, self.k)?;
        let m0 = check_index("m", m, self.m)?;
        Ok(self.at(k0, m0))
    }

    /// Sets P_p^{km} with 1-based indices.
    pub fn set(&mut self, k: usize, m: usize, value: f64) -> Result<()> {
        let k0 = check_index("k", k, self.k)?;
        let m0 = check_index("m", m, self.m)?;
        self.data[k0 * self.m + m0] = value;
        Ok(())
    }

    #[inline]
    pub(crate) fn at(&self, k0: usize, m0: usize) -> f64 {
        self.data[k0 * self.m + m0]
    }

    #[inline]
    pub(crate) fn at_mut(&mut self, k0: usize, m0: usize) -> &mut f64 {
        &mut self.data[k0 * self.m + m0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Σ_m P_p^{km} for 1-based k.
    pub fn row_sum(&self, k: usize) -> Result<f64> {
        let k0 = check_index("k", k, self.k)?;
        Ok(self.row0(k0).iter().sum())
    }

    pub(crate) fn row0(&self, k0: usize) -> &[f64] {
        &self.data[k0 * self.m..(k0 + 1) * self.m]
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { k: self.k, m: self.m, data: self.data.iter().map(|p| p * factor).collect() }
    }
}

/// G_p^m(f) = T_p·sinc²((f − mΔf_p)T_p).
pub fn psd_positioning(plan: &SignalPlan, m: usize, f: f64) -> Result<f64> {
    check_index("m", m, plan.n_pusers())?;
    let tp = plan.t_p();
    Ok(tp * sinc2((f - m as f64 * plan.delta_f_p()) * tp))
}

/// G_c^n(f) = T_c·sinc²((f − nΔf_c)T_c).
pub fn psd_communication(plan: &SignalPlan, n: usize, f: f64) -> Result<f64> {
    check_index("n", n, plan.n_cusers())?;
    let tc = plan.t_c();
    Ok(tc * sinc2((f - n as f64 * plan.delta_f_c) * tc))
}

/// sinc²(m − n/G) for 1-based m, n.
#[inline]
pub fn overlap(plan: &SignalPlan, m: usize, n: usize) -> f64 {
    sinc2(m as f64 - n as f64 / plan.g())
}

/// Power of positioning signal k2·m received by C-User kn: |h|²·P·T_p·sinc²(m − n/G).
pub fn received_pos_power_at_cuser(
    plan: &SignalPlan,
    gains: &ChannelGains,
    k: usize,
    n: usize,
    k2: usize,
    m: usize,
    p: f64,
) -> Result<f64> {
    let k0 = check_index("k", k, gains.k)?;
    let n0 = check_index("n", n, gains.n)?;
    let k20 = check_index("k'", k2, gains.k)?;
    let m0 = check_index("m", m, gains.m)?;
    if !(p >= 0.0) {
        return Err(Error::Domain("power must be nonnegative".into()));
    }
    Ok(gains.hpc(k0, n0, k20, m0) * p * plan.t_p() * overlap(plan, m, n))
}

/// Table of sinc²(m − n/G) stored n-major, i.e. entry [n0·M + m0].
#[derive(Debug, Clone)]
pub struct OverlapTable {
    pub m: usize,
    pub n: usize,
    data: Vec<f64>,
}

impl OverlapTable {
    pub fn new(plan: &SignalPlan) -> Self {
        let (m, n) = (plan.n_pusers(), plan.n_cusers());
        let mut data = vec![0.0; m * n];
        for n0 in 0..n {
            for m0 in 0..m {
                data[n0 * m + m0] = overlap(plan, m0 + 1, n0 + 1);
            }
        }
        Self { m, n, data }
    }

    #[inline]
    pub fn row(&self, n0: usize) -> &[f64] {
        &self.data[n0 * self.m..(n0 + 1) * self.m]
    }

    #[inline]
    pub fn at(&self, m0: usize, n0: usize) -> f64 {
        self.data[n0 * self.m + m0]
    }
}

pub(crate) fn interference0(
    plan: &SignalPlan,
    gains: &ChannelGains,
    table: &OverlapTable,
    powers: &PowerMatrix,
    k0: usize,
    n0: usize,
) -> f64 {
    let s = table.row(n0);
    let mut total = 0.0;
    for k2 in 0..gains.k {
        let base = ((k0 * gains.n + n0) * gains.k + k2) * gains.m;
        let g = &gains.h_p_to_c[base..base + gains.m];
        let p = powers.row0(k2);
        total += g.iter().zip(p).zip(s).map(|((g, p), s)| g * p * s).sum::<f64>();
    }
    total * plan.t_p()
}

/// I^{kn} = Σ_{k'}Σ_m |h|²·P·T_p·sinc²(m − n/G).
pub fn interference_at_cuser(
    plan: &SignalPlan,
    gains: &ChannelGains,
    powers: &PowerMatrix,
    k: usize,
    n: usize,
) -> Result<f64> {
    let k0 = check_index("k", k, gains.k)?;
    let n0 = check_index("n", n, gains.n)?;
    check_shape(gains, powers)?;
    let s: Vec<f64> = (1..=gains.m).map(|m| overlap(plan, m, n)).collect();
    let mut total = 0.0;
    for k2 in 0..gains.k {
        for m0 in 0..gains.m {
            total += gains.hpc(k0, n0, k2, m0) * powers.at(k2, m0) * s[m0];
        }
    }
    Ok(total * plan.t_p())
}

/// I^{kn} for all C-Users, K×N row-major.
pub fn interference_all(
    plan: &SignalPlan,
    gains: &ChannelGains,
    table: &OverlapTable,
    powers: &PowerMatrix,
    exec: Exec,
) -> Vec<f64> {
    let n = gains.n;
    exec.map(gains.k * n, |i| interference0(plan, gains, table, powers, i / n, i % n))
}

pub(crate) fn check_shape(gains: &ChannelGains, powers: &PowerMatrix) -> Result<()> {
    if powers.k != gains.k || powers.m != gains.m {
        return Err(Error::LengthMismatch { left: powers.k * powers.m, right: gains.k * gains.m });
    }
    Ok(())
}

/// BER from an interference value: Γ·erfc(γ|h_c|²P_cT_c/(I + 2N₀)).
pub fn ber_from_interference(plan: &SignalPlan, hc: f64, interference: f64) -> f64 {
    let snr = plan.ber_snr_scale * hc * plan.pc * plan.t_c() / (interference + 2.0 * plan.n0);
    plan.ber_scale * erfc(snr)
}

/// BER of C-User kn under the given positioning powers.
pub fn ber_cuser(plan: &SignalPlan, gains: &ChannelGains, powers: &PowerMatrix, k: usize, n: usize) -> Result<f64> {
    let i = interference_at_cuser(plan, gains, powers, k, n)?;
    Ok(ber_from_interference(plan, gains.hc(k - 1, n - 1), i))
}

/// Single-cell BER with unit gains: I^n = Σ_m P_p^m T_p sinc²(m − n/G).
pub fn ber_single_cell(plan: &SignalPlan, powers: &[f64], n: usize) -> Result<f64> {
    check_index("n", n, plan.n_cusers())?;
    if powers.len() != plan.n_pusers() {
        return Err(Error::LengthMismatch { left: powers.len(), right: plan.n_pusers() });
    }
    let i: f64 = powers.iter().enumerate().map(|(m0, p)| p * overlap(plan, m0 + 1, n)).sum::<f64>() * plan.t_p();
    Ok(ber_from_interference(plan, 1.0, i))
}
