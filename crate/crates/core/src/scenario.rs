//! Network scenarios: gNB layout, random user placement, free-space gains,
//! hearability of positioning signals, and a line-oriented text format.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_index, Error, Result};
use crate::geometry::Position;
use crate::ranging::C;
use crate::signal::{ChannelGains, PowerMatrix, SignalPlan};

/// |h|² = (c/(4πdf))².
pub fn free_space_gain(d: f64, f: f64) -> Result<f64> {
    if !(d > 0.0) || !(f > 0.0) {
        return Err(Error::Domain(format!("free-space gain needs d > 0 and f > 0 (d = {d}, f = {f})")));
    }
    Ok((C / (4.0 * std::f64::consts::PI * d * f)).powi(2))
}

/// Placement parameters for [`build_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub gnbs: Vec<Position>,
    /// Coverage rectangle (x_min, y_min, x_max, y_max).
    pub region: [f64; 4],
    pub carrier_hz: f64,
    /// Height assigned to every user (m).
    pub user_height: f64,
    /// Minimum horizontal distance between a P-User and any gNB (m).
    pub min_gnb_distance: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            gnbs: vec![
                Position::planar(0.0, 0.0),
                Position::planar(0.0, 200.0),
                Position::planar(200.0, 200.0),
                Position::planar(200.0, 0.0),
            ],
            region: [0.0, 0.0, 200.0, 200.0],
            carrier_hz: 3.5e9,
            user_height: 0.0,
            min_gnb_distance: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.region;
        if self.gnbs.is_empty() {
            return Err(Error::Config("at least one gNB is required".into()));
        }
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::Config("coverage region must have positive width and height".into()));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::Config("carrier frequency must be positive".into()));
        }
        if !(self.min_gnb_distance >= 0.0) {
            return Err(Error::Config("minimum gNB distance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gnbs: Vec<Position>,
    pub pusers: Vec<Position>,
    /// K×N, row-major by serving gNB.
    pub cusers: Vec<Position>,
    pub cusers_per_gnb: usize,
    pub carrier_hz: f64,
    pub seed: u64,
    pub gains: ChannelGains,
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.gnbs.len()
    }

    pub fn m(&self) -> usize {
        self.pusers.len()
    }

    pub fn n(&self) -> usize {
        self.cusers_per_gnb
    }

    /// C-User kn (1-based).
    pub fn cuser(&self, k: usize, n: usize) -> Result<Position> {
        let k0 = check_index("k", k, self.k())?;
        let n0 = check_index("n", n, self.n())?;
        Ok(self.cusers[k0 * self.n() + n0])
    }

    /// Scenario from explicit positions; gains follow from the free-space model.
    pub fn from_positions(
        gnbs: Vec<Position>,
        pusers: Vec<Position>,
        cusers: Vec<Position>,
        cusers_per_gnb: usize,
        carrier_hz: f64,
        seed: u64,
    ) -> Result<Self> {
        let k = gnbs.len();
        let m = pusers.len();
        let n = cusers_per_gnb;
        if cusers.len() != k * n {
            return Err(Error::LengthMismatch { left: cusers.len(), right: k * n });
        }
        let gain = |a: &Position, b: &Position| free_space_gain(a.distance(b), carrier_hz);
        let mut pu_gain = vec![0.0; k * m];
        for k0 in 0..k {
            for m0 in 0..m {
                pu_gain[k0 * m + m0] = gain(&gnbs[k0], &pusers[m0])?;
            }
        }
        let mut h_c = vec![0.0; k * n];
        let mut h_p_to_c = vec![0.0; k * n * k * m];
        for k0 in 0..k {
            for n0 in 0..n {
                let u = &cusers[k0 * n + n0];
                h_c[k0 * n + n0] = gain(&gnbs[k0], u)?;
                for k2 in 0..k {
                    let g = gain(&gnbs[k2], u)?;
                    let base = ((k0 * n + n0) * k + k2) * m;
                    h_p_to_c[base..base + m].fill(g);
                }
            }
        }
        let mut h_c_to_p = vec![0.0; m * k * n];
        for m0 in 0..m {
            for k2 in 0..k {
                let base = (m0 * k + k2) * n;
                h_c_to_p[base..base + n].fill(pu_gain[k2 * m + m0]);
            }
        }
        let gains = ChannelGains::new(k, m, n, pu_gain, h_c, h_p_to_c, h_c_to_p)?;
        Ok(Self { gnbs, pusers, cusers, cusers_per_gnb: n, carrier_hz, seed, gains })
    }
}

fn nearest_gnb(gnbs: &[Position], x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, g) in gnbs.iter().enumerate() {
        let d = (g.x - x).powi(2) + (g.y - y).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Random scenario: M P-Users uniform in the region, N C-Users per gNB
/// uniform in its Voronoi cell. Deterministic in `seed`.
pub fn build_scenario(cfg: &ScenarioConfig, plan: &SignalPlan, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let [x0, y0, x1, y1] = cfg.region;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pusers = Vec::with_capacity(plan.n_pusers());
    let min_d2 = cfg.min_gnb_distance.powi(2);
    let mut attempts = 0usize;
    while pusers.len() < plan.n_pusers() {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::Config("minimum gNB distance excludes the whole region".into()));
        }
        let x = rng.gen_range(x0..=x1);
        let y = rng.gen_range(y0..=y1);
        if min_d2 > 0.0 && cfg.gnbs.iter().any(|g| (g.x - x).powi(2) + (g.y - y).powi(2) < min_d2) {
            continue;
        }
        pusers.push(Position::new(x, y, cfg.user_height));
    }
    let n = plan.n_cusers();
    let k = cfg.gnbs.len();
    let mut cusers = vec![Position::default(); k * n];
    let mut filled = vec![0usize; k];
    let mut draws = 0usize;
    while filled.iter().any(|&c| c < n) {
        draws += 1;
        if draws > 1000 * k * n + 1_000_000 {
            return Err(Error::Config("a gNB cell does not intersect the coverage region".into()));
        }
        let x = rng.gen_range(x0..=x1);
        let y = rng.gen_range(y0..=y1);
        let owner = nearest_gnb(&cfg.gnbs, x, y);
        if filled[owner] < n {
            let p = Position::new(x, y, cfg.user_height);
            if cfg.gnbs[owner].distance(&p) > 0.0 {
                cusers[owner * n + filled[owner]] = p;
                filled[owner] += 1;
            }
        }
    }
    Scenario::from_positions(cfg.gnbs.clone(), pusers, cusers, n, cfg.carrier_hz, seed)
}

/// Receiver margin ϱ, effective cross/auto correlation ratio Ω and fix threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HearabilityConfig {
    pub rho: f64,
    pub omega: f64,
    pub min_gnbs: usize,
}

impl HearabilityConfig {
    pub fn threshold(&self) -> f64 {
        self.rho * self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 1.0) {
            return Err(Error::Config("rho must be at least 1".into()));
        }
        if !(self.omega > 0.0) || !(self.threshold() < 1.0) {
            return Err(Error::Config("omega must be positive with rho·omega < 1".into()));
        }
        if self.min_gnbs < 1 {
            return Err(Error::Config("min_gnbs must be at least 1".into()));
        }
        Ok(())
    }
}

/// 0-based hearable gNBs for P-User m0 given received powers `rx[k0]`.
pub(crate) fn hearable_from_received(rx: &[f64], threshold: f64) -> Vec<usize> {
    (0..rx.len())
        .filter(|&k0| {
            let strongest_other = rx.iter().enumerate().filter(|(j, _)| *j != k0).map(|(_, r)| *r).fold(0.0, f64::max);
            rx[k0] > 0.0 && rx[k0] >= threshold * strongest_other
        })
        .collect()
}

/// gNBs (1-based) whose positioning signal P-User m can acquire.
pub fn hearable_set(
    scenario: &Scenario,
    powers: &PowerMatrix,
    hear: &HearabilityConfig,
    m: usize,
) -> Result<Vec<usize>> {
    let m0 = check_index("m", m, scenario.m())?;
    let rx: Vec<f64> = (0..scenario.k()).map(|k0| scenario.gains.hp(k0, m0) * powers.at(k0, m0)).collect();
    Ok(hearable_from_received(&rx, hear.threshold()).into_iter().map(|k0| k0 + 1).collect())
}

/// True when enough gNBs are hearable for a position fix.
pub fn fix_available(hearable: &[usize], hear: &HearabilityConfig) -> bool {
    hearable.len() >= hear.min_gnbs
}

impl Scenario {
    /// Line-oriented text: header records, then one `kind index x y z` line per entity.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# msnoma scenario");
        let _ = writeln!(s, "carrier_hz {:?}", self.carrier_hz);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "cusers_per_gnb {}", self.cusers_per_gnb);
        let mut line = |kind: &str, i: usize, p: &Position| {
            let _ = writeln!(s, "{kind} {i} {:?} {:?} {:?}", p.x, p.y, p.z);
        };
        for (i, p) in self.gnbs.iter().enumerate() {
            line("gnb", i + 1, p);
        }
        for (i, p) in self.pusers.iter().enumerate() {
            line("puser", i + 1, p);
        }
        for (i, p) in self.cusers.iter().enumerate() {
            line("cuser", i + 1, p);
        }
        s
    }

    /// Parses [`Scenario::to_text`] output; gains are re-derived.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut carrier = None;
        let mut seed = 0u64;
        let mut per_gnb = None;
        let mut gnbs = Vec::new();
        let mut pusers = Vec::new();
        let mut cusers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number {s:?}: {e}")));
            match fields[0] {
                "carrier_hz" if fields.len() == 2 => carrier = Some(num(fields[1])?),
                "seed" if fields.len() == 2 => seed = fields[1].parse().map_err(|e| err(format!("bad seed: {e}")))?,
                "cusers_per_gnb" if fields.len() == 2 => {
                    per_gnb = Some(fields[1].parse().map_err(|e| err(format!("bad count: {e}")))?)
                }
                kind @ ("gnb" | "puser" | "cuser") if fields.len() == 5 => {
                    let idx: usize = fields[1].parse().map_err(|e| err(format!("bad index: {e}")))?;
                    let p = Position::new(num(fields[2])?, num(fields[3])?, num(fields[4])?);
                    let list = match kind {
                        "gnb" => &mut gnbs,
                        "puser" => &mut pusers,
                        _ => &mut cusers,
                    };
                    if idx != list.len() + 1 {
                        return Err(err(format!("{kind} index {idx} out of sequence")));
                    }
                    list.push(p);
                }
                _ => return Err(err(format!("unrecognized record {line:?}"))),
            }
        }
        let missing = |what: &str| Error::Parse { line: 0, reason: format!("missing {what}") };
        let carrier = carrier.ok_or_else(|| missing("carrier_hz"))?;
        let per_gnb = per_gnb.ok_or_else(|| missing("cusers_per_gnb"))?;
        Self::from_positions(gnbs, pusers, cusers, per_gnb, carrier, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> SignalPlan {
        let mut p = SignalPlan::new(20e6, 30);
        p.num_pusers = Some(20);
        p
    }

    #[test]
    fn free_space_examples() {
        let f = 3.5e9;
        let d0 = C / (4.0 * std::f64::consts::PI * f);
        assert!((free_space_gain(d0, f).unwrap() - 1.0).abs() < 1e-12);
        let g1 = free_space_gain(50.0, f).unwrap();
        let g2 = free_space_gain(100.0, f).unwrap();
        assert!((g1 / g2 - 4.0).abs() < 1e-12);
        assert!((10.0 * g2.log10() + 83.3).abs() < 0.1);
        assert!(free_space_gain(0.0, f).is_err());
    }

    #[test]
    fn build_is_deterministic_and_in_region() {
        let cfg = ScenarioConfig::default();
        let a = build_scenario(&cfg, &plan(), 9).unwrap();
        let b = build_scenario(&cfg, &plan(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m(), 20);
        for p in &a.pusers {
            assert!((0.0..=200.0).contains(&p.x) && (0.0..=200.0).contains(&p.y));
        }
        for k in 1..=a.k() {
            for n in 1..=a.n() {
                let u = a.cuser(k, n).unwrap();
                assert_eq!(nearest_gnb(&a.gnbs, u.x, u.y), k - 1);
            }
        }
        assert!(a.gains.h_p_to_c.iter().all(|g| g.is_finite() && *g > 0.0));
        assert!(a.gains.comm_gains_uniform());
        let c = build_scenario(&cfg, &plan(), 10).unwrap();
        assert_ne!(a.pusers, c.pusers);
    }

    #[test]
    fn hearability_examples() {
        let hear = HearabilityConfig { rho: 2.0, omega: 0.1, min_gnbs: 3 };
        assert_eq!(hearable_from_received(&[1.0, 1.0, 1.0, 1.0], 0.2), vec![0, 1, 2, 3]);
        assert_eq!(hearable_from_received(&[10.0, 1.0, 1.0, 1.0], 0.2), vec![0]);
        assert_eq!(hearable_from_received(&[10.0, 2.0, 2.0, 1.0], 0.2), vec![0, 1, 2]);
        assert_eq!(hearable_from_received(&[10.0, 0.0, 5.0, 5.0], 0.2), vec![0, 2, 3]);
        assert!(fix_available(&[1, 2, 3, 4], &hear));
        assert!(!fix_available(&[1, 2], &hear));
    }

    #[test]
    fn hearability_config_validation() {
        assert!(HearabilityConfig { rho: 0.5, omega: 0.1, min_gnbs: 3 }.validate().is_err());
        assert!(HearabilityConfig { rho: 2.0, omega: 0.6, min_gnbs: 3 }.validate().is_err());
        assert!(HearabilityConfig { rho: 2.0, omega: 0.09, min_gnbs: 3 }.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let a = build_scenario(&ScenarioConfig::default(), &plan(), 3).unwrap();
        let text = a.to_text();
        assert!(text.lines().any(|l| l.starts_with("puser 20 ")));
        let b = Scenario::from_text(&text).unwrap();
        assert_eq!(a, b);
        assert!(Scenario::from_text("carrier_hz 1\nbogus 1 2 3 4\n").is_err());
    }
}
