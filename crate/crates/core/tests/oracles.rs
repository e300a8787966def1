//! Independent oracles for the signal, ranging, geometry and allocator layers.

use std::f64::consts::PI;

use msnoma::allocator::{equal_power, interference_threshold, j_leakage, Constraints, Problem, SolverOptions};
use msnoma::config::ExperimentConfig;
use msnoma::experiments::{ber_sweep, single_cell_ranging};
use msnoma::geometry::{dilution, horizontal_accuracy, GeometryMode, Position};
use msnoma::mathkit::{erfc, erfc_inv, integrate, sinc, sinc2, sinc2_comb, QuadratureSpec};
use msnoma::ranging::{ranging_var_approx, ranging_var_single_cell, DllConfig, C};
use msnoma::scenario::{build_scenario, free_space_gain, HearabilityConfig, Scenario};
use msnoma::signal::{ber_cuser, ber_from_interference, interference_at_cuser, ChannelGains, PowerMatrix, SignalPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn comb_sum_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let count = rng.gen_range(1..40);
        let x = rng.gen_range(-5.0..(count as f64 + 5.0));
        let direct: f64 = (1..=count).map(|n| sinc2(x - n as f64)).sum();
        assert!((sinc2_comb(x, count) - direct).abs() < 1e-11, "x {x} count {count}");
    }
    for j in 1..10 {
        let x = j as f64 + 1e-9;
        let direct: f64 = (1..=12).map(|n| sinc2(x - n as f64)).sum();
        assert!((sinc2_comb(x, 12) - direct).abs() < 1e-11);
    }
}

#[test]
fn quadrature_of_known_integrals() {
    let q = QuadratureSpec::default();
    let v = integrate(|x| x.sin(), 0.0, PI, q).unwrap();
    assert!((v - 2.0).abs() < 1e-9);
    let v = integrate(sinc2, -200.0, 200.0, q).unwrap();
    // ∫sinc² over ℝ is 1; each tail beyond ±L holds about 1/(2π²L).
    assert!((v - (1.0 - 1.0 / (PI * PI * 200.0))).abs() < 1e-6);
    assert_eq!(sinc(0.0), 1.0);
    assert!(sinc(3.0).abs() < 1e-15);
}

#[test]
fn erfc_inverse_known_values() {
    assert_eq!(erfc_inv(1.0).unwrap(), 0.0);
    // erfc(1) = 0.157299207050285...
    assert!((erfc_inv(0.157_299_207_050_285_13).unwrap() - 1.0).abs() < 1e-12);
    assert!((erfc_inv(2.0 - 0.157_299_207_050_285_13).unwrap() + 1.0).abs() < 1e-12);
    assert!(erfc_inv(0.0).is_err());
    assert!(erfc_inv(2.0).is_err());
}

fn random_gains(rng: &mut ChaCha8Rng, k: usize, m: usize, n: usize) -> ChannelGains {
    let mut v = |len: usize| (0..len).map(|_| rng.gen_range(0.1..2.0)).collect::<Vec<f64>>();
    let (a, b, c, d) = (v(k * m), v(k * n), v(k * n * k * m), v(m * k * n));
    ChannelGains::new(k, m, n, a, b, c, d).unwrap()
}

#[test]
fn interference_is_the_triple_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut plan = SignalPlan::new(12.0 * 30e3, 3);
    plan.num_pusers = Some(3);
    let (k, m, n) = (3, 3, plan.n_cusers());
    let gains = random_gains(&mut rng, k, m, n);
    let data: Vec<f64> = (0..k * m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let powers = PowerMatrix::from_rows(k, m, data.clone()).unwrap();
    let tp = 1.0 / (3.0 * 30e3);
    for k1 in 1..=k {
        for n1 in 1..=n {
            let mut direct = 0.0;
            for k2 in 0..k {
                for m0 in 0..m {
                    let g = gains.h_p_to_c[(((k1 - 1) * n + n1 - 1) * k + k2) * m + m0];
                    let s = sinc2((m0 + 1) as f64 - n1 as f64 / 3.0);
                    direct += g * data[k2 * m + m0] * tp * s;
                }
            }
            let v = interference_at_cuser(&plan, &gains, &powers, k1, n1).unwrap();
            assert!((v - direct).abs() <= 1e-12 * direct, "{v} {direct}");
            let j: f64 = (0..k)
                .map(|k2| gains.h_p_to_c[(((k1 - 1) * n + n1 - 1) * k + k2) * m] * tp * sinc2(1.0 - n1 as f64 / 3.0))
                .sum();
            assert!((j_leakage(&plan, &gains, k1, n1, 1).unwrap() - j).abs() <= 1e-12 * j);
        }
    }
}

#[test]
fn ber_at_threshold_equals_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut plan = SignalPlan::new(12.0 * 30e3, 3);
    plan.num_pusers = Some(3);
    plan.n0 = 1e-18;
    plan.pc = 1e-12;
    let gains = random_gains(&mut rng, 2, 3, plan.n_cusers());
    for xi in [1e-4, 1e-3, 8e-3, 0.05] {
        for n1 in 1..=plan.n_cusers() {
            let t = interference_threshold(&plan, &gains, xi, 1, n1).unwrap();
            if !t.infeasible {
                let ber = ber_from_interference(&plan, gains.h_c[n1 - 1], t.value);
                assert!(((ber - xi) / xi).abs() < 1e-9, "{ber} {xi}");
            }
        }
    }
}

#[test]
fn noise_only_ber_and_sweep_reference() {
    let mut cfg = ExperimentConfig::default();
    cfg.ebn0_max_db = 10.0;
    cfg.cpr_list_db = vec![5.0, 20.0, f64::INFINITY];
    let out = ber_sweep(&cfg).unwrap();
    let rows: Vec<(f64, String, f64)> = out
        .artifact("ber_sweep.csv")
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    for (eb, cpr, v) in &rows {
        let reference = 0.5 * erfc(10f64.powf(eb / 10.0) / 2.0);
        if cpr == "inf" {
            assert!(((v - reference) / reference).abs() < 1e-12);
        } else {
            assert!(*v > reference);
        }
    }
    // Small CPR flattens: the last 5 dB gain less than a tenth as much as the noise-only curve.
    let at = |cpr: &str, eb: f64| rows.iter().find(|r| r.1 == cpr && r.0 == eb).unwrap().2;
    let flat = at("5", 5.0) / at("5", 10.0);
    let free = at("inf", 5.0) / at("inf", 10.0);
    assert!(flat < 0.1 * free, "{flat} {free}");
}

#[test]
fn single_cell_ranging_closed_form() {
    let plan = SignalPlan::new(50e6, 80);
    let dll = DllConfig::default();
    let cn0 = 10f64.powf(4.5);
    let cpr = 100.0;
    let (p, gains, powers) = single_cell_ranging(&plan, cn0, cpr);
    let tp = 1.0 / 2.4e6;
    let bfe = 100e6;
    let a = 0.2 * (1.0 - 0.5 * 0.2 * 0.02);
    let oracle = a * tp * tp / 2.0 * (1.0 / (bfe * tp * cn0) + 50e6 * cpr / (2.0 * bfe * bfe));
    assert!(((ranging_var_single_cell(&p, &dll, cn0, cpr) - oracle) / oracle).abs() < 1e-12);
    let b = ranging_var_approx(&p, &gains, &powers, &dll, 1, 1).unwrap();
    assert!(((b.sigma2_total - oracle) / oracle).abs() < 1e-9);
    assert!((b.sigma_meters - C * oracle.sqrt()).abs() < 1e-12);
}

#[test]
fn geometry_center_of_square() {
    let gnbs = [
        Position::planar(0.0, 0.0),
        Position::planar(0.0, 200.0),
        Position::planar(200.0, 200.0),
        Position::planar(200.0, 0.0),
    ];
    let geo = dilution(&gnbs, &Position::planar(100.0, 100.0), GeometryMode::TwoD).unwrap();
    // GᵀG = 2I, so H = Gᵀ/2 and each column has norm 1/2.
    for l in &geo.lambda {
        assert!((l - 0.5).abs() < 1e-12);
    }
    let psi = horizontal_accuracy(&geo.lambda, &[0.1; 4]).unwrap();
    assert!((psi - 0.1).abs() < 1e-12);
    assert!(dilution(&gnbs[..1], &Position::planar(1.0, 1.0), GeometryMode::TwoD).is_err());
    let collinear = [Position::planar(0.0, 0.0), Position::planar(10.0, 0.0), Position::planar(20.0, 0.0)];
    assert!(dilution(&collinear, &Position::planar(30.0, 0.0), GeometryMode::TwoD).is_err());
}

#[test]
fn free_space_gain_value() {
    let g = free_space_gain(100.0, 3.5e9).unwrap();
    let oracle = (C / (4.0 * PI * 100.0 * 3.5e9)).powi(2);
    assert!(((g - oracle) / oracle).abs() < 1e-14);
}

fn default_problem(seed: u64) -> (SignalPlan, DllConfig, Scenario, Constraints) {
    let cfg = ExperimentConfig::default();
    let plan = cfg.plan().unwrap();
    let scenario = build_scenario(&cfg.scenario_config(), &plan, seed).unwrap();
    (plan, cfg.dll(), scenario, cfg.constraints())
}

#[test]
fn equal_power_respects_qos_and_budget() {
    let (plan, dll, scenario, cons) = default_problem(5);
    let problem = Problem::new(&plan, &dll, &scenario, &cons, SolverOptions::default()).unwrap();
    let ep = equal_power(&problem);
    let (q, b, _) = problem.violations(&ep.powers);
    assert!(q <= 1e-12 && b <= 1e-12);
    for k in 1..=4 {
        let row = ep.powers.row_sum(k).unwrap();
        assert!(row <= 0.8 * (1.0 + 1e-12));
        for n in [1, 400, 1665] {
            let ber = ber_cuser(&plan, &scenario.gains, &ep.powers, k, n).unwrap();
            assert!(ber <= 8e-3 * (1.0 + 1e-9));
        }
    }
}

#[test]
fn calibrated_edge_power() {
    let cfg = ExperimentConfig::default();
    let plan = cfg.plan().unwrap();
    let edge = free_space_gain(100.0 * 2f64.sqrt(), 3.5e9).unwrap();
    let hear = HearabilityConfig { rho: 2.0, omega: 0.092, min_gnbs: 3 };
    assert_eq!(cfg.hearability(), hear);
    // The corner C-User reaches Ξ_th exactly when I = edge_margin·N₀.
    let ber = ber_from_interference(&plan, edge, cfg.edge_margin * plan.n0);
    assert!(((ber - 8e-3) / 8e-3).abs() < 1e-9, "{ber}");
}
