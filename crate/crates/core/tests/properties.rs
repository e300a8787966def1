use msnoma::allocator::{kkt_power, op2_lagrangian, DualState, Problem, SolverOptions};
use msnoma::config::ExperimentConfig;
use msnoma::experiments::spearman;
use msnoma::geometry::{dilution, horizontal_accuracy, GeometryMode, Position};
use msnoma::mathkit::{erfc, erfc_inv, sinc2_comb};
use msnoma::ranging::FactorCoefficients;
use msnoma::scenario::{build_scenario, hearable_set, ScenarioConfig};
use msnoma::signal::{ber_from_interference, ber_single_cell, PowerMatrix, SignalPlan};
use proptest::prelude::*;

fn plan20() -> SignalPlan {
    let mut p = SignalPlan::new(20e6, 30);
    p.num_pusers = Some(20);
    p.n0 = 1e-20;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn erfc_round_trip(y in 1e-200f64..1.999) {
        let x = erfc_inv(y).unwrap();
        prop_assert!(((erfc(x) - y) / y).abs() <= 1e-9);
    }

    #[test]
    fn ber_decreases_with_signal(eb1 in -5.0f64..15.0, d in 0.01f64..5.0, scale in 0.0f64..1e-3, n in 1usize..600) {
        let mut plan = plan20();
        let powers = vec![scale; 20];
        plan.pc = 10f64.powf(eb1 / 10.0) * plan.n0 / plan.t_c();
        let lo = ber_single_cell(&plan, &powers, n).unwrap();
        plan.pc *= 10f64.powf(d / 10.0);
        let hi = ber_single_cell(&plan, &powers, n).unwrap();
        prop_assert!(hi <= lo);
    }

    #[test]
    fn ber_increases_with_interference(i1 in 0.0f64..10.0, d in 0.0f64..10.0, hc in 0.1f64..3.0) {
        let mut plan = plan20();
        plan.pc = 3.0 * plan.n0 / plan.t_c();
        let a = ber_from_interference(&plan, hc, i1 * plan.n0);
        let b = ber_from_interference(&plan, hc, (i1 + d) * plan.n0);
        prop_assert!(b >= a);
        prop_assert!(b <= plan.ber_scale);
    }

    #[test]
    fn comb_sum_is_bounded(x in -50.0f64..100.0, count in 1usize..80) {
        let v = sinc2_comb(x, count);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn geometry_left_inverse(x in 1.0f64..199.0, y in 1.0f64..199.0) {
        let gnbs = ScenarioConfig::default().gnbs;
        let geo = dilution(&gnbs, &Position::planar(x, y), GeometryMode::TwoD).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..4).map(|k| geo.h_matrix[i * 4 + k] * geo.g_matrix[k * 2 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() <= 1e-10);
            }
        }
        // Unit LOS rows give tr(GᵀG) = 4, so Ψ² = tr((GᵀG)⁻¹) ≥ 1 at unit σ.
        let psi = horizontal_accuracy(&geo.lambda, &[1.0; 4]).unwrap();
        prop_assert!(psi >= 1.0 - 1e-12);
    }

    #[test]
    fn ranging_factor_monotone(g1 in 1e-9f64..1e-6, r in 1.0f64..10.0, q in 0.0f64..1e-7) {
        let plan = plan20();
        let coef = FactorCoefficients::new(&plan, &Default::default());
        let (n1, c1, x1) = coef.parts(g1, 1e-7, q);
        let (n2, c2, x2) = coef.parts(g1 * r, 1e-7, q);
        // Noise term scales as 1/gain; the other two as well.
        prop_assert!(n2 <= n1 && c2 <= c1 && x2 <= x1);
        prop_assert!(((n1 / n2) - r).abs() <= 1e-9 * r);
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let r = spearman(&x, &y);
        if r.is_finite() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((spearman(&y, &x) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn config_echo_round_trips(seed in 0u64..1_000_000, runs in 1usize..500, rho in 1.0f64..5.0, xi in 1e-5f64..0.1) {
        let cfg = ExperimentConfig::default()
            .with_overrides([
                ("seed", seed.to_string().as_str()),
                ("runs", runs.to_string().as_str()),
                ("rho", rho.to_string().as_str()),
                ("xi_th", xi.to_string().as_str()),
                ("omega_eff", "0.05"),
            ])
            .unwrap();
        let again = ExperimentConfig::parse_str(&cfg.to_text()).unwrap();
        prop_assert_eq!(again.to_text(), cfg.to_text());
        prop_assert_eq!(again.seed, seed);
        prop_assert_eq!(again.runs, runs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kkt_power_is_stationary_and_scenarios_reproducible(seed in 0u64..1000, k in 1usize..=4, m in 1usize..=20, nu in 0.1f64..10.0) {
        let cfg = ExperimentConfig::default();
        let plan = cfg.plan().unwrap();
        let scen = build_scenario(&cfg.scenario_config(), &plan, seed).unwrap();
        prop_assert_eq!(&build_scenario(&cfg.scenario_config(), &plan, seed).unwrap(), &scen);
        let cons = cfg.constraints();
        let dll = cfg.dll();
        let problem = Problem::new(&plan, &dll, &scen, &cons, SolverOptions::default()).unwrap();
        let powers = PowerMatrix::filled(4, 20, 0.04);
        let mut d = DualState::zeros(4, 20, plan.n_cusers());
        d.nu = vec![nu; 4];
        let p = kkt_power(&problem, &powers, 1.0, &d, k, m).unwrap();
        let l = |x: f64| op2_lagrangian(&problem, &powers, 1.0, &d, k, m, x).unwrap();
        prop_assert!(l(p) >= l(0.9 * p) && l(p) >= l(1.1 * p));
        // Doubling ν scales the power by 1/√2.
        d.nu = vec![2.0 * nu; 4];
        let p2 = kkt_power(&problem, &powers, 1.0, &d, k, m).unwrap();
        prop_assert!((p2 * 2f64.sqrt() / p - 1.0).abs() < 1e-12);
        // Equal received powers make every gNB hearable.
        let mut eq = PowerMatrix::zeros(4, 20);
        for k1 in 1..=4 {
            eq.set(k1, m, 1e-3 / scen.gains.h_p[(k1 - 1) * 20 + m - 1]).unwrap();
        }
        prop_assert_eq!(hearable_set(&scen, &eq, &cons.hear, m).unwrap(), vec![1, 2, 3, 4]);
    }
}
