//! Acceptance suite: one PASS/FAIL line per criterion.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use msnoma::allocator::{
    dual_function, dual_function_check, equal_power, j_leakage, kkt_power, op2_lagrangian, Constraints, DualGrid,
    DualState, Problem, SolverOptions,
};
use msnoma::config::ExperimentConfig;
use msnoma::experiments::{power_vs_gain, ranging_points, run_replicas, single_cell_ranging, summarize, Replica};
use msnoma::geometry::{dilution, GeometryMode, Position};
use msnoma::mathkit::{erfc, erfc_inv, QuadratureSpec};
use msnoma::ranging::{appendix_integrals, DllConfig};
use msnoma::scenario::{build_scenario, HearabilityConfig, Scenario, ScenarioConfig};
use msnoma::signal::{ber_from_interference, ber_single_cell, ChannelGains, PowerMatrix, SignalPlan};
use msnoma::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, pass: bool, detail: &str) -> bool {
    let line = format!("criterion {n} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_1_intermediate_integrals() {
    let dll = DllConfig::default();
    let mut worst = [0.0f64; 5];
    let mut slowest = 0.0f64;
    for (bw, g) in [(20e6, 30u32), (50e6, 80)] {
        // Two gNBs; the cross-positioning integral is nonzero.
        let (mut plan, _, _) = single_cell_ranging(&SignalPlan::new(bw, g), 10f64.powf(4.5), 100.0);
        plan.num_pusers = Some(20);
        let gains = ChannelGains::unit(2, 20, plan.n_cusers());
        let mut powers = PowerMatrix::filled(2, 20, 1.0);
        powers.set(2, 1, 0.1).unwrap();
        for m in [1, 10, 20] {
            let t = Instant::now();
            let a = appendix_integrals(&plan, &gains, &powers, &dll, 1, m, QuadratureSpec::default()).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            let errs = [
                rel(a.a0_closed, a.a0),
                rel(a.a1_closed, a.a1),
                rel(a.a2_closed, a.a2),
                rel(a.a3_closed, a.a3),
                rel(a.a3_bar_closed, a.a3_bar),
            ];
            for (w, e) in worst.iter_mut().zip(errs) {
                *w = w.max(e);
            }
        }
    }
    let pass = worst.iter().all(|e| *e <= 0.01) && slowest < 1.0;
    let detail = format!(
        "max relative gap A0 {:.2}%, A1 {:.2}%, A2 {:.2}%, A3 {:.2}%, A3bar {:.2}%; slowest case {slowest:.3} s",
        100.0 * worst[0],
        100.0 * worst[1],
        100.0 * worst[2],
        100.0 * worst[3],
        100.0 * worst[4]
    );
    assert!(report(1, pass, &detail), "{detail}");
}

#[test]
fn criterion_2_exact_vs_approx_ranging() {
    let cfg = ExperimentConfig::default();
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut largest = 0.0f64;
    for bw in [20e6, 50e6] {
        for p in ranging_points(&cfg, bw, cfg.probe_puser, Exec::Parallel).unwrap() {
            worst = worst.max(p.relative_error());
            largest = largest.max(p.sigma_exact_m).max(p.sigma_approx_m);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= 0.05 && largest < 1.0 && secs < 30.0;
    let detail =
        format!("P-User {}: max gap {:.2}%, max sigma {largest:.3} m, {secs:.1} s", cfg.probe_puser, 100.0 * worst);
    assert!(report(2, pass, &detail), "{detail}");
}

fn default_problem_parts(seed: u64) -> (SignalPlan, DllConfig, Scenario, Constraints) {
    let cfg = ExperimentConfig::default();
    let plan = cfg.plan().unwrap();
    let scenario = build_scenario(&cfg.scenario_config(), &plan, seed).unwrap();
    (plan, cfg.dll(), scenario, cfg.constraints())
}

#[test]
fn criterion_3_kkt_stationarity() {
    let (plan, dll, scenario, cons) = default_problem_parts(11);
    let problem = Problem::new(&plan, &dll, &scenario, &cons, SolverOptions::default()).unwrap();
    let powers = equal_power(&problem).powers;
    let (k, m, n) = (4, plan.n_pusers(), plan.n_cusers());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 12 {
        let (k1, m1) = (rng.gen_range(1..=k), rng.gen_range(1..=m));
        let lambda = rng.gen_range(0.3..1.5);
        let mut d = DualState::zeros(k, m, n);
        d.nu[k1 - 1] = 1.0;
        let p1 = kkt_power(&problem, &powers, lambda, &d, k1, m1).unwrap();
        let target = rng.gen_range(0.005..0.2);
        d.nu = (0..k).map(|_| (p1 / target).powi(2) * rng.gen_range(0.5..2.0)).collect();
        let nu = d.nu[k1 - 1];
        let j: f64 = (1..=n).map(|n1| j_leakage(&plan, &scenario.gains, k1, n1, m1).unwrap()).sum();
        if j > 0.0 {
            for i in 0..k * n {
                d.mu[i] = rng.gen_range(0.0..1.0) * nu / j;
            }
        }
        for i in 0..k * m {
            d.beta[i] = rng.gen_range(0.0..0.5) * d.nu[i / m] / scenario.gains.h_p[i];
        }
        let Ok(p) = kkt_power(&problem, &powers, lambda, &d, k1, m1) else {
            continue;
        };
        let h = 1e-5 * p;
        let l = |x: f64| op2_lagrangian(&problem, &powers, lambda, &d, k1, m1, x).unwrap();
        let fd = (l(p + h) - l(p - h)) / (2.0 * h);
        let scale = l(p).abs() / (2.0 * p);
        worst = worst.max(fd.abs() / scale);
        checked += 1;
    }
    let pass = worst <= 1e-6;
    let detail = format!("{checked} random dual states, max |dL/dP|/scale {worst:.2e}");
    assert!(report(3, pass, &detail), "{detail}");
}

fn tiny_problem_parts(seed: u64) -> (SignalPlan, Scenario, Constraints) {
    let mut plan = SignalPlan::new(5.0 * 30e3, 2);
    plan.num_pusers = Some(2);
    plan.n0 = 1e-17;
    plan.pc = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gnbs = vec![Position::planar(0.0, 0.0), Position::planar(100.0, 0.0)];
    let mut at = || Position::planar(rng.gen_range(5.0..95.0), rng.gen_range(-40.0..40.0));
    let pusers = vec![at(), at()];
    let cusers: Vec<Position> = (0..8).map(|_| at()).collect();
    let scenario = Scenario::from_positions(gnbs, pusers, cusers, 4, 3.5e9, seed).unwrap();
    let cons = Constraints {
        xi_th: 8e-3,
        p_th: vec![0.8, 0.8],
        hear: HearabilityConfig { rho: 2.0, omega: 0.092, min_gnbs: 1 },
    };
    (plan, scenario, cons)
}

#[test]
fn criterion_4_subgradient_inequality() {
    let t = Instant::now();
    let dll = DllConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut pairs = 0;
    let mut worst = f64::INFINITY;
    let mut flipped_fails = 0;
    for inst in 0..4u64 {
        let (plan, scenario, cons) = tiny_problem_parts(100 + inst);
        let problem = Problem::new(&plan, &dll, &scenario, &cons, SolverOptions::default()).unwrap();
        let (k, m, n) = (2, 2, 4);
        let others = PowerMatrix::filled(k, m, 0.1);
        let gain = scenario.gains.h_p.iter().copied().fold(0.0, f64::max);
        let leak = j_leakage(&plan, &scenario.gains, 1, 1, 1).unwrap().max(1e-30);
        // |g| at zero duals is Σ_m a_m/P_th; a price near |g|/P_th puts the maximizer inside (0, P_th).
        let g0 = dual_function(
            &problem,
            &DualState::zeros(k, m, n),
            &others,
            problem.lambda_true(),
            0,
            &DualGrid::default(),
        )
        .0;
        let nu0 = g0.abs() / cons.p_th[0];
        let random_duals = |rng: &mut ChaCha8Rng| {
            let mut d = DualState::zeros(k, m, n);
            d.nu = (0..k).map(|_| nu0 * rng.gen_range(0.1..10.0)).collect();
            d.mu = (0..k * n).map(|_| nu0 / leak * rng.gen_range(0.0..2.0)).collect();
            d.beta = (0..k * m).map(|_| nu0 / gain * rng.gen_range(0.0..1.0)).collect();
            d
        };
        for _ in 0..6 {
            let a = random_duals(&mut rng);
            let b = random_duals(&mut rng);
            let grid = DualGrid::default();
            for c in dual_function_check(&problem, &a, &b, &others, &grid, false) {
                worst = worst.min(c.relative_slack);
            }
            if dual_function_check(&problem, &a, &b, &others, &grid, true).iter().any(|c| c.relative_slack < -1e-8) {
                flipped_fails += 1;
            }
            pairs += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst >= -1e-8 && pairs >= 20 && 2 * flipped_fails >= pairs && secs < 60.0;
    let detail = format!(
        "{pairs} dual pairs on K=2 M=2 N=4, min relative slack {worst:.2e}, negated subgradient rejected on {flipped_fails}/{pairs}, {secs:.1} s"
    );
    assert!(report(4, pass, &detail), "{detail}");
}

fn replicas(bandwidth: f64) -> &'static (Vec<Replica>, f64) {
    static B50: OnceLock<(Vec<Replica>, f64)> = OnceLock::new();
    static B20: OnceLock<(Vec<Replica>, f64)> = OnceLock::new();
    let cell = if bandwidth == 50e6 { &B50 } else { &B20 };
    cell.get_or_init(|| {
        let mut cfg = ExperimentConfig::default();
        cfg.bandwidth_hz = bandwidth;
        let t = Instant::now();
        let reps = run_replicas(&cfg, Exec::Parallel).unwrap();
        (reps, t.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_5_constraints_at_convergence() {
    let (reps, _) = replicas(50e6);
    let conv: Vec<&Replica> = reps.iter().filter(|r| r.pcjpa.converged).collect();
    let (mut q, mut b, mut h) = (0.0f64, 0.0f64, 0.0f64);
    for r in &conv {
        q = q.max(r.violations.0);
        b = b.max(r.violations.1);
        h = h.max(r.violations.2);
    }
    let pass = conv.len() >= 45 && q <= 1e-3 && b <= 1e-3 && h <= 1e-3;
    let detail = format!(
        "{}/{} converged; worst relative excess QoS {q:.1e}, budget {b:.1e}, hearability {h:.1e}",
        conv.len(),
        reps.len()
    );
    assert!(report(5, pass, &detail), "{detail}");
}

#[test]
fn criterion_6_coverage() {
    let (reps, secs) = replicas(50e6);
    let s = summarize(reps);
    let pass = s.pcjpa_coverage == 1.0 && (0.39..=0.59).contains(&s.equal_coverage) && *secs < 600.0;
    let detail = format!(
        "PCJPA coverage {:.1}%, equal power {:.1}% over {} runs, PCJPA covers at least as many on {}/{} runs, {secs:.0} s",
        100.0 * s.pcjpa_coverage,
        100.0 * s.equal_coverage,
        s.runs,
        s.coverage_dominates,
        s.runs
    );
    assert!(report(6, pass, &detail), "{detail}");
}

#[test]
fn criterion_7_accuracy_ordering() {
    let s50 = summarize(&replicas(50e6).0);
    let s20 = summarize(&replicas(20e6).0);
    let ordered = |s: &msnoma::experiments::MonteCarloSummary| s.wins as f64 >= 0.8 * s.comparable as f64;
    let pass = ordered(&s50)
        && ordered(&s20)
        && (0.1..=0.4).contains(&s50.pcjpa_mean_psi)
        && (0.3..=0.9).contains(&s20.pcjpa_mean_psi);
    let detail = format!(
        "50 MHz: mean Psi {:.3} m, common users {:.3} vs {:.3} m, PCJPA not worse on {}/{}; \
         20 MHz: mean Psi {:.3} m, common users {:.3} vs {:.3} m, PCJPA not worse on {}/{}",
        s50.pcjpa_mean_psi,
        s50.pcjpa_common_psi,
        s50.equal_common_psi,
        s50.wins,
        s50.comparable,
        s20.pcjpa_mean_psi,
        s20.pcjpa_common_psi,
        s20.equal_common_psi,
        s20.wins,
        s20.comparable
    );
    assert!(report(7, pass, &detail), "{detail}");
}

#[test]
fn criterion_8_trends() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ber_ok = 0;
    for _ in 0..100 {
        let bw = [20e6, 50e6][rng.gen_range(0..2)];
        let mut plan = SignalPlan::new(bw, if bw == 20e6 { 30 } else { 80 });
        plan.num_pusers = Some(20);
        plan.n0 = 10f64.powf(rng.gen_range(-22.0..-18.0));
        let n = rng.gen_range(1..=plan.n_cusers());
        let powers: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1e-3)).collect();
        let ebs = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
        let mut last = f64::INFINITY;
        let mut mono = true;
        for eb in ebs {
            plan.pc = 10f64.powf(eb / 10.0) * plan.n0 / plan.t_c();
            let v = ber_single_cell(&plan, &powers, n).unwrap();
            mono &= v <= last;
            last = v;
        }
        let hc = rng.gen_range(0.5..2.0);
        let mut prev = 0.0;
        for i in 0..8 {
            let v = ber_from_interference(&plan, hc, plan.n0 * i as f64);
            mono &= v >= prev;
            prev = v;
        }
        ber_ok += mono as usize;
    }

    let out = power_vs_gain(&ExperimentConfig::default(), Exec::Parallel).unwrap();
    let rhos: Vec<f64> = out
        .artifact("power_vs_gain_spearman.csv")
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();

    let mut round = 0.0f64;
    let ys = (1..2000).map(|i| i as f64 / 1000.0).chain((1..=30).map(|e| 10f64.powi(-e)));
    for y in ys {
        round = round.max(rel(erfc(erfc_inv(y).unwrap()), y));
    }

    let gnbs = ScenarioConfig::default().gnbs;
    let mut inv = 0.0f64;
    for _ in 0..200 {
        let u = Position::planar(rng.gen_range(1.0..199.0), rng.gen_range(1.0..199.0));
        let geo = dilution(&gnbs, &u, GeometryMode::TwoD).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..4).map(|k| geo.h_matrix[i * 4 + k] * geo.g_matrix[k * 2 + j]).sum();
                inv = inv.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }

    let pass = ber_ok == 100 && rhos.iter().all(|r| *r < 0.0) && round <= 1e-9 && inv <= 1e-10;
    let detail = format!(
        "BER monotone on {ber_ok}/100 instances; Spearman per gNB {:?}; erfc round trip {round:.1e}; left-inverse error {inv:.1e}",
        rhos.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    assert!(report(8, pass, &detail), "{detail}");
}
