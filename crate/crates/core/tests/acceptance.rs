//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbf_core::analysis::{map_s_to_q, time_average_full, IndicatorSet};
use tbf_core::des::{batch_confidence, simulate, simulate_fixed, SimParams, SimStats};
use tbf_core::dynamics::{fixed_arrive, fixed_replenish, s_step, var_arrive, var_replenish};
use tbf_core::markov::{
    build_fixed_chain, build_h, build_md1_chain, chain_stationary, expm_action,
    integrate_expm_action, EmbeddedOperator, PowerIterationOptions,
};
use tbf_core::scalar::total_variation;
use tbf_core::statespace::{count_strings, enumerate_strings};
use tbf_core::{
    AnalyticModel, BufferString, FilterConfig, FixedState, RateMatrix, SolverOptions, StateSpace,
    SystemState, TrafficSpec, UnifiedCoord,
};

const LOADS: [f64; 4] = [0.25, 0.5, 1.0, 5.0];
const SEED: u64 = 20_070_601;
const PERIODS: u64 = 1_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn four_size_traffic(rate: f64) -> TrafficSpec {
    TrafficSpec::new(vec![1, 2, 3, 4], vec![0.4, 0.3, 0.2, 0.1], rate).unwrap()
}

fn square_config() -> FilterConfig {
    FilterConfig::new(5, 5, 1.0).unwrap()
}

fn solve(rate: f64) -> AnalyticModel {
    AnalyticModel::solve(
        &four_size_traffic(rate),
        &square_config(),
        &SolverOptions::default(),
    )
    .unwrap()
}

fn run_des(rate: f64) -> SimStats {
    simulate(
        &four_size_traffic(rate),
        &square_config(),
        &SimParams::new(PERIODS, SEED),
    )
    .unwrap()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn criterion_1() -> Outcome {
    let (res, dt) = timed(|| {
        let main = count_strings(&[1, 2, 3, 4], 10);
        let mut mismatches = Vec::new();
        for sizes in [[1u32, 2, 3, 4], [3, 4, 5, 6]] {
            for bound in 3..=10 {
                let dp = count_strings(&sizes, bound);
                let listed = enumerate_strings(&sizes, bound).len() as u128;
                if dp != listed {
                    mismatches.push(format!("Z={sizes:?} L={bound}: {dp} vs {listed}"));
                }
            }
        }
        (main, mismatches)
    });
    let (main, mismatches) = res;
    Outcome::new(
        main == 833 && mismatches.is_empty() && within(dt, 1.0),
        format!("count={main} dp/enumeration mismatches={mismatches:?} in {dt:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let (res, dt) = timed(|| {
        let traffic = four_size_traffic(1.0);
        let space = StateSpace::build(&traffic, &square_config()).unwrap();
        let h = build_h::<f64>(&space);
        let h_ok = (0..space.len()).all(|r| {
            let row: Vec<_> = h.matrix().row(r).collect();
            row.len() == 1 && row[0].1 == 1.0
        });
        let model =
            AnalyticModel::solve(&traffic, &square_config(), &SolverOptions::default()).unwrap();
        let q_dev = (0..space.len())
            .map(|r| model.q.matrix().row_sum(r).abs())
            .fold(0.0, f64::max);
        let g = &model.generators;
        let levels = space.levels();
        let mut gamma_dev: f64 = 0.0;
        let mut lower_left_zero = true;
        for t in 0..levels as u32 {
            let gamma = g.gamma(t);
            for r in 0..g.gamma_dim() {
                gamma_dev = gamma_dev.max(gamma.matrix().row_sum(r).abs());
            }
            for r in levels..levels + g.nonempty() {
                for c in 0..levels {
                    lower_left_zero &= gamma.get(r, c) == 0.0;
                }
            }
        }
        (space.len(), h_ok, q_dev, gamma_dev, lower_left_zero)
    });
    let (n, h_ok, q_dev, gamma_dev, ll) = res;
    Outcome::new(
        n == 186 && h_ok && q_dev <= 1e-12 && gamma_dev <= 1e-12 && ll && within(dt, 1.0),
        format!(
            "N={n} H one-hot={h_ok} max|Q row sum|={q_dev:.1e} max|Γ row sum|={gamma_dev:.1e} lower-left zero={ll} in {dt:.2?}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let (res, dt) = timed(|| {
        LOADS
            .iter()
            .map(|&rate| {
                let m = solve(rate);
                let op = EmbeddedOperator::new(&m.space, &m.q, 1.0, 1e-12);
                (
                    rate,
                    op.residual(m.stationary.pi()).unwrap(),
                    m.stationary.iterations(),
                )
            })
            .collect::<Vec<_>>()
    });
    let worst = res.iter().map(|r| r.1).fold(0.0, f64::max);
    let parts: Vec<String> = res
        .iter()
        .map(|(l, r, it)| format!("λ={l}: {r:.1e} ({it} it)"))
        .collect();
    Outcome::new(
        worst <= 1e-10 && within(dt, 30.0),
        format!("‖πG-π‖₁ {} in {dt:.2?}", parts.join(", ")),
    )
}

fn criterion_4() -> Outcome {
    let (res, dt) = timed(|| {
        let traffic = TrafficSpec::new(vec![1, 2], vec![0.6, 0.4], 1.0).unwrap();
        let config = FilterConfig::new(2, 3, 1.0).unwrap();
        let m = AnalyticModel::solve(&traffic, &config, &SolverOptions::default()).unwrap();
        let space = &m.space;
        let g = &m.generators;
        let levels = space.levels();
        let tol = 1e-13;

        // propagate a generic (non-stationary) distribution
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<f64> = (0..space.len()).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let start: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let full = expm_action(&m.q, &start, 1.0, tol).unwrap();
        let mut prop_dev: f64 = 0.0;
        for t in 0..levels as u32 {
            let block = expm_action(g.gamma(t), &g.restrict(space, &start, t), 1.0, tol).unwrap();
            for (pos, &i) in g.support(space, t).iter().enumerate() {
                prop_dev = prop_dev.max((block[pos] - full[i]).abs());
            }
        }

        let sets = [
            IndicatorSet::all(space),
            IndicatorSet::from_fn(space, |t, z| z.backlog() + t >= 3),
            IndicatorSet::from_fn(space, |t, z| z.is_empty() && t % 2 == 0),
            IndicatorSet::from_fn(space, |_, z| z.head() == Some(2)),
        ];
        let mut avg_dev: f64 = 0.0;
        let mut k_dev: f64 = 0.0;
        for set in &sets {
            let full = time_average_full(&m.stationary, &m.q, set, 1.0, tol).unwrap();
            avg_dev = avg_dev.max((m.time_average(set) - full).abs());
            let base = m.averages.probability_via(set, 0);
            for k in 0..levels as u32 {
                k_dev = k_dev.max((m.averages.probability_via(set, k) - base).abs());
            }
        }
        (prop_dev, avg_dev, k_dev)
    });
    let (p, a, k) = res;
    Outcome::new(
        p <= 1e-8 && a <= 1e-8 && k <= 1e-10 && within(dt, 5.0),
        format!("propagation {p:.1e}, time average {a:.1e}, A^ε term across k {k:.1e} in {dt:.2?}"),
    )
}

fn criterion_5() -> Outcome {
    let (res, dt) = timed(|| {
        let config = FilterConfig::new(5, 5, 1.0).unwrap();
        let opts = PowerIterationOptions::default();
        let mut worst: f64 = 0.0;
        for lt in [0.25, 0.5, 1.0] {
            let traffic = TrafficSpec::new(vec![1], vec![1.0], lt).unwrap();
            let m = AnalyticModel::solve(&traffic, &config, &SolverOptions::default()).unwrap();
            let mut variable = [0.0; 6];
            for (i, &p) in m.stationary.pi().iter().enumerate() {
                variable[m.space.state(i).buffer.backlog() as usize] += p;
            }
            let chain = build_fixed_chain(lt, 5, 5).unwrap();
            let pi_s = chain_stationary(&chain, 0, opts).unwrap().distribution;
            let fixed = map_s_to_q(&pi_s, 5, 5);
            for (a, b) in variable.iter().zip(&fixed) {
                worst = worst.max((a - b).abs());
            }
        }
        let pt = chain_stationary(&build_fixed_chain(0.5, 5, 5).unwrap(), 0, opts)
            .unwrap()
            .distribution;
        let md1 = chain_stationary(&build_md1_chain(0.5, 5, 5).unwrap(), 0, opts)
            .unwrap()
            .distribution;
        (worst, total_variation(&pt, &md1))
    });
    let (worst, tv) = res;
    Outcome::new(
        worst <= 1e-8 && tv > 1e-3 && within(dt, 5.0),
        format!("max |π^Q variable - fixed| {worst:.1e}, TV(periodic transfer, M/D/1) {tv:.4} in {dt:.2?}"),
    )
}

struct LoadRun {
    rate: f64,
    model: AnalyticModel,
    stats: SimStats,
    elapsed: Duration,
}

fn load_runs(rates: &[f64]) -> Vec<LoadRun> {
    std::thread::scope(|s| {
        let handles: Vec<_> = rates
            .iter()
            .map(|&rate| {
                s.spawn(move || {
                    let ((model, stats), elapsed) = timed(|| (solve(rate), run_des(rate)));
                    LoadRun {
                        rate,
                        model,
                        stats,
                        elapsed,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn criterion_6(runs: &[LoadRun]) -> Outcome {
    let mut pass = true;
    let parts: Vec<String> = runs
        .iter()
        .map(|r| {
            let tv = r.model.occupancy().total_variation(&r.stats.occupancy());
            pass &= tv <= 0.02 && within(r.elapsed, 180.0);
            format!("λ={}: TV {tv:.4} ({:.1?})", r.rate, r.elapsed)
        })
        .collect();
    Outcome::new(pass, parts.join(", "))
}

fn criterion_7(runs: &[LoadRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs.iter().filter(|r| r.rate == 0.25 || r.rate == 5.0) {
        let report = batch_confidence(&r.stats, 10).unwrap();
        for (k, m) in r.model.class_metrics().iter().enumerate() {
            let ci = report.classes[k].loss_ratio;
            let ok = ci.contains(m.loss_ratio) && (m.loss_ratio - ci.mean).abs() <= 0.01;
            pass &= ok;
            parts.push(format!(
                "λ={} l={}: {:.4e} vs {:.4e}±{:.1e}{}",
                r.rate,
                m.size,
                m.loss_ratio,
                ci.mean,
                ci.half_width,
                if ok { "" } else { " (miss)" }
            ));
        }
        pass &= within(r.elapsed, 180.0);
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_8(runs: &[LoadRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs.iter().filter(|r| r.rate == 0.25 || r.rate == 5.0) {
        let report = batch_confidence(&r.stats, 10).unwrap();
        for (k, m) in r.model.class_metrics().iter().enumerate() {
            let ci = report.classes[k].mean_wait;
            let little = r.stats.little_gap(k);
            let (ok, shown) = match m.mean_wait {
                Some(w) => {
                    let rel = (w - ci.mean).abs() / ci.mean.abs().max(f64::MIN_POSITIVE);
                    (
                        rel <= 0.05 || ci.contains(w),
                        format!("{w:.4} vs {:.4}±{:.1e}", ci.mean, ci.half_width),
                    )
                }
                None => (false, "undefined".to_string()),
            };
            let ok = ok && little <= 0.02;
            pass &= ok;
            parts.push(format!(
                "λ={} l={}: E_W {shown}, Little gap {:.2}%{}",
                r.rate,
                m.size,
                little * 100.0,
                if ok { "" } else { " (miss)" }
            ));
        }
    }
    Outcome::new(pass, parts.join("; "))
}

/// Random `a`-arrivals-then-token sequences, applied event by event in
/// `(Q, T)` and in one step in `S`.
fn coordinate_change_sequences(sequences: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = 0;
    for _ in 0..sequences {
        let bucket = rng.random_range(0..=6u32);
        let buffer = rng.random_range(1..=6u32);
        let mut fixed = FixedState::new(0, bucket);
        let mut s = UnifiedCoord::from_fixed(fixed, bucket).s;
        let mut unit = SystemState::idle(bucket);
        let mut ok = true;
        for _ in 0..rng.random_range(1..=30) {
            let a: u64 = rng.random_range(0..=4);
            for _ in 0..a {
                fixed = fixed_arrive(fixed, buffer).0;
                unit = var_arrive(unit, 1, buffer).0;
            }
            fixed = fixed_replenish(fixed, bucket);
            unit = var_replenish(unit, bucket);
            s = s_step(s, a, buffer, bucket);
            let mapped = UnifiedCoord::from_fixed(fixed, bucket);
            ok &= mapped.s == s
                && UnifiedCoord::from_s(s, bucket).to_fixed() == fixed
                && unit.tokens == fixed.t
                && unit.buffer == BufferString::from_sizes(vec![1; fixed.q as usize]);
        }
        failures += usize::from(!ok);
    }
    failures
}

fn criterion_9() -> Outcome {
    let (res, dt) = timed(|| {
        let config = square_config();
        // λ=1 gives about one arrival plus one token per period
        let mut p = SimParams::new(600_000, SEED);
        p.check_invariants = true;
        let variable = simulate(&four_size_traffic(1.0), &config, &p);
        let fixed = simulate_fixed(1.0, &config, &p);
        let failures = coordinate_change_sequences(100_000);
        (variable, fixed, failures)
    });
    let (variable, fixed, failures) = res;
    let describe = |events: Option<u64>, checks: Option<u64>, err: Option<String>| match err {
        Some(e) => format!("violation: {e}"),
        None => format!("{} events, {} checks", events.unwrap(), checks.unwrap()),
    };
    let v = match &variable {
        Ok(s) => describe(Some(s.events), Some(s.invariant_checks), None),
        Err(e) => describe(None, None, Some(e.to_string())),
    };
    let f = match &fixed {
        Ok(s) => describe(Some(s.events), Some(s.invariant_checks), None),
        Err(e) => describe(None, None, Some(e.to_string())),
    };
    let enough = |e: u64| e >= 1_000_000;
    let pass = variable.as_ref().is_ok_and(|s| enough(s.events))
        && fixed.as_ref().is_ok_and(|s| enough(s.events))
        && failures == 0
        && within(dt, 120.0);
    Outcome::new(
        pass,
        format!(
            "variable: {v}; fixed: {f}; coordinate-change failures {failures}/100000 in {dt:.2?}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let (res, dt) = timed(|| {
        let two = RateMatrix::from_dense(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let v = expm_action(&two, &[1.0, 0.0], 1.0, 1e-14).unwrap();
        let e = (-1.0f64).exp();
        let two_dev = (v[0] - e).abs().max((v[1] - (1.0 - e)).abs());

        let mut scalar_dev: f64 = 0.0;
        for (lambda, tau) in [(0.5, 1.0), (1.0, 1.0), (5.0, 1.0), (2.0, 0.3)] {
            let a = RateMatrix::from_dense(&[vec![-lambda]]).unwrap();
            let got = integrate_expm_action(&a, &[1.0], tau, 1e-14).unwrap()[0];
            let x: f64 = lambda * tau;
            scalar_dev = scalar_dev.max((got - (1.0 - (-x).exp()) / x).abs());
        }

        let m = solve(1.0);
        let pi = m.stationary.pi();
        let tol = 1e-12;
        let mass_e: f64 = expm_action(&m.q, pi, 1.0, tol).unwrap().iter().sum();
        let mass_i: f64 = integrate_expm_action(&m.q, pi, 1.0, tol)
            .unwrap()
            .iter()
            .sum();
        let mass_dev = (mass_e - 1.0).abs().max((mass_i - 1.0).abs());
        (two_dev, scalar_dev, mass_dev)
    });
    let (a, b, c) = res;
    Outcome::new(
        a <= 1e-12 && b <= 1e-12 && c <= 1e-10 && within(dt, 1.0),
        format!("two-state {a:.1e}, scalar integral {b:.1e}, mass drift {c:.1e} in {dt:.2?}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "state-count reproduction", criterion_1()),
        (2, "structural invariants", criterion_2()),
        (3, "stationarity", criterion_3()),
        (4, "partition equivalence", criterion_4()),
        (5, "model unification", criterion_5()),
    ];
    let runs = load_runs(&LOADS);
    results.push((6, "analytic vs simulated occupancy", criterion_6(&runs)));
    results.push((7, "loss ratios", criterion_7(&runs)));
    results.push((8, "waiting times", criterion_8(&runs)));
    results.push((9, "invariant sweeps", criterion_9()));
    results.push((10, "numerical kernels", criterion_10()));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!(
            "{} criterion {n:>2} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
