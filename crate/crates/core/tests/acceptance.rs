//! Acceptance criteria at full tolerance. Each test writes one
//! `criterion N: PASS|FAIL ...` line to stderr (uncaptured) before asserting.
//!
//! Run with `cargo test -p discosde --test acceptance --release`.

use std::io::Write;
use std::sync::OnceLock;

use discosde::brownian::{generate_fine_path, CoarseDrivers};
use discosde::harness::{linear_fit, run_comparison, run_experiment, DiagnosticKind, ErrorTable, ExperimentConfig};
use discosde::transform::check_invariants;
use discosde::{registry, Scheme, TransformSettings, TransformedProblem};

/// Fixed before any acceptance run was looked at.
const SEED: u64 = 42;

fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {status} {detail}");
}

fn circle_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(registry::circle2d(), Scheme::Milstein);
    cfg.n_list = (5..=10).map(|k| 1 << k).collect();
    cfg.fine_n = 1 << 14;
    cfg.reps = 20_000;
    cfg.p_list = vec![1.0, 2.0, 4.0, 8.0];
    cfg.seed = SEED;
    cfg.threads = 0;
    cfg
}

/// Euler and Milstein on the circle problem, shared by criteria 1 to 3.
fn circle_tables() -> &'static [ErrorTable] {
    static TABLES: OnceLock<Vec<ErrorTable>> = OnceLock::new();
    TABLES.get_or_init(|| run_comparison(&circle_config(), &[Scheme::Euler, Scheme::Milstein]).expect("circle2d run"))
}

fn rate(table: &ErrorTable, p: f64) -> f64 {
    table.rate(p).map_or(f64::NAN, |r| r.rate)
}

#[test]
fn criterion_1_milstein_rate() {
    let r = rate(&circle_tables()[1], 2.0);
    let pass = (0.70..=0.95).contains(&r);
    report(1, pass, &format!("milstein L2 rate {r:.4}, band [0.70, 0.95]"));
    assert!(pass);
}

#[test]
fn criterion_2_euler_rate() {
    let r = rate(&circle_tables()[0], 2.0);
    let pass = (0.40..=0.62).contains(&r);
    report(2, pass, &format!("euler L2 rate {r:.4}, band [0.40, 0.62]"));
    assert!(pass);
}

#[test]
fn criterion_3_rates_non_increasing_in_p() {
    let t = &circle_tables()[1];
    let rates: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&p| rate(t, p)).collect();
    let pass = rates.iter().all(|r| r.is_finite())
        && rates.iter().enumerate().all(|(i, &later)| rates[..i].iter().all(|&earlier| later <= earlier + 0.05));
    report(3, pass, &format!("milstein rates for p = 1, 2, 4, 8: {rates:.4?}, margin 0.05"));
    assert!(pass);
}

#[test]
fn criterion_4_smooth_benchmark() {
    let mut cfg = circle_config();
    cfg.problem = registry::gbm2d();
    cfg.problem_name = "gbm2d".into();
    cfg.reps = 5000;
    cfg.p_list = vec![2.0];
    let tables = run_comparison(&cfg, &[Scheme::Euler, Scheme::Milstein]).expect("gbm2d run");
    let (euler, milstein) = (rate(&tables[0], 2.0), rate(&tables[1], 2.0));
    let pass = milstein >= 0.9 && (0.4..=0.65).contains(&euler);
    report(4, pass, &format!("gbm2d milstein {milstein:.4} (>= 0.9), euler {euler:.4} in [0.4, 0.65]"));
    assert!(pass);
}

#[test]
fn criterion_5_transform_invariants() {
    let tf = TransformedProblem::new(registry::circle2d(), TransformSettings::default()).expect("transform");
    let r = check_invariants(&tf, 10_000, SEED).expect("invariant suite");
    let pass = r.passed() && r.samples == 10_000;
    report(
        5,
        pass,
        &format!(
            "eps {} phi/eps^2 {:.3} grad/112eps {:.3} identity failures {} jacobian {:.2e} round trip {:.2e} sigma on theta {:.2e} commutativity {:.2e}",
            tf.epsilon(),
            r.phi_ratio,
            r.grad_ratio,
            r.identity_failures,
            r.jacobian_rel_err,
            r.round_trip_err,
            r.sigma_on_theta_err,
            r.commutativity_residual
        ),
    );
    assert!(pass, "{r:?}");
}

#[test]
fn criterion_6_iterated_integrals() {
    let (n, ratio, bundles) = (100usize, 256usize, 1000u64);
    let h = 1.0 / n as f64;
    let mut diag_exact = true;
    let mut pair_assigned = true;
    let mut pair_ulps = 0.0f64;
    let mut sq = Vec::with_capacity(n * bundles as usize);
    for rep in 0..bundles {
        let bundle = generate_fine_path(SEED, rep, n * ratio, 2);
        let drivers = CoarseDrivers::from_bundle(&bundle, n).expect("drivers");
        for k in 0..n {
            let w = drivers.increment(k);
            let j = drivers.iterated(k);
            diag_exact &= j[0] == 0.5 * (w[0] * w[0] - h) && j[3] == 0.5 * (w[1] * w[1] - h);
            let product = w[0] * w[1];
            pair_assigned &= j[2] == product - j[1];
            let ulp = f64::EPSILON * product.abs().max(j[1].abs()).max(j[2].abs());
            pair_ulps = pair_ulps.max((j[1] + j[2] - product).abs() / ulp);
            sq.push(j[1] * j[1]);
        }
    }
    let m = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / m;
    let var = sq.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    let target = h * h / 2.0;
    let z = (mean - target) / se;
    let pass = diag_exact && pair_assigned && pair_ulps <= 4.0 && z.abs() <= 5.0;
    report(
        6,
        pass,
        &format!(
            "diagonal exact {diag_exact}, J21 = dW1 dW2 - J12 {pair_assigned} (sum within {pair_ulps:.1} ulp), E[J12^2] {mean:.4e} vs {target:.4e} ({z:.2} SE) over {} steps",
            sq.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_occupation_and_crossing() {
    let mut cfg = circle_config();
    cfg.n_list = vec![64, 128, 256];
    cfg.fine_n = 1 << 12;
    cfg.reps = 10_000;
    cfg.p_list = vec![2.0];
    cfg.occupation_eps = vec![0.02, 0.04, 0.08];
    let t = run_experiment(&cfg).expect("diagnostic run");
    let mut occupation_ok = true;
    let mut details = Vec::new();
    for &n in &cfg.n_list {
        let (xs, ys): (Vec<f64>, Vec<f64>) = t
            .diagnostics
            .iter()
            .filter(|d| d.n == n)
            .filter_map(|d| match d.kind {
                DiagnosticKind::Occupation { eps_tilde } => Some((eps_tilde, d.mean)),
                DiagnosticKind::Crossing => None,
            })
            .unzip();
        let fit = linear_fit(&xs, &ys).expect("occupation fit");
        occupation_ok &= fit.slope > 0.0 && fit.r_squared >= 0.9;
        details.push(format!("n={n} slope {:.3} r2 {:.4}", fit.slope, fit.r_squared));
    }
    let crossing: Vec<f64> = cfg
        .n_list
        .iter()
        .map(|&n| t.diagnostics.iter().find(|d| d.n == n && d.kind == DiagnosticKind::Crossing).expect("crossing").mean)
        .collect();
    let ratios: Vec<f64> = crossing.windows(2).map(|w| w[1] / w[0]).collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let crossing_ok = ratios.iter().all(|&r| r < 1.0) && (0.5..=0.95).contains(&mean_ratio);
    let pass = occupation_ok && crossing_ok;
    report(
        7,
        pass,
        &format!(
            "occupation [{}], crossing {crossing:.4?} ratios {ratios:.3?} mean {mean_ratio:.3} in [0.5, 0.95]",
            details.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let mut cfg = circle_config();
    cfg.reps = 1000;
    let mut csvs = Vec::new();
    for threads in [1, 1, 4, 4] {
        cfg.threads = threads;
        csvs.push(run_experiment(&cfg).expect("determinism run").to_csv());
    }
    let pass = csvs.windows(2).all(|w| w[0] == w[1]);
    report(8, pass, "identical CSV from two runs each at 1 and 4 threads");
    assert!(pass);
}
