//! End-to-end acceptance gate. Each criterion prints one PASS line; any
//! failure panics with the offending numbers. Reference model: built-in
//! mutation family theta1 = theta2 = 1, epsilon = 1, whose stationary law
//! is Beta(2,2) (density 6x(1-x)).

use std::process::Command;

use wfdiff::convergence::{
    check_thm2, estimate_tv_curve, meeting_tail, multinomial_tv_floor, MuSampler,
};
use wfdiff::invariant::{estimate_chain, khasminskii_measure, moment_i, run_cycles, CycleConfig};
use wfdiff::model::{
    admissible_m_interval, builtin_wf_mutation, make_bound_params, validate_envelope, Coefficient,
    ModelSpec, StationaryDensity,
};
use wfdiff::recurrence::{
    check_occupation_bound, check_prop1, check_prop2, check_thm1, lemma1_exit_experiment, Side,
    Verdict,
};
use wfdiff::sde::{simulate_path, SimConfig};

const SEED: u64 = 20_260_826;

/// Weighted least-squares slope of (t, y) points with per-point standard
/// errors; returns (slope, slope standard error).
fn weighted_slope(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.2 * p.2)).collect();
    let sw: f64 = w.iter().sum();
    let xb = points.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let yb = points.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.0 - xb) * (p.0 - xb)).sum();
    let sxy: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.0 - xb) * (p.1 - yb)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

fn reference_model() -> ModelSpec {
    // hand-chosen envelope: beta = 0.1 on both sides, drift 1-2x gives
    // b0 = 0.8 and b1 = -0.8 there
    ModelSpec::new(
        Coefficient::WfDrift {
            theta1: 1.0,
            theta2: 1.0,
        },
        Coefficient::WfSigma,
        1.0,
        1.0,
        0.1,
        0.8,
        0.1,
        -0.8,
    )
    .unwrap()
}

#[test]
fn acceptance_1_envelope_and_constant_arithmetic() {
    let model = reference_model();
    assert!(validate_envelope(&model, 10_001).unwrap().passed);
    let (lo, hi) = admissible_m_interval(&model).unwrap();
    assert!((lo - 0.0).abs() <= 1e-12 && (hi - 0.6).abs() <= 1e-12, "interval ({lo}, {hi})");
    let params = make_bound_params(&model, 0.5, 0.1).unwrap();
    // 2 / (0.5*0.8 - 0.5*0.5*1.5*1) = 2/0.025 = 80
    assert!((params.c_lower - 80.0).abs() <= 1e-12, "C(0.5) = {}", params.c_lower);
    assert!((params.c_upper - 80.0).abs() <= 1e-12);
    assert!((params.c_max - 80.0).abs() <= 1e-12);
    println!("ACCEPTANCE 1: PASS m-interval (0, 0.6), C(0.5) = 80, envelope valid");
}

#[test]
fn acceptance_2_boundary_safety_and_exit_table() {
    let model = reference_model();
    let mut cfg = SimConfig::new(1e-4, 50.0, SEED).unwrap();
    cfg.record_stride = 100;
    for i in 0..1000u64 {
        let p = simulate_path(&model, 0.5, &cfg, i).unwrap();
        assert!(p.states.iter().all(|&x| x > 0.0 && x < 1.0));
    }
    let exit_cfg = SimConfig::new(1e-4, 50.0, SEED).unwrap();
    let rows = lemma1_exit_experiment(
        &model,
        0.05,
        &[0.025, 0.0125, 0.00625],
        0.1,
        1000,
        &exit_cfg,
        1_000_000,
    )
    .unwrap();
    for w in rows.windows(2) {
        assert!(
            w[1].p_exit_lower + w[1].ci_half < w[0].p_exit_lower - w[0].ci_half,
            "exit probabilities not strictly decreasing: {} vs {}",
            w[0].p_exit_lower,
            w[1].p_exit_lower
        );
        assert_eq!(w[0].n_censored + w[1].n_censored, 0);
    }
    println!(
        "ACCEPTANCE 2: PASS zero breaches over 1000 paths; exit table {:.4} > {:.4} > {:.4}",
        rows[0].p_exit_lower, rows[1].p_exit_lower, rows[2].p_exit_lower
    );
}

#[test]
fn acceptance_3_and_4_hitting_moment_and_occupation_bounds() {
    let model = builtin_wf_mutation(1.0, 1.0, 1.0).unwrap();
    let params = make_bound_params(&model, 0.5, 0.05).unwrap();
    let x0 = params.alpha / 2.0;
    let n = 10_000;
    let cfg = SimConfig::new(1e-4, 200.0, SEED).unwrap();

    let checks = [
        check_prop1(&model, x0, &params, n, &cfg, 0x10_0000).unwrap(),
        check_prop2(&model, 1.0 - x0, &params, n, &cfg, 0x20_0000).unwrap(),
        check_thm1(&model, x0, &params, n, &cfg, 0x30_0000).unwrap(),
    ];
    for r in &checks {
        assert_eq!(r.lhs.censored_fraction, 0.0, "{} censored", r.check);
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "{}: ci95u {} vs rhs {}",
            r.check,
            r.lhs.ci95_upper,
            r.rhs
        );
    }
    println!(
        "ACCEPTANCE 3: PASS prop1/prop2/thm1 ci95u <= rhs at alpha = {}, x0 = {}",
        params.alpha, x0
    );

    let occ = [
        check_occupation_bound(&model, x0, &params, Side::Lower, n, &cfg, 0x40_0000).unwrap(),
        check_occupation_bound(&model, 1.0 - x0, &params, Side::Upper, n, &cfg, 0x50_0000).unwrap(),
        check_occupation_bound(&model, x0, &params, Side::TwoSided, n, &cfg, 0x60_0000).unwrap(),
    ];
    for r in &occ {
        assert_eq!(r.lhs.censored_fraction, 0.0, "{} censored", r.check);
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "{}: ci95u {} vs rhs {}",
            r.check,
            r.lhs.ci95_upper,
            r.rhs
        );
    }
    println!("ACCEPTANCE 4: PASS occupation-integral bounds on all three sides");
}

#[test]
fn acceptance_5_and_6_invariant_measure_and_singular_moment() {
    let model = builtin_wf_mutation(1.0, 1.0, 1.0).unwrap();
    let cyc = CycleConfig::new(0.1, 0.2, 200)
        .unwrap()
        .with_moment_exponents(vec![0.5]);
    let cfg = SimConfig::new(1e-4, 500.0, SEED).unwrap();
    let set = run_cycles(&model, &cyc, 20_000, &cfg, 0).unwrap();
    assert_eq!(set.records.len(), 20_000);
    let chain = estimate_chain(&set).unwrap();
    let measure = khasminskii_measure(&set, &chain).unwrap();

    let density = StationaryDensity::new(&model, 1e-10).unwrap();
    let raw = density.bin_masses(&measure.bin_edges).unwrap();
    let total: f64 = raw.iter().sum();
    let analytic: Vec<f64> = raw.iter().map(|m| m / total).collect();
    let tv = measure.tv_to(&analytic);
    assert!(tv <= 0.05, "TV to Beta(2,2) = {tv}");

    // model symmetry: crossing probabilities of the embedded chain agree
    let p_lh = chain.transition[0][1];
    let p_hl = chain.transition[1][0];
    let n0 = (chain.counts[0][0] + chain.counts[0][1]) as f64;
    let n1 = (chain.counts[1][0] + chain.counts[1][1]) as f64;
    let se = (p_lh * (1.0 - p_lh) / n0 + p_hl * (1.0 - p_hl) / n1).sqrt();
    assert!(
        (p_lh - p_hl).abs() <= 1.96 * se,
        "chain asymmetry {p_lh} vs {p_hl} (se {se})"
    );
    println!("ACCEPTANCE 5: PASS cycle measure TV = {tv:.4} <= 0.05, chain symmetric within CI");

    // I(0.5) = int (x^-1/2 + (1-x)^-1/2) 6x(1-x) dx = 12 * 4/15 = 3.2
    let moment = moment_i(&set, &chain, 0.5).unwrap();
    let rel = (moment.mean - 3.2).abs() / 3.2;
    assert!(rel <= 0.10, "I(0.5) = {} off by {rel:.3}", moment.mean);
    println!(
        "ACCEPTANCE 6: PASS I(0.5) = {:.4} within 10% of 3.2",
        moment.mean
    );
}

#[test]
fn acceptance_7_and_8_convergence_envelope_and_coupling() {
    let model = builtin_wf_mutation(1.0, 1.0, 1.0).unwrap();
    let params = make_bound_params(&model, 0.5, 0.05).unwrap();
    let density = StationaryDensity::new(&model, 1e-10).unwrap();
    let times = [1.0, 2.0, 5.0, 10.0, 20.0];
    let n = 100_000;
    // coarse bins keep the multinomial resolution floor (~0.0055) well
    // below the signal at t = 2, so the decay fit has two cleared points
    let bins = 20;
    let cfg = SimConfig::new(1e-3, 25.0, SEED).unwrap();

    let curve_a = estimate_tv_curve(&model, 0.05, &times, n, bins, &density, &cfg, 0).unwrap();
    let report = check_thm2(&curve_a, &params, 0.05);
    for r in &report.rows {
        assert!(r.passed, "t = {}: tv {} + ci {} > rhs {}", r.t, r.tv, r.ci, r.rhs);
    }
    // decay of log TV, restricted to times where the estimate clears the
    // binning resolution floor (the late points are flat at the floor and
    // carry no rate information); bootstrap CIs weight the fit
    let floor = multinomial_tv_floor(&curve_a.analytic_masses, n);
    let cleared: Vec<(f64, f64, f64)> = times
        .iter()
        .zip(curve_a.tv.iter().zip(&curve_a.ci))
        .filter(|(_, (tv, _))| **tv > 2.0 * floor)
        .map(|(&t, (&tv, &ci))| (t, tv.ln(), ci / (1.96 * tv)))
        .collect();
    assert!(cleared.len() >= 2, "only {} points clear the floor", cleared.len());
    let (slope, slope_se) = weighted_slope(&cleared);
    assert!(
        slope + 1.96 * slope_se < 0.0,
        "log-TV slope {slope} (se {slope_se}) over {} cleared points",
        cleared.len()
    );
    let fit_slope = slope;

    // operational uniqueness: curves from both corners meet at t = 20
    let curve_b =
        estimate_tv_curve(&model, 0.95, &[20.0], n, bins, &density, &cfg, 0x100_0000).unwrap();
    let gap = (curve_a.tv[4] - curve_b.tv[0]).abs();
    assert!(
        gap <= curve_a.ci[4] + curve_b.ci[0],
        "corner curves disagree at t=20: {} vs {} (cis {} {})",
        curve_a.tv[4],
        curve_b.tv[0],
        curve_a.ci[4],
        curve_b.ci[0]
    );
    println!(
        "ACCEPTANCE 7: PASS TV curve below envelope; slope {:.3} < 0; corner gap {:.4} within CI",
        fit_slope, gap
    );

    // coupling: 2 P(L > t) dominates the TV estimate up to its binning
    // resolution floor
    let sampler = MuSampler::from_density(&density, bins).unwrap();
    let pair_cfg = SimConfig::new(1e-3, 60.0, SEED).unwrap();
    // denser early grid: meeting is fast, so the exponential fit needs
    // points before the survival drops under its 10/n cutoff
    let tail_times = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 5.0, 10.0, 20.0];
    let tail =
        meeting_tail(&model, 0.05, &sampler, 10_000, &tail_times, &pair_cfg, 0x200_0000).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let j = tail.times.iter().position(|&s| s == t).unwrap();
        assert!(
            2.0 * tail.survival[j] >= curve_a.tv[k] - curve_a.ci[k] - floor,
            "t = {t}: 2P(L>t) = {} below tv {} - ci {} - floor {floor}",
            2.0 * tail.survival[j],
            curve_a.tv[k],
            curve_a.ci[k]
        );
    }
    let fit = tail.fit.expect("tail fit unavailable");
    assert!(
        fit.lambda_hat - 1.96 * fit.lambda_se > 0.0,
        "lambda_hat {} (se {})",
        fit.lambda_hat,
        fit.lambda_se
    );
    println!(
        "ACCEPTANCE 8: PASS 2 P(L>t) dominates TV; lambda_hat = {:.3} > 0 with CI",
        fit.lambda_hat
    );
}

#[test]
fn acceptance_9_outputs_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("suite.toml");
    std::fs::write(
        &config,
        r#"
family = "wf_mutation"
theta1 = 1.0
theta2 = 1.0
epsilon = 1.0
seed = 7

[sim]
dt = 0.01
t_max = 100.0

[hitting]
m = 0.5
c = 0.05
n = 200

[invariant]
alpha1 = 0.1
alpha2 = 0.2
bins = 40
n_cycles = 150
moment_m = 0.5

[converge]
x0 = 0.05
times = [0.5, 1.0, 2.0]
n_replicas = 500
bins = 20
n_pairs = 100
"#,
    )
    .unwrap();

    let run = |out: &str, workers: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_wfdiff"))
            .args([
                "all",
                "--config",
                config.to_str().unwrap(),
                "--out",
                dir.path().join(out).to_str().unwrap(),
                "--workers",
                workers,
                "--svg",
            ])
            .status()
            .unwrap();
        status.code().unwrap()
    };
    let code1 = run("w1", "1");
    let code3 = run("w3", "3");
    assert_eq!(code1, code3);

    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("w1"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in &names {
        let a = std::fs::read(dir.path().join("w1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("w3").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name:?} differs across worker counts");
    }
    println!(
        "ACCEPTANCE 9: PASS {} artifacts byte-identical with 1 and 3 workers",
        names.len()
    );
}
