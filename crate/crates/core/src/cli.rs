//! Command-line harness: wires a config file to the experiment modules,
//! manages the output directory, and maps results to exit codes.
//!
//! Exit codes: 0 success, 1 I/O trouble, 2 invalid model or failed bound,
//! 3 inconclusive (censoring).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::convergence::{
    check_thm2, estimate_tv_curve, meeting_tail, MuSampler, Thm2Report,
};
use crate::error::{Error, Result};
use crate::invariant::{estimate_chain, khasminskii_measure, moment_i, run_cycles, CycleConfig};
use crate::model::{
    admissible_m_interval, make_bound_params, validate_envelope, BoundParams, ModelSpec,
    StationaryDensity, DEFAULT_GRID,
};
use crate::recurrence::{
    check_occupation_bound, check_prop1, check_prop2, check_thm1, BoundCheckReport, Side, Verdict,
};
use crate::report;
use crate::sde::SimConfig;

// fixed substream bases per experiment so artifacts never depend on which
// commands ran before them
const STREAM_PROP1: u64 = 0x0100_0000;
const STREAM_PROP2: u64 = 0x0200_0000;
const STREAM_THM1: u64 = 0x0300_0000;
const STREAM_OCC_LOWER: u64 = 0x0400_0000;
const STREAM_OCC_UPPER: u64 = 0x0500_0000;
const STREAM_OCC_TWO: u64 = 0x0600_0000;
const STREAM_CYCLES: u64 = 0x0700_0000;
const STREAM_TV: u64 = 0x0800_0000;
const STREAM_PAIRS: u64 = 0x0900_0000;

const QUAD_TOL: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(name = "wfdiff", version, about = "Monte Carlo verification harness \
for one-dimensional diffusions on (0,1): envelope validation, hitting-time \
moment bounds, cycle-constructed invariant measures, and convergence curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the drift/diffusion envelope conditions and report the
    /// admissible exponent window.
    Validate(RunArgs),
    /// Certify the hitting-time moment and occupation bounds.
    Hitting(RunArgs),
    /// Build the invariant measure from excursion cycles.
    Invariant(RunArgs),
    /// Estimate the TV convergence curve against its explicit envelope.
    Converge(RunArgs),
    /// Run all of the above.
    All(RunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also emit an SVG chart of the TV curve.
    #[arg(long)]
    pub svg: bool,
}

struct Ctx {
    config: ExperimentConfig,
    model: ModelSpec,
    sim: SimConfig,
    header: String,
    out: PathBuf,
    svg: bool,
}

fn load(args: &RunArgs) -> Result<Ctx> {
    let text = std::fs::read_to_string(&args.config)?;
    let config = ExperimentConfig::from_str(&text)?;
    let model = config.build_model()?;
    let sim = config.build_sim(args.seed)?;
    let header = report::provenance(&text, sim.seed);
    Ok(Ctx {
        config,
        model,
        sim,
        header,
        out: args.out.clone(),
        svg: args.svg,
    })
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 1,
        _ => 2,
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (args, f): (&RunArgs, fn(&Ctx) -> Result<i32>) = match &cli.command {
        Command::Validate(a) => (a, cmd_validate),
        Command::Hitting(a) => (a, cmd_hitting),
        Command::Invariant(a) => (a, cmd_invariant),
        Command::Converge(a) => (a, cmd_converge),
        Command::All(a) => (a, cmd_all),
    };
    let run_inner = || -> Result<i32> {
        let ctx = load(args)?;
        f(&ctx)
    };
    let result = match args.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build();
            match pool {
                Ok(p) => p.install(run_inner),
                Err(e) => Err(Error::Config(e.to_string())),
            }
        }
        None => run_inner(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_validate(ctx: &Ctx) -> Result<i32> {
    let report = validate_envelope(&ctx.model, DEFAULT_GRID)?;
    let mut out = ctx.header.clone();
    out.push_str("condition,passed,witness,detail\n");
    for c in &report.conditions {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.name,
            c.passed,
            c.witness.map_or(String::new(), |w| w.to_string()),
            c.detail.replace(',', ";")
        ));
    }
    if report.passed {
        let (lo, hi) = admissible_m_interval(&ctx.model)?;
        out.push_str(&format!("m_interval,true,{lo},interval upper endpoint {hi}\n"));
        println!("validate: PASS m-interval ({lo}, {hi})");
    } else {
        println!("validate: FAIL {:?}", report.failed_names());
    }
    report_write(&ctx.out.join("validate.csv"), &out)?;
    Ok(if report.passed { 0 } else { 2 })
}

fn report_write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn hitting_params(ctx: &Ctx) -> Result<(BoundParams, f64, usize, Vec<String>)> {
    let block = ctx
        .config
        .hitting
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [hitting] block".into()))?;
    let params = make_bound_params(&ctx.model, block.m, block.c)?;
    let x0 = block.x0.unwrap_or(params.alpha / 2.0);
    let checks = block.checks.clone().unwrap_or_else(|| {
        ["prop1", "prop2", "thm1", "occupation"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    });
    Ok((params, x0, block.n, checks))
}

fn cmd_hitting(ctx: &Ctx) -> Result<i32> {
    let (params, x0, n, checks) = hitting_params(ctx)?;
    let mut reports: Vec<BoundCheckReport> = Vec::new();
    for check in &checks {
        match check.as_str() {
            "prop1" => reports.push(check_prop1(&ctx.model, x0, &params, n, &ctx.sim, STREAM_PROP1)?),
            "prop2" => {
                reports.push(check_prop2(&ctx.model, 1.0 - x0, &params, n, &ctx.sim, STREAM_PROP2)?)
            }
            "thm1" => reports.push(check_thm1(&ctx.model, x0, &params, n, &ctx.sim, STREAM_THM1)?),
            "occupation" => {
                reports.push(check_occupation_bound(
                    &ctx.model, x0, &params, Side::Lower, n, &ctx.sim, STREAM_OCC_LOWER,
                )?);
                reports.push(check_occupation_bound(
                    &ctx.model, 1.0 - x0, &params, Side::Upper, n, &ctx.sim, STREAM_OCC_UPPER,
                )?);
                reports.push(check_occupation_bound(
                    &ctx.model, x0, &params, Side::TwoSided, n, &ctx.sim, STREAM_OCC_TWO,
                )?);
            }
            other => return Err(Error::Config(format!("unknown hitting check {other:?}"))),
        }
    }
    for r in &reports {
        println!(
            "hitting {}: {} lhs_ci95u={:.6} rhs={:.6}",
            r.check,
            r.verdict.label(),
            r.lhs.ci95_upper,
            r.rhs
        );
    }
    report::write_hitting_report(&ctx.out.join("hitting.csv"), &ctx.header, &reports)?;
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Ok(2)
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        Ok(3)
    } else {
        Ok(0)
    }
}

fn cmd_invariant(ctx: &Ctx) -> Result<i32> {
    let block = ctx
        .config
        .invariant
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [invariant] block".into()))?;
    let cyc = CycleConfig::new(block.alpha1, block.alpha2, block.bins)?
        .with_moment_exponents(vec![block.moment_m]);
    let set = run_cycles(&ctx.model, &cyc, block.n_cycles, &ctx.sim, STREAM_CYCLES)?;
    let chain = estimate_chain(&set)?;
    let measure = khasminskii_measure(&set, &chain)?;
    let density = StationaryDensity::new(&ctx.model, QUAD_TOL)?;
    let raw = density.bin_masses(&measure.bin_edges)?;
    let total: f64 = raw.iter().sum();
    let analytic: Vec<f64> = raw.iter().map(|m| m / total).collect();
    let tv = measure.tv_to(&analytic);
    let moment = moment_i(&set, &chain, block.moment_m)?;
    println!(
        "invariant: cycles={} aborted={} tv_to_analytic={:.4} I({})={:.4} (se {:.4})",
        set.records.len(),
        set.aborted,
        tv,
        block.moment_m,
        moment.mean,
        moment.std_error
    );
    report::write_measure(&ctx.out.join("measure.csv"), &ctx.header, &measure, &analytic)?;
    report::write_chain(&ctx.out.join("chain.csv"), &ctx.header, &chain)?;
    let mut mo = ctx.header.clone();
    mo.push_str("m,estimate,std_error,ci95_upper,n_cycles,aborted_frac\n");
    mo.push_str(&format!(
        "{},{},{},{},{},{}\n",
        block.moment_m, moment.mean, moment.std_error, moment.ci95_upper, moment.n,
        moment.censored_fraction
    ));
    report_write(&ctx.out.join("moment.csv"), &mo)?;
    Ok(0)
}

fn converge_params(ctx: &Ctx) -> Result<BoundParams> {
    let block = ctx.config.converge.as_ref().unwrap();
    let (m, c) = match (block.m, block.c) {
        (Some(m), Some(c)) => (m, c),
        _ => {
            let h = ctx.config.hitting.as_ref().ok_or_else(|| {
                Error::Config("[converge] needs m and c, or a [hitting] block to reuse".into())
            })?;
            (block.m.unwrap_or(h.m), block.c.unwrap_or(h.c))
        }
    };
    make_bound_params(&ctx.model, m, c)
}

fn cmd_converge(ctx: &Ctx) -> Result<i32> {
    let block = ctx
        .config
        .converge
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [converge] block".into()))?;
    let params = converge_params(ctx)?;
    let density = StationaryDensity::new(&ctx.model, QUAD_TOL)?;
    let curve = estimate_tv_curve(
        &ctx.model,
        block.x0,
        &block.times,
        block.n_replicas,
        block.bins,
        &density,
        &ctx.sim,
        STREAM_TV,
    )?;
    let thm2: Thm2Report = check_thm2(&curve, &params, block.x0);

    let survival = if block.n_pairs > 0 {
        let sampler = MuSampler::from_density(&density, block.bins)?;
        let tail = meeting_tail(
            &ctx.model,
            block.x0,
            &sampler,
            block.n_pairs,
            &block.times,
            &ctx.sim,
            STREAM_PAIRS,
        )?;
        if let Some(fit) = &tail.fit {
            println!(
                "converge: tail rate lambda_hat={:.4} (se {:.4}) d_hat={:.4}",
                fit.lambda_hat, fit.lambda_se, fit.d_hat
            );
            let mut out = ctx.header.clone();
            out.push_str("lambda_hat,lambda_se,d_hat,points_used,residual_rms,censored_frac\n");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fit.lambda_hat,
                fit.lambda_se,
                fit.d_hat,
                fit.points_used,
                fit.residual_rms,
                tail.censored_fraction
            ));
            report_write(&ctx.out.join("tail_fit.csv"), &out)?;
        }
        Some(tail.survival)
    } else {
        None
    };

    for r in &thm2.rows {
        println!(
            "converge t={}: tv={:.4} (ci {:.4}) envelope={:.4} {}",
            r.t,
            r.tv,
            r.ci,
            r.rhs,
            if r.passed { "pass" } else { "VIOLATION" }
        );
    }
    report::write_curve(
        &ctx.out.join("curve.csv"),
        &ctx.header,
        &thm2.rows,
        survival.as_deref(),
    )?;
    if ctx.svg {
        report_write(&ctx.out.join("curve.svg"), &report::svg_tv_chart(&thm2.rows))?;
    }
    Ok(if thm2.passed { 0 } else { 2 })
}

fn cmd_all(ctx: &Ctx) -> Result<i32> {
    let mut worst = cmd_validate(ctx)?;
    if worst == 0 {
        for f in [cmd_hitting, cmd_invariant, cmd_converge] {
            worst = worst.max(f(ctx)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_parses_all_flags() {
        let cli = Cli::try_parse_from([
            "wfdiff", "validate", "--config", "c.toml", "--seed", "7", "--out", "o", "--workers",
            "2", "--svg",
        ])
        .unwrap();
        match cli.command {
            Command::Validate(a) => {
                assert_eq!(a.seed, Some(7));
                assert_eq!(a.workers, Some(2));
                assert!(a.svg);
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn clap_debug_assert() {
        Cli::command().debug_assert();
    }

    #[test]
    fn missing_config_file_maps_to_io_exit() {
        let cli = Cli::try_parse_from(["wfdiff", "validate", "--config", "/nonexistent/x.toml"])
            .unwrap();
        assert_eq!(run(&cli), 1);
    }

    #[test]
    fn validate_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.toml");
        std::fs::write(&ok, "family = \"wf_mutation\"\ntheta1 = 1.0\ntheta2 = 1.0\n").unwrap();
        let cli = Cli::try_parse_from([
            "wfdiff",
            "validate",
            "--config",
            ok.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .unwrap();
        assert_eq!(run(&cli), 0);
        let text = std::fs::read_to_string(dir.path().join("out/validate.csv")).unwrap();
        assert!(text.starts_with("# config_hash="));
        assert!(text.contains("m_interval,true,0"));

        // theta1 too small: the drift cannot dominate near the lower boundary
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "family = \"wf_mutation\"\ntheta1 = 0.4\ntheta2 = 1.0\n").unwrap();
        let cli = Cli::try_parse_from([
            "wfdiff",
            "validate",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            dir.path().join("out2").to_str().unwrap(),
        ])
        .unwrap();
        assert_eq!(run(&cli), 2);
    }
}
