//! Monte Carlo certification of the hitting-time moment bounds: exponential
//! moments of T_alpha, T'_alpha and the two-sided T_hat, and the occupation
//! integrals along the stopped paths. A pass verdict always rests on the
//! 95% CI upper bound with zero censoring, never on a point estimate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelSpec};
use crate::rng::substream;
use crate::sde::{run_until, SimConfig, StopRule};
use crate::stats::{mean_se, sample_kurtosis, Z95};

/// Kurtosis above this flags a heavy-tailed exponential-moment sample.
pub const HEAVY_TAIL_KURTOSIS: f64 = 9.0;

#[derive(Clone, Copy, Debug)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub ci95_upper: f64,
    pub censored_fraction: f64,
    pub heavy_tail: bool,
}

impl MomentEstimate {
    fn from_samples(values: &[f64], censored: usize) -> Self {
        let (mean, se) = mean_se(values);
        let kurt = sample_kurtosis(values);
        MomentEstimate {
            mean,
            std_error: se,
            n: values.len(),
            ci95_upper: mean + Z95 * se,
            censored_fraction: censored as f64 / values.len() as f64,
            heavy_tail: kurt.is_finite() && kurt > HEAVY_TAIL_KURTOSIS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Censored samples understate an exponential moment, so an upper-bound
    /// certification with any censoring is inconclusive rather than a pass.
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundCheckReport {
    pub check: &'static str,
    pub lhs: MomentEstimate,
    pub rhs: f64,
    pub params: BoundParams,
    pub x0: f64,
    pub verdict: Verdict,
}

fn verdict_for(lhs: &MomentEstimate, rhs: f64) -> Verdict {
    if lhs.censored_fraction > 0.0 {
        Verdict::Inconclusive
    } else if lhs.ci95_upper <= rhs {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Which one-sided/two-sided occupation bound to certify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
    TwoSided,
}

struct HitStats {
    exp_values: Vec<f64>,
    integrals: Vec<f64>,
    censored: usize,
}

/// Simulates n replicas of the stopping rule, collecting e^{c T} and the
/// left-endpoint path integral of `integrand` along the stopped path.
/// Replica i uses substream stream0 + i.
fn sample_hits(
    model: &ModelSpec,
    x0: f64,
    rule: StopRule,
    c: f64,
    integrand: impl Fn(f64) -> f64 + Sync,
    n: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<HitStats> {
    if n == 0 {
        return Err(Error::InvalidParam("replica count must be positive".into()));
    }
    let rows: Vec<(f64, f64, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, stream0 + i);
            let mut integral = 0.0;
            let sample = run_until(model, x0, rule, cfg, &mut rng, |x, h| {
                integral += integrand(x) * h;
            })?;
            if !integral.is_finite() {
                return Err(Error::Estimation(format!(
                    "occupation integrand overflowed on replica {i}"
                )));
            }
            Ok(((c * sample.value).exp(), integral, sample.censored))
        })
        .collect::<Result<_>>()?;
    Ok(HitStats {
        exp_values: rows.iter().map(|r| r.0).collect(),
        integrals: rows.iter().map(|r| r.1).collect(),
        censored: rows.iter().filter(|r| r.2).count(),
    })
}

/// E_x e^{c T_alpha} <= C(m) c alpha^{m+1} x^{-m} + 1, for x below alpha.
pub fn check_prop1(
    model: &ModelSpec,
    x0: f64,
    params: &BoundParams,
    n: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<BoundCheckReport> {
    if !(x0 > 0.0 && x0 <= params.alpha) {
        return Err(Error::InvalidParam(format!(
            "x0 = {x0} must lie in (0, alpha = {}]",
            params.alpha
        )));
    }
    let stats = sample_hits(
        model,
        x0,
        StopRule::ReachAbove(params.alpha),
        params.c,
        |_| 0.0,
        n,
        cfg,
        stream0,
    )?;
    let lhs = MomentEstimate::from_samples(&stats.exp_values, stats.censored);
    let rhs = params.c_lower * params.c * params.alpha.powf(params.m + 1.0) * x0.powf(-params.m)
        + 1.0;
    Ok(BoundCheckReport {
        check: "prop1",
        verdict: verdict_for(&lhs, rhs),
        lhs,
        rhs,
        params: *params,
        x0,
    })
}

/// Mirror of check_prop1 under x <-> 1-x with the upper-boundary constant.
pub fn check_prop2(
    model: &ModelSpec,
    x0: f64,
    params: &BoundParams,
    n: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<BoundCheckReport> {
    if !(x0 < 1.0 && x0 >= 1.0 - params.alpha) {
        return Err(Error::InvalidParam(format!(
            "x0 = {x0} must lie in [1 - alpha = {}, 1)",
            1.0 - params.alpha
        )));
    }
    let stats = sample_hits(
        model,
        x0,
        StopRule::ReachBelow(1.0 - params.alpha),
        params.c,
        |_| 0.0,
        n,
        cfg,
        stream0,
    )?;
    let lhs = MomentEstimate::from_samples(&stats.exp_values, stats.censored);
    let rhs = params.c_upper
        * params.c
        * params.alpha.powf(params.m + 1.0)
        * (1.0 - x0).powf(-params.m)
        + 1.0;
    Ok(BoundCheckReport {
        check: "prop2",
        verdict: verdict_for(&lhs, rhs),
        lhs,
        rhs,
        params: *params,
        x0,
    })
}

/// Two-sided version with C(m) = max of the one-sided constants.
pub fn check_thm1(
    model: &ModelSpec,
    x0: f64,
    params: &BoundParams,
    n: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<BoundCheckReport> {
    let stats = sample_hits(
        model,
        x0,
        StopRule::EnterCentral(params.alpha),
        params.c,
        |_| 0.0,
        n,
        cfg,
        stream0,
    )?;
    let lhs = MomentEstimate::from_samples(&stats.exp_values, stats.censored);
    let rhs = params.c_max
        * params.c
        * params.alpha.powf(params.m + 1.0)
        * ((1.0 - x0).powf(-params.m) + x0.powf(-params.m))
        + 1.0;
    Ok(BoundCheckReport {
        check: "thm1",
        verdict: verdict_for(&lhs, rhs),
        lhs,
        rhs,
        params: *params,
        x0,
    })
}

/// Occupation bounds: mean of the left-endpoint path integral of the
/// singular integrand along the stopped path against the explicit constant.
pub fn check_occupation_bound(
    model: &ModelSpec,
    x0: f64,
    params: &BoundParams,
    side: Side,
    n: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<BoundCheckReport> {
    let m = params.m;
    let (check, rule, rhs): (&'static str, StopRule, f64) = match side {
        Side::Lower => (
            "occupation_lower",
            StopRule::ReachAbove(params.alpha),
            params.c_lower * x0.powf(-m),
        ),
        Side::Upper => (
            "occupation_upper",
            StopRule::ReachBelow(1.0 - params.alpha),
            params.c_upper * (1.0 - x0).powf(-m),
        ),
        Side::TwoSided => (
            "occupation_two_sided",
            StopRule::EnterCentral(params.alpha),
            params.c_max * (x0.powf(-m) + (1.0 - x0).powf(-m)),
        ),
    };
    match side {
        Side::Lower if !(x0 > 0.0 && x0 <= params.alpha) => {
            return Err(Error::InvalidParam(format!(
                "x0 = {x0} must lie in (0, alpha] for the lower-side bound"
            )));
        }
        Side::Upper if !(x0 < 1.0 && x0 >= 1.0 - params.alpha) => {
            return Err(Error::InvalidParam(format!(
                "x0 = {x0} must lie in [1-alpha, 1) for the upper-side bound"
            )));
        }
        _ => {}
    }
    let integrand = move |x: f64| match side {
        Side::Lower => x.powf(-m - 1.0),
        Side::Upper => (1.0 - x).powf(-m - 1.0),
        Side::TwoSided => x.powf(-m - 1.0) + (1.0 - x).powf(-m - 1.0),
    };
    let stats = sample_hits(model, x0, rule, params.c, integrand, n, cfg, stream0)?;
    let lhs = MomentEstimate::from_samples(&stats.integrals, stats.censored);
    Ok(BoundCheckReport {
        check,
        verdict: verdict_for(&lhs, rhs),
        lhs,
        rhs,
        params: *params,
        x0,
    })
}

/// One row of the two-sided exit experiment.
#[derive(Clone, Copy, Debug)]
pub struct ExitRow {
    pub lower: f64,
    pub p_exit_lower: f64,
    pub ci_half: f64,
    pub n_censored: usize,
}

/// Estimates, for each lower threshold, the probability that the two-sided
/// exit from (lower, beta0) happens at the lower end. The probabilities
/// should decay as the lower threshold shrinks (non-attainability of 0).
pub fn lemma1_exit_experiment(
    model: &ModelSpec,
    x0: f64,
    lowers: &[f64],
    beta0: f64,
    n: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<Vec<ExitRow>> {
    let mut rows = Vec::with_capacity(lowers.len());
    let mut offset = stream0;
    for &lower in lowers {
        if !(lower < x0 && x0 < beta0) {
            return Err(Error::InvalidParam(format!(
                "need lower = {lower} < x0 = {x0} < beta0 = {beta0}"
            )));
        }
        let samples: Vec<(bool, bool)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(cfg.seed, offset + i);
                let s = run_until(
                    model,
                    x0,
                    StopRule::ExitInterval(lower, beta0),
                    cfg,
                    &mut rng,
                    |_, _| {},
                )?;
                // censored exits are counted separately, not as either side
                Ok((!s.censored && s.exit_state <= lower, s.censored))
            })
            .collect::<Result<_>>()?;
        let n_censored = samples.iter().filter(|s| s.1).count();
        let n_eff = n - n_censored;
        let hits = samples.iter().filter(|s| s.0).count();
        let p = if n_eff > 0 {
            hits as f64 / n_eff as f64
        } else {
            f64::NAN
        };
        let ci_half = if n_eff > 0 {
            Z95 * (p * (1.0 - p) / n_eff as f64).sqrt()
        } else {
            f64::NAN
        };
        rows.push(ExitRow {
            lower,
            p_exit_lower: p,
            ci_half,
            n_censored,
        });
        offset += n as u64;
    }
    Ok(rows)
}
