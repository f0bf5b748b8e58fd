//! Convergence-to-equilibrium diagnostics: the binned total-variation curve
//! of the law of X_t against the stationary density, the explicit
//! exponential envelope it must stay under, and the tail of the meeting
//! time of two independent copies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::invariant::EmpiricalMeasure;
use crate::model::{BoundParams, ModelSpec, StationaryDensity};
use crate::rng::substream;
use crate::sde::{run_until, simulate_pair_to_meeting, SimConfig, StopRule};
use crate::stats::{linear_fit, LineFit, Z95};

/// Binned TV distance to the stationary law at a set of times, with a
/// bootstrap half-width per time. A lower bound of the true TV distance.
#[derive(Clone, Debug)]
pub struct TVCurve {
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    pub ci: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub analytic_masses: Vec<f64>,
    pub n_replicas: usize,
}

/// Resolution floor of a binned TV estimate from n multinomial draws:
/// the expected absolute deviation of each bin count under the target law,
/// summed. TV estimates below this level are indistinguishable from zero.
pub fn multinomial_tv_floor(masses: &[f64], n: usize) -> f64 {
    let n = n as f64;
    0.5 * masses
        .iter()
        .map(|&q| (2.0 * q * (1.0 - q) / (std::f64::consts::PI * n)).sqrt())
        .sum::<f64>()
}

/// States of n independent replicas captured at each requested time (first
/// accepted grid point at or past the target). Row k holds the n states at
/// times[k]. Replica i uses substream stream0 + i.
pub fn capture_states(
    model: &ModelSpec,
    x0: f64,
    times: &[f64],
    n_replicas: usize,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() {
        return Err(Error::InvalidParam("no capture times given".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] < 0.0 {
        return Err(Error::InvalidParam("capture times must be nonnegative".into()));
    }
    let horizon = sorted[sorted.len() - 1] + 2.0 * cfg.dt;
    let run_cfg = cfg.clone().with_horizon(horizon);

    let per_replica: Vec<Vec<f64>> = (0..n_replicas)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = substream(cfg.seed, stream0 + i as u64);
            let mut captured = Vec::with_capacity(sorted.len());
            let mut t_acc = 0.0;
            let mut next = 0usize;
            // the rule never fires; the horizon alone ends the run
            run_until(
                model,
                x0,
                StopRule::ReachAbove(2.0),
                &run_cfg,
                &mut rng,
                |xl, h| {
                    while next < sorted.len() && t_acc >= sorted[next] - 1e-12 {
                        captured.push(xl);
                        next += 1;
                    }
                    t_acc += h;
                },
            )?;
            if captured.len() != sorted.len() {
                return Err(Error::Estimation(
                    "run ended before all capture times were reached".into(),
                ));
            }
            Ok(captured)
        })
        .collect::<Result<Vec<_>>>()?;

    // transpose to per-time rows, restoring the caller's time order
    let mut rows = vec![Vec::with_capacity(n_replicas); times.len()];
    for rep in &per_replica {
        for (k, &t) in times.iter().enumerate() {
            let j = sorted.iter().position(|&s| s == t).unwrap();
            rows[k].push(rep[j]);
        }
    }
    Ok(rows)
}

fn histogram_counts(states: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &x in states {
        let idx = ((x * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
}

fn tv_from_counts(counts: &[u64], n: usize, masses: &[f64]) -> f64 {
    0.5 * counts
        .iter()
        .zip(masses)
        .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
        .sum::<f64>()
}

/// Draws one multinomial count vector for probabilities `q` by conditional
/// binomials.
fn multinomial(rng: &mut ChaCha8Rng, n: u64, q: &[f64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(q.len());
    let mut rem_n = n;
    let mut rem_p = 1.0f64;
    for &p in q {
        if rem_n == 0 || rem_p <= 0.0 {
            out.push(0);
            continue;
        }
        let pj = (p / rem_p).clamp(0.0, 1.0);
        let k = Binomial::new(rem_n, pj).map(|d| d.sample(rng)).unwrap_or(0);
        out.push(k);
        rem_n -= k;
        rem_p -= p;
    }
    if rem_n > 0 {
        if let Some(last) = out.last_mut() {
            *last += rem_n;
        }
    }
    out
}

const BOOTSTRAP_B: usize = 200;

/// Estimates the binned TV distance between the law of X_t and the
/// stationary density at each time. The CI half-width comes from a
/// deterministic multinomial bootstrap around the empirical bin law.
pub fn estimate_tv_curve(
    model: &ModelSpec,
    x0: f64,
    times: &[f64],
    n_replicas: usize,
    bins: usize,
    target: &StationaryDensity,
    cfg: &SimConfig,
    stream0: u64,
) -> Result<TVCurve> {
    if bins == 0 || n_replicas == 0 {
        return Err(Error::InvalidParam("bins and n_replicas must be positive".into()));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let raw = target.bin_masses(&edges)?;
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Estimation("stationary density has zero mass".into()));
    }
    let masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
    if masses.iter().any(|&m| m <= 0.0) {
        return Err(Error::Estimation(
            "a histogram bin has zero stationary mass; use fewer bins".into(),
        ));
    }

    let rows = capture_states(model, x0, times, n_replicas, cfg, stream0)?;
    let mut tv = Vec::with_capacity(times.len());
    let mut ci = Vec::with_capacity(times.len());
    for (k, states) in rows.iter().enumerate() {
        let counts = histogram_counts(states, bins);
        tv.push(tv_from_counts(&counts, n_replicas, &masses));
        let q_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n_replicas as f64).collect();
        let mut boot_rng = substream(cfg.seed ^ 0x7456_6375_7276_6531, k as u64);
        let mut boots = Vec::with_capacity(BOOTSTRAP_B);
        for _ in 0..BOOTSTRAP_B {
            let resampled = multinomial(&mut boot_rng, n_replicas as u64, &q_hat);
            boots.push(tv_from_counts(&resampled, n_replicas, &masses));
        }
        let (bmean, _) = crate::stats::mean_se(&boots);
        let var = boots
            .iter()
            .map(|b| (b - bmean) * (b - bmean))
            .sum::<f64>()
            / (BOOTSTRAP_B as f64 - 1.0);
        ci.push(Z95 * var.sqrt());
    }
    Ok(TVCurve {
        times: times.to_vec(),
        tv,
        ci,
        bin_edges: edges,
        analytic_masses: masses,
        n_replicas,
    })
}

/// The state-dependent prefactor D(x) of the exponential TV envelope.
pub fn d_prefactor(params: &BoundParams, x0: f64) -> f64 {
    let g = x0.powf(-params.m) + (1.0 - x0).powf(-params.m);
    params.c_max * params.alpha.powf(params.m + 1.0) * g + 1.0
}

/// Explicit TV envelope at time t from initial state x0: twice the smaller
/// of 1 and (D(x0) + 1) e^{-ct}.
pub fn thm2_rhs(params: &BoundParams, x0: f64, t: f64) -> f64 {
    let g = x0.powf(-params.m) + (1.0 - x0).powf(-params.m);
    let bracket = params.c_max * params.c * params.alpha.powf(params.m + 1.0) * g + 2.0;
    2.0 * (bracket * (-params.c * t).exp()).min(1.0)
}

#[derive(Clone, Copy, Debug)]
pub struct Thm2Row {
    pub t: f64,
    pub tv: f64,
    pub ci: f64,
    pub rhs: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct Thm2Report {
    pub rows: Vec<Thm2Row>,
    pub passed: bool,
    /// Least-squares fit of log TV against t over times where TV clears the
    /// multinomial resolution floor; slope estimates the empirical decay
    /// rate. None when fewer than three points clear the floor.
    pub decay: Option<LineFit>,
}

/// Compares the estimated TV curve against the exponential envelope:
/// passes when tv + ci <= rhs at every time.
pub fn check_thm2(curve: &TVCurve, params: &BoundParams, x0: f64) -> Thm2Report {
    let floor = multinomial_tv_floor(&curve.analytic_masses, curve.n_replicas);
    let mut rows = Vec::with_capacity(curve.times.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..curve.times.len() {
        let t = curve.times[k];
        let rhs = thm2_rhs(params, x0, t);
        let passed = curve.tv[k] + curve.ci[k] <= rhs;
        rows.push(Thm2Row {
            t,
            tv: curve.tv[k],
            ci: curve.ci[k],
            rhs,
            passed,
        });
        if curve.tv[k] > 2.0 * floor {
            xs.push(t);
            ys.push(curve.tv[k].ln());
        }
    }
    let decay = if xs.len() >= 3 {
        linear_fit(&xs, &ys).ok()
    } else {
        None
    };
    let passed = rows.iter().all(|r| r.passed);
    Thm2Report { rows, passed, decay }
}

/// Inverse-CDF sampler over a binned measure on (0,1); uniform within bins.
#[derive(Clone, Debug)]
pub struct MuSampler {
    edges: Vec<f64>,
    cdf: Vec<f64>,
}

impl MuSampler {
    pub fn from_weights(edges: &[f64], weights: &[f64]) -> Result<Self> {
        if edges.len() != weights.len() + 1 || weights.is_empty() {
            return Err(Error::InvalidParam("edges must bracket the weights".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParam("weights must have positive mass".into()));
        }
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in weights {
            if *w < 0.0 {
                return Err(Error::InvalidParam("negative weight".into()));
            }
            acc += w / total;
            cdf.push(acc);
        }
        Ok(MuSampler {
            edges: edges.to_vec(),
            cdf,
        })
    }

    pub fn from_measure(mu: &EmpiricalMeasure) -> Result<Self> {
        Self::from_weights(&mu.bin_edges, &mu.weights)
    }

    pub fn from_density(density: &StationaryDensity, bins: usize) -> Result<Self> {
        let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        let masses = density.bin_masses(&edges)?;
        Self::from_weights(&edges, &masses)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let lo = self.edges[idx];
        let hi = self.edges[idx + 1];
        let v: f64 = rng.gen();
        // keep strictly inside (0,1) even at the edge bins
        (lo + (hi - lo) * v).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)
    }
}

/// Exponential fit of the meeting-time tail: P(L > t) ~ d e^{-lambda t}.
#[derive(Clone, Copy, Debug)]
pub struct TailFit {
    pub lambda_hat: f64,
    pub d_hat: f64,
    pub lambda_se: f64,
    pub points_used: usize,
    pub residual_rms: f64,
}

#[derive(Clone, Debug)]
pub struct MeetingTail {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub ci_half: Vec<f64>,
    pub censored_fraction: f64,
    /// None when too few tail points resolve or censoring exceeds 1%.
    pub fit: Option<TailFit>,
}

/// Tail of the meeting time of two independent copies: one starts at x0,
/// the other from `sampler`. Survival probabilities at each time, plus an
/// exponential fit over times where at least 10 meetings remain pending.
pub fn meeting_tail(
    model: &ModelSpec,
    x0: f64,
    sampler: &MuSampler,
    n_pairs: usize,
    times: &[f64],
    cfg: &SimConfig,
    stream0: u64,
) -> Result<MeetingTail> {
    if n_pairs == 0 || times.is_empty() {
        return Err(Error::InvalidParam("need pairs and times".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let horizon = sorted[sorted.len() - 1] + 2.0 * cfg.dt;
    let run_cfg = cfg.clone().with_horizon(horizon.max(cfg.t_max));

    // initial draws first, in replica order, so the meeting substreams do
    // not depend on how many uniforms each draw consumed
    let mut draw_rng = substream(cfg.seed ^ 0x6d75_6472_6177, stream0);
    let y0s: Vec<f64> = (0..n_pairs).map(|_| sampler.sample(&mut draw_rng)).collect();

    let samples: Vec<crate::sde::CouplingSample> = (0..n_pairs)
        .into_par_iter()
        .map(|i| simulate_pair_to_meeting(model, x0, y0s[i], &run_cfg, stream0 + i as u64))
        .collect::<Result<Vec<_>>>()?;

    let censored = samples.iter().filter(|s| s.censored).count();
    let censored_fraction = censored as f64 / n_pairs as f64;
    let n = n_pairs as f64;
    let mut survival = Vec::with_capacity(sorted.len());
    let mut ci_half = Vec::with_capacity(sorted.len());
    for &t in &sorted {
        let alive = samples.iter().filter(|s| s.censored || s.l > t).count();
        let p = alive as f64 / n;
        survival.push(p);
        ci_half.push(Z95 * (p * (1.0 - p) / n).sqrt());
    }

    let fit = if censored_fraction > 0.01 {
        None
    } else {
        let min_p = 10.0 / n;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, &t) in sorted.iter().enumerate() {
            if survival[k] >= min_p && survival[k] < 1.0 {
                xs.push(t);
                ys.push(survival[k].ln());
            }
        }
        if xs.len() >= 3 {
            linear_fit(&xs, &ys).ok().map(|f| TailFit {
                lambda_hat: -f.slope,
                d_hat: f.intercept.exp(),
                lambda_se: f.slope_se,
                points_used: xs.len(),
                residual_rms: f.residual_rms,
            })
        } else {
            None
        }
    };

    Ok(MeetingTail {
        times: sorted,
        survival,
        ci_half,
        censored_fraction,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_wf_mutation;

    fn params() -> BoundParams {
        BoundParams {
            m: 0.5,
            c: 0.1,
            alpha: 0.04,
            c_lower: 80.0,
            c_upper: 80.0,
            c_max: 80.0,
        }
    }

    #[test]
    fn envelope_saturates_at_two_for_small_t() {
        // bracket at x=1/2: 80*0.1*0.04^1.5*2*sqrt(2) + 2 = 2.1810193359837564
        // min with 1 clips, so the envelope starts at exactly 2
        assert_eq!(thm2_rhs(&params(), 0.5, 0.0), 2.0);
    }

    #[test]
    fn envelope_decays_exponentially_once_unclipped() {
        let p = params();
        let bracket = 2.1810193359837564f64;
        let want = 2.0 * bracket * (-0.1f64 * 10.0).exp();
        assert!((thm2_rhs(&p, 0.5, 10.0) - want).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let v = thm2_rhs(&p, 0.5, k as f64);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn prefactor_hand_value() {
        // 80 * 0.04^1.5 * 2*sqrt(2) + 1 = 0.64*2.828427... + 1
        let want = 0.64 * 2.0 * 2.0f64.sqrt() + 1.0;
        assert!((d_prefactor(&params(), 0.5) - want).abs() < 1e-12);
        assert!((want - 2.8101933598375617).abs() < 1e-12);
    }

    #[test]
    fn tv_floor_two_equal_bins() {
        // 0.5 * 2 * sqrt(2*0.25/(pi n)) = 1/sqrt(2 pi n)
        let f = multinomial_tv_floor(&[0.5, 0.5], 10_000);
        assert!((f - 0.003989422804014327).abs() < 1e-15);
        assert_eq!(multinomial_tv_floor(&[1.0], 100), 0.0);
    }

    #[test]
    fn sampler_respects_support_and_mass() {
        let edges = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let weights = vec![0.0, 1.0, 1.0, 0.0];
        let s = MuSampler::from_weights(&edges, &weights).unwrap();
        let mut rng = substream(7, 0);
        let mut in_left = 0usize;
        const N: usize = 4000;
        for _ in 0..N {
            let x = s.sample(&mut rng);
            assert!(x >= 0.25 && x < 0.75);
            if x < 0.5 {
                in_left += 1;
            }
        }
        let frac = in_left as f64 / N as f64;
        assert!((frac - 0.5).abs() < 0.05);
    }

    #[test]
    fn sampler_rejects_bad_input() {
        assert!(MuSampler::from_weights(&[0.0, 1.0], &[0.0]).is_err());
        assert!(MuSampler::from_weights(&[0.0, 0.5, 1.0], &[1.0]).is_err());
        assert!(MuSampler::from_weights(&[0.0, 0.5, 1.0], &[1.0, -0.1]).is_err());
    }

    #[test]
    fn check_thm2_flags_violations() {
        let p = params();
        let curve = TVCurve {
            times: vec![0.0, 50.0],
            tv: vec![0.5, 1.9],
            ci: vec![0.01, 0.01],
            bin_edges: vec![0.0, 0.5, 1.0],
            analytic_masses: vec![0.5, 0.5],
            n_replicas: 1000,
        };
        let report = check_thm2(&curve, &p, 0.5);
        assert!(report.rows[0].passed);
        assert!(!report.rows[1].passed);
        assert!(!report.passed);
    }

    #[test]
    fn tv_curve_smoke_and_determinism() {
        let model = builtin_wf_mutation(1.0, 1.0, 1.0).unwrap();
        let density = StationaryDensity::new(&model, 1e-10).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 11).unwrap();
        let times = [0.25, 1.0];
        let a = estimate_tv_curve(&model, 0.5, &times, 400, 10, &density, &cfg, 0).unwrap();
        let b = estimate_tv_curve(&model, 0.5, &times, 400, 10, &density, &cfg, 0).unwrap();
        assert_eq!(a.tv, b.tv);
        assert_eq!(a.ci, b.ci);
        for k in 0..2 {
            assert!(a.tv[k] >= 0.0 && a.tv[k] <= 1.0);
            assert!(a.ci[k] > 0.0);
        }
        // the law spreads out between t = 0.25 and t = 1 from a point start
        assert!(a.tv[1] < a.tv[0]);
    }

    #[test]
    fn meeting_tail_smoke() {
        let model = builtin_wf_mutation(1.0, 1.0, 1.0).unwrap();
        let density = StationaryDensity::new(&model, 1e-10).unwrap();
        let sampler = MuSampler::from_density(&density, 50).unwrap();
        let cfg = SimConfig::new(1e-2, 40.0, 3).unwrap();
        let tail = meeting_tail(&model, 0.3, &sampler, 200, &[0.5, 1.0, 2.0, 4.0], &cfg, 0).unwrap();
        assert_eq!(tail.survival.len(), 4);
        for w in tail.survival.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "survival must be nonincreasing");
        }
        assert!(tail.censored_fraction <= 0.01);
    }
}
