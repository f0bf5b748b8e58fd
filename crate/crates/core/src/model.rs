//! Diffusion models on (0,1): coefficient envelopes, standing-assumption
//! validation, admissibility windows for the Lyapunov exponent m, the
//! explicit constants C(m), and the closed-form stationary-density oracle.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::stats::adaptive_simpson;

/// Default grid density for envelope validation.
pub const DEFAULT_GRID: usize = 10_001;

/// Interior points at which the uniform-ellipticity condition is checked.
/// Finite proxy for the condition's quantification over all x0 in (0, 1/2).
pub const ELLIPTICITY_PROBES: [f64; 5] = [0.01, 0.05, 0.1, 0.25, 0.45];

/// A model coefficient: either a member of the built-in Wright-Fisher
/// mutation family (evaluated in closed form) or a parsed expression.
#[derive(Clone, Debug)]
pub enum Coefficient {
    /// theta1*(1-x) - theta2*x
    WfDrift { theta1: f64, theta2: f64 },
    /// sqrt(x*(1-x))
    WfSigma,
    Expr(Expr),
}

impl Coefficient {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::WfDrift { theta1, theta2 } => theta1 * (1.0 - x) - theta2 * x,
            Coefficient::WfSigma => (x * (1.0 - x)).sqrt(),
            Coefficient::Expr(e) => e.eval(x),
        }
    }
}

/// The SDE dX = B(X) dt + eps*sigma(X) dW together with a certified
/// coefficient envelope: drift floor b0 on [0, beta0), drift ceiling b1 on
/// (1-beta1, 1], and the diffusion dominator sigma^2 <= mu_bound*x*(1-x).
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub drift: Coefficient,
    pub sigma: Coefficient,
    pub epsilon: f64,
    pub mu_bound: f64,
    pub beta0: f64,
    pub b0: f64,
    pub beta1: f64,
    pub b1: f64,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        drift: Coefficient,
        sigma: Coefficient,
        epsilon: f64,
        mu_bound: f64,
        beta0: f64,
        b0: f64,
        beta1: f64,
        b1: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidModel("epsilon must be positive".into()));
        }
        if !(mu_bound > 0.0) {
            return Err(Error::InvalidModel("mu_bound must be positive".into()));
        }
        if !(beta0 > 0.0 && beta0 < 0.5) || !(beta1 > 0.0 && beta1 < 0.5) {
            return Err(Error::InvalidModel(
                "beta0 and beta1 must lie in (0, 1/2)".into(),
            ));
        }
        if !(b0 > 0.0) {
            return Err(Error::InvalidModel("b0 must be positive".into()));
        }
        if !(b1 < 0.0) {
            return Err(Error::InvalidModel("b1 must be negative".into()));
        }
        Ok(ModelSpec {
            drift,
            sigma,
            epsilon,
            mu_bound,
            beta0,
            b0,
            beta1,
            b1,
        })
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    #[inline]
    pub fn sigma2(&self, x: f64) -> f64 {
        let s = self.sigma.eval(x);
        s * s
    }
}

/// One validated condition with an optional failure witness.
#[derive(Clone, Debug)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failed_names(&self) -> Vec<&'static str> {
        self.conditions
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

// Relative slack for grid comparisons; sqrt/square round trips lose a few ulp.
const GRID_TOL: f64 = 1e-12;

/// Checks the five standing assumptions on a dense grid plus the envelope
/// endpoints. Deterministic and pure.
pub fn validate_envelope(model: &ModelSpec, grid_points: usize) -> Result<ValidationReport> {
    if grid_points < 16 {
        return Err(Error::InvalidParam(format!(
            "grid_points = {grid_points} too small; need at least 16"
        )));
    }
    let mut conditions = Vec::with_capacity(6);

    // drift floor on [0, beta0)
    let mut lower = ConditionCheck {
        name: "drift_floor_lower",
        passed: true,
        witness: None,
        detail: format!("B(x) >= b0 = {} on [0, {})", model.b0, model.beta0),
    };
    for i in 0..grid_points {
        // approach beta0 from the left without touching it (open interval)
        let x = model.beta0 * (i as f64) / (grid_points as f64);
        let b = model.drift(x);
        if !b.is_finite() {
            lower.passed = false;
            lower.witness = Some(x);
            lower.detail = format!("drift not evaluable at x = {x}");
            break;
        }
        if b < model.b0 * (1.0 - GRID_TOL.copysign(model.b0)) - GRID_TOL {
            lower.passed = false;
            lower.witness = Some(x);
            lower.detail = format!("B({x}) = {b} < b0 = {}", model.b0);
            break;
        }
    }
    conditions.push(lower);

    // drift ceiling on (1-beta1, 1]
    let mut upper = ConditionCheck {
        name: "drift_ceiling_upper",
        passed: true,
        witness: None,
        detail: format!("B(x) <= b1 = {} on ({}, 1]", model.b1, 1.0 - model.beta1),
    };
    for i in 0..grid_points {
        let x = 1.0 - model.beta1 * (i as f64) / (grid_points as f64);
        let b = model.drift(x);
        if !b.is_finite() {
            upper.passed = false;
            upper.witness = Some(x);
            upper.detail = format!("drift not evaluable at x = {x}");
            break;
        }
        if b > model.b1 + model.b1.abs() * GRID_TOL + GRID_TOL {
            upper.passed = false;
            upper.witness = Some(x);
            upper.detail = format!("B({x}) = {b} > b1 = {}", model.b1);
            break;
        }
    }
    conditions.push(upper);

    // 0 < sigma^2(x) <= mu_bound * x * (1-x) on (0,1)
    let mut dom = ConditionCheck {
        name: "sigma_dominated",
        passed: true,
        witness: None,
        detail: format!("0 < sigma^2(x) <= {} * x*(1-x) on (0,1)", model.mu_bound),
    };
    for i in 1..grid_points {
        let x = i as f64 / grid_points as f64;
        let s2 = model.sigma2(x);
        let cap = model.mu_bound * x * (1.0 - x);
        if !s2.is_finite() {
            dom.passed = false;
            dom.witness = Some(x);
            dom.detail = format!("sigma not evaluable at x = {x}");
            break;
        }
        if s2 <= 0.0 || s2 > cap * (1.0 + GRID_TOL) + GRID_TOL * GRID_TOL {
            dom.passed = false;
            dom.witness = Some(x);
            dom.detail = format!("sigma^2({x}) = {s2} violates (0, {cap}]");
            break;
        }
    }
    conditions.push(dom);

    // inf sigma^2 > 0 on central compacts
    let mut ell = ConditionCheck {
        name: "sigma_elliptic_interior",
        passed: true,
        witness: None,
        detail: "inf sigma^2 > 0 on [x0, 1-x0] at probe x0 values".into(),
    };
    'probe: for &x0 in &ELLIPTICITY_PROBES {
        let mut inf = f64::INFINITY;
        let mut arg = x0;
        for i in 0..grid_points {
            let x = x0 + (1.0 - 2.0 * x0) * (i as f64) / (grid_points as f64 - 1.0);
            let s2 = model.sigma2(x);
            if !s2.is_finite() {
                ell.passed = false;
                ell.witness = Some(x);
                ell.detail = format!("sigma not evaluable at x = {x}");
                break 'probe;
            }
            if s2 < inf {
                inf = s2;
                arg = x;
            }
        }
        if inf <= 0.0 {
            ell.passed = false;
            ell.witness = Some(arg);
            ell.detail = format!("inf sigma^2 over [{x0}, {}] is {inf}", 1.0 - x0);
            break;
        }
    }
    conditions.push(ell);

    // the two strict inequalities making both boundaries non-attainable
    let e2mu = model.epsilon * model.epsilon * model.mu_bound;
    let lhs_lower = 2.0 * model.b0 / e2mu - 1.0;
    conditions.push(ConditionCheck {
        name: "nonattain_lower",
        passed: lhs_lower > 0.0,
        witness: None,
        detail: format!("2*b0/(eps^2*mu) - 1 = {lhs_lower} must be > 0"),
    });
    let lhs_upper = 2.0 * model.b1 / e2mu + 1.0;
    conditions.push(ConditionCheck {
        name: "nonattain_upper",
        passed: lhs_upper < 0.0,
        witness: None,
        detail: format!("2*b1/(eps^2*mu) + 1 = {lhs_upper} must be < 0"),
    });

    let passed = conditions.iter().all(|c| c.passed);
    Ok(ValidationReport { conditions, passed })
}

fn require_valid(model: &ModelSpec) -> Result<()> {
    let report = validate_envelope(model, DEFAULT_GRID)?;
    if !report.passed {
        return Err(Error::InvalidModel(format!(
            "model fails conditions: {:?}",
            report.failed_names()
        )));
    }
    Ok(())
}

/// Open interval of admissible Lyapunov exponents:
/// (0, ((-2*b1) ^ 2*b0)/(eps^2*mu) - 1), where ^ is min.
pub fn admissible_m_interval(model: &ModelSpec) -> Result<(f64, f64)> {
    require_valid(model)?;
    let e2mu = model.epsilon * model.epsilon * model.mu_bound;
    let hi = (2.0 * model.b0).min(-2.0 * model.b1) / e2mu - 1.0;
    Ok((0.0, hi))
}

/// The triple (m, c, alpha) with the explicit constants C(m) attached.
#[derive(Clone, Copy, Debug)]
pub struct BoundParams {
    pub m: f64,
    pub c: f64,
    /// Largest feasible hitting threshold for this (m, c).
    pub alpha: f64,
    /// C(m) for the lower boundary.
    pub c_lower: f64,
    /// C(m) for the upper boundary.
    pub c_upper: f64,
    /// max of the two, used by the two-sided bounds.
    pub c_max: f64,
}

/// Builds BoundParams for exponent m and exponential rate c. The threshold
/// alpha is the largest value permitted by the envelope widths and the
/// feasibility inequality; a rate c at or below (eps^2/2)*m*(m+1)*mu makes
/// that inequality vacuous, leaving only the envelope caps.
pub fn make_bound_params(model: &ModelSpec, m: f64, c: f64) -> Result<BoundParams> {
    let (lo, hi) = admissible_m_interval(model)?;
    if !(m > lo && m < hi) {
        return Err(Error::InvalidParam(format!(
            "m = {m} outside the admissible interval ({lo}, {hi})"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParam("c must be positive".into()));
    }
    let half_e2 = 0.5 * model.epsilon * model.epsilon;
    let quad = half_e2 * m * (m + 1.0) * model.mu_bound;
    let num_lower = m * model.b0 - quad;
    let num_upper = -m * model.b1 - quad;
    // both positive for m inside the window
    let c_lower = 2.0 / num_lower;
    let c_upper = 2.0 / num_upper;
    let c_max = c_lower.max(c_upper);

    let mut alpha = model.beta0.min(model.beta1);
    let denom = 2.0 * (c - quad);
    if denom > 0.0 {
        alpha = alpha.min(num_lower / denom).min(num_upper / denom);
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParam(format!(
            "no feasible threshold for this (m, c): alpha cap = {alpha}"
        )));
    }
    Ok(BoundParams {
        m,
        c,
        alpha,
        c_lower,
        c_upper,
        c_max,
    })
}

/// Largest c for which threshold `alpha` stays feasible at exponent m
/// (inverts the feasibility inequality; no search needed).
pub fn max_feasible_c(model: &ModelSpec, m: f64, alpha: f64) -> Result<f64> {
    let (lo, hi) = admissible_m_interval(model)?;
    if !(m > lo && m < hi) {
        return Err(Error::InvalidParam(format!(
            "m = {m} outside the admissible interval ({lo}, {hi})"
        )));
    }
    if !(alpha > 0.0 && alpha < model.beta0.min(model.beta1)) {
        return Err(Error::InvalidParam(format!(
            "alpha = {alpha} must lie in (0, min(beta0, beta1))"
        )));
    }
    let quad = 0.5 * model.epsilon * model.epsilon * m * (m + 1.0) * model.mu_bound;
    let num = (m * model.b0 - quad).min(-m * model.b1 - quad);
    Ok(quad + num / (2.0 * alpha))
}

const BETA_SCAN: std::ops::RangeInclusive<usize> = 1..=25;

/// Built-in Wright-Fisher mutation model: B(x) = theta1*(1-x) - theta2*x,
/// sigma(x) = sqrt(x*(1-x)), mu_bound = 1. Envelope widths are scanned over
/// {0.01, ..., 0.25} to maximize the admissible m-window; the drift envelope
/// constants come from the closed form of the affine drift.
pub fn builtin_wf_mutation(theta1: f64, theta2: f64, epsilon: f64) -> Result<ModelSpec> {
    if !(theta1 > 0.0 && theta2 > 0.0) {
        return Err(Error::InvalidParam("theta1, theta2 must be positive".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParam("epsilon must be positive".into()));
    }
    let e2mu = epsilon * epsilon; // mu_bound = 1
    let drift = |x: f64| theta1 * (1.0 - x) - theta2 * x;

    // affine, decreasing drift: inf over [0, beta) is B(beta), sup over
    // (1-beta, 1] is B(1-beta)
    let mut best0: Option<(f64, f64)> = None; // (beta0, b0)
    let mut best1: Option<(f64, f64)> = None; // (beta1, b1)
    for k in BETA_SCAN {
        let beta = k as f64 / 100.0;
        let b0 = drift(beta);
        if b0 > 0.0 && 2.0 * b0 / e2mu - 1.0 > 0.0 {
            if best0.map_or(true, |(_, b)| b0 > b) {
                best0 = Some((beta, b0));
            }
        }
        let b1 = drift(1.0 - beta);
        if b1 < 0.0 && 2.0 * b1 / e2mu + 1.0 < 0.0 {
            if best1.map_or(true, |(_, b)| b1 < b) {
                best1 = Some((beta, b1));
            }
        }
    }
    let (beta0, b0) = best0.ok_or_else(|| {
        Error::InvalidModel(format!(
            "condition nonattain_lower unsatisfiable: 2*b0/(eps^2*mu) - 1 <= 0 \
             for every beta0 in the scan (theta1 = {theta1}, eps = {epsilon})"
        ))
    })?;
    let (beta1, b1) = best1.ok_or_else(|| {
        Error::InvalidModel(format!(
            "condition nonattain_upper unsatisfiable: 2*b1/(eps^2*mu) + 1 >= 0 \
             for every beta1 in the scan (theta2 = {theta2}, eps = {epsilon})"
        ))
    })?;

    let model = ModelSpec::new(
        Coefficient::WfDrift { theta1, theta2 },
        Coefficient::WfSigma,
        epsilon,
        1.0,
        beta0,
        b0,
        beta1,
        b1,
    )?;
    require_valid(&model)?;
    Ok(model)
}

/// Re-derives a valid envelope for `model` whose widths both exceed
/// `min_beta`, if one exists in the scan grid. The envelope is an analysis
/// artifact, not part of the SDE, so a wider (weaker) envelope may certify
/// thresholds the stored one cannot. Envelope constants are taken as grid
/// inf/sup of the drift.
pub fn widened_envelope(model: &ModelSpec, min_beta: f64) -> Result<ModelSpec> {
    let e2mu = model.epsilon * model.epsilon * model.mu_bound;
    for k in BETA_SCAN {
        let beta = k as f64 / 100.0;
        if beta <= min_beta {
            continue;
        }
        let grid = 2001;
        let mut b0 = f64::INFINITY;
        let mut b1 = f64::NEG_INFINITY;
        for i in 0..=grid {
            let xl = beta * i as f64 / grid as f64;
            b0 = b0.min(model.drift(xl));
            let xu = 1.0 - xl;
            b1 = b1.max(model.drift(xu));
        }
        if b0 > 0.0 && b1 < 0.0 && 2.0 * b0 / e2mu - 1.0 > 0.0 && 2.0 * b1 / e2mu + 1.0 < 0.0 {
            let candidate = ModelSpec::new(
                model.drift.clone(),
                model.sigma.clone(),
                model.epsilon,
                model.mu_bound,
                beta,
                b0,
                beta,
                b1,
            )?;
            if validate_envelope(&candidate, DEFAULT_GRID)?.passed {
                return Ok(candidate);
            }
        }
    }
    Err(Error::InvalidParam(format!(
        "no valid envelope with beta0, beta1 > {min_beta} exists in the scan grid"
    )))
}

/// Classical 1-D stationary density p(x) proportional to
/// exp(int_{1/2}^{x} 2B/(eps^2 sigma^2)) / (eps^2 sigma^2(x)),
/// normalized by adaptive quadrature on (delta, 1-delta). Serves as the
/// independent oracle for the estimators in the other modules.
pub struct StationaryDensity {
    model: ModelSpec,
    delta: f64,
    inner_tol: f64,
    norm: f64,
}

impl StationaryDensity {
    pub fn new(model: &ModelSpec, tol: f64) -> Result<Self> {
        require_valid(model)?;
        let delta = 1e-9;
        let inner_tol = (tol * 1e-2).min(1e-12);
        let mut d = StationaryDensity {
            model: model.clone(),
            delta,
            inner_tol,
            norm: 1.0,
        };
        let m = d.model.clone();
        let it = d.inner_tol;
        let norm = adaptive_simpson(
            &|x| Self::unnorm_static(&m, it, x),
            delta,
            1.0 - delta,
            tol,
        )?;
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Quadrature {
                achieved: f64::INFINITY,
                tol,
            });
        }
        d.norm = norm;
        Ok(d)
    }

    fn unnorm_static(model: &ModelSpec, inner_tol: f64, x: f64) -> f64 {
        let e2 = model.epsilon * model.epsilon;
        let lw = adaptive_simpson(
            &|y| 2.0 * model.drift(y) / (e2 * model.sigma2(y)),
            0.5,
            x,
            inner_tol,
        )
        .unwrap_or(f64::NAN);
        lw.exp() / (e2 * model.sigma2(x))
    }

    /// Normalized density at x in (0,1).
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::InvalidParam(format!("x = {x} outside (0,1)")));
        }
        let v = Self::unnorm_static(&self.model, self.inner_tol, x) / self.norm;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Quadrature {
                achieved: f64::INFINITY,
                tol: self.inner_tol,
            })
        }
    }

    /// Probability mass of each bin defined by `edges` (ascending, inside
    /// [0,1]). Masses are normalized quadrature integrals of the density.
    pub fn bin_masses(&self, edges: &[f64]) -> Result<Vec<f64>> {
        if edges.len() < 2 {
            return Err(Error::InvalidParam("need at least two bin edges".into()));
        }
        let mut out = Vec::with_capacity(edges.len() - 1);
        let tol = 1e-10;
        for w in edges.windows(2) {
            let lo = w[0].max(self.delta);
            let hi = w[1].min(1.0 - self.delta);
            if !(hi > lo) {
                out.push(0.0);
                continue;
            }
            let m = self.model.clone();
            let it = self.inner_tol;
            let mass =
                adaptive_simpson(&|x| Self::unnorm_static(&m, it, x), lo, hi, tol * self.norm)?
                    / self.norm;
            out.push(mass.max(0.0));
        }
        Ok(out)
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }
}
