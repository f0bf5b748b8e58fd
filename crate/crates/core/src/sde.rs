//! Boundary-safe numerical integration of the diffusion, stopping-time
//! detection, and the independent-pair simulation used by the intersection
//! coupling. All kernels are pure given (model, cfg, stream).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::{substream, substream_lane};

pub const DEFAULT_MAX_HALVINGS: u32 = 24;
pub const DEFAULT_GUARD: f64 = 1e-12;
pub const DEFAULT_MEET_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    /// Base step size.
    pub dt: f64,
    /// Hard horizon; runs reaching it are censored, never dropped.
    pub t_max: f64,
    /// Adaptive step-halving depth near the boundaries.
    pub max_halvings: u32,
    /// Master seed; combined with a stream index per replica.
    pub seed: u64,
    /// Keep every k-th accepted step in Path output.
    pub record_stride: usize,
    /// Proposals within `guard` of {0,1} count as breaches.
    pub guard: f64,
    /// Meeting tolerance for the pair simulation.
    pub meet_tol: f64,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, seed: u64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam("dt must be positive".into()));
        }
        if !(t_max >= 0.0) {
            return Err(Error::InvalidParam("t_max must be nonnegative".into()));
        }
        if t_max > 0.0 && !(dt < t_max) {
            return Err(Error::InvalidParam("dt must be smaller than t_max".into()));
        }
        let cfg = SimConfig {
            dt,
            t_max,
            max_halvings: DEFAULT_MAX_HALVINGS,
            seed,
            record_stride: 1,
            guard: DEFAULT_GUARD,
            meet_tol: DEFAULT_MEET_TOL,
        };
        // effective minimum step must stay positive
        if cfg.dt * 0.5f64.powi(cfg.max_halvings as i32) <= 0.0 {
            return Err(Error::InvalidParam("dt underflows at max halving depth".into()));
        }
        Ok(cfg)
    }

    pub fn with_horizon(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A recorded trajectory; every retained state lies strictly inside (0,1).
#[derive(Clone, Debug)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
}

/// Stopping rules. `alpha` thresholds follow the hitting-time definitions:
/// rise to alpha, fall to 1-alpha, enter the central interval, or the
/// two-sided exit used by the non-attainability experiment.
#[derive(Clone, Copy, Debug)]
pub enum StopRule {
    /// Fires when X >= alpha.
    ReachAbove(f64),
    /// Fires when X <= level.
    ReachBelow(f64),
    /// Fires when alpha <= X <= 1-alpha.
    EnterCentral(f64),
    /// Fires when X <= lo or X >= hi.
    ExitInterval(f64, f64),
}

impl StopRule {
    #[inline]
    pub fn fires(&self, x: f64) -> bool {
        match *self {
            StopRule::ReachAbove(a) => x >= a,
            StopRule::ReachBelow(l) => x <= l,
            StopRule::EnterCentral(a) => x >= a && x <= 1.0 - a,
            StopRule::ExitInterval(lo, hi) => x <= lo || x >= hi,
        }
    }

    fn kind(&self) -> HitKind {
        match self {
            StopRule::ReachAbove(_) => HitKind::TAlpha,
            StopRule::ReachBelow(_) => HitKind::TAlphaPrime,
            StopRule::EnterCentral(_) => HitKind::THat,
            StopRule::ExitInterval(_, _) => HitKind::TwoSidedExit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitKind {
    TAlpha,
    TAlphaPrime,
    THat,
    T1,
    T2,
    TwoSidedExit,
}

impl HitKind {
    pub fn label(&self) -> &'static str {
        match self {
            HitKind::TAlpha => "T_alpha",
            HitKind::TAlphaPrime => "T_alpha_prime",
            HitKind::THat => "T_hat",
            HitKind::T1 => "T1",
            HitKind::T2 => "T2",
            HitKind::TwoSidedExit => "two_sided_exit",
        }
    }
}

/// One realized stopping time at grid resolution.
#[derive(Clone, Copy, Debug)]
pub struct HittingSample {
    pub kind: HitKind,
    pub value: f64,
    pub censored: bool,
    pub exit_state: f64,
}

/// One realized meeting time of two independent copies.
#[derive(Clone, Copy, Debug)]
pub struct CouplingSample {
    pub l: f64,
    pub censored: bool,
}

/// One Euler-Maruyama update; no boundary handling at this level.
#[inline]
pub fn em_step(model: &ModelSpec, x: f64, h: f64, z: f64) -> f64 {
    x + model.drift(x) * h + model.epsilon * model.sigma(x) * h.sqrt() * z
}

/// Largest dyadic fraction of `h_target` that resolves the dynamics at x:
/// both the drift move and the noise standard deviation must stay below
/// half the distance to the nearer boundary. Without this cap a path near
/// the boundary is charged a full step of occupation time at a level the
/// true process leaves almost instantly, which inflates singular
/// occupation integrals (x^{-m-1}) by orders of magnitude.
#[inline]
fn resolved_step(model: &ModelSpec, cfg: &SimConfig, x: f64, h_target: f64) -> f64 {
    let d = x.min(1.0 - x);
    let s2 = model.epsilon * model.epsilon * model.sigma2(x);
    let b = model.drift(x).abs();
    let mut cap = h_target;
    if s2 > 0.0 {
        cap = cap.min(0.25 * d * d / s2);
    }
    if b > 0.0 {
        cap = cap.min(0.5 * d / b);
    }
    let mut h = h_target;
    let mut depth = 0;
    while h > cap && depth < cfg.max_halvings {
        h *= 0.5;
        depth += 1;
    }
    h
}

/// Advances one accepted step of target size `h_target`, retrying with
/// halved step and fresh noise while the proposal leaves (guard, 1-guard).
/// The step starts from the resolution cap of the current state, so the
/// shrinkage is deterministic and consumes no randomness. Returns
/// (new state, step actually taken).
#[inline]
fn advance(
    model: &ModelSpec,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    t: f64,
    x: f64,
    h_target: f64,
) -> Result<(f64, f64)> {
    let mut h = resolved_step(model, cfg, x, h_target);
    let mut last = x;
    for _ in 0..=cfg.max_halvings {
        let z: f64 = rng.sample(StandardNormal);
        let y = em_step(model, x, h, z);
        if y > cfg.guard && y < 1.0 - cfg.guard {
            return Ok((y, h));
        }
        last = y;
        h *= 0.5;
    }
    Err(Error::BoundaryBreach {
        t,
        x: last,
        guard: cfg.guard,
        halvings: cfg.max_halvings,
    })
}

/// Simulates up to t_max, recording every `record_stride`-th accepted step.
/// Fully determined by (cfg.seed, stream).
pub fn simulate_path(model: &ModelSpec, x0: f64, cfg: &SimConfig, stream: u64) -> Result<Path> {
    check_x0(x0)?;
    let mut rng = substream(cfg.seed, stream);
    let mut times = vec![0.0];
    let mut states = vec![x0];
    let mut t = 0.0;
    let mut x = x0;
    let mut step_idx: usize = 0;
    let stride = cfg.record_stride.max(1);
    while t < cfg.t_max - 1e-12 {
        let h_target = cfg.dt.min(cfg.t_max - t);
        let (y, h) = advance(model, cfg, &mut rng, t, x, h_target)?;
        t += h;
        x = y;
        step_idx += 1;
        if step_idx % stride == 0 || t >= cfg.t_max - 1e-12 {
            times.push(t);
            states.push(x);
        }
    }
    Ok(Path { times, states })
}

/// Core hitting loop. `observe(x_left, h)` is called once per accepted step
/// with the pre-step state (left-endpoint accrual for path integrals and
/// occupation counts). Time is measured from the call, not from any earlier
/// phase; the caller owns clock composition.
pub fn run_until<F: FnMut(f64, f64)>(
    model: &ModelSpec,
    x0: f64,
    rule: StopRule,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut observe: F,
) -> Result<HittingSample> {
    check_x0(x0)?;
    if rule.fires(x0) {
        return Ok(HittingSample {
            kind: rule.kind(),
            value: 0.0,
            censored: false,
            exit_state: x0,
        });
    }
    let mut t = 0.0;
    let mut x = x0;
    while t < cfg.t_max - 1e-12 {
        let h_target = cfg.dt.min(cfg.t_max - t);
        let (y, h) = advance(model, cfg, rng, t, x, h_target)?;
        observe(x, h);
        t += h;
        x = y;
        if rule.fires(x) {
            return Ok(HittingSample {
                kind: rule.kind(),
                value: t,
                censored: false,
                exit_state: x,
            });
        }
    }
    Ok(HittingSample {
        kind: rule.kind(),
        value: cfg.t_max,
        censored: true,
        exit_state: x,
    })
}

/// First time the discrete state satisfies `rule`, censored at t_max.
pub fn first_hitting(
    model: &ModelSpec,
    x0: f64,
    rule: StopRule,
    cfg: &SimConfig,
    stream: u64,
) -> Result<HittingSample> {
    let mut rng = substream(cfg.seed, stream);
    run_until(model, x0, rule, cfg, &mut rng, |_, _| {})
}

/// Runs two independent copies of the SDE (substream lanes 0 and 1 of
/// `stream`) from x0 and y0 until their paths intersect: first accepted
/// common time where X-Y changes sign or |X-Y| falls below meet_tol.
pub fn simulate_pair_to_meeting(
    model: &ModelSpec,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
    stream: u64,
) -> Result<CouplingSample> {
    check_x0(x0)?;
    check_x0(y0)?;
    if (x0 - y0).abs() <= cfg.meet_tol {
        return Ok(CouplingSample {
            l: 0.0,
            censored: false,
        });
    }
    let mut rng_x = substream_lane(cfg.seed, stream, 0);
    let mut rng_y = substream_lane(cfg.seed, stream, 1);
    let mut t = 0.0;
    let mut x = x0;
    let mut y = y0;
    while t < cfg.t_max - 1e-12 {
        // both copies advance on a common grid so the sign test compares
        // states at the same time; a breach on either side halves both
        let h_target = cfg.dt.min(cfg.t_max - t);
        let mut h = resolved_step(model, cfg, x, h_target)
            .min(resolved_step(model, cfg, y, h_target));
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let zx: f64 = rng_x.sample(StandardNormal);
            let zy: f64 = rng_y.sample(StandardNormal);
            let xp = em_step(model, x, h, zx);
            let yp = em_step(model, y, h, zy);
            let inside = |v: f64| v > cfg.guard && v < 1.0 - cfg.guard;
            if inside(xp) && inside(yp) {
                accepted = Some((xp, yp, h));
                break;
            }
            h *= 0.5;
        }
        let (xp, yp, h) = accepted.ok_or(Error::BoundaryBreach {
            t,
            x: x.min(y),
            guard: cfg.guard,
            halvings: cfg.max_halvings,
        })?;
        t += h;
        let met = (xp - yp) * (x - y) <= 0.0 || (xp - yp).abs() <= cfg.meet_tol;
        x = xp;
        y = yp;
        if met {
            return Ok(CouplingSample {
                l: t,
                censored: false,
            });
        }
    }
    Ok(CouplingSample {
        l: cfg.t_max,
        censored: true,
    })
}

fn check_x0(x0: f64) -> Result<()> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::InvalidParam(format!("x0 = {x0} outside (0,1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_wf_mutation, Coefficient, ModelSpec};

    fn wf() -> ModelSpec {
        builtin_wf_mutation(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn em_step_hand_arithmetic() {
        // x=0.1, B=0.8, sigma=0.3, eps=1, h=0.01, z=1 -> 0.138
        let model = ModelSpec::new(
            Coefficient::Expr(crate::expr::Expr::parse("0.8").unwrap()),
            Coefficient::Expr(crate::expr::Expr::parse("0.3").unwrap()),
            1.0,
            1.0,
            0.1,
            0.8,
            0.1,
            -0.8,
        )
        .unwrap();
        let y = em_step(&model, 0.1, 0.01, 1.0);
        assert!((y - 0.138).abs() < 1e-15);
    }

    #[test]
    fn em_step_drift_fixed_point() {
        let model = wf();
        // symmetric WF drift vanishes at 1/2
        assert_eq!(em_step(&model, 0.5, 0.37, 0.0), 0.5);
    }

    #[test]
    fn zero_horizon_path_is_initial_point() {
        let cfg = SimConfig::new(0.01, 1.0, 1).unwrap().with_horizon(0.0);
        let p = simulate_path(&wf(), 0.3, &cfg, 0).unwrap();
        assert_eq!(p.times, vec![0.0]);
        assert_eq!(p.states, vec![0.3]);
    }

    #[test]
    fn paths_are_bit_deterministic() {
        let cfg = SimConfig::new(1e-3, 2.0, 99).unwrap();
        let a = simulate_path(&wf(), 0.2, &cfg, 5).unwrap();
        let b = simulate_path(&wf(), 0.2, &cfg, 5).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
        let c = simulate_path(&wf(), 0.2, &cfg, 6).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn path_states_stay_inside_unit_interval() {
        let cfg = SimConfig::new(1e-3, 5.0, 7).unwrap();
        for stream in 0..20 {
            let p = simulate_path(&wf(), 0.05, &cfg, stream).unwrap();
            assert!(p.states.iter().all(|&x| x > 0.0 && x < 1.0));
            for w in p.times.windows(2) {
                assert!(w[1] > w[0]);
            }
        }
    }

    #[test]
    fn hitting_trivial_when_rule_already_satisfied() {
        let cfg = SimConfig::new(1e-3, 1.0, 3).unwrap();
        let s = first_hitting(&wf(), 0.3, StopRule::ReachAbove(0.2), &cfg, 0).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(!s.censored);
        assert_eq!(s.exit_state, 0.3);
    }

    #[test]
    fn hitting_censors_at_horizon() {
        // rule that essentially cannot fire in 0.01 time units
        let cfg = SimConfig::new(1e-3, 0.01, 3).unwrap();
        let s = first_hitting(&wf(), 0.5, StopRule::ReachBelow(0.01), &cfg, 0).unwrap();
        assert!(s.censored);
        assert_eq!(s.value, 0.01);
    }

    #[test]
    fn pair_meets_instantly_when_equal() {
        let cfg = SimConfig::new(1e-3, 1.0, 3).unwrap();
        let s = simulate_pair_to_meeting(&wf(), 0.4, 0.4, &cfg, 0).unwrap();
        assert_eq!(s.l, 0.0);
    }

    #[test]
    fn pair_meeting_deterministic_and_positive() {
        let cfg = SimConfig::new(1e-3, 50.0, 11).unwrap();
        let a = simulate_pair_to_meeting(&wf(), 0.1, 0.9, &cfg, 2).unwrap();
        let b = simulate_pair_to_meeting(&wf(), 0.1, 0.9, &cfg, 2).unwrap();
        assert_eq!(a.l, b.l);
        assert!(a.l > 0.0 && !a.censored);
    }

    #[test]
    fn occupation_observer_accrues_total_duration() {
        let cfg = SimConfig::new(1e-3, 20.0, 21).unwrap();
        let mut rng = crate::rng::substream(cfg.seed, 0);
        let mut total = 0.0;
        let s = run_until(
            &wf(),
            0.5,
            StopRule::ExitInterval(0.2, 0.8),
            &cfg,
            &mut rng,
            |_, h| total += h,
        )
        .unwrap();
        assert!(!s.censored);
        assert!((total - s.value).abs() < 1e-9);
    }
}
