//! Adaptive implicit integration with dense output and section-crossing
//! detection, plus a brute-force fixed-step oracle used by tests.

mod linalg;
mod oracle;
mod radau;
mod trajectory;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{LinearLorenzParams, NeutralParams, State};
use radau::{eval_collocation, RadauStepper, StepOutput};

pub use oracle::{integrate_oracle, integrate_oracle_raw};
pub use trajectory::{fmt_full, StopReason, Trajectory};

const MAX_DIM: usize = 4;

/// Errors raised by the integrators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("field dimension {field} does not match state dimension {state}")]
    DimensionMismatch { field: usize, state: usize },
    #[error("implicit stages stopped converging at t = {t} with the step floored at {h}")]
    StiffnessFailure { t: f64, h: f64 },
    #[error("step budget of {budget} exceeded at t = {t}")]
    BudgetExceeded { budget: usize, t: f64 },
    #[error("no section crossing before max_time = {max_time}")]
    NoCrossing { max_time: f64 },
    #[error("event function vanishes at the initial state")]
    EventAtStart,
    #[error("state became non-finite at t = {t}")]
    NumericalOverflow { t: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Right-hand side of an autonomous first-order system on up to 4 coordinates.
pub trait OdeField {
    fn dim(&self) -> usize;
    fn eval(&self, s: &[f64], out: &mut [f64]);
}

/// Field with a hand-coded Jacobian, as the implicit stages require.
pub trait OdeFieldJac: OdeField {
    fn jacobian(&self, s: &[f64], jac: &mut [[f64; 4]; 4]);
}

impl OdeField for NeutralParams {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        self.eval_raw(s, out);
    }
}

impl OdeFieldJac for NeutralParams {
    fn jacobian(&self, s: &[f64], jac: &mut [[f64; 4]; 4]) {
        self.jacobian_raw(s, jac);
    }
}

impl OdeField for LinearLorenzParams {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        self.eval_raw(s, out);
    }
}

impl OdeFieldJac for LinearLorenzParams {
    fn jacobian(&self, s: &[f64], jac: &mut [[f64; 4]; 4]) {
        self.jacobian_raw(s, jac);
    }
}

/// Neutral field augmented with the running integral of
/// `c0 x^2 + c2 z^2` along the orbit (last coordinate).
pub struct AugmentedQ<'a> {
    params: &'a NeutralParams,
}

impl<'a> AugmentedQ<'a> {
    pub fn new(params: &'a NeutralParams) -> Self {
        AugmentedQ { params }
    }
}

impl OdeField for AugmentedQ<'_> {
    fn dim(&self) -> usize {
        self.params.dim() + 1
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        let d = self.params.dim();
        self.params.eval_raw(&s[..d], &mut out[..d]);
        let x = s[0];
        let z = s[2];
        out[d] = self.params.c0() * x * x + self.params.c2() * z * z;
    }
}

impl OdeFieldJac for AugmentedQ<'_> {
    fn jacobian(&self, s: &[f64], jac: &mut [[f64; 4]; 4]) {
        let d = self.params.dim();
        self.params.jacobian_raw(&s[..d], jac);
        jac[d][0] = 2.0 * self.params.c0() * s[0];
        jac[d][2] = 2.0 * self.params.c2() * s[2];
    }
}

/// Time reparametrization under which the expanding coordinate moves at unit
/// exponential rate: the field is divided by the (positive) bracket of its
/// x-equation, and an extra last coordinate accumulates the original flow
/// time. Exit times become known in closed form, which makes this the
/// reference field for fixed-step oracle runs.
pub struct UnitXRescaled<'a> {
    params: &'a NeutralParams,
}

impl<'a> UnitXRescaled<'a> {
    pub fn new(params: &'a NeutralParams) -> Self {
        UnitXRescaled { params }
    }

    fn bracket(&self, s: &[f64]) -> f64 {
        let p = self.params;
        if p.dim() == 2 {
            p.a0() * s[0] * s[0] + p.a2() * s[1] * s[1]
        } else {
            p.a0() * s[0] * s[0] + p.a1() * s[1] * s[1] + p.a2() * s[2] * s[2]
        }
    }
}

impl OdeField for UnitXRescaled<'_> {
    fn dim(&self) -> usize {
        self.params.dim() + 1
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        let d = self.params.dim();
        let phi = self.bracket(&s[..d]);
        self.params.eval_raw(&s[..d], &mut out[..d]);
        for v in out.iter_mut().take(d) {
            *v /= phi;
        }
        out[d] = 1.0 / phi;
    }
}

/// Integration controls. All tolerances are positive; `min_step < max_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_time: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub max_steps: usize,
    pub event_tol: f64,
}

impl IntegratorConfig {
    /// Builds a config around a tolerance pair; the Newton threshold follows
    /// the usual rule `max(10 eps / rel_tol, min(0.03, sqrt(rel_tol)))` so
    /// stage errors stay below the truncation error.
    pub fn for_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        let newton_tol = (10.0 * f64::EPSILON / rel_tol).max(rel_tol.sqrt().min(0.03));
        IntegratorConfig {
            rel_tol,
            abs_tol,
            max_step: 1e6,
            min_step: 1e-13,
            max_time: 1e7,
            newton_tol,
            newton_max_iters: 7,
            max_steps: 10_000_000,
            event_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("min_step", self.min_step),
            ("max_time", self.max_time),
            ("newton_tol", self.newton_tol),
            ("event_tol", self.event_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(OdeError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.min_step >= self.max_step {
            return Err(OdeError::InvalidConfig(format!(
                "min_step {} must be below max_step {}",
                self.min_step, self.max_step
            )));
        }
        if self.newton_max_iters == 0 || self.max_steps == 0 {
            return Err(OdeError::InvalidConfig(
                "iteration budgets must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::for_tolerances(1e-10, 1e-12)
    }
}

/// Which sign changes of the event function count as crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    Decreasing,
    Increasing,
    Any,
}

/// Scalar event function over raw coordinates plus a crossing direction.
#[derive(Clone)]
pub struct SectionSpec {
    g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub direction: CrossingDirection,
}

impl SectionSpec {
    pub fn new(
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        direction: CrossingDirection,
    ) -> Self {
        SectionSpec {
            g: Arc::new(g),
            direction,
        }
    }

    /// Section `{ x = c }`, i.e. event function `x - c`.
    pub fn plane_x(c: f64, direction: CrossingDirection) -> Self {
        SectionSpec::new(move |s: &[f64]| s[0] - c, direction)
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        (self.g)(s)
    }

    fn crossed(&self, g_prev: f64, g_new: f64) -> bool {
        match self.direction {
            CrossingDirection::Decreasing => g_prev > 0.0 && g_new <= 0.0,
            CrossingDirection::Increasing => g_prev < 0.0 && g_new >= 0.0,
            CrossingDirection::Any => {
                (g_prev > 0.0 && g_new <= 0.0) || (g_prev < 0.0 && g_new >= 0.0)
            }
        }
    }
}

/// A located section crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionHit {
    pub t_hit: f64,
    pub s_hit: State,
    pub residual: f64,
}

/// Crossing data on raw coordinates (used for augmented systems).
#[derive(Debug, Clone, PartialEq)]
pub struct RawHit {
    pub t_hit: f64,
    pub y_hit: [f64; 4],
    pub residual: f64,
}

fn check_initial(dim: usize, y0: &[f64]) -> Result<(), OdeError> {
    if y0.len() != dim {
        return Err(OdeError::DimensionMismatch {
            field: dim,
            state: y0.len(),
        });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::InvalidConfig("initial state is not finite".into()));
    }
    Ok(())
}

/// Integrates over `[0, t_end]` with adaptive implicit steps. The local error
/// per step is bounded by the configured tolerances; the final node lands on
/// `t_end` exactly.
pub fn integrate_raw<F: OdeFieldJac + ?Sized>(
    field: &F,
    y0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, OdeError> {
    cfg.validate()?;
    let dim = field.dim();
    check_initial(dim, y0)?;
    if !(t_end >= 0.0) {
        return Err(OdeError::InvalidConfig(format!(
            "t_end must be nonnegative, got {t_end}"
        )));
    }
    let mut start = [0.0; MAX_DIM];
    start[..dim].copy_from_slice(y0);
    let mut traj = Trajectory::new_collocation(dim, 0.0, start);
    if t_end == 0.0 {
        return Ok(traj);
    }
    let mut stepper = RadauStepper::new(field, cfg, 0.0, y0)?;
    while stepper.t < t_end {
        let out = stepper.advance(t_end)?;
        traj.push_collocation(stepper.t, out.y1, out.z);
    }
    traj.set_stop(StopReason::Completed);
    Ok(traj)
}

/// State-typed wrapper of [`integrate_raw`] for 2- and 3-dimensional fields.
pub fn integrate<F: OdeFieldJac>(
    field: &F,
    s0: &State,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, OdeError> {
    integrate_raw(field, s0.as_slice(), t_end, cfg)
}

/// Integrates until the first sign change of the event function in the
/// requested direction, then localizes the crossing on the dense output by a
/// bisection–secant hybrid and lands a final implicit step on it. Fails with
/// [`OdeError::NoCrossing`] when `max_time` is exhausted.
pub fn integrate_to_section_raw<F: OdeFieldJac + ?Sized>(
    field: &F,
    y0: &[f64],
    sec: &SectionSpec,
    cfg: &IntegratorConfig,
) -> Result<(RawHit, Trajectory), OdeError> {
    cfg.validate()?;
    let dim = field.dim();
    check_initial(dim, y0)?;
    let g0 = sec.eval(y0);
    if g0 == 0.0 {
        return Err(OdeError::EventAtStart);
    }
    let mut start = [0.0; MAX_DIM];
    start[..dim].copy_from_slice(y0);
    let mut traj = Trajectory::new_collocation(dim, 0.0, start);
    let mut stepper = RadauStepper::new(field, cfg, 0.0, y0)?;
    let mut g_prev = g0;
    while stepper.t < cfg.max_time {
        let out = stepper.advance(cfg.max_time)?;
        let t1 = stepper.t;
        let g1 = sec.eval(&out.y1[..dim]);
        if sec.crossed(g_prev, g1) {
            let hit = locate_hit(&stepper, sec, &out, g_prev, g1, cfg, dim, &mut traj);
            traj.set_stop(StopReason::SectionHit);
            return Ok((hit, traj));
        }
        traj.push_collocation(t1, out.y1, out.z);
        g_prev = g1;
    }
    Err(OdeError::NoCrossing {
        max_time: cfg.max_time,
    })
}

/// State-typed wrapper of [`integrate_to_section_raw`].
pub fn integrate_to_section<F: OdeFieldJac>(
    field: &F,
    s0: &State,
    sec: &SectionSpec,
    cfg: &IntegratorConfig,
) -> Result<(SectionHit, Trajectory), OdeError> {
    let (raw, traj) = integrate_to_section_raw(field, s0.as_slice(), sec, cfg)?;
    Ok((
        SectionHit {
            t_hit: raw.t_hit,
            s_hit: State::from_slice(&raw.y_hit[..field.dim()]),
            residual: raw.residual,
        },
        traj,
    ))
}

/// Bisection–secant localization on the dense output, followed by a forced
/// implicit restep that lands the trajectory exactly on the crossing.
#[allow(clippy::too_many_arguments)]
fn locate_hit<F: OdeFieldJac + ?Sized>(
    stepper: &RadauStepper<'_, F>,
    sec: &SectionSpec,
    out: &StepOutput,
    g_start: f64,
    g_end: f64,
    cfg: &IntegratorConfig,
    dim: usize,
    traj: &mut Trajectory,
) -> RawHit {
    let gd = |theta: f64| -> f64 {
        let mut buf = [0.0; MAX_DIM];
        eval_collocation(&out.y0, &out.z, theta, dim, &mut buf);
        sec.eval(&buf[..dim])
    };
    let (theta, _) = hybrid_root(gd, 0.0, 1.0, g_start, g_end, cfg.event_tol);

    // Polish on the true solution: secant in step size, each probe being one
    // forced implicit step from the segment start.
    let mut h_lo = 0.0;
    let mut g_lo = g_start;
    let mut h_hi = out.h;
    let mut g_hi = g_end;
    let mut h_try = (theta * out.h).clamp(f64::MIN_POSITIVE, out.h);
    let mut best: Option<(f64, StepOutput, f64)> = None;
    for _ in 0..30 {
        let probe = match stepper.forced_step(out.t0, &out.y0, h_try) {
            Some(p) => p,
            None => break,
        };
        let g = sec.eval(&probe.y1[..dim]);
        let g_abs = g.abs();
        if best.as_ref().map_or(true, |(_, _, b)| g_abs < *b) {
            best = Some((h_try, probe.clone(), g_abs));
        }
        if g_abs <= cfg.event_tol {
            break;
        }
        if g.signum() == g_lo.signum() {
            h_lo = h_try;
            g_lo = g;
        } else {
            h_hi = h_try;
            g_hi = g;
        }
        if (h_hi - h_lo) <= 1e-15 * out.h {
            break;
        }
        let secant = h_hi - g_hi * (h_hi - h_lo) / (g_hi - g_lo);
        h_try = if secant.is_finite() && secant > h_lo && secant < h_hi {
            secant
        } else {
            0.5 * (h_lo + h_hi)
        };
    }

    match best {
        Some((h_star, probe, residual)) if residual <= cfg.event_tol || theta <= 0.0 => {
            let t_hit = out.t0 + h_star;
            traj.push_collocation(t_hit, probe.y1, probe.z);
            RawHit {
                t_hit,
                y_hit: probe.y1,
                residual,
            }
        }
        Some((h_star, probe, residual)) => {
            // Polishing stalled above the tolerance: fall back to whichever of
            // the restep endpoint and the dense-output point is better.
            let mut buf = [0.0; MAX_DIM];
            eval_collocation(&out.y0, &out.z, theta, dim, &mut buf);
            let dense_res = sec.eval(&buf[..dim]).abs();
            if residual <= dense_res {
                let t_hit = out.t0 + h_star;
                traj.push_collocation(t_hit, probe.y1, probe.z);
                RawHit {
                    t_hit,
                    y_hit: probe.y1,
                    residual,
                }
            } else {
                traj.push_collocation(out.t0 + out.h, out.y1, out.z);
                RawHit {
                    t_hit: out.t0 + theta * out.h,
                    y_hit: buf,
                    residual: dense_res,
                }
            }
        }
        None => {
            // Restep never converged; report the dense-output crossing inside
            // the accepted step.
            let mut buf = [0.0; MAX_DIM];
            eval_collocation(&out.y0, &out.z, theta, dim, &mut buf);
            let residual = sec.eval(&buf[..dim]).abs();
            traj.push_collocation(out.t0 + out.h, out.y1, out.z);
            RawHit {
                t_hit: out.t0 + theta * out.h,
                y_hit: buf,
                residual,
            }
        }
    }
}

/// Root of a scalar function on a bracketing interval by a bisection–secant
/// hybrid, run until `|g| <= tol` or the bracket collapses.
fn hybrid_root(
    g: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    mut g_lo: f64,
    mut g_hi: f64,
    tol: f64,
) -> (f64, f64) {
    if g_hi == 0.0 {
        return (hi, 0.0);
    }
    let mut best = (hi, g_hi.abs());
    for _ in 0..80 {
        let secant = hi - g_hi * (hi - lo) / (g_hi - g_lo);
        let mid = if secant.is_finite() && secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        let gm = g(mid);
        if gm.abs() < best.1 {
            best = (mid, gm.abs());
        }
        if gm.abs() <= tol {
            return (mid, gm.abs());
        }
        if gm.signum() == g_lo.signum() {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    best
}
