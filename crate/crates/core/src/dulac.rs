//! Transition maps from the unstable leaf to the stable leaf and their exit
//! times, computed by integrating the normal-form flow to the section
//! `{ x = +-1 }`, plus the leading-order power-law predictions they are
//! compared against.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{NeutralParams, State};
use crate::ode::{
    fmt_full, integrate_to_section_raw, AugmentedQ, CrossingDirection, IntegratorConfig, OdeError,
    SectionHit, SectionSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DulacError {
    #[error("initial coordinate must satisfy 0 < |x0| <= 1, got {0}")]
    InvalidX0(f64),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("all {0} sweep points failed")]
    SweepFailure(usize),
    #[error("constants of the asymptotic prediction must be positive")]
    NonPositiveConstant,
    #[error("integration failed at x0 = {x0}: {source}")]
    Integration { x0: f64, source: OdeError },
}

impl DulacError {
    /// Short machine-readable status code for CSV export.
    pub fn status_code(&self) -> &'static str {
        match self {
            DulacError::Integration { source, .. } => match source {
                OdeError::StiffnessFailure { .. } => "stiffness_failure",
                OdeError::BudgetExceeded { .. } => "budget_exceeded",
                OdeError::NoCrossing { .. } => "no_crossing",
                OdeError::NumericalOverflow { .. } => "overflow",
                _ => "integration_error",
            },
            DulacError::InvalidX0(_) => "invalid_x0",
            _ => "error",
        }
    }
}

/// Where the connecting orbit starts transversally to the sweep coordinate.
///
/// In two dimensions the initial point is `(x0, y0)`; in three dimensions it
/// is `(x0, y0, z0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafAnchors {
    pub y0: f64,
    pub z0: f64,
}

impl Default for LeafAnchors {
    fn default() -> Self {
        LeafAnchors { y0: 1.0, z0: 1.0 }
    }
}

/// One transition-map evaluation: exit point, exit coordinate and exit time.
#[derive(Debug, Clone, PartialEq)]
pub struct DulacSample {
    pub x0: f64,
    pub y0: f64,
    /// `None` for the planar model.
    pub z0: Option<f64>,
    pub exit: SectionHit,
    /// Exit coordinate transversal to the stable leaf: the contracting
    /// coordinate of the exit state (`y` in 2-D, `z` in 3-D).
    pub omega: f64,
    /// Exit (flow) time.
    pub tau: f64,
    /// Integral of `c0 x^2 + c2 z^2` along the orbit; zero without c-terms.
    pub q: f64,
}

/// Leading-order power laws for the exit coordinate and the exit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticPrediction {
    pub omega_pred: f64,
    pub tau_pred: f64,
}

/// Evaluates `omega_pred = c |x0|^beta` and `tau_pred = c_t |x0|^(-1/beta2)`.
pub fn predict(
    params: &NeutralParams,
    x0: f64,
    c: f64,
    c_t: f64,
) -> Result<AsymptoticPrediction, DulacError> {
    if !(c > 0.0) || !(c_t > 0.0) {
        return Err(DulacError::NonPositiveConstant);
    }
    if x0 == 0.0 || !x0.is_finite() {
        return Err(DulacError::InvalidX0(x0));
    }
    let e = params.derived_exponents();
    Ok(AsymptoticPrediction {
        omega_pred: c * x0.abs().powf(e.beta),
        tau_pred: c_t * x0.abs().powf(-1.0 / e.beta2),
    })
}

/// Time budget for one connecting orbit. Exit times blow up like
/// `|x0|^(-1/beta2)`, so the cap must scale with the prediction; the factor
/// of ten leaves room for the unknown multiplicative constant.
fn time_budget(x0: f64, beta2: f64, cfg: &IntegratorConfig) -> f64 {
    (100.0 + 10.0 * x0.abs().powf(-1.0 / beta2)).min(cfg.max_time)
}

/// Flows one point of the unstable leaf to the stable leaf `{ x = sign(x0) }`
/// and records the exit coordinate, the exit time, and (when the model has
/// c-terms) the accumulated correction integral.
pub fn dulac_map(
    params: &NeutralParams,
    x0: f64,
    anchors: &LeafAnchors,
    cfg: &IntegratorConfig,
) -> Result<DulacSample, DulacError> {
    if !(x0.abs() > 0.0 && x0.abs() <= 1.0) || !x0.is_finite() {
        return Err(DulacError::InvalidX0(x0));
    }
    let dim = params.dim();
    let z0 = (dim == 3).then_some(anchors.z0);

    // Points already on the section exit immediately.
    if x0.abs() == 1.0 {
        let s_hit = if dim == 2 {
            State::two_d(x0, anchors.y0)
        } else {
            State::three_d(x0, anchors.y0, anchors.z0)
        };
        let omega = if dim == 2 { anchors.y0 } else { anchors.z0 };
        return Ok(DulacSample {
            x0,
            y0: anchors.y0,
            z0,
            exit: SectionHit {
                t_hit: 0.0,
                s_hit,
                residual: 0.0,
            },
            omega,
            tau: 0.0,
            q: 0.0,
        });
    }

    let exponents = params.derived_exponents();
    let mut run_cfg = *cfg;
    run_cfg.max_time = time_budget(x0, exponents.beta2, cfg);

    let section = SectionSpec::plane_x(x0.signum(), CrossingDirection::Any);
    let mut start = [0.0f64; 4];
    start[0] = x0;
    start[1] = anchors.y0;
    if dim == 3 {
        start[2] = anchors.z0;
    }

    let failed = |source: OdeError| DulacError::Integration { x0, source };
    let (hit, omega, q) = if params.has_c_terms() {
        let aug = AugmentedQ::new(params);
        let (raw, _) = integrate_to_section_raw(&aug, &start[..dim + 1], &section, &run_cfg)
            .map_err(failed)?;
        let s_hit = State::from_slice(&raw.y_hit[..dim]);
        (
            SectionHit {
                t_hit: raw.t_hit,
                s_hit,
                residual: raw.residual,
            },
            raw.y_hit[dim - 1],
            raw.y_hit[dim],
        )
    } else {
        let (raw, _) =
            integrate_to_section_raw(params, &start[..dim], &section, &run_cfg).map_err(failed)?;
        let s_hit = State::from_slice(&raw.y_hit[..dim]);
        (
            SectionHit {
                t_hit: raw.t_hit,
                s_hit,
                residual: raw.residual,
            },
            raw.y_hit[dim - 1],
            0.0,
        )
    };

    Ok(DulacSample {
        x0,
        y0: anchors.y0,
        z0,
        omega,
        tau: hit.t_hit,
        q,
        exit: hit,
    })
}

/// Grid spacing of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

/// Sweep grid descending from `x_max` (point 0) to `x_min` (last point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
}

impl SweepGrid {
    pub fn points(&self) -> Result<Vec<f64>, DulacError> {
        if self.n_points == 0 {
            return Err(DulacError::EmptyGrid);
        }
        if !(self.x_min > 0.0 && self.x_min <= self.x_max && self.x_max <= 1.0) {
            return Err(DulacError::InvalidX0(self.x_min.min(self.x_max)));
        }
        let n = self.n_points;
        if n == 1 {
            return Ok(vec![self.x_max]);
        }
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let x = match self.spacing {
                Spacing::Log => (self.x_max.ln() + t * (self.x_min.ln() - self.x_max.ln())).exp(),
                Spacing::Linear => self.x_max + t * (self.x_min - self.x_max),
            };
            pts.push(x);
        }
        pts[0] = self.x_max;
        pts[n - 1] = self.x_min;
        Ok(pts)
    }
}

/// One grid point of a sweep: either a sample or the per-point failure.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub x0: f64,
    pub result: Result<DulacSample, DulacError>,
}

/// Ordered sweep output, one entry per grid point (index order, regardless of
/// completion order under parallel execution).
#[derive(Debug, Clone)]
pub struct DulacSweep {
    pub points: Vec<SweepPoint>,
}

impl DulacSweep {
    /// Successfully computed samples, in grid order.
    pub fn samples(&self) -> Vec<&DulacSample> {
        self.points
            .iter()
            .filter_map(|p| p.result.as_ref().ok())
            .collect()
    }

    pub fn n_ok(&self) -> usize {
        self.points.iter().filter(|p| p.result.is_ok()).count()
    }

    /// CSV export with header `x0,omega,tau,status`; failed points leave the
    /// value columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x0,omega,tau,status\n");
        for p in &self.points {
            match &p.result {
                Ok(s) => out.push_str(&format!(
                    "{},{},{},ok\n",
                    fmt_full(p.x0),
                    fmt_full(s.omega),
                    fmt_full(s.tau)
                )),
                Err(e) => out.push_str(&format!("{},,,{}\n", fmt_full(p.x0), e.status_code())),
            }
        }
        out
    }
}

/// Runs `dulac_map` over every grid point in parallel. Per-point failures are
/// recorded without aborting; only an all-points failure is an error.
pub fn sweep(
    params: &NeutralParams,
    x_grid: &[f64],
    anchors: &LeafAnchors,
    cfg: &IntegratorConfig,
) -> Result<DulacSweep, DulacError> {
    if x_grid.is_empty() {
        return Err(DulacError::EmptyGrid);
    }
    for &x in x_grid {
        if !(x.abs() > 0.0 && x.abs() <= 1.0) || !x.is_finite() {
            return Err(DulacError::InvalidX0(x));
        }
    }
    let points: Vec<SweepPoint> = x_grid
        .par_iter()
        .map(|&x0| SweepPoint {
            x0,
            result: dulac_map(params, x0, anchors, cfg),
        })
        .collect();
    if points.iter().all(|p| p.result.is_err()) {
        return Err(DulacError::SweepFailure(points.len()));
    }
    Ok(DulacSweep { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_d_params() -> NeutralParams {
        NeutralParams::two_d(15.0, 5.0, 1.0, 3.0).unwrap()
    }

    #[test]
    fn point_on_section_exits_immediately() {
        let p = two_d_params();
        let s = dulac_map(&p, 1.0, &LeafAnchors::default(), &IntegratorConfig::default()).unwrap();
        assert_eq!(s.tau, 0.0);
        assert_eq!(s.omega, 1.0);
        assert_eq!(s.exit.t_hit, 0.0);
    }

    #[test]
    fn invalid_x0_is_rejected() {
        let p = two_d_params();
        let cfg = IntegratorConfig::default();
        assert!(dulac_map(&p, 0.0, &LeafAnchors::default(), &cfg).is_err());
        assert!(dulac_map(&p, 1.5, &LeafAnchors::default(), &cfg).is_err());
        assert!(sweep(&p, &[], &LeafAnchors::default(), &cfg).is_err());
        assert!(sweep(&p, &[0.5, 0.0], &LeafAnchors::default(), &cfg).is_err());
    }

    #[test]
    fn prediction_formulas() {
        let p = two_d_params();
        let pr = predict(&p, 1e-4, 1.0, 1.0).unwrap();
        assert_relative_eq!(pr.omega_pred, 1e-4f64.powf(0.4), max_relative = 1e-14);
        assert_relative_eq!(pr.tau_pred, 1000.0, max_relative = 1e-12);
        assert!(predict(&p, 1e-4, 0.0, 1.0).is_err());
    }

    #[test]
    fn grid_generation_is_descending_with_exact_endpoints() {
        let g = SweepGrid {
            x_min: 1e-5,
            x_max: 1e-4,
            n_points: 11,
            spacing: Spacing::Log,
        };
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[0], 1e-4);
        assert_eq!(pts[10], 1e-5);
        for w in pts.windows(2) {
            assert!(w[1] < w[0]);
        }
        let single = SweepGrid {
            n_points: 1,
            ..g
        };
        assert_eq!(single.points().unwrap(), vec![1e-4]);
    }

    #[test]
    fn exit_time_monotone_and_omega_shrinks() {
        let p = two_d_params();
        let cfg = IntegratorConfig::for_tolerances(1e-8, 1e-10);
        let grid = SweepGrid {
            x_min: 1e-3,
            x_max: 1e-1,
            n_points: 7,
            spacing: Spacing::Log,
        };
        let sw = sweep(&p, &grid.points().unwrap(), &LeafAnchors::default(), &cfg).unwrap();
        let samples = sw.samples();
        assert_eq!(samples.len(), 7);
        // grid descends in x0, so tau must strictly increase along it
        for w in samples.windows(2) {
            assert!(
                w[1].tau > w[0].tau,
                "tau not decreasing in |x0|: {} vs {}",
                w[1].tau,
                w[0].tau
            );
            assert!(w[1].omega < w[0].omega);
        }
        for s in &samples {
            assert!(s.omega > 0.0);
            assert!(s.exit.residual <= cfg.event_tol);
        }
    }

    #[test]
    fn symmetric_initial_coordinates_give_mirror_exits() {
        let p = two_d_params();
        let cfg = IntegratorConfig::default();
        let plus = dulac_map(&p, 1e-3, &LeafAnchors::default(), &cfg).unwrap();
        let minus = dulac_map(&p, -1e-3, &LeafAnchors::default(), &cfg).unwrap();
        assert_relative_eq!(minus.tau, plus.tau, max_relative = 1e-9);
        assert_relative_eq!(minus.omega.abs(), plus.omega.abs(), max_relative = 1e-9);
        assert_relative_eq!(minus.exit.s_hit.x(), -1.0, max_relative = 1e-12);
    }

    #[test]
    fn model1_with_dead_y_matches_planar_run() {
        // y0 = 0 kills every y-contribution of the skew-product model, so the
        // (x, z) dynamics coincides with the planar (x, y) dynamics.
        let planar = two_d_params();
        let full = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap();
        let cfg = IntegratorConfig::default();
        let anchors3 = LeafAnchors { y0: 0.0, z0: 1.0 };
        let s2 = dulac_map(&planar, 1e-3, &LeafAnchors::default(), &cfg).unwrap();
        let s3 = dulac_map(&full, 1e-3, &anchors3, &cfg).unwrap();
        assert_relative_eq!(s3.tau, s2.tau, max_relative = 100.0 * cfg.rel_tol);
        assert_relative_eq!(s3.omega, s2.omega, max_relative = 100.0 * cfg.rel_tol);
    }

    #[test]
    fn model2_accumulates_positive_q() {
        let p = NeutralParams::model2(15.0, 5.0, 1.0, 3.0, 1.0, 1.0, 10.0).unwrap();
        let cfg = IntegratorConfig::default();
        let s = dulac_map(&p, 1e-2, &LeafAnchors::default(), &cfg).unwrap();
        assert!(s.q > 0.0, "q = {}", s.q);
        let p1 = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap();
        let s1 = dulac_map(&p1, 1e-2, &LeafAnchors::default(), &cfg).unwrap();
        assert_eq!(s1.q, 0.0);
    }

    #[test]
    fn sweep_csv_layout() {
        let p = two_d_params();
        let cfg = IntegratorConfig::for_tolerances(1e-8, 1e-10);
        let sw = sweep(&p, &[0.5, 0.25], &LeafAnchors::default(), &cfg).unwrap();
        let csv = sw.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x0,omega,tau,status");
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(",ok"));
    }
}
