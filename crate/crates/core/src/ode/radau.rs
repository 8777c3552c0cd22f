//! Three-stage Radau IIA stepper (order 5), L-stable, with simplified-Newton
//! stage solves, an embedded error estimate, and collocation dense output.
//!
//! The L-stability is what makes integration through the extreme slowdown
//! near the neutral equilibrium practical: flow times grow polynomially as
//! the initial coordinate approaches the stable manifold, and explicit
//! methods stall there.

use super::linalg::Lu;
use super::trajectory::SQ6;
use super::{IntegratorConfig, OdeError, OdeFieldJac};

// Runge-Kutta matrix of the 3-stage Radau IIA scheme.
const A: [[f64; 3]; 3] = [
    [
        (88.0 - 7.0 * SQ6) / 360.0,
        (296.0 - 169.0 * SQ6) / 1800.0,
        (-2.0 + 3.0 * SQ6) / 225.0,
    ],
    [
        (296.0 + 169.0 * SQ6) / 1800.0,
        (88.0 + 7.0 * SQ6) / 360.0,
        (-2.0 - 3.0 * SQ6) / 225.0,
    ],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];

// Real eigenvalue of the Runge-Kutta matrix; scales the error-estimate solve.
const GAMMA0: f64 = 0.274_888_829_595_677_4;

// Weights of the embedded error estimate.
const D1: f64 = -(13.0 + 7.0 * SQ6) / 3.0;
const D2: f64 = (-13.0 + 7.0 * SQ6) / 3.0;
const D3: f64 = -1.0 / 3.0;

const MAX_DIM: usize = 4;
const STAGE_DIM: usize = 3 * MAX_DIM;

/// One accepted (or forced) step with everything needed for dense output.
#[derive(Debug, Clone)]
pub(crate) struct StepOutput {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; MAX_DIM],
    pub y1: [f64; MAX_DIM],
    pub z: [[f64; MAX_DIM]; 3],
}

enum Attempt {
    Converged {
        z: [[f64; MAX_DIM]; 3],
        y1: [f64; MAX_DIM],
        err: f64,
        iters: usize,
    },
    NewtonFailed,
}

pub(crate) struct RadauStepper<'a, F: OdeFieldJac + ?Sized> {
    field: &'a F,
    cfg: &'a IntegratorConfig,
    dim: usize,
    pub t: f64,
    pub y: [f64; MAX_DIM],
    h: f64,
    first: bool,
    last_rejected: bool,
    pub attempts: usize,
}

impl<'a, F: OdeFieldJac + ?Sized> RadauStepper<'a, F> {
    pub fn new(
        field: &'a F,
        cfg: &'a IntegratorConfig,
        t0: f64,
        y0: &[f64],
    ) -> Result<Self, OdeError> {
        let dim = field.dim();
        let mut y = [0.0; MAX_DIM];
        y[..dim].copy_from_slice(y0);
        let mut stepper = RadauStepper {
            field,
            cfg,
            dim,
            t: t0,
            y,
            h: 0.0,
            first: true,
            last_rejected: false,
            attempts: 0,
        };
        stepper.h = stepper.initial_step();
        Ok(stepper)
    }

    /// Classical two-probe starting step heuristic for an order-5 scheme.
    fn initial_step(&self) -> f64 {
        let dim = self.dim;
        let cfg = self.cfg;
        let mut sc = [0.0; MAX_DIM];
        for i in 0..dim {
            sc[i] = cfg.abs_tol + cfg.rel_tol * self.y[i].abs();
        }
        let mut f0 = [0.0; MAX_DIM];
        self.field.eval(&self.y[..dim], &mut f0[..dim]);
        let rms = |v: &[f64]| -> f64 {
            let s: f64 = v
                .iter()
                .zip(sc.iter())
                .map(|(a, s)| (a / s) * (a / s))
                .sum();
            (s / dim as f64).sqrt()
        };
        let d0 = rms(&self.y[..dim]);
        let d1 = rms(&f0[..dim]);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(cfg.max_step);
        let mut y1 = [0.0; MAX_DIM];
        for i in 0..dim {
            y1[i] = self.y[i] + h0 * f0[i];
        }
        let mut f1 = [0.0; MAX_DIM];
        self.field.eval(&y1[..dim], &mut f1[..dim]);
        let mut diff = [0.0; MAX_DIM];
        for i in 0..dim {
            diff[i] = f1[i] - f0[i];
        }
        let d2 = rms(&diff[..dim]) / h0;
        let der = d1.max(d2);
        let h1 = if der <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / der).powf(1.0 / 6.0)
        };
        (100.0 * h0).min(h1).min(cfg.max_step)
    }

    /// Takes one accepted step, never past `t_limit`.
    pub fn advance(&mut self, t_limit: f64) -> Result<StepOutput, OdeError> {
        let cfg = self.cfg;
        loop {
            self.attempts += 1;
            if self.attempts > cfg.max_steps {
                return Err(OdeError::BudgetExceeded {
                    budget: cfg.max_steps,
                    t: self.t,
                });
            }
            let remaining = t_limit - self.t;
            let clamped = self.h >= remaining;
            let h = if clamped { remaining } else { self.h };
            // A step below the floor (or below the time resolution at the
            // current t) cannot make progress even when the error estimate
            // accepts it; this is the signature of chasing a finite-time
            // singularity of the field.
            if !clamped && (h < cfg.min_step || self.t + h == self.t) {
                return Err(OdeError::StiffnessFailure { t: self.t, h });
            }
            match self.attempt(self.t, &self.y, h, self.first || self.last_rejected) {
                Attempt::Converged { z, y1, err, iters } => {
                    if err < 1.0 {
                        let out = StepOutput {
                            t0: self.t,
                            h,
                            y0: self.y,
                            y1,
                            z,
                        };
                        for v in &y1[..self.dim] {
                            if !v.is_finite() {
                                return Err(OdeError::NumericalOverflow { t: self.t });
                            }
                        }
                        self.t = if clamped { t_limit } else { self.t + h };
                        self.y = y1;
                        self.h = self.next_step(h, err, iters);
                        self.first = false;
                        self.last_rejected = false;
                        return Ok(out);
                    }
                    // rejected on accuracy
                    let mut hnew = self.next_step(h, err, iters);
                    if self.first {
                        hnew = 0.1 * h;
                    }
                    self.last_rejected = true;
                    if hnew < cfg.min_step {
                        return Err(OdeError::StiffnessFailure { t: self.t, h: hnew });
                    }
                    self.h = hnew;
                }
                Attempt::NewtonFailed => {
                    let hnew = 0.5 * h;
                    self.last_rejected = true;
                    if hnew < cfg.min_step {
                        return Err(OdeError::StiffnessFailure { t: self.t, h: hnew });
                    }
                    self.h = hnew;
                }
            }
        }
    }

    /// One forced step of size `h` from an arbitrary start, without error
    /// control. Used to land exactly on a section crossing inside an already
    /// accepted step.
    pub fn forced_step(&self, t0: f64, y0: &[f64; MAX_DIM], h: f64) -> Option<StepOutput> {
        match self.attempt(t0, y0, h, false) {
            Attempt::Converged { z, y1, .. } => Some(StepOutput {
                t0,
                h,
                y0: *y0,
                y1,
                z,
            }),
            Attempt::NewtonFailed => None,
        }
    }

    fn next_step(&self, h: f64, err: f64, iters: usize) -> f64 {
        let cfg = self.cfg;
        let nit = cfg.newton_max_iters as f64;
        let fac = 0.9 * (2.0 * nit + 1.0) / (2.0 * nit + iters as f64);
        let quot = (err.max(1e-32).powf(0.25) / fac).clamp(0.125, 5.0);
        (h / quot).min(cfg.max_step)
    }

    /// Simplified-Newton solve of the three stage equations at step size `h`,
    /// plus the embedded error estimate.
    fn attempt(&self, t0: f64, y0: &[f64; MAX_DIM], h: f64, careful: bool) -> Attempt {
        let _ = t0; // autonomous fields
        let dim = self.dim;
        let cfg = self.cfg;

        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        self.field.jacobian(&y0[..dim], &mut jac);

        // M = I - h (A x J), block (i,j) = delta_ij I - h a_ij J
        let mut m = [[0.0; STAGE_DIM]; STAGE_DIM];
        for bi in 0..3 {
            for bj in 0..3 {
                let w = -h * A[bi][bj];
                for r in 0..dim {
                    for c in 0..dim {
                        m[bi * dim + r][bj * dim + c] = w * jac[r][c];
                    }
                }
            }
        }
        for k in 0..3 * dim {
            m[k][k] += 1.0;
        }
        let lu = match Lu::factor(m, 3 * dim) {
            Some(lu) => lu,
            None => return Attempt::NewtonFailed,
        };

        let mut sc = [0.0; MAX_DIM];
        for i in 0..dim {
            sc[i] = cfg.abs_tol + cfg.rel_tol * y0[i].abs();
        }

        let mut z = [[0.0; MAX_DIM]; 3];
        let mut f = [[0.0; MAX_DIM]; 3];
        let mut dyno_old = 0.0f64;
        let mut converged = false;
        let mut iters_used = cfg.newton_max_iters;
        for k in 0..cfg.newton_max_iters {
            for s in 0..3 {
                let mut ys = [0.0; MAX_DIM];
                for i in 0..dim {
                    ys[i] = y0[i] + z[s][i];
                }
                self.field.eval(&ys[..dim], &mut f[s][..dim]);
            }
            // rhs = -(Z - h A F)
            let mut rhs = [0.0; STAGE_DIM];
            for s in 0..3 {
                for i in 0..dim {
                    let mut acc = -z[s][i];
                    for (j, fj) in f.iter().enumerate() {
                        acc += h * A[s][j] * fj[i];
                    }
                    rhs[s * dim + i] = acc;
                }
            }
            if rhs.iter().any(|v| !v.is_finite()) {
                return Attempt::NewtonFailed;
            }
            lu.solve(&mut rhs);
            let mut dyno = 0.0;
            for s in 0..3 {
                for i in 0..dim {
                    let d = rhs[s * dim + i];
                    z[s][i] += d;
                    let q = d / sc[i];
                    dyno += q * q;
                }
            }
            dyno = (dyno / (3 * dim) as f64).sqrt();
            if !dyno.is_finite() {
                return Attempt::NewtonFailed;
            }
            let estimate = if k == 0 {
                dyno
            } else {
                let theta = dyno / dyno_old;
                if theta >= 0.99 {
                    return Attempt::NewtonFailed;
                }
                dyno * theta / (1.0 - theta)
            };
            dyno_old = dyno.max(1e-300);
            if estimate <= cfg.newton_tol {
                converged = true;
                iters_used = k + 1;
                break;
            }
        }
        if !converged {
            return Attempt::NewtonFailed;
        }

        // stiffly accurate: y1 = y0 + Z3
        let mut y1 = [0.0; MAX_DIM];
        for i in 0..dim {
            y1[i] = y0[i] + z[2][i];
        }

        // Embedded estimate: solve (I - h*gamma0*J) e = gamma0*(h f0 + d1 Z1 + d2 Z2 + d3 Z3)
        let mut e = [[0.0; MAX_DIM]; MAX_DIM];
        for r in 0..dim {
            for c in 0..dim {
                e[r][c] = -h * GAMMA0 * jac[r][c];
            }
            e[r][r] += 1.0;
        }
        let elu = match Lu::factor(e, dim) {
            Some(lu) => lu,
            None => return Attempt::NewtonFailed,
        };
        let mut f0 = [0.0; MAX_DIM];
        self.field.eval(&y0[..dim], &mut f0[..dim]);
        let mut ee = [0.0; MAX_DIM];
        for i in 0..dim {
            ee[i] = GAMMA0 * (h * f0[i] + D1 * z[0][i] + D2 * z[1][i] + D3 * z[2][i]);
        }
        elu.solve(&mut ee[..dim]);
        let mut esc = [0.0; MAX_DIM];
        for i in 0..dim {
            esc[i] = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
        }
        let norm = |v: &[f64]| -> f64 {
            let s: f64 = v
                .iter()
                .zip(esc.iter())
                .map(|(a, s)| (a / s) * (a / s))
                .sum();
            (s / dim as f64).sqrt()
        };
        let mut err = norm(&ee[..dim]);
        // On a fresh or just-rejected step a large estimate is re-evaluated at
        // the perturbed state; this stabilizes the estimate when the Jacobian
        // changes quickly across the step.
        if err >= 1.0 && careful {
            let mut yp = [0.0; MAX_DIM];
            for i in 0..dim {
                yp[i] = y0[i] + ee[i];
            }
            let mut fp = [0.0; MAX_DIM];
            self.field.eval(&yp[..dim], &mut fp[..dim]);
            if fp[..dim].iter().all(|v| v.is_finite()) {
                for i in 0..dim {
                    ee[i] = GAMMA0 * (h * fp[i] + D1 * z[0][i] + D2 * z[1][i] + D3 * z[2][i]);
                }
                elu.solve(&mut ee[..dim]);
                err = norm(&ee[..dim]);
            }
        }
        if !err.is_finite() {
            return Attempt::NewtonFailed;
        }
        Attempt::Converged {
            z,
            y1,
            err,
            iters: iters_used,
        }
    }
}

/// Collocation interpolation inside a step given its stage increments.
pub(crate) fn eval_collocation(
    y0: &[f64; MAX_DIM],
    z: &[[f64; MAX_DIM]; 3],
    theta: f64,
    dim: usize,
    out: &mut [f64; MAX_DIM],
) {
    let w = super::trajectory::collocation_weights(theta);
    for i in 0..dim {
        out[i] = y0[i] + w[0] * z[0][i] + w[1] * z[1][i] + w[2] * z[2][i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::trajectory::{C1, C2};

    #[test]
    fn runge_kutta_matrix_row_sums_are_abscissae() {
        let sums: Vec<f64> = A.iter().map(|row| row.iter().sum()).collect();
        assert!((sums[0] - C1).abs() < 1e-15);
        assert!((sums[1] - C2).abs() < 1e-15);
        assert!((sums[2] - 1.0).abs() < 1e-15);
    }
}
