//! Fixed-step classical Runge–Kutta reference integrator.
//!
//! Deterministic, no adaptivity, no implicit solves: the cross-check for the
//! adaptive path in tests. Long runs keep only every k-th node so that the
//! returned trajectory stays bounded in memory; the final node is always
//! stored exactly.

use super::trajectory::Trajectory;
use super::{OdeError, OdeField};
use crate::fields::State;

const MAX_DIM: usize = 4;
const MAX_STORED_NODES: usize = 200_000;

/// Integrates `[0, t_end]` with classical fourth-order Runge–Kutta at the
/// given fixed step (the last step is shortened to land on `t_end`).
pub fn integrate_oracle_raw<F: OdeField + ?Sized>(
    field: &F,
    y0: &[f64],
    t_end: f64,
    fixed_step: f64,
) -> Result<Trajectory, OdeError> {
    let dim = field.dim();
    if y0.len() != dim {
        return Err(OdeError::DimensionMismatch {
            field: dim,
            state: y0.len(),
        });
    }
    if !(fixed_step > 0.0) {
        return Err(OdeError::InvalidConfig(format!(
            "fixed_step must be positive, got {fixed_step}"
        )));
    }
    if !(t_end >= 0.0) {
        return Err(OdeError::InvalidConfig(format!(
            "t_end must be nonnegative, got {t_end}"
        )));
    }

    let mut y = [0.0; MAX_DIM];
    y[..dim].copy_from_slice(y0);
    let mut f = [0.0; MAX_DIM];
    field.eval(&y[..dim], &mut f[..dim]);
    let mut traj = Trajectory::new_hermite(dim, 0.0, y, f);
    if t_end == 0.0 {
        return Ok(traj);
    }

    let n_steps = (t_end / fixed_step).ceil().max(1.0) as usize;
    let thin = n_steps / MAX_STORED_NODES + 1;

    let mut k1 = [0.0; MAX_DIM];
    let mut k2 = [0.0; MAX_DIM];
    let mut k3 = [0.0; MAX_DIM];
    let mut k4 = [0.0; MAX_DIM];
    let mut tmp = [0.0; MAX_DIM];
    let mut t = 0.0;
    for step in 0..n_steps {
        let t_next = if step + 1 == n_steps {
            t_end
        } else {
            ((step + 1) as f64 * fixed_step).min(t_end)
        };
        let h = t_next - t;
        field.eval(&y[..dim], &mut k1[..dim]);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        field.eval(&tmp[..dim], &mut k2[..dim]);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        field.eval(&tmp[..dim], &mut k3[..dim]);
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        field.eval(&tmp[..dim], &mut k4[..dim]);
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = t_next;
        if y[..dim].iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NumericalOverflow { t });
        }
        if (step + 1) % thin == 0 || step + 1 == n_steps {
            field.eval(&y[..dim], &mut f[..dim]);
            traj.push_hermite(t, y, f);
        }
    }
    Ok(traj)
}

/// State-typed wrapper of [`integrate_oracle_raw`].
pub fn integrate_oracle<F: OdeField>(
    field: &F,
    s0: &State,
    t_end: f64,
    fixed_step: f64,
) -> Result<Trajectory, OdeError> {
    integrate_oracle_raw(field, s0.as_slice(), t_end, fixed_step)
}
