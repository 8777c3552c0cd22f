//! Time-stamped solution storage with per-step interpolation.

use crate::fields::State;

/// Why an integration run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The requested end time was reached.
    Completed,
    /// A section crossing terminated the run.
    SectionHit,
}

/// Interpolation data attached to a trajectory.
#[derive(Debug, Clone)]
pub(crate) enum Interp {
    /// Stage increments of each accepted implicit step; the collocation
    /// polynomial through them interpolates the step interval.
    Collocation(Vec<CollocationSeg>),
    /// Node derivatives for cubic Hermite interpolation (fixed-step oracle).
    Hermite(Vec<[f64; 4]>),
}

#[derive(Debug, Clone)]
pub(crate) struct CollocationSeg {
    pub z: [[f64; 4]; 3],
}

// Radau IIA abscissae (3 stages, order 5).
pub(crate) const SQ6: f64 = 2.449489742783178;
pub(crate) const C1: f64 = (4.0 - SQ6) / 10.0;
pub(crate) const C2: f64 = (4.0 + SQ6) / 10.0;

/// Lagrange-type weights of the collocation polynomial through
/// `(0, 0), (C1, Z1), (C2, Z2), (1, Z3)` evaluated at `theta`.
pub(crate) fn collocation_weights(theta: f64) -> [f64; 3] {
    let d1 = C1 * (C1 - C2) * (C1 - 1.0);
    let d2 = C2 * (C2 - C1) * (C2 - 1.0);
    let d3 = (1.0 - C1) * (1.0 - C2);
    [
        theta * (theta - C2) * (theta - 1.0) / d1,
        theta * (theta - C1) * (theta - 1.0) / d2,
        theta * (theta - C1) * (theta - C2) / d3,
    ]
}

/// Ordered accepted steps of one integration run, with dense output on each
/// step interval. Times are strictly increasing.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    rows: Vec<[f64; 4]>,
    pub(crate) interp: Interp,
    stop: StopReason,
}

impl Trajectory {
    pub(crate) fn new_collocation(dim: usize, t0: f64, y0: [f64; 4]) -> Self {
        Trajectory {
            dim,
            times: vec![t0],
            rows: vec![y0],
            interp: Interp::Collocation(Vec::new()),
            stop: StopReason::Completed,
        }
    }

    pub(crate) fn new_hermite(dim: usize, t0: f64, y0: [f64; 4], f0: [f64; 4]) -> Self {
        Trajectory {
            dim,
            times: vec![t0],
            rows: vec![y0],
            interp: Interp::Hermite(vec![f0]),
            stop: StopReason::Completed,
        }
    }

    pub(crate) fn push_collocation(&mut self, t1: f64, y1: [f64; 4], z: [[f64; 4]; 3]) {
        debug_assert!(
            t1 > *self.times.last().unwrap(),
            "non-advancing step: t1 = {t1}, last = {}",
            self.times.last().unwrap()
        );
        self.times.push(t1);
        self.rows.push(y1);
        match &mut self.interp {
            Interp::Collocation(segs) => segs.push(CollocationSeg { z }),
            Interp::Hermite(_) => unreachable!("mixed interpolation kinds"),
        }
    }

    pub(crate) fn push_hermite(&mut self, t1: f64, y1: [f64; 4], f1: [f64; 4]) {
        debug_assert!(t1 > *self.times.last().unwrap());
        self.times.push(t1);
        self.rows.push(y1);
        match &mut self.interp {
            Interp::Hermite(derivs) => derivs.push(f1),
            Interp::Collocation(_) => unreachable!("mixed interpolation kinds"),
        }
    }

    pub(crate) fn set_stop(&mut self, stop: StopReason) {
        self.stop = stop;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Raw coordinate row of node `i` (leading `dim` entries are meaningful).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i][..self.dim]
    }

    /// Node `i` as a `State`. Only valid for 2- or 3-dimensional trajectories.
    pub fn state(&self, i: usize) -> State {
        State::from_slice(self.row(i).split_at(self.dim.min(3)).0)
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end_row(&self) -> &[f64] {
        self.row(self.rows.len() - 1)
    }

    pub fn end_state(&self) -> State {
        self.state(self.rows.len() - 1)
    }

    /// Interpolated coordinates at time `t` (clamped to the covered span).
    pub fn sample(&self, t: f64) -> [f64; 4] {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.rows[0];
        }
        if t >= self.times[n - 1] {
            return self.rows[n - 1];
        }
        // index of the segment [times[k], times[k+1]) containing t
        let k = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.rows[i],
            Err(i) => i - 1,
        };
        let h = self.times[k + 1] - self.times[k];
        let theta = (t - self.times[k]) / h;
        let mut out = [0.0; 4];
        match &self.interp {
            Interp::Collocation(segs) => {
                let w = collocation_weights(theta);
                let seg = &segs[k];
                for i in 0..self.dim {
                    out[i] = self.rows[k][i]
                        + w[0] * seg.z[0][i]
                        + w[1] * seg.z[1][i]
                        + w[2] * seg.z[2][i];
                }
            }
            Interp::Hermite(derivs) => {
                let (h00, h10, h01, h11) = hermite_basis(theta);
                for i in 0..self.dim {
                    out[i] = h00 * self.rows[k][i]
                        + h10 * h * derivs[k][i]
                        + h01 * self.rows[k + 1][i]
                        + h11 * h * derivs[k + 1][i];
                }
            }
        }
        out
    }

    /// CSV export with header `t,x,y,z` at full precision (17 significant
    /// digits). Planar trajectories leave the `z` column empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,z\n");
        for (i, t) in self.times.iter().enumerate() {
            let r = &self.rows[i];
            if self.dim >= 3 {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_full(*t),
                    fmt_full(r[0]),
                    fmt_full(r[1]),
                    fmt_full(r[2])
                ));
            } else {
                out.push_str(&format!(
                    "{},{},{},\n",
                    fmt_full(*t),
                    fmt_full(r[0]),
                    fmt_full(r[1])
                ));
            }
        }
        out
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// 17-significant-digit decimal rendering, enough to reproduce any f64 exactly.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}
