//! Explicit leading-order return map of the cross-section, its quotient
//! interval map, Jacobian eigenvalues, orbit iteration, and the contraction
//! properties of the fiber map.
//!
//! The map acts on `{(x, y) : 0 < |x| <= 1, |y| <= 1}` as
//!
//! ```text
//! x' = sign(x) (a c |x|^beta - 1)
//! y' = y exp(-ell (zeta |x|^(-1/beta2) + q(x))) - sign(x)/2
//! ```
//!
//! with `q = 0` unless the underlying model has c-terms, in which case `q` is
//! tabulated from the accumulated correction integral of a sweep. Images that
//! leave the domain are reported as escapes, never clamped.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dulac::DulacSample;
use crate::fields::NeutralParams;
use crate::ode::fmt_full;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoincareError {
    #[error("image left the section domain: x = {x_image}, y = {y_image}")]
    DomainEscape { x_image: f64, y_image: f64 },
    #[error("the map is singular at x = 0")]
    SingularInput,
    #[error("image landed exactly on the singular line x = 0")]
    SingularImage,
    #[error("invalid section point: x = {x}, y = {y}")]
    InvalidPoint { x: f64, y: f64 },
    #[error("invalid map parameters: {0}")]
    InvalidParams(String),
}

/// A point of the cross-section: `x` in `[-1,1] \ {0}`, `y` in `[-1,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPoint {
    x: f64,
    y: f64,
}

impl SigmaPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, PoincareError> {
        if !(x != 0.0 && x.abs() <= 1.0 && y.abs() <= 1.0) || !x.is_finite() || !y.is_finite() {
            return Err(PoincareError::InvalidPoint { x, y });
        }
        Ok(SigmaPoint { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

/// Correction exponent `q` of the fiber contraction (models with c-terms).
#[derive(Clone, Default)]
pub enum QCorrection {
    #[default]
    None,
    /// Piecewise-linear in `ln |x|`, tabulated from a sweep; extrapolates the
    /// boundary slopes.
    Table(QTable),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for QCorrection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QCorrection::None => write!(f, "QCorrection::None"),
            QCorrection::Table(t) => write!(f, "QCorrection::Table({} nodes)", t.ln_x.len()),
            QCorrection::Custom(_) => write!(f, "QCorrection::Custom"),
        }
    }
}

impl QCorrection {
    fn eval(&self, abs_x: f64) -> f64 {
        match self {
            QCorrection::None => 0.0,
            QCorrection::Table(t) => t.eval(abs_x),
            QCorrection::Custom(f) => f(abs_x),
        }
    }

    /// d/dx of the correction at `abs_x > 0`.
    fn deriv(&self, abs_x: f64) -> f64 {
        match self {
            QCorrection::None => 0.0,
            QCorrection::Table(t) => t.slope_ln(abs_x) / abs_x,
            QCorrection::Custom(f) => {
                let h = 1e-6 * abs_x.max(1e-6);
                (f(abs_x + h) - f(abs_x - h)) / (2.0 * h)
            }
        }
    }
}

/// Sorted `(ln x, q)` nodes with linear interpolation.
#[derive(Debug, Clone)]
pub struct QTable {
    ln_x: Vec<f64>,
    q: Vec<f64>,
}

impl QTable {
    /// Tabulates the accumulated correction integral of a sweep.
    pub fn from_sweep(samples: &[&DulacSample]) -> Result<Self, PoincareError> {
        let mut pairs: Vec<(f64, f64)> = samples
            .iter()
            .filter(|s| s.x0.abs() > 0.0 && s.x0.abs() < 1.0)
            .map(|s| (s.x0.abs().ln(), s.q))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pairs.dedup_by(|a, b| a.0 == b.0);
        if pairs.len() < 2 {
            return Err(PoincareError::InvalidParams(
                "q table needs at least two distinct sweep points".into(),
            ));
        }
        if pairs.iter().any(|&(_, q)| !(q > 0.0)) {
            return Err(PoincareError::InvalidParams(
                "q table requires strictly positive correction values".into(),
            ));
        }
        let (ln_x, q) = pairs.into_iter().unzip();
        Ok(QTable { ln_x, q })
    }

    fn segment(&self, lx: f64) -> usize {
        match self
            .ln_x
            .binary_search_by(|v| v.partial_cmp(&lx).unwrap())
        {
            Ok(i) => i.min(self.ln_x.len() - 2),
            Err(i) => i.clamp(1, self.ln_x.len() - 1) - 1,
        }
    }

    fn eval(&self, abs_x: f64) -> f64 {
        let lx = abs_x.ln();
        let k = self.segment(lx);
        let t = (lx - self.ln_x[k]) / (self.ln_x[k + 1] - self.ln_x[k]);
        self.q[k] + t * (self.q[k + 1] - self.q[k])
    }

    fn slope_ln(&self, abs_x: f64) -> f64 {
        let k = self.segment(abs_x.ln());
        (self.q[k + 1] - self.q[k]) / (self.ln_x[k + 1] - self.ln_x[k])
    }
}

/// Return time offset for the passage back to the cross-section.
#[derive(Clone)]
pub enum Tau2 {
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Tau2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau2::Constant(c) => write!(f, "Tau2::Constant({c})"),
            Tau2::Custom(_) => write!(f, "Tau2::Custom"),
        }
    }
}

impl Tau2 {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Tau2::Constant(c) => *c,
            Tau2::Custom(f) => f(x),
        }
    }
}

/// Parameters of the explicit return map: the underlying normal-form
/// coefficients plus the expansion factor `a`, the transition constant `c`,
/// and the flow-time constant `zeta` (supplied or imported from a fit).
#[derive(Debug, Clone)]
pub struct PoincareParams {
    base: NeutralParams,
    a_exp: f64,
    c_asym: f64,
    zeta: f64,
    beta: f64,
    beta2: f64,
    q: QCorrection,
    tau2: Tau2,
}

impl PoincareParams {
    pub fn new(
        base: NeutralParams,
        a_exp: f64,
        c_asym: f64,
        zeta: f64,
    ) -> Result<Self, PoincareError> {
        if !(a_exp > 1.0) {
            return Err(PoincareError::InvalidParams(format!(
                "expansion factor must exceed 1, got {a_exp}"
            )));
        }
        if !(c_asym > 0.0) || !(zeta > 0.0) {
            return Err(PoincareError::InvalidParams(
                "constants c and zeta must be positive".into(),
            ));
        }
        let e = base.derived_exponents();
        Ok(PoincareParams {
            base,
            a_exp,
            c_asym,
            zeta,
            beta: e.beta,
            beta2: e.beta2,
            q: QCorrection::None,
            tau2: Tau2::Constant(1.0),
        })
    }

    pub fn with_q(mut self, q: QCorrection) -> Result<Self, PoincareError> {
        if let QCorrection::Custom(f) = &q {
            for x in [1e-6, 1e-3, 0.1, 0.5, 1.0] {
                if !(f(x) > 0.0) {
                    return Err(PoincareError::InvalidParams(format!(
                        "custom q must be positive, q({x}) = {}",
                        f(x)
                    )));
                }
            }
        }
        self.q = q;
        Ok(self)
    }

    pub fn with_tau2(mut self, tau2: Tau2) -> Result<Self, PoincareError> {
        if let Tau2::Constant(c) = tau2 {
            if !(c > 0.0) {
                return Err(PoincareError::InvalidParams(format!(
                    "tau2 must be positive, got {c}"
                )));
            }
        }
        self.tau2 = tau2;
        Ok(self)
    }

    pub fn base(&self) -> &NeutralParams {
        &self.base
    }

    pub fn a_exp(&self) -> f64 {
        self.a_exp
    }

    pub fn c_asym(&self) -> f64 {
        self.c_asym
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    /// Fiber contraction factor `lambda2(x) = exp(-ell (zeta |x|^(-1/beta2) + q))`.
    pub fn lambda2(&self, x: f64) -> f64 {
        let ax = x.abs();
        let exponent = self.zeta * ax.powf(-1.0 / self.beta2) + self.q.eval(ax);
        (-self.base.ell() * exponent).exp()
    }

    /// Return time `r(x) = zeta |x|^(-1/beta2) + tau2(x)` of one crossing.
    pub fn return_time(&self, x: f64) -> f64 {
        self.zeta * x.abs().powf(-1.0 / self.beta2) + self.tau2.eval(x)
    }
}

/// Full section map. Escaping images are errors, never clamped.
pub fn p_neu(params: &PoincareParams, p: &SigmaPoint) -> Result<SigmaPoint, PoincareError> {
    let s = p.x().signum();
    let ax = p.x().abs();
    let fx = params.a_exp * params.c_asym * ax.powf(params.beta) - 1.0;
    let x1 = s * fx;
    let y1 = p.y() * params.lambda2(ax) - s * 0.5;
    if x1 == 0.0 {
        return Err(PoincareError::SingularImage);
    }
    if x1.abs() > 1.0 || y1.abs() > 1.0 {
        return Err(PoincareError::DomainEscape {
            x_image: x1,
            y_image: y1,
        });
    }
    Ok(SigmaPoint { x: x1, y: y1 })
}

/// Quotient interval map `x -> sign(x) (a c |x|^beta - 1)`.
pub fn f_neu(params: &PoincareParams, x: f64) -> Result<f64, PoincareError> {
    if x == 0.0 {
        return Err(PoincareError::SingularInput);
    }
    let s = x.signum();
    Ok(s * (params.a_exp * params.c_asym * x.abs().powf(params.beta) - 1.0))
}

/// Eigenvalues of the derivative of the section map at `(x, .)`:
/// the expanding `lambda1 = a c beta |x|^(beta-1)` and the contracting
/// `lambda2 = exp(-ell (zeta |x|^(-1/beta2) + q))`.
pub fn jacobian_eigenvalues(
    params: &PoincareParams,
    x: f64,
) -> Result<(f64, f64), PoincareError> {
    if x == 0.0 {
        return Err(PoincareError::SingularInput);
    }
    let lambda1 =
        params.a_exp * params.c_asym * params.beta * x.abs().powf(params.beta - 1.0);
    Ok((lambda1, params.lambda2(x)))
}

/// One recorded orbit step: the point before the map and its return time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitStep {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub r_neu: f64,
}

/// Orbit record plus the visit histogram of the x-coordinate.
#[derive(Debug, Clone)]
pub struct OrbitStats {
    pub steps: Vec<OrbitStep>,
    /// Visit counts over `HISTOGRAM_BINS` uniform bins of `[-1, 1]`.
    pub histogram: Vec<u64>,
    /// `Some(k)`: the image of recorded step `k - 1` left the domain, and the
    /// orbit holds `k` completed steps.
    pub escaped_at: Option<usize>,
    pub seed: u64,
}

pub const HISTOGRAM_BINS: usize = 100;

fn histogram_bin(x: f64) -> usize {
    let t = (x + 1.0) / 2.0;
    ((t * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Iterates the section map `n` times from `p0`, recording the x-coordinate
/// and the return time at every step. A domain escape terminates the orbit
/// with the completed count recorded. The seed is carried as reproducibility
/// metadata; ensemble drivers derive their initial conditions from it.
pub fn iterate_orbit(params: &PoincareParams, p0: &SigmaPoint, n: usize, seed: u64) -> OrbitStats {
    let mut steps = Vec::with_capacity(n.min(1 << 20));
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    let mut escaped_at = None;
    let mut p = *p0;
    for k in 0..n {
        steps.push(OrbitStep {
            step: k,
            x: p.x(),
            y: p.y(),
            r_neu: params.return_time(p.x()),
        });
        histogram[histogram_bin(p.x())] += 1;
        match p_neu(params, &p) {
            Ok(next) => p = next,
            Err(_) => {
                escaped_at = Some(k + 1);
                break;
            }
        }
    }
    OrbitStats {
        steps,
        histogram,
        escaped_at,
        seed,
    }
}

/// Uniformly seeded ensemble of orbits with per-orbit derived seeds.
pub fn iterate_ensemble(
    params: &PoincareParams,
    n_orbits: usize,
    n_steps: usize,
    seed: u64,
) -> Vec<OrbitStats> {
    (0..n_orbits)
        .map(|i| {
            let orbit_seed = derive_seed(seed, i as u64);
            let p0 = random_sigma_point(orbit_seed);
            iterate_orbit(params, &p0, n_steps, orbit_seed)
        })
        .collect()
}

pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491_4F6C_DD1D)
}

pub(crate) fn random_sigma_point(seed: u64) -> SigmaPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: f64 = rng.random_range(-1.0..1.0);
    while x.abs() < 1e-12 {
        x = rng.random_range(-1.0..1.0);
    }
    let y: f64 = rng.random_range(-1.0..1.0);
    SigmaPoint { x, y }
}

/// CSV export of an orbit: `step,x,y,r_neu`, with a status footer comment
/// when the orbit escaped before completing.
pub fn orbit_csv(stats: &OrbitStats) -> String {
    let mut out = String::from("step,x,y,r_neu\n");
    for s in &stats.steps {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.step,
            fmt_full(s.x),
            fmt_full(s.y),
            fmt_full(s.r_neu)
        ));
    }
    if let Some(k) = stats.escaped_at {
        out.push_str(&format!("# status: escaped after {k} steps\n"));
    }
    out
}

/// Worst-case bounds of the fiber-map derivative checks over a grid.
#[derive(Debug, Clone)]
pub struct GPropReport {
    /// `sup |d g / d y|` over the grid (the contraction rate bound).
    pub eta: f64,
    pub g1_ok: bool,
    pub max_abs_dx_g: f64,
    /// `|d g / d x|` at the grid point with the smallest `|x|`.
    pub dx_g_at_smallest_x: f64,
    pub dx_decay_ok: bool,
    /// Worst relative mismatch between the closed-form `d g / d x` and a
    /// central finite difference.
    pub fd_max_rel_err: f64,
    pub fiber_ok: bool,
    /// `max_k |dy_k| / (eta^k |dy_0|)` over the sampled leaf pairs.
    pub fiber_worst_ratio: f64,
    pub violations: Vec<String>,
}

impl GPropReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("eta_sup_abs_dy_g: {}\n", fmt_full(self.eta)));
        out.push_str(&format!("g1_contraction_ok: {}\n", self.g1_ok));
        out.push_str(&format!("max_abs_dx_g: {}\n", fmt_full(self.max_abs_dx_g)));
        out.push_str(&format!(
            "dx_g_at_smallest_x: {}\n",
            fmt_full(self.dx_g_at_smallest_x)
        ));
        out.push_str(&format!("dx_decay_ok: {}\n", self.dx_decay_ok));
        out.push_str(&format!(
            "dx_g_fd_max_rel_err: {}\n",
            fmt_full(self.fd_max_rel_err)
        ));
        out.push_str(&format!("fiber_contraction_ok: {}\n", self.fiber_ok));
        out.push_str(&format!(
            "fiber_worst_ratio: {}\n",
            fmt_full(self.fiber_worst_ratio)
        ));
        out.push_str(&format!("violations: {}\n", self.violations.len()));
        for v in &self.violations {
            out.push_str(&format!("  - {v}\n"));
        }
        out
    }
}

/// Closed-form `d g / d x` of the fiber map at `(x, y)`.
pub fn dx_g(params: &PoincareParams, x: f64, y: f64) -> Result<f64, PoincareError> {
    if x == 0.0 {
        return Err(PoincareError::SingularInput);
    }
    let ax = x.abs();
    let lam = params.lambda2(ax);
    let phi_prime = -params.zeta / params.beta2 * ax.powf(-1.0 / params.beta2 - 1.0)
        + params.q.deriv(ax);
    Ok(-params.base.ell() * y * lam * x.signum() * phi_prime)
}

/// Verifies the contraction bounds of the fiber map on a grid of section
/// points: `|d g / d y| < 1` with supremum `eta`, boundedness and decay of
/// `|d g / d x|`, agreement of the closed-form `d g / d x` with central
/// finite differences, and geometric fiber contraction along iterated pairs.
pub fn check_g_properties(params: &PoincareParams, grid: &[(f64, f64)]) -> GPropReport {
    let mut violations = Vec::new();
    let mut eta = 0.0f64;
    let mut max_dx = 0.0f64;
    let mut smallest = (f64::INFINITY, 0.0f64);
    let mut fd_max_rel = 0.0f64;

    for &(x, y) in grid {
        if x == 0.0 {
            violations.push(format!("grid point with x = 0 skipped (y = {y})"));
            continue;
        }
        let dy = params.lambda2(x);
        if dy >= 1.0 {
            violations.push(format!("|dg/dy| = {dy} >= 1 at x = {x}"));
        }
        eta = eta.max(dy);
        let dx = dx_g(params, x, y).unwrap().abs();
        if !dx.is_finite() {
            violations.push(format!("dg/dx not finite at ({x}, {y})"));
            continue;
        }
        max_dx = max_dx.max(dx);
        if x.abs() < smallest.0 {
            smallest = (x.abs(), dx);
        }
        // central finite difference in x
        let h = (1e-6 * x.abs()).max(1e-9);
        if x.abs() > 2.0 * h {
            let gp = y * params.lambda2(x + h);
            let gm = y * params.lambda2(x - h);
            let fd = (gp - gm) / (2.0 * h);
            let cf = dx_g(params, x, y).unwrap();
            if fd == 0.0 && cf == 0.0 {
                continue;
            }
            let rel = (cf - fd).abs() / cf.abs().max(fd.abs());
            fd_max_rel = fd_max_rel.max(rel);
        }
    }

    // Iterated fiber contraction on sampled pairs sharing a leaf.
    let mut fiber_worst: f64 = 0.0;
    let n_fiber_steps = 24;
    for &(x, _) in grid.iter().take(16) {
        if x == 0.0 {
            continue;
        }
        let mut pa = match SigmaPoint::new(x, 0.9) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let mut pb = match SigmaPoint::new(x, -0.45) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let d0 = (pa.y() - pb.y()).abs();
        for k in 1..=n_fiber_steps {
            let (na, nb) = match (p_neu(params, &pa), p_neu(params, &pb)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => break,
            };
            let dk = (na.y() - nb.y()).abs();
            let bound = eta.powi(k as i32) * d0;
            if bound > 0.0 {
                fiber_worst = fiber_worst.max(dk / bound);
            } else if dk > 0.0 {
                fiber_worst = f64::INFINITY;
            }
            pa = na;
            pb = nb;
            if dk == 0.0 {
                break;
            }
        }
    }
    if fiber_worst > 1.0 + 1e-9 {
        violations.push(format!(
            "fiber contraction exceeded the eta^n envelope by factor {fiber_worst}"
        ));
    }

    let dx_decay_ok = smallest.1 <= (1e-3 * max_dx).max(1e-12);
    GPropReport {
        eta,
        g1_ok: eta < 1.0 && violations.is_empty(),
        max_abs_dx_g: max_dx,
        dx_g_at_smallest_x: smallest.1,
        dx_decay_ok,
        fd_max_rel_err: fd_max_rel,
        fiber_ok: fiber_worst <= 1.0 + 1e-9,
        fiber_worst_ratio: fiber_worst,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn beta040_map() -> PoincareParams {
        let base = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap();
        PoincareParams::new(base, 1.9, 1.0, 1.0).unwrap()
    }

    #[test]
    fn direct_evaluation_at_x_one() {
        let m = beta040_map();
        let p = SigmaPoint::new(1.0, 0.7).unwrap();
        let img = p_neu(&m, &p).unwrap();
        assert_relative_eq!(img.x(), 0.9, max_relative = 1e-14);
        assert_relative_eq!(
            img.y(),
            0.7 * (-10.0f64).exp() - 0.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn y_fiber_collapses_toward_the_cusp_image() {
        let m = beta040_map();
        let p = SigmaPoint::new(1e-200, 1.0).unwrap();
        let img = p_neu(&m, &p).unwrap();
        assert_eq!(img.y(), -0.5);
        let p = SigmaPoint::new(-1e-200, 1.0).unwrap();
        let img = p_neu(&m, &p).unwrap();
        assert_eq!(img.y(), 0.5);
    }

    #[test]
    fn quotient_map_one_sided_limits() {
        let m = beta040_map();
        assert!(f_neu(&m, 1e-280).unwrap() + 1.0 < 1e-100);
        assert!(f_neu(&m, -1e-280).unwrap() - 1.0 > -1e-100);
        assert!(matches!(f_neu(&m, 0.0), Err(PoincareError::SingularInput)));
    }

    #[test]
    fn domain_containment_when_ac_at_most_two() {
        let m = beta040_map(); // a c = 1.9
        for i in 1..=100 {
            let x = i as f64 / 100.0;
            let fx = f_neu(&m, x).unwrap();
            assert!(fx.abs() <= 1.0, "f({x}) = {fx}");
        }
    }

    #[test]
    fn escape_is_reported_not_clamped() {
        let base = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap();
        let m = PoincareParams::new(base, 3.0, 1.0, 1.0).unwrap();
        let p = SigmaPoint::new(1.0, 0.0).unwrap();
        assert!(matches!(
            p_neu(&m, &p),
            Err(PoincareError::DomainEscape { .. })
        ));
    }

    #[test]
    fn eigenvalues_match_closed_forms() {
        let m = beta040_map();
        let (l1, l2) = jacobian_eigenvalues(&m, 1.0).unwrap();
        assert_relative_eq!(l1, 1.9 * 0.4, max_relative = 1e-13);
        assert_relative_eq!(l2, (-10.0f64).exp(), max_relative = 1e-13);
        // lambda1 blows up, lambda2 dies as x -> 0
        let (l1s, l2s) = jacobian_eigenvalues(&m, 1e-8).unwrap();
        assert!(l1s > 1e3 * l1);
        assert!(l2s < l2);
        // lambda1 decreasing, lambda2 increasing in |x|, product shrinking
        let xs = [1e-3, 1e-2, 1e-1, 0.5, 1.0];
        for w in xs.windows(2) {
            let (a1, a2) = jacobian_eigenvalues(&m, w[0]).unwrap();
            let (b1, b2) = jacobian_eigenvalues(&m, w[1]).unwrap();
            assert!(a1 > b1);
            assert!(a2 < b2);
            assert!(a1 * a2 <= b1 * b2);
        }
    }

    #[test]
    fn fiber_contraction_factor_is_exact() {
        let m = beta040_map();
        let x = 0.37;
        let lam = m.lambda2(x);
        let pa = SigmaPoint::new(x, 0.8).unwrap();
        let pb = SigmaPoint::new(x, -0.3).unwrap();
        let ia = p_neu(&m, &pa).unwrap();
        let ib = p_neu(&m, &pb).unwrap();
        let lhs = (ia.y() - ib.y()).abs();
        let rhs = lam * (pa.y() - pb.y()).abs();
        assert!((lhs - rhs).abs() <= 2.0 * f64::EPSILON * rhs.max(1.0));
    }

    #[test]
    fn orbit_reduces_to_single_map_application() {
        let m = beta040_map();
        let p0 = SigmaPoint::new(0.3, 0.1).unwrap();
        let stats = iterate_orbit(&m, &p0, 1, 7);
        assert_eq!(stats.steps.len(), 1);
        assert_eq!(stats.steps[0].x, 0.3);
        assert_relative_eq!(
            stats.steps[0].r_neu,
            0.3f64.powf(-0.75) + 1.0,
            max_relative = 1e-13
        );
        assert!(stats.escaped_at.is_none());
    }

    #[test]
    fn escaping_orbit_records_completed_count() {
        let base = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap();
        let m = PoincareParams::new(base, 3.0, 1.0, 1.0).unwrap();
        let p0 = SigmaPoint::new(1.0, 0.0).unwrap();
        let stats = iterate_orbit(&m, &p0, 100, 0);
        assert_eq!(stats.escaped_at, Some(1));
        assert_eq!(stats.steps.len(), 1);
        let csv = orbit_csv(&stats);
        assert!(csv.contains("# status: escaped after 1 steps"));
    }

    #[test]
    fn paired_orbits_mirror_exactly() {
        let m = beta040_map();
        let p = SigmaPoint::new(0.4, 0.25).unwrap();
        let q = SigmaPoint::new(-0.4, -0.25).unwrap();
        let sa = iterate_orbit(&m, &p, 200, 1);
        let sb = iterate_orbit(&m, &q, 200, 1);
        assert_eq!(sa.steps.len(), sb.steps.len());
        for (a, b) in sa.steps.iter().zip(&sb.steps) {
            assert_eq!(a.x.to_bits(), (-b.x).to_bits());
            assert_eq!(a.y.to_bits(), (-b.y).to_bits());
            assert_eq!(a.r_neu.to_bits(), b.r_neu.to_bits());
        }
    }

    #[test]
    fn long_orbit_return_time_average_stabilizes() {
        let m = beta040_map();
        let p0 = SigmaPoint::new(0.3, 0.1).unwrap();
        let s1 = iterate_orbit(&m, &p0, 100_000, 0);
        let s2 = iterate_orbit(&m, &p0, 200_000, 0);
        assert!(s1.escaped_at.is_none());
        let mean = |s: &OrbitStats| {
            s.steps.iter().map(|st| st.r_neu).sum::<f64>() / s.steps.len() as f64
        };
        let m1 = mean(&s1);
        let m2 = mean(&s2);
        assert!(m1.is_finite() && m2.is_finite());
        assert!(
            (m1 - m2).abs() / m2 < 0.1,
            "running means {m1} vs {m2} diverge"
        );
    }

    #[test]
    fn g_property_report_on_standard_grid() {
        let m = beta040_map();
        let mut grid = Vec::new();
        for i in 1..=20 {
            let x = i as f64 / 20.0;
            for j in 0..5 {
                let y = -1.0 + j as f64 / 2.0;
                grid.push((x, y));
                grid.push((-x, y));
            }
        }
        let report = check_g_properties(&m, &grid);
        assert!(report.g1_ok, "{}", report.to_text());
        assert!(report.eta < 1.0);
        assert_relative_eq!(report.eta, (-10.0f64).exp(), max_relative = 1e-12);
        assert!(report.fd_max_rel_err < 1e-6, "{}", report.fd_max_rel_err);
        assert!(report.fiber_ok);
        assert!(report.dx_decay_ok);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn q_table_interpolates_and_extends() {
        use crate::fields::State;
        use crate::ode::SectionHit;
        let mk = |x0: f64, q: f64| DulacSample {
            x0,
            y0: 1.0,
            z0: Some(1.0),
            exit: SectionHit {
                t_hit: 1.0,
                s_hit: State::three_d(1.0, 0.0, 0.1),
                residual: 0.0,
            },
            omega: 0.1,
            tau: 1.0,
            q,
        };
        // q linear in ln x: q = -0.1 ln x
        let samples: Vec<DulacSample> = [1e-4, 1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&x| mk(x, -0.1 * x.ln()))
            .collect();
        let refs: Vec<&DulacSample> = samples.iter().collect();
        let table = QTable::from_sweep(&refs).unwrap();
        assert_relative_eq!(table.eval(3e-3), -0.1 * 3e-3f64.ln(), max_relative = 1e-12);
        // extrapolation keeps the boundary slope
        assert_relative_eq!(table.eval(1e-5), -0.1 * 1e-5f64.ln(), max_relative = 1e-12);
    }

    proptest! {
        // Exact odd equivariance of the full map and the quotient map.
        #[test]
        fn odd_equivariance(x in prop::num::f64::NORMAL.prop_map(|v| (v % 1.0)), y in -1.0f64..1.0) {
            prop_assume!(x != 0.0 && x.is_finite() && x.abs() <= 1.0);
            let m = beta040_map();
            let fwd = f_neu(&m, x).unwrap();
            let bwd = f_neu(&m, -x).unwrap();
            prop_assert_eq!(fwd.to_bits(), (-bwd).to_bits());
            if let (Ok(ia), Ok(ib)) = (
                p_neu(&m, &SigmaPoint::new(x, y).unwrap()),
                p_neu(&m, &SigmaPoint::new(-x, -y).unwrap()),
            ) {
                prop_assert_eq!(ia.x().to_bits(), (-ib.x()).to_bits());
                prop_assert_eq!(ia.y().to_bits(), (-ib.y()).to_bits());
            }
        }
    }
}
