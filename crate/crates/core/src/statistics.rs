//! Return-time tail estimation and correlation decay of the suspension flow
//! over the section map.
//!
//! Sampling follows the invariant measure by pullback: orbits start uniform,
//! burn in, and only then feed statistics. Everything is seeded and merges
//! deterministically (fixed chunking, pairwise sums in index order), so a
//! rerun with the same seed is bit-identical regardless of worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::ode::fmt_full;
use crate::poincare::{derive_seed, p_neu, random_sigma_point, PoincareParams, SigmaPoint};
use crate::regression::linear_fit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("power-law fit needs at least {needed} positive points in the window, got {got}")]
    FitFailure { needed: usize, got: usize },
    #[error("tail undersampled: {achieved} exceedances of the window top, need {needed}")]
    TailUndersampled { achieved: usize, needed: usize },
    #[error("simulation failure: {0}")]
    SimulationFailure(String),
}

/// Ordinary least squares on `(ln x, ln y)` restricted to `window`;
/// returns the slope and its residual standard error.
pub fn fit_power_law(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<(f64, f64), StatsError> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        if x >= window.0 && x <= window.1 && x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    if lx.len() < 3 {
        return Err(StatsError::FitFailure {
            needed: 3,
            got: lx.len(),
        });
    }
    let fit = linear_fit(&lx, &ly).ok_or(StatsError::FitFailure {
        needed: 3,
        got: lx.len(),
    })?;
    Ok((fit.slope, fit.slope_stderr))
}

/// Survival of the leading-order roof `r(x) = zeta x^(-1/beta2)` under the
/// uniform measure on one branch `(0, 1]`: exactly `min(1, (t/zeta)^(-beta2))`.
/// The closed-form reference the empirical tails are checked against.
pub fn leading_order_tail_oracle(zeta: f64, beta2: f64, t: f64) -> f64 {
    if t <= zeta {
        1.0
    } else {
        (t / zeta).powf(-beta2)
    }
}

/// Roof used when collecting return-time statistics.
#[derive(Clone, Default)]
pub enum RoofSpec {
    /// `zeta |x|^(-1/beta2) + tau2(x)` from the map parameters.
    #[default]
    FromMap,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Knobs of the tail pipeline beyond the core arguments.
#[derive(Clone)]
pub struct TailOptions {
    pub burn_in: usize,
    pub n_ensemble: usize,
    pub fit_window: (f64, f64),
    pub min_tail_count: usize,
    pub roof: RoofSpec,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            burn_in: 10_000,
            n_ensemble: 32,
            fit_window: (1e2, 1e4),
            min_tail_count: 50,
            roof: RoofSpec::FromMap,
        }
    }
}

/// Empirical survival function of the return time with a power-law tail fit.
#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub thresholds: Vec<f64>,
    pub survival: Vec<f64>,
    /// Positive tail exponent `e` of the fitted `survival ~ t^(-e)`;
    /// NaN when `degenerate`.
    pub fitted_exponent: f64,
    pub stderr: f64,
    /// Requested fit window.
    pub fit_window: (f64, f64),
    /// Window the fit actually used: the top is trimmed to the last threshold
    /// backed by at least `min_tail_count` exceedances, so every fitted
    /// survival value has bounded relative sampling noise.
    pub fit_window_used: (f64, f64),
    pub n_orbit: usize,
    /// Number of collected return times exceeding the top of the requested
    /// fit window.
    pub tail_count_at_window_max: usize,
    /// Set when the sample admits no power-law fit (constant roof, or fewer
    /// than three positive survival points in the window).
    pub degenerate: bool,
    pub seed: u64,
}

impl TailEstimate {
    /// CSV export `t,survival` with `# `-prefixed metadata lines on top.
    pub fn to_csv(&self, metadata: &str) -> String {
        let mut out = String::new();
        for line in metadata.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!(
            "# fitted_exponent: {}\n# stderr: {}\n# fit_window: {} {}\n# fit_window_used: {} {}\n# tail_count_at_window_max: {}\n# degenerate: {}\n",
            fmt_full(self.fitted_exponent),
            fmt_full(self.stderr),
            fmt_full(self.fit_window.0),
            fmt_full(self.fit_window.1),
            fmt_full(self.fit_window_used.0),
            fmt_full(self.fit_window_used.1),
            self.tail_count_at_window_max,
            self.degenerate,
        ));
        out.push_str("t,survival\n");
        for (t, s) in self.thresholds.iter().zip(&self.survival) {
            out.push_str(&format!("{},{}\n", fmt_full(*t), fmt_full(*s)));
        }
        out
    }
}

/// Iterates the quotient map from a uniformly seeded ensemble past a burn-in,
/// collects return times, computes the empirical survival function over the
/// thresholds and fits a power law inside the configured window.
pub fn return_time_tail(
    params: &PoincareParams,
    n_orbit: usize,
    thresholds: &[f64],
    seed: u64,
    opts: &TailOptions,
) -> Result<TailEstimate, StatsError> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::SimulationFailure(
            "thresholds must be strictly increasing and nonempty".into(),
        ));
    }
    if n_orbit == 0 {
        return Err(StatsError::SimulationFailure("n_orbit is zero".into()));
    }
    let roof = |x: f64| -> f64 {
        match &opts.roof {
            RoofSpec::FromMap => params.return_time(x),
            RoofSpec::Custom(f) => f(x),
        }
    };

    let n_ens = opts.n_ensemble.max(1);
    let quotas: Vec<usize> = (0..n_ens)
        .map(|i| n_orbit / n_ens + usize::from(i < n_orbit % n_ens))
        .collect();

    struct OrbitAccum {
        buckets: Vec<u64>,
        r_min: f64,
        r_max: f64,
    }

    let per_orbit: Vec<OrbitAccum> = quotas
        .par_iter()
        .enumerate()
        .map(|(i, &quota)| {
            let orbit_seed = derive_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(orbit_seed);
            let mut buckets = vec![0u64; thresholds.len() + 1];
            let mut r_min = f64::INFINITY;
            let mut r_max = f64::NEG_INFINITY;
            let mut x = burned_in_x(params, &mut rng, opts.burn_in);
            let mut collected = 0usize;
            let mut reseeds = 0usize;
            while collected < quota {
                let r = roof(x);
                r_min = r_min.min(r);
                r_max = r_max.max(r);
                // number of thresholds strictly below r
                let idx = thresholds.partition_point(|t| *t < r);
                buckets[idx] += 1;
                collected += 1;
                x = match crate::poincare::f_neu(params, x) {
                    Ok(next) if next != 0.0 && next.abs() <= 1.0 => next,
                    _ => {
                        reseeds += 1;
                        if reseeds > 1000 {
                            break;
                        }
                        burned_in_x(params, &mut rng, opts.burn_in)
                    }
                };
            }
            OrbitAccum {
                buckets,
                r_min,
                r_max,
            }
        })
        .collect();

    // deterministic merge in orbit-index order
    let mut buckets = vec![0u64; thresholds.len() + 1];
    let mut r_min = f64::INFINITY;
    let mut r_max = f64::NEG_INFINITY;
    for acc in &per_orbit {
        for (b, v) in buckets.iter_mut().zip(&acc.buckets) {
            *b += v;
        }
        r_min = r_min.min(acc.r_min);
        r_max = r_max.max(acc.r_max);
    }
    let total: u64 = buckets.iter().sum();
    if total == 0 {
        return Err(StatsError::SimulationFailure(
            "no return times collected".into(),
        ));
    }

    // survival[j] = #(r > t_j)/N via suffix sums: bucket k holds r in (t_k-ish]
    let mut survival_counts = vec![0u64; thresholds.len()];
    let mut suffix = 0u64;
    for j in (0..thresholds.len()).rev() {
        suffix += buckets[j + 1];
        survival_counts[j] = suffix;
    }
    let survival: Vec<f64> = survival_counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();

    // constant roof (or numerically constant): no power law to fit
    let degenerate_roof = r_max - r_min <= 1e-12 * r_max.abs().max(1.0);

    // exceedance count at the first threshold reaching the window top
    let tail_count_at_window_max = thresholds
        .iter()
        .zip(&survival_counts)
        .find(|(t, _)| **t >= opts.fit_window.1)
        .map(|(_, c)| *c)
        .or_else(|| survival_counts.last().copied())
        .unwrap_or(0) as usize;

    if degenerate_roof {
        return Ok(TailEstimate {
            thresholds: thresholds.to_vec(),
            survival,
            fitted_exponent: f64::NAN,
            stderr: f64::NAN,
            fit_window: opts.fit_window,
            fit_window_used: opts.fit_window,
            n_orbit: total as usize,
            tail_count_at_window_max,
            degenerate: true,
            seed,
        });
    }

    // Trim the top of the fit window to the last threshold with at least
    // min_tail_count exceedances: beyond it the survival values are noise.
    let mut top = opts.fit_window.0;
    for (t, c) in thresholds.iter().zip(&survival_counts) {
        if *t > opts.fit_window.1 {
            break;
        }
        if *c as usize >= opts.min_tail_count {
            top = top.max(*t);
        }
    }
    let window_used = (opts.fit_window.0, top);

    match fit_power_law(thresholds, &survival, window_used) {
        Ok((slope, stderr)) => Ok(TailEstimate {
            thresholds: thresholds.to_vec(),
            survival,
            fitted_exponent: -slope,
            stderr,
            fit_window: opts.fit_window,
            fit_window_used: window_used,
            n_orbit: total as usize,
            tail_count_at_window_max,
            degenerate: false,
            seed,
        }),
        Err(StatsError::FitFailure { .. }) => Err(StatsError::TailUndersampled {
            achieved: tail_count_at_window_max,
            needed: opts.min_tail_count,
        }),
        Err(e) => Err(e),
    }
}

fn burned_in_x(params: &PoincareParams, rng: &mut ChaCha8Rng, burn_in: usize) -> f64 {
    loop {
        let mut x: f64 = rng.random_range(-1.0..1.0);
        while x.abs() < 1e-12 {
            x = rng.random_range(-1.0..1.0);
        }
        let mut ok = true;
        for _ in 0..burn_in {
            match crate::poincare::f_neu(params, x) {
                Ok(next) if next != 0.0 && next.abs() <= 1.0 => x = next,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return x;
        }
    }
}

/// Observables on the suspension space over the section map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Observable {
    Constant { value: f64 },
    /// `bump((x - x_center)/x_width) * bump(2 u/r - 1)`: compactly supported
    /// and smooth in the expanding coordinate, smooth along the flow
    /// direction, vanishing at both ends of every fiber.
    Bump { x_center: f64, x_width: f64 },
}

fn smooth_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

impl Observable {
    pub fn describe(&self) -> String {
        match self {
            Observable::Constant { value } => format!("constant({value})"),
            Observable::Bump { x_center, x_width } => {
                format!("bump(x_center={x_center}, x_width={x_width}, flow-smooth)")
            }
        }
    }

    /// Evaluates at base coordinate `x` and normalized fiber phase
    /// `u_frac = u / r(x)` in `[0, 1)`.
    fn eval(&self, x: f64, u_frac: f64) -> f64 {
        match self {
            Observable::Constant { value } => *value,
            Observable::Bump { x_center, x_width } => {
                smooth_bump((x - x_center) / x_width) * smooth_bump(2.0 * u_frac - 1.0)
            }
        }
    }
}

/// Absolute correlation of two observables per time lag, with a per-lag
/// Monte-Carlo standard-error estimate.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Vec<f64>,
    pub v_desc: String,
    pub w_desc: String,
    pub n_samples: usize,
    pub seed: u64,
}

impl CorrelationSeries {
    /// CSV export `t,rho` with `# `-prefixed metadata lines on top.
    pub fn to_csv(&self, metadata: &str) -> String {
        let mut out = String::new();
        for line in metadata.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!(
            "# v: {}\n# w: {}\n# n_samples: {}\n",
            self.v_desc, self.w_desc, self.n_samples
        ));
        out.push_str("t,rho\n");
        for (t, r) in self.times.iter().zip(&self.rho) {
            out.push_str(&format!("{},{}\n", fmt_full(*t), fmt_full(*r)));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CorrelationOptions {
    pub base_iterates: usize,
    pub burn_in: usize,
    /// Reverse the time sampling: evaluate the first observable at the late
    /// end of each window and the second at the start. Combined with swapped
    /// arguments this estimates the same correlation, which is what the
    /// swap-symmetry check exercises.
    pub shift_first: bool,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            base_iterates: 0, // 0: match n_samples (at least 1e6)
            burn_in: 10_000,
            shift_first: false,
        }
    }
}

/// Estimates `rho_t(v, w) = |mean(v w o flow_t) - mean(v) mean(w)|` over the
/// suspension flow with roof `r(x)`, by Monte-Carlo over `n_samples` window
/// starts drawn uniformly along one long flow trajectory.
pub fn correlation_decay(
    params: &PoincareParams,
    v: &Observable,
    w: &Observable,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
    opts: &CorrelationOptions,
) -> Result<CorrelationSeries, StatsError> {
    if t_grid.is_empty() || t_grid.iter().any(|t| *t < 0.0 || !t.is_finite()) {
        return Err(StatsError::SimulationFailure(
            "time grid must be nonempty and nonnegative".into(),
        ));
    }
    if n_samples == 0 {
        return Err(StatsError::SimulationFailure("n_samples is zero".into()));
    }
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let n_base = if opts.base_iterates == 0 {
        n_samples.max(1_000_000)
    } else {
        opts.base_iterates
    };

    // One long suspension trajectory: base orbit + cumulative roof.
    let mut xs = Vec::with_capacity(n_base);
    let mut cum = Vec::with_capacity(n_base + 1);
    cum.push(0.0);
    {
        let base_seed = derive_seed(seed, 0xBA5E);
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        let mut p = burned_in_point(params, &mut rng, opts.burn_in)?;
        let mut reseeds = 0usize;
        let mut s = 0.0;
        while xs.len() < n_base {
            xs.push(p.x());
            s += params.return_time(p.x());
            cum.push(s);
            p = match p_neu(params, &p) {
                Ok(next) => next,
                Err(_) => {
                    reseeds += 1;
                    if reseeds > 1000 {
                        return Err(StatsError::SimulationFailure(
                            "domain escapes dominate the base orbit".into(),
                        ));
                    }
                    burned_in_point(params, &mut rng, opts.burn_in)?
                }
            };
        }
    }
    let span = *cum.last().unwrap();
    if span <= t_max + 2.0 {
        return Err(StatsError::SimulationFailure(format!(
            "base trajectory span {span} too short for max lag {t_max}"
        )));
    }

    // Sorted sample starts: evaluation per lag is then a linear merge scan.
    let mut starts: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5A3));
        (0..n_samples)
            .map(|_| rng.random_range(0.0..span - t_max - 1.0))
            .collect()
    };
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let locate = |s: f64, hint: usize| -> usize {
        // first index with cum[idx+1] > s, scanning forward from hint
        let mut j = hint;
        while cum[j + 1] <= s {
            j += 1;
        }
        j
    };

    const CHUNK: usize = 8192;
    let eval_series = |obs: &Observable, shift: f64| -> Vec<f64> {
        starts
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut j = match cum.binary_search_by(|c| c.partial_cmp(&(chunk[0] + shift)).unwrap())
                {
                    Ok(i) => i,
                    Err(i) => i.saturating_sub(1),
                };
                chunk
                    .iter()
                    .map(|&s0| {
                        let s = s0 + shift;
                        j = locate(s, j);
                        let r = cum[j + 1] - cum[j];
                        obs.eval(xs[j], (s - cum[j]) / r)
                    })
                    .collect::<Vec<f64>>()
            })
            .flatten()
            .collect()
    };

    let (fixed_obs, moving_obs) = if opts.shift_first { (w, v) } else { (v, w) };
    let v_vals = eval_series(fixed_obs, 0.0);
    let mean_v = pairwise_mean(&v_vals);

    let mut rho = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let w_vals = eval_series(moving_obs, t);
        let mean_w = pairwise_mean(&w_vals);
        let products: Vec<f64> = v_vals
            .par_chunks(CHUNK)
            .zip(w_vals.par_chunks(CHUNK))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<f64>>())
            .flatten()
            .collect();
        let mean_vw = pairwise_mean(&products);
        let sq: Vec<f64> = products.iter().map(|p| p * p).collect();
        let mean_vw2 = pairwise_mean(&sq);
        let var = (mean_vw2 - mean_vw * mean_vw).max(0.0);
        rho.push((mean_vw - mean_v * mean_w).abs());
        stderr.push((var / n_samples as f64).sqrt());
    }

    Ok(CorrelationSeries {
        times: t_grid.to_vec(),
        rho,
        stderr,
        v_desc: v.describe(),
        w_desc: w.describe(),
        n_samples,
        seed,
    })
}

fn burned_in_point(
    params: &PoincareParams,
    rng: &mut ChaCha8Rng,
    burn_in: usize,
) -> Result<SigmaPoint, StatsError> {
    for _ in 0..1000 {
        let mut p = random_sigma_point(rng.random());
        let mut ok = true;
        for _ in 0..burn_in {
            match p_neu(params, &p) {
                Ok(next) => p = next,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(p);
        }
    }
    Err(StatsError::SimulationFailure(
        "could not burn in a section point".into(),
    ))
}

/// Numerically stable mean: chunk sums folded pairwise in index order.
fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 64 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Slope of the upper envelope of a correlation series in log-log
/// coordinates: a power-law fit through the local maxima of `rho` inside the
/// window.
pub fn envelope_slope(
    series: &CorrelationSeries,
    window: (f64, f64),
) -> Result<(f64, f64), StatsError> {
    let n = series.times.len();
    let mut ts = Vec::new();
    let mut rs = Vec::new();
    for i in 0..n {
        let t = series.times[i];
        if t < window.0 || t > window.1 || series.rho[i] <= 0.0 {
            continue;
        }
        let left_ok = i == 0 || series.rho[i] >= series.rho[i - 1];
        let right_ok = i + 1 == n || series.rho[i] >= series.rho[i + 1];
        if left_ok || right_ok {
            // local maxima and monotone edges both carry the envelope
            if (i == 0 || series.rho[i] >= series.rho[i - 1])
                && (i + 1 == n || series.rho[i] >= series.rho[i + 1])
            {
                ts.push(t);
                rs.push(series.rho[i]);
            }
        }
    }
    if ts.len() < 3 {
        return Err(StatsError::FitFailure {
            needed: 3,
            got: ts.len(),
        });
    }
    fit_power_law(&ts, &rs, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::NeutralParams;
    use approx::assert_relative_eq;

    fn beta43_map() -> PoincareParams {
        let base = NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap();
        PoincareParams::new(base, 1.9, 1.0, 1.0).unwrap()
    }

    #[test]
    fn power_law_fit_exact() {
        let xs: Vec<f64> = (1..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(-2)).collect();
        let (slope, stderr) = fit_power_law(&xs, &ys, (1.0, 50.0)).unwrap();
        assert_relative_eq!(slope, -2.0, max_relative = 1e-12);
        assert!(stderr < 1e-12);
    }

    #[test]
    fn power_law_fit_with_seeded_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let xs: Vec<f64> = (0..60).map(|i| 10.0f64.powf(i as f64 / 20.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.5 * x.powf(-4.0 / 3.0) * (1.0 + 0.1 * rng.random_range(-1.0..1.0)))
            .collect();
        let (slope, stderr) = fit_power_law(&xs, &ys, (1.0, 1e3)).unwrap();
        assert!(
            (slope + 4.0 / 3.0).abs() <= 3.0 * stderr.max(1e-3),
            "slope {slope} stderr {stderr}"
        );
    }

    #[test]
    fn power_law_fit_degenerate_window() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [1.0, 0.5, 0.25];
        assert!(matches!(
            fit_power_law(&xs, &ys, (10.0, 20.0)),
            Err(StatsError::FitFailure { .. })
        ));
        assert!(matches!(
            fit_power_law(&xs[..1], &ys[..1], (0.5, 2.0)),
            Err(StatsError::FitFailure { .. })
        ));
    }

    #[test]
    fn oracle_matches_closed_form() {
        assert_eq!(leading_order_tail_oracle(1.0, 4.0 / 3.0, 0.5), 1.0);
        assert_relative_eq!(
            leading_order_tail_oracle(1.0, 4.0 / 3.0, 100.0),
            100.0f64.powf(-4.0 / 3.0),
            max_relative = 1e-14
        );
        // the fitting machinery recovers the exponent exactly on the oracle
        let ts: Vec<f64> = (0..40).map(|i| 10.0f64.powf(1.0 + i as f64 / 13.0)).collect();
        let sv: Vec<f64> = ts
            .iter()
            .map(|&t| leading_order_tail_oracle(0.7, 4.0 / 3.0, t))
            .collect();
        let (slope, _) = fit_power_law(&ts, &sv, (10.0, 1e4)).unwrap();
        assert_relative_eq!(-slope, 4.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn survival_is_monotone_and_seeded_runs_are_identical() {
        let m = beta43_map();
        let thresholds: Vec<f64> = (0..30).map(|i| 10.0f64.powf(i as f64 / 10.0)).collect();
        let opts = TailOptions {
            fit_window: (2.0, 50.0),
            min_tail_count: 10,
            ..Default::default()
        };
        let a = return_time_tail(&m, 200_000, &thresholds, 99, &opts).unwrap();
        let b = return_time_tail(&m, 200_000, &thresholds, 99, &opts).unwrap();
        for w in a.survival.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(a.survival.iter().all(|s| (0.0..=1.0).contains(s)));
        assert_eq!(a.survival, b.survival);
        assert_eq!(a.fitted_exponent.to_bits(), b.fitted_exponent.to_bits());
        assert!(!a.degenerate);
        assert!(a.fitted_exponent > 0.5 && a.fitted_exponent < 3.0);
    }

    #[test]
    fn constant_roof_is_flagged_degenerate() {
        let m = beta43_map();
        let thresholds = [1.0, 2.0, 5.0, 10.0, 20.0];
        let opts = TailOptions {
            roof: RoofSpec::Custom(Arc::new(|_| 7.0)),
            ..Default::default()
        };
        let est = return_time_tail(&m, 10_000, &thresholds, 1, &opts).unwrap();
        assert!(est.degenerate);
        assert!(est.fitted_exponent.is_nan());
        // survival is the indicator of t < 7
        assert_eq!(est.survival, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn undersampled_tail_is_an_error() {
        let m = beta43_map();
        let thresholds: Vec<f64> = (0..20).map(|i| 10.0f64.powf(i as f64 / 3.0)).collect();
        let opts = TailOptions {
            fit_window: (1e2, 1e6),
            min_tail_count: 50,
            ..Default::default()
        };
        let err = return_time_tail(&m, 20_000, &thresholds, 5, &opts).unwrap_err();
        assert!(matches!(err, StatsError::TailUndersampled { .. }));
    }

    #[test]
    fn constant_observable_has_zero_correlation() {
        let m = beta43_map();
        let v = Observable::Bump {
            x_center: 0.3,
            x_width: 0.25,
        };
        let w = Observable::Constant { value: 2.0 };
        let grid = [0.0, 1.0, 5.0, 20.0];
        let series =
            correlation_decay(&m, &v, &w, &grid, 20_000, 7, &CorrelationOptions::default())
                .unwrap();
        let bound = 3.0 / (series.n_samples as f64).sqrt();
        for r in &series.rho {
            assert!(*r <= bound, "rho {r} above Monte-Carlo bound {bound}");
        }
    }

    #[test]
    fn zero_lag_correlation_is_the_variance() {
        let m = beta43_map();
        let v = Observable::Bump {
            x_center: 0.3,
            x_width: 0.25,
        };
        let series = correlation_decay(
            &m,
            &v,
            &v,
            &[0.0],
            100_000,
            11,
            &CorrelationOptions::default(),
        )
        .unwrap();
        // independent draw of the ensemble variance
        let series2 = correlation_decay(
            &m,
            &v,
            &v,
            &[0.0],
            100_000,
            1213,
            &CorrelationOptions::default(),
        )
        .unwrap();
        let se = series.stderr[0] + series2.stderr[0];
        assert!(
            (series.rho[0] - series2.rho[0]).abs() <= 3.0 * se,
            "var estimates {} vs {} with combined se {se}",
            series.rho[0],
            series2.rho[0]
        );
        assert!(series.rho[0] > 0.0);
    }

    #[test]
    fn swapped_reversed_estimator_agrees_within_errors() {
        // Swapping v and w while reversing the time sampling estimates the
        // same correlation (a bare swap does not: the flow is irreversible).
        let m = beta43_map();
        let v = Observable::Bump {
            x_center: 0.3,
            x_width: 0.25,
        };
        let w = Observable::Bump {
            x_center: -0.4,
            x_width: 0.3,
        };
        let grid = [3.0, 10.0];
        let a = correlation_decay(&m, &v, &w, &grid, 200_000, 3, &CorrelationOptions::default())
            .unwrap();
        let reversed = CorrelationOptions {
            shift_first: true,
            ..Default::default()
        };
        let b = correlation_decay(&m, &w, &v, &grid, 200_000, 4, &reversed).unwrap();
        for i in 0..grid.len() {
            let se = a.stderr[i] + b.stderr[i] + 1e-9;
            assert!(
                (a.rho[i] - b.rho[i]).abs() <= 3.0 * se,
                "lag {}: {} vs {} (se {se})",
                grid[i],
                a.rho[i],
                b.rho[i]
            );
        }
        // with the same seed the pairing is literally identical
        let c = correlation_decay(&m, &w, &v, &grid, 200_000, 3, &reversed).unwrap();
        for (x, y) in a.rho.iter().zip(&c.rho) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn correlation_series_is_seed_deterministic() {
        let m = beta43_map();
        let v = Observable::Bump {
            x_center: 0.3,
            x_width: 0.25,
        };
        let grid = [1.0, 4.0];
        let opts = CorrelationOptions {
            base_iterates: 50_000,
            burn_in: 1_000,
            ..Default::default()
        };
        let a = correlation_decay(&m, &v, &v, &grid, 30_000, 21, &opts).unwrap();
        let b = correlation_decay(&m, &v, &v, &grid, 30_000, 21, &opts).unwrap();
        for (x, y) in a.rho.iter().zip(&b.rho) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn envelope_slope_of_synthetic_decay() {
        let times: Vec<f64> = (0..40).map(|i| 10.0f64.powf(i as f64 / 13.0)).collect();
        let rho: Vec<f64> = times
            .iter()
            .enumerate()
            .map(|(i, t)| t.powf(-1.5) * if i % 2 == 0 { 1.0 } else { 0.3 })
            .collect();
        let series = CorrelationSeries {
            times,
            rho,
            stderr: vec![0.0; 40],
            v_desc: "s".into(),
            w_desc: "s".into(),
            n_samples: 1,
            seed: 0,
        };
        let (slope, _) = envelope_slope(&series, (1.0, 1e3)).unwrap();
        assert_relative_eq!(slope, -1.5, max_relative = 1e-6);
    }

    #[test]
    fn csv_metadata_block_is_prefixed() {
        let est = TailEstimate {
            thresholds: vec![1.0, 2.0],
            survival: vec![0.5, 0.25],
            fitted_exponent: 1.0,
            stderr: 0.0,
            fit_window: (1.0, 2.0),
            fit_window_used: (1.0, 2.0),
            n_orbit: 4,
            tail_count_at_window_max: 1,
            degenerate: false,
            seed: 0,
        };
        let csv = est.to_csv("key = 1\nother = 2");
        assert!(csv.starts_with("# key = 1\n# other = 2\n"));
        assert!(csv.contains("t,survival\n"));
    }
}
