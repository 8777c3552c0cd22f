use std::time::Instant;
use neutral_lorenz::dulac::{sweep, LeafAnchors, Spacing, SweepGrid};
use neutral_lorenz::exponents::{estimate_beta2, fit_adjustment};
use neutral_lorenz::fields::NeutralParams;
use neutral_lorenz::ode::IntegratorConfig;

fn run(label: &str, p: &NeutralParams, anchors: &LeafAnchors, n: usize) {
    let grid = SweepGrid { x_min: 1e-5, x_max: 1e-4, n_points: n, spacing: Spacing::Log };
    let cfg = IntegratorConfig::default();
    let t0 = Instant::now();
    let sw = sweep(p, &grid.points().unwrap(), anchors, &cfg).unwrap();
    let dt = t0.elapsed();
    let samples = sw.samples();
    let e = p.derived_exponents();
    let beta_fit = fit_adjustment(&samples, e.beta).unwrap();
    let beta2_fit = estimate_beta2(&samples, e.beta2).unwrap();
    let first_adj = beta_fit.adjusted.iter().find(|v| v.is_finite()).unwrap();
    let last_adj = beta_fit.adjusted.iter().rev().find(|v| v.is_finite()).unwrap();
    println!("{label}: ok={}/{} time={:.2?} ({:.1} ms/pt)", sw.n_ok(), n, dt, dt.as_secs_f64()*1e3/n as f64);
    println!("  beta:  theory={:.6} slope_fit={:.6} err={:+.2e}  c_fit={:.6}  adj_err(first x=1e-4)={:.3e} adj_err(last x=1e-5)={:.3e}",
        e.beta, beta_fit.slope_fit, beta_fit.slope_fit - e.beta, beta_fit.c_fit,
        (first_adj - e.beta).abs(), (last_adj - e.beta).abs());
    let first_adj2 = beta2_fit.adjusted.iter().find(|v| v.is_finite()).unwrap();
    let last_adj2 = beta2_fit.adjusted.iter().rev().find(|v| v.is_finite()).unwrap();
    println!("  beta2: theory={:.6} slope_fit={:.6} err={:+.2e}  zeta={:.6}  adj_err(first)={:.3e} adj_err(last)={:.3e}",
        e.beta2, beta2_fit.slope_fit, beta2_fit.slope_fit - e.beta2, beta2_fit.amplitude(),
        (first_adj2 - e.beta2).abs(), (last_adj2 - e.beta2).abs());
}

fn main() {
    let a2 = LeafAnchors { y0: 1.0, z0: 1.0 };
    run("2d beta=0.40 ", &NeutralParams::two_d(15.0, 5.0, 1.0, 3.0).unwrap(), &a2, 50);
    run("2d beta=0.266", &NeutralParams::two_d(15.0, 6.0, 1.0, 2.0).unwrap(), &a2, 50);
    run("m1 beta=0.40 ", &NeutralParams::model1(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 10.0).unwrap(), &a2, 50);
    run("m2 beta=0.40 ", &NeutralParams::model2(15.0, 5.0, 1.0, 3.0, 1.0, 1.0, 10.0).unwrap(), &a2, 50);
    run("m3 beta=0.40 ", &NeutralParams::model3(15.0, 1.0, 5.0, 1.0, 1.0, 3.0, 1.0, 1.0, 10.0).unwrap(), &a2, 50);
    run("m3 beta=0.266", &NeutralParams::model3(15.0, 1.0, 6.0, 1.0, 1.0, 2.0, 1.0, 1.0, 10.0).unwrap(), &a2, 50);
}
