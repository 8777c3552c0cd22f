use std::time::Instant;
use neutral_lorenz::fields::NeutralParams;
use neutral_lorenz::poincare::PoincareParams;
use neutral_lorenz::statistics::{return_time_tail, TailOptions};

fn main() {
    for (label, base) in [
        ("beta2=4/3", NeutralParams::two_d(15.0, 5.0, 1.0, 3.0).unwrap()),
        ("beta2=2.0", NeutralParams::two_d(15.0, 6.0, 1.0, 2.0).unwrap()),
    ] {
        let a_exp = if label.contains("2.0") { 1.4 } else { 1.9 };
        let m = PoincareParams::new(base.clone(), a_exp, 1.0, 1.0).unwrap();
        let thresholds: Vec<f64> = (0..=60).map(|i| 10.0f64.powf(i as f64 / 12.0)).collect();
        let opts = TailOptions { fit_window: (1e2, 1e4), min_tail_count: 50, ..Default::default() };
        let t0 = Instant::now();
        match return_time_tail(&m, 20_000_000, &thresholds, 42, &opts) {
            Ok(est) => {
                let e = base.derived_exponents();
                println!("{label}: fitted={:.4} (theory {:.4}, rel err {:+.1}%) stderr={:.4} tail@1e4={} time={:.2?}",
                    est.fitted_exponent, e.beta2,
                    100.0*(est.fitted_exponent - e.beta2)/e.beta2,
                    est.stderr, est.tail_count_at_window_max, t0.elapsed());
            }
            Err(err) => println!("{label}: ERROR {err} ({:.2?})", t0.elapsed()),
        }
    }
}
