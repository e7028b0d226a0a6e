//! Fitted Wasserstein rate of the self-normalized process against Brownian motion.

use rdslab::config::{DrivingConfig, ExperimentConfig};
use rdslab::experiment::rate_report;
use rdslab::random_system::DrivingKind;

fn main() -> rdslab::Result<()> {
    let mut cfg = ExperimentConfig::new(DrivingConfig {
        kind: DrivingKind::Iid,
        alpha_lo: 0.35,
        alpha_hi: 0.65,
        theta: None,
        phase: None,
        seed: None,
    });
    cfg.ensemble.n_grid = vec![64, 128, 256, 512, 1024];
    cfg.ensemble.paths = 1000;
    cfg.rate.bootstrap = 100;
    let r = rate_report(&cfg)?;
    println!("theoretical band: [{:.3}, {:.3}]", r.band.0, r.band.1);
    for f in &r.functionals {
        println!("{}:", f.functional);
        for r in &f.rows {
            println!("  n = {:>5}  W1 = {:.4}  [{:.4}, {:.4}]", r.n, r.distance, r.ci.0, r.ci.1);
        }
        if let (Some(fit), Some(ci)) = (f.fit, f.slope_ci) {
            println!("  slope {:+.3}, bootstrap 95% [{:+.3}, {:+.3}]", fit.slope, ci.0, ci.1);
        }
    }
    Ok(())
}
