//! Polynomial return-time tails on a Young tower: exponent fit, renewal and decay.

use rdslab::rng::{self, Domain};
use rdslab::tower_sim::{decay_estimate, renewal_check, tail_diagnostics, FiberLaws, TailSpec, TowerObservable, TowerSpec};

fn main() -> rdslab::Result<()> {
    let laws = FiberLaws::new(TowerSpec::new(TailSpec::polynomial(3.0, 64.0)))?;
    let law = laws.law(0)?;
    let mut g = rng::stream(11, Domain::Tower, 0);
    let samples: Vec<usize> = (0..200_000).map(|_| law.sample(&mut g)).collect();
    let fit = tail_diagnostics(&samples, 0.0)?;
    println!("fitted a = {:.3} (true 3), polynomial rejected: {}", fit.a, fit.polynomial_rejected);
    let r = renewal_check(&laws, 200_000, 11)?;
    println!("base frequency x E[R] = {:.4} +/- {:.4}", r.product, r.product_se);
    let lags = [1, 2, 4, 8, 16, 32];
    let d = decay_estimate(&laws, TowerObservable::Base, TowerObservable::Base, &lags, 20_000, 11)?;
    for ((l, c), s) in d.lags.iter().zip(&d.covariance).zip(&d.std_err) {
        println!("lag {l:>3}: cov {c:+.3e} +/- {s:.1e}");
    }
    if let Some(f) = d.fit {
        println!("log-log slope over resolved lags {:.3}", f.slope);
    }
    Ok(())
}
