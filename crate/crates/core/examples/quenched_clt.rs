//! Endpoint CLT: S_n / Σ_n against a standard normal sample, for iid and rotation driving.

use rand_distr::{Distribution, StandardNormal};
use rdslab::decomposition::{system_for, DecompositionSetup};
use rdslab::observable::Observable;
use rdslab::processes::{ensemble_functionals, ProcessKind, QuenchedTables};
use rdslab::random_system::{DrivingSpec, MapFamily};
use rdslab::rng::{self, Domain};
use rdslab::transfer::UlamCache;
use rdslab::wasserstein::{w_p_1d, FunctionalSpec};

fn main() -> rdslab::Result<()> {
    let (n, paths) = (4096, 2000);
    let setup = DecompositionSetup::new(1024, 200, 0);
    let cache = UlamCache::default();
    let mut g = rng::stream(3, Domain::Synthetic, 0);
    let normal: Vec<f64> = (0..paths).map(|_| StandardNormal.sample(&mut g)).collect();
    for (name, spec) in [
        ("iid", DrivingSpec::iid(0.35, 0.65, 3)),
        ("rotation", DrivingSpec::rotation(0.35, 0.65, 3)),
    ] {
        let system = system_for(MapFamily::Expanding, spec, setup, 0, n)?;
        let tables = QuenchedTables::build(&system, &cache, &Observable::cos(), setup, n, false)?;
        let sigma2 = tables.sigma2.values[n];
        let raw = ensemble_functionals(&system, &tables, ProcessKind::Raw, paths, 3, &[FunctionalSpec::ENDPOINT])?;
        let z: Vec<f64> = raw[0].iter().map(|v| v * (n as f64 / sigma2).sqrt()).collect();
        println!("{name:>8}: Sigma_n^2/n = {:.4}, W1 to N(0,1) = {:.4}", sigma2 / n as f64, w_p_1d(&z, &normal, 1.0)?);
    }
    Ok(())
}
