//! Equivariant density of a random LSV system at fiber 0, from Ulam pushforwards.

use rdslab::random_system::{make_path, DrivingSpec, MapFamily, RandomSystem};
use rdslab::transfer::{bin_centers, equivariant_density, UlamCache};

fn main() -> rdslab::Result<()> {
    let bins = 512;
    let burn = 400;
    let spec = DrivingSpec::iid(0.2, 0.6, 7);
    let system = RandomSystem::new(MapFamily::Lsv, make_path(spec, -(burn as i64), 0)?);
    let (h, gap) = equivariant_density(&system, &UlamCache::default(), burn, bins)?;
    println!("Cauchy gap ||h(400) - h(200)||_1 = {gap:.2e}");
    println!("{:>8} {:>10}", "x", "h(x)");
    for (x, v) in bin_centers(bins).zip(&h.density).step_by(32) {
        println!("{x:>8.4} {v:>10.4}");
    }
    Ok(())
}
