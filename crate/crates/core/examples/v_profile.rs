//! Conditional variance profile V_{n,n} converging to 1.

use rdslab::decomposition::{system_for, DecompositionSetup};
use rdslab::observable::Observable;
use rdslab::processes::{v_statistics, QuenchedTables};
use rdslab::random_system::{DrivingSpec, MapFamily};
use rdslab::transfer::UlamCache;

fn main() -> rdslab::Result<()> {
    let n = 4096;
    let setup = DecompositionSetup::new(1024, 200, 30);
    let system = system_for(MapFamily::Expanding, DrivingSpec::iid(0.35, 0.65, 5), setup, 0, n)?;
    let tables = QuenchedTables::build(&system, &UlamCache::default(), &Observable::cos(), setup, n, true)?;
    let grid = [256, 512, 1024, 2048, 4096];
    println!("{:>6} {:>10} {:>10} {:>12}", "n", "mean", "std_err", "||V-1||_2");
    for s in v_statistics(&system, &tables, &grid, 1000, 5)? {
        println!("{:>6} {:>10.5} {:>10.2e} {:>12.4e}", s.n, s.mean, s.std_err, s.l2_deviation);
    }
    Ok(())
}
