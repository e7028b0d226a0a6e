//! Martingale-coboundary decomposition of cos(2πx) along a random expanding system.

use rdslab::decomposition::{breve_decomposition, system_for, DecompositionSetup, DecompositionStream};
use rdslab::observable::Observable;
use rdslab::random_system::{DrivingSpec, MapFamily};
use rdslab::transfer::UlamCache;

fn main() -> rdslab::Result<()> {
    let setup = DecompositionSetup::new(1024, 200, 30);
    let spec = DrivingSpec::iid(0.35, 0.65, 1);
    let system = system_for(MapFamily::Expanding, spec, setup, 64, 32)?;
    let cache = UlamCache::default();
    let obs = Observable::cos();
    println!("{:>5} {:>8} {:>12}", "fiber", "alpha", "||P psi||_1");
    for step in DecompositionStream::new(&system, &cache, &obs, setup, 0, 32)? {
        let step = step?;
        if step.index % 4 == 0 {
            println!("{:>5} {:>8.4} {:>12.3e}", step.index, step.op.fiber.alpha, step.residual);
        }
    }
    let sec = breve_decomposition(&system, &cache, &obs, setup, 64)?;
    println!("secondary decomposition: Cesaro gap {:.3e}, residual {:.3e}", sec.stability_gap, sec.residual);
    Ok(())
}
