//! Annealed L1 decay of transferred observables for random LSV maps.

use rdslab::observable::Observable;
use rdslab::random_system::{DrivingSpec, MapFamily};
use rdslab::transfer::{annealed_decay_probe, TransferSetup};

fn main() -> rdslab::Result<()> {
    let bins = 512;
    let setup = TransferSetup::new(bins, 300);
    let spec = DrivingSpec::iid(0.3, 0.7, 2);
    let phi = Observable::cos().table(MapFamily::Lsv.fiber(0.5), bins);
    let lags = [1, 2, 4, 8, 16, 32, 64];
    let d = annealed_decay_probe(&spec, MapFamily::Lsv, setup, &phi, &lags, 16)?;
    for ((l, m), s) in d.lags.iter().zip(&d.mean).zip(&d.std_err) {
        println!("lag {l:>3}: {m:.3e} +/- {s:.1e}");
    }
    Ok(())
}
