//! Checksummed binary round trip of an Ulam matrix.

use rdslab::io::{read_ulam, write_ulam, UlamDump};
use rdslab::random_system::MapFamily;
use rdslab::transfer::ulam_matrix;

fn main() -> rdslab::Result<()> {
    let dump = UlamDump {
        family: MapFamily::Lsv,
        alpha: 0.5,
        matrix: ulam_matrix(MapFamily::Lsv, 0.5, 256)?,
        density: None,
    };
    let mut buf = Vec::new();
    write_ulam(&dump, &mut buf)?;
    let back = read_ulam(buf.as_slice())?;
    println!("{} bytes, {} nonzeros, round trip equal: {}", buf.len(), back.matrix.nnz(), back.matrix.vals() == dump.matrix.vals());
    buf[40] ^= 1;
    println!("corrupted read: {}", read_ulam(buf.as_slice()).unwrap_err());
    Ok(())
}
