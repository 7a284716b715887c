//! OSPA between small point sets, in both cardinality-penalty forms.
//!
//! cargo run --example ospa

use stlab::metrics::{ospa_with, OspaForm};
use stlab::raster::PointSet;

fn main() -> stlab::Result<()> {
    let truth = PointSet::planar(&[[0.0, 0.0], [100.0, 0.0], [0.0, 200.0]]);
    let cases = [
        ("identical", truth.clone()),
        ("shifted 10 m", PointSet::planar(&[[10.0, 0.0], [110.0, 0.0], [10.0, 200.0]])),
        ("one missing", PointSet::planar(&[[0.0, 0.0], [100.0, 0.0]])),
        ("empty", PointSet::empty(2)),
    ];
    println!("{:<14} {:>10} {:>10}", "estimate", "uncut", "standard");
    for (name, est) in &cases {
        let a = ospa_with(&truth, est, 500.0, OspaForm::Uncut)?;
        let b = ospa_with(&truth, est, 500.0, OspaForm::Standard)?;
        println!("{name:<14} {a:>10.4} {b:>10.4}");
    }
    Ok(())
}
