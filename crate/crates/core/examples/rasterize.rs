//! Renders a point set as an intensity image and recovers the points.
//!
//! cargo run --release --example rasterize -- [out.pgm]

use stlab::raster::{estimate_cardinality, extract_points, rasterize_gaussian, ExtractMethod, PointSet, WindowSpec};

fn main() -> stlab::Result<()> {
    let window = WindowSpec::new(1000.0, 1000.0 / 128.0, 2)?;
    let truth = PointSet::planar(&[[-250.0, 120.0], [40.0, -310.0], [300.0, 280.0], [-60.0, -20.0]]);
    let image = rasterize_gaussian(&truth, &window, 10.0)?;
    println!("pixel sum {:.6} for {} points", image.sum(), truth.len());
    println!("estimated cardinality {}", estimate_cardinality(&image));
    for method in [ExtractMethod::KMeans, ExtractMethod::GmmEm] {
        let found = extract_points(&image, None, method, 0)?;
        println!("{method:?}:");
        for p in found.iter() {
            println!("  ({:8.2}, {:8.2})", p[0], p[1]);
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        let (bytes, scale) = image.to_pgm(false)?;
        std::fs::write(&path, bytes).expect("write PGM");
        println!("wrote {path} (scale {scale:.3e} per grey level)");
    }
    Ok(())
}
