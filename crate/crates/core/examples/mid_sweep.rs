//! AMTP of the relay heuristic across window sizes.
//!
//! cargo run --release --example mid_sweep -- [samples] [max_hop]

use stlab::mid::{evaluate_mid, ChannelParams, MidRow, Placer, DEFAULT_MAX_HOP};

fn main() -> stlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let max_hop = args.next().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_MAX_HOP);
    let widths = [320.0, 640.0, 960.0, 1280.0, 1600.0];
    let rows = evaluate_mid(Placer::Heuristic { max_hop }, &widths, samples, &ChannelParams::default(), 0)?;
    println!("{}", MidRow::CSV_HEADER);
    for r in &rows {
        println!("{}", r.to_csv());
    }
    Ok(())
}
