//! Steps one tracking scenario and summarises each frame.
//!
//! cargo run --release --example simulate -- [steps] [seed]

use stlab::mtt_sim::{new_scenario, propagate, sense, SimParams};

fn main() -> stlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let params = SimParams::default();
    let mut state = new_scenario(&params, seed)?;
    println!("simulated square {:.0} m, window {:.0} m", params.padded_width(), params.window);
    println!("step  targets  in_window  sensors  measurements  clutter  image_sum");
    for step in 0..steps {
        if step > 0 {
            propagate(&mut state, &params);
        }
        let frame = sense(&mut state, &params);
        let image = frame.image(&state.sensors, &params)?;
        let clutter = frame.clutter.iter().filter(|&&c| c).count();
        println!(
            "{step:>4}  {:>7}  {:>9}  {:>7}  {:>12}  {clutter:>7}  {:>9.3}",
            state.targets.len(),
            state.positions_in_window(&params).len(),
            state.sensors.len(),
            frame.len(),
            image.sum()
        );
    }
    Ok(())
}
