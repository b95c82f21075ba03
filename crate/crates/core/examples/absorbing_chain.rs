//! Where population ends up when one primitive repeats forever.

use ionmux::atomic::{excitation_map, pump_cycle_map};
use ionmux::engine::absorbing_distribution;
use ionmux::{AtomicParams, Level};

fn main() -> ionmux::Result<()> {
    let p = AtomicParams::default();
    let excite = absorbing_distribution(&excitation_map(&p, f64::INFINITY, 0)?, Level::SUp)?;
    println!("repeated excitation from the initial sublevel:");
    for (level, mass) in &excite {
        println!("  {level:<14} {mass:.6}");
    }
    let pump = absorbing_distribution(&pump_cycle_map(&p), Level::SDown)?;
    println!("repeated pump scattering from the dark sublevel:");
    for (level, mass) in &pump {
        println!("  {level:<14} {mass:.6}");
    }
    Ok(())
}
