//! Ion-ion heralding across growing trains with pumping after every pulse.

use ionmux::bsm::{simulate_ion_ion, sweep_enhancement, NodePair, StrategyFamily, SweepAxis};
use ionmux::config::load_preset;

fn main() -> ionmux::Result<()> {
    let spec = load_preset("1km", &[])?.protocol.expect("preset has a protocol");
    let pair = NodePair::symmetric(spec);
    let one_round = simulate_ion_ion(&pair)?;
    println!(
        "one round: p = {:.3e}, {} windows, quality preserved: {}",
        one_round.p_herald, one_round.modes, one_round.quality_preserved
    );
    let grid = [1, 2, 4, 8, 12, 16, 24, 32, 48, 60];
    let curve = sweep_enhancement(&pair, SweepAxis::ModeCount, &grid, StrategyFamily::Every)?;
    println!("{:>3} {:>8} {:>8} {:>8}", "N", "gain", "M", "M'");
    for p in &curve.points {
        println!("{:>3} {:>8.3} {:>8.3} {:>8.3}", p.modes, p.efficiency_gain, p.m, p.m_prime);
    }
    Ok(())
}
