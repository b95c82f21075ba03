//! Path-sampled emission profile against the exact population evolution.

use ionmux::engine::{strategy_profile, strategy_program};
use ionmux::montecarlo::monte_carlo_oracle;
use ionmux::{AtomicParams, Level, PopulationVector, Strategy};

fn main() -> ionmux::Result<()> {
    let p = AtomicParams::default();
    let strategy = Strategy::link_1km();
    let exact = strategy_profile(&strategy, &p)?;
    let program = strategy_program(&strategy)?;
    let mc = monte_carlo_oracle(&PopulationVector::pure(Level::SUp), &program, &p, 1_000_000, 42)?;
    println!("{:>4} {:>10} {:>10} {:>7}", "mode", "exact", "sampled", "z");
    for (i, mode) in exact.modes.iter().enumerate() {
        let z = (mc.per_mode[i] - exact.per_mode[i]) / mc.per_mode_se[i];
        println!("{mode:>4} {:>10.6} {:>10.6} {z:>7.2}", exact.per_mode[i], mc.per_mode[i]);
    }
    println!("total {:.6} vs {:.6} ± {:.6}", exact.total, mc.total, mc.total_se);
    Ok(())
}
