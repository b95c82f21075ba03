//! Best pump placement for a pulse budget, with the per-pump-count frontier.

use ionmux::optimizer::{solve_dp, solve_exhaustive, Objective, OptimizationProblem};

fn main() -> ionmux::Result<()> {
    for objective in [Objective::TotalEmission, Objective::EmissionRate] {
        let prob = OptimizationProblem::new(12, objective);
        let dp = solve_dp(&prob)?;
        let ex = solve_exhaustive(&prob)?;
        println!("{objective:?}: best pumps {:?} value {:.6} (exhaustive {:.6})", dp.best.pump_after, dp.value, ex.value);
        for point in &dp.frontier {
            println!("  {:>2} pumps {:>12.6}  {:?}", point.pumps, point.value, point.strategy.pump_after);
        }
    }
    // Long trains are out of reach for enumeration but cheap for the DP.
    let long = solve_dp(&OptimizationProblem::new(200, Objective::TotalEmission))?;
    println!("200 pulses: {} pumps, emission {:.6}", long.best.pump_count(), long.value);
    Ok(())
}
