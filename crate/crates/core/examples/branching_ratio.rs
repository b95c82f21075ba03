//! Effective branching ratio of the two limiting pump strategies as the
//! train grows, and their long-train limits.

use ionmux::engine::{branching_ratio_limit, effective_branching_ratio};
use ionmux::{AtomicParams, Strategy};

fn main() -> ionmux::Result<()> {
    let p = AtomicParams::default();
    println!("{:>4} {:>9} {:>9}", "N", "none", "every");
    for n in [1, 2, 4, 8, 16, 32, 64, 128, 200] {
        let none = effective_branching_ratio(&Strategy::none(n), &p)?;
        let every = effective_branching_ratio(&Strategy::every(n), &p)?;
        println!("{n:>4} {none:>9.5} {every:>9.5}");
    }
    println!("limit none  = {:.6}", branching_ratio_limit(Strategy::none, &p)?);
    println!("limit every = {:.6}", branching_ratio_limit(Strategy::every, &p)?);

    // A hand-written schedule: pump after pulses 3, 6, 8 and 10 of 12.
    let custom: Strategy = "12:3,6,8,10".parse()?;
    println!("12:3,6,8,10 -> {:.5}", effective_branching_ratio(&custom, &p)?);
    Ok(())
}
