//! Timing-only multiplexing enhancement of a 12 km link.

use ionmux::timing::{enhancement_curve, n_half_duty, LinkParams};

fn main() -> ionmux::Result<()> {
    let link = LinkParams::new(12e3, 50e-6, 2e-6, 1);
    let grid: Vec<u64> = (0..=10).map(|k| 1 << k).chain([85, 170]).collect();
    let curve = enhancement_curve(&link, &grid)?;
    println!("50 % duty cycle at N0 = {}", n_half_duty(&link)?);
    for p in &curve.points {
        println!("N = {:>4}  M = {:>7.3}", p.modes, p.enhancement);
    }
    println!("M(N0) = {}", curve.m_saturated);
    Ok(())
}
