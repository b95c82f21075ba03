//! Rates of the three link presets, calibrated to their measured success rates.

use ionmux::config::load_preset;
use ionmux::scheduler::simulate_rates;

fn main() -> ionmux::Result<()> {
    for name in ["3m", "1km", "12km"] {
        let cfg = load_preset(name, &[])?;
        let r = simulate_rates(cfg.protocol.as_ref().expect("preset has a protocol"))?;
        println!(
            "{name:>5}: {} modes, round {:.2} us, rate {:.2}/s, M {:.2}, M' {:.2}, link efficiency {:.3}",
            r.modes,
            r.t_round * 1e6,
            r.success_rate,
            r.m,
            r.m_prime,
            r.eta_link
        );
    }
    Ok(())
}
