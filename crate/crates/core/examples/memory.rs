//! Memory fidelity, shelf survival and link efficiency.

use ionmux::scheduler::{link_efficiency, memory_fidelity, memory_survival, MemoryParams};

fn main() {
    let mem = MemoryParams::default();
    for ms in [0.0, 100.0, 240.0, 300.0, 366.0, 500.0] {
        let t = ms * 1e-3;
        println!(
            "{ms:>5} ms  fidelity {:.3}  decay error {:.1} %",
            memory_fidelity(t, &mem),
            100.0 * (1.0 - memory_survival(t, &mem))
        );
    }
    println!("4.28/s with survival 0.74: link efficiency {:.3}", link_efficiency(4.28, &mem, 0.74));
}
