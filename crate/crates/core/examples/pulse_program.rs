//! A two-ion timeline laid out by hand and evolved primitive by primitive.

use ionmux::engine::run_node;
use ionmux::program::{append_train, TrainTiming};
use ionmux::{AtomicParams, Level, Op, PopulationVector, Primitive, PulseProgram, ShelveDirection, Strategy};

fn main() -> ionmux::Result<()> {
    let strategy = Strategy::new(4, [2]).with_window(50e-9, true);
    let timing = TrainTiming::default();
    let mut program = PulseProgram::new(2)?;
    let end = append_train(&mut program, 0, &strategy, &timing, 0, 0.0)?;
    program.push(Primitive {
        start: end,
        duration: 1e-6,
        ion: Some(0),
        op: Op::Shelve { direction: ShelveDirection::ToShelf },
    })?;
    program.push(Primitive { start: end + 1e-6, duration: 5e-6, ion: None, op: Op::Shuttle { to: 1 } })?;
    append_train(&mut program, 1, &strategy, &timing, 4, end + 6e-6)?;

    for w in program.windows() {
        println!("mode {} on ion {} at {:.3} us", w.mode, w.ion, w.start * 1e6);
    }
    let start = vec![PopulationVector::pure(Level::SUp); 2];
    for (ion, run) in run_node(&start, &program, &AtomicParams::default())?.iter().enumerate() {
        println!("ion {ion}: {:?} total {:.4}", run.profile.per_mode, run.profile.total);
    }
    Ok(())
}
