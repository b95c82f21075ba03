//! Timestamped pulse programs.

use serde::{Deserialize, Serialize};

use crate::atomic::{
    excitation_map, pump_map, shelve_map, AtomicParams, ShelveDirection, TransitionMap,
};
use crate::engine::Strategy;
use crate::error::{Error, Result};

/// Slack allowed when checking that node primitives do not overlap.
const OVERLAP_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Op {
    /// Initial optical pumping with repumper: resets the ion to the initial sublevel.
    Prepare,
    /// Excitation pulse opening detection window `mode`. `decay_window` is
    /// the window length used by the population map (infinite when the
    /// decay tail is treated as fully resolved).
    Excite { mode: u32, decay_window: f64 },
    Pump,
    Shelve { direction: ShelveDirection },
    Shuttle { to: usize },
    Cooling,
    /// Waiting for the heralding signal to travel back over the fiber.
    HeraldWait,
}

impl Op {
    /// Whether the primitive occupies the node (optics or transport). The
    /// heralding wait only occupies the link and may run under node work.
    pub fn occupies_node(&self) -> bool {
        !matches!(self, Op::HeraldWait)
    }

    fn needs_ion(&self) -> bool {
        matches!(self, Op::Excite { .. } | Op::Pump | Op::Shelve { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub start: f64,
    pub duration: f64,
    /// Target ion; `None` for node-wide primitives.
    pub ion: Option<usize>,
    pub op: Op,
}

impl Primitive {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// Population map for the targeted ion, or `None` for timeline-only primitives.
    pub fn transition_map(&self, params: &AtomicParams) -> Result<Option<TransitionMap>> {
        Ok(match self.op {
            Op::Prepare => Some(TransitionMap::Prepare),
            Op::Excite { mode, decay_window } => Some(excitation_map(params, decay_window, mode)?),
            Op::Pump => Some(pump_map(params)),
            Op::Shelve { direction } => Some(shelve_map(direction)),
            Op::Shuttle { .. } | Op::Cooling | Op::HeraldWait => None,
        })
    }

    /// True when the primitive acts on `ion`.
    pub fn targets(&self, ion: usize) -> bool {
        self.ion.is_none_or(|i| i == ion)
    }
}

/// Detection window of one time-bin mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeWindow {
    pub mode: u32,
    pub ion: usize,
    pub start: f64,
    pub duration: f64,
}

/// Ordered, validated primitive sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    ions: usize,
    primitives: Vec<Primitive>,
    #[serde(skip)]
    node_free_at: f64,
    #[serde(skip)]
    last_mode: Option<u32>,
    #[serde(skip)]
    shelved: Vec<bool>,
}

impl PulseProgram {
    pub fn new(ions: usize) -> Result<Self> {
        if ions == 0 {
            return Err(Error::Construction("a program needs at least one ion".into()));
        }
        Ok(Self {
            ions,
            primitives: Vec::new(),
            node_free_at: 0.0,
            last_mode: None,
            shelved: vec![false; ions],
        })
    }

    pub fn ions(&self) -> usize {
        self.ions
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Appends a primitive after checking timing, mode order and shelf pairing.
    pub fn push(&mut self, prim: Primitive) -> Result<()> {
        if !(prim.start.is_finite() && prim.duration.is_finite())
            || prim.start < 0.0
            || prim.duration < 0.0
        {
            return Err(Error::Construction(format!(
                "primitive {:?} has invalid timing start={} duration={}",
                prim.op, prim.start, prim.duration
            )));
        }
        if let Some(ion) = prim.ion {
            if ion >= self.ions {
                return Err(Error::Construction(format!(
                    "ion index {ion} out of range for {} ions",
                    self.ions
                )));
            }
        } else if prim.op.needs_ion() {
            return Err(Error::Construction(format!("{:?} needs a target ion", prim.op)));
        }
        if let Op::Shuttle { to } = prim.op {
            if to >= self.ions {
                return Err(Error::Construction(format!("shuttle target {to} out of range")));
            }
        }
        if prim.op.occupies_node() && prim.start + OVERLAP_EPS < self.node_free_at {
            return Err(Error::Construction(format!(
                "{:?} at {:e} s overlaps a primitive ending at {:e} s",
                prim.op, prim.start, self.node_free_at
            )));
        }
        if let Op::Excite { mode, decay_window } = prim.op {
            if decay_window.is_nan() || decay_window <= 0.0 {
                return Err(Error::Parameter(format!(
                    "excitation window must be positive, got {decay_window}"
                )));
            }
            if let Some(last) = self.last_mode {
                if mode <= last {
                    return Err(Error::Construction(format!(
                        "mode index {mode} does not increase past {last}"
                    )));
                }
            }
        }
        if let Op::Shelve { direction } = prim.op {
            let ion = prim.ion.expect("checked above");
            match (direction, self.shelved[ion]) {
                (ShelveDirection::ToShelf, true) => {
                    return Err(Error::Construction(format!("ion {ion} is already shelved")))
                }
                (ShelveDirection::FromShelf, false) => {
                    return Err(Error::Construction(format!(
                        "unshelve on ion {ion} without a matching shelve"
                    )))
                }
                _ => {}
            }
        }

        // Checks passed: commit.
        if prim.op.occupies_node() {
            self.node_free_at = self.node_free_at.max(prim.end());
        }
        match prim.op {
            Op::Excite { mode, .. } => self.last_mode = Some(mode),
            Op::Shelve { direction } => {
                let ion = prim.ion.expect("checked above");
                self.shelved[ion] = direction == ShelveDirection::ToShelf;
            }
            _ => {}
        }
        self.primitives.push(prim);
        Ok(())
    }

    /// Time at which the node is free again.
    pub fn node_free_at(&self) -> f64 {
        self.node_free_at
    }

    /// End of the last primitive on any lane.
    pub fn end(&self) -> f64 {
        self.primitives
            .iter()
            .map(Primitive::end)
            .fold(0.0, f64::max)
    }

    pub fn windows(&self) -> Vec<ModeWindow> {
        self.primitives
            .iter()
            .filter_map(|p| match p.op {
                Op::Excite { mode, .. } => Some(ModeWindow {
                    mode,
                    ion: p.ion.expect("excitations carry an ion"),
                    start: p.start,
                    duration: p.duration,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn mode_count(&self) -> usize {
        self.windows().len()
    }

    pub fn count(&self, pred: impl Fn(&Op) -> bool) -> usize {
        self.primitives.iter().filter(|p| pred(&p.op)).count()
    }

    /// Ions left on the shelf at the end of the program.
    pub fn open_shelves(&self) -> Vec<usize> {
        (0..self.ions).filter(|&i| self.shelved[i]).collect()
    }
}

/// Durations used when laying out an excitation train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainTiming {
    pub pump_duration: f64,
    /// Settling time before and after each intermediate pumping.
    pub pump_guard: f64,
    /// Drop a pump scheduled after the last pulse of the train.
    pub skip_terminal_pump: bool,
}

impl Default for TrainTiming {
    fn default() -> Self {
        Self {
            pump_duration: 100e-9,
            pump_guard: 0.0,
            skip_terminal_pump: false,
        }
    }
}

/// Lays out `strategy` for `ion` starting at `start`, numbering modes from
/// `first_mode`. Returns the time at which the train ends.
pub fn append_train(
    program: &mut PulseProgram,
    ion: usize,
    strategy: &Strategy,
    timing: &TrainTiming,
    first_mode: u32,
    start: f64,
) -> Result<f64> {
    strategy.validate()?;
    if !strategy.window.is_finite() {
        return Err(Error::Construction(
            "a timeline needs a finite per-mode window".into(),
        ));
    }
    let decay_window = strategy.decay_window();
    let mut t = start;
    for pulse in 1..=strategy.pulse_count {
        program.push(Primitive {
            start: t,
            duration: strategy.window,
            ion: Some(ion),
            op: Op::Excite {
                mode: first_mode + pulse - 1,
                decay_window,
            },
        })?;
        t += strategy.window;
        let terminal = pulse == strategy.pulse_count;
        if strategy.pump_after.contains(&pulse) && !(terminal && timing.skip_terminal_pump) {
            t += timing.pump_guard;
            program.push(Primitive {
                start: t,
                duration: timing.pump_duration,
                ion: Some(ion),
                op: Op::Pump,
            })?;
            t += timing.pump_duration + timing.pump_guard;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn excite(start: f64, mode: u32) -> Primitive {
        Primitive {
            start,
            duration: 10e-9,
            ion: Some(0),
            op: Op::Excite {
                mode,
                decay_window: f64::INFINITY,
            },
        }
    }

    #[test]
    fn rejects_overlap() {
        let mut p = PulseProgram::new(1).unwrap();
        p.push(excite(0.0, 0)).unwrap();
        let err = p.push(excite(5e-9, 1)).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
    }

    #[test]
    fn herald_wait_may_overlap_node_work() {
        let mut p = PulseProgram::new(2).unwrap();
        p.push(Primitive {
            start: 0.0,
            duration: 1e-6,
            ion: None,
            op: Op::HeraldWait,
        })
        .unwrap();
        p.push(Primitive {
            start: 0.0,
            duration: 25e-6,
            ion: None,
            op: Op::Shuttle { to: 0 },
        })
        .unwrap();
    }

    #[test]
    fn modes_must_increase() {
        let mut p = PulseProgram::new(1).unwrap();
        p.push(excite(0.0, 3)).unwrap();
        assert!(p.push(excite(20e-9, 3)).is_err());
        assert!(p.push(excite(20e-9, 2)).is_err());
        p.push(excite(20e-9, 4)).unwrap();
    }

    #[test]
    fn unshelve_without_shelve_fails() {
        let mut p = PulseProgram::new(1).unwrap();
        let err = p
            .push(Primitive {
                start: 0.0,
                duration: 0.0,
                ion: Some(0),
                op: Op::Shelve {
                    direction: ShelveDirection::FromShelf,
                },
            })
            .unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
    }

    #[test]
    fn train_layout() {
        let mut p = PulseProgram::new(1).unwrap();
        let s = Strategy::link_3m();
        let timing = TrainTiming {
            pump_duration: 100e-9,
            pump_guard: 68e-9,
            skip_terminal_pump: true,
        };
        let end = append_train(&mut p, 0, &s, &timing, 0, 0.0).unwrap();
        assert!((end - 340e-9).abs() < 1e-15);
        assert_eq!(p.mode_count(), 8);
        assert_eq!(p.count(|o| matches!(o, Op::Pump)), 1);
    }
}
