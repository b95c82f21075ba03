//! Level scheme of the communication ion and the primitive population maps.
//!
//! The ion is reduced to six manifolds: the two ground Zeeman sublevels, the
//! excited level, and three metastable bins that distinguish a collected
//! emission (tallied per time-bin mode), an uncollected leak during pumping,
//! and population parked on the memory shelf. Every primitive of a pulse
//! program is a row-stochastic [`TransitionMap`] over these levels.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on population conservation after applying maps.
pub const CONSERVATION_TOL: f64 = 1e-9;

/// Branching and lifetime parameters of the emitting transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicParams {
    /// Branching from the excited level into the photon-emitting metastable level.
    pub branching_d: f64,
    /// Weight of ground-manifold decay returning to the initial Zeeman sublevel.
    pub weight_up: f64,
    /// Excited-level 1/e lifetime in seconds.
    pub tau_p: f64,
}

impl Default for AtomicParams {
    fn default() -> Self {
        Self {
            branching_d: 0.06,
            weight_up: 2.0 / 3.0,
            tau_p: 7e-9,
        }
    }
}

impl AtomicParams {
    pub fn new(branching_d: f64, weight_up: f64, tau_p: f64) -> Result<Self> {
        let p = Self {
            branching_d,
            weight_up,
            tau_p,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.branching_d) {
            return Err(Error::Parameter(format!(
                "branching_d = {} outside [0, 1]",
                self.branching_d
            )));
        }
        if !(0.0..=1.0).contains(&self.weight_up) {
            return Err(Error::Parameter(format!(
                "weight_up = {} outside [0, 1]",
                self.weight_up
            )));
        }
        if !(self.tau_p > 0.0 && self.tau_p.is_finite()) {
            return Err(Error::Parameter(format!(
                "tau_p = {} must be positive and finite",
                self.tau_p
            )));
        }
        Ok(())
    }

    /// Branching back into the ground manifold.
    pub fn branching_s(&self) -> f64 {
        1.0 - self.branching_d
    }

    pub fn weight_down(&self) -> f64 {
        1.0 - self.weight_up
    }

    /// Probability of a decay landing back in the initial sublevel.
    pub fn to_up(&self) -> f64 {
        self.branching_s() * self.weight_up
    }

    /// Probability of a decay landing in the dark ground sublevel.
    pub fn to_down(&self) -> f64 {
        self.branching_s() * self.weight_down()
    }

    /// Fraction of the dark sublevel restored to the initial state by one
    /// intermediate pumping; the complement leaks to the metastable level.
    pub fn pump_return(&self) -> f64 {
        let b = self.to_down();
        let denom = b + self.branching_d;
        if denom == 0.0 {
            // Nothing ever leaves the dark sublevel through the excited level.
            1.0
        } else {
            b / denom
        }
    }

    /// Probability that the excited level decays within `window` seconds.
    pub fn decay_fraction(&self, window: f64) -> f64 {
        if window.is_infinite() {
            1.0
        } else {
            -(-window / self.tau_p).exp_m1()
        }
    }
}

/// Origin of population parked on the memory shelf, kept so that unshelving
/// restores the exact tally split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShelfOrigin {
    Photon(u32),
    Leak,
}

/// Basis states of the communication ion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    /// Initial ground sublevel, coupled by the excitation pulses.
    SUp,
    /// Other ground sublevel, dark to the excitation pulses.
    SDown,
    /// Excited level. Population left here at the end of a window is carried
    /// to the next primitive.
    Excited,
    /// Metastable level reached inside a detection window of the given mode.
    Photon(u32),
    /// Metastable level reached while pumping; no photon is collected.
    Leak,
    /// Second metastable shelf.
    Shelved(ShelfOrigin),
}

impl Level {
    /// True for the metastable bins, which no optical primitive can leave.
    pub fn is_metastable(self) -> bool {
        matches!(self, Level::Photon(_) | Level::Leak | Level::Shelved(_))
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::SUp => write!(f, "S_up"),
            Level::SDown => write!(f, "S_down"),
            Level::Excited => write!(f, "P"),
            Level::Photon(m) => write!(f, "D_photon[{m}]"),
            Level::Leak => write!(f, "D_leak"),
            Level::Shelved(ShelfOrigin::Photon(m)) => write!(f, "D_shelf[photon {m}]"),
            Level::Shelved(ShelfOrigin::Leak) => write!(f, "D_shelf[leak]"),
        }
    }
}

/// One row of a transition map: at most four outgoing branches.
#[derive(Debug, Clone, Copy)]
pub struct Row {
    entries: [(Level, f64); 4],
    len: usize,
}

impl Row {
    fn new(items: &[(Level, f64)]) -> Self {
        let mut entries = [(Level::SUp, 0.0); 4];
        entries[..items.len()].copy_from_slice(items);
        Self {
            entries,
            len: items.len(),
        }
    }

    fn stay(level: Level) -> Self {
        Self::new(&[(level, 1.0)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Level, f64)> + '_ {
        self.entries[..self.len].iter().copied()
    }

    pub fn sum(&self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShelveDirection {
    ToShelf,
    FromShelf,
}

/// Row-stochastic map on [`PopulationVector`] representing one primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionMap {
    /// Identity; used by timeline-only primitives.
    Identity,
    /// Initial optical pumping with repumper on: every level returns to `SUp`.
    Prepare,
    /// A pi pulse on the `SUp`/`Excited` pair followed by a decay window.
    Excite {
        params: AtomicParams,
        decay_fraction: f64,
        mode: u32,
    },
    /// A complete intermediate pumping (absorbing closure of [`TransitionMap::PumpCycle`]).
    Pump { params: AtomicParams },
    /// A single scattering cycle of the intermediate pumping.
    PumpCycle { params: AtomicParams },
    Shelve(ShelveDirection),
}

/// Excitation pulse followed by a detection window of length `window`
/// seconds (`f64::INFINITY` for a fully resolved decay).
pub fn excitation_map(params: &AtomicParams, window: f64, mode: u32) -> Result<TransitionMap> {
    params.validate()?;
    if window.is_nan() || window <= 0.0 {
        return Err(Error::Parameter(format!(
            "excitation window must be positive, got {window}"
        )));
    }
    Ok(TransitionMap::Excite {
        params: *params,
        decay_fraction: params.decay_fraction(window),
        mode,
    })
}

pub fn pump_map(params: &AtomicParams) -> TransitionMap {
    TransitionMap::Pump { params: *params }
}

pub fn pump_cycle_map(params: &AtomicParams) -> TransitionMap {
    TransitionMap::PumpCycle { params: *params }
}

pub fn shelve_map(direction: ShelveDirection) -> TransitionMap {
    TransitionMap::Shelve(direction)
}

impl TransitionMap {
    /// Outgoing distribution of a single basis state.
    pub fn row(&self, level: Level) -> Row {
        match *self {
            TransitionMap::Identity => Row::stay(level),
            TransitionMap::Prepare => Row::stay(Level::SUp),
            TransitionMap::Excite {
                params,
                decay_fraction: f,
                mode,
            } => match level {
                Level::SUp => Row::new(&[
                    (Level::Photon(mode), f * params.branching_d),
                    (Level::SUp, f * params.to_up()),
                    (Level::SDown, f * params.to_down()),
                    (Level::Excited, 1.0 - f),
                ]),
                // The pulse flips leftover excitation back down without emission.
                Level::Excited => Row::stay(Level::SUp),
                other => Row::stay(other),
            },
            TransitionMap::Pump { params } => match level {
                Level::SDown if params.to_down() + params.branching_d == 0.0 => {
                    // Every cycle returns to the dark sublevel.
                    Row::stay(Level::SDown)
                }
                Level::SDown => {
                    let s = params.pump_return();
                    Row::new(&[(Level::SUp, s), (Level::Leak, 1.0 - s)])
                }
                Level::Excited => {
                    let s = params.pump_return();
                    let b = params.to_down();
                    Row::new(&[
                        (Level::SUp, params.to_up() + b * s),
                        (Level::Leak, params.branching_d + b * (1.0 - s)),
                    ])
                }
                other => Row::stay(other),
            },
            TransitionMap::PumpCycle { params } => match level {
                Level::SDown => Row::new(&[
                    (Level::SUp, params.to_down()),
                    (Level::SDown, params.to_up()),
                    (Level::Leak, params.branching_d),
                ]),
                Level::Excited => Row::new(&[
                    (Level::SUp, params.to_up()),
                    (Level::SDown, params.to_down()),
                    (Level::Leak, params.branching_d),
                ]),
                other => Row::stay(other),
            },
            TransitionMap::Shelve(ShelveDirection::ToShelf) => match level {
                Level::Photon(m) => Row::stay(Level::Shelved(ShelfOrigin::Photon(m))),
                Level::Leak => Row::stay(Level::Shelved(ShelfOrigin::Leak)),
                other => Row::stay(other),
            },
            TransitionMap::Shelve(ShelveDirection::FromShelf) => match level {
                Level::Shelved(ShelfOrigin::Photon(m)) => Row::stay(Level::Photon(m)),
                Level::Shelved(ShelfOrigin::Leak) => Row::stay(Level::Leak),
                other => Row::stay(other),
            },
        }
    }

    /// Mode tallied by this map, if it is an excitation.
    pub fn mode(&self) -> Option<u32> {
        match self {
            TransitionMap::Excite { mode, .. } => Some(*mode),
            _ => None,
        }
    }
}

/// Probability distribution over [`Level`]s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PopulationVector {
    mass: BTreeMap<Level, f64>,
}

impl PopulationVector {
    /// All population in one level.
    pub fn pure(level: Level) -> Self {
        let mut mass = BTreeMap::new();
        mass.insert(level, 1.0);
        Self { mass }
    }

    /// Builds a vector from explicit entries; entries must lie in [0, 1] and
    /// sum to one.
    pub fn from_entries(entries: impl IntoIterator<Item = (Level, f64)>) -> Result<Self> {
        let mut mass = BTreeMap::new();
        for (level, p) in entries {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!("population {p} of {level} outside [0, 1]")));
            }
            *mass.entry(level).or_insert(0.0) += p;
        }
        let v = Self { mass };
        let total = v.total();
        if (total - 1.0).abs() > CONSERVATION_TOL {
            return Err(Error::Parameter(format!("populations sum to {total}, not 1")));
        }
        Ok(v)
    }

    pub fn get(&self, level: Level) -> f64 {
        self.mass.get(&level).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Level, f64)> + '_ {
        self.mass.iter().map(|(l, p)| (*l, *p))
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    /// Aggregated second-shelf population.
    pub fn shelf_total(&self) -> f64 {
        self.iter()
            .filter(|(l, _)| matches!(l, Level::Shelved(_)))
            .map(|(_, p)| p)
            .sum()
    }

    /// Collected-emission tallies by mode, including shelved ones.
    pub fn photon_tallies(&self) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for (level, p) in self.iter() {
            match level {
                Level::Photon(m) | Level::Shelved(ShelfOrigin::Photon(m)) => {
                    *out.entry(m).or_insert(0.0) += p;
                }
                _ => {}
            }
        }
        out
    }

    fn has_tally(&self, mode: u32) -> bool {
        self.mass.contains_key(&Level::Photon(mode))
            || self
                .mass
                .contains_key(&Level::Shelved(ShelfOrigin::Photon(mode)))
    }

    /// Pushes the vector through `map`.
    pub fn apply(&self, map: &TransitionMap) -> Result<Self> {
        if let Some(mode) = map.mode() {
            if self.has_tally(mode) {
                return Err(Error::Construction(format!(
                    "mode index {mode} already carries an emission tally"
                )));
            }
        }
        let mut mass = BTreeMap::new();
        for (level, p) in self.iter() {
            if p == 0.0 {
                continue;
            }
            for (to, q) in map.row(level).iter() {
                if q != 0.0 {
                    *mass.entry(to).or_insert(0.0) += p * q;
                }
            }
        }
        Ok(Self { mass })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn default_params_are_consistent() {
        let p = AtomicParams::default();
        assert!(close(p.branching_d + p.branching_s(), 1.0, 1e-12));
        assert!(close(p.weight_up + p.weight_down(), 1.0, 1e-12));
        assert_eq!(p.tau_p, 7e-9);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(AtomicParams::new(1.2, 0.5, 7e-9).is_err());
        assert!(AtomicParams::new(0.06, -0.1, 7e-9).is_err());
        assert!(AtomicParams::new(0.06, 0.5, 0.0).is_err());
    }

    #[test]
    fn single_resolved_excitation() {
        let p = AtomicParams::default();
        let map = excitation_map(&p, f64::INFINITY, 0).unwrap();
        let out = PopulationVector::pure(Level::SUp).apply(&map).unwrap();
        assert!(close(out.get(Level::SUp), 0.94 * 2.0 / 3.0, 1e-12));
        assert!(close(out.get(Level::SUp), 0.627, 5e-4));
        assert!(close(out.get(Level::SDown), 0.3133, 1e-4));
        assert!(close(out.get(Level::Photon(0)), 0.06, 1e-12));
        assert_eq!(out.get(Level::Excited), 0.0);
    }

    #[test]
    fn truncated_window_carries_excitation() {
        let p = AtomicParams::default();
        let map = excitation_map(&p, 13e-9, 0).unwrap();
        let out = PopulationVector::pure(Level::SUp).apply(&map).unwrap();
        let residual = (-13.0f64 / 7.0).exp();
        assert!(close(out.get(Level::Excited), residual, 1e-12));
        assert!(close(residual, 0.1563, 3e-4));
        // next pulse returns it to SUp without emission
        let next = excitation_map(&p, 13e-9, 1).unwrap();
        let back = PopulationVector::pure(Level::Excited).apply(&next).unwrap();
        assert_eq!(back.get(Level::SUp), 1.0);
        assert_eq!(back.get(Level::Photon(1)), 0.0);
    }

    #[test]
    fn excitation_rejects_non_positive_window() {
        let p = AtomicParams::default();
        assert!(matches!(excitation_map(&p, 0.0, 0), Err(Error::Parameter(_))));
        assert!(matches!(excitation_map(&p, -1e-9, 0), Err(Error::Parameter(_))));
        assert!(excitation_map(&p, f64::NAN, 0).is_err());
    }

    #[test]
    fn metastable_levels_ignore_pulses() {
        let p = AtomicParams::default();
        let map = excitation_map(&p, 13e-9, 4).unwrap();
        for level in [
            Level::Photon(0),
            Level::Leak,
            Level::Shelved(ShelfOrigin::Leak),
        ] {
            let out = PopulationVector::pure(level).apply(&map).unwrap();
            assert_eq!(out, PopulationVector::pure(level));
        }
    }

    #[test]
    fn mode_collision_is_rejected() {
        let p = AtomicParams::default();
        let map = excitation_map(&p, f64::INFINITY, 3).unwrap();
        let v = PopulationVector::pure(Level::SUp).apply(&map).unwrap();
        assert!(matches!(v.apply(&map), Err(Error::Construction(_))));
    }

    #[test]
    fn pump_split() {
        let p = AtomicParams::default();
        let out = PopulationVector::pure(Level::SDown)
            .apply(&pump_map(&p))
            .unwrap();
        assert!(close(out.get(Level::SUp), 0.839, 5e-4));
        assert!(close(out.get(Level::Leak), 0.161, 5e-4));
        let up = PopulationVector::pure(Level::SUp).apply(&pump_map(&p)).unwrap();
        assert_eq!(up, PopulationVector::pure(Level::SUp));
        let d = PopulationVector::pure(Level::Photon(2))
            .apply(&pump_map(&p))
            .unwrap();
        assert_eq!(d.photon_tallies().get(&2), Some(&1.0));
    }

    #[test]
    fn shelving_examples() {
        let v = PopulationVector::from_entries([(Level::Photon(0), 0.3), (Level::SUp, 0.7)]).unwrap();
        let shelved = v.apply(&shelve_map(ShelveDirection::ToShelf)).unwrap();
        assert!(close(shelved.shelf_total(), 0.3, 1e-15));
        assert_eq!(shelved.get(Level::SUp), 0.7);
        assert_eq!(shelved.get(Level::Photon(0)), 0.0);
        let back = shelved.apply(&shelve_map(ShelveDirection::FromShelf)).unwrap();
        assert_eq!(back, v);

        let down = PopulationVector::pure(Level::SDown);
        assert_eq!(down.apply(&shelve_map(ShelveDirection::ToShelf)).unwrap(), down);
    }

    #[test]
    fn from_entries_validates() {
        assert!(PopulationVector::from_entries([(Level::SUp, 0.5)]).is_err());
        assert!(PopulationVector::from_entries([(Level::SUp, 1.5), (Level::SDown, -0.5)]).is_err());
    }
}
