//! Seeded path sampling of pulse programs.
//!
//! The sampler walks individual ions through the physical process (pi-pulse
//! flips, exponentially distributed decay times, scattering cycles of the
//! pump) instead of sampling rows of the population maps, so it checks the
//! maps rather than restating them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicParams, Level, PopulationVector, ShelfOrigin, ShelveDirection};
use crate::error::{Error, Result};
use crate::program::{Op, PulseProgram};

/// Samples are split into this many independently seeded shards. The count
/// is fixed so results do not depend on the worker pool.
pub const SHARDS: u64 = 64;

/// Per-shard generator: one ChaCha stream per shard index.
pub(crate) fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

pub(crate) fn shard_len(samples: u64, shard: u64) -> u64 {
    samples / SHARDS + u64::from(shard < samples % SHARDS)
}

/// Monte Carlo estimate of an emission profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub samples: u64,
    pub modes: Vec<u32>,
    pub per_mode: Vec<f64>,
    pub per_mode_se: Vec<f64>,
    pub total: f64,
    pub total_se: f64,
}

/// Binomial standard error of a frequency estimate.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Walks one ion through a program.
#[derive(Debug, Clone)]
pub(crate) struct PathSampler<'a> {
    program: &'a PulseProgram,
    params: AtomicParams,
}

impl<'a> PathSampler<'a> {
    pub fn new(program: &'a PulseProgram, params: &AtomicParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            program,
            params: *params,
        })
    }

    fn sample_start<R: Rng>(initial: &PopulationVector, rng: &mut R) -> Level {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = Level::SUp;
        for (level, p) in initial.iter() {
            acc += p;
            last = level;
            if u < acc {
                return level;
            }
        }
        last
    }

    /// Decay of the excited level: photon, back up, or dark sublevel.
    fn decay<R: Rng>(&self, rng: &mut R, photon: Level) -> Level {
        let u: f64 = rng.random();
        let p = &self.params;
        if u < p.branching_d {
            photon
        } else if u < p.branching_d + p.to_up() {
            Level::SUp
        } else {
            Level::SDown
        }
    }

    /// Repeated sigma+ scattering from the dark sublevel until it leaves.
    fn pump_cycles<R: Rng>(&self, rng: &mut R) -> Level {
        let p = &self.params;
        if p.to_down() + p.branching_d == 0.0 {
            return Level::SDown;
        }
        loop {
            let u: f64 = rng.random();
            if u < p.to_down() {
                return Level::SUp;
            } else if u < p.to_down() + p.branching_d {
                return Level::Leak;
            }
        }
    }

    /// Final level of one ion starting in `start`.
    pub fn walk<R: Rng>(&self, ion: usize, start: Level, rng: &mut R) -> Level {
        let mut level = start;
        for prim in self.program.primitives() {
            if !prim.targets(ion) {
                continue;
            }
            level = match (prim.op, level) {
                (Op::Prepare, _) => Level::SUp,
                (Op::Excite { .. }, Level::Excited) => Level::SUp,
                (Op::Excite { mode, decay_window }, Level::SUp) => {
                    let u: f64 = rng.random();
                    let t = -self.params.tau_p * (1.0 - u).ln();
                    if t < decay_window {
                        self.decay(rng, Level::Photon(mode))
                    } else {
                        Level::Excited
                    }
                }
                (Op::Pump, l @ (Level::Excited | Level::SDown)) => {
                    let after = if l == Level::Excited {
                        self.decay(rng, Level::Leak)
                    } else {
                        l
                    };
                    if after == Level::SDown {
                        self.pump_cycles(rng)
                    } else {
                        after
                    }
                }
                (Op::Shelve { direction }, l) => match (direction, l) {
                    (ShelveDirection::ToShelf, Level::Photon(m)) => {
                        Level::Shelved(ShelfOrigin::Photon(m))
                    }
                    (ShelveDirection::ToShelf, Level::Leak) => Level::Shelved(ShelfOrigin::Leak),
                    (ShelveDirection::FromShelf, Level::Shelved(ShelfOrigin::Photon(m))) => {
                        Level::Photon(m)
                    }
                    (ShelveDirection::FromShelf, Level::Shelved(ShelfOrigin::Leak)) => Level::Leak,
                    (_, l) => l,
                },
                (_, l) => l,
            };
        }
        level
    }

    pub fn walk_from<R: Rng>(&self, ion: usize, initial: &PopulationVector, rng: &mut R) -> Level {
        let start = Self::sample_start(initial, rng);
        self.walk(ion, start, rng)
    }
}

/// Emitted mode of a final level, shelved or not.
pub(crate) fn emitted_mode(level: Level) -> Option<u32> {
    match level {
        Level::Photon(m) | Level::Shelved(ShelfOrigin::Photon(m)) => Some(m),
        _ => None,
    }
}

/// Path-sampled emission profile. Every ion of the program starts from
/// `initial`; the result is deterministic for a fixed seed.
pub fn monte_carlo_oracle(
    initial: &PopulationVector,
    program: &PulseProgram,
    params: &AtomicParams,
    samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let sampler = PathSampler::new(program, params)?;
    let windows = program.windows();
    let modes: Vec<u32> = windows.iter().map(|w| w.mode).collect();
    let index = |m: u32| modes.binary_search(&m).ok();

    let counts = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(seed, shard);
            let mut counts = vec![0u64; modes.len()];
            for _ in 0..shard_len(samples, shard) {
                for ion in 0..program.ions() {
                    let end = sampler.walk_from(ion, initial, &mut rng);
                    if let Some(i) = emitted_mode(end).and_then(index) {
                        counts[i] += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; modes.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let n = samples as f64;
    let per_mode: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let per_mode_se = per_mode.iter().map(|&p| binomial_se(p, samples)).collect();
    let total_count: u64 = counts.iter().sum();
    let total = total_count as f64 / n;
    // Single-ion programs emit at most once per sample; several ions add up.
    let total_se = if program.ions() == 1 {
        binomial_se(total, samples)
    } else {
        per_mode
            .iter()
            .map(|&p| binomial_se(p, samples).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(MonteCarloEstimate {
        samples,
        modes,
        per_mode,
        per_mode_se,
        total,
        total_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{strategy_program, Strategy};

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = AtomicParams::default();
        let program = strategy_program(&Strategy::link_3m()).unwrap();
        let init = PopulationVector::pure(Level::SUp);
        let a = monte_carlo_oracle(&init, &program, &p, 20_000, 7).unwrap();
        let b = monte_carlo_oracle(&init, &program, &p, 20_000, 7).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_oracle(&init, &program, &p, 20_000, 8).unwrap();
        assert_ne!(a.per_mode, c.per_mode);
    }

    #[test]
    fn zero_pulse_program_never_emits() {
        let p = AtomicParams::default();
        let program = PulseProgram::new(1).unwrap();
        let est =
            monte_carlo_oracle(&PopulationVector::pure(Level::SUp), &program, &p, 1000, 1).unwrap();
        assert_eq!(est.total, 0.0);
        assert!(est.per_mode.is_empty());
    }

    #[test]
    fn rejects_zero_samples() {
        let p = AtomicParams::default();
        let program = PulseProgram::new(1).unwrap();
        assert!(
            monte_carlo_oracle(&PopulationVector::pure(Level::SUp), &program, &p, 0, 1).is_err()
        );
    }

    #[test]
    fn shard_lengths_cover_samples() {
        for n in [1u64, 63, 64, 65, 1_000_003] {
            let sum: u64 = (0..SHARDS).map(|s| shard_len(n, s)).sum();
            assert_eq!(sum, n);
        }
    }
}
