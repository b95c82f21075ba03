//! Protocol compilation, rate reports and the memory-qubit model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicParams, Level, PopulationVector, ShelveDirection};
use crate::engine::{run_node, Strategy};
use crate::error::{Error, Result};
use crate::program::{append_train, Op, Primitive, PulseProgram, TrainTiming};
use crate::timing::{enhancement, enhancement_inhomogeneous, LinkParams, C_FIBER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cooling {
    pub duration: f64,
    pub every_rounds: u32,
}

impl Cooling {
    pub fn none() -> Self {
        Self {
            duration: 0.0,
            every_rounds: 1,
        }
    }

    /// Cooling time charged to each round.
    pub fn per_round(&self) -> f64 {
        self.duration / self.every_rounds as f64
    }
}

/// Multiplicative photon-detection efficiencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyChain {
    pub collection: f64,
    pub conversion: f64,
    /// Fiber loss in dB per km.
    pub attenuation_db_per_km: f64,
    pub detector: f64,
    pub other: f64,
}

impl Default for EfficiencyChain {
    fn default() -> Self {
        Self {
            collection: 0.1,
            conversion: 0.12,
            attenuation_db_per_km: 0.18,
            detector: 0.6,
            other: 1.0,
        }
    }
}

impl EfficiencyChain {
    pub fn unit() -> Self {
        Self {
            collection: 1.0,
            conversion: 1.0,
            attenuation_db_per_km: 0.0,
            detector: 1.0,
            other: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("collection", self.collection),
            ("conversion", self.conversion),
            ("detector", self.detector),
            ("other", self.other),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "efficiency factor {name} = {v} outside [0, 1]"
                )));
            }
        }
        if !(self.attenuation_db_per_km >= 0.0 && self.attenuation_db_per_km.is_finite()) {
            return Err(Error::Config(format!(
                "fiber attenuation {} dB/km must be non-negative",
                self.attenuation_db_per_km
            )));
        }
        Ok(())
    }

    pub fn fiber_transmission(&self, length: f64) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * length / 1000.0 / 10.0)
    }

    pub fn product(&self, length: f64) -> f64 {
        self.collection
            * self.conversion
            * self.fiber_transmission(length)
            * self.detector
            * self.other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    /// Contrast of the fidelity decay.
    pub amplitude: f64,
    /// Gaussian dephasing constant, seconds.
    pub tau_coh: f64,
    /// Shelf lifetime, seconds.
    pub tau_life: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            tau_coh: 0.366,
            tau_life: 0.958,
        }
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude <= 0.5) {
            return Err(Error::Parameter(format!(
                "memory amplitude {} outside (0, 0.5]",
                self.amplitude
            )));
        }
        if !(self.tau_coh > 0.0) || !(self.tau_life > 0.0) {
            return Err(Error::Parameter("memory time constants must be positive".into()));
        }
        Ok(())
    }
}

/// Memory fidelity after storing for `t` seconds.
pub fn memory_fidelity(t: f64, mem: &MemoryParams) -> f64 {
    mem.amplitude * (-(t / mem.tau_coh).powi(2)).exp() + 0.5
}

/// Probability that the shelved memory has not decayed after `t` seconds.
/// Decays are caught by a mid-circuit check, so they cost success
/// probability rather than fidelity.
pub fn memory_survival(t: f64, mem: &MemoryParams) -> f64 {
    (-t / mem.tau_life).exp()
}

/// Entangling rate over memory decoherence rate, weighted by survival.
pub fn link_efficiency(success_rate: f64, mem: &MemoryParams, survival: f64) -> f64 {
    success_rate * mem.tau_coh * survival
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySettings {
    pub params: MemoryParams,
    /// Storage time the memory must survive, seconds.
    pub storage_time: f64,
    /// Measured survival that replaces the exponential model when present.
    pub survival: Option<f64>,
}

impl Default for MemorySettings {
    fn default() -> Self {
        Self {
            params: MemoryParams::default(),
            storage_time: 0.0,
            survival: None,
        }
    }
}

impl MemorySettings {
    pub fn survival(&self) -> f64 {
        self.survival
            .unwrap_or_else(|| memory_survival(self.storage_time, &self.params))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub ions: usize,
    pub strategy: Strategy,
    pub train: TrainTiming,
    pub shuttle_time: f64,
    /// Ion visit order; every ion exactly once.
    pub shuttle_plan: Vec<usize>,
    /// Shuttle back to the first ion at the end of the round.
    pub return_shuttle: bool,
    /// Timeline duration of each shelve or unshelve.
    pub shelve_duration: f64,
    pub cooling: Cooling,
    pub length: f64,
    pub c_fiber: f64,
    /// Per-round overhead spent before the excitation trains.
    pub overhead: f64,
    pub efficiencies: EfficiencyChain,
    /// When set, `efficiencies.other` is solved so the round reaches this
    /// success rate.
    pub target_success_rate: Option<f64>,
    pub memory: MemorySettings,
    pub atomic: AtomicParams,
}

impl ProtocolSpec {
    /// Single-ion spec with no shuttling, cooling or fiber.
    pub fn single_ion(strategy: Strategy) -> Self {
        Self {
            ions: 1,
            strategy,
            train: TrainTiming {
                skip_terminal_pump: true,
                ..TrainTiming::default()
            },
            shuttle_time: 0.0,
            shuttle_plan: vec![0],
            return_shuttle: false,
            shelve_duration: 0.0,
            cooling: Cooling::none(),
            length: 0.0,
            c_fiber: C_FIBER,
            overhead: 0.0,
            efficiencies: EfficiencyChain::unit(),
            target_success_rate: None,
            memory: MemorySettings::default(),
            atomic: AtomicParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ions == 0 {
            return Err(Error::Parameter("a protocol needs at least one ion".into()));
        }
        let mut plan = self.shuttle_plan.clone();
        plan.sort_unstable();
        if plan != (0..self.ions).collect::<Vec<_>>() {
            return Err(Error::Parameter(format!(
                "shuttle plan {:?} must visit each of the {} ions exactly once",
                self.shuttle_plan, self.ions
            )));
        }
        self.strategy.validate()?;
        if !self.strategy.window.is_finite() {
            return Err(Error::Parameter("protocol windows must be finite".into()));
        }
        for (name, v) in [
            ("shuttle time", self.shuttle_time),
            ("shelve duration", self.shelve_duration),
            ("cooling duration", self.cooling.duration),
            ("overhead", self.overhead),
            ("pump duration", self.train.pump_duration),
            ("pump guard", self.train.pump_guard),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} = {v} must be non-negative")));
            }
        }
        if self.cooling.every_rounds == 0 {
            return Err(Error::Parameter("cooling interval must be at least one round".into()));
        }
        if let Some(r) = self.target_success_rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Parameter(format!("target success rate {r} must be positive")));
            }
        }
        if let Some(s) = self.memory.survival {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Parameter(format!("memory survival {s} outside [0, 1]")));
            }
        }
        self.memory.params.validate()?;
        self.efficiencies.validate()?;
        self.atomic.validate()?;
        self.link(1).validate()
    }

    pub fn mode_count(&self) -> usize {
        self.ions * self.strategy.pulse_count as usize
    }

    pub fn round_trip(&self) -> f64 {
        2.0 * self.length / self.c_fiber
    }

    /// Node work after the last train: unshelving and the return shuttle.
    fn tail(&self) -> f64 {
        let unshelves = if self.ions > 1 {
            (self.ions - 1) as f64 * self.shelve_duration
        } else {
            0.0
        };
        let shuttle = if self.return_shuttle && self.ions > 1 {
            self.shuttle_time
        } else {
            0.0
        };
        unshelves + shuttle
    }

    /// Overhead per round as seen by the timing algebra: configured
    /// overhead, node work not hidden under the heralding wait, and
    /// amortized cooling.
    pub fn effective_overhead(&self) -> f64 {
        let hidden = (self.tail() - self.round_trip()).max(0.0);
        self.overhead + hidden + self.cooling.per_round()
    }

    fn link(&self, modes: u64) -> LinkParams {
        LinkParams {
            length: self.length,
            c_fiber: self.c_fiber,
            overhead: self.effective_overhead(),
            mode_interval: 0.0,
            modes,
        }
    }
}

/// Duration of the trains with the shelves and shuttles between them,
/// summed from zero so it does not pick up rounding from the overhead.
fn active_span(spec: &ProtocolSpec) -> f64 {
    let s = &spec.strategy;
    let mut train = 0.0;
    for pulse in 1..=s.pulse_count {
        train += s.window;
        let terminal = pulse == s.pulse_count;
        if s.pump_after.contains(&pulse) && !(terminal && spec.train.skip_terminal_pump) {
            train += spec.train.pump_duration + 2.0 * spec.train.pump_guard;
        }
    }
    let hops = (spec.ions - 1) as f64;
    spec.ions as f64 * train + hops * (spec.shelve_duration + spec.shuttle_time)
}

/// Per-round timeline of a protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledProtocol {
    pub program: PulseProgram,
    /// Time from the first excitation to the end of the last train.
    pub span: f64,
    pub t_round: f64,
}

/// Lays out one round: preparation, excitation trains with shelving and
/// shuttles between ions, the heralding wait, unshelving and the return
/// shuttle, then the amortized cooling block.
pub fn compile(spec: &ProtocolSpec) -> Result<CompiledProtocol> {
    spec.validate()?;
    let mut program = PulseProgram::new(spec.ions)?;
    program.push(Primitive {
        start: 0.0,
        duration: spec.overhead,
        ion: None,
        op: Op::Prepare,
    })?;
    let train_start = spec.overhead;
    let mut t = train_start;
    let pulses = spec.strategy.pulse_count;
    let mut shelved = Vec::new();
    for (visit, &ion) in spec.shuttle_plan.iter().enumerate() {
        if visit > 0 {
            let prev = spec.shuttle_plan[visit - 1];
            program.push(Primitive {
                start: t,
                duration: spec.shelve_duration,
                ion: Some(prev),
                op: Op::Shelve {
                    direction: ShelveDirection::ToShelf,
                },
            })?;
            shelved.push(prev);
            t += spec.shelve_duration;
            program.push(Primitive {
                start: t,
                duration: spec.shuttle_time,
                ion: None,
                op: Op::Shuttle { to: ion },
            })?;
            t += spec.shuttle_time;
        }
        t = append_train(
            &mut program,
            ion,
            &spec.strategy,
            &spec.train,
            visit as u32 * pulses,
            t,
        )?;
    }
    let span_end = t;
    let span = active_span(spec);

    program.push(Primitive {
        start: span_end,
        duration: spec.round_trip(),
        ion: None,
        op: Op::HeraldWait,
    })?;
    for ion in shelved {
        program.push(Primitive {
            start: t,
            duration: spec.shelve_duration,
            ion: Some(ion),
            op: Op::Shelve {
                direction: ShelveDirection::FromShelf,
            },
        })?;
        t += spec.shelve_duration;
    }
    if spec.return_shuttle && spec.ions > 1 {
        program.push(Primitive {
            start: t,
            duration: spec.shuttle_time,
            ion: None,
            op: Op::Shuttle {
                to: spec.shuttle_plan[0],
            },
        })?;
    }
    let cooling = spec.cooling.per_round();
    if cooling > 0.0 {
        program.push(Primitive {
            start: program.end(),
            duration: cooling,
            ion: None,
            op: Op::Cooling,
        })?;
    }
    let t_round = spec.round_trip() + spec.effective_overhead() + span;
    Ok(CompiledProtocol {
        program,
        span,
        t_round,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub modes: usize,
    /// Per-mode heralding probabilities after the efficiency chain.
    pub per_mode_p: Vec<f64>,
    /// Sum of per-mode probabilities (first-success form).
    pub p_round: f64,
    /// Exact per-round success with mutually exclusive modes per ion and
    /// independent ions.
    pub p_round_exact: f64,
    /// Untruncated single-mode reference probability.
    pub p0: f64,
    pub efficiency: f64,
    pub span: f64,
    pub t_round: f64,
    pub mode_interval: f64,
    pub attempt_rate: f64,
    pub success_rate: f64,
    pub success_rate_exact: f64,
    pub generation_time: f64,
    pub m: f64,
    pub m_prime: f64,
    pub survival: f64,
    pub decay_error: f64,
    pub eta_link: f64,
}

/// Raw per-ion emission profiles of a compiled round, before efficiencies.
pub(crate) fn ion_profiles(
    spec: &ProtocolSpec,
    compiled: &CompiledProtocol,
) -> Result<Vec<BTreeMap<u32, f64>>> {
    let initial = vec![PopulationVector::pure(Level::SUp); spec.ions];
    let runs = run_node(&initial, &compiled.program, &spec.atomic)?;
    Ok(runs
        .into_iter()
        .map(|r| r.profile.modes.into_iter().zip(r.profile.per_mode).collect())
        .collect())
}

/// Spec with `efficiencies.other` solved for the target success rate.
pub fn calibrate(spec: &ProtocolSpec) -> Result<ProtocolSpec> {
    let Some(target) = spec.target_success_rate else {
        return Ok(spec.clone());
    };
    let compiled = compile(spec)?;
    let raw: f64 = ion_profiles(spec, &compiled)?
        .iter()
        .flat_map(|m| m.values())
        .sum();
    let mut chain = spec.efficiencies;
    chain.other = 1.0;
    let base = raw * chain.product(spec.length) / compiled.t_round;
    let other = target / base;
    if !(other > 0.0 && other <= 1.0) {
        return Err(Error::Config(format!(
            "target success rate {target}/s needs an extra efficiency factor of {other}, outside (0, 1]"
        )));
    }
    chain.other = other;
    let mut out = spec.clone();
    out.efficiencies = chain;
    out.target_success_rate = None;
    Ok(out)
}

/// Rates, enhancement and link efficiency of one protocol round.
pub fn simulate_rates(spec: &ProtocolSpec) -> Result<RateReport> {
    let spec = calibrate(spec)?;
    let compiled = compile(&spec)?;
    let profiles = ion_profiles(&spec, &compiled)?;
    let eta = spec.efficiencies.product(spec.length);

    let mut per_mode_p = Vec::with_capacity(spec.mode_count());
    let mut none_emitted = 1.0;
    for &ion in &spec.shuttle_plan {
        let ion_p: Vec<f64> = profiles[ion].values().map(|p| p * eta).collect();
        none_emitted *= 1.0 - ion_p.iter().sum::<f64>();
        per_mode_p.extend(ion_p);
    }
    if let Some(bad) = per_mode_p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!(
            "per-mode probability {bad} outside [0, 1] after efficiencies"
        )));
    }
    let modes = per_mode_p.len();
    let p_round: f64 = per_mode_p.iter().sum();
    let p_round_exact = 1.0 - none_emitted;
    if p_round > 1.0 {
        return Err(Error::Config(format!(
            "per-round success probability {p_round} exceeds 1"
        )));
    }
    let p0 = spec.atomic.branching_d * eta;
    let mode_interval = compiled.span / modes as f64;
    let link = LinkParams {
        mode_interval,
        ..spec.link(modes as u64)
    };
    let m = enhancement(&link)?;
    let m_prime = if p0 > 0.0 {
        enhancement_inhomogeneous(&link, &per_mode_p, p0)?
    } else {
        0.0
    };
    let t_round = compiled.t_round;
    let success_rate = p_round / t_round;
    let survival = spec.memory.survival();
    Ok(RateReport {
        modes,
        p_round,
        p_round_exact,
        p0,
        efficiency: eta,
        span: compiled.span,
        t_round,
        mode_interval,
        attempt_rate: modes as f64 / t_round,
        success_rate,
        success_rate_exact: p_round_exact / t_round,
        generation_time: 1.0 / success_rate,
        m,
        m_prime,
        survival,
        decay_error: 1.0 - survival,
        eta_link: link_efficiency(success_rate, &spec.memory.params, survival),
        per_mode_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fidelity_and_survival_points() {
        let mem = MemoryParams::default();
        assert_eq!(memory_fidelity(0.0, &mem), 1.0);
        let f = memory_fidelity(mem.tau_coh, &mem);
        assert!((f - (0.5 / std::f64::consts::E + 0.5)).abs() < 1e-15);
        assert_eq!(memory_survival(0.0, &mem), 1.0);
        assert!((1.0 - memory_survival(0.1, &mem) - 0.099).abs() < 5e-4);
        assert!((memory_survival(0.3, &mem) - 0.731).abs() < 5e-4);
    }

    #[test]
    fn link_efficiency_points() {
        let mem = MemoryParams::default();
        assert!((link_efficiency(1.0 / 0.234, &mem, 0.74) - 1.157).abs() < 5e-4);
        assert!((link_efficiency(1.0 / mem.tau_coh, &mem, 1.0) - 1.0).abs() < 1e-15);
        assert!((link_efficiency(263.0, &mem, 0.89) - 85.7).abs() < 0.05);
    }

    #[test]
    fn single_ion_has_no_shuttles() {
        let spec = ProtocolSpec::single_ion(Strategy::link_1km());
        let c = compile(&spec).unwrap();
        assert_eq!(c.program.count(|o| matches!(o, Op::Shuttle { .. })), 0);
        assert_eq!(c.program.mode_count(), 12);
    }

    #[test]
    fn single_mode_round_is_t0() {
        let mut spec = ProtocolSpec::single_ion(Strategy::none(1));
        spec.length = 1000.0;
        spec.overhead = 3e-6;
        let report = simulate_rates(&spec).unwrap();
        let link = LinkParams::new(1000.0, 3e-6, spec.strategy.window, 1);
        assert_eq!(report.t_round, link.t0());
        assert_eq!(report.m, 1.0);
    }

    #[test]
    fn zero_efficiency_gives_zero_rate() {
        let mut spec = ProtocolSpec::single_ion(Strategy::link_1km());
        spec.efficiencies.detector = 0.0;
        let r = simulate_rates(&spec).unwrap();
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.m_prime, 0.0);
    }

    #[test]
    fn exact_rate_below_first_success() {
        let mut spec = ProtocolSpec::single_ion(Strategy::link_1km());
        spec.ions = 3;
        spec.shuttle_plan = vec![0, 1, 2];
        spec.shuttle_time = 25e-6;
        spec.efficiencies = EfficiencyChain::default();
        let r = simulate_rates(&spec).unwrap();
        assert!(r.success_rate_exact < r.success_rate);
        assert_eq!(r.modes, 36);
    }

    #[test]
    fn bad_shuttle_plan() {
        let mut spec = ProtocolSpec::single_ion(Strategy::link_1km());
        spec.ions = 2;
        spec.shuttle_plan = vec![0, 0];
        assert!(compile(&spec).is_err());
    }
}
