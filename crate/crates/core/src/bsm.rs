//! Two-node entanglement heralded by two-photon coincidences.
//!
//! Ion `i` of one node is paired with ion `i` of the other in visit order.
//! Within a pair, the first window in which either ion emits decides the
//! attempt: both emit (coincidence possible), one emits (the pair can never
//! herald again), or neither emits and the train continues. A fresh pair
//! starts after each shuttle.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{Level, PopulationVector, ShelfOrigin};
use crate::engine::Strategy;
use crate::error::{Error, Result};
use crate::montecarlo::{binomial_se, emitted_mode, shard_len, shard_rng, PathSampler, SHARDS};
use crate::program::{Op, PulseProgram};
use crate::scheduler::{calibrate, compile, CompiledProtocol, ProtocolSpec};

/// Allowed mismatch between aligned window edges, seconds.
const ALIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePair {
    pub a: ProtocolSpec,
    pub b: ProtocolSpec,
    /// Fraction of two-photon events with an accepted coincidence pattern.
    pub bsm_efficiency: f64,
    /// Start of node b's windows relative to node a's, seconds.
    pub window_alignment: f64,
}

impl NodePair {
    pub fn symmetric(spec: ProtocolSpec) -> Self {
        Self {
            a: spec.clone(),
            b: spec,
            bsm_efficiency: 0.5,
            window_alignment: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bsm_efficiency) {
            return Err(Error::Parameter(format!(
                "BSM efficiency {} outside [0, 1]",
                self.bsm_efficiency
            )));
        }
        if !self.window_alignment.is_finite() {
            return Err(Error::Parameter("window alignment must be finite".into()));
        }
        Ok(())
    }

    /// Checks that both nodes open identical windows, up to the alignment offset.
    pub fn check_alignment(&self, a: &PulseProgram, b: &PulseProgram) -> Result<()> {
        let wa = a.windows();
        let wb = b.windows();
        if wa.len() != wb.len() {
            return Err(Error::Construction(format!(
                "node a has {} windows, node b has {}",
                wa.len(),
                wb.len()
            )));
        }
        for (x, y) in wa.iter().zip(&wb) {
            let offset = y.start - x.start - self.window_alignment;
            if x.mode != y.mode
                || offset.abs() > ALIGN_TOL
                || (x.duration - y.duration).abs() > ALIGN_TOL
            {
                return Err(Error::Construction(format!(
                    "window of mode {} is not aligned between the nodes",
                    x.mode
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    BothEmit,
    NeitherEmit,
    OneEmits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coincidence {
    pub probability: f64,
    /// The heralded state is unaffected by emission imbalance and later
    /// pulses as long as both nodes share the window geometry.
    pub quality_preserved: bool,
}

/// Heralding probability of one window given each side's detected-photon
/// probability.
pub fn window_coincidence(p_a: f64, p_b: f64, pair: &NodePair) -> Result<Coincidence> {
    pair.validate()?;
    for p in [p_a, p_b] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("photon probability {p} outside [0, 1]")));
        }
    }
    let aligned = {
        let a = compile(&pair.a)?;
        let b = compile(&pair.b)?;
        pair.check_alignment(&a.program, &b.program).is_ok()
    };
    Ok(Coincidence {
        probability: p_a * p_b * pair.bsm_efficiency,
        quality_preserved: aligned,
    })
}

/// Per-window classification. Masses are absolute; the outcome
/// probabilities are conditional on the pair still running.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub mode: u32,
    pub pair: usize,
    pub both_emit: f64,
    pub one_emits: f64,
    pub neither_emit: f64,
    pub heralded: f64,
    pub heralded_total: f64,
    /// Pairs that ended without a herald, for the current ion pair.
    pub terminated: f64,
    pub continuing: f64,
    /// Probability of a further coincidence once this window has heralded.
    pub post_herald_coincidence: f64,
}

impl WindowRecord {
    pub fn mass_balance(&self) -> f64 {
        self.heralded_total + self.terminated + self.continuing
    }

    pub fn outcome(&self, outcome: AttemptOutcome) -> f64 {
        match outcome {
            AttemptOutcome::BothEmit => self.both_emit,
            AttemptOutcome::OneEmits => self.one_emits,
            AttemptOutcome::NeitherEmit => self.neither_emit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonIonReport {
    pub modes: usize,
    pub windows: Vec<WindowRecord>,
    pub p_herald: f64,
    pub efficiency_a: f64,
    pub efficiency_b: f64,
    pub t_round: f64,
    pub attempt_rate: f64,
    pub success_rate: f64,
    pub quality_preserved: bool,
}

/// Emission of one ion at each of its windows, with the population that
/// has not emitted yet.
#[derive(Debug, Clone)]
struct IonTrace {
    /// (mode, emission in this window, still-dark mass after it)
    windows: Vec<(u32, f64, f64)>,
    /// Largest emission into later modes from an ion that already emitted.
    post_emission: f64,
}

fn ion_traces(spec: &ProtocolSpec, compiled: &CompiledProtocol) -> Result<Vec<IonTrace>> {
    let maps = compiled
        .program
        .primitives()
        .iter()
        .map(|p| Ok((*p, p.transition_map(&spec.atomic)?)))
        .collect::<Result<Vec<_>>>()?;
    let emitted = |pop: &PopulationVector| -> f64 {
        pop.iter()
            .filter(|(l, _)| matches!(l, Level::Photon(_) | Level::Shelved(ShelfOrigin::Photon(_))))
            .map(|(_, p)| p)
            .sum()
    };
    (0..spec.ions)
        .map(|ion| {
            let mut pop = PopulationVector::pure(Level::SUp);
            let mut windows = Vec::new();
            let mut post_emission: f64 = 0.0;
            for (i, (prim, map)) in maps.iter().enumerate() {
                let Some(map) = map else { continue };
                if !prim.targets(ion) {
                    continue;
                }
                let before = emitted(&pop);
                pop = pop.apply(map)?;
                if let Op::Excite { mode, .. } = prim.op {
                    let q = emitted(&pop) - before;
                    let dark = pop.total() - emitted(&pop);
                    windows.push((mode, q, dark));
                    // Follow an ion that emitted here through the rest of the round.
                    let mut after = PopulationVector::pure(Level::Photon(mode));
                    for (later, later_map) in &maps[i + 1..] {
                        if let (Some(m), true) = (later_map, later.targets(ion)) {
                            after = after.apply(m)?;
                        }
                    }
                    let extra: f64 = after
                        .photon_tallies()
                        .iter()
                        .filter(|(m, _)| **m != mode)
                        .map(|(_, p)| p)
                        .sum();
                    post_emission = post_emission.max(extra);
                }
            }
            Ok(IonTrace {
                windows,
                post_emission,
            })
        })
        .collect()
}

/// Joint evolution of both nodes over one round.
pub fn simulate_ion_ion(pair: &NodePair) -> Result<IonIonReport> {
    pair.validate()?;
    let a = calibrate(&pair.a)?;
    let b = calibrate(&pair.b)?;
    let ca = compile(&a)?;
    let cb = compile(&b)?;
    pair.check_alignment(&ca.program, &cb.program)?;
    let ta = ion_traces(&a, &ca)?;
    let tb = ion_traces(&b, &cb)?;
    let eta_a = a.efficiencies.product(a.length);
    let eta_b = b.efficiencies.product(b.length);
    let detect = eta_a * eta_b * pair.bsm_efficiency;

    let mut windows = Vec::with_capacity(ca.program.mode_count());
    let mut heralded_total = 0.0;
    for (visit, (&ion_a, &ion_b)) in a.shuttle_plan.iter().zip(&b.shuttle_plan).enumerate() {
        let (xa, xb) = (&ta[ion_a], &tb[ion_b]);
        let post = xa.post_emission.max(xb.post_emission);
        let weight = 1.0 - heralded_total;
        let mut pair_heralded = 0.0;
        let (mut dark_a, mut dark_b) = (1.0, 1.0);
        for (&(mode, qa, ra), &(_, qb, rb)) in xa.windows.iter().zip(&xb.windows) {
            let running = weight * dark_a * dark_b;
            let both = weight * qa * qb;
            let one = weight * (qa * rb + ra * qb);
            let neither = weight * ra * rb;
            let heralded = both * detect;
            heralded_total += heralded;
            pair_heralded += heralded;
            let cond = |x: f64| if running > 0.0 { x / running } else { 0.0 };
            windows.push(WindowRecord {
                mode,
                pair: visit,
                both_emit: cond(both),
                one_emits: cond(one),
                neither_emit: if running > 0.0 { neither / running } else { 1.0 },
                heralded,
                heralded_total,
                terminated: weight * (1.0 - ra * rb) - pair_heralded,
                continuing: neither,
                post_herald_coincidence: post * post,
            });
            dark_a = ra;
            dark_b = rb;
        }
    }
    let t_round = ca.t_round.max(cb.t_round);
    let quality_preserved = windows.iter().all(|w| w.post_herald_coincidence == 0.0);
    Ok(IonIonReport {
        modes: windows.len(),
        p_herald: heralded_total,
        efficiency_a: eta_a,
        efficiency_b: eta_b,
        t_round,
        attempt_rate: windows.len() as f64 / t_round,
        success_rate: heralded_total / t_round,
        quality_preserved,
        windows,
    })
}

/// Path-sampled heralding probabilities of a node pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonIonEstimate {
    pub samples: u64,
    pub modes: Vec<u32>,
    pub heralded: Vec<f64>,
    pub heralded_se: Vec<f64>,
    pub total: f64,
    pub total_se: f64,
}

/// Samples both nodes ion by ion, with photon loss and BSM acceptance
/// drawn per event.
pub fn monte_carlo_ion_ion(pair: &NodePair, samples: u64, seed: u64) -> Result<IonIonEstimate> {
    pair.validate()?;
    if samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let a = calibrate(&pair.a)?;
    let b = calibrate(&pair.b)?;
    let ca = compile(&a)?;
    let cb = compile(&b)?;
    pair.check_alignment(&ca.program, &cb.program)?;
    let sa = PathSampler::new(&ca.program, &a.atomic)?;
    let sb = PathSampler::new(&cb.program, &b.atomic)?;
    let eta_a = a.efficiencies.product(a.length);
    let eta_b = b.efficiencies.product(b.length);
    let modes: Vec<u32> = ca.program.windows().iter().map(|w| w.mode).collect();
    let plan: Vec<(usize, usize)> = a
        .shuttle_plan
        .iter()
        .copied()
        .zip(b.shuttle_plan.iter().copied())
        .collect();

    let counts = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(seed, shard);
            let mut counts = vec![0u64; modes.len()];
            for _ in 0..shard_len(samples, shard) {
                for &(ion_a, ion_b) in &plan {
                    let ea = emitted_mode(sa.walk(ion_a, Level::SUp, &mut rng));
                    let eb = emitted_mode(sb.walk(ion_b, Level::SUp, &mut rng));
                    let (Some(ma), Some(mb)) = (ea, eb) else { continue };
                    if ma != mb {
                        continue;
                    }
                    let seen_a = rng.random::<f64>() < eta_a;
                    let seen_b = rng.random::<f64>() < eta_b;
                    let accepted = rng.random::<f64>() < pair.bsm_efficiency;
                    if seen_a && seen_b && accepted {
                        let i = modes.binary_search(&ma).expect("mode of a window");
                        counts[i] += 1;
                        break;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; modes.len()],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
                x
            },
        );
    let n = samples as f64;
    let heralded: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let heralded_se = heralded.iter().map(|&p| binomial_se(p, samples)).collect();
    let total = counts.iter().sum::<u64>() as f64 / n;
    Ok(IonIonEstimate {
        samples,
        modes,
        heralded,
        heralded_se,
        total,
        total_se: binomial_se(total, samples),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Total mode count, spread evenly over the base ion count.
    ModeCount,
    /// Ion count at the base pulses per ion.
    IonCount,
}

/// How a train is resized along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "group")]
pub enum StrategyFamily {
    None,
    Every,
    Periodic(u32),
    /// The base strategy cut to the requested length.
    Fixed,
}

impl StrategyFamily {
    pub fn build(&self, base: &Strategy, pulses: u32) -> Result<Strategy> {
        let s = match *self {
            StrategyFamily::None => Strategy::none(pulses),
            StrategyFamily::Every => Strategy::every(pulses),
            StrategyFamily::Periodic(g) => Strategy::periodic(pulses, g),
            StrategyFamily::Fixed => {
                if pulses > base.pulse_count {
                    return Err(Error::Parameter(format!(
                        "fixed strategy has {} pulses, cannot extend to {pulses}",
                        base.pulse_count
                    )));
                }
                base.truncated_to(pulses)
            }
        };
        Ok(s.with_window(base.window, base.truncate))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub modes: u32,
    pub ions: usize,
    pub pulses_per_ion: u32,
    pub p_herald: f64,
    pub t_round: f64,
    pub success_rate: f64,
    /// Timing-only enhancement N * T_single / T_round.
    pub m: f64,
    /// Success-rate ratio to the single-mode baseline.
    pub m_prime: f64,
    /// Heralding-probability ratio to the single-mode baseline.
    pub efficiency_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsmCurve {
    pub axis: SweepAxis,
    pub baseline_p: f64,
    pub baseline_t_round: f64,
    pub points: Vec<SweepPoint>,
}

fn resized(spec: &ProtocolSpec, ions: usize, strategy: Strategy) -> ProtocolSpec {
    let mut out = spec.clone();
    if ions != spec.ions {
        out.shuttle_plan = (0..ions).collect();
    }
    out.ions = ions;
    out.strategy = strategy;
    out
}

fn resized_pair(base: &NodePair, ions: usize, pulses: u32, family: StrategyFamily) -> Result<NodePair> {
    let mut pair = base.clone();
    pair.a = resized(&base.a, ions, family.build(&base.a.strategy, pulses)?);
    pair.b = resized(&base.b, ions, family.build(&base.b.strategy, pulses)?);
    Ok(pair)
}

/// Ion-ion enhancement over a grid, relative to one pulse on one ion.
/// Calibration targets of the base specs are resolved once and the
/// resulting efficiencies are held fixed across the grid.
pub fn sweep_enhancement(
    base: &NodePair,
    axis: SweepAxis,
    grid: &[u32],
    family: StrategyFamily,
) -> Result<BsmCurve> {
    if grid.is_empty() {
        return Err(Error::Parameter("sweep grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::Parameter("sweep grid must be positive and increasing".into()));
    }
    let mut base = base.clone();
    base.a = calibrate(&base.a)?;
    base.b = calibrate(&base.b)?;
    let single = resized_pair(&base, 1, 1, StrategyFamily::None)?;
    let baseline = simulate_ion_ion(&single)?;
    if baseline.p_herald == 0.0 {
        return Err(Error::Parameter("single-mode baseline never heralds".into()));
    }
    let ions = base.a.ions;
    let points = grid
        .par_iter()
        .map(|&n| {
            let (ion_count, pulses) = match axis {
                SweepAxis::ModeCount => {
                    if !(n as usize).is_multiple_of(ions) {
                        return Err(Error::Parameter(format!(
                            "mode count {n} is not a multiple of the {ions} ions"
                        )));
                    }
                    (ions, n / ions as u32)
                }
                SweepAxis::IonCount => (n as usize, base.a.strategy.pulse_count),
            };
            let pair = resized_pair(&base, ion_count, pulses, family)?;
            let r = simulate_ion_ion(&pair)?;
            let modes = ion_count as u32 * pulses;
            Ok(SweepPoint {
                modes,
                ions: ion_count,
                pulses_per_ion: pulses,
                p_herald: r.p_herald,
                t_round: r.t_round,
                success_rate: r.success_rate,
                m: modes as f64 * baseline.t_round / r.t_round,
                m_prime: r.success_rate / baseline.success_rate,
                efficiency_gain: r.p_herald / baseline.p_herald,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BsmCurve {
        axis,
        baseline_p: baseline.p_herald,
        baseline_t_round: baseline.t_round,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(strategy: Strategy) -> NodePair {
        NodePair::symmetric(ProtocolSpec::single_ion(strategy))
    }

    #[test]
    fn coincidence_basics() {
        let p = pair(Strategy::none(1));
        assert_eq!(window_coincidence(0.0, 0.7, &p).unwrap().probability, 0.0);
        assert_eq!(window_coincidence(1.0, 1.0, &p).unwrap().probability, 0.5);
        let c = window_coincidence(0.2, 0.05, &p).unwrap();
        assert!(c.quality_preserved);
    }

    #[test]
    fn single_mode_is_product() {
        let r = simulate_ion_ion(&pair(Strategy::none(1))).unwrap();
        assert!((r.p_herald - 0.06 * 0.06 * 0.5).abs() < 1e-15);
        let w = &r.windows[0];
        assert!((w.both_emit + w.one_emits + w.neither_emit - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_balance_and_no_reherald() {
        let r = simulate_ion_ion(&pair(Strategy::link_3m())).unwrap();
        for w in &r.windows {
            assert!((w.mass_balance() - 1.0).abs() < 1e-9);
            assert_eq!(w.post_herald_coincidence, 0.0);
        }
        assert!(r.quality_preserved);
    }

    #[test]
    fn mismatched_modes_rejected() {
        let mut p = pair(Strategy::link_1km());
        p.b.strategy = Strategy::every(11);
        assert!(matches!(simulate_ion_ion(&p), Err(Error::Construction(_))));
    }

    #[test]
    fn unit_grid_is_one() {
        let c = sweep_enhancement(
            &pair(Strategy::every(12)),
            SweepAxis::ModeCount,
            &[1],
            StrategyFamily::Every,
        )
        .unwrap();
        assert_eq!(c.points[0].efficiency_gain, 1.0);
        assert_eq!(c.points[0].m_prime, 1.0);
    }
}
