//! Markov-chain execution of pulse programs and absorbing-state analysis.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicParams, Level, PopulationVector, TransitionMap, CONSERVATION_TOL};
use crate::error::{Error, Result};
use crate::program::{Op, Primitive, PulseProgram};

/// Pulse count used to stand in for an unbounded excitation train.
pub const LIMIT_PULSES: u32 = 200;
/// Required step between consecutive branching ratios at [`LIMIT_PULSES`].
pub const LIMIT_TOL: f64 = 1e-9;

/// Where intermediate pumpings are inserted in a train of excitation pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub pulse_count: u32,
    /// 1-based pulse indices after which a pumping follows.
    pub pump_after: BTreeSet<u32>,
    /// Per-mode window in seconds.
    pub window: f64,
    /// Whether the population map cuts the decay at the window edge. When
    /// false the decay is treated as fully resolved inside each window.
    pub truncate: bool,
}

const DEFAULT_WINDOW: f64 = 200e-9;

impl Strategy {
    pub fn new(pulse_count: u32, pump_after: impl IntoIterator<Item = u32>) -> Self {
        Self {
            pulse_count,
            pump_after: pump_after.into_iter().collect(),
            window: DEFAULT_WINDOW,
            truncate: false,
        }
    }

    pub fn none(pulse_count: u32) -> Self {
        Self::new(pulse_count, [])
    }

    pub fn every(pulse_count: u32) -> Self {
        Self::new(pulse_count, 1..=pulse_count)
    }

    /// Pump after every `group`-th pulse.
    pub fn periodic(pulse_count: u32, group: u32) -> Self {
        let group = group.max(1);
        Self::new(pulse_count, (1..=pulse_count).filter(|i| i % group == 0))
    }

    /// Eight pulses at the 13 ns repetition period, one pumping after the fourth.
    pub fn link_3m() -> Self {
        Self::new(8, [4]).with_window(13e-9, true)
    }

    /// Twelve pulses grouped 3-3-2-2-2.
    pub fn link_1km() -> Self {
        Self::new(12, [3, 6, 8, 10])
    }

    /// Eleven pulses per ion grouped 3-3-2-2-1.
    pub fn link_12km_ion() -> Self {
        Self::new(11, [3, 6, 8, 10])
    }

    pub fn with_window(mut self, window: f64, truncate: bool) -> Self {
        self.window = window;
        self.truncate = truncate;
        self
    }

    /// Canonical strategy by name; `pulses` sizes the `none`/`every` families.
    pub fn named(name: &str, pulses: u32) -> Result<Self> {
        match name {
            "none" => Ok(Self::none(pulses)),
            "every" => Ok(Self::every(pulses)),
            "3m" => Ok(Self::link_3m()),
            "1km" => Ok(Self::link_1km()),
            "12km" => Ok(Self::link_12km_ion()),
            other => Err(Error::Parameter(format!(
                "unknown strategy '{other}' (expected none, every, 3m, 1km, 12km)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulse_count == 0 {
            return Err(Error::Parameter("strategy needs at least one pulse".into()));
        }
        if let Some(&bad) = self
            .pump_after
            .iter()
            .find(|&&i| i == 0 || i > self.pulse_count)
        {
            return Err(Error::Parameter(format!(
                "pump position {bad} outside 1..={}",
                self.pulse_count
            )));
        }
        if self.window.is_nan() || self.window <= 0.0 {
            return Err(Error::Parameter(format!(
                "window must be positive, got {}",
                self.window
            )));
        }
        Ok(())
    }

    /// Window length seen by the population maps.
    pub fn decay_window(&self) -> f64 {
        if self.truncate {
            self.window
        } else {
            f64::INFINITY
        }
    }

    pub fn pump_count(&self) -> usize {
        self.pump_after.len()
    }

    /// Same strategy cut to its first `pulses` pulses.
    pub fn truncated_to(&self, pulses: u32) -> Self {
        Self {
            pulse_count: pulses,
            pump_after: self.pump_after.iter().copied().filter(|&i| i <= pulses).collect(),
            ..self.clone()
        }
    }

    /// Drops a pumping after the last pulse, which cannot add emission.
    pub fn without_terminal_pump(&self) -> Self {
        let mut s = self.clone();
        s.pump_after.remove(&self.pulse_count);
        s
    }

    /// Sizes of the pulse groups separated by pumpings.
    pub fn groups(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut prev = 0;
        for &p in &self.pump_after {
            out.push(p - prev);
            prev = p;
        }
        if prev < self.pulse_count {
            out.push(self.pulse_count - prev);
        }
        out
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pumps: Vec<String> = self.pump_after.iter().map(u32::to_string).collect();
        write!(f, "N={} pumps=[{}]", self.pulse_count, pumps.join(" "))
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts a canonical name (sized to 1 pulse for families) or an
    /// explicit `N:p1,p2,...` pump list.
    fn from_str(s: &str) -> Result<Self> {
        if let Some((n, pumps)) = s.split_once(':') {
            let n: u32 = n
                .trim()
                .parse()
                .map_err(|_| Error::Parameter(format!("bad pulse count in '{s}'")))?;
            let pumps = pumps
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    p.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Parameter(format!("bad pump index '{p}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            let st = Strategy::new(n, pumps);
            st.validate()?;
            Ok(st)
        } else {
            Strategy::named(s, 1)
        }
    }
}

/// Final populations that did not end in a collected emission.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub s_up: f64,
    pub s_down: f64,
    pub excited: f64,
    pub d_leak: f64,
    pub d_shelf: f64,
}

impl Residuals {
    pub fn sum(&self) -> f64 {
        self.s_up + self.s_down + self.excited + self.d_leak + self.d_shelf
    }
}

/// Collected-photon probabilities per mode, before external efficiencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionProfile {
    pub modes: Vec<u32>,
    pub per_mode: Vec<f64>,
    pub total: f64,
    pub residuals: Residuals,
}

impl EmissionProfile {
    fn from_population(modes: Vec<u32>, pop: &PopulationVector) -> Self {
        let tallies = pop.photon_tallies();
        let per_mode: Vec<f64> = modes
            .iter()
            .map(|m| tallies.get(m).copied().unwrap_or(0.0))
            .collect();
        let total = per_mode.iter().sum();
        let mut residuals = Residuals::default();
        for (level, p) in pop.iter() {
            match level {
                Level::SUp => residuals.s_up += p,
                Level::SDown => residuals.s_down += p,
                Level::Excited => residuals.excited += p,
                Level::Leak => residuals.d_leak += p,
                Level::Shelved(crate::atomic::ShelfOrigin::Leak) => residuals.d_shelf += p,
                // Shelved photon tallies are counted in `per_mode`.
                Level::Shelved(_) | Level::Photon(_) => {}
            }
        }
        Self {
            modes,
            per_mode,
            total,
            residuals,
        }
    }

    /// Running sum of per-mode probabilities.
    pub fn cumulative(&self) -> Vec<f64> {
        self.per_mode
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }
}

/// Trajectory and emission profile of one ion.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramRun {
    /// Population before the first primitive and after each primitive acting on the ion.
    pub trajectory: Vec<PopulationVector>,
    pub profile: EmissionProfile,
}

/// Runs a single-ion program starting from `initial`.
pub fn run_program(
    initial: &PopulationVector,
    program: &PulseProgram,
    params: &AtomicParams,
) -> Result<ProgramRun> {
    if program.ions() != 1 {
        return Err(Error::Construction(format!(
            "run_program expects a single-ion program, got {} ions",
            program.ions()
        )));
    }
    Ok(run_node(std::slice::from_ref(initial), program, params)?
        .into_iter()
        .next()
        .expect("one ion"))
}

/// Runs a multi-ion program. Ions evolve independently; each returned
/// profile lists only the modes emitted by that ion.
pub fn run_node(
    initial: &[PopulationVector],
    program: &PulseProgram,
    params: &AtomicParams,
) -> Result<Vec<ProgramRun>> {
    if initial.len() != program.ions() {
        return Err(Error::Construction(format!(
            "{} initial states for a {}-ion program",
            initial.len(),
            program.ions()
        )));
    }
    params.validate()?;
    let maps: Vec<(Primitive, Option<TransitionMap>)> = program
        .primitives()
        .iter()
        .map(|p| Ok((*p, p.transition_map(params)?)))
        .collect::<Result<_>>()?;
    let windows = program.windows();
    (0..program.ions())
        .map(|ion| {
            let mut pop = initial[ion].clone();
            let start_total = pop.total();
            let mut trajectory = vec![pop.clone()];
            for (prim, map) in &maps {
                let Some(map) = map else { continue };
                if !prim.targets(ion) {
                    continue;
                }
                pop = pop.apply(map)?;
                let total = pop.total();
                if (total - start_total).abs() > CONSERVATION_TOL {
                    return Err(Error::Numeric(format!(
                        "population drifted to {total} after {:?}",
                        prim.op
                    )));
                }
                trajectory.push(pop.clone());
            }
            let modes = windows
                .iter()
                .filter(|w| w.ion == ion)
                .map(|w| w.mode)
                .collect();
            let profile = EmissionProfile::from_population(modes, &pop);
            Ok(ProgramRun {
                trajectory,
                profile,
            })
        })
        .collect()
}

/// Bare single-ion program for a strategy: pulses back to back, pumpings of
/// 100 ns, mode indices from zero.
pub fn strategy_program(strategy: &Strategy) -> Result<PulseProgram> {
    strategy.validate()?;
    let mut program = PulseProgram::new(1)?;
    let step = if strategy.window.is_finite() {
        strategy.window
    } else {
        0.0
    };
    let decay_window = strategy.decay_window();
    let mut t = 0.0;
    for pulse in 1..=strategy.pulse_count {
        program.push(Primitive {
            start: t,
            duration: step,
            ion: Some(0),
            op: Op::Excite {
                mode: pulse - 1,
                decay_window,
            },
        })?;
        t += step;
        if strategy.pump_after.contains(&pulse) {
            program.push(Primitive {
                start: t,
                duration: 100e-9,
                ion: Some(0),
                op: Op::Pump,
            })?;
            t += 100e-9;
        }
    }
    Ok(program)
}

/// Emission profile of `strategy` from the initial sublevel.
pub fn strategy_profile(strategy: &Strategy, params: &AtomicParams) -> Result<EmissionProfile> {
    let program = strategy_program(strategy)?;
    Ok(run_program(&PopulationVector::pure(Level::SUp), &program, params)?.profile)
}

/// Total collected emission probability of `strategy` from the initial sublevel.
pub fn effective_branching_ratio(strategy: &Strategy, params: &AtomicParams) -> Result<f64> {
    Ok(strategy_profile(strategy, params)?.total)
}

/// Branching ratio of a strategy family in the long-train limit, with a
/// convergence check between the last two train lengths.
pub fn branching_ratio_limit(
    family: impl Fn(u32) -> Strategy,
    params: &AtomicParams,
) -> Result<f64> {
    let last = effective_branching_ratio(&family(LIMIT_PULSES), params)?;
    let prev = effective_branching_ratio(&family(LIMIT_PULSES - 1), params)?;
    if (last - prev).abs() >= LIMIT_TOL {
        return Err(Error::Numeric(format!(
            "branching ratio not converged at N = {LIMIT_PULSES}: step {:e}",
            (last - prev).abs()
        )));
    }
    Ok(last)
}

/// Group response used by the strategy search: emission of a train of
/// `pulses` from unit initial population, and the initial-sublevel
/// population left after the pumping that closes the group (or before it
/// when `pumped` is false).
pub(crate) fn group_response(
    params: &AtomicParams,
    pulses: u32,
    decay_window: f64,
    pumped: bool,
) -> Result<(f64, f64)> {
    let mut s = Strategy::none(pulses).with_window(
        if decay_window.is_finite() { decay_window } else { DEFAULT_WINDOW },
        decay_window.is_finite(),
    );
    if pumped {
        s.pump_after.insert(pulses);
    }
    let mut state = TransientState::initial();
    let emitted = state.run(&s, params)?;
    Ok((emitted, state.s_up))
}

/// Compact evaluator tracking only levels that can still emit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TransientState {
    pub s_up: f64,
    pub s_down: f64,
    pub excited: f64,
}

impl TransientState {
    pub fn initial() -> Self {
        Self {
            s_up: 1.0,
            s_down: 0.0,
            excited: 0.0,
        }
    }

    fn apply(&mut self, map: &TransitionMap) -> f64 {
        let mut next = [0.0f64; 3];
        let mut emitted = 0.0;
        for (level, mass) in [
            (Level::SUp, self.s_up),
            (Level::SDown, self.s_down),
            (Level::Excited, self.excited),
        ] {
            if mass == 0.0 {
                continue;
            }
            for (to, q) in map.row(level).iter() {
                match to {
                    Level::SUp => next[0] += mass * q,
                    Level::SDown => next[1] += mass * q,
                    Level::Excited => next[2] += mass * q,
                    Level::Photon(_) => emitted += mass * q,
                    _ => {}
                }
            }
        }
        self.s_up = next[0];
        self.s_down = next[1];
        self.excited = next[2];
        emitted
    }

    /// Runs `strategy` and returns the collected emission.
    pub fn run(&mut self, strategy: &Strategy, params: &AtomicParams) -> Result<f64> {
        let excite = crate::atomic::excitation_map(params, strategy.decay_window(), 0)?;
        let pump = crate::atomic::pump_map(params);
        let mut total = 0.0;
        for pulse in 1..=strategy.pulse_count {
            total += self.apply(&excite);
            if strategy.pump_after.contains(&pulse) {
                self.apply(&pump);
            }
        }
        Ok(total)
    }
}

/// Collected emission of `strategy`, computed on the transient levels only.
pub fn strategy_emission(strategy: &Strategy, params: &AtomicParams) -> Result<f64> {
    strategy.validate()?;
    TransientState::initial().run(strategy, params)
}

/// Number of repeated squarings used to bound the spectral radius.
const SQUARINGS: u32 = 50;

/// Upper bound on ln(spectral radius) from `||Q^(2^k)||^(1/2^k)`.
fn log_spectral_radius_bound(q: &DMatrix<f64>) -> f64 {
    let norm = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let n0 = norm(q);
    if n0 == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut a = q / n0;
    let mut log_scale = n0.ln();
    for _ in 0..SQUARINGS {
        a = &a * &a;
        log_scale *= 2.0;
        let c = norm(&a);
        if c == 0.0 {
            return f64::NEG_INFINITY;
        }
        a /= c;
        log_scale += c.ln();
    }
    log_scale / 2f64.powi(SQUARINGS as i32)
}

/// Exact absorption probabilities of the chain that repeats `map` forever,
/// starting from `start`.
pub fn absorbing_distribution(map: &TransitionMap, start: Level) -> Result<BTreeMap<Level, f64>> {
    // Reachable states from the start.
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    seen.insert(start);
    while let Some(level) = queue.pop_front() {
        for (to, q) in map.row(level).iter() {
            if q > 0.0 && seen.insert(to) {
                queue.push_back(to);
            }
        }
    }
    let is_absorbing = |level: Level| {
        let row = map.row(level);
        let stays = row.iter().all(|(to, q)| q == 0.0 || to == level);
        stays
    };
    let (absorbing, transient): (Vec<Level>, Vec<Level>) =
        seen.into_iter().partition(|&l| is_absorbing(l));

    if is_absorbing(start) {
        return Ok(BTreeMap::from([(start, 1.0)]));
    }

    let t = transient.len();
    let a = absorbing.len();
    let t_index = |l: Level| transient.iter().position(|&x| x == l);
    let a_index = |l: Level| absorbing.iter().position(|&x| x == l);
    let mut q = DMatrix::<f64>::zeros(t, t);
    let mut r = DMatrix::<f64>::zeros(t, a);
    for (i, &level) in transient.iter().enumerate() {
        for (to, p) in map.row(level).iter() {
            if let Some(j) = t_index(to) {
                q[(i, j)] += p;
            } else if let Some(j) = a_index(to) {
                r[(i, j)] += p;
            }
        }
    }
    let log_rho = log_spectral_radius_bound(&q);
    if log_rho >= (-1e-12f64).ln_1p() {
        return Err(Error::Analysis(format!(
            "transient chain does not drain: spectral radius >= {:.15}",
            log_rho.exp()
        )));
    }
    let lhs = DMatrix::<f64>::identity(t, t) - q;
    let b = lhs
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Analysis("singular fundamental matrix".into()))?;
    let row = t_index(start).expect("start is transient");
    Ok(absorbing
        .iter()
        .enumerate()
        .map(|(j, &level)| (level, b[(row, j)]))
        .filter(|(_, p)| *p != 0.0)
        .collect())
}
