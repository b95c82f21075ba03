//! Search over pump-insertion strategies.

use serde::{Deserialize, Serialize};

use crate::atomic::AtomicParams;
use crate::engine::{group_response, strategy_emission, Strategy};
use crate::error::{Error, Result};

/// Largest pulse budget accepted by [`solve_exhaustive`].
pub const EXHAUSTIVE_LIMIT: u32 = 20;

/// Relative slack under which two objective values count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    TotalEmission,
    /// Collected emission per second of train time.
    EmissionRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub pulses: u32,
    pub objective: Objective,
    pub pulse_interval: f64,
    pub pump_duration: f64,
    /// Cut the decay at the pulse interval instead of treating it as resolved.
    pub truncate: bool,
    pub params: AtomicParams,
}

impl OptimizationProblem {
    pub fn new(pulses: u32, objective: Objective) -> Self {
        Self {
            pulses,
            objective,
            pulse_interval: 200e-9,
            pump_duration: 100e-9,
            truncate: false,
            params: AtomicParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(Error::Parameter("pulse budget must be at least 1".into()));
        }
        if !(self.pulse_interval > 0.0) || !(self.pump_duration > 0.0) {
            return Err(Error::Parameter(format!(
                "durations must be positive (interval {}, pump {})",
                self.pulse_interval, self.pump_duration
            )));
        }
        self.params.validate()
    }

    fn decay_window(&self) -> f64 {
        if self.truncate {
            self.pulse_interval
        } else {
            f64::INFINITY
        }
    }

    /// Strategy with this problem's window settings.
    pub fn strategy(&self, pump_after: impl IntoIterator<Item = u32>) -> Strategy {
        let window = if self.pulse_interval.is_finite() {
            self.pulse_interval
        } else {
            200e-9
        };
        Strategy::new(self.pulses, pump_after).with_window(window, self.truncate)
    }

    /// Time spent on a train with `pumps` pumpings.
    pub fn train_time(&self, pumps: usize) -> f64 {
        self.pulses as f64 * self.pulse_interval + pumps as f64 * self.pump_duration
    }

    fn score(&self, emission: f64, pumps: usize) -> f64 {
        match self.objective {
            Objective::TotalEmission => emission,
            Objective::EmissionRate => emission / self.train_time(pumps),
        }
    }

    /// Objective value of an arbitrary strategy, evaluated from scratch.
    pub fn evaluate(&self, strategy: &Strategy) -> Result<f64> {
        let emission = strategy_emission(strategy, &self.params)?;
        Ok(self.score(emission, strategy.pump_count()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub pumps: usize,
    pub strategy: Strategy,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Strategy,
    pub value: f64,
    /// Best strategy for each pump count from 0 to `pulses - 1`.
    pub frontier: Vec<FrontierPoint>,
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_TOL * incumbent.abs().max(candidate.abs())
}

/// Candidate ordering: higher value, then fewer pumps, then earlier positions.
fn improves(
    value: f64,
    pumps: &[u32],
    best_value: f64,
    best_pumps: &[u32],
) -> bool {
    if better(value, best_value) {
        return true;
    }
    if better(best_value, value) {
        return false;
    }
    (pumps.len(), pumps) < (best_pumps.len(), best_pumps)
}

fn pick_best(frontier: &[FrontierPoint]) -> (Strategy, f64) {
    let mut best = &frontier[0];
    for point in &frontier[1..] {
        let a: Vec<u32> = point.strategy.pump_after.iter().copied().collect();
        let b: Vec<u32> = best.strategy.pump_after.iter().copied().collect();
        if improves(point.value, &a, best.value, &b) {
            best = point;
        }
    }
    (best.strategy.clone(), best.value)
}

/// Global optimum by enumerating every pump subset. Pumps after the last
/// pulse are never considered.
pub fn solve_exhaustive(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let n = problem.pulses;
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::Budget(format!(
            "{n} pulses exceed the exhaustive limit of {EXHAUSTIVE_LIMIT}; use the dynamic-programming solver"
        )));
    }
    let slots = n - 1;
    let mut frontier: Vec<Option<(f64, Vec<u32>)>> = vec![None; n as usize];
    for mask in 0u32..(1u32 << slots) {
        let pumps: Vec<u32> = (0..slots).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
        let value = problem.evaluate(&problem.strategy(pumps.iter().copied()))?;
        let slot = &mut frontier[pumps.len()];
        let replace = match slot {
            None => true,
            Some((v, p)) => improves(value, &pumps, *v, p),
        };
        if replace {
            *slot = Some((value, pumps));
        }
    }
    let frontier: Vec<FrontierPoint> = frontier
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let (value, pumps) = e.expect("every pump count is enumerated");
            FrontierPoint {
                pumps: k,
                strategy: problem.strategy(pumps),
                value,
            }
        })
        .collect();
    let (best, value) = pick_best(&frontier);
    Ok(OptimizationResult {
        best,
        value,
        frontier,
    })
}

/// Optimum by dynamic programming over group sizes.
///
/// After a pumping the transient state is pure initial sublevel up to a
/// scale factor, so a strategy decomposes into groups whose emission and
/// surviving population depend only on the group size.
pub fn solve_dp(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let n = problem.pulses as usize;
    let window = problem.decay_window();
    let mut open = vec![0.0; n + 1];
    let mut closed = vec![(0.0, 0.0); n + 1];
    for g in 1..=n {
        open[g] = group_response(&problem.params, g as u32, window, false)?.0;
        closed[g] = group_response(&problem.params, g as u32, window, true)?;
    }

    // value[k][m]: best emission of the last m pulses using exactly k pumps,
    // starting from unit initial population. first[k][m] is the size of the
    // leading group that attains it.
    let unset = f64::NEG_INFINITY;
    let mut value = vec![vec![unset; n + 1]; n];
    let mut first = vec![vec![0usize; n + 1]; n];
    for m in 1..=n {
        value[0][m] = open[m];
        first[0][m] = m;
    }
    for k in 1..n {
        for m in (k + 1)..=n {
            let mut best = unset;
            let mut best_g = 0;
            for g in 1..=(m - k) {
                let rest = value[k - 1][m - g];
                if rest == unset {
                    continue;
                }
                let (e, survive) = closed[g];
                let v = e + survive * rest;
                // Exact comparison: a tolerance here would compound across
                // stages. Exact ties keep the smallest leading group.
                if best_g == 0 || v > best {
                    best = v;
                    best_g = g;
                }
            }
            value[k][m] = best;
            first[k][m] = best_g;
        }
    }

    let mut frontier = Vec::with_capacity(n);
    for k in 0..n {
        let mut pumps = Vec::with_capacity(k);
        let (mut m, mut pos) = (n, 0u32);
        for j in (1..=k).rev() {
            let g = first[j][m];
            pos += g as u32;
            pumps.push(pos);
            m -= g;
        }
        let strategy = problem.strategy(pumps);
        frontier.push(FrontierPoint {
            pumps: k,
            value: problem.score(value[k][n], k),
            strategy,
        });
    }
    let (best, value) = pick_best(&frontier);
    Ok(OptimizationResult {
        best,
        value,
        frontier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pulse_prefers_no_pump() {
        let prob = OptimizationProblem::new(1, Objective::TotalEmission);
        for r in [solve_exhaustive(&prob).unwrap(), solve_dp(&prob).unwrap()] {
            assert!(r.best.pump_after.is_empty());
            assert!((r.value - 0.06).abs() < 1e-15);
        }
    }

    #[test]
    fn exhaustive_budget() {
        let prob = OptimizationProblem::new(21, Objective::TotalEmission);
        assert!(matches!(solve_exhaustive(&prob), Err(Error::Budget(_))));
        assert!(solve_dp(&prob).is_ok());
    }

    #[test]
    fn dp_matches_exhaustive_small() {
        for n in 1..=10 {
            for obj in [Objective::TotalEmission, Objective::EmissionRate] {
                let prob = OptimizationProblem::new(n, obj);
                let a = solve_exhaustive(&prob).unwrap();
                let b = solve_dp(&prob).unwrap();
                assert_eq!(a.best, b.best, "n={n} {obj:?}");
                assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs());
            }
        }
    }

    #[test]
    fn huge_pump_cost_prefers_no_pumps() {
        let mut prob = OptimizationProblem::new(12, Objective::EmissionRate);
        prob.pump_duration = 1e6;
        assert!(solve_dp(&prob).unwrap().best.pump_after.is_empty());
    }

    #[test]
    fn long_train_reaches_upper_bound_with_every() {
        let prob = OptimizationProblem::new(200, Objective::TotalEmission);
        let r = solve_dp(&prob).unwrap();
        assert_eq!(r.best, Strategy::every(200).without_terminal_pump());
        assert!((r.value - 0.544).abs() < 1e-3);
    }
}
