//! Timing algebra of a time-bin multiplexed link.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Light speed in fiber used by default, m/s.
pub const C_FIBER: f64 = 2.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Fiber length in meters.
    pub length: f64,
    pub c_fiber: f64,
    /// Averaged per-round overhead in seconds.
    pub overhead: f64,
    /// Mode interval in seconds; zero for frequency-style multiplexing.
    pub mode_interval: f64,
    pub modes: u64,
}

impl LinkParams {
    pub fn new(length: f64, overhead: f64, mode_interval: f64, modes: u64) -> Self {
        Self {
            length,
            c_fiber: C_FIBER,
            overhead,
            mode_interval,
            modes,
        }
    }

    pub fn with_modes(mut self, modes: u64) -> Self {
        self.modes = modes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64, range: &str| {
            Err(Error::Parameter(format!("{name} = {v} outside {range}")))
        };
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return bad("fiber length", self.length, "[0, inf)");
        }
        if !(self.c_fiber > 0.0 && self.c_fiber.is_finite()) {
            return bad("fiber light speed", self.c_fiber, "(0, inf)");
        }
        if !(self.overhead >= 0.0 && self.overhead.is_finite()) {
            return bad("overhead", self.overhead, "[0, inf)");
        }
        if !(self.mode_interval >= 0.0 && self.mode_interval.is_finite()) {
            return bad("mode interval", self.mode_interval, "[0, inf)");
        }
        if self.modes == 0 {
            return Err(Error::Parameter("mode count must be at least 1".into()));
        }
        Ok(())
    }

    /// Round-trip signalling time 2L/c.
    pub fn round_trip(&self) -> f64 {
        2.0 * self.length / self.c_fiber
    }

    /// Time per round of the single-mode protocol.
    pub fn t0(&self) -> f64 {
        self.round_trip() + self.overhead + self.mode_interval
    }
}

/// Averaged time per entangling attempt.
pub fn t_eff(link: &LinkParams) -> Result<f64> {
    link.validate()?;
    let n = link.modes as f64;
    Ok((link.round_trip() + link.overhead + n * link.mode_interval) / n)
}

/// Rate enhancement of the multiplexed link over the single-mode protocol.
pub fn enhancement(link: &LinkParams) -> Result<f64> {
    let t = t_eff(link)?;
    if t == 0.0 {
        return Err(Error::Parameter(
            "enhancement undefined for a link with zero round time".into(),
        ));
    }
    Ok(link.t0() / t)
}

/// Enhancement corrected for unequal per-mode success probabilities `p`
/// against the single-mode probability `p0`. The mode count is `p.len()`.
pub fn enhancement_inhomogeneous(link: &LinkParams, p: &[f64], p0: f64) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Parameter("need at least one mode probability".into()));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::Parameter(format!(
            "single-mode probability {p0} outside (0, 1]"
        )));
    }
    if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Parameter(format!("mode probability {bad} outside [0, 1]")));
    }
    let m = enhancement(&link.with_modes(p.len() as u64))?;
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    Ok(m * mean / p0)
}

/// Mode count at which the link reaches a 50 % duty cycle. Infinite when
/// the mode interval is zero.
pub fn n_half_duty(link: &LinkParams) -> Result<f64> {
    link.validate()?;
    if link.mode_interval == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((link.round_trip() + link.overhead) / link.mode_interval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub modes: u64,
    pub enhancement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementCurve {
    pub points: Vec<CurvePoint>,
    pub n_half: f64,
    /// Enhancement reached at the 50 % duty-cycle point, (N0 + 1)/2.
    pub m_saturated: f64,
}

/// Enhancement over a grid of mode counts.
pub fn enhancement_curve(link: &LinkParams, grid: &[u64]) -> Result<EnhancementCurve> {
    let points = grid
        .iter()
        .map(|&n| {
            Ok(CurvePoint {
                modes: n,
                enhancement: enhancement(&link.with_modes(n))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_half = n_half_duty(link)?;
    Ok(EnhancementCurve {
        points,
        n_half,
        m_saturated: (n_half + 1.0) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn km12(n: u64) -> LinkParams {
        LinkParams::new(12_000.0, 50e-6, 2e-6, n)
    }

    #[test]
    fn single_mode_is_t0() {
        let link = km12(1);
        assert_eq!(t_eff(&link).unwrap(), link.t0());
        assert_eq!(enhancement(&link).unwrap(), 1.0);
    }

    #[test]
    fn worked_example() {
        let link = km12(85);
        assert!((t_eff(&link).unwrap() - 4e-6).abs() < 1e-18);
        assert!((enhancement(&link).unwrap() - 43.0).abs() < 1e-12);
        assert!((n_half_duty(&link).unwrap() - 85.0).abs() < 1e-12);
    }

    #[test]
    fn large_n_limit() {
        let link = km12(1_000_000_000);
        let t = t_eff(&link).unwrap();
        assert!((t - 2e-6).abs() / 2e-6 < 1e-6);
    }

    #[test]
    fn zero_interval_and_zero_modes() {
        let link = LinkParams::new(10.0, 1e-6, 0.0, 4);
        assert_eq!(n_half_duty(&link).unwrap(), f64::INFINITY);
        assert!(t_eff(&link.with_modes(0)).is_err());
    }

    #[test]
    fn inhomogeneous_edges() {
        let link = km12(3);
        let m = enhancement(&link).unwrap();
        let mp = enhancement_inhomogeneous(&link, &[0.2; 3], 0.2).unwrap();
        assert!((mp - m).abs() < 1e-12 * m);
        assert_eq!(enhancement_inhomogeneous(&link, &[0.0; 3], 0.2).unwrap(), 0.0);
        assert!(enhancement_inhomogeneous(&link, &[0.1], 0.0).is_err());
    }
}
