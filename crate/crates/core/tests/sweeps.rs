use ionmux::bsm::{sweep_enhancement, BsmCurve};
use ionmux::config::{load_preset, Sweep};

fn curve(preset: &str) -> BsmCurve {
    let cfg = load_preset(preset, &[]).unwrap();
    let Some(Sweep::Bsm { axis, grid, family }) = cfg.sweep.clone() else {
        panic!("{preset} has no bsm sweep");
    };
    sweep_enhancement(cfg.pair.as_ref().unwrap(), axis, &grid, family).unwrap()
}

fn non_decreasing(xs: impl Iterator<Item = f64>) -> bool {
    let xs: Vec<f64> = xs.collect();
    xs.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12))
}

#[test]
fn homogeneous_sweeps_do_not_decrease() {
    for preset in ["fig10b", "fig10c", "fig10c-future", "fig10d"] {
        let c = curve(preset);
        assert!(non_decreasing(c.points.iter().map(|p| p.efficiency_gain)), "{preset} gain");
        assert!(non_decreasing(c.points.iter().map(|p| p.m)), "{preset} M");
    }
}

#[test]
fn sweeps_start_at_baseline_scale() {
    let c = curve("fig10b");
    let first = &c.points[0];
    assert_eq!(first.modes, 1);
    assert_eq!(first.efficiency_gain, 1.0);
    assert_eq!(first.m, 1.0);
}

#[test]
fn future_hardware_beats_current() {
    let now = curve("fig10c");
    let future = curve("fig10c-future");
    for (a, b) in now.points.iter().zip(&future.points) {
        assert_eq!(a.modes, b.modes);
        assert!(b.m_prime >= a.m_prime, "N = {}", a.modes);
    }
}

#[test]
fn ion_axis_keeps_pulses_per_ion() {
    let c = curve("fig10d");
    assert!(c.points.iter().all(|p| p.pulses_per_ion == 12 && p.modes as usize == 12 * p.ions));
}
