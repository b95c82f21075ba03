//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when an attainable check fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ionmux::atomic::{excitation_map, AtomicParams, Level, PopulationVector};
use ionmux::bsm::{monte_carlo_ion_ion, simulate_ion_ion, sweep_enhancement, NodePair};
use ionmux::config::{load_preset, Sweep};
use ionmux::engine::{absorbing_distribution, effective_branching_ratio, strategy_profile, strategy_program, Strategy};
use ionmux::montecarlo::monte_carlo_oracle;
use ionmux::optimizer::{solve_dp, solve_exhaustive, Objective, OptimizationProblem};
use ionmux::scheduler::{compile, memory_survival, simulate_rates, EfficiencyChain, MemoryParams};
use ionmux::timing::{enhancement, enhancement_inhomogeneous, n_half_duty, LinkParams};

struct Check {
    name: String,
    pass: bool,
    /// False when the check cannot hold for the model as specified; such a
    /// failure is reported but does not fail the suite.
    attainable: bool,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, pass: bool, name: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, attainable: true });
    }

    fn known_gap(&mut self, pass: bool, name: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, attainable: false });
    }

    fn within(&mut self, value: f64, target: f64, tol: f64, label: &str) {
        self.check((value - target).abs() <= tol, format!("{label} = {value:.6} (want {target} ± {tol})"));
    }

    fn runtime(&mut self, start: Instant, limit: Duration) {
        let took = start.elapsed();
        self.check(took < limit, format!("runtime {:.2}s < {}s", took.as_secs_f64(), limit.as_secs_f64()));
    }
}

fn c1_branching_ratio() -> Criterion {
    let mut c = Criterion::default();
    let t = Instant::now();
    let p = AtomicParams::default();
    c.within(effective_branching_ratio(&Strategy::none(200), &p).unwrap(), 0.161, 1e-3, "BR none(200)");
    c.within(effective_branching_ratio(&Strategy::every(200), &p).unwrap(), 0.544, 1e-3, "BR every(200)");
    let dist = absorbing_distribution(&excitation_map(&p, f64::INFINITY, 0).unwrap(), Level::SUp).unwrap();
    let dark = dist[&Level::SDown];
    // Independent closed form of the excitation-only chain.
    let a = (1.0 - p.branching_d) * p.weight_up;
    let b = (1.0 - p.branching_d) - a;
    let closed = b / (b + p.branching_d);
    c.within(dark, closed, 1e-6, "dark split vs closed form");
    c.check(format!("{:.3}", dark) == "0.839", format!("dark split {dark:.6} reads 83.9 % at quoted precision"));
    // The quoted figure is rounded; the exact model value sits 2.9e-4 away.
    c.known_gap((dark - 0.839).abs() <= 1e-6, format!("dark split = {dark:.6} (want 0.839 ± 1e-6)"));
    c.runtime(t, Duration::from_secs(1));
    c
}

fn c2_timing_algebra() -> Criterion {
    let mut c = Criterion::default();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut m1, mut mn0, mut mp) = (true, true, true);
    for _ in 0..10_000 {
        // Dyadic values keep the algebra exact in binary floating point.
        let dt = (-(rng.random_range(20..34) as f64)).exp2();
        let c_fiber = (rng.random_range(20..30) as f64).exp2();
        let n0: u64 = rng.random_range(1..100_000);
        let length = rng.random_range(0..1_000_000) as f64;
        let rt = 2.0 * length / c_fiber;
        let overhead = n0 as f64 * dt - rt;
        if overhead < 0.0 {
            continue;
        }
        let mut link = LinkParams::new(length, overhead, dt, 1);
        link.c_fiber = c_fiber;
        m1 &= enhancement(&link).unwrap() == 1.0;
        let half = n_half_duty(&link).unwrap();
        mn0 &= half == n0 as f64
            && enhancement(&link.with_modes(n0)).unwrap() == (n0 as f64 + 1.0) / 2.0;
        let n = rng.random_range(1..500usize);
        let p0 = rng.random_range(1e-6..1.0);
        let m = enhancement(&link.with_modes(n as u64)).unwrap();
        let mprime = enhancement_inhomogeneous(&link, &vec![p0; n], p0).unwrap();
        mp &= (mprime - m).abs() <= 1e-12 * m;
    }
    c.check(m1, "M(1) = 1 exactly");
    c.check(mn0, "M(N0) = (N0 + 1)/2 exactly");
    c.check(mp, "M' = M for homogeneous modes");
    c.runtime(t, Duration::from_secs(10));
    c
}

fn c3_scenarios() -> Criterion {
    let mut c = Criterion::default();
    let t = Instant::now();
    for (name, target) in [("3m", 3.4), ("1km", 5.1), ("12km", 15.6)] {
        let cfg = load_preset(name, &[]).unwrap();
        let r = simulate_rates(cfg.protocol.as_ref().unwrap()).unwrap();
        c.check(
            (r.m_prime - target).abs() <= 0.3 * target,
            format!("{name} M' = {:.3} (want {target} ± 30 %)", r.m_prime),
        );
        if name == "12km" {
            c.within(r.generation_time * 1e3, 234.0, 1.0, "12km generation time ms");
            c.within(r.eta_link, 1.16, 0.02, "12km link efficiency");
        }
    }
    c.runtime(t, Duration::from_secs(10));
    c
}

fn c4_memory() -> Criterion {
    let mut c = Criterion::default();
    let mem = MemoryParams::default();
    for (ms, model, quoted) in [(100.0, 9.9, 11.0), (240.0, 22.2, 21.0), (300.0, 26.9, 26.0)] {
        let err = 100.0 * (1.0 - memory_survival(ms * 1e-3, &mem));
        c.within(err, model, 0.05, &format!("decay error at {ms} ms (%)"));
        c.within(err, quoted, 2.5, &format!("decay error at {ms} ms vs measured (%)"));
    }
    c
}

/// Largest per-component deviation in units of the analytic binomial sigma.
fn max_z(analytic: &[f64], sampled: &[f64], samples: u64) -> f64 {
    analytic
        .iter()
        .zip(sampled)
        .map(|(&p, &q)| {
            let sigma = (p * (1.0 - p) / samples as f64).sqrt();
            if sigma == 0.0 {
                if p == q { 0.0 } else { f64::INFINITY }
            } else {
                (p - q).abs() / sigma
            }
        })
        .fold(0.0, f64::max)
}

/// Pearson statistic of independent multinomial groups. Each group lists
/// (expected, observed) probabilities of mutually exclusive outcomes; the
/// remainder outcome is added. Returns (statistic, degrees of freedom).
fn pearson(groups: &[Vec<(f64, f64)>], samples: u64) -> (f64, usize) {
    let n = samples as f64;
    let mut stat = 0.0;
    let mut dof = 0;
    for g in groups {
        let rest = (1.0 - g.iter().map(|x| x.0).sum::<f64>(), 1.0 - g.iter().map(|x| x.1).sum::<f64>());
        for &(e, o) in g.iter().chain(std::iter::once(&rest)) {
            if e > 0.0 {
                stat += n * (o - e).powi(2) / e;
            } else if o != 0.0 {
                stat = f64::INFINITY;
            }
        }
        dof += g.len();
    }
    (stat, dof)
}

/// Chi-square quantile with the upper-tail mass of a two-sided 3 sigma
/// interval.
fn chi2_three_sigma(dof: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let tail = statrs::function::erf::erfc(3.0 / std::f64::consts::SQRT_2);
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - tail)
}

/// Vector agreement at 3 sigma plus the scalar total at 3 sigma.
fn agreement(c: &mut Criterion, label: &str, groups: &[Vec<(f64, f64)>], total: Option<(f64, f64)>, samples: u64) {
    let (stat, dof) = pearson(groups, samples);
    let limit = chi2_three_sigma(dof);
    let expected: Vec<f64> = groups.iter().flatten().map(|x| x.0).collect();
    let observed: Vec<f64> = groups.iter().flatten().map(|x| x.1).collect();
    let z = max_z(&expected, &observed, samples);
    let zt = total.map(|(e, o)| max_z(&[e], &[o], samples));
    let tail = zt.map(|z| format!(", total |z| {z:.2}")).unwrap_or_default();
    c.check(
        stat <= limit && zt.unwrap_or(0.0) <= 3.0,
        format!("{label}: chi2 {stat:.1} <= {limit:.1} ({dof} modes, max |z| {z:.2}){tail}"),
    );
}

fn c5_oracles() -> Criterion {
    const SAMPLES: u64 = 1_000_000;
    let mut c = Criterion::default();
    let t = Instant::now();
    let init = PopulationVector::pure(Level::SUp);
    for name in ["3m", "1km", "12km"] {
        let spec = load_preset(name, &[]).unwrap().protocol.unwrap();
        let profile = strategy_profile(&spec.strategy, &spec.atomic).unwrap();
        let program = strategy_program(&spec.strategy).unwrap();
        let mc = monte_carlo_oracle(&init, &program, &spec.atomic, SAMPLES, 5).unwrap();
        let group: Vec<(f64, f64)> = profile.per_mode.iter().copied().zip(mc.per_mode.iter().copied()).collect();
        agreement(&mut c, &format!("{name} strategy"), &[group], Some((profile.total, mc.total)), SAMPLES);
    }

    // Full shuttled round with shelving, every ion from the initial state.
    let spec = load_preset("12km", &[]).unwrap().protocol.unwrap();
    let compiled = compile(&spec).unwrap();
    let runs = ionmux::engine::run_node(&vec![init.clone(); spec.ions], &compiled.program, &spec.atomic).unwrap();
    let mc = monte_carlo_oracle(&init, &compiled.program, &spec.atomic, SAMPLES, 6).unwrap();
    let groups: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|r| {
            r.profile
                .modes
                .iter()
                .zip(&r.profile.per_mode)
                .map(|(m, &p)| (p, mc.per_mode[mc.modes.binary_search(m).unwrap()]))
                .collect()
        })
        .collect();
    let total: f64 = runs.iter().map(|r| r.profile.total).sum();
    let modes: usize = groups.iter().map(Vec::len).sum();
    // The round total sums independent ions, so its sigma is not binomial;
    // check it against the oracle's own standard error.
    let zt = (total - mc.total).abs() / mc.total_se;
    c.check(modes == 44 && zt <= 3.0, format!("12km round total: |z| {zt:.2} over {modes} modes"));
    agreement(&mut c, "12km round", &groups, None, SAMPLES);

    // Two nodes, 44 modes each, lossless channel. The first herald ends a
    // round, so the per-window heralds form one multinomial.
    let mut side = spec.clone();
    side.efficiencies = EfficiencyChain::unit();
    side.target_success_rate = None;
    let pair = NodePair::symmetric(side);
    let joint = simulate_ion_ion(&pair).unwrap();
    let mc = monte_carlo_ion_ion(&pair, SAMPLES, 7).unwrap();
    let group: Vec<(f64, f64)> = joint.windows.iter().map(|w| w.heralded).zip(mc.heralded.iter().copied()).collect();
    c.check(group.len() == 44, format!("two-node pair has {} windows", group.len()));
    agreement(&mut c, "two-node 44-mode pair", &[group], Some((joint.p_herald, mc.total)), SAMPLES);
    c.runtime(t, Duration::from_secs(60));
    c
}

fn random_problem(rng: &mut ChaCha8Rng, pulses: u32) -> OptimizationProblem {
    let objective = if rng.random_bool(0.5) { Objective::TotalEmission } else { Objective::EmissionRate };
    let mut p = OptimizationProblem::new(pulses, objective);
    p.params = AtomicParams::new(
        rng.random_range(0.01..0.5),
        rng.random_range(0.05..0.95),
        rng.random_range(2e-9..20e-9),
    )
    .unwrap();
    p.pulse_interval = rng.random_range(10e-9..500e-9);
    p.pump_duration = rng.random_range(10e-9..1e-6);
    p.truncate = rng.random_bool(0.5);
    p
}

fn c6_optimizer() -> Criterion {
    let mut c = Criterion::default();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut agree, mut draws, mut same_pick) = (0, 0, 0);
    for _ in 0..100 {
        let base = random_problem(&mut rng, 1);
        for n in 1..=12 {
            let prob = OptimizationProblem { pulses: n, ..base };
            let dp = solve_dp(&prob).unwrap();
            let ex = solve_exhaustive(&prob).unwrap();
            let same_frontier = dp.frontier.len() == ex.frontier.len()
                && dp
                    .frontier
                    .iter()
                    .zip(&ex.frontier)
                    .all(|(a, b)| (a.value - b.value).abs() <= 1e-12 * b.value.abs().max(1e-300));
            // Each solver's pick must reach the common optimum when scored
            // independently; near-tied picks may differ.
            let dp_pick = prob.evaluate(&dp.best).unwrap();
            if (dp.value - ex.value).abs() <= 1e-12 * ex.value
                && (dp_pick - ex.value).abs() <= 1e-12 * ex.value
                && same_frontier
            {
                agree += 1;
            }
            same_pick += (dp.best == ex.best) as usize;
            draws += 1;
        }
    }
    c.check(
        agree == draws,
        format!("dp = exhaustive on {agree}/{draws} problems ({same_pick} identical picks)"),
    );

    let params = AtomicParams::default();
    let mut every_max = true;
    for n in 1..=10u32 {
        let every = effective_branching_ratio(&Strategy::every(n), &params).unwrap();
        for mask in 0u32..(1 << n) {
            let s = Strategy::new(n, (1..=n).filter(|i| mask >> (i - 1) & 1 == 1));
            let v = effective_branching_ratio(&s, &params).unwrap();
            every_max &= v <= every * (1.0 + 1e-12);
        }
    }
    c.check(every_max, "every attains the maximum over all 2^N strategies, N <= 10");
    c.runtime(t, Duration::from_secs(120));
    c
}

fn c7_two_node() -> Criterion {
    let mut c = Criterion::default();
    let t = Instant::now();
    let (mut zero, mut balance, mut windows) = (true, 0.0f64, 0);
    for name in ["3m", "1km", "12km"] {
        let cfg = load_preset(name, &[]).unwrap();
        let r = simulate_ion_ion(&NodePair::symmetric(cfg.protocol.unwrap())).unwrap();
        for w in &r.windows {
            zero &= w.post_herald_coincidence == 0.0;
            balance = balance.max((w.mass_balance() - 1.0).abs());
            windows += 1;
        }
        zero &= r.quality_preserved;
    }
    c.check(zero, format!("post-herald coincidence exactly 0 over {windows} windows"));
    c.check(balance <= 1e-9, format!("mass balance error {balance:.1e} <= 1e-9"));

    let cfg = load_preset("fig10b", &[]).unwrap();
    let Some(Sweep::Bsm { axis, grid, family }) = cfg.sweep.clone() else {
        panic!("fig10b preset carries a bsm sweep");
    };
    let curve = sweep_enhancement(cfg.pair.as_ref().unwrap(), axis, &grid, family).unwrap();
    let plateau = curve.points.last().unwrap().efficiency_gain;
    c.within(plateau, 5.0, 1.5, "1km every-pump sweep plateau");
    c.runtime(t, Duration::from_secs(60));
    c
}

fn c8_determinism() -> Criterion {
    let mut c = Criterion::default();
    let runs = [
        vec!["branching-ratio", "--strategy", "every", "--n", "200"],
        vec!["enhance", "--preset", "fig1c"],
        vec!["protocol", "--preset", "12km", "--mc-samples", "20000", "--seed", "11"],
        vec!["bsm", "--preset", "fig10b"],
        vec!["optimize", "--n", "12", "--objective", "emission-rate"],
    ];
    for args in runs {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let mut argv: Vec<String> = std::iter::once("ionmux").chain(args.iter().copied()).map(String::from).collect();
            argv.push("--out".into());
            argv.push(dir.path().display().to_string());
            let mut files: Vec<(String, Vec<u8>)> = ionmux::cli::run(&argv)
                .unwrap()
                .iter()
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
                .collect();
            files.sort();
            outputs.push(files);
        }
        c.check(
            !outputs[0].is_empty() && outputs[0] == outputs[1],
            format!("{} byte-identical", args.join(" ")),
        );
    }
    c
}

fn main() {
    type Run = fn() -> Criterion;
    let criteria: [(&str, Run); 8] = [
        ("branching-ratio exactness", c1_branching_ratio),
        ("timing algebra", c2_timing_algebra),
        ("scenario reproduction", c3_scenarios),
        ("memory model", c4_memory),
        ("oracle equivalence", c5_oracles),
        ("optimizer soundness", c6_optimizer),
        ("two-node invariants", c7_two_node),
        ("determinism", c8_determinism),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let crit = run();
        let ok = crit.checks.iter().all(|c| c.pass);
        println!("criterion {}: {} ({title})", i + 1, if ok { "PASS" } else { "FAIL" });
        for ch in &crit.checks {
            let tag = match (ch.pass, ch.attainable) {
                (true, _) => "ok",
                (false, true) => "FAILED",
                (false, false) => "FAILED (unattainable, see notes)",
            };
            println!("    {tag}: {}", ch.name);
            if !ch.pass && ch.attainable {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
