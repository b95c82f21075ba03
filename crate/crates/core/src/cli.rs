//! Command-line surface of the `ionmux` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use toml::{Table as TomlTable, Value};

use crate::atomic::{Level, PopulationVector};
use crate::bsm::{simulate_ion_ion, sweep_enhancement, BsmCurve, NodePair, SweepAxis, StrategyFamily};
use crate::config::{self, OutputFormat, RunConfig, Sweep};
use crate::engine::{branching_ratio_limit, effective_branching_ratio, Strategy};
use crate::error::{Error, Result};
use crate::montecarlo::monte_carlo_oracle;
use crate::optimizer::{solve_dp, solve_exhaustive, Objective, OptimizationProblem};
use crate::report::{write_tables, Cell, Provenance, Table};
use crate::scheduler::{calibrate, compile, simulate_rates};
use crate::timing::{enhancement_curve, n_half_duty, t_eff};
use crate::units::{parse_quantity, Time};

#[derive(Debug, Parser)]
#[command(name = "ionmux", version, about = "Multiplexed ion-photon and ion-ion link rate modeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Named scenario preset.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Configuration file; merged over --preset when both are given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Key-path override, e.g. `--set protocol.shuttle_time="3 us"`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Dp,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    TotalEmission,
    EmissionRate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective branching ratio against train length.
    BranchingRatio {
        /// none, every, 3m, 1km, 12km or an explicit `N:p1,p2,...`.
        #[arg(long)]
        strategy: Option<String>,
        /// Longest train; defaults to 200 for families and to the strategy
        /// length otherwise.
        #[arg(long)]
        n: Option<u32>,
    },
    /// Timing-only enhancement curve of a link.
    Enhance,
    /// Per-mode probabilities and rate summary of one protocol round.
    Protocol {
        /// Also path-sample the raw per-mode emission with this many samples.
        #[arg(long)]
        mc_samples: Option<u64>,
    },
    /// Ion-ion heralding: window table, or the configured sweep curve.
    Bsm,
    /// Best pumping placement and the per-pump-count frontier.
    Optimize {
        #[arg(long)]
        n: Option<u32>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long, value_enum, default_value = "dp")]
        solver: SolverArg,
        /// Time per pulse, e.g. "200 ns".
        #[arg(long)]
        pulse_interval: Option<String>,
        /// Time per pumping, e.g. "100 ns".
        #[arg(long)]
        pump_duration: Option<String>,
    },
    /// Grid driver over the configured sweep block.
    Sweep,
}

impl Command {
    fn stem(&self) -> &'static str {
        match self {
            Command::BranchingRatio { .. } => "branching_ratio",
            Command::Enhance => "enhance",
            Command::Protocol { .. } => "protocol",
            Command::Bsm => "bsm",
            Command::Optimize { .. } => "optimize",
            Command::Sweep => "sweep",
        }
    }
}

/// Argument text recorded in provenance; the output directory is left out
/// so reruns elsewhere produce identical bytes.
fn command_line(args: &[String]) -> String {
    let mut out = Vec::new();
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            out.push(a.as_str());
        }
    }
    out.join(" ")
}

fn load(cli: &Cli) -> Result<Option<RunConfig>> {
    let overrides = config::parse_overrides(&cli.set)?;
    let mut cfg = match (&cli.preset, &cli.config) {
        (None, None) if overrides.is_empty() => return Ok(None),
        (None, None) => {
            return Err(Error::Config("--set needs --preset or --config".into()));
        }
        (Some(name), None) => config::load_preset(name, &overrides)?,
        (preset, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut doc: TomlTable = text
                .parse()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(name) = preset {
                match doc.get("scenario") {
                    Some(Value::String(s)) if s != name => {
                        return Err(Error::Config(format!(
                            "--preset {name} conflicts with scenario = \"{s}\" in {}",
                            path.display()
                        )))
                    }
                    _ => {
                        doc.insert("scenario".into(), Value::String(name.clone()));
                    }
                }
            }
            config::resolve(config::assemble(doc, &overrides)?)?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(f) = cli.format {
        cfg.output = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    Ok(Some(cfg))
}

fn need<'a, T>(item: Option<&'a T>, what: &str) -> Result<&'a T> {
    item.ok_or_else(|| Error::Config(format!("this command needs {what}")))
}

/// Parses arguments, runs the command and writes its artifacts. Returns the
/// written paths.
pub fn run(args: &[String]) -> Result<Vec<PathBuf>> {
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(&cli, &command_line(args))
}

pub fn execute(cli: &Cli, command: &str) -> Result<Vec<PathBuf>> {
    let cfg = load(cli)?;
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(config::DEFAULT_SEED);
    let format = match (cli.format, &cfg) {
        (Some(FormatArg::Json), _) => OutputFormat::Json,
        (Some(FormatArg::Csv), _) => OutputFormat::Csv,
        (None, Some(c)) => c.output,
        (None, None) => OutputFormat::Csv,
    };
    let tables = tables_for(&cli.command, cfg.as_ref(), seed)?;
    let prov = Provenance::new(command, cfg.as_ref(), seed)?;
    write_tables(&cli.out, cli.command.stem(), &tables, &prov, format)
}

/// Computes the output tables of a command without touching the disk.
pub fn tables_for(command: &Command, cfg: Option<&RunConfig>, seed: u64) -> Result<Vec<Table>> {
    match command {
        Command::BranchingRatio { strategy, n } => branching_ratio(cfg, strategy.as_deref(), *n),
        Command::Enhance => enhance(cfg),
        Command::Protocol { mc_samples } => protocol(cfg, *mc_samples, seed),
        Command::Bsm => bsm(cfg),
        Command::Optimize {
            n,
            objective,
            solver,
            pulse_interval,
            pump_duration,
        } => optimize(cfg, *n, *objective, *solver, pulse_interval.as_deref(), pump_duration.as_deref()),
        Command::Sweep => sweep(cfg),
    }
}

fn branching_ratio(cfg: Option<&RunConfig>, name: Option<&str>, n: Option<u32>) -> Result<Vec<Table>> {
    let spec = cfg.and_then(|c| c.protocol.as_ref());
    let params = spec.map(|s| s.atomic).unwrap_or_default();
    let (window, truncate) = spec
        .map(|s| (s.strategy.window, s.strategy.truncate))
        .unwrap_or((Strategy::none(1).window, false));
    // A family rebuilds at every length; a fixed strategy is cut short.
    let build: Box<dyn Fn(u32) -> Result<Strategy> + Sync> = match name {
        Some(f @ ("none" | "every")) => {
            let f = f.to_string();
            Box::new(move |k| Ok(Strategy::named(&f, k)?.with_window(window, truncate)))
        }
        Some(text) => {
            let base: Strategy = text.parse()?;
            Box::new(move |k| Ok(base.truncated_to(k)))
        }
        None => match spec {
            Some(s) => {
                let base = s.strategy.clone();
                Box::new(move |k| Ok(base.truncated_to(k)))
            }
            None => Box::new(move |k| Ok(Strategy::every(k).with_window(window, truncate))),
        },
    };
    let is_family = matches!(name, Some("none" | "every")) || (name.is_none() && spec.is_none());
    let max = if is_family {
        n.unwrap_or(crate::engine::LIMIT_PULSES)
    } else {
        let len = build(1)?.pulse_count.max(1);
        let full = match name {
            Some(text) => text.parse::<Strategy>()?.pulse_count,
            None => spec.map(|s| s.strategy.pulse_count).unwrap_or(len),
        };
        match n {
            Some(k) if k > full => {
                return Err(Error::Parameter(format!(
                    "--n {k} exceeds the {full} pulses of the strategy"
                )))
            }
            Some(k) => k,
            None => full,
        }
    };
    if max == 0 {
        return Err(Error::Parameter("--n must be at least 1".into()));
    }
    let rows: Vec<[f64; 3]> = (1..=max)
        .into_par_iter()
        .map(|k| {
            let br = effective_branching_ratio(&build(k)?, &params)?;
            let none = effective_branching_ratio(&Strategy::none(k).with_window(window, truncate), &params)?;
            let every = effective_branching_ratio(&Strategy::every(k).with_window(window, truncate), &params)?;
            Ok([br, none, every])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("branching_ratio", &["N", "BR", "BR_none", "BR_every"]);
    for (k, r) in rows.iter().enumerate() {
        t.push(vec![(k + 1).into(), r[0].into(), r[1].into(), r[2].into()]);
    }
    let lim = |f: fn(u32) -> Strategy| {
        branching_ratio_limit(|k| f(k).with_window(window, truncate), &params)
    };
    t.note("BR_none_limit", crate::report::fmt_sig(lim(Strategy::none)?));
    t.note("BR_every_limit", crate::report::fmt_sig(lim(Strategy::every)?));
    Ok(vec![t])
}

fn enhance(cfg: Option<&RunConfig>) -> Result<Vec<Table>> {
    let (link, grid) = need(cfg.and_then(|c| c.link.as_ref()), "a [link] table (e.g. --preset fig1c)")?;
    let curve = enhancement_curve(link, grid)?;
    let mut t = Table::new("enhance", &["N", "T_eff_s", "M", "duty"]);
    for p in &curve.points {
        let l = link.with_modes(p.modes);
        let busy = p.modes as f64 * l.mode_interval;
        let duty = busy / (busy + l.round_trip() + l.overhead);
        t.push(vec![p.modes.into(), t_eff(&l)?.into(), p.enhancement.into(), duty.into()]);
    }
    t.note("N0", crate::report::fmt_sig(n_half_duty(link)?));
    t.note("M_saturated", crate::report::fmt_sig(curve.m_saturated));
    Ok(vec![t])
}

fn protocol(cfg: Option<&RunConfig>, mc_samples: Option<u64>, seed: u64) -> Result<Vec<Table>> {
    let spec = need(cfg.and_then(|c| c.protocol.as_ref()), "a protocol (e.g. --preset 3m)")?;
    let report = simulate_rates(spec)?;
    let spec = calibrate(spec)?;
    let compiled = compile(&spec)?;
    let mut windows = compiled.program.windows();
    windows.sort_by_key(|w| w.mode);
    let eta = spec.efficiencies.product(spec.length);

    let mc = mc_samples
        .map(|n| {
            monte_carlo_oracle(&PopulationVector::pure(Level::SUp), &compiled.program, &spec.atomic, n, seed)
        })
        .transpose()?;
    let mut columns = vec!["mode", "ion", "window_start_s", "window_s", "p_emit", "p"];
    if mc.is_some() {
        columns.extend(["p_emit_mc", "p_emit_mc_se"]);
    }
    let mut modes = Table::new("protocol_modes", &columns);
    for (i, (w, p)) in windows.iter().zip(&report.per_mode_p).enumerate() {
        let mut row: Vec<Cell> = vec![
            w.mode.into(),
            w.ion.into(),
            w.start.into(),
            w.duration.into(),
            if eta > 0.0 { (p / eta).into() } else { f64::NAN.into() },
            (*p).into(),
        ];
        if let Some(est) = &mc {
            row.push(est.per_mode[i].into());
            row.push(est.per_mode_se[i].into());
        }
        modes.push(row);
    }

    let mut summary = Table::new("protocol_summary", &["quantity", "value"]);
    let rows: [(&str, f64); 18] = [
        ("modes", report.modes as f64),
        ("efficiency", report.efficiency),
        ("efficiency_other", spec.efficiencies.other),
        ("p0", report.p0),
        ("p_round", report.p_round),
        ("p_round_exact", report.p_round_exact),
        ("span_s", report.span),
        ("t_round_s", report.t_round),
        ("mode_interval_s", report.mode_interval),
        ("attempt_rate_per_s", report.attempt_rate),
        ("rate_per_s", report.success_rate),
        ("rate_exact_per_s", report.success_rate_exact),
        ("generation_time_s", report.generation_time),
        ("M", report.m),
        ("M_prime", report.m_prime),
        ("survival", report.survival),
        ("decay_error", report.decay_error),
        ("eta_link", report.eta_link),
    ];
    for (k, v) in rows {
        summary.push(vec![k.into(), v.into()]);
    }
    Ok(vec![modes, summary])
}

fn curve_table(name: &str, curve: &BsmCurve) -> Table {
    let mut t = Table::new(
        name,
        &["N", "ions", "pulses_per_ion", "p_herald", "t_round_s", "rate_per_s", "M", "M_prime", "efficiency_gain"],
    );
    for p in &curve.points {
        t.push(vec![
            p.modes.into(),
            p.ions.into(),
            p.pulses_per_ion.into(),
            p.p_herald.into(),
            p.t_round.into(),
            p.success_rate.into(),
            p.m.into(),
            p.m_prime.into(),
            p.efficiency_gain.into(),
        ]);
    }
    t.note("axis", match curve.axis {
        SweepAxis::ModeCount => "mode_count",
        SweepAxis::IonCount => "ion_count",
    });
    t.note("baseline_p_herald", crate::report::fmt_sig(curve.baseline_p));
    t.note("baseline_t_round_s", crate::report::fmt_sig(curve.baseline_t_round));
    t
}

fn bsm_sweep(pair: &NodePair, axis: SweepAxis, grid: &[u32], family: StrategyFamily, name: &str) -> Result<Table> {
    Ok(curve_table(name, &sweep_enhancement(pair, axis, grid, family)?))
}

fn bsm(cfg: Option<&RunConfig>) -> Result<Vec<Table>> {
    let cfg = need(cfg, "a configuration with a [bsm] table (e.g. --preset fig10b)")?;
    let pair = need(cfg.pair.as_ref(), "a [bsm] table (e.g. --preset fig10b)")?;
    if let Some(Sweep::Bsm { axis, grid, family }) = &cfg.sweep {
        return Ok(vec![bsm_sweep(pair, *axis, grid, *family, "bsm_curve")?]);
    }
    let mut calibrated = pair.clone();
    calibrated.a = calibrate(&pair.a)?;
    calibrated.b = calibrate(&pair.b)?;
    let r = simulate_ion_ion(&calibrated)?;
    let mut t = Table::new(
        "bsm_windows",
        &[
            "mode",
            "pair",
            "both_emit",
            "one_emits",
            "neither_emit",
            "heralded",
            "heralded_total",
            "terminated",
            "continuing",
            "post_herald_coincidence",
        ],
    );
    for w in &r.windows {
        t.push(vec![
            w.mode.into(),
            w.pair.into(),
            w.both_emit.into(),
            w.one_emits.into(),
            w.neither_emit.into(),
            w.heralded.into(),
            w.heralded_total.into(),
            w.terminated.into(),
            w.continuing.into(),
            w.post_herald_coincidence.into(),
        ]);
    }
    t.note("p_herald", crate::report::fmt_sig(r.p_herald));
    t.note("t_round_s", crate::report::fmt_sig(r.t_round));
    t.note("rate_per_s", crate::report::fmt_sig(r.success_rate));
    t.note("quality_preserved", r.quality_preserved.to_string());
    Ok(vec![t])
}

fn optimize(
    cfg: Option<&RunConfig>,
    n: Option<u32>,
    objective: Option<ObjectiveArg>,
    solver: SolverArg,
    pulse_interval: Option<&str>,
    pump_duration: Option<&str>,
) -> Result<Vec<Table>> {
    let mut prob = match cfg.and_then(|c| c.optimize) {
        Some(p) => p,
        None => {
            let mut p = OptimizationProblem::new(12, Objective::TotalEmission);
            if let Some(spec) = cfg.and_then(|c| c.protocol.as_ref()) {
                p.params = spec.atomic;
            }
            p
        }
    };
    if let Some(n) = n {
        prob.pulses = n;
    }
    if let Some(o) = objective {
        prob.objective = match o {
            ObjectiveArg::TotalEmission => Objective::TotalEmission,
            ObjectiveArg::EmissionRate => Objective::EmissionRate,
        };
    }
    if let Some(t) = pulse_interval {
        prob.pulse_interval = parse_quantity::<Time>(t)?;
    }
    if let Some(t) = pump_duration {
        prob.pump_duration = parse_quantity::<Time>(t)?;
    }
    let result = match solver {
        SolverArg::Dp => solve_dp(&prob)?,
        SolverArg::Exhaustive => solve_exhaustive(&prob)?,
    };
    let mut t = Table::new("optimize_frontier", &["pumps", "value", "pump_after", "best"]);
    for f in &result.frontier {
        let pumps: Vec<String> = f.strategy.pump_after.iter().map(u32::to_string).collect();
        let best = f.strategy.pump_after == result.best.pump_after;
        t.push(vec![f.pumps.into(), f.value.into(), pumps.join(";").into(), (best as u32).into()]);
    }
    let best: Vec<String> = result.best.pump_after.iter().map(u32::to_string).collect();
    t.note("best", format!("{}:{}", result.best.pulse_count, best.join(";")));
    t.note("best_value", crate::report::fmt_sig(result.value));
    Ok(vec![t])
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn sweep(cfg: Option<&RunConfig>) -> Result<Vec<Table>> {
    let cfg = need(cfg, "a configuration with a [sweep] table")?;
    match need(cfg.sweep.as_ref(), "a [sweep] table")? {
        Sweep::Bsm { axis, grid, family } => {
            let pair = need(cfg.pair.as_ref(), "a [bsm] table for a mode_count or ion_count sweep")?;
            Ok(vec![bsm_sweep(pair, *axis, grid, *family, "sweep")?])
        }
        Sweep::Parameter { key, values } => {
            let rows: Vec<(String, usize, [f64; 7])> = values
                .par_iter()
                .map(|v| {
                    let c = cfg.with_value(key, v.clone())?;
                    let spec = need(c.protocol.as_ref(), "a protocol for a parameter sweep")?;
                    let r = simulate_rates(spec)?;
                    Ok((
                        value_text(v),
                        r.modes,
                        [r.t_round, r.p_round, r.p_round_exact, r.success_rate, r.m, r.m_prime, r.eta_link],
                    ))
                })
                .collect::<Result<_>>()?;
            let mut t = Table::new(
                "sweep",
                &["value", "modes", "t_round_s", "p_round", "p_round_exact", "rate_per_s", "M", "M_prime", "eta_link"],
            );
            for (v, modes, x) in rows {
                let mut row: Vec<Cell> = vec![v.into(), modes.into()];
                row.extend(x.iter().map(|&f| Cell::from(f)));
                t.push(row);
            }
            t.note("key", key.clone());
            Ok(vec![t])
        }
    }
}

/// Machine-readable error record written to stderr.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
        }
    })
    .to_string()
}

/// Entry point shared by the binary and tests. Returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_record(&Error::Config(e.to_string().trim().to_string())));
            return 2;
        }
    };
    match execute(&cli, &command_line(args)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}
