//! Configuration documents, presets and overrides.
//!
//! A document is TOML. It may name a preset with `scenario = "<name>"`;
//! the preset is loaded first, the document's own tables are merged over
//! it, then the `[overrides]` table and any command-line overrides are
//! applied by key path. Physical quantities must carry a unit suffix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::atomic::AtomicParams;
use crate::bsm::{NodePair, StrategyFamily, SweepAxis};
use crate::engine::Strategy;
use crate::error::{Error, Result};
use crate::optimizer::{Objective, OptimizationProblem};
use crate::program::TrainTiming;
use crate::scheduler::{Cooling, EfficiencyChain, MemoryParams, MemorySettings, ProtocolSpec};
use crate::timing::LinkParams;
use crate::units::{Attenuation, Length, Quantity, Rate, Speed, Time};

/// Preset documents shipped with the crate.
pub const PRESETS: &[(&str, &str)] = &[
    ("3m", include_str!("../presets/3m.toml")),
    ("1km", include_str!("../presets/1km.toml")),
    ("12km", include_str!("../presets/12km.toml")),
    ("fig1c", include_str!("../presets/fig1c.toml")),
    ("fig10a", include_str!("../presets/fig10a.toml")),
    ("fig10b", include_str!("../presets/fig10b.toml")),
    ("fig10c", include_str!("../presets/fig10c.toml")),
    ("fig10c-future", include_str!("../presets/fig10c-future.toml")),
    ("fig10d", include_str!("../presets/fig10d.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset '{name}' (available: {})",
                preset_names().join(", ")
            ))
        })
}

// File-level schema. Every table rejects unknown keys.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyFile {
    pub pulses: u32,
    #[serde(default)]
    pub pump_after: Vec<u32>,
    pub window: Quantity<Time>,
    #[serde(default)]
    pub truncate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub pump_duration: Quantity<Time>,
    pub pump_guard: Quantity<Time>,
    pub skip_terminal_pump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingFile {
    pub duration: Quantity<Time>,
    pub every_rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFile {
    pub length: Quantity<Length>,
    pub c_fiber: Quantity<Speed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyFile {
    pub collection: f64,
    pub conversion: f64,
    pub attenuation: Quantity<Attenuation>,
    pub detector: f64,
    pub other: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_success_rate: Option<Quantity<Rate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryFile {
    pub amplitude: f64,
    pub tau_coh: Quantity<Time>,
    pub tau_life: Quantity<Time>,
    pub storage_time: Quantity<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicFile {
    pub branching_d: f64,
    pub weight_up: f64,
    pub tau_p: Quantity<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    pub ions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuttle_plan: Option<Vec<usize>>,
    pub shuttle_time: Quantity<Time>,
    pub return_shuttle: bool,
    pub shelve_duration: Quantity<Time>,
    pub overhead: Quantity<Time>,
    pub strategy: StrategyFile,
    pub train: TrainFile,
    pub cooling: CoolingFile,
    pub fiber: FiberFile,
    pub efficiency: EfficiencyFile,
    pub memory: MemoryFile,
    pub atomic: AtomicFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub length: Quantity<Length>,
    pub c_fiber: Quantity<Speed>,
    pub overhead: Quantity<Time>,
    pub mode_interval: Quantity<Time>,
    /// Mode counts to evaluate.
    pub modes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsmFile {
    pub efficiency: f64,
    pub alignment: Quantity<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    /// `mode_count`, `ion_count`, or a key path into the document.
    pub axis: String,
    pub grid: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeFile {
    pub pulses: u32,
    pub objective: Objective,
    pub pulse_interval: Quantity<Time>,
    pub pump_duration: Quantity<Time>,
    pub truncate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bsm: Option<BsmFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeFile>,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub overrides: Table,
}

/// Seed used when neither the document nor the command line sets one.
pub const DEFAULT_SEED: u64 = 1;

/// Sweep settings after resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Sweep {
    Bsm {
        axis: SweepAxis,
        grid: Vec<u32>,
        family: StrategyFamily,
    },
    /// Re-resolve the document with `key` set to each grid value.
    Parameter { key: String, values: Vec<Value> },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub seed: u64,
    pub output: OutputFormat,
    pub protocol: Option<ProtocolSpec>,
    pub link: Option<(LinkParams, Vec<u64>)>,
    pub pair: Option<NodePair>,
    pub sweep: Option<Sweep>,
    pub optimize: Option<OptimizationProblem>,
    /// The merged document, overrides applied, with the preset folded in.
    #[serde(skip)]
    pub document: Table,
}

fn parse_table(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Deep merge of `over` into `base`; tables merge, other values replace.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

const ROOT_KEYS: &[&str] = &[
    "scenario", "seed", "output", "protocol", "link", "bsm", "sweep", "optimize", "overrides",
];

/// Key path with the protocol table as the default root.
fn qualify(path: &str) -> String {
    let head = path.split('.').next().unwrap_or("");
    if ROOT_KEYS.contains(&head) {
        path.to_string()
    } else {
        format!("protocol.{path}")
    }
}

/// Sets `path` (dot separated) in `doc`, creating tables on the way.
pub fn set_path(doc: &mut Table, path: &str, value: Value) -> Result<()> {
    let path = qualify(path);
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key path '{path}'")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!("key path '{path}' runs through non-table '{part}'"))
        })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses the right-hand side of a `key=value` override as a TOML value,
/// falling back to a bare string (so `--set shuttle_time=3us` works).
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn check(path: &str, v: f64, lo: f64, hi: f64, lo_open: bool) -> Result<()> {
    let ok = v <= hi && if lo_open { v > lo } else { v >= lo };
    if ok && v.is_finite() {
        Ok(())
    } else {
        let open = if lo_open { "(" } else { "[" };
        Err(Error::Config(format!(
            "{path} = {v} outside accepted range {open}{lo}, {hi}]"
        )))
    }
}

impl ProtocolFile {
    pub fn resolve(&self) -> Result<ProtocolSpec> {
        let p = "protocol";
        if self.ions == 0 {
            return Err(Error::Config(format!("{p}.ions = 0 outside accepted range [1, inf)")));
        }
        if self.strategy.pulses == 0 {
            return Err(Error::Config(format!(
                "{p}.strategy.pulses = 0 outside accepted range [1, inf)"
            )));
        }
        check(&format!("{p}.strategy.window"), self.strategy.window.value(), 0.0, f64::MAX, true)?;
        for (k, v) in [
            ("shuttle_time", self.shuttle_time.value()),
            ("shelve_duration", self.shelve_duration.value()),
            ("overhead", self.overhead.value()),
            ("train.pump_duration", self.train.pump_duration.value()),
            ("train.pump_guard", self.train.pump_guard.value()),
            ("cooling.duration", self.cooling.duration.value()),
            ("fiber.length", self.fiber.length.value()),
            ("memory.storage_time", self.memory.storage_time.value()),
            ("efficiency.attenuation", self.efficiency.attenuation.value()),
        ] {
            check(&format!("{p}.{k}"), v, 0.0, f64::MAX, false)?;
        }
        check(&format!("{p}.fiber.c_fiber"), self.fiber.c_fiber.value(), 0.0, f64::MAX, true)?;
        for (k, v) in [
            ("efficiency.collection", self.efficiency.collection),
            ("efficiency.conversion", self.efficiency.conversion),
            ("efficiency.detector", self.efficiency.detector),
            ("efficiency.other", self.efficiency.other),
            ("atomic.branching_d", self.atomic.branching_d),
            ("atomic.weight_up", self.atomic.weight_up),
        ] {
            check(&format!("{p}.{k}"), v, 0.0, 1.0, false)?;
        }
        check(&format!("{p}.memory.amplitude"), self.memory.amplitude, 0.0, 0.5, true)?;
        check(&format!("{p}.memory.tau_coh"), self.memory.tau_coh.value(), 0.0, f64::MAX, true)?;
        check(&format!("{p}.memory.tau_life"), self.memory.tau_life.value(), 0.0, f64::MAX, true)?;
        check(&format!("{p}.atomic.tau_p"), self.atomic.tau_p.value(), 0.0, f64::MAX, true)?;
        if let Some(s) = self.memory.survival {
            check(&format!("{p}.memory.survival"), s, 0.0, 1.0, false)?;
        }
        if let Some(r) = &self.efficiency.target_success_rate {
            check(&format!("{p}.efficiency.target_success_rate"), r.value(), 0.0, f64::MAX, true)?;
        }
        if self.cooling.every_rounds == 0 {
            return Err(Error::Config(format!(
                "{p}.cooling.every_rounds = 0 outside accepted range [1, inf)"
            )));
        }
        let strategy = Strategy::new(self.strategy.pulses, self.strategy.pump_after.iter().copied())
            .with_window(self.strategy.window.value(), self.strategy.truncate);
        strategy
            .validate()
            .map_err(|e| Error::Config(format!("{p}.strategy: {e}")))?;
        let spec = ProtocolSpec {
            ions: self.ions,
            strategy,
            train: TrainTiming {
                pump_duration: self.train.pump_duration.value(),
                pump_guard: self.train.pump_guard.value(),
                skip_terminal_pump: self.train.skip_terminal_pump,
            },
            shuttle_time: self.shuttle_time.value(),
            shuttle_plan: self
                .shuttle_plan
                .clone()
                .unwrap_or_else(|| (0..self.ions).collect()),
            return_shuttle: self.return_shuttle,
            shelve_duration: self.shelve_duration.value(),
            cooling: Cooling {
                duration: self.cooling.duration.value(),
                every_rounds: self.cooling.every_rounds,
            },
            length: self.fiber.length.value(),
            c_fiber: self.fiber.c_fiber.value(),
            overhead: self.overhead.value(),
            efficiencies: EfficiencyChain {
                collection: self.efficiency.collection,
                conversion: self.efficiency.conversion,
                attenuation_db_per_km: self.efficiency.attenuation.value(),
                detector: self.efficiency.detector,
                other: self.efficiency.other,
            },
            target_success_rate: self.efficiency.target_success_rate.map(|q| q.value()),
            memory: MemorySettings {
                params: MemoryParams {
                    amplitude: self.memory.amplitude,
                    tau_coh: self.memory.tau_coh.value(),
                    tau_life: self.memory.tau_life.value(),
                },
                storage_time: self.memory.storage_time.value(),
                survival: self.memory.survival,
            },
            atomic: AtomicParams {
                branching_d: self.atomic.branching_d,
                weight_up: self.atomic.weight_up,
                tau_p: self.atomic.tau_p.value(),
            },
        };
        spec.validate()
            .map_err(|e| Error::Config(format!("{p}: {e}")))?;
        Ok(spec)
    }

    /// File form of a resolved spec, in canonical units.
    pub fn from_spec(spec: &ProtocolSpec) -> Self {
        Self {
            ions: spec.ions,
            shuttle_plan: Some(spec.shuttle_plan.clone()),
            shuttle_time: Quantity::new(spec.shuttle_time),
            return_shuttle: spec.return_shuttle,
            shelve_duration: Quantity::new(spec.shelve_duration),
            overhead: Quantity::new(spec.overhead),
            strategy: StrategyFile {
                pulses: spec.strategy.pulse_count,
                pump_after: spec.strategy.pump_after.iter().copied().collect(),
                window: Quantity::new(spec.strategy.window),
                truncate: spec.strategy.truncate,
            },
            train: TrainFile {
                pump_duration: Quantity::new(spec.train.pump_duration),
                pump_guard: Quantity::new(spec.train.pump_guard),
                skip_terminal_pump: spec.train.skip_terminal_pump,
            },
            cooling: CoolingFile {
                duration: Quantity::new(spec.cooling.duration),
                every_rounds: spec.cooling.every_rounds,
            },
            fiber: FiberFile {
                length: Quantity::new(spec.length),
                c_fiber: Quantity::new(spec.c_fiber),
            },
            efficiency: EfficiencyFile {
                collection: spec.efficiencies.collection,
                conversion: spec.efficiencies.conversion,
                attenuation: Quantity::new(spec.efficiencies.attenuation_db_per_km),
                detector: spec.efficiencies.detector,
                other: spec.efficiencies.other,
                target_success_rate: spec.target_success_rate.map(Quantity::new),
            },
            memory: MemoryFile {
                amplitude: spec.memory.params.amplitude,
                tau_coh: Quantity::new(spec.memory.params.tau_coh),
                tau_life: Quantity::new(spec.memory.params.tau_life),
                storage_time: Quantity::new(spec.memory.storage_time),
                survival: spec.memory.survival,
            },
            atomic: AtomicFile {
                branching_d: spec.atomic.branching_d,
                weight_up: spec.atomic.weight_up,
                tau_p: Quantity::new(spec.atomic.tau_p),
            },
        }
    }
}

fn parse_family(text: &str) -> Result<StrategyFamily> {
    match text {
        "none" => Ok(StrategyFamily::None),
        "every" => Ok(StrategyFamily::Every),
        "fixed" => Ok(StrategyFamily::Fixed),
        other => match other.strip_prefix("periodic:").map(str::parse::<u32>) {
            Some(Ok(g)) if g >= 1 => Ok(StrategyFamily::Periodic(g)),
            _ => Err(Error::Config(format!(
                "sweep.family '{other}' not one of none, every, fixed, periodic:<group>"
            ))),
        },
    }
}

pub fn family_name(f: StrategyFamily) -> String {
    match f {
        StrategyFamily::None => "none".into(),
        StrategyFamily::Every => "every".into(),
        StrategyFamily::Fixed => "fixed".into(),
        StrategyFamily::Periodic(g) => format!("periodic:{g}"),
    }
}

impl SweepFile {
    fn resolve(&self) -> Result<Sweep> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep.grid is empty".into()));
        }
        let axis = match self.axis.as_str() {
            "mode_count" => Some(SweepAxis::ModeCount),
            "ion_count" => Some(SweepAxis::IonCount),
            _ => None,
        };
        match axis {
            Some(axis) => {
                let grid = self
                    .grid
                    .iter()
                    .map(|v| {
                        v.as_integer()
                            .filter(|&i| i >= 1 && i <= u32::MAX as i64)
                            .map(|i| i as u32)
                            .ok_or_else(|| {
                                Error::Config(format!(
                                    "sweep.grid entry {v} outside accepted range [1, {}]",
                                    u32::MAX
                                ))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("sweep.grid must be strictly increasing".into()));
                }
                let family = parse_family(self.family.as_deref().unwrap_or("fixed"))?;
                Ok(Sweep::Bsm { axis, grid, family })
            }
            None => Ok(Sweep::Parameter {
                key: qualify(&self.axis),
                values: self.grid.clone(),
            }),
        }
    }
}

fn deserialize_doc(doc: &Table) -> Result<ConfigFile> {
    let text = toml::to_string(doc).map_err(|e| Error::Config(e.to_string()))?;
    let de = toml::Deserializer::parse(&text).map_err(|e| Error::Config(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner().message()))
    })
}

/// Presets may build on other presets up to this depth.
const PRESET_DEPTH: usize = 4;

/// Document with its `scenario` chain expanded, the document's own
/// `scenario` name kept.
fn expand(doc: Table, depth: usize) -> Result<Table> {
    let scenario = match doc.get("scenario") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(Error::Config(format!("scenario must be a preset name, got {other}")))
        }
        None => return Ok(doc),
    };
    if depth == PRESET_DEPTH {
        return Err(Error::Config(format!("preset chain through '{scenario}' is too deep")));
    }
    let base = parse_table(preset_text(&scenario)?, &format!("preset {scenario}"))?;
    let mut merged = expand(base, depth + 1)?;
    merge(&mut merged, doc);
    Ok(merged)
}

/// Merges presets, document and overrides into one table.
pub fn assemble(doc: Table, overrides: &[(String, Value)]) -> Result<Table> {
    let mut merged = expand(doc, 0)?;
    if let Some(Value::Table(table)) = merged.remove("overrides") {
        for (k, v) in table {
            set_path(&mut merged, &k, v)?;
        }
    }
    for (k, v) in overrides {
        set_path(&mut merged, k, v.clone())?;
    }
    Ok(merged)
}

/// Resolves an assembled document.
pub fn resolve(doc: Table) -> Result<RunConfig> {
    let file = deserialize_doc(&doc)?;
    let protocol = file.protocol.as_ref().map(ProtocolFile::resolve).transpose()?;
    let link = file
        .link
        .as_ref()
        .map(|l| {
            let mut link = LinkParams::new(l.length.value(), l.overhead.value(), l.mode_interval.value(), 1);
            link.c_fiber = l.c_fiber.value();
            link.validate().map_err(|e| Error::Config(format!("link: {e}")))?;
            if l.modes.is_empty() || l.modes.contains(&0) {
                return Err(Error::Config("link.modes must list mode counts of at least 1".into()));
            }
            Ok((link, l.modes.clone()))
        })
        .transpose()?;
    let pair = match (&file.bsm, &protocol) {
        (Some(b), Some(spec)) => {
            check("bsm.efficiency", b.efficiency, 0.0, 1.0, false)?;
            Some(NodePair {
                a: spec.clone(),
                b: spec.clone(),
                bsm_efficiency: b.efficiency,
                window_alignment: b.alignment.value(),
            })
        }
        (Some(_), None) => {
            return Err(Error::Config("bsm needs a protocol table or scenario".into()))
        }
        _ => None,
    };
    let sweep = file.sweep.as_ref().map(SweepFile::resolve).transpose()?;
    let optimize = file
        .optimize
        .as_ref()
        .map(|o| {
            check("optimize.pulse_interval", o.pulse_interval.value(), 0.0, f64::MAX, true)?;
            check("optimize.pump_duration", o.pump_duration.value(), 0.0, f64::MAX, true)?;
            if o.pulses == 0 {
                return Err(Error::Config("optimize.pulses = 0 outside accepted range [1, inf)".into()));
            }
            let mut prob = OptimizationProblem::new(o.pulses, o.objective);
            prob.pulse_interval = o.pulse_interval.value();
            prob.pump_duration = o.pump_duration.value();
            prob.truncate = o.truncate;
            if let Some(spec) = &protocol {
                prob.params = spec.atomic;
            }
            Ok(prob)
        })
        .transpose()?;
    Ok(RunConfig {
        scenario: file.scenario.clone(),
        seed: file.seed.unwrap_or(DEFAULT_SEED),
        output: file.output.unwrap_or_default(),
        protocol,
        link,
        pair,
        sweep,
        optimize,
        document: doc,
    })
}

/// Loads a preset by name with overrides.
pub fn load_preset(name: &str, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let mut doc = Table::new();
    doc.insert("scenario".into(), Value::String(name.into()));
    resolve(assemble(doc, overrides)?)
}

/// Loads a configuration file with overrides.
pub fn load_config(path: &Path, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    load_str(&text, overrides)
}

pub fn load_str(text: &str, overrides: &[(String, Value)]) -> Result<RunConfig> {
    resolve(assemble(parse_table(text, "config")?, overrides)?)
}

impl RunConfig {
    /// Canonical document of the resolved configuration: presets and
    /// overrides folded in, quantities in canonical units.
    pub fn to_file(&self) -> ConfigFile {
        let link = self.link.as_ref().map(|(l, modes)| LinkFile {
            length: Quantity::new(l.length),
            c_fiber: Quantity::new(l.c_fiber),
            overhead: Quantity::new(l.overhead),
            mode_interval: Quantity::new(l.mode_interval),
            modes: modes.clone(),
        });
        let sweep = self.sweep.as_ref().map(|s| match s {
            Sweep::Bsm { axis, grid, family } => SweepFile {
                axis: match axis {
                    SweepAxis::ModeCount => "mode_count".into(),
                    SweepAxis::IonCount => "ion_count".into(),
                },
                grid: grid.iter().map(|&g| Value::Integer(g as i64)).collect(),
                family: Some(family_name(*family)),
            },
            Sweep::Parameter { key, values } => SweepFile {
                axis: key.clone(),
                grid: values.clone(),
                family: None,
            },
        });
        ConfigFile {
            scenario: None,
            seed: Some(self.seed),
            output: Some(self.output),
            protocol: self.protocol.as_ref().map(ProtocolFile::from_spec),
            link,
            bsm: self.pair.as_ref().map(|p| BsmFile {
                efficiency: p.bsm_efficiency,
                alignment: Quantity::new(p.window_alignment),
            }),
            sweep,
            optimize: self.optimize.as_ref().map(|o| OptimizeFile {
                pulses: o.pulses,
                objective: o.objective,
                pulse_interval: Quantity::new(o.pulse_interval),
                pump_duration: Quantity::new(o.pump_duration),
                truncate: o.truncate,
            }),
            overrides: Table::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_file()).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies a parameter value by key path and resolves again.
    pub fn with_value(&self, key: &str, value: Value) -> Result<RunConfig> {
        let mut doc: Table = self.to_toml()?.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        doc.remove("sweep");
        set_path(&mut doc, key, value)?;
        resolve(doc)
    }
}

/// Key-path overrides collected from the command line.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, Value)>> {
    items.iter().map(|s| parse_override(s)).collect()
}

/// Resolved values keyed by dotted path, for diagnostics and provenance.
pub fn flatten(table: &Table) -> BTreeMap<String, String> {
    fn walk(prefix: &str, t: &Table, out: &mut BTreeMap<String, String>) {
        for (k, v) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(inner) => walk(&key, inner, out),
                other => {
                    out.insert(key, other.to_string());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", table, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in preset_names() {
            load_preset(name, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn twelve_km_has_44_modes() {
        let cfg = load_preset("12km", &[]).unwrap();
        let spec = cfg.protocol.unwrap();
        assert_eq!(spec.ions, 4);
        assert_eq!(spec.mode_count(), 44);
    }

    #[test]
    fn shuttle_override() {
        let ov = parse_overrides(&["shuttle_time=\"3 us\"".into()]).unwrap();
        let spec = load_preset("12km", &ov).unwrap().protocol.unwrap();
        assert!((spec.shuttle_time - 3e-6).abs() < 1e-18);
        let ov = parse_overrides(&["protocol.shuttle_time=3us".into()]).unwrap();
        let spec = load_preset("12km", &ov).unwrap().protocol.unwrap();
        assert!((spec.shuttle_time - 3e-6).abs() < 1e-18);
    }

    #[test]
    fn unitless_quantity_rejected() {
        let ov = parse_overrides(&["shuttle_time=25".into()]).unwrap();
        let err = load_preset("12km", &ov).unwrap_err().to_string();
        assert!(err.contains("protocol.shuttle_time"), "{err}");
        assert!(err.contains("unit"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let ov = parse_overrides(&["protocol.colour=1".into()]).unwrap();
        let err = load_preset("3m", &ov).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn out_of_range_names_key_and_range() {
        let ov = parse_overrides(&["efficiency.detector=1.5".into()]).unwrap();
        let err = load_preset("1km", &ov).unwrap_err().to_string();
        assert!(err.contains("protocol.efficiency.detector"), "{err}");
        assert!(err.contains("[0, 1]"), "{err}");
    }

    #[test]
    fn round_trip() {
        for name in preset_names() {
            let cfg = load_preset(name, &[]).unwrap();
            let again = load_str(&cfg.to_toml().unwrap(), &[]).unwrap();
            assert_eq!(cfg.to_file(), again.to_file(), "{name}");
            assert_eq!(cfg.protocol, again.protocol, "{name}");
        }
    }
}
