//! Scenario configuration: TOML schema, defaults and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chainscale_core::catalog::{Catalog, Thresholds, VnfRole, VnfType, DEFAULT_BOOT_DELAY_MS};
use chainscale_core::forecast::Ar1Config;
use chainscale_core::planner::{PathTable, ServiceChainPath};
use chainscale_core::topology::{BindingTable, DatacenterId, DelayMatrix};
use serde::{Deserialize, Serialize};

/// Hop codes have four byte lanes; the last is the virtual exit stage.
pub const MAX_CHAIN_STAGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Proactive,
    Reactive,
    Hybrid,
}

impl Strategy {
    pub fn runs_rounds(self) -> bool {
        self != Strategy::Reactive
    }

    pub fn reacts(self) -> bool {
        self != Strategy::Proactive
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Proactive => "proactive",
            Strategy::Reactive => "reactive",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "one")]
    pub seed: u64,
    pub horizon_s: u64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "yes")]
    pub tagging: bool,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    /// Overrides of the reference VNF catalog, matched by name.
    #[serde(default)]
    pub vnf: Vec<VnfConfig>,
    #[serde(default)]
    pub media: MediaConfig,
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    /// Instances deployed at time zero beyond the one-per-role baseline.
    #[serde(default)]
    pub initial: Vec<InitialInstances>,
    #[serde(default)]
    pub delay_changes: Vec<DelayChange>,
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

fn default_strategy() -> Strategy {
    Strategy::Hybrid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub datacenters: Vec<String>,
    /// One-way delays, milliseconds.
    pub delays_ms: Vec<Vec<f64>>,
    /// Location key → datacenter name. Every datacenter name is also a
    /// location bound to itself.
    #[serde(default)]
    pub locations: BTreeMap<String, String>,
    pub scscf_home: String,
    /// Datacenter hosting the global controller.
    pub global_dc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub interval_s: u64,
    pub tau: u64,
    pub threshold_ms: f64,
    pub forecast_window: usize,
    pub persistence: usize,
    pub retransmit_ms: u64,
    pub stage_floor: usize,
    /// Seconds between control-plane reports.
    pub cp_report_s: u64,
    /// Seconds between data-plane reports.
    pub dp_report_s: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            interval_s: 50,
            tau: 10,
            threshold_ms: 250.0,
            forecast_window: 10,
            persistence: 5,
            retransmit_ms: 500,
            stage_floor: 1,
            cp_report_s: 5,
            dp_report_s: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub stages: Vec<String>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { stages: vec!["firewall".into(), "ids".into(), "transcoder".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfConfig {
    pub name: String,
    pub capacity: Option<f64>,
    pub cpu_pct: Option<f64>,
    pub mem_pct: Option<f64>,
    pub input_pps: Option<f64>,
    pub boot_delay_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediaConfig {
    pub bitrate_kbps: f64,
    pub packet_bytes: f64,
    pub call_duration_s: u64,
    /// Processing delay added per traversed stage instance.
    pub hop_processing_ms: f64,
    /// RTT added per saturated hop per second of saturation.
    pub overload_penalty_ms: f64,
    /// Base service time of a control-plane instance per transaction.
    pub cp_processing_ms: f64,
}

impl Default for MediaConfig {
    fn default() -> Self {
        MediaConfig {
            bitrate_kbps: 80.0,
            packet_bytes: 200.0,
            call_duration_s: 60,
            hop_processing_ms: 0.5,
            overload_penalty_ms: 10.0,
            cp_processing_ms: 2.0,
        }
    }
}

impl MediaConfig {
    pub fn packets_per_second(&self) -> f64 {
        self.bitrate_kbps * 1000.0 / (8.0 * self.packet_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// First come, first matched, regardless of datacenter.
    Fifo,
    /// First come, first matched with the oldest waiting user of another datacenter.
    CrossDc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    #[serde(default = "default_pairing")]
    pub pairing: Pairing,
    /// Delay of generator k after generator k − 1 starts; overrides
    /// per-generator `start_s` when present.
    #[serde(default)]
    pub start_delays_s: Vec<u64>,
    #[serde(default)]
    pub generators: Vec<GeneratorConfig>,
}

fn default_pairing() -> Pairing {
    Pairing::Fifo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dc: String,
    #[serde(default)]
    pub start_s: u64,
    pub change_interval_s: u64,
    /// Users per second for each change interval.
    #[serde(default)]
    pub rates: Vec<f64>,
    /// `[start, peak, end]`, stepped by `ramp_step` per change interval.
    #[serde(default)]
    pub ramp: Vec<f64>,
    #[serde(default = "unit_step")]
    pub ramp_step: f64,
}

fn unit_step() -> f64 {
    1.0
}

impl GeneratorConfig {
    /// The per-change-interval rate sequence.
    pub fn schedule(&self) -> Vec<f64> {
        if !self.rates.is_empty() || self.ramp.len() != 3 || !(self.ramp_step > 0.0) {
            return self.rates.clone();
        }
        let (a, peak, z) = (self.ramp[0], self.ramp[1], self.ramp[2]);
        let step = self.ramp_step;
        let mut out = vec![a];
        let mut v = a;
        while v + step <= peak + 1e-9 {
            v += step;
            out.push(v);
        }
        while v - step >= z - 1e-9 {
            v -= step;
            out.push(v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// Loss probability of every controller message.
    pub loss: f64,
    /// Extra uniform delay on enter-new-interval deliveries, milliseconds.
    pub enter_skew_ms: u64,
    /// Floor on controller message delay, milliseconds.
    pub min_delay_ms: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { loss: 0.0, enter_skew_ms: 0, min_delay_ms: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    Planned,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub mode: PathMode,
    /// When false, rounds change paths only; inventories keep their initial size.
    pub provisioning: bool,
    /// Scripted path tables, one per interval in rotation. Each path is a
    /// list of datacenter indices `[entry, stage 1, .., stage m, exit]`;
    /// unlisted pairs stay all-at-entry.
    pub script: Vec<Vec<Vec<usize>>>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { mode: PathMode::Planned, provisioning: true, script: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialInstances {
    pub dc: String,
    pub vnf: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayChange {
    pub at_s: u64,
    /// Datacenter name pairs; the change is symmetric.
    pub pairs: Vec<[String; 2]>,
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dc_index(&self, name: &str) -> Option<usize> {
        self.topology.datacenters.iter().position(|d| d == name)
    }

    pub fn datacenter_count(&self) -> usize {
        self.topology.datacenters.len()
    }

    /// The reference catalog restricted to the chain, with overrides applied.
    pub fn catalog(&self) -> Catalog {
        let reference = Catalog::reference();
        let mut types: Vec<VnfType> = Vec::new();
        for role in [VnfRole::Pcscf, VnfRole::Scscf] {
            types.push(reference.vnf(role).clone());
        }
        for (i, name) in self.chain.stages.iter().enumerate() {
            let role = VnfRole::Stage(i as u8 + 1);
            let mut t = reference.types().iter().find(|t| &t.name == name).cloned().unwrap_or(VnfType {
                name: name.clone(),
                role,
                capacity: 10_000.0,
                thresholds: Thresholds { cpu_pct: 90.0, mem_pct: 50.0, input_pps: 10_000.0 },
                boot_delay_ms: DEFAULT_BOOT_DELAY_MS,
            });
            t.role = role;
            types.push(t);
        }
        for o in &self.vnf {
            if let Some(t) = types.iter_mut().find(|t| t.name == o.name) {
                if let Some(v) = o.capacity {
                    t.capacity = v;
                }
                if let Some(v) = o.cpu_pct {
                    t.thresholds.cpu_pct = v;
                }
                if let Some(v) = o.mem_pct {
                    t.thresholds.mem_pct = v;
                }
                if let Some(v) = o.input_pps {
                    t.thresholds.input_pps = v;
                }
                if let Some(v) = o.boot_delay_s {
                    t.boot_delay_ms = (v * 1000.0).round() as u64;
                }
            }
        }
        Catalog::new(types).expect("validated catalog")
    }

    pub fn delays(&self) -> DelayMatrix {
        DelayMatrix::from_rows(&self.topology.delays_ms).expect("validated delays")
    }

    pub fn binding(&self) -> BindingTable {
        let mut b = BindingTable::default();
        for (i, d) in self.topology.datacenters.iter().enumerate() {
            b.insert(d.clone(), i);
        }
        for (loc, d) in &self.topology.locations {
            if let Some(i) = self.dc_index(d) {
                b.insert(loc.clone(), i);
            }
        }
        b
    }

    pub fn forecast(&self) -> Ar1Config {
        Ar1Config { window: self.scaling.forecast_window, ..Ar1Config::default() }
    }

    /// Scripted tables, each completed with all-at-entry paths.
    pub fn scripted_tables(&self) -> Vec<PathTable> {
        let n = self.datacenter_count();
        let m = self.chain.stages.len();
        self.paths
            .script
            .iter()
            .map(|paths| {
                let mut t = PathTable::all_at_entry(n, m);
                for p in paths {
                    t.insert(ServiceChainPath::from_indices(p));
                }
                t
            })
            .collect()
    }

    /// Start time of every generator, seconds.
    pub fn generator_starts(&self) -> Vec<u64> {
        let g = &self.traffic.generators;
        if self.traffic.start_delays_s.is_empty() {
            return g.iter().map(|g| g.start_s).collect();
        }
        let mut acc = 0;
        (0..g.len())
            .map(|k| {
                if k > 0 {
                    acc += self.traffic.start_delays_s.get(k - 1).copied().unwrap_or(0);
                }
                acc
            })
            .collect()
    }

    /// Every violated invariant, each tagged with its field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: String| errs.push(FieldError { path, message });
        let n = self.datacenter_count();
        let dc_ok = |name: &str| self.dc_index(name).is_some();

        if self.name.trim().is_empty() {
            err("name".into(), "must not be empty".into());
        }
        if self.horizon_s == 0 {
            err("horizon_s".into(), "must be > 0".into());
        }
        if n == 0 {
            err("topology.datacenters".into(), "at least one datacenter required".into());
        }
        if n > 64 {
            err("topology.datacenters".into(), format!("{n} datacenters exceed the tag limit of 64"));
        }
        for (i, d) in self.topology.datacenters.iter().enumerate() {
            if self.topology.datacenters[..i].contains(d) {
                err(format!("topology.datacenters[{i}]"), format!("duplicate name `{d}`"));
            }
        }
        let rows = &self.topology.delays_ms;
        if rows.len() != n {
            err("topology.delays_ms".into(), format!("{} rows for {n} datacenters", rows.len()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                err(format!("topology.delays_ms[{i}]"), format!("{} columns for {n} datacenters", r.len()));
            }
            for (j, &v) in r.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    err(format!("topology.delays_ms[{i}][{j}]"), "delay must be finite and >= 0".into());
                } else if i == j && v != 0.0 {
                    err(format!("topology.delays_ms[{i}][{j}]"), "diagonal must be 0".into());
                }
            }
        }
        for (loc, d) in &self.topology.locations {
            if !dc_ok(d) {
                err(format!("topology.locations.{loc}"), format!("unknown datacenter `{d}`"));
            }
        }
        for (field, v) in [("topology.scscf_home", &self.topology.scscf_home), ("topology.global_dc", &self.topology.global_dc)] {
            if !dc_ok(v) {
                err(field.into(), format!("unknown datacenter `{v}`"));
            }
        }

        let s = &self.scaling;
        if s.interval_s == 0 {
            err("scaling.interval_s".into(), "must be > 0".into());
        }
        for (field, cadence) in [("scaling.cp_report_s", s.cp_report_s), ("scaling.dp_report_s", s.dp_report_s)] {
            if cadence == 0 || (s.interval_s > 0 && !s.interval_s.is_multiple_of(cadence)) {
                err(field.into(), format!("interval of {} s is not a multiple of {cadence} s", s.interval_s));
            }
        }
        if s.tau == 0 {
            err("scaling.tau".into(), "must be > 0".into());
        }
        if !(s.threshold_ms > 0.0) {
            err("scaling.threshold_ms".into(), "must be > 0".into());
        }
        if s.forecast_window < 2 {
            err("scaling.forecast_window".into(), "must be >= 2".into());
        }
        if s.persistence == 0 {
            err("scaling.persistence".into(), "must be > 0".into());
        }
        if s.retransmit_ms == 0 {
            err("scaling.retransmit_ms".into(), "must be > 0".into());
        }

        let m = self.chain.stages.len();
        if m == 0 {
            err("chain.stages".into(), "at least one stage required".into());
        }
        if m > MAX_CHAIN_STAGES {
            err("chain.stages".into(), format!("{m} stages exceed the hop-code cap of {MAX_CHAIN_STAGES}"));
        }
        for (i, st) in self.chain.stages.iter().enumerate() {
            if self.chain.stages[..i].contains(st) {
                err(format!("chain.stages[{i}]"), format!("duplicate stage `{st}`"));
            }
        }
        let known: Vec<String> = ["p-cscf", "s-cscf"].iter().map(|s| s.to_string()).chain(self.chain.stages.iter().cloned()).collect();
        for (i, v) in self.vnf.iter().enumerate() {
            if !known.contains(&v.name) {
                err(format!("vnf[{i}].name"), format!("`{}` is neither a control-plane VNF nor a chain stage", v.name));
            }
            if v.capacity.is_some_and(|c| !(c > 0.0)) {
                err(format!("vnf[{i}].capacity"), "must be > 0".into());
            }
            for (f, p) in [("cpu_pct", v.cpu_pct), ("mem_pct", v.mem_pct)] {
                if p.is_some_and(|p| !(p > 0.0 && p <= 100.0)) {
                    err(format!("vnf[{i}].{f}"), "must lie in (0, 100]".into());
                }
            }
            if v.input_pps.is_some_and(|p| !(p > 0.0)) {
                err(format!("vnf[{i}].input_pps"), "must be > 0".into());
            }
            if v.boot_delay_s.is_some_and(|b| !(b >= 0.0)) {
                err(format!("vnf[{i}].boot_delay_s"), "must be >= 0".into());
            }
        }

        let md = &self.media;
        if !(md.bitrate_kbps > 0.0) {
            err("media.bitrate_kbps".into(), "must be > 0".into());
        }
        if !(md.packet_bytes > 0.0) {
            err("media.packet_bytes".into(), "must be > 0".into());
        }
        if md.call_duration_s == 0 {
            err("media.call_duration_s".into(), "must be > 0".into());
        }

        for (i, g) in self.traffic.generators.iter().enumerate() {
            let p = format!("traffic.generators[{i}]");
            if !dc_ok(&g.dc) {
                err(format!("{p}.dc"), format!("unknown datacenter `{}`", g.dc));
            }
            if g.change_interval_s == 0 {
                err(format!("{p}.change_interval_s"), "must be > 0".into());
            }
            if !g.rates.is_empty() && !g.ramp.is_empty() {
                err(p.clone(), "give either `rates` or `ramp`, not both".into());
            }
            if !g.ramp.is_empty() && g.ramp.len() != 3 {
                err(format!("{p}.ramp"), "expected [start, peak, end]".into());
            }
            if !(g.ramp_step > 0.0) {
                err(format!("{p}.ramp_step"), "must be > 0".into());
            }
            for (k, &r) in g.rates.iter().chain(g.ramp.iter()).enumerate() {
                if !(r.is_finite() && r >= 0.0) {
                    err(format!("{p}.rates[{k}]"), "rates must be finite and >= 0".into());
                }
            }
        }
        if !self.traffic.start_delays_s.is_empty() && self.traffic.start_delays_s.len() + 1 < self.traffic.generators.len() {
            err(
                "traffic.start_delays_s".into(),
                format!("{} delays for {} generators", self.traffic.start_delays_s.len(), self.traffic.generators.len()),
            );
        }

        if !(0.0..1.0).contains(&self.transport.loss) {
            err("transport.loss".into(), "must lie in [0, 1)".into());
        }

        if self.paths.mode == PathMode::Scripted && self.paths.script.is_empty() {
            err("paths.script".into(), "scripted mode needs at least one table".into());
        }
        for (t, table) in self.paths.script.iter().enumerate() {
            for (k, p) in table.iter().enumerate() {
                let field = format!("paths.script[{t}][{k}]");
                if p.len() != m + 2 {
                    err(field.clone(), format!("path of length {} for {m} stages", p.len()));
                }
                if p.iter().any(|&d| d >= n) {
                    err(field.clone(), "datacenter index out of range".into());
                }
                let path: Vec<DatacenterId> = p.iter().map(|&d| DatacenterId::from(d)).collect();
                if !chainscale_core::planner::is_loopless(&path) {
                    err(field, "path revisits a datacenter".into());
                }
            }
        }
        for (i, ini) in self.initial.iter().enumerate() {
            if !dc_ok(&ini.dc) {
                err(format!("initial[{i}].dc"), format!("unknown datacenter `{}`", ini.dc));
            }
            if !known.contains(&ini.vnf) {
                err(format!("initial[{i}].vnf"), format!("unknown vnf `{}`", ini.vnf));
            }
        }
        for (i, c) in self.delay_changes.iter().enumerate() {
            for (k, [a, b]) in c.pairs.iter().enumerate() {
                for d in [a, b] {
                    if !dc_ok(d) {
                        err(format!("delay_changes[{i}].pairs[{k}]"), format!("unknown datacenter `{d}`"));
                    }
                }
            }
            if !(c.delay_ms.is_finite() && c.delay_ms >= 0.0) {
                err(format!("delay_changes[{i}].delay_ms"), "must be finite and >= 0".into());
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

/// Sets a dotted path inside a TOML document. Numeric segments index
/// arrays; a named segment applied to an array applies to every element.
pub fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), String> {
    let segs: Vec<&str> = path.split('.').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return Err(format!("malformed path `{path}`"));
    }
    set_segments(doc, &segs, &value, path)
}

fn set_segments(node: &mut toml::Value, segs: &[&str], value: &toml::Value, full: &str) -> Result<(), String> {
    let (head, rest) = (segs[0], &segs[1..]);
    match node {
        toml::Value::Array(items) => {
            if let Ok(i) = head.parse::<usize>() {
                let item = items.get_mut(i).ok_or_else(|| format!("`{full}`: index {i} out of range"))?;
                if rest.is_empty() {
                    *item = value.clone();
                    return Ok(());
                }
                return set_segments(item, rest, value, full);
            }
            if items.is_empty() {
                return Err(format!("`{full}`: empty array"));
            }
            items.iter_mut().try_for_each(|item| set_segments(item, segs, value, full))
        }
        toml::Value::Table(t) => {
            // Absent keys are created; decoding rejects names the schema lacks.
            let child = t.entry(head).or_insert_with(|| toml::Value::Table(Default::default()));
            if rest.is_empty() {
                *child = value.clone();
                Ok(())
            } else {
                set_segments(child, rest, value, full)
            }
        }
        _ => Err(format!("`{full}`: `{head}` is not inside a table or array")),
    }
}

/// Loads a config document, applying `path = value` edits before decoding.
pub fn load_with_overrides(text: &str, edits: &[(String, toml::Value)]) -> Result<ScenarioConfig, String> {
    let mut doc: toml::Value = toml::from_str(text).map_err(|e| e.to_string())?;
    for (p, v) in edits {
        set_path(&mut doc, p, v.clone())?;
    }
    doc.try_into().map_err(|e: toml::de::Error| e.to_string())
}
