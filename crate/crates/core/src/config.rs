//! Experiment configuration files.
//!
//! A config is one TOML document:
//!
//! ```toml
//! scenario = "wm-weak"
//! seed = 7
//! output_dir = "out/wm-weak"
//! dt = 1e-4            # optional, preset value otherwise
//! duration = 6.0       # optional, not allowed for wm-* scenarios
//!
//! [export]
//! timeseries = true
//! plotdata = true
//! stride = 10
//!
//! [astrocyte]          # AstrocyteParams fields
//! v1 = 6.0
//!
//! [protocol]           # ProtocolSpec fields (wm-* only)
//! cue_amplitude = 3.0
//! ```
//!
//! Parameter sections are `astrocyte`, `neuron`, `firing_rate`, `network`,
//! `protocol` and `model`; `model` reaches the scenario's own settings
//! (inputs, modes, strides, check options). Each section only lists the
//! fields it changes. Unknown keys, and sections the scenario does not use,
//! are errors.
//!
//! Precedence, lowest first: scenario preset, top-level `dt`/`duration`,
//! sections in the file, `--set key=value` overrides (applied to the file
//! before parsing), dedicated CLI flags (`--scenario`, `--seed`, `--out`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Case1,
    Case2,
    Case3,
    Pulse,
    TripartiteShort,
    TripartitePersistent,
    WmStrong,
    WmWeak,
    WmNone,
    StabilityReport,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Case1,
        Scenario::Case2,
        Scenario::Case3,
        Scenario::Pulse,
        Scenario::TripartiteShort,
        Scenario::TripartitePersistent,
        Scenario::WmStrong,
        Scenario::WmWeak,
        Scenario::WmNone,
        Scenario::StabilityReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Case1 => "case1",
            Scenario::Case2 => "case2",
            Scenario::Case3 => "case3",
            Scenario::Pulse => "pulse",
            Scenario::TripartiteShort => "tripartite-short",
            Scenario::TripartitePersistent => "tripartite-persistent",
            Scenario::WmStrong => "wm-strong",
            Scenario::WmWeak => "wm-weak",
            Scenario::WmNone => "wm-none",
            Scenario::StabilityReport => "stability-report",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Case1 => "astrocyte + firing rate, no glutamate input",
            Scenario::Case2 => "astrocyte + firing rate, persistent 5 uM/s input, eta = 1",
            Scenario::Case3 => "astrocyte + firing rate, persistent 5 uM/s input, eta = 0.25",
            Scenario::Pulse => "astrocyte + firing rate, 0.2 s pulse of 5 uM/s, eta = 1",
            Scenario::TripartiteShort => "pre neuron / astrocyte / post neuron, 0.2 s 100 uA stimulus",
            Scenario::TripartitePersistent => "pre neuron / astrocyte / post neuron, persistent 100 uA stimulus",
            Scenario::WmStrong => "working-memory network, eta = 1, no recall cue",
            Scenario::WmWeak => "working-memory network, eta = 0.25, noisy recall cue",
            Scenario::WmNone => "working-memory network, eta = 0, noisy recall cue",
            Scenario::StabilityReport => "equilibria, eigenvalues, bounds and randomized checks at u = 0 and u = 5",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| Error::Config {
            path: "scenario".into(),
            message: format!(
                "unknown scenario `{s}`; expected one of {}",
                Scenario::ALL.map(Scenario::name).join(", ")
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportFlags {
    /// Full time series CSV (and events sidecar) for ODE scenarios, Ca²⁺
    /// traces for network scenarios.
    pub timeseries: bool,
    /// Plot-ready columnar files under `plots/`.
    pub plotdata: bool,
    /// Keep every n-th stored sample.
    pub stride: usize,
}

impl Default for ExportFlags {
    fn default() -> Self {
        ExportFlags { timeseries: true, plotdata: true, stride: 1 }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub export: ExportFlags,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub astrocyte: Table,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub neuron: Table,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub firing_rate: Table,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub network: Table,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub protocol: Table,
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub model: Table,
}

impl ExperimentConfig {
    /// Default config for a preset.
    pub fn preset(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            seed: 0,
            dt: None,
            duration: None,
            output_dir: default_output_dir(),
            export: ExportFlags::default(),
            astrocyte: Table::new(),
            neuron: Table::new(),
            firing_rate: Table::new(),
            network: Table::new(),
            protocol: Table::new(),
            model: Table::new(),
        }
    }

    /// Parse TOML text after applying `key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table =
            toml::from_str(text).map_err(|e| Error::Config { path: "<file>".into(), message: e.message().to_string() })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Table::try_into(table).map_err(|e: toml::de::Error| Error::Config { path: "<root>".into(), message: e.message().to_string() })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config { path: key, message } => Error::Config { path: key, message: format!("{message} (in {})", path.display()) },
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { path: "<root>".into(), message: e.to_string() })
    }

    /// Non-empty parameter sections by name.
    pub fn sections(&self) -> Vec<(&'static str, &Table)> {
        [
            ("astrocyte", &self.astrocyte),
            ("neuron", &self.neuron),
            ("firing_rate", &self.firing_rate),
            ("network", &self.network),
            ("protocol", &self.protocol),
            ("model", &self.model),
        ]
        .into_iter()
        .filter(|(_, t)| !t.is_empty())
        .collect()
    }
}

/// Parse the right-hand side of `--set` as a TOML value, falling back to a
/// bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Apply one `dotted.key=value` override, creating intermediate tables.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config { path: spec.into(), message: "override must look like key=value".into() })?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config { path: key.into(), message: "empty key segment".into() });
    }
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Error::Config {
                    path: parts[..=i].join("."),
                    message: "is not a table and cannot hold nested keys".into(),
                })
            }
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Internally tagged enums are replaced wholesale rather than merged.
fn is_tagged(t: &Table) -> bool {
    t.contains_key("kind") || t.contains_key("mode")
}

/// Recursively overlay `over` onto `base`. Every key in `over` must already
/// exist in `base`, which holds the fully serialized defaults, so a
/// misspelling is reported with its full path.
pub fn merge_strict(base: &mut Table, over: &Table, prefix: &str) -> Result<()> {
    for (k, v) in over {
        let path = join(prefix, k);
        if !base.contains_key(k) {
            return Err(Error::Config {
                path,
                message: format!(
                    "unknown key; expected one of: {}",
                    base.keys().map(String::as_str).collect::<Vec<_>>().join(", ")
                ),
            });
        }
        let slot = base.get_mut(k).expect("checked above");
        match (slot, v) {
            (Value::Table(bt), Value::Table(ot)) if !is_tagged(ot) => merge_strict(bt, ot, &path)?,
            (Value::Table(_), v) if !v.is_table() => {
                return Err(Error::Config { path, message: "expected a table".into() });
            }
            (slot, v) => *slot = v.clone(),
        }
    }
    Ok(())
}

/// Navigate to the nested table at `path` (dot separated, empty = root).
pub fn table_at<'a>(root: &'a mut Table, path: &str) -> &'a mut Table {
    if path.is_empty() {
        return root;
    }
    let mut cur = root;
    for part in path.split('.') {
        cur = cur.get_mut(part).and_then(Value::as_table_mut).expect("path into serialized defaults");
    }
    cur
}

/// Serialize a parameter struct to a TOML table.
pub fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    Table::try_from(value).map_err(|e| Error::Config { path: "<defaults>".into(), message: e.to_string() })
}

/// Deserialize a merged table back into its parameter struct.
pub fn from_table<T: for<'de> Deserialize<'de>>(table: Table, section: &str) -> Result<T> {
    table.try_into().map_err(|e: toml::de::Error| Error::Config { path: section.into(), message: e.message().to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::from_toml_str("scenario = \"case2\"\n", &[]).unwrap();
        assert_eq!(c.scenario, Scenario::Case2);
        assert_eq!(c.seed, 0);
        assert_eq!(c.export, ExportFlags::default());
    }

    #[test]
    fn misspelled_top_level_key_is_rejected() {
        let err = ExperimentConfig::from_toml_str("scenario = \"case2\"\nsede = 3\n", &[]).unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
    }

    #[test]
    fn misspelled_export_key_is_rejected() {
        let err = ExperimentConfig::from_toml_str("scenario = \"case2\"\n[export]\nstrid = 3\n", &[]).unwrap_err();
        assert!(err.to_string().contains("strid"), "{err}");
    }

    #[test]
    fn unknown_scenario() {
        assert!(ExperimentConfig::from_toml_str("scenario = \"case9\"\n", &[]).is_err());
        assert!("case9".parse::<Scenario>().is_err());
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
    }

    #[test]
    fn overrides_take_precedence_over_file() {
        let text = "scenario = \"case2\"\nseed = 1\n[astrocyte]\nv1 = 6.0\n";
        let sets = ["seed=9".to_string(), "astrocyte.v1=7".into(), "protocol.eta=0.5".into(), "scenario=case3".into()];
        let c = ExperimentConfig::from_toml_str(text, &sets).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.scenario, Scenario::Case3);
        assert_eq!(c.astrocyte["v1"].as_integer(), Some(7));
        assert_eq!(c.protocol["eta"].as_float(), Some(0.5));
    }

    #[test]
    fn malformed_override() {
        let mut t = Table::new();
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "a..b=1").is_err());
        apply_override(&mut t, "a=1").unwrap();
        assert!(apply_override(&mut t, "a.b=1").is_err());
    }

    #[test]
    fn strict_merge_reports_full_path() {
        let mut base: Table = toml::from_str("[outer]\nalpha = 1.0\n[outer.inner]\nbeta = 2\n").unwrap();
        let over: Table = toml::from_str("[outer.inner]\nbetta = 3\n").unwrap();
        match merge_strict(&mut base, &over, "section").unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "section.outer.inner.betta"),
            e => panic!("{e}"),
        }
        let over: Table = toml::from_str("[outer]\nalpha = 5.0\n").unwrap();
        merge_strict(&mut base, &over, "").unwrap();
        assert_eq!(base["outer"]["alpha"].as_float(), Some(5.0));
        assert_eq!(base["outer"]["inner"]["beta"].as_integer(), Some(2));
    }

    #[test]
    fn tagged_tables_replace() {
        let mut base: Table = toml::from_str("input = { kind = \"zero\" }\n").unwrap();
        let over: Table = toml::from_str("input = { kind = \"constant\", value = 2.0 }\n").unwrap();
        merge_strict(&mut base, &over, "").unwrap();
        assert_eq!(base["input"]["value"].as_float(), Some(2.0));
    }

    #[test]
    fn echo_round_trips() {
        let text = "scenario = \"wm-weak\"\nseed = 4\n[protocol]\ncue_amplitude = 3.0\n";
        let c = ExperimentConfig::from_toml_str(text, &[]).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(c, again);
    }
}
