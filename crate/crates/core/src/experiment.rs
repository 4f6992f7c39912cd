//! Preset dispatch and artifact writing for config-driven runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use toml::Table;

use crate::config::{from_table, merge_strict, table_at, to_table, ExperimentConfig, Scenario};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::export::{emit_plotdata, export_timeseries, write_astro_traces, write_json, write_spikes, PlotKind, PlotSource};
use crate::network::{build_network, phase_rates, run_protocol, Group, NetworkParams, ProtocolSpec, RunOptions, WmPreset, RATE_FLOOR_HZ};
use crate::reduced::{simulate_extended, ExtendedConfig, ExtendedScenario};
use crate::stability::{stability_report, ReportOptions};
use crate::tripartite::{simulate_tripartite, AstrocyteParams, InputProfile, TripartiteConfig, RESTING_ASTROCYTE};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Settings of a working-memory run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSetup {
    pub network: NetworkParams,
    pub protocol: ProtocolSpec,
    pub run: RunOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySetup {
    /// Constant IP₃ inputs to analyse, μM/s.
    pub input_levels: Vec<f64>,
    pub astrocyte: AstrocyteParams,
    pub report: ReportOptions,
}

impl Default for StabilitySetup {
    fn default() -> Self {
        StabilitySetup { input_levels: vec![0.0, 5.0], astrocyte: AstrocyteParams::default(), report: ReportOptions::default() }
    }
}

/// Fully resolved parameters of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "module", rename_all = "snake_case")]
pub enum Resolved {
    Extended(ExtendedConfig),
    Tripartite(TripartiteConfig),
    Network(NetworkSetup),
    Stability(StabilitySetup),
}

/// Built-in parameters of a preset before any config is applied.
pub fn preset_defaults(scenario: Scenario, seed: u64) -> Resolved {
    match scenario {
        Scenario::Case1 => Resolved::Extended(ExtendedScenario::Case1.config()),
        Scenario::Case2 => Resolved::Extended(ExtendedScenario::Case2.config()),
        Scenario::Case3 => Resolved::Extended(ExtendedScenario::Case3.config()),
        Scenario::Pulse => Resolved::Extended(ExtendedScenario::Pulse.config()),
        Scenario::TripartiteShort => Resolved::Tripartite(TripartiteConfig::default()),
        Scenario::TripartitePersistent => Resolved::Tripartite(TripartiteConfig {
            stimulus: InputProfile::Constant { value: 100.0 },
            ..Default::default()
        }),
        Scenario::WmStrong | Scenario::WmWeak | Scenario::WmNone => {
            let preset = match scenario {
                Scenario::WmStrong => WmPreset::Strong,
                Scenario::WmWeak => WmPreset::Weak,
                _ => WmPreset::None,
            };
            Resolved::Network(NetworkSetup {
                network: NetworkParams { seed, ..Default::default() },
                protocol: preset.protocol(),
                run: RunOptions { seed, ..Default::default() },
            })
        }
        Scenario::StabilityReport => {
            let mut s = StabilitySetup::default();
            s.report = s.report.with_seed(seed);
            Resolved::Stability(s)
        }
    }
}

/// Where each config section lands inside the serialized preset.
fn section_targets(resolved: &Resolved, section: &str) -> Option<&'static [&'static str]> {
    let targets: &[(&str, &'static [&'static str])] = match resolved {
        Resolved::Extended(_) => &[("astrocyte", &["astrocyte"]), ("firing_rate", &["rate"]), ("model", &[""])],
        Resolved::Tripartite(_) => &[("astrocyte", &["astrocyte"]), ("neuron", &["pre", "post"]), ("model", &[""])],
        Resolved::Network(_) => &[
            ("astrocyte", &["run.astrocyte"]),
            ("neuron", &["run.neuron"]),
            ("network", &["network"]),
            ("protocol", &["protocol"]),
            ("model", &["run"]),
        ],
        Resolved::Stability(_) => &[("astrocyte", &["astrocyte"]), ("model", &[""])],
    };
    targets.iter().find(|(s, _)| *s == section).map(|(_, t)| *t)
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config { path: key.into(), message: format!("must be positive, got {v}") })
    }
}

/// Apply a config to its preset. Returns the parameters and any warnings.
pub fn resolve(cfg: &ExperimentConfig) -> Result<(Resolved, Vec<String>)> {
    if cfg.export.stride == 0 {
        return Err(Error::Config { path: "export.stride".into(), message: "must be >= 1".into() });
    }
    let mut resolved = preset_defaults(cfg.scenario, cfg.seed);
    if let Some(dt) = cfg.dt {
        check_positive("dt", dt)?;
    }
    if let Some(d) = cfg.duration {
        check_positive("duration", d)?;
    }
    match &mut resolved {
        Resolved::Extended(c) => {
            c.dt = cfg.dt.unwrap_or(c.dt);
            c.duration = cfg.duration.unwrap_or(c.duration);
        }
        Resolved::Tripartite(c) => {
            c.dt = cfg.dt.unwrap_or(c.dt);
            c.duration = cfg.duration.unwrap_or(c.duration);
        }
        Resolved::Network(s) => {
            if cfg.duration.is_some() {
                return Err(Error::Config {
                    path: "duration".into(),
                    message: "wm scenarios take their duration from protocol.t_stim/t_delay/t_recall".into(),
                });
            }
            s.run.dt = cfg.dt.unwrap_or(s.run.dt);
        }
        Resolved::Stability(s) => {
            for check in [&mut s.report.positivity, &mut s.report.boundedness.check] {
                check.dt = cfg.dt.unwrap_or(check.dt);
                check.horizon = cfg.duration.unwrap_or(check.horizon);
            }
        }
    }

    let mut base = match &resolved {
        Resolved::Extended(c) => to_table(c)?,
        Resolved::Tripartite(c) => to_table(c)?,
        Resolved::Network(s) => to_table(s)?,
        Resolved::Stability(s) => to_table(s)?,
    };
    for (section, over) in cfg.sections() {
        let targets = section_targets(&resolved, section).ok_or_else(|| Error::Config {
            path: section.into(),
            message: format!("section is not used by scenario {}", cfg.scenario),
        })?;
        for target in targets {
            merge_strict(table_at(&mut base, target), over, section)?;
        }
    }
    resolved = match resolved {
        Resolved::Extended(_) => Resolved::Extended(from_table(base, "model")?),
        Resolved::Tripartite(_) => Resolved::Tripartite(from_table(base, "model")?),
        Resolved::Network(_) => Resolved::Network(from_table(base, "model")?),
        Resolved::Stability(_) => Resolved::Stability(from_table(base, "model")?),
    };

    let warnings = match &resolved {
        Resolved::Extended(c) => c.validate()?,
        Resolved::Tripartite(c) => c.validate()?,
        Resolved::Network(s) => {
            s.network.validate()?;
            s.protocol.validate(s.network.neuron_side()?)?;
            s.run.neuron.validate("neuron")?;
            let w = s.run.astrocyte.validate("astrocyte")?;
            check_positive("model.dt", s.run.dt)?;
            w
        }
        Resolved::Stability(s) => {
            if s.input_levels.iter().any(|&u| !(0.0..=s.astrocyte.a_glu).contains(&u)) {
                return Err(Error::Config { path: "model.input_levels".into(), message: "each level must lie in [0, a_glu]".into() });
            }
            s.astrocyte.validate("astrocyte")?
        }
    };
    Ok((resolved, warnings))
}

/// What a run produced.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    /// Relative to `output_dir`, sorted.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    /// Scenario-specific headline numbers.
    pub metrics: serde_json::Value,
}

fn extended_with_current(traj: &Trajectory, cfg: &ExtendedConfig) -> Trajectory {
    let mode = cfg.i_astro_mode;
    traj.with_derived("I_astro_uA", move |s| mode.eval(s[1]))
}

fn first_after(times: &[f64], t0: f64) -> Option<f64> {
    times.iter().copied().find(|&t| t > t0)
}

fn run_resolved(cfg: &ExperimentConfig, resolved: &Resolved, dir: &Path) -> Result<serde_json::Value> {
    let flags = &cfg.export;
    let plots = dir.join("plots");
    Ok(match resolved {
        Resolved::Extended(c) => {
            let traj = extended_with_current(&simulate_extended(c)?, c);
            if flags.timeseries {
                export_timeseries(&traj, &dir.join("timeseries.csv"), flags.stride)?;
            }
            if flags.plotdata {
                emit_plotdata(PlotSource::Extended(&traj), PlotKind::Traces, &plots)?;
            }
            let last = traj.last().expect("at least one sample");
            let x4 = traj.column(3);
            let metrics = json!({
                "final_state": { "x1_uM": last[0], "x2_uM": last[1], "x3": last[2], "x4_Hz": last[3] },
                "max_x4_Hz": x4.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "max_x2_uM": traj.column(1).iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
            write_json(&metrics, &dir.join("summary.json"))?;
            metrics
        }
        Resolved::Tripartite(c) => {
            let res = simulate_tripartite(c)?;
            if flags.timeseries {
                export_timeseries(&res.trajectory, &dir.join("timeseries.csv"), flags.stride)?;
            }
            if flags.plotdata {
                emit_plotdata(PlotSource::Tripartite(&res), PlotKind::Traces, &plots)?;
            }
            let (pre, post) = (res.pre_spikes(), res.post_spikes());
            let stim_end = c.stimulus.end_time().unwrap_or(0.0);
            let metrics = json!({
                "pre_spikes": pre.len(),
                "post_spikes": post.len(),
                "stimulus_end_s": c.stimulus.end_time(),
                "first_post_spike_s": post.first(),
                "first_post_spike_after_stimulus_s": first_after(&post, stim_end),
                "last_post_spike_s": post.last(),
                "max_x2_uM": res.trajectory.column(4).iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
            write_json(&metrics, &dir.join("summary.json"))?;
            metrics
        }
        Resolved::Network(s) => {
            let topo = build_network(&s.network)?;
            let raster = run_protocol(&topo, &s.protocol, &s.run)?;
            write_spikes(&raster, &dir.join("spikes.csv"))?;
            let rates = phase_rates(&raster, RATE_FLOOR_HZ)?;
            let report = json!({
                "rate_floor_hz": RATE_FLOOR_HZ,
                "windows": rates,
                "n_target": raster.groups.iter().filter(|g| **g == Group::Target).count(),
                "n_non_target": raster.groups.iter().filter(|g| **g == Group::NonTarget).count(),
                "total_spikes": raster.spikes.len(),
                "astrocyte_audit": raster.audit,
            });
            write_json(&report, &dir.join("rates.json"))?;
            if flags.timeseries {
                write_astro_traces(&raster, &dir.join("astro_traces.csv"), flags.stride)?;
            }
            if flags.plotdata {
                emit_plotdata(PlotSource::Network(&raster), PlotKind::Raster, &plots)?;
                emit_plotdata(PlotSource::Network(&raster), PlotKind::Rates, &plots)?;
            }
            report
        }
        Resolved::Stability(s) => {
            let reports = s
                .input_levels
                .iter()
                .map(|&u| stability_report(&s.astrocyte, u, RESTING_ASTROCYTE, &s.report))
                .collect::<Result<Vec<_>>>()?;
            let out = json!({ "reports": reports });
            write_json(&out, &dir.join("stability_report.json"))?;
            out
        }
    })
}

fn list_files(dir: &Path, root: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            list_files(&path, root, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: Scenario,
    seed: u64,
    outputs: &'a [String],
    warnings: &'a [String],
    config: &'a ExperimentConfig,
    resolved: Table,
}

/// Resolve, run and write all artifacts plus `manifest.toml` into
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (resolved, warnings) = resolve(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = run_resolved(cfg, &resolved, dir)?;

    let mut files = Vec::new();
    list_files(dir, dir, &mut files)?;
    files.retain(|f| f != "manifest.toml");
    files.sort();
    let manifest = Manifest {
        tool: "tripsyn",
        version: VERSION,
        scenario: cfg.scenario,
        seed: cfg.seed,
        outputs: &files,
        warnings: &warnings,
        config: cfg,
        resolved: to_table(&resolved)?,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config { path: "<manifest>".into(), message: e.to_string() })?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push("manifest.toml".into());
    files.sort();
    Ok(RunSummary { scenario: cfg.scenario, output_dir: dir.clone(), files, warnings, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text, &[]).unwrap()
    }

    #[test]
    fn every_preset_resolves() {
        for s in Scenario::ALL {
            let (r, w) = resolve(&ExperimentConfig::preset(s)).unwrap();
            assert!(w.is_empty(), "{s}: {w:?}");
            assert_eq!(r, preset_defaults(s, 0));
        }
    }

    #[test]
    fn sections_override_nested_fields() {
        let c = cfg("scenario = \"case3\"\n[astrocyte]\nv1 = 6\n[firing_rate]\neta = 0.5\n[model]\nx4_init = 1.5\n");
        match resolve(&c).unwrap().0 {
            Resolved::Extended(e) => {
                assert_eq!(e.astrocyte.v1, 6.0);
                assert_eq!(e.rate.eta, 0.5);
                assert_eq!(e.x4_init, 1.5);
                assert_eq!(e.astrocyte.v2, AstrocyteParams::default().v2);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn neuron_section_reaches_both_tripartite_neurons() {
        let c = cfg("scenario = \"tripartite-short\"\n[neuron]\nd = 4.0\n");
        match resolve(&c).unwrap().0 {
            Resolved::Tripartite(t) => assert_eq!((t.pre.d, t.post.d), (4.0, 4.0)),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn misspelled_section_key_names_its_path() {
        let err = resolve(&cfg("scenario = \"wm-weak\"\n[protocol]\ncue_amplitud = 3.0\n")).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "protocol.cue_amplitud"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unused_section_is_rejected() {
        assert!(resolve(&cfg("scenario = \"case2\"\n[network]\nlambda = 3.0\n")).is_err());
        assert!(resolve(&cfg("scenario = \"wm-none\"\nduration = 3.0\n")).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(resolve(&cfg("scenario = \"case2\"\n[astrocyte]\nv1 = -1.0\n")).is_err());
        assert!(resolve(&cfg("scenario = \"case2\"\ndt = 0.0\n")).is_err());
        assert!(resolve(&cfg("scenario = \"case2\"\n[export]\nstride = 0\n")).is_err());
        assert!(resolve(&cfg("scenario = \"case2\"\n[model]\ninput = { kind = \"constant\", value = 9.0 }\n")).is_err());
    }

    #[test]
    fn seed_reaches_network_streams() {
        match resolve(&cfg("scenario = \"wm-strong\"\nseed = 42\n")).unwrap().0 {
            Resolved::Network(s) => assert_eq!((s.network.seed, s.run.seed), (42, 42)),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn case2_writes_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::preset(Scenario::Case2);
        c.duration = Some(1.0);
        c.output_dir = dir.path().to_path_buf();
        let summary = run_experiment(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t_s,x1_uM,x2_uM,x3,x4_Hz,I_astro_uA");
        assert!(summary.files.contains(&"manifest.toml".to_string()));
        assert!(summary.files.contains(&"plots/plot_traces.json".to_string()));
        let manifest: Table = toml::from_str(&fs::read_to_string(dir.path().join("manifest.toml")).unwrap()).unwrap();
        assert_eq!(manifest["version"].as_str(), Some(VERSION));
        assert_eq!(manifest["config"]["scenario"].as_str(), Some("case2"));
    }
}
