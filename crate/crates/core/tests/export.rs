use std::fs;

use tripsyn_core::export::{emit_plotdata, export_timeseries, write_spikes, PlotKind, PlotSource};
use tripsyn_core::network::{build_network, run_protocol, NetworkParams, ProtocolSpec, RasterData, RunOptions, TargetPatch};
use tripsyn_core::reduced::{simulate_extended, ExtendedScenario};
use tripsyn_core::tripartite::{simulate_tripartite, TripartiteConfig};
use tripsyn_core::Error;

fn small_raster() -> RasterData {
    let params = NetworkParams { n_neurons: 144, n_astrocytes: 36, synapses_per_neuron: 8, seed: 1, ..Default::default() };
    let proto = ProtocolSpec {
        t_stim: 0.05,
        t_delay: 0.1,
        t_recall: 0.05,
        target: TargetPatch { row: 4, col: 4, rows: 4, cols: 4 },
        ..Default::default()
    };
    run_protocol(&build_network(&params).unwrap(), &proto, &RunOptions { seed: 1, ..Default::default() }).unwrap()
}

fn header(path: &std::path::Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn tripartite_traces_are_three_panels() {
    let dir = tempfile::tempdir().unwrap();
    let res = simulate_tripartite(&TripartiteConfig { duration: 1.0, ..Default::default() }).unwrap();
    let files = emit_plotdata(PlotSource::Tripartite(&res), PlotKind::Traces, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["pre_rate.csv", "astro_x2.csv", "post_rate.csv", "plot_traces.json"]);
    assert_eq!(header(&files[0]), "t_s,rate_Hz");
    assert_eq!(header(&files[1]), "t_s,x2_uM");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[3]).unwrap()).unwrap();
    assert_eq!(manifest["panels"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["kind"], "traces");
}

#[test]
fn raster_and_rates_columns() {
    let dir = tempfile::tempdir().unwrap();
    let raster = small_raster();
    let files = emit_plotdata(PlotSource::Network(&raster), PlotKind::Raster, dir.path()).unwrap();
    assert_eq!(header(&files[0]), "t_s,neuron_id,group");
    let rows = fs::read_to_string(&files[0]).unwrap().lines().count() - 1;
    assert_eq!(rows, raster.spikes.len());

    let files = emit_plotdata(PlotSource::Network(&raster), PlotKind::Rates, dir.path()).unwrap();
    let text = fs::read_to_string(&files[0]).unwrap();
    assert_eq!(text.lines().next().unwrap(), "window,t0_s,t1_s,target_Hz,non_target_Hz,separation_ratio");
    let windows: Vec<_> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(windows, ["stim", "delay", "delay+recall", "recall"]);

    write_spikes(&raster, &dir.path().join("spikes.csv")).unwrap();
    assert_eq!(header(&dir.path().join("spikes.csv")), "neuron_id,time_s,group");
}

#[test]
fn mismatched_kinds_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let raster = small_raster();
    let traj = simulate_extended(&tripsyn_core::reduced::ExtendedConfig { duration: 1.0, ..ExtendedScenario::Case1.config() }).unwrap();
    assert!(matches!(emit_plotdata(PlotSource::Network(&raster), PlotKind::Traces, dir.path()), Err(Error::KindMismatch { .. })));
    assert!(matches!(emit_plotdata(PlotSource::Extended(&traj), PlotKind::Rates, dir.path()), Err(Error::KindMismatch { .. })));
}

#[test]
fn timeseries_round_trips_at_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let traj = simulate_extended(&tripsyn_core::reduced::ExtendedConfig { duration: 2.0, ..ExtendedScenario::Pulse.config() }).unwrap();
    let path = dir.path().join("pulse.csv");
    export_timeseries(&traj, &path, 3).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + traj.len().div_ceil(3));
    for (line, s) in text.lines().skip(1).zip(traj.samples.iter().step_by(3)) {
        let vals: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        for (a, b) in vals.iter().zip(s.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}
