//! File writers: decimated time series, spike rasters, rate tables, and
//! plot-ready columnar data with a small JSON manifest per plot.
//!
//! All CSV files are UTF-8, comma separated, with one header row whose column
//! names carry their unit as a suffix (`t_s`, `x2_uM`, `rate_Hz`). Floats use
//! the shortest representation that parses back to the same value.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::network::{phase_rates, RasterData, RATE_FLOOR_HZ};
use crate::tripartite::{TripartiteResult, PRE_SPIKE, POST_SPIKE};

/// Bin width for spike-rate traces, s.
pub const RATE_BIN_S: f64 = 0.1;

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, io)
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `<dir>/<stem>_events.csv` next to `path`.
pub fn events_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_events.csv"))
}

/// Write every `stride`-th stored sample to `path` and the trajectory's
/// events to the `_events.csv` sidecar. Returns both paths.
pub fn export_timeseries(traj: &Trajectory, path: &Path, stride: usize) -> Result<Vec<PathBuf>> {
    if stride == 0 {
        return Err(Error::Precondition("export stride must be >= 1".into()));
    }
    let mut header = vec!["t_s".to_string()];
    header.extend(traj.labels.iter().cloned());
    let rows = traj.times.iter().zip(&traj.samples).step_by(stride).map(|(t, s)| {
        std::iter::once(t.to_string()).chain(s.iter().map(|v| v.to_string())).collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)?;

    let side = events_path(path);
    let rows = traj.events.iter().map(|e| vec![e.time.to_string(), e.tag.to_string()]);
    write_rows(&side, &["time_s".into(), "event".into()], rows)?;
    Ok(vec![path.to_path_buf(), side])
}

/// `neuron_id,time_s,group`, one row per spike in time order.
pub fn write_spikes(raster: &RasterData, path: &Path) -> Result<()> {
    let rows = raster
        .spikes
        .iter()
        .map(|s| vec![s.neuron.to_string(), s.time.to_string(), raster.groups[s.neuron].label().to_string()]);
    write_rows(path, &["neuron_id".into(), "time_s".into(), "group".into()], rows)
}

/// Astrocytic Ca²⁺ traces, one column per astrocyte, keeping every
/// `stride`-th stored sample.
pub fn write_astro_traces(raster: &RasterData, path: &Path, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::Precondition("export stride must be >= 1".into()));
    }
    let n = raster.astro_x2.first().map_or(0, Vec::len);
    let mut header = vec!["t_s".to_string()];
    header.extend((0..n).map(|a| format!("a{a}_x2_uM")));
    let rows = raster.trace_times.iter().zip(&raster.astro_x2).step_by(stride).map(|(t, xs)| {
        std::iter::once(t.to_string()).chain(xs.iter().map(|v| v.to_string())).collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)
}

/// Spike counts in consecutive bins of width `bin` over `[0, duration]`,
/// as (bin centre, rate in Hz).
pub fn binned_rate(spike_times: &[f64], duration: f64, bin: f64) -> Vec<(f64, f64)> {
    let n = (duration / bin).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; n];
    for &t in spike_times {
        let k = ((t / bin) as usize).min(n - 1);
        counts[k] += 1;
    }
    counts.iter().enumerate().map(|(k, &c)| ((k as f64 + 0.5) * bin, c as f64 / bin)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Traces,
    Raster,
    Rates,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Traces => "traces",
            PlotKind::Raster => "raster",
            PlotKind::Rates => "rates",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traces" => Ok(PlotKind::Traces),
            "raster" => Ok(PlotKind::Raster),
            "rates" => Ok(PlotKind::Rates),
            _ => Err(Error::invalid("kind", format!("unknown plot kind `{s}` (traces, raster, rates)"))),
        }
    }
}

/// A result that can be turned into plot data.
#[derive(Clone, Copy, Debug)]
pub enum PlotSource<'a> {
    /// Astrocyte + firing-rate trajectory.
    Extended(&'a Trajectory),
    Tripartite(&'a TripartiteResult),
    Network(&'a RasterData),
}

impl PlotSource<'_> {
    fn name(&self) -> &'static str {
        match self {
            PlotSource::Extended(_) => "extended",
            PlotSource::Tripartite(_) => "tripartite",
            PlotSource::Network(_) => "network",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub column: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Panel {
    pub title: String,
    pub file: String,
    /// `line`, `scatter` or `bar`.
    pub style: String,
    pub x: Axis,
    pub y: Vec<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotManifest {
    pub kind: PlotKind,
    pub source: String,
    pub panels: Vec<Panel>,
    /// Named time intervals to shade, s.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<(String, f64, f64)>,
}

fn axis(column: &str, label: &str) -> Axis {
    Axis { column: column.into(), label: label.into() }
}

fn time_axis() -> Axis {
    axis("t_s", "time (s)")
}

fn panel(title: &str, file: &str, style: &str, x: Axis, y: Vec<Axis>) -> Panel {
    Panel { title: title.into(), file: file.into(), style: style.into(), x, y, group_by: None }
}

/// Write the columnar files for `kind` plus `plot_<kind>.json` into `dir`.
/// Returns the data files followed by the manifest.
pub fn emit_plotdata(source: PlotSource<'_>, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>> {
    let mismatch = || Error::KindMismatch { kind: kind.to_string(), result: source.name().to_string() };
    let mut written = Vec::new();
    let mut intervals = Vec::new();
    let panels = match (source, kind) {
        (PlotSource::Extended(traj), PlotKind::Traces) => {
            let header = ["t_s", "x1_uM", "x2_uM", "x3"].map(String::from);
            let rows = traj.times.iter().zip(&traj.samples).map(|(t, s)| {
                vec![t.to_string(), s[0].to_string(), s[1].to_string(), s[2].to_string()]
            });
            let astro = dir.join("astrocyte.csv");
            write_rows(&astro, &header, rows)?;
            let rows = traj.times.iter().zip(&traj.samples).map(|(t, s)| vec![t.to_string(), s[3].to_string()]);
            let rate = dir.join("firing_rate.csv");
            write_rows(&rate, &["t_s".into(), "x4_Hz".into()], rows)?;
            written.extend([astro, rate]);
            vec![
                panel(
                    "astrocyte",
                    "astrocyte.csv",
                    "line",
                    time_axis(),
                    vec![axis("x1_uM", "IP3 (uM)"), axis("x2_uM", "Ca2+ (uM)"), axis("x3", "open fraction")],
                ),
                panel("firing rate", "firing_rate.csv", "line", time_axis(), vec![axis("x4_Hz", "rate (Hz)")]),
            ]
        }
        (PlotSource::Tripartite(res), PlotKind::Traces) => {
            let traj = &res.trajectory;
            let duration = traj.times.last().copied().unwrap_or(0.0);
            for (file, tag) in [("pre_rate.csv", PRE_SPIKE), ("post_rate.csv", POST_SPIKE)] {
                let path = dir.join(file);
                let rows = binned_rate(&traj.event_times(tag), duration, RATE_BIN_S)
                    .into_iter()
                    .map(|(t, r)| vec![t.to_string(), r.to_string()]);
                write_rows(&path, &["t_s".into(), "rate_Hz".into()], rows)?;
                written.push(path);
            }
            let path = dir.join("astro_x2.csv");
            let rows = traj.times.iter().zip(&traj.samples).map(|(t, s)| vec![t.to_string(), s[4].to_string()]);
            write_rows(&path, &["t_s".into(), "x2_uM".into()], rows)?;
            written.insert(1, path);
            vec![
                panel("presynaptic", "pre_rate.csv", "line", time_axis(), vec![axis("rate_Hz", "rate (Hz)")]),
                panel("astrocyte", "astro_x2.csv", "line", time_axis(), vec![axis("x2_uM", "Ca2+ (uM)")]),
                panel("postsynaptic", "post_rate.csv", "line", time_axis(), vec![axis("rate_Hz", "rate (Hz)")]),
            ]
        }
        (PlotSource::Network(raster), PlotKind::Raster) => {
            let path = dir.join("raster.csv");
            let rows = raster.spikes.iter().map(|s| {
                vec![s.time.to_string(), s.neuron.to_string(), raster.groups[s.neuron].label().to_string()]
            });
            write_rows(&path, &["t_s".into(), "neuron_id".into(), "group".into()], rows)?;
            written.push(path);
            intervals = raster.phases.iter().map(|p| (p.name.clone(), p.start, p.end)).collect();
            let mut p = panel("raster", "raster.csv", "scatter", time_axis(), vec![axis("neuron_id", "neuron")]);
            p.group_by = Some("group".into());
            vec![p]
        }
        (PlotSource::Network(raster), PlotKind::Rates) => {
            let path = dir.join("rates.csv");
            let rates = phase_rates(raster, RATE_FLOOR_HZ)?;
            let header = ["window", "t0_s", "t1_s", "target_Hz", "non_target_Hz", "separation_ratio"].map(String::from);
            let mut windows: Vec<_> = rates.into_iter().collect();
            windows.sort_by(|a, b| a.1.t0.total_cmp(&b.1.t0).then(a.1.t1.total_cmp(&b.1.t1)));
            let rows = windows.iter().map(|(name, r)| {
                vec![
                    name.clone(),
                    r.t0.to_string(),
                    r.t1.to_string(),
                    r.rate(crate::network::Group::Target).to_string(),
                    r.rate(crate::network::Group::NonTarget).to_string(),
                    r.separation_ratio.0.to_string(),
                ]
            });
            write_rows(&path, &header, rows)?;
            written.push(path);
            vec![panel(
                "group rates",
                "rates.csv",
                "bar",
                axis("window", "window"),
                vec![axis("target_Hz", "target (Hz)"), axis("non_target_Hz", "non-target (Hz)")],
            )]
        }
        _ => return Err(mismatch()),
    };
    let manifest = PlotManifest { kind, source: source.name().into(), panels, intervals };
    let path = dir.join(format!("plot_{kind}.json"));
    write_json(&manifest, &path)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Event, StateVector};

    fn ten_samples() -> Trajectory {
        Trajectory {
            dt: 0.1,
            stride: 1,
            labels: vec!["y_uM".into()],
            times: (0..10).map(|k| k as f64 * 0.1).collect(),
            samples: (0..10).map(|k| StateVector::from([1.0 / (k as f64 + 3.0)])).collect(),
            events: vec![Event { time: 0.3, tag: "reset" }],
        }
    }

    #[test]
    fn stride_controls_line_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        export_timeseries(&ten_samples(), &p, 1).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 11);
        export_timeseries(&ten_samples(), &p, 2).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 6);
        let ev = fs::read_to_string(dir.path().join("ts_events.csv")).unwrap();
        assert_eq!(ev, "time_s,event\n0.3,reset\n");
        assert!(export_timeseries(&ten_samples(), &p, 0).is_err());
    }

    #[test]
    fn values_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        let traj = ten_samples();
        export_timeseries(&traj, &p, 1).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        for (line, s) in text.lines().skip(1).zip(&traj.samples) {
            let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(v, s[0]);
        }
    }

    #[test]
    fn binned_rate_counts() {
        let r = binned_rate(&[0.01, 0.02, 0.15, 0.3], 0.3, 0.1);
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].1, 20.0);
        assert_eq!(r[1].1, 10.0);
        assert_eq!(r[2].1, 10.0);
    }

    #[test]
    fn unwritable_path_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = export_timeseries(&ten_samples(), &blocker.join("ts.csv"), 1).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn mismatched_kind() {
        let dir = tempfile::tempdir().unwrap();
        let traj = ten_samples();
        let err = emit_plotdata(PlotSource::Extended(&traj), PlotKind::Raster, dir.path()).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("rates".parse::<PlotKind>().unwrap(), PlotKind::Rates);
        assert!("bars".parse::<PlotKind>().is_err());
    }
}
