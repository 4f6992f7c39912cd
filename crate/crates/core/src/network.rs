//! Dual-layer neuron/astrocyte network for the working-memory protocol.
//!
//! Neurons sit on a square grid and form distance-dependent random synapses.
//! Astrocytes sit on a half-resolution grid, each owning the 2×2 block of
//! neurons beneath it, and exchange IP₃ and Ca²⁺ through gap junctions with
//! their 4-neighbourhood. A run applies stimulation, an input-free delay, and
//! an optional noisy recall cue, and records spikes and astrocytic Ca²⁺.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{Rk4Workspace, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::stability::{ultimate_bound, BoundTriple};
use crate::tripartite::{
    apply_spike_reset, astrocyte_derivative, j_glu, neuron_derivative, synaptic_activation, AstrocyteParams,
    AstrocyteState, IAstroMode, JGluMode, NeuronParams, NeuronState, NEURON_MS_PER_S, RESTING_ASTROCYTE,
};

/// Independent RNG stream derived from the top-level seed and a stream name.
pub fn named_stream(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a keeps the stream id stable across platforms and releases.
    let id = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Chebyshev,
}

impl DistanceMetric {
    fn distance(self, a: (usize, usize), b: (usize, usize)) -> f64 {
        let dr = a.0.abs_diff(b.0) as f64;
        let dc = a.1.abs_diff(b.1) as f64;
        match self {
            DistanceMetric::Euclidean => (dr * dr + dc * dc).sqrt(),
            DistanceMetric::Chebyshev => dr.max(dc),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    pub n_neurons: usize,
    pub n_astrocytes: usize,
    /// Outgoing synapses drawn per neuron.
    pub synapses_per_neuron: usize,
    /// Length scale of the exp(-r/λ) connection profile, in grid units.
    pub lambda: f64,
    pub gap_junction_min: usize,
    pub gap_junction_max: usize,
    /// Excitatory-to-inhibitory ratio.
    pub ei_ratio: f64,
    pub distance: DistanceMetric,
    pub seed: u64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            n_neurons: 1296,
            n_astrocytes: 324,
            synapses_per_neuron: 28,
            lambda: 5.0,
            gap_junction_min: 2,
            gap_junction_max: 4,
            ei_ratio: 4.0,
            distance: DistanceMetric::Euclidean,
            seed: 0,
        }
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

impl NetworkParams {
    pub fn neuron_side(&self) -> Result<usize> {
        exact_sqrt(self.n_neurons)
            .ok_or_else(|| Error::invalid("network.n_neurons", format!("{} is not a perfect square", self.n_neurons)))
    }

    pub fn validate(&self) -> Result<()> {
        let side = self.neuron_side()?;
        let astro_side = exact_sqrt(self.n_astrocytes).ok_or_else(|| {
            Error::invalid("network.n_astrocytes", format!("{} is not a perfect square", self.n_astrocytes))
        })?;
        if self.n_neurons != 4 * self.n_astrocytes || side != 2 * astro_side {
            return Err(Error::invalid(
                "network.n_neurons",
                format!("must equal 4 x n_astrocytes ({} vs {})", self.n_neurons, self.n_astrocytes),
            ));
        }
        if astro_side < 2 {
            return Err(Error::invalid("network.n_astrocytes", "need at least a 2x2 astrocyte grid"));
        }
        if self.synapses_per_neuron >= self.n_neurons {
            return Err(Error::invalid("network.synapses_per_neuron", "must be smaller than n_neurons"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("network.lambda", "must be positive"));
        }
        if !(self.ei_ratio > 0.0) {
            return Err(Error::invalid("network.ei_ratio", "must be positive"));
        }
        let min_degree = 2;
        let max_degree = if astro_side >= 3 { 4 } else { 2 };
        if self.gap_junction_min > min_degree || self.gap_junction_max < max_degree {
            return Err(Error::invalid(
                "network.gap_junction_min",
                format!(
                    "grid adjacency yields degrees {min_degree}..={max_degree}, outside [{}, {}]",
                    self.gap_junction_min, self.gap_junction_max
                ),
            ));
        }
        Ok(())
    }

    pub fn n_inhibitory(&self) -> usize {
        (self.n_neurons as f64 / (self.ei_ratio + 1.0)).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Synapse {
    pub pre: usize,
    pub post: usize,
    pub excitatory: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkTopology {
    pub side: usize,
    pub astro_side: usize,
    /// (row, col) of every neuron; index = row * side + col.
    pub neuron_positions: Vec<(usize, usize)>,
    pub excitatory: Vec<bool>,
    /// Sorted by (pre, post).
    pub synapses: Vec<Synapse>,
    /// The four neurons owned by each astrocyte.
    pub astro_domains: Vec<[usize; 4]>,
    /// Owning astrocyte of each neuron.
    pub neuron_astrocyte: Vec<usize>,
    /// Undirected, stored as (i, j) with i < j.
    pub gap_junctions: Vec<(usize, usize)>,
    /// Gap-junction neighbours of every astrocyte.
    pub astro_neighbors: Vec<Vec<usize>>,
}

impl NetworkTopology {
    pub fn n_neurons(&self) -> usize {
        self.excitatory.len()
    }

    pub fn n_astrocytes(&self) -> usize {
        self.astro_domains.len()
    }

    pub fn gap_degree(&self, astrocyte: usize) -> usize {
        self.astro_neighbors[astrocyte].len()
    }
}

/// Build the dual-layer topology; fully determined by `p.seed`.
pub fn build_network(p: &NetworkParams) -> Result<NetworkTopology> {
    p.validate()?;
    let side = p.neuron_side()?;
    let astro_side = side / 2;
    let n = p.n_neurons;
    let mut rng = named_stream(p.seed, "topology");

    let positions: Vec<(usize, usize)> = (0..n).map(|i| (i / side, i % side)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut excitatory = vec![true; n];
    for &i in &order[..p.n_inhibitory()] {
        excitatory[i] = false;
    }

    let mut synapses = Vec::with_capacity(n * p.synapses_per_neuron);
    let mut chosen = vec![false; n];
    let mut targets = Vec::with_capacity(p.synapses_per_neuron);
    for pre in 0..n {
        let weights: Vec<f64> = (0..n)
            .map(|j| if j == pre { 0.0 } else { (-p.distance.distance(positions[pre], positions[j]) / p.lambda).exp() })
            .collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::invalid("network.lambda", format!("cannot build connection profile: {e}")))?;
        targets.clear();
        while targets.len() < p.synapses_per_neuron {
            let post = dist.sample(&mut rng);
            if !chosen[post] {
                chosen[post] = true;
                targets.push(post);
            }
        }
        targets.sort_unstable();
        for &post in &targets {
            chosen[post] = false;
            synapses.push(Synapse { pre, post, excitatory: excitatory[pre] });
        }
    }

    let mut astro_domains = Vec::with_capacity(p.n_astrocytes);
    let mut neuron_astrocyte = vec![0; n];
    for ar in 0..astro_side {
        for ac in 0..astro_side {
            let a = ar * astro_side + ac;
            let (r0, c0) = (2 * ar, 2 * ac);
            let domain = [r0 * side + c0, r0 * side + c0 + 1, (r0 + 1) * side + c0, (r0 + 1) * side + c0 + 1];
            for &i in &domain {
                neuron_astrocyte[i] = a;
            }
            astro_domains.push(domain);
        }
    }

    let mut gap_junctions = Vec::new();
    let mut astro_neighbors = vec![Vec::new(); p.n_astrocytes];
    for ar in 0..astro_side {
        for ac in 0..astro_side {
            let a = ar * astro_side + ac;
            if ac + 1 < astro_side {
                gap_junctions.push((a, a + 1));
            }
            if ar + 1 < astro_side {
                gap_junctions.push((a, a + astro_side));
            }
        }
    }
    for &(i, j) in &gap_junctions {
        astro_neighbors[i].push(j);
        astro_neighbors[j].push(i);
    }
    for nb in &mut astro_neighbors {
        nb.sort_unstable();
    }

    Ok(NetworkTopology {
        side,
        astro_side,
        neuron_positions: positions,
        excitatory,
        synapses,
        astro_domains,
        neuron_astrocyte,
        gap_junctions,
        astro_neighbors,
    })
}

/// Diffusive gap-junction exchange `(Δẋ₁, Δẋ₂)` for every astrocyte.
pub fn astro_coupling_terms(
    states: &[AstrocyteState],
    topology: &NetworkTopology,
    p: &AstrocyteParams,
) -> Result<Vec<(f64, f64)>> {
    if states.len() != topology.n_astrocytes() {
        return Err(Error::Precondition(format!(
            "{} astrocyte states for {} astrocytes",
            states.len(),
            topology.n_astrocytes()
        )));
    }
    Ok(topology
        .astro_neighbors
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let (mut d1, mut d2) = (0.0, 0.0);
            for &j in nbrs {
                d1 += states[j].x1 - states[i].x1;
                d2 += states[j].x2 - states[i].x2;
            }
            (p.d_ip3 * d1, p.d_ca * d2)
        })
        .collect())
}

/// Rectangular patch of the neuron grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPatch {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TargetPatch {
    pub fn indices(&self, side: usize) -> Vec<usize> {
        (self.row..self.row + self.rows)
            .flat_map(|r| (self.col..self.col + self.cols).map(move |c| r * side + c))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    /// s
    pub t_stim: f64,
    /// s
    pub t_delay: f64,
    /// s
    pub t_recall: f64,
    pub target: TargetPatch,
    /// Current into target neurons during stimulation, μA.
    pub stim_amplitude: f64,
    /// Mean recall current into every neuron, μA.
    pub cue_amplitude: f64,
    /// Standard deviation of the per-step Gaussian cue noise, μA.
    pub cue_noise_sd: f64,
    /// Whether the recall phase applies the cue at all.
    pub apply_cue: bool,
    /// Gliotransmission strength in [0, 1].
    pub eta: f64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            t_stim: 0.2,
            t_delay: 2.8,
            t_recall: 1.0,
            target: TargetPatch { row: 16, col: 16, rows: 6, cols: 6 },
            stim_amplitude: 100.0,
            cue_amplitude: 2.5,
            cue_noise_sd: 5.0,
            apply_cue: true,
            eta: 0.25,
        }
    }
}

/// Gliotransmission presets of the working-memory experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WmPreset {
    /// Full gliotransmission, no recall cue.
    Strong,
    /// 25 % gliotransmission with a noisy recall cue.
    Weak,
    /// No gliotransmission with a noisy recall cue.
    None,
}

impl WmPreset {
    pub fn protocol(self) -> ProtocolSpec {
        let base = ProtocolSpec::default();
        match self {
            WmPreset::Strong => ProtocolSpec { eta: 1.0, apply_cue: false, ..base },
            WmPreset::Weak => ProtocolSpec { eta: 0.25, ..base },
            WmPreset::None => ProtocolSpec { eta: 0.0, ..base },
        }
    }
}

impl ProtocolSpec {
    pub fn duration(&self) -> f64 {
        self.t_stim + self.t_delay + self.t_recall
    }

    pub fn phases(&self) -> Vec<Phase> {
        let a = self.t_stim;
        let b = a + self.t_delay;
        vec![
            Phase { name: "stim".into(), start: 0.0, end: a },
            Phase { name: "delay".into(), start: a, end: b },
            Phase { name: "recall".into(), start: b, end: b + self.t_recall },
        ]
    }

    pub fn validate(&self, side: usize) -> Result<()> {
        for (k, v) in [("t_stim", self.t_stim), ("t_delay", self.t_delay), ("t_recall", self.t_recall)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("protocol.{k}"), "must be positive"));
            }
        }
        let t = &self.target;
        if t.rows == 0 || t.cols == 0 || t.row + t.rows > side || t.col + t.cols > side {
            return Err(Error::invalid("protocol.target", format!("patch {t:?} must be nonempty and inside the {side}x{side} grid")));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("protocol.eta", "must lie in [0, 1]"));
        }
        if !(self.cue_noise_sd >= 0.0) {
            return Err(Error::invalid("protocol.cue_noise_sd", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub start: f64,
    pub end: f64,
}

/// Integration settings and cell parameters for a network run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub dt: f64,
    pub neuron: NeuronParams,
    pub astrocyte: AstrocyteParams,
    pub j_glu_mode: JGluMode,
    pub i_astro_mode: IAstroMode,
    /// Inhibitory neurons also gate their astrocyte's IP₃ production.
    pub inhibitory_gates_astrocyte: bool,
    /// Steps between stored astrocyte Ca²⁺ samples.
    pub trace_stride: usize,
    /// Seed of the recall-noise stream.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt: DEFAULT_DT,
            neuron: NeuronParams::default(),
            astrocyte: AstrocyteParams::default(),
            j_glu_mode: JGluMode::Sharp,
            i_astro_mode: IAstroMode::Exact,
            inhibitory_gates_astrocyte: false,
            trace_stride: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Target,
    NonTarget,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::Target => "target",
            Group::NonTarget => "non_target",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Spike {
    pub neuron: usize,
    pub time: f64,
}

/// Post-hoc check of every astrocyte against positivity and Ω.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AstroAudit {
    pub bound: BoundTriple,
    pub min_state_value: f64,
    pub max_x1: f64,
    pub max_x2: f64,
    pub max_x3: f64,
    pub positive: bool,
    pub within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RasterData {
    pub duration: f64,
    pub dt: f64,
    pub phases: Vec<Phase>,
    /// In time order; ties ordered by neuron index.
    pub spikes: Vec<Spike>,
    pub groups: Vec<Group>,
    pub trace_times: Vec<f64>,
    /// `astro_x2[k][a]`: Ca²⁺ of astrocyte `a` at `trace_times[k]`, μM.
    pub astro_x2: Vec<Vec<f64>>,
    pub audit: AstroAudit,
}

impl RasterData {
    pub fn phase(&self, name: &str) -> Option<&Phase> {
        self.phases.iter().find(|p| p.name == name)
    }
}

/// Frozen per-step drive of one neuron.
#[derive(Clone, Copy, Debug, Default)]
struct Drive {
    current: f64,
    g_exc: f64,
    g_inh: f64,
}

#[inline]
fn neuron_rhs(s: &NeuronState, drive: &Drive, p: &NeuronParams) -> [f64; 3] {
    let i = drive.current + drive.g_exc * (p.e_syn_exc - s.v) + drive.g_inh * (p.e_syn_inh - s.v);
    let d = neuron_derivative(s, i, p);
    [NEURON_MS_PER_S * d.dv, NEURON_MS_PER_S * d.du, d.dg]
}

#[inline]
fn neuron_rk4(s: &NeuronState, drive: &Drive, p: &NeuronParams, dt: f64) -> NeuronState {
    let at = |s: &NeuronState, k: &[f64; 3], h: f64| NeuronState { v: s.v + h * k[0], u: s.u + h * k[1], g: s.g + h * k[2] };
    let k1 = neuron_rhs(s, drive, p);
    let k2 = neuron_rhs(&at(s, &k1, 0.5 * dt), drive, p);
    let k3 = neuron_rhs(&at(s, &k2, 0.5 * dt), drive, p);
    let k4 = neuron_rhs(&at(s, &k3, dt), drive, p);
    let w = dt / 6.0;
    NeuronState {
        v: s.v + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        u: s.u + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        g: s.g + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    }
}

/// Run stimulation → delay → recall on the network.
///
/// Per step: (1) RK4 of every neuron with frozen drive, (2) spike resets,
/// (3) synaptic conductances and per-astrocyte glutamate gating from the
/// end-of-step state, (4) RK4 of all astrocytes with gap-junction coupling,
/// (5) astrocytic currents for the next step.
pub fn run_protocol(topology: &NetworkTopology, protocol: &ProtocolSpec, opts: &RunOptions) -> Result<RasterData> {
    protocol.validate(topology.side)?;
    opts.neuron.validate("neuron")?;
    opts.astrocyte.validate("astrocyte")?;
    if !(opts.dt > 0.0) || opts.trace_stride == 0 {
        return Err(Error::invalid("dt", "dt must be positive and trace_stride >= 1"));
    }
    let n = topology.n_neurons();
    let na = topology.n_astrocytes();
    let np = &opts.neuron;
    let ap = &opts.astrocyte;
    let dt = opts.dt;

    let mut groups = vec![Group::NonTarget; n];
    let target = protocol.target.indices(topology.side);
    for &i in &target {
        groups[i] = Group::Target;
    }

    // In-edges grouped by postsynaptic neuron.
    let mut in_offsets = vec![0usize; n + 1];
    for s in &topology.synapses {
        in_offsets[s.post + 1] += 1;
    }
    for i in 0..n {
        in_offsets[i + 1] += in_offsets[i];
    }
    let mut in_pre = vec![0usize; topology.synapses.len()];
    let mut fill = in_offsets.clone();
    for s in &topology.synapses {
        in_pre[fill[s.post]] = s.pre;
        fill[s.post] += 1;
    }

    let gating: Vec<Vec<usize>> = topology
        .astro_domains
        .iter()
        .map(|d| d.iter().copied().filter(|&i| topology.excitatory[i] || opts.inhibitory_gates_astrocyte).collect())
        .collect();

    let rest = np.resting_state();
    let mut neurons = vec![rest; n];
    let mut drives = vec![Drive::default(); n];
    let mut activation = vec![0.0; n];
    let mut astro: Vec<f64> = (0..na).flat_map(|_| RESTING_ASTROCYTE.to_array()).collect();
    let mut astro_current = vec![0.0; na];
    let mut j_input = vec![0.0; na];
    let mut astro_ws = Rk4Workspace::new(3 * na);

    let bound = ultimate_bound(ap, ap.a_glu);
    let mut audit = AstroAudit {
        bound,
        min_state_value: f64::INFINITY,
        max_x1: f64::NEG_INFINITY,
        max_x2: f64::NEG_INFINITY,
        max_x3: f64::NEG_INFINITY,
        positive: true,
        within_bound: true,
    };

    let phases = protocol.phases();
    let duration = protocol.duration();
    let n_steps = (duration / dt).round() as usize;
    let stim_end = phases[0].end;
    let recall_start = phases[2].start;

    let mut noise_rng = named_stream(opts.seed, "noise");
    let noise = Normal::new(0.0, protocol.cue_noise_sd).map_err(|e| Error::invalid("protocol.cue_noise_sd", e.to_string()))?;

    let mut spikes = Vec::new();
    let mut trace_times = Vec::with_capacity(n_steps / opts.trace_stride + 1);
    let mut astro_x2 = Vec::with_capacity(n_steps / opts.trace_stride + 1);
    trace_times.push(0.0);
    astro_x2.push((0..na).map(|a| astro[3 * a + 1]).collect::<Vec<_>>());

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let phase = if t < stim_end {
            0
        } else if t < recall_start {
            1
        } else {
            2
        };

        // External and astrocytic currents for this step.
        for i in 0..n {
            let mut current = protocol.eta * astro_current[topology.neuron_astrocyte[i]];
            if phase == 0 && groups[i] == Group::Target {
                current += protocol.stim_amplitude;
            }
            if phase == 2 && protocol.apply_cue {
                current += protocol.cue_amplitude + noise.sample(&mut noise_rng);
            }
            drives[i].current = current;
        }

        // (1) + (2)
        let t_next = (step + 1) as f64 * dt;
        for i in 0..n {
            let next = neuron_rk4(&neurons[i], &drives[i], np, dt);
            if !(next.v.is_finite() && next.u.is_finite() && next.g.is_finite()) {
                return Err(Error::Network {
                    phase: phases[phase].name.clone(),
                    step,
                    source: Box::new(Error::Integration { t, step, index: 3 * i }),
                });
            }
            // Activation uses the pre-reset potential so every spike is transmitted.
            activation[i] = synaptic_activation(next.v, np.k_syn);
            let (after, spiked) = apply_spike_reset(&next, np);
            if spiked {
                spikes.push(Spike { neuron: i, time: t_next });
            }
            neurons[i] = after;
        }

        // (3)
        for post in 0..n {
            let (mut ge, mut gi) = (0.0, 0.0);
            for &pre in &in_pre[in_offsets[post]..in_offsets[post + 1]] {
                if topology.excitatory[pre] {
                    ge += activation[pre];
                } else {
                    gi += activation[pre];
                }
            }
            drives[post].g_exc = np.eta_syn * ge;
            drives[post].g_inh = np.eta_syn * gi;
        }
        for (a, owned) in gating.iter().enumerate() {
            j_input[a] = owned.iter().map(|&i| j_glu(neurons[i].g, ap, opts.j_glu_mode)).fold(0.0, f64::max);
        }

        // (4)
        let neighbors = &topology.astro_neighbors;
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            for a in 0..na {
                let s = AstrocyteState::from_slice(&y[3 * a..3 * a + 3]);
                let d = astrocyte_derivative(&s, j_input[a], ap);
                let (mut c1, mut c2) = (0.0, 0.0);
                for &b in &neighbors[a] {
                    c1 += y[3 * b] - s.x1;
                    c2 += y[3 * b + 1] - s.x2;
                }
                dy[3 * a] = d.x1 + ap.d_ip3 * c1;
                dy[3 * a + 1] = d.x2 + ap.d_ca * c2;
                dy[3 * a + 2] = d.x3;
            }
        };
        astro_ws.step(&mut astro, &mut rhs, t, dt).map_err(|index| Error::Network {
            phase: phases[phase].name.clone(),
            step,
            source: Box::new(Error::Integration { t, step, index }),
        })?;

        // (5)
        for a in 0..na {
            let s = AstrocyteState::from_slice(&astro[3 * a..3 * a + 3]);
            astro_current[a] = opts.i_astro_mode.eval(s.x2);
            audit.min_state_value = audit.min_state_value.min(s.x1.min(s.x2).min(s.x3));
            audit.max_x1 = audit.max_x1.max(s.x1);
            audit.max_x2 = audit.max_x2.max(s.x2);
            audit.max_x3 = audit.max_x3.max(s.x3);
        }
        if (step + 1) % opts.trace_stride == 0 {
            trace_times.push(t_next);
            astro_x2.push((0..na).map(|a| astro[3 * a + 1]).collect());
        }
    }
    audit.positive = audit.min_state_value >= -1e-9;
    audit.within_bound = audit.positive && audit.max_x1 <= bound.mu1 && audit.max_x2 <= bound.mu2 && audit.max_x3 <= bound.x3_max;

    Ok(RasterData { duration, dt, phases, spikes, groups, trace_times, astro_x2, audit })
}

/// Rate added to both groups before dividing, Hz. Sub-hertz differences over
/// windows of a few seconds are single stray spikes, not memory.
pub const RATE_FLOOR_HZ: f64 = 1.0;

/// `(target + floor) / (non_target + floor)`. With a zero floor the ratio is
/// 1 when both groups are silent and +∞ when only the non-target group is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationRatio(pub f64);

impl SeparationRatio {
    pub fn new(target: f64, non_target: f64, floor: f64) -> Self {
        let (t, nt) = (target + floor, non_target + floor);
        SeparationRatio(if t == 0.0 && nt == 0.0 {
            1.0
        } else if nt == 0.0 {
            f64::INFINITY
        } else {
            t / nt
        })
    }
}

impl Serialize for SeparationRatio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    pub t0: f64,
    pub t1: f64,
    /// Mean rate per group, Hz.
    pub group_rates: BTreeMap<String, f64>,
    pub separation_ratio: SeparationRatio,
    pub rate_floor_hz: f64,
    /// Rate of every neuron in the window, Hz.
    #[serde(skip)]
    pub per_neuron: Vec<f64>,
}

impl RateSummary {
    pub fn rate(&self, group: Group) -> f64 {
        self.group_rates.get(group.label()).copied().unwrap_or(0.0)
    }
}

/// Spike count divided by window length and group size, for spikes in
/// `(t0, t1]`. `floor_hz` regularizes the separation ratio only.
pub fn compute_rates(spikes: &[Spike], groups: &[Group], t0: f64, t1: f64, floor_hz: f64) -> Result<RateSummary> {
    if !(t1 > t0) {
        return Err(Error::EmptyWindow { t0, t1 });
    }
    let window = t1 - t0;
    let mut counts = vec![0usize; groups.len()];
    for s in spikes {
        if s.time > t0 && s.time <= t1 && s.neuron < counts.len() {
            counts[s.neuron] += 1;
        }
    }
    let per_neuron: Vec<f64> = counts.iter().map(|&c| c as f64 / window).collect();
    let mut sums: BTreeMap<Group, (f64, usize)> = BTreeMap::new();
    for (rate, g) in per_neuron.iter().zip(groups) {
        let e = sums.entry(*g).or_default();
        e.0 += rate;
        e.1 += 1;
    }
    let group_rates: BTreeMap<String, f64> =
        sums.iter().map(|(g, (sum, count))| (g.label().to_string(), sum / *count as f64)).collect();
    let target = group_rates.get(Group::Target.label()).copied().unwrap_or(0.0);
    let non_target = group_rates.get(Group::NonTarget.label()).copied().unwrap_or(0.0);
    Ok(RateSummary { t0, t1, group_rates, separation_ratio: SeparationRatio::new(target, non_target, floor_hz), rate_floor_hz: floor_hz, per_neuron })
}

/// Rates for each protocol phase plus the combined delay+recall window.
pub fn phase_rates(raster: &RasterData, floor_hz: f64) -> Result<BTreeMap<String, RateSummary>> {
    let mut out = BTreeMap::new();
    for ph in &raster.phases {
        out.insert(ph.name.clone(), compute_rates(&raster.spikes, &raster.groups, ph.start, ph.end, floor_hz)?);
    }
    if let (Some(d), Some(r)) = (raster.phase("delay"), raster.phase("recall")) {
        out.insert("delay+recall".into(), compute_rates(&raster.spikes, &raster.groups, d.start, r.end, floor_hz)?);
    }
    Ok(out)
}
