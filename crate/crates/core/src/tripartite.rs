//! Model equations of the tripartite synapse and the composed
//! presynaptic neuron / astrocyte / postsynaptic neuron simulation.
//!
//! Canonical units: concentrations in μM, time in seconds, potentials in mV,
//! currents in μA. The Izhikevich membrane equations keep their native
//! millisecond time base; [`NEURON_MS_PER_S`] converts them when a neuron is
//! integrated alongside the astrocyte on a seconds clock.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, EventTag, SimOptions, StateVector, Trajectory, DEFAULT_DT};
use crate::error::{Error, Result};

/// Membrane equations are written per millisecond; the simulation clock is in seconds.
pub const NEURON_MS_PER_S: f64 = 1000.0;

/// Izhikevich neuron with glutamate release, fast-spiking parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronParams {
    pub a: f64,
    pub b: f64,
    /// Reset potential, mV.
    pub c: f64,
    pub d: f64,
    /// Glutamate clearance rate, 1/s.
    pub alpha_glu: f64,
    /// Glutamate release rate while spiking, μM/s.
    pub k_glu: f64,
    /// mV
    pub spike_threshold: f64,
    pub eta_syn: f64,
    /// Excitatory reversal potential, mV.
    pub e_syn_exc: f64,
    /// Inhibitory reversal potential, mV.
    pub e_syn_inh: f64,
    /// Sigmoid slope of presynaptic activation, mV.
    pub k_syn: f64,
    pub is_excitatory: bool,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            a: 0.1,
            b: 0.2,
            c: -65.0,
            d: 2.0,
            alpha_glu: 10.0,
            k_glu: 600.0,
            spike_threshold: 30.0,
            eta_syn: 0.025,
            e_syn_exc: 0.0,
            e_syn_inh: -90.0,
            k_syn: 0.2,
            is_excitatory: true,
        }
    }
}

impl NeuronParams {
    pub fn inhibitory() -> Self {
        NeuronParams { is_excitatory: false, ..Default::default() }
    }

    /// Reversal potential of synapses this neuron makes.
    pub fn reversal(&self) -> f64 {
        if self.is_excitatory {
            self.e_syn_exc
        } else {
            self.e_syn_inh
        }
    }

    /// Resting state (V, U = bV) for zero input, the stable root of
    /// 0.04V² + (5 - b)V + 140 = 0.
    pub fn resting_state(&self) -> NeuronState {
        let lin = 5.0 - self.b;
        let disc = (lin * lin - 4.0 * 0.04 * 140.0).max(0.0);
        let v = (-lin - disc.sqrt()) / (2.0 * 0.04);
        NeuronState { v, u: self.b * v, g: 0.0 }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, value) in [
            ("alpha_glu", self.alpha_glu),
            ("k_glu", self.k_glu),
            ("k_syn", self.k_syn),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::invalid(format!("{prefix}.{name}"), format!("must be positive, got {value}")));
            }
        }
        for (name, value) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d), ("eta_syn", self.eta_syn)] {
            if !value.is_finite() {
                return Err(Error::invalid(format!("{prefix}.{name}"), "must be finite"));
            }
        }
        Ok(())
    }
}

/// Membrane potential (mV), recovery variable, and cleft glutamate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: f64,
    pub u: f64,
    pub g: f64,
}

/// Time derivative of a [`NeuronState`]. `dv` and `du` are per millisecond,
/// `dg` is per second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronDerivative {
    pub dv: f64,
    pub du: f64,
    pub dg: f64,
}

#[inline]
fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn neuron_derivative(s: &NeuronState, i_total: f64, p: &NeuronParams) -> NeuronDerivative {
    NeuronDerivative {
        dv: 0.04 * s.v * s.v + 5.0 * s.v - s.u + 140.0 + i_total,
        du: p.a * (p.b * s.v - s.u),
        dg: -p.alpha_glu * s.g + p.k_glu * heaviside(s.v - p.spike_threshold),
    }
}

/// Reset V to `c` and bump U by `d` once V reaches the spike threshold.
#[inline]
pub fn apply_spike_reset(s: &NeuronState, p: &NeuronParams) -> (NeuronState, bool) {
    if s.v >= p.spike_threshold {
        (NeuronState { v: p.c, u: s.u + p.d, g: s.g }, true)
    } else {
        (*s, false)
    }
}

/// Presynaptic activation 1 / (1 + exp(-V_pre / k_syn)).
#[inline]
pub fn synaptic_activation(v_pre: f64, k_syn: f64) -> f64 {
    1.0 / (1.0 + (-v_pre / k_syn).exp())
}

/// Sigmoidal synaptic current into `post`, reversal chosen by the presynaptic type.
#[inline]
pub fn i_syn(pre: &NeuronState, post: &NeuronState, p_pre: &NeuronParams) -> f64 {
    p_pre.eta_syn * (p_pre.reversal() - post.v) * synaptic_activation(pre.v, p_pre.k_syn)
}

/// Li-Rinzel family astrocyte constants, normalized to μM and seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AstrocyteParams {
    /// IP₃ relaxation time, s.
    pub tau_ip3: f64,
    /// Resting IP₃, μM.
    pub ip3_star: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub v6: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub c0: f64,
    pub c1: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d5: f64,
    pub a2: f64,
    pub alpha: f64,
    /// Maximal glutamate-induced IP₃ production, μM/s.
    pub a_glu: f64,
    /// Glutamate threshold for IP₃ production (dimensionless).
    pub g_thr: f64,
    /// Gap-junction Ca²⁺ diffusion rate, 1/s.
    pub d_ca: f64,
    /// Gap-junction IP₃ diffusion rate, 1/s.
    pub d_ip3: f64,
}

impl Default for AstrocyteParams {
    fn default() -> Self {
        AstrocyteParams {
            tau_ip3: 1.0 / 0.14,
            ip3_star: 0.16,
            v1: 6.0,
            v2: 0.11,
            v3: 2.2,
            v4: 0.3,
            v6: 0.2,
            k1: 0.5,
            k2: 1.0,
            k3: 0.1,
            k4: 1.1,
            c0: 2.0,
            c1: 0.185,
            d1: 0.13,
            d2: 1.049,
            // 943.4 nM and 82 nM
            d3: 0.9434,
            d5: 0.082,
            a2: 0.14,
            alpha: 0.8,
            a_glu: 5.0,
            g_thr: 0.7,
            d_ca: 0.05,
            d_ip3: 0.1,
        }
    }
}

impl AstrocyteParams {
    fn named_fields(&self) -> [(&'static str, f64); 23] {
        [
            ("tau_ip3", self.tau_ip3),
            ("ip3_star", self.ip3_star),
            ("v1", self.v1),
            ("v2", self.v2),
            ("v3", self.v3),
            ("v4", self.v4),
            ("v6", self.v6),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("c0", self.c0),
            ("c1", self.c1),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d5", self.d5),
            ("a2", self.a2),
            ("alpha", self.alpha),
            ("a_glu", self.a_glu),
            ("g_thr", self.g_thr),
            ("d_ca", self.d_ca),
            ("d_ip3", self.d_ip3),
        ]
    }

    /// Checks strict positivity and `alpha ∈ (0, 1)`. Returns warnings for
    /// conditions that are legal but void the closed-form Ca²⁺ bound.
    pub fn validate(&self, prefix: &str) -> Result<Vec<String>> {
        for (name, value) in self.named_fields() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::invalid(format!("{prefix}.{name}"), format!("must be positive, got {value}")));
            }
        }
        if self.alpha >= 1.0 {
            return Err(Error::invalid(format!("{prefix}.alpha"), format!("must lie in (0, 1), got {}", self.alpha)));
        }
        let mut warnings = Vec::new();
        if self.v1 <= self.v2 {
            warnings.push(format!(
                "{prefix}: v1 = {} <= v2 = {}; the Ca2+ ultimate bound mu2 is not guaranteed positive",
                self.v1, self.v2
            ));
        }
        Ok(warnings)
    }
}

/// IP₃ (μM), Ca²⁺ (μM), and the active IP₃-receptor fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AstrocyteState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl AstrocyteState {
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        AstrocyteState { x1, x2, x3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        AstrocyteState { x1: s[0], x2: s[1], x3: s[2] }
    }

    pub fn norm(&self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3).sqrt()
    }
}

/// Rounded unforced equilibrium of the default astrocyte, used as the
/// default initial condition of every simulation.
pub const RESTING_ASTROCYTE: AstrocyteState = AstrocyteState::new(0.6858, 0.06612, 0.8882);

/// Glutamate-to-IP₃ gating: a hard threshold or a tanh-smoothed one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum JGluMode {
    Sharp,
    Smooth { k_s: f64 },
}

impl Default for JGluMode {
    fn default() -> Self {
        JGluMode::Sharp
    }
}

impl JGluMode {
    pub const DEFAULT_SMOOTH_WIDTH: f64 = 0.05;

    pub fn smooth() -> Self {
        JGluMode::Smooth { k_s: Self::DEFAULT_SMOOTH_WIDTH }
    }
}

/// IP₃ production flux (μM/s) for cleft glutamate `g`; always in `[0, A_glu]`.
#[inline]
pub fn j_glu(g: f64, p: &AstrocyteParams, mode: JGluMode) -> f64 {
    let raw = match mode {
        JGluMode::Sharp => p.a_glu * heaviside(g - p.g_thr),
        JGluMode::Smooth { k_s } => p.a_glu * 0.5 * (1.0 + ((g - p.g_thr) / k_s).tanh()),
    };
    raw.clamp(0.0, p.a_glu)
}

/// Right-hand side of the three-state astrocyte model with IP₃ input `u` (μM/s).
#[inline]
pub fn astrocyte_derivative(s: &AstrocyteState, u: f64, p: &AstrocyteParams) -> AstrocyteState {
    let AstrocyteState { x1, x2, x3 } = *s;
    let er_gradient = p.c0 / p.c1 - (1.0 + 1.0 / p.c1) * x2;
    let open = x1 * x2 * x3;
    let open3 = open * open * open;
    let denom = (x1 + p.d1).powi(3) * (x2 + p.d5).powi(3);

    let dx1 = (p.ip3_star - x1) / p.tau_ip3 + p.v4 * (x2 + (1.0 - p.alpha) * p.k4) / (x2 + p.k4) + u;
    let dx2 = -p.k1 * x2 + p.c1 * p.v1 * open3 * er_gradient / denom - p.v3 * x2 * x2 / (p.k3 * p.k3 + x2 * x2)
        + p.v6 * x1 * x1 / (p.k2 * p.k2 + x1 * x1)
        + p.c1 * p.v2 * er_gradient;
    let dx3 = p.a2 * (p.d2 * (x1 + p.d1) / (x1 + p.d3) * (1.0 - x3) - x2 * x3);
    AstrocyteState { x1: dx1, x2: dx2, x3: dx3 }
}

/// Gliotransmitter current (μA) from astrocytic Ca²⁺ in μM.
///
/// `y = x2/nM - 196.69`; the current is `2.11 ln y` for `y > 1` and zero
/// otherwise, so the logarithm never sees a non-positive argument.
#[inline]
pub fn i_astro(x2: f64) -> f64 {
    let y = 1000.0 * x2 - 196.69;
    if y > 1.0 {
        2.11 * y.ln()
    } else {
        0.0
    }
}

pub const I_ASTRO_FIT_A: f64 = 6.3611;
pub const I_ASTRO_FIT_B: f64 = 14.682;
pub const I_ASTRO_FIT_C: f64 = -3.3582;
pub const I_ASTRO_FIT_D: f64 = 6.3611;

/// Continuously differentiable tanh fit of [`i_astro`], fitted on x₂ ∈ [0.05, 0.7] μM.
#[inline]
pub fn i_astro_smooth(x2: f64) -> f64 {
    I_ASTRO_FIT_A * (I_ASTRO_FIT_B * x2 + I_ASTRO_FIT_C).tanh() + I_ASTRO_FIT_D
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IAstroMode {
    #[default]
    Exact,
    Smooth,
}

impl IAstroMode {
    #[inline]
    pub fn eval(self, x2: f64) -> f64 {
        match self {
            IAstroMode::Exact => i_astro(x2),
            IAstroMode::Smooth => i_astro_smooth(x2),
        }
    }
}

/// Piecewise-constant input signal, held fixed across each integration step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputProfile {
    Zero,
    Constant { value: f64 },
    /// `amplitude` on `[start, end)`, zero elsewhere.
    Pulse { amplitude: f64, start: f64, end: f64 },
}

impl Default for InputProfile {
    fn default() -> Self {
        InputProfile::Zero
    }
}

impl InputProfile {
    pub fn value_at(&self, t: f64) -> f64 {
        match *self {
            InputProfile::Zero => 0.0,
            InputProfile::Constant { value } => value,
            InputProfile::Pulse { amplitude, start, end } => {
                if t >= start && t < end {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    pub fn max_value(&self) -> f64 {
        match *self {
            InputProfile::Zero => 0.0,
            InputProfile::Constant { value } => value,
            InputProfile::Pulse { amplitude, .. } => amplitude.max(0.0),
        }
    }

    pub fn min_value(&self) -> f64 {
        match *self {
            InputProfile::Zero => 0.0,
            InputProfile::Constant { value } => value,
            InputProfile::Pulse { amplitude, .. } => amplitude.min(0.0),
        }
    }

    /// End of the last nonzero segment, if the profile switches off.
    pub fn end_time(&self) -> Option<f64> {
        match *self {
            InputProfile::Pulse { end, .. } => Some(end),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripartiteConfig {
    /// External current into the presynaptic neuron, μA.
    pub stimulus: InputProfile,
    pub duration: f64,
    pub dt: f64,
    pub stride: usize,
    /// Gliotransmission strength in [0, 1].
    pub eta: f64,
    pub pre: NeuronParams,
    pub post: NeuronParams,
    pub astrocyte: AstrocyteParams,
    pub j_glu_mode: JGluMode,
    pub i_astro_mode: IAstroMode,
    pub astrocyte_init: AstrocyteState,
}

impl Default for TripartiteConfig {
    fn default() -> Self {
        TripartiteConfig {
            stimulus: InputProfile::Pulse { amplitude: 100.0, start: 0.0, end: 0.2 },
            duration: 6.0,
            dt: DEFAULT_DT,
            stride: 10,
            eta: 1.0,
            pre: NeuronParams::default(),
            post: NeuronParams::default(),
            astrocyte: AstrocyteParams::default(),
            j_glu_mode: JGluMode::Sharp,
            i_astro_mode: IAstroMode::Exact,
            astrocyte_init: RESTING_ASTROCYTE,
        }
    }
}

impl TripartiteConfig {
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if let JGluMode::Smooth { k_s } = self.j_glu_mode {
            if !(k_s > 0.0) {
                return Err(Error::invalid("j_glu_mode.k_s", "must be positive"));
            }
        }
        self.pre.validate("pre")?;
        self.post.validate("post")?;
        let s = self.astrocyte_init;
        if !(s.x1 >= 0.0 && s.x2 >= 0.0 && (0.0..=1.0).contains(&s.x3)) {
            return Err(Error::invalid("astrocyte_init", "must lie in the nonnegative orthant with x3 in [0, 1]"));
        }
        self.astrocyte.validate("astrocyte")
    }
}

pub const TRIPARTITE_LABELS: [&str; 9] = [
    "V_pre_mV", "U_pre", "G_pre", "x1_uM", "x2_uM", "x3", "V_post_mV", "U_post", "G_post",
];

pub const PRE_SPIKE: EventTag = "pre_spike";
pub const POST_SPIKE: EventTag = "post_spike";

/// Result of a tripartite run: the 9-state trajectory with spike events of
/// both neurons (tags [`PRE_SPIKE`] and [`POST_SPIKE`]).
#[derive(Clone, Debug, Serialize)]
pub struct TripartiteResult {
    pub trajectory: Trajectory,
}

impl TripartiteResult {
    pub fn pre_spikes(&self) -> Vec<f64> {
        self.trajectory.event_times(PRE_SPIKE)
    }

    pub fn post_spikes(&self) -> Vec<f64> {
        self.trajectory.event_times(POST_SPIKE)
    }
}

/// Integrate the 9-state presynaptic neuron / astrocyte / postsynaptic
/// neuron system.
///
/// Couplings: presynaptic glutamate gates the astrocyte's IP₃ input, the
/// astrocyte's Ca²⁺ drives `eta * I_astro` into the postsynaptic neuron, and
/// the presynaptic neuron drives the postsynaptic one through `i_syn`. Both
/// neurons are reset after each full step.
pub fn simulate_tripartite(cfg: &TripartiteConfig) -> Result<TripartiteResult> {
    cfg.validate()?;
    let pre_rest = cfg.pre.resting_state();
    let post_rest = cfg.post.resting_state();
    let a0 = cfg.astrocyte_init;
    let x0 = StateVector::from([
        pre_rest.v, pre_rest.u, pre_rest.g, a0.x1, a0.x2, a0.x3, post_rest.v, post_rest.u, post_rest.g,
    ]);

    let i_app = Cell::new(cfg.stimulus.value_at(0.0));
    let derivative = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let pre = NeuronState { v: y[0], u: y[1], g: y[2] };
        let astro = AstrocyteState::from_slice(&y[3..6]);
        let post = NeuronState { v: y[6], u: y[7], g: y[8] };

        let d_pre = neuron_derivative(&pre, i_app.get(), &cfg.pre);
        let u = j_glu(pre.g, &cfg.astrocyte, cfg.j_glu_mode);
        let d_astro = astrocyte_derivative(&astro, u, &cfg.astrocyte);
        let i_post = i_syn(&pre, &post, &cfg.pre) + cfg.eta * cfg.i_astro_mode.eval(astro.x2);
        let d_post = neuron_derivative(&post, i_post, &cfg.post);

        dy[0] = NEURON_MS_PER_S * d_pre.dv;
        dy[1] = NEURON_MS_PER_S * d_pre.du;
        dy[2] = d_pre.dg;
        dy[3] = d_astro.x1;
        dy[4] = d_astro.x2;
        dy[5] = d_astro.x3;
        dy[6] = NEURON_MS_PER_S * d_post.dv;
        dy[7] = NEURON_MS_PER_S * d_post.du;
        dy[8] = d_post.dg;
    };
    let handler = |t: f64, y: &mut [f64], events: &mut Vec<EventTag>| {
        for (offset, params, tag) in [(0usize, &cfg.pre, PRE_SPIKE), (6, &cfg.post, POST_SPIKE)] {
            let s = NeuronState { v: y[offset], u: y[offset + 1], g: y[offset + 2] };
            let (reset, spiked) = apply_spike_reset(&s, params);
            if spiked {
                y[offset] = reset.v;
                y[offset + 1] = reset.u;
                events.push(tag);
            }
        }
        i_app.set(cfg.stimulus.value_at(t));
    };
    let labels = TRIPARTITE_LABELS.iter().map(|s| s.to_string()).collect();
    let opts = SimOptions::new(cfg.duration, cfg.dt).with_stride(cfg.stride);
    let trajectory = simulate(derivative, handler, x0, labels, &opts)?;
    Ok(TripartiteResult { trajectory })
}
