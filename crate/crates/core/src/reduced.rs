//! Extended astrocyte model: astrocyte dynamics driving a reduced
//! postsynaptic firing-rate state `x4`.
//!
//! The rate equation is the gated-affine form
//! `dx4/dt = -x4 + 0.5 (tanh(s (η I - I_thr)) + 1) (p1 η I + p2)`,
//! which is not odd and allows a slightly negative fixed point for small
//! inputs. `x4` is deliberately left unclamped.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, EventTag, SimOptions, StateVector, Trajectory, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::tripartite::{astrocyte_derivative, AstrocyteParams, AstrocyteState, IAstroMode, InputProfile, RESTING_ASTROCYTE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiringRateParams {
    /// Gliotransmission strength in [0, 1].
    pub eta: f64,
    /// Rheobase of the postsynaptic neuron, μA.
    pub i_thr: f64,
    /// Slope of the linear f-I fit, Hz/μA.
    pub p1: f64,
    /// Offset of the linear f-I fit, Hz.
    pub p2: f64,
    /// Steepness of the tanh gate, 1/μA.
    pub tanh_gate_scale: f64,
}

impl Default for FiringRateParams {
    fn default() -> Self {
        FiringRateParams { eta: 1.0, i_thr: 3.9, p1: 16.82, p2: -40.29, tanh_gate_scale: 1.0 }
    }
}

impl FiringRateParams {
    pub fn with_eta(eta: f64) -> Self {
        FiringRateParams { eta, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("firing_rate.eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.tanh_gate_scale > 0.0) {
            return Err(Error::invalid("firing_rate.tanh_gate_scale", "must be positive"));
        }
        for (k, v) in [("i_thr", self.i_thr), ("p1", self.p1), ("p2", self.p2)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("firing_rate.{k}"), "must be finite"));
            }
        }
        Ok(())
    }

    /// Steady-state rate for a constant astrocytic current.
    pub fn drive(&self, i_astro: f64) -> f64 {
        let ei = self.eta * i_astro;
        0.5 * ((self.tanh_gate_scale * (ei - self.i_thr)).tanh() + 1.0) * (self.p1 * ei + self.p2)
    }
}

#[inline]
pub fn firing_rate_derivative(x4: f64, i_astro: f64, p: &FiringRateParams) -> f64 {
    -x4 + p.drive(i_astro)
}

/// Closed-form equilibrium of `x4` under a constant current.
pub fn firing_rate_fixed_point(i_astro: f64, p: &FiringRateParams) -> f64 {
    p.drive(i_astro)
}

/// Named input/gliotransmission combinations of the extended model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedScenario {
    /// No glutamate input.
    Case1,
    /// Persistent 5 μM/s input, strong gliotransmission.
    Case2,
    /// Persistent 5 μM/s input, weak (25 %) gliotransmission.
    Case3,
    /// 0.2 s pulse of 5 μM/s, strong gliotransmission.
    Pulse,
}

impl ExtendedScenario {
    pub fn config(self) -> ExtendedConfig {
        let a_glu = AstrocyteParams::default().a_glu;
        let (input, eta) = match self {
            ExtendedScenario::Case1 => (InputProfile::Zero, 1.0),
            ExtendedScenario::Case2 => (InputProfile::Constant { value: a_glu }, 1.0),
            ExtendedScenario::Case3 => (InputProfile::Constant { value: a_glu }, 0.25),
            ExtendedScenario::Pulse => (InputProfile::Pulse { amplitude: a_glu, start: 0.0, end: 0.2 }, 1.0),
        };
        ExtendedConfig { input, rate: FiringRateParams::with_eta(eta), ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendedConfig {
    /// Glutamate-induced IP₃ production J_glu(t), μM/s.
    pub input: InputProfile,
    pub duration: f64,
    pub dt: f64,
    pub stride: usize,
    pub astrocyte: AstrocyteParams,
    pub rate: FiringRateParams,
    pub i_astro_mode: IAstroMode,
    pub initial: AstrocyteState,
    pub x4_init: f64,
}

impl Default for ExtendedConfig {
    fn default() -> Self {
        ExtendedConfig {
            input: InputProfile::Zero,
            duration: 60.0,
            dt: DEFAULT_DT,
            stride: 100,
            astrocyte: AstrocyteParams::default(),
            rate: FiringRateParams::default(),
            i_astro_mode: IAstroMode::Smooth,
            initial: RESTING_ASTROCYTE,
            x4_init: 0.0,
        }
    }
}

impl ExtendedConfig {
    pub fn validate(&self) -> Result<Vec<String>> {
        self.rate.validate()?;
        let lo = self.input.min_value();
        let hi = self.input.max_value();
        if lo < 0.0 || hi > self.astrocyte.a_glu {
            return Err(Error::invalid(
                "input",
                format!("J_glu must stay within [0, A_glu = {}], got range [{lo}, {hi}]", self.astrocyte.a_glu),
            ));
        }
        self.astrocyte.validate("astrocyte")
    }
}

pub const EXTENDED_LABELS: [&str; 4] = ["x1_uM", "x2_uM", "x3", "x4_Hz"];

/// Integrate the 4-state cascade: astrocyte → I_astro → firing rate.
pub fn simulate_extended(cfg: &ExtendedConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let u = Cell::new(cfg.input.value_at(0.0));
    let derivative = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let astro = AstrocyteState::from_slice(&y[..3]);
        let d = astrocyte_derivative(&astro, u.get(), &cfg.astrocyte);
        dy[0] = d.x1;
        dy[1] = d.x2;
        dy[2] = d.x3;
        dy[3] = firing_rate_derivative(y[3], cfg.i_astro_mode.eval(astro.x2), &cfg.rate);
    };
    let hold_input = |t: f64, _y: &mut [f64], _ev: &mut Vec<EventTag>| u.set(cfg.input.value_at(t));
    let x0 = StateVector::from([cfg.initial.x1, cfg.initial.x2, cfg.initial.x3, cfg.x4_init]);
    let labels = EXTENDED_LABELS.iter().map(|s| s.to_string()).collect();
    simulate(derivative, hold_input, x0, labels, &SimOptions::new(cfg.duration, cfg.dt).with_stride(cfg.stride))
}
