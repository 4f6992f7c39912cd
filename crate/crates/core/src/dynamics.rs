//! Fixed-step RK4 integration with post-step discrete events.
//!
//! Every system in the crate is advanced with the classical fourth-order
//! Runge-Kutta scheme at a constant step. Discrete events (spike resets) are
//! applied to the state after each full step; there is no root finding inside
//! a step.

use std::ops::{Deref, DerefMut};

use serde::Serialize;

use crate::error::{Error, Result};

/// Default integration step: 0.1 ms.
pub const DEFAULT_DT: f64 = 1e-4;

/// An ordered list of state values whose length is fixed for a simulation.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

impl<const N: usize> From<[f64; N]> for StateVector {
    fn from(v: [f64; N]) -> Self {
        StateVector(v.to_vec())
    }
}

pub type EventTag = &'static str;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub tag: EventTag,
}

/// Uniformly sampled time series plus the discrete events emitted while
/// producing it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    /// Integration step in seconds.
    pub dt: f64,
    /// Number of integration steps between stored samples.
    pub stride: usize,
    /// Column names, including units, one per state entry.
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub samples: Vec<StateVector>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn last(&self) -> Option<&StateVector> {
        self.samples.last()
    }

    /// All sampled values of one state component.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[index]).collect()
    }

    pub fn event_times(&self, tag: &str) -> Vec<f64> {
        self.events.iter().filter(|e| e.tag == tag).map(|e| e.time).collect()
    }

    /// Copy of the trajectory with an extra column computed from each sample.
    pub fn with_derived(&self, label: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Trajectory {
        let mut out = self.clone();
        out.labels.push(label.into());
        for s in &mut out.samples {
            let v = f(s);
            s.0.push(v);
        }
        out
    }
}

/// Scratch buffers for in-place RK4 steps on a system of fixed dimension.
#[derive(Clone, Debug)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Rk4Workspace {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advance `y` by one step. On failure returns the index of the first
    /// non-finite derivative component and leaves `y` untouched.
    pub fn step<F>(&mut self, y: &mut [f64], derivative: &mut F, t: f64, dt: f64) -> Result<(), usize>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * dt;

        derivative(t, y, &mut self.k1);
        check_finite(&self.k1)?;
        for (tmp, (y, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k1)) {
            *tmp = y + half * k;
        }

        derivative(t + half, &self.tmp, &mut self.k2);
        check_finite(&self.k2)?;
        for (tmp, (y, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k2)) {
            *tmp = y + half * k;
        }

        derivative(t + half, &self.tmp, &mut self.k3);
        check_finite(&self.k3)?;
        for (tmp, (y, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k3)) {
            *tmp = y + dt * k;
        }

        derivative(t + dt, &self.tmp, &mut self.k4);
        check_finite(&self.k4)?;

        let sixth = dt / 6.0;
        for i in 0..y.len() {
            y[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn check_finite(v: &[f64]) -> Result<(), usize> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(i),
        None => Ok(()),
    }
}

/// One classical RK4 step. The input state is not modified.
pub fn rk4_step<F>(state: &StateVector, mut derivative: F, t: f64, dt: f64) -> Result<StateVector>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    let mut next = state.clone();
    Rk4Workspace::new(state.len())
        .step(&mut next, &mut derivative, t, dt)
        .map_err(|index| Error::Integration { t, step: 0, index })?;
    Ok(next)
}

/// Discrete map applied after every accepted step. Implementations may edit
/// the state and push event tags, which are timestamped with the post-step
/// time.
pub trait EventHandler {
    fn handle(&mut self, t: f64, state: &mut [f64], events: &mut Vec<EventTag>);
}

impl<F> EventHandler for F
where
    F: FnMut(f64, &mut [f64], &mut Vec<EventTag>),
{
    fn handle(&mut self, t: f64, state: &mut [f64], events: &mut Vec<EventTag>) {
        self(t, state, events)
    }
}

/// Handler that never fires.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoEvents;

impl EventHandler for NoEvents {
    fn handle(&mut self, _t: f64, _state: &mut [f64], _events: &mut Vec<EventTag>) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub duration: f64,
    pub dt: f64,
    /// Store every `stride`-th step. Events are always kept.
    pub stride: usize,
}

impl SimOptions {
    pub fn new(duration: f64, dt: f64) -> Self {
        SimOptions { duration, dt, stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Precondition(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::Precondition(format!(
                "duration {} must be at least dt {}",
                self.duration, self.dt
            )));
        }
        if self.stride == 0 {
            return Err(Error::Precondition("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Integrate `derivative` from `x0`, applying `events` after each step.
///
/// Sample `k` is taken at `k * dt * stride` (computed by multiplication, not
/// accumulation), so identical inputs give bit-identical trajectories.
pub fn simulate<F, H>(
    mut derivative: F,
    mut events: H,
    x0: StateVector,
    labels: Vec<String>,
    opts: &SimOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    H: EventHandler,
{
    opts.validate()?;
    if let Some(index) = x0.first_non_finite() {
        return Err(Error::Integration { t: 0.0, step: 0, index });
    }
    let n_steps = opts.n_steps();
    let mut ws = Rk4Workspace::new(x0.len());
    let mut state = x0;
    let capacity = n_steps / opts.stride + 1;
    let mut traj = Trajectory {
        dt: opts.dt,
        stride: opts.stride,
        labels,
        times: Vec::with_capacity(capacity),
        samples: Vec::with_capacity(capacity),
        events: Vec::new(),
    };
    traj.times.push(0.0);
    traj.samples.push(state.clone());

    let mut tags = Vec::new();
    for step in 0..n_steps {
        let t = step as f64 * opts.dt;
        ws.step(&mut state, &mut derivative, t, opts.dt)
            .map_err(|index| Error::Integration { t, step, index })?;
        let t_next = (step + 1) as f64 * opts.dt;
        events.handle(t_next, &mut state, &mut tags);
        for tag in tags.drain(..) {
            traj.events.push(Event { time: t_next, tag });
        }
        if let Some(index) = state.first_non_finite() {
            return Err(Error::Integration { t: t_next, step, index });
        }
        if (step + 1) % opts.stride == 0 {
            traj.times.push(t_next);
            traj.samples.push(state.clone());
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0];
    }

    #[test]
    fn zero_derivative_is_identity() {
        let s = StateVector::from([1.0]);
        let next = rk4_step(&s, |_, _, dy: &mut [f64]| dy[0] = 0.0, 0.0, 0.1).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn single_step_matches_exponential() {
        let s = StateVector::from([1.0]);
        let next = rk4_step(&s, decay, 0.0, 0.1).unwrap();
        assert_abs_diff_eq!(next[0], (-0.1f64).exp(), epsilon = 1e-6);
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn constant_slope_is_exact() {
        let s = StateVector::from([0.0]);
        let next = rk4_step(&s, |_, _, dy: &mut [f64]| dy[0] = 1.0, 0.0, 1e-4).unwrap();
        assert_abs_diff_eq!(next[0], 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn non_finite_derivative_reports_component() {
        let s = StateVector::from([1.0, 2.0]);
        let err = rk4_step(
            &s,
            |_, _, dy: &mut [f64]| {
                dy[0] = 0.0;
                dy[1] = f64::NAN;
            },
            0.3,
            0.1,
        )
        .unwrap_err();
        match err {
            Error::Integration { t, index, .. } => {
                assert_eq!(index, 1);
                assert_eq!(t, 0.3);
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn constant_run_sample_count() {
        let traj = simulate(
            |_, _, dy: &mut [f64]| dy[0] = 0.0,
            NoEvents,
            StateVector::from([2.0]),
            vec!["y".into()],
            &SimOptions::new(1.0, 0.1),
        )
        .unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.samples.iter().all(|s| s[0] == 2.0));
    }

    #[test]
    fn stride_keeps_events() {
        let mut handler = |_t: f64, y: &mut [f64], ev: &mut Vec<EventTag>| {
            if y[0] >= 0.25 {
                y[0] = 0.0;
                ev.push("reset");
            }
        };
        let opts = SimOptions::new(1.0, 0.01).with_stride(10);
        let traj = simulate(
            |_, _, dy: &mut [f64]| dy[0] = 1.0,
            &mut handler,
            StateVector::from([0.0]),
            vec!["y".into()],
            &opts,
        )
        .unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.event_times("reset").len(), 4);
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let err = simulate(
            |_, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
            NoEvents,
            StateVector::from([1.0]),
            vec!["y".into()],
            &SimOptions::new(5.0, 0.01),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integration { step, .. } if step > 0));
    }

    #[test]
    fn rejects_bad_options() {
        let opts = SimOptions::new(0.01, 0.1);
        assert!(opts.validate().is_err());
        assert!(SimOptions::new(1.0, 0.0).validate().is_err());
        assert!(SimOptions::new(1.0, 0.1).with_stride(0).validate().is_err());
    }
}

