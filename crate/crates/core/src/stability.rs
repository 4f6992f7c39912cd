//! Equilibria, linearization, and ultimate-bound checks for the astrocyte.
//!
//! Equilibria come from damped Newton on the astrocyte right-hand side with a
//! central-difference Jacobian. Eigenvalues are the roots of the 3×3
//! characteristic polynomial, computed in closed form and polished. The
//! randomized checks integrate many trajectories and report verdicts with
//! counterexamples.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::Rk4Workspace;
use crate::error::{Error, Result};
use crate::tripartite::{astrocyte_derivative, AstrocyteParams, AstrocyteState};

pub type Matrix3 = [[f64; 3]; 3];

/// Convergence threshold on the Euclidean norm of the right-hand side.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;
const MAX_NEWTON_ITERATIONS: usize = 100;
const NEWTON_DAMPING: f64 = 0.5;
const MAX_BACKTRACKS: usize = 40;
const RELAXATION_HORIZON: f64 = 200.0;
const RELAXATION_DT: f64 = 1e-3;

fn residual(p: &AstrocyteParams, x: &AstrocyteState, u: f64) -> AstrocyteState {
    astrocyte_derivative(x, u, p)
}

fn in_orthant(x: &AstrocyteState) -> bool {
    x.x1 >= 0.0 && x.x2 >= 0.0 && x.x3 >= 0.0
}

/// Central-difference Jacobian of the astrocyte right-hand side.
///
/// The step for coordinate `i` is `max(1e-6, 1e-6 |x_i|)`.
pub fn jacobian(p: &AstrocyteParams, x: &AstrocyteState, u: f64) -> Result<Matrix3> {
    let base = x.to_array();
    if base.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Precondition(format!("Jacobian point {x:?} must lie in the nonnegative orthant")));
    }
    let mut m = [[0.0; 3]; 3];
    for j in 0..3 {
        let h = (1e-6 * base[j].abs()).max(1e-6);
        let mut plus = base;
        let mut minus = base;
        plus[j] += h;
        minus[j] -= h;
        let fp = residual(p, &AstrocyteState::from_slice(&plus), u).to_array();
        let fm = residual(p, &AstrocyteState::from_slice(&minus), u).to_array();
        for i in 0..3 {
            let entry = (fp[i] - fm[i]) / (2.0 * h);
            if !entry.is_finite() {
                return Err(Error::NonFiniteJacobian { coordinate: j + 1 });
            }
            m[i][j] = entry;
        }
    }
    Ok(m)
}

/// Solve `m x = b` by Gaussian elimination with partial pivoting.
fn solve3(mut m: Matrix3, mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &c| m[a][col].abs().total_cmp(&m[c][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= factor * m[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Integrate the unperturbed astrocyte with constant input for `horizon` seconds.
fn relax(p: &AstrocyteParams, u: f64, x0: AstrocyteState, horizon: f64) -> Result<AstrocyteState> {
    let mut ws = Rk4Workspace::new(3);
    let mut y = x0.to_array();
    let n = (horizon / RELAXATION_DT).round() as usize;
    let mut f = |_t: f64, s: &[f64], dy: &mut [f64]| {
        let d = astrocyte_derivative(&AstrocyteState::from_slice(s), u, p);
        dy.copy_from_slice(&d.to_array());
    };
    for step in 0..n {
        let t = step as f64 * RELAXATION_DT;
        ws.step(&mut y, &mut f, t, RELAXATION_DT)
            .map_err(|index| Error::Integration { t, step, index })?;
    }
    Ok(AstrocyteState::from_slice(&y))
}

/// Equilibrium of the astrocyte under constant input `u` (μM/s).
///
/// Damped Newton with step halving; a step is accepted only if it stays in the
/// nonnegative orthant and lowers the residual. When no such step exists the
/// iterate is relaxed by a 200 s simulation and Newton restarts from there.
pub fn find_equilibrium(p: &AstrocyteParams, u: f64, guess: AstrocyteState) -> Result<AstrocyteState> {
    if !in_orthant(&guess) || guess.to_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("equilibrium guess {guess:?} must lie in the nonnegative orthant")));
    }
    let mut x = guess;
    let mut r = residual(p, &x, u).norm();
    let mut relaxed = false;
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if r < EQUILIBRIUM_TOLERANCE {
            return Ok(x);
        }
        let step = jacobian(p, &x, u).ok().and_then(|j| {
            let f = residual(p, &x, u).to_array();
            solve3(j, [-f[0], -f[1], -f[2]])
        });
        let mut accepted = false;
        if let Some(dx) = step {
            let mut lambda = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let trial = AstrocyteState::new(x.x1 + lambda * dx[0], x.x2 + lambda * dx[1], x.x3 + lambda * dx[2]);
                if in_orthant(&trial) {
                    let rt = residual(p, &trial, u).norm();
                    if rt < r {
                        x = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= NEWTON_DAMPING;
            }
        }
        if !accepted {
            if relaxed {
                break;
            }
            x = relax(p, u, x, RELAXATION_HORIZON)?;
            r = residual(p, &x, u).norm();
            relaxed = true;
        }
    }
    if r < EQUILIBRIUM_TOLERANCE {
        Ok(x)
    } else {
        Err(Error::NonConvergence { iterations: MAX_NEWTON_ITERATIONS, residual: r })
    }
}

/// Coefficients `(a, b, c)` of the monic characteristic polynomial
/// `λ³ + aλ² + bλ + c` of `m`.
pub fn characteristic_polynomial(m: &Matrix3) -> [f64; 3] {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0] + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    [-trace, minors, -det]
}

fn eval_cubic(coeffs: &[f64; 3], z: Complex64) -> (Complex64, Complex64) {
    let [a, b, c] = *coeffs;
    let value = ((z + a) * z + b) * z + c;
    let slope = (z * 3.0 + 2.0 * a) * z + b;
    (value, slope)
}

/// `|det(m - λI)|` scaled by the magnitude of the polynomial's terms at λ.
pub fn characteristic_residual(m: &Matrix3, lambda: Complex64) -> f64 {
    let coeffs = characteristic_polynomial(m);
    let (value, _) = eval_cubic(&coeffs, lambda);
    let r = lambda.norm();
    let scale = r.powi(3) + coeffs[0].abs() * r * r + coeffs[1].abs() * r + coeffs[2].abs();
    if scale == 0.0 {
        value.norm()
    } else {
        value.norm() / scale
    }
}

/// One real root of the monic cubic, from Cardano's formula or the
/// trigonometric form when all three roots are real.
fn real_cubic_root(coeffs: &[f64; 3]) -> f64 {
    let [a, b, c] = *coeffs;
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let t = if disc >= 0.0 {
        let s = disc.sqrt();
        (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()
    } else {
        let r = (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        2.0 * r * (arg.acos() / 3.0).cos()
    };
    let mut root = t - shift;
    for _ in 0..4 {
        let (v, d) = eval_cubic(coeffs, Complex64::new(root, 0.0));
        if d.re == 0.0 {
            break;
        }
        let next = root - v.re / d.re;
        if !next.is_finite() || eval_cubic(coeffs, Complex64::new(next, 0.0)).0.re.abs() >= v.re.abs() {
            break;
        }
        root = next;
    }
    root
}

/// Eigenvalues of a 3×3 real matrix, sorted by real part then imaginary part.
pub fn eigenvalues(m: &Matrix3) -> [Complex64; 3] {
    let coeffs = characteristic_polynomial(m);
    let r = real_cubic_root(&coeffs);
    // Deflate: λ³ + aλ² + bλ + c = (λ - r)(λ² + Bλ + C)
    let big_b = coeffs[0] + r;
    let big_c = coeffs[1] + big_b * r;
    let disc = big_b * big_b - 4.0 * big_c;
    let (r2, r3) = if disc >= 0.0 {
        let s = disc.sqrt();
        let q = -0.5 * (big_b + big_b.signum() * s);
        if q == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(q, 0.0), Complex64::new(big_c / q, 0.0))
        }
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(-0.5 * big_b, -im), Complex64::new(-0.5 * big_b, im))
    };
    let mut roots = [Complex64::new(r, 0.0), r2, r3];
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (v, d) = eval_cubic(&coeffs, *z);
            if d.norm() == 0.0 {
                break;
            }
            let next = *z - v / d;
            if !(next.re.is_finite() && next.im.is_finite()) || eval_cubic(&coeffs, next).0.norm() >= v.norm() {
                break;
            }
            *z = next;
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}

/// Ultimate bound Ω = [0, μ₁] × [0, μ₂] × [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTriple {
    pub mu1: f64,
    pub mu2: f64,
    pub x3_max: f64,
}

impl BoundTriple {
    pub fn contains(&self, x: &AstrocyteState) -> bool {
        (0.0..=self.mu1).contains(&x.x1) && (0.0..=self.mu2).contains(&x.x2) && (0.0..=self.x3_max).contains(&x.x3)
    }

    /// Largest relative excess over the bound (0 inside Ω).
    pub fn excess(&self, x: &AstrocyteState) -> f64 {
        let e1 = (x.x1 - self.mu1) / self.mu1;
        let e2 = (x.x2 - self.mu2) / self.mu2;
        let e3 = x.x3 - self.x3_max;
        e1.max(e2).max(e3).max(0.0)
    }
}

/// μ₁ = x₁* + τ(v₄ + A_glu), μ₂ = (v₆ + c₀(v₁ − v₂)) / (k₁ + v₂(1 + c₁)).
pub fn ultimate_bound(p: &AstrocyteParams, a_glu: f64) -> BoundTriple {
    BoundTriple {
        mu1: p.ip3_star + p.tau_ip3 * (p.v4 + a_glu),
        mu2: (p.v6 + p.c0 * (p.v1 - p.v2)) / (p.k1 + p.v2 * (1.0 + p.c1)),
        x3_max: 1.0,
    }
}

/// Input signal admitted by the property checks; values stay in `[0, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdmissibleInput {
    Constant { value: f64 },
    /// Uniform random level in `[0, max]`, redrawn every `hold` seconds.
    RandomSwitching { max: f64, hold: f64 },
}

impl AdmissibleInput {
    fn levels(&self, rng: &mut ChaCha8Rng, horizon: f64) -> (Vec<f64>, f64) {
        match *self {
            AdmissibleInput::Constant { value } => (vec![value], f64::INFINITY),
            AdmissibleInput::RandomSwitching { max, hold } => {
                let n = (horizon / hold).ceil() as usize + 1;
                ((0..n).map(|_| rng.random_range(0.0..=max)).collect(), hold)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            AdmissibleInput::Constant { value } => value >= 0.0 && value.is_finite(),
            AdmissibleInput::RandomSwitching { max, hold } => max >= 0.0 && max.is_finite() && hold > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("input {self:?} is not admissible")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckOptions {
    pub trials: usize,
    pub seed: u64,
    /// Simulated time per trial, s.
    pub horizon: f64,
    pub dt: f64,
    /// States below `-negativity_tolerance` count as positivity violations.
    pub negativity_tolerance: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { trials: 100, seed: 0, horizon: 60.0, dt: 1e-3, negativity_tolerance: 1e-9 }
    }
}

impl CheckOptions {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Precondition("at least one trial is required".into()));
        }
        if !(self.dt > 0.0 && self.horizon >= self.dt) {
            return Err(Error::Precondition(format!("invalid horizon {} / dt {}", self.horizon, self.dt)));
        }
        Ok(())
    }
}

/// Per-trial RNG stream so verdicts depend only on `(seed, trial)`.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub initial: AstrocyteState,
    pub time: f64,
    pub state: AstrocyteState,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityVerdict {
    pub passed: bool,
    pub trials: usize,
    /// Smallest state component observed across all trials.
    pub min_state_value: f64,
    pub counterexample: Option<Counterexample>,
}

/// Summary of one trajectory checked against Ω.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub initial: AstrocyteState,
    pub final_state: AstrocyteState,
    pub min_state_value: f64,
    /// First time a component fell below the negativity tolerance.
    pub first_negative: Option<(f64, AstrocyteState)>,
    /// Time after which the trajectory never leaves Ω (0 if it starts and stays inside).
    pub settle_time: f64,
    /// Largest relative excess over Ω seen anywhere on the trajectory.
    pub worst_overshoot: f64,
    /// Whether Ω was left at any time after first being entered.
    pub exited_after_entry: bool,
}

/// Integrate one trajectory of `rhs` with a piecewise-constant input and
/// track positivity and membership in Ω.
pub fn run_trial<F>(
    rhs: &F,
    p: &AstrocyteParams,
    x0: AstrocyteState,
    levels: &[f64],
    hold: f64,
    bound: &BoundTriple,
    opts: &CheckOptions,
) -> Result<TrialOutcome>
where
    F: Fn(&AstrocyteState, f64, &AstrocyteParams) -> AstrocyteState,
{
    if !in_orthant(&x0) || x0.x3 > 1.0 || x0.to_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!(
            "initial state {x0:?} must be nonnegative with x3 in [0, 1]"
        )));
    }
    let mut ws = Rk4Workspace::new(3);
    let mut y = x0.to_array();
    let n = (opts.horizon / opts.dt).round() as usize;
    let mut min_state = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut first_negative = None;
    let mut inside = bound.contains(&x0);
    let mut entered = inside;
    let mut exited_after_entry = false;
    let mut settle_time = if inside { 0.0 } else { f64::INFINITY };
    let mut worst = bound.excess(&x0);
    for step in 0..n {
        let t = step as f64 * opts.dt;
        let segment = if hold.is_finite() { ((t / hold) as usize).min(levels.len() - 1) } else { 0 };
        let u = levels[segment];
        let mut f = |_t: f64, s: &[f64], dy: &mut [f64]| {
            dy.copy_from_slice(&rhs(&AstrocyteState::from_slice(s), u, p).to_array());
        };
        ws.step(&mut y, &mut f, t, opts.dt)
            .map_err(|index| Error::Integration { t, step, index })?;
        let t_next = (step + 1) as f64 * opts.dt;
        let state = AstrocyteState::from_slice(&y);
        let lo = y[0].min(y[1]).min(y[2]);
        min_state = min_state.min(lo);
        if lo < -opts.negativity_tolerance && first_negative.is_none() {
            first_negative = Some((t_next, state));
        }
        worst = worst.max(bound.excess(&state));
        let now_inside = bound.contains(&state);
        if now_inside && !inside {
            settle_time = t_next;
            entered = true;
        } else if !now_inside && inside {
            settle_time = f64::INFINITY;
            if entered {
                exited_after_entry = true;
            }
        }
        inside = now_inside;
    }
    Ok(TrialOutcome {
        initial: x0,
        final_state: AstrocyteState::from_slice(&y),
        min_state_value: min_state,
        first_negative,
        settle_time,
        worst_overshoot: worst,
        exited_after_entry,
    })
}

/// Positivity check against an arbitrary right-hand side (used to validate
/// the check itself with deliberately broken dynamics).
pub fn check_positivity_with<F>(
    rhs: F,
    p: &AstrocyteParams,
    input: &AdmissibleInput,
    opts: &CheckOptions,
) -> Result<PositivityVerdict>
where
    F: Fn(&AstrocyteState, f64, &AstrocyteParams) -> AstrocyteState,
{
    opts.validate()?;
    input.validate()?;
    let bound = ultimate_bound(p, p.a_glu);
    let mut verdict = PositivityVerdict { passed: true, trials: opts.trials, min_state_value: f64::INFINITY, counterexample: None };
    for trial in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, trial);
        let x0 = AstrocyteState::new(
            rng.random_range(0.0..=2.0 * bound.mu1),
            rng.random_range(0.0..=2.0 * bound.mu2),
            rng.random_range(0.0..=1.0),
        );
        let (levels, hold) = input.levels(&mut rng, opts.horizon);
        let outcome = run_trial(&rhs, p, x0, &levels, hold, &bound, opts)?;
        verdict.min_state_value = verdict.min_state_value.min(outcome.min_state_value);
        if let Some((time, state)) = outcome.first_negative {
            if verdict.counterexample.is_none() {
                verdict.counterexample = Some(Counterexample { trial, initial: x0, time, state });
            }
            verdict.passed = false;
        }
    }
    Ok(verdict)
}

/// Random initial conditions in `[0, 2μ₁] × [0, 2μ₂] × [0, 1]` must keep
/// every state component nonnegative.
pub fn check_positivity(p: &AstrocyteParams, input: &AdmissibleInput, opts: &CheckOptions) -> Result<PositivityVerdict> {
    check_positivity_with(astrocyte_derivative, p, input, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundednessVerdict {
    pub passed: bool,
    pub trials: usize,
    pub bound: BoundTriple,
    /// Latest settle time over all trials, s.
    pub max_settle_time: f64,
    pub worst_overshoot: f64,
    pub counterexample: Option<Counterexample>,
}

/// Options for [`check_ultimate_boundedness`]: initial conditions are drawn
/// up to `initial_scale` times the bound and a trajectory passes when it
/// stays inside Ω for the final `settle_fraction` of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundednessOptions {
    pub check: CheckOptions,
    pub initial_scale: f64,
    pub settle_fraction: f64,
}

impl Default for BoundednessOptions {
    fn default() -> Self {
        BoundednessOptions {
            check: CheckOptions { horizon: 120.0, ..Default::default() },
            initial_scale: 3.0,
            settle_fraction: 0.5,
        }
    }
}

/// Trajectories from outside Ω must enter it and remain for the final part
/// of the horizon, under any admissible input bounded by `a_glu`.
pub fn check_ultimate_boundedness(
    p: &AstrocyteParams,
    a_glu: f64,
    input: &AdmissibleInput,
    opts: &BoundednessOptions,
) -> Result<BoundednessVerdict> {
    opts.check.validate()?;
    input.validate()?;
    let input_max = match *input {
        AdmissibleInput::Constant { value } => value,
        AdmissibleInput::RandomSwitching { max, .. } => max,
    };
    if input_max > a_glu {
        return Err(Error::Precondition(format!("input bound {input_max} exceeds A_glu = {a_glu}")));
    }
    let bound = ultimate_bound(p, a_glu);
    let deadline = opts.check.horizon * (1.0 - opts.settle_fraction);
    let mut verdict = BoundednessVerdict {
        passed: true,
        trials: opts.check.trials,
        bound,
        max_settle_time: 0.0,
        worst_overshoot: 0.0,
        counterexample: None,
    };
    for trial in 0..opts.check.trials {
        let mut rng = trial_rng(opts.check.seed, trial);
        let x0 = AstrocyteState::new(
            rng.random_range(0.0..=opts.initial_scale * bound.mu1),
            rng.random_range(0.0..=opts.initial_scale * bound.mu2),
            rng.random_range(0.0..=1.0),
        );
        let (levels, hold) = input.levels(&mut rng, opts.check.horizon);
        let outcome = run_trial(&astrocyte_derivative, p, x0, &levels, hold, &bound, &opts.check)?;
        verdict.max_settle_time = verdict.max_settle_time.max(outcome.settle_time);
        verdict.worst_overshoot = verdict.worst_overshoot.max(outcome.worst_overshoot);
        if outcome.settle_time > deadline {
            verdict.passed = false;
            if verdict.counterexample.is_none() {
                verdict.counterexample = Some(Counterexample {
                    trial,
                    initial: x0,
                    time: opts.check.horizon,
                    state: outcome.final_state,
                });
            }
        }
    }
    Ok(verdict)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub positivity: CheckOptions,
    pub boundedness: BoundednessOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { positivity: CheckOptions::default(), boundedness: BoundednessOptions::default() }
    }
}

impl ReportOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.positivity.seed = seed;
        self.boundedness.check.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Constant IP₃ input, μM/s.
    pub input_level: f64,
    pub equilibrium: AstrocyteState,
    pub residual_norm: f64,
    pub jacobian: Matrix3,
    pub eigenvalues: [Complex64; 3],
    pub locally_stable: bool,
    pub mu1: f64,
    pub mu2: f64,
    pub x3_bound: f64,
    pub positivity: PositivityVerdict,
    pub boundedness: BoundednessVerdict,
}

/// Equilibrium, linearization, bound, and both randomized verdicts for one
/// constant input level. The bound uses `p.a_glu`.
pub fn stability_report(
    p: &AstrocyteParams,
    u: f64,
    guess: AstrocyteState,
    opts: &ReportOptions,
) -> Result<StabilityReport> {
    let equilibrium = find_equilibrium(p, u, guess)?;
    let jac = jacobian(p, &equilibrium, u)?;
    let eig = eigenvalues(&jac);
    let bound = ultimate_bound(p, p.a_glu);
    let input = AdmissibleInput::RandomSwitching { max: p.a_glu, hold: 1.0 };
    Ok(StabilityReport {
        input_level: u,
        equilibrium,
        residual_norm: residual(p, &equilibrium, u).norm(),
        jacobian: jac,
        eigenvalues: eig,
        locally_stable: eig.iter().all(|z| z.re < 0.0),
        mu1: bound.mu1,
        mu2: bound.mu2,
        x3_bound: bound.x3_max,
        positivity: check_positivity(p, &input, &opts.positivity)?,
        boundedness: check_ultimate_boundedness(p, p.a_glu, &input, &opts.boundedness)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigenvalues_of_identity() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for z in eigenvalues(&m) {
            assert!((z - c(1.0, 0.0)).norm() < 1e-12, "{z}");
        }
    }

    #[test]
    fn eigenvalues_of_diagonal_sorted() {
        let m = [[-1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, -3.0]];
        let e = eigenvalues(&m);
        for (z, want) in e.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((z - c(want, 0.0)).norm() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn eigenvalues_of_companion_matrix() {
        // λ³ − 6λ² + 11λ − 6 = (λ − 1)(λ − 2)(λ − 3)
        let m = [[0.0, 0.0, 6.0], [1.0, 0.0, -11.0], [0.0, 1.0, 6.0]];
        let e = eigenvalues(&m);
        for (z, want) in e.iter().zip([1.0, 2.0, 3.0]) {
            assert!((z - c(want, 0.0)).norm() < 1e-10, "{e:?}");
            assert!(characteristic_residual(&m, *z) < 1e-8);
        }
    }

    #[test]
    fn eigenvalues_of_rotation_block() {
        let m = [[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -5.0]];
        let e = eigenvalues(&m);
        assert!((e[0] - c(-5.0, 0.0)).norm() < 1e-12);
        assert!((e[1] - c(0.0, -2.0)).norm() < 1e-12);
        assert!((e[2] - c(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn bound_values() {
        let p = AstrocyteParams::default();
        let b = ultimate_bound(&p, 5.0);
        assert_relative_eq!(b.mu1, 0.16 + (0.3 + 5.0) / 0.14, max_relative = 1e-12);
        assert_relative_eq!(b.mu1, 38.02, epsilon = 5e-3);
        assert_relative_eq!(b.mu2, (0.2 + 2.0 * (6.0 - 0.11)) / (0.5 + 0.11 * 1.185), max_relative = 1e-12);
        assert_relative_eq!(b.mu2, 19.01, epsilon = 5e-3);
        assert_relative_eq!(ultimate_bound(&p, 0.0).mu1, 2.303, epsilon = 5e-4);
        assert_eq!(b.x3_max, 1.0);
    }

    #[test]
    fn newton_converges_to_unforced_equilibrium() {
        let p = AstrocyteParams::default();
        let x = find_equilibrium(&p, 0.0, AstrocyteState::new(0.5, 0.1, 0.9)).unwrap();
        assert_relative_eq!(x.x1, 0.6858, max_relative = 1e-3);
        assert_relative_eq!(x.x2, 0.06612, max_relative = 1e-3);
        assert_relative_eq!(x.x3, 0.8882, max_relative = 1e-3);
        assert!(astrocyte_derivative(&x, 0.0, &p).norm() < 1e-8);
    }

    #[test]
    fn far_guess_uses_relaxation_fallback() {
        let p = AstrocyteParams::default();
        let x = find_equilibrium(&p, 5.0, AstrocyteState::new(0.0, 10.0, 0.0)).unwrap();
        assert_relative_eq!(x.x1, 36.77, max_relative = 1e-3);
    }

    #[test]
    fn rejects_negative_guess() {
        let p = AstrocyteParams::default();
        assert!(matches!(
            find_equilibrium(&p, 0.0, AstrocyteState::new(-1.0, 0.1, 0.5)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn x3_self_derivative_matches_hand_form() {
        let p = AstrocyteParams::default();
        let x = AstrocyteState::new(1.3, 0.4, 0.6);
        let j = jacobian(&p, &x, 0.0).unwrap();
        let want = -p.a2 * (p.d2 * (x.x1 + p.d1) / (x.x1 + p.d3) + x.x2);
        assert_relative_eq!(j[2][2], want, max_relative = 1e-8);
        assert!(j[2][2] < 0.0);
    }

    #[test]
    fn rejects_fraction_above_one() {
        let p = AstrocyteParams::default();
        let bound = ultimate_bound(&p, 5.0);
        let err = run_trial(
            &astrocyte_derivative,
            &p,
            AstrocyteState::new(1.0, 0.1, 1.5),
            &[0.0],
            f64::INFINITY,
            &bound,
            &CheckOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn zero_trials_rejected() {
        let p = AstrocyteParams::default();
        let opts = CheckOptions { trials: 0, ..Default::default() };
        assert!(check_positivity(&p, &AdmissibleInput::Constant { value: 0.0 }, &opts).is_err());
    }
}
