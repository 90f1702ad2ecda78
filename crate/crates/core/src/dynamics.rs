//! Models, orthant orders, pulse inputs and the numerical flow map.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, DenseStep, IntegratorOptions, StepControl};

/// Partial order induced by a sign-reflected nonnegative orthant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct OrthantOrder {
    signs: Vec<i8>,
}

impl OrthantOrder {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(bad) = signs.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::InvalidArgument(format!(
                "orthant sign must be +1 or -1, got {bad}"
            )));
        }
        Ok(Self { signs })
    }

    /// The standard order on `R^n`.
    pub fn positive(n: usize) -> Self {
        Self { signs: vec![1; n] }
    }

    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, i: usize) -> f64 {
        f64::from(self.signs[i])
    }

    /// `x ⪯ y`.
    pub fn leq(&self, x: &[f64], y: &[f64]) -> bool {
        self.slack(x, y) >= 0.0
    }

    /// `x ≪ y`.
    pub fn ll(&self, x: &[f64], y: &[f64]) -> bool {
        self.signs
            .iter()
            .zip(x.iter().zip(y))
            .all(|(s, (a, b))| f64::from(*s) * (b - a) > 0.0)
    }

    /// Smallest reflected difference `min_i s_i (y_i - x_i)`; nonnegative iff `x ⪯ y`.
    pub fn slack(&self, x: &[f64], y: &[f64]) -> f64 {
        self.signs
            .iter()
            .zip(x.iter().zip(y))
            .map(|(s, (a, b))| f64::from(*s) * (b - a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Maps `x` to reflected coordinates `S x`.
    pub fn reflect(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.signs).map(|(v, s)| v * f64::from(*s)).collect()
    }
}

impl TryFrom<Vec<i8>> for OrthantOrder {
    type Error = Error;

    fn try_from(signs: Vec<i8>) -> Result<Self> {
        Self::new(signs)
    }
}

impl From<OrthantOrder> for Vec<i8> {
    fn from(o: OrthantOrder) -> Self {
        o.signs
    }
}

/// Axis-aligned box `[lo, hi]` in raw coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidArgument(
                "box bounds must have equal length and lo <= hi".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Box scaled about its center by `factor`.
    pub fn inflated(&self, factor: f64) -> Self {
        let c = self.center();
        let lo = self.lo.iter().zip(&c).map(|(a, m)| m - factor * (m - a)).collect();
        let hi = self.hi.iter().zip(&c).map(|(b, m)| m + factor * (b - m)).collect();
        Self { lo, hi }
    }

    /// Largest coordinate-wise violation; zero inside the box.
    pub fn excess(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| (a - v).max(v - b).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Signature of a vector field `f(x, p, u) -> dx`.
pub type FieldFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// A controlled, parametrized system `x' = f(x, p, u)`.
#[derive(Clone)]
pub struct VectorFieldModel {
    pub name: String,
    pub state_dim: usize,
    pub param_dim: usize,
    pub input_dim: usize,
    field: Arc<FieldFn>,
    pub state_order: OrthantOrder,
    pub param_order: OrthantOrder,
    pub input_order: OrthantOrder,
    pub state_domain: AxisBox,
}

impl fmt::Debug for VectorFieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("param_dim", &self.param_dim)
            .field("input_dim", &self.input_dim)
            .field("state_order", &self.state_order)
            .field("param_order", &self.param_order)
            .field("input_order", &self.input_order)
            .field("state_domain", &self.state_domain)
            .finish()
    }
}

impl VectorFieldModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        param_dim: usize,
        input_dim: usize,
        field: Arc<FieldFn>,
        state_order: OrthantOrder,
        param_order: OrthantOrder,
        input_order: OrthantOrder,
        state_domain: AxisBox,
    ) -> Result<Self> {
        if state_order.dim() != state_dim
            || param_order.dim() != param_dim
            || input_order.dim() != input_dim
            || state_domain.dim() != state_dim
        {
            return Err(Error::InvalidArgument(
                "order and domain dimensions must match the model".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            param_dim,
            input_dim,
            field,
            state_order,
            param_order,
            input_order,
            state_domain,
        })
    }

    pub fn eval_into(&self, x: &[f64], p: &[f64], u: &[f64], out: &mut [f64]) {
        (self.field)(x, p, u, out)
    }

    pub fn eval(&self, x: &[f64], p: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.eval_into(x, p, u, &mut out);
        out
    }

    pub fn zero_input(&self) -> Vec<f64> {
        vec![0.0; self.input_dim]
    }

    /// Central finite-difference Jacobian `∂f/∂x` at zero input.
    pub fn state_jacobian(&self, x: &[f64], p: &[f64]) -> nalgebra::DMatrix<f64> {
        let u = self.zero_input();
        self.jacobian_x(x, p, &u)
    }

    pub fn jacobian_x(&self, x: &[f64], p: &[f64], u: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.state_dim;
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            self.eval_into(&xp, p, u, &mut fp);
            xp[j] = x[j] - h;
            self.eval_into(&xp, p, u, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn jacobian_p(&self, x: &[f64], p: &[f64], u: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.state_dim;
        let m = self.param_dim;
        let mut jac = nalgebra::DMatrix::zeros(n, m);
        let mut pp = p.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for k in 0..m {
            let h = 1e-6 * (1.0 + p[k].abs());
            pp[k] = p[k] + h;
            self.eval_into(x, &pp, u, &mut fp);
            pp[k] = p[k] - h;
            self.eval_into(x, &pp, u, &mut fm);
            pp[k] = p[k];
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn jacobian_u(&self, x: &[f64], p: &[f64], u: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.state_dim;
        let m = self.input_dim;
        let mut jac = nalgebra::DMatrix::zeros(n, m);
        let mut up = u.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for k in 0..m {
            let h = 1e-6 * (1.0 + u[k].abs());
            up[k] = u[k] + h;
            self.eval_into(x, p, &up, &mut fp);
            up[k] = u[k] - h;
            self.eval_into(x, p, &up, &mut fm);
            up[k] = u[k];
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }
}

// ---------------------------------------------------------------------------
// Inputs

/// Time-indexed input `u(t)`.
pub trait InputSignal: Send + Sync {
    fn value_into(&self, t: f64, out: &mut [f64]);

    /// Times in `(t0, t1)` where the signal may jump. The integrator restarts
    /// exactly at each of them.
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let _ = (t0, t1);
        Vec::new()
    }
}

/// `u ≡ 0`.
#[derive(Clone, Debug)]
pub struct ZeroInput;

impl InputSignal for ZeroInput {
    fn value_into(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A constant input vector.
#[derive(Clone, Debug)]
pub struct ConstantInput(pub Vec<f64>);

impl InputSignal for ConstantInput {
    fn value_into(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Rectangular pulse of magnitude `mu` on one channel over `[0, tau]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseInput {
    pub channel: usize,
    pub mu: f64,
    pub tau: f64,
}

impl PulseInput {
    pub fn new(channel: usize, mu: f64, tau: f64) -> Result<Self> {
        if !(mu >= 0.0 && tau >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pulse needs mu >= 0 and tau >= 0, got ({mu}, {tau})"
            )));
        }
        Ok(Self { channel, mu, tau })
    }

    /// Scalar profile `mu * h(t, tau)`; closed on the right end of the pulse.
    pub fn value(&self, t: f64) -> f64 {
        if (0.0..=self.tau).contains(&t) {
            self.mu
        } else {
            0.0
        }
    }
}

/// [`PulseInput`] laid out on an input vector of length `input_dim`.
#[derive(Clone, Copy, Debug)]
pub struct PulseSignal {
    pub pulse: PulseInput,
    pub input_dim: usize,
}

impl InputSignal for PulseSignal {
    fn value_into(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        out[self.pulse.channel] = self.pulse.value(t);
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        if self.pulse.tau > t0 && self.pulse.tau < t1 {
            vec![self.pulse.tau]
        } else {
            Vec::new()
        }
    }
}

/// Builds the time-indexed input of a pulse.
pub fn pulse_signal(pulse: PulseInput, input_dim: usize) -> PulseSignal {
    PulseSignal { pulse, input_dim }
}

// ---------------------------------------------------------------------------
// Trajectories

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalStatus {
    Completed,
    LeftDomain,
    StepFailure,
}

/// Sampled solution with its piecewise dense interpolant.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub terminal_status: TerminalStatus,
    steps: Vec<DenseStep>,
}

impl Trajectory {
    /// Single-sample trajectory at `(t0, x0)`.
    pub fn empty_at(t0: f64, x0: &[f64], u0: Vec<f64>) -> Self {
        Self {
            times: vec![t0],
            states: vec![x0.to_vec()],
            inputs: vec![u0],
            terminal_status: TerminalStatus::Completed,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has a start sample")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has a start sample")
    }

    pub fn steps(&self) -> &[DenseStep] {
        &self.steps
    }

    /// Dense-output state at `t`, or `None` outside the integrated range.
    pub fn sample(&self, t: f64) -> Option<Vec<f64>> {
        let t0 = *self.times.first()?;
        if t < t0 || t > self.final_time() {
            return None;
        }
        if self.steps.is_empty() {
            return Some(self.states[0].clone());
        }
        let idx = self.steps.partition_point(|s| s.t1() < t);
        let step = &self.steps[idx.min(self.steps.len() - 1)];
        Some(step.eval(t))
    }

    pub(crate) fn push_step(&mut self, step: DenseStep, u: Vec<f64>) {
        self.times.push(step.t1());
        self.states.push(step.end_state());
        self.inputs.push(u);
        self.steps.push(step);
    }

    /// Replaces the last sample (used when an event truncates a step).
    pub(crate) fn truncate_last(&mut self, t: f64, x: Vec<f64>) {
        if let (Some(tl), Some(xl)) = (self.times.last_mut(), self.states.last_mut()) {
            *tl = t;
            *xl = x;
        }
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn append(&mut self, other: Trajectory) {
        let skip =
            usize::from(!other.times.is_empty() && !self.times.is_empty() && other.times[0] <= self.final_time());
        self.times.extend(other.times.into_iter().skip(skip));
        self.states.extend(other.states.into_iter().skip(skip));
        self.inputs.extend(other.inputs.into_iter().skip(skip));
        self.steps.extend(other.steps);
        self.terminal_status = other.terminal_status;
    }
}

/// Integrates the model from `x0` over `[0, t_end]` under `input`.
pub fn integrate(
    model: &VectorFieldModel,
    x0: &[f64],
    p: &[f64],
    input: &dyn InputSignal,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    integrate_from(model, 0.0, x0, p, input, t_end, opts)
}

/// As [`integrate`] but starting at `t0`; `input` is evaluated in absolute time.
pub fn integrate_from(
    model: &VectorFieldModel,
    t0: f64,
    x0: &[f64],
    p: &[f64],
    input: &dyn InputSignal,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    check_dims(model, x0, p)?;
    if !model.state_domain.contains(x0) {
        return Err(Error::InvalidArgument("initial state outside the state domain".into()));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} must exceed t0 = {t0}")));
    }
    let mut u0 = model.zero_input();
    input.value_into(t0, &mut u0);
    let mut traj = Trajectory::empty_at(t0, x0, u0);

    let mut cuts = input.breakpoints(t0, t_end);
    cuts.retain(|c| *c > t0 && *c < t_end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(t_end);

    let mut a = t0;
    let mut x = x0.to_vec();
    let mut h_next = None;
    for (seg, &b) in cuts.iter().enumerate() {
        // Inputs are right-continuous at interior cut points, so stages at
        // the start of a later segment see the post-jump value.
        let nudge = if seg > 0 { 1e-9 * (b - a).max(1e-9) } else { 0.0 };
        let a_open = a + nudge;
        let mut u = model.zero_input();
        let mut u_rec = model.zero_input();
        let mut left = false;
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            input.value_into(t.max(a_open), &mut u);
            model.eval_into(y, p, &u, dy);
        };
        let observer = |step: &DenseStep| {
            let y = step.end_state();
            let t1 = step.t1();
            input.value_into(t1.max(a_open).min(b), &mut u_rec);
            traj.times.push(t1);
            traj.inputs.push(u_rec.clone());
            let outside = !model.state_domain.contains(&y);
            traj.states.push(y);
            traj.steps.push(step.clone());
            if outside {
                left = true;
                StepControl::Stop
            } else {
                StepControl::Continue
            }
        };
        match ode::solve_segment(rhs, a, &x, b, opts, h_next, observer) {
            Ok(end) => {
                if left {
                    traj.terminal_status = TerminalStatus::LeftDomain;
                    return Ok(traj);
                }
                x = end.y;
                h_next = Some(end.next_h);
            }
            Err(_) => {
                traj.terminal_status = TerminalStatus::StepFailure;
                return Ok(traj);
            }
        }
        a = b;
    }
    // Pin the last sample exactly to t_end.
    if let Some(last) = traj.times.last_mut() {
        *last = t_end;
    }
    Ok(traj)
}

fn check_dims(model: &VectorFieldModel, x: &[f64], p: &[f64]) -> Result<()> {
    if x.len() != model.state_dim || p.len() != model.param_dim {
        return Err(Error::InvalidArgument(format!(
            "expected state of length {} and parameters of length {}",
            model.state_dim, model.param_dim
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sampled Kamke–Müller check

/// Worst reflected-Jacobian entries found by [`check_kamke_muller`].
///
/// A PASS is sampled evidence of monotonicity, not a proof.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub samples: usize,
    pub min_state_offdiag: f64,
    pub min_param_entry: f64,
    pub min_input_entry: f64,
    /// Sample `(x, p, u)` attaining the most negative entry overall.
    pub witness: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub pass: bool,
}

/// Samples `(x, p, u)` uniformly over `state_domain × p_range × [0, u_max]`
/// and checks the sign conditions of the reflected Jacobians.
pub fn check_kamke_muller(
    model: &VectorFieldModel,
    p_range: &AxisBox,
    u_max: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    if p_range.dim() != model.param_dim {
        return Err(Error::InvalidArgument("parameter box dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.state_dim;
    let sx = &model.state_order;
    let sp = &model.param_order;
    let su = &model.input_order;
    let mut report = MonotonicityReport {
        samples: n_samples,
        min_state_offdiag: f64::INFINITY,
        min_param_entry: f64::INFINITY,
        min_input_entry: f64::INFINITY,
        witness: None,
        pass: true,
    };
    let mut worst = f64::INFINITY;
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..n)
            .map(|i| draw(&mut rng, model.state_domain.lo[i], model.state_domain.hi[i]))
            .collect();
        let p: Vec<f64> = (0..model.param_dim)
            .map(|k| draw(&mut rng, p_range.lo[k], p_range.hi[k]))
            .collect();
        let u: Vec<f64> = (0..model.input_dim).map(|_| draw(&mut rng, 0.0, u_max)).collect();
        let jx = model.jacobian_x(&x, &p, &u);
        let jp = model.jacobian_p(&x, &p, &u);
        let ju = model.jacobian_u(&x, &p, &u);
        let mut local = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = sx.sign(i) * sx.sign(j) * jx[(i, j)];
                    report.min_state_offdiag = report.min_state_offdiag.min(v);
                    local = local.min(v);
                }
            }
            for k in 0..model.param_dim {
                let v = sx.sign(i) * sp.sign(k) * jp[(i, k)];
                report.min_param_entry = report.min_param_entry.min(v);
                local = local.min(v);
            }
            for k in 0..model.input_dim {
                let v = sx.sign(i) * su.sign(k) * ju[(i, k)];
                report.min_input_entry = report.min_input_entry.min(v);
                local = local.min(v);
            }
        }
        if local < worst {
            worst = local;
            report.witness = Some((x, p, u));
        }
    }
    report.pass = worst >= -1e-9;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Built-in genetic toggle switch

/// Parameter vertices of the toggle-switch case study.
pub mod toggle {
    /// `q = (p11, p12, p21, p22)` lower vertex in the parameter order.
    pub const Q_MIN: [f64; 4] = [1.8, 950.0, 1.2, 1050.0];
    pub const Q_INT: [f64; 4] = [2.0, 1000.0, 1.0, 1000.0];
    pub const Q_MAX: [f64; 4] = [2.2, 1050.0, 0.7, 950.0];
    /// Fixed Hill coefficients and degradation rates.
    pub const P13: i32 = 4;
    pub const P14: f64 = 1.0;
    pub const P23: i32 = 3;
    pub const P24: f64 = 2.0;
    pub const DOMAIN_HI: f64 = 2000.0;
}

/// Mutual-repression toggle switch with free parameters `q = (p11, p12, p21, p22)`.
///
/// `x1' = p11 + p12 / (1 + x2^4) - x1 + u1`,
/// `x2' = p21 + p22 / (1 + x1^3) - 2 x2 + u2`.
pub fn toggle_switch_model() -> VectorFieldModel {
    let field = |x: &[f64], q: &[f64], u: &[f64], dx: &mut [f64]| {
        dx[0] = q[0] + q[1] / (1.0 + x[1].powi(toggle::P13)) - toggle::P14 * x[0] + u[0];
        dx[1] = q[2] + q[3] / (1.0 + x[0].powi(toggle::P23)) - toggle::P24 * x[1] + u[1];
    };
    VectorFieldModel {
        name: "toggle_switch".into(),
        state_dim: 2,
        param_dim: 4,
        input_dim: 2,
        field: Arc::new(field),
        state_order: OrthantOrder { signs: vec![1, -1] },
        param_order: OrthantOrder {
            signs: vec![1, 1, -1, -1],
        },
        input_order: OrthantOrder { signs: vec![1, -1] },
        state_domain: AxisBox {
            lo: vec![0.0, 0.0],
            hi: vec![toggle::DOMAIN_HI, toggle::DOMAIN_HI],
        },
    }
}

/// Parameter box `[q_min, q_max]` in raw coordinates.
pub fn toggle_param_box() -> AxisBox {
    let lo = (0..4).map(|k| toggle::Q_MIN[k].min(toggle::Q_MAX[k])).collect();
    let hi = (0..4).map(|k| toggle::Q_MIN[k].max(toggle::Q_MAX[k])).collect();
    AxisBox { lo, hi }
}

// ---------------------------------------------------------------------------
// JSON model configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrdersConfig {
    pub state: OrthantOrder,
    pub param: OrthantOrder,
    pub input: OrthantOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub state_dim: usize,
    pub param_dim: usize,
    pub input_dim: usize,
    pub orders: OrdersConfig,
    pub domain: AxisBox,
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn toggle_switch() -> Self {
        let m = toggle_switch_model();
        Self::describe(&m, Some("toggle_switch"), toggle::Q_INT.to_vec())
    }

    pub fn describe(model: &VectorFieldModel, builtin: Option<&str>, params: Vec<f64>) -> Self {
        Self {
            name: model.name.clone(),
            state_dim: model.state_dim,
            param_dim: model.param_dim,
            input_dim: model.input_dim,
            orders: OrdersConfig {
                state: model.state_order.clone(),
                param: model.param_order.clone(),
                input: model.input_order.clone(),
            },
            domain: model.state_domain.clone(),
            builtin: builtin.map(str::to_owned),
            params,
        }
    }

    /// Builds the model. A `null` builtin needs a programmatically
    /// registered field.
    pub fn build(&self, custom: Option<Arc<FieldFn>>) -> Result<VectorFieldModel> {
        let field: Arc<FieldFn> = match (self.builtin.as_deref(), custom) {
            (Some("toggle_switch"), _) => {
                if self.state_dim != 2 || self.param_dim != 4 || self.input_dim != 2 {
                    return Err(Error::Config(
                        "toggle_switch needs state_dim 2, param_dim 4, input_dim 2".into(),
                    ));
                }
                toggle_switch_model().field
            }
            (Some(other), _) => return Err(Error::Config(format!("unknown builtin model '{other}'"))),
            (None, Some(f)) => f,
            (None, None) => {
                return Err(Error::Config(
                    "model has no builtin field and none was registered".into(),
                ))
            }
        };
        if !self.params.is_empty() && self.params.len() != self.param_dim {
            return Err(Error::Config("params length must equal param_dim".into()));
        }
        VectorFieldModel::new(
            self.name.clone(),
            self.state_dim,
            self.param_dim,
            self.input_dim,
            field,
            self.orders.state.clone(),
            self.orders.param.clone(),
            self.orders.input.clone(),
            self.domain.clone(),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Linear model `x' = A x + B u` on a symmetric box, for tests and examples.
pub fn linear_model(
    name: &str,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    state_order: OrthantOrder,
    half_width: f64,
) -> Result<VectorFieldModel> {
    let n = a.len();
    let m = b.first().map(Vec::len).unwrap_or(0);
    let field = move |x: &[f64], _p: &[f64], u: &[f64], dx: &mut [f64]| {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[i][j] * x[j];
            }
            for k in 0..m {
                acc += b[i][k] * u[k];
            }
            dx[i] = acc;
        }
    };
    VectorFieldModel::new(
        name,
        n,
        0,
        m,
        Arc::new(field),
        state_order,
        OrthantOrder::positive(0),
        OrthantOrder::positive(m),
        AxisBox::new(vec![-half_width; n], vec![half_width; n])?,
    )
}

/// Draws a point uniformly from `[lo, hi]` (componentwise).
pub fn uniform_in<R: Rng>(rng: &mut R, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| if b > a { rng.gen_range(*a..=*b) } else { *a })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_decay() -> VectorFieldModel {
        linear_model(
            "decay",
            vec![vec![-1.0]],
            vec![vec![1.0]],
            OrthantOrder::positive(1),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn orthant_order_relations() {
        let o = OrthantOrder::new(vec![1, -1]).unwrap();
        assert!(o.leq(&[0.0, 2.0], &[1.0, 1.0]));
        assert!(!o.leq(&[0.0, 1.0], &[1.0, 2.0]));
        assert!(o.ll(&[0.0, 2.0], &[1.0, 1.0]));
        assert!(!o.ll(&[0.0, 2.0], &[1.0, 2.0]));
        assert!(OrthantOrder::new(vec![1, 0]).is_err());
    }

    #[test]
    fn pulse_profile() {
        let p = PulseInput::new(0, 5.0, 2.0).unwrap();
        assert_eq!(p.value(1.0), 5.0);
        assert_eq!(p.value(2.0), 5.0);
        assert_eq!(p.value(2.0001), 0.0);
        assert!(PulseInput::new(0, -1.0, 2.0).is_err());
    }

    #[test]
    fn scalar_decay_closed_form() {
        let m = scalar_decay();
        let traj = integrate(&m, &[1.0], &[], &ZeroInput, 1.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(traj.terminal_status, TerminalStatus::Completed);
        assert!((traj.final_state()[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        let mid = traj.sample(0.5).unwrap();
        assert!((mid[0] - (-0.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn pulse_split_matches_piecewise_integration() {
        let m = scalar_decay();
        let opts = IntegratorOptions::with_tolerances(1e-11, 1e-12);
        let sig = pulse_signal(PulseInput::new(0, 2.0, 0.7).unwrap(), 1);
        let full = integrate(&m, &[0.1], &[], &sig, 2.0, &opts).unwrap();
        let first = integrate(&m, &[0.1], &[], &ConstantInput(vec![2.0]), 0.7, &opts).unwrap();
        let second = integrate(&m, first.final_state(), &[], &ZeroInput, 1.3, &opts).unwrap();
        assert!((full.final_state()[0] - second.final_state()[0]).abs() < 1e-9);
        // closed form: x(t) = 2 + (x0 - 2) e^{-t} up to tau, then decay
        let at_tau = 2.0 + (0.1 - 2.0) * (-0.7f64).exp();
        let exact = at_tau * (-1.3f64).exp();
        assert!((full.final_state()[0] - exact).abs() < 1e-9);
        assert!(full.times.iter().any(|t| (*t - 0.7).abs() < 1e-15));
    }

    #[test]
    fn leaving_the_domain_is_recorded() {
        let m = linear_model(
            "growth",
            vec![vec![1.0]],
            vec![vec![0.0]],
            OrthantOrder::positive(1),
            2.0,
        )
        .unwrap();
        let traj = integrate(&m, &[1.0], &[], &ZeroInput, 5.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(traj.terminal_status, TerminalStatus::LeftDomain);
        assert!(!m.state_domain.contains(traj.final_state()));
        let n = traj.states.len();
        assert!(m.state_domain.contains(&traj.states[n - 2]));
    }

    #[test]
    fn toggle_switch_field_at_origin() {
        let m = toggle_switch_model();
        let dx = m.eval(&[0.0, 0.0], &toggle::Q_INT, &[0.0, 0.0]);
        assert_eq!(dx, vec![1002.0, 1001.0]);
    }

    #[test]
    fn toggle_parameter_vertices_are_ordered() {
        let m = toggle_switch_model();
        assert!(m.param_order.leq(&toggle::Q_MIN, &toggle::Q_INT));
        assert!(m.param_order.leq(&toggle::Q_INT, &toggle::Q_MAX));
        assert!(toggle_param_box().contains(&toggle::Q_INT));
    }

    #[test]
    fn kamke_muller_toggle_passes() {
        let m = toggle_switch_model();
        let rep = check_kamke_muller(&m, &toggle_param_box(), 10.0, 500, 7).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn kamke_muller_flipped_order_fails() {
        let mut m = toggle_switch_model();
        m.state_order = OrthantOrder::positive(2);
        let rep = check_kamke_muller(&m, &toggle_param_box(), 10.0, 200, 7).unwrap();
        assert!(!rep.pass);
        let (x, p, u) = rep.witness.clone().unwrap();
        // finite-difference oracle: the off-diagonal entry at the witness is negative
        let h = 1e-5;
        let fp = m.eval(&[x[0], x[1] + h], &p, &u);
        let fm = m.eval(&[x[0], x[1] - h], &p, &u);
        let d12 = (fp[0] - fm[0]) / (2.0 * h);
        let fp = m.eval(&[x[0] + h, x[1]], &p, &u);
        let fm = m.eval(&[x[0] - h, x[1]], &p, &u);
        let d21 = (fp[1] - fm[1]) / (2.0 * h);
        assert!(d12.min(d21) < 0.0);
    }

    #[test]
    fn kamke_muller_scalar_cooperative() {
        let m = scalar_decay();
        let rep = check_kamke_muller(&m, &AxisBox::new(vec![], vec![]).unwrap(), 1.0, 20, 1).unwrap();
        assert!(rep.pass);
        assert!(check_kamke_muller(&m, &AxisBox::new(vec![], vec![]).unwrap(), 1.0, 0, 1).is_err());
    }

    #[test]
    fn model_config_round_trip_builds_toggle() {
        let cfg = ModelConfig::toggle_switch();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ModelConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        let m = back.build(None).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0], &toggle::Q_INT, &[0.0, 0.0]), vec![1002.0, 1001.0]);
        let mut bad = cfg.clone();
        bad.builtin = None;
        assert!(bad.build(None).is_err());
        assert!(ModelConfig::from_json(r#"{"name":"x"}"#).is_err());
    }
}
