//! Pulse control function `r(x, μ, τ) = s1(φ(τ, x, μ))`, the static
//! minimum-time programs built on it, and the threshold feedback policy.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::GridField;
use crate::dynamics::{integrate, pulse_signal, PulseInput, TerminalStatus, Trajectory};
use crate::error::{Error, Result};
use crate::ode::IntegratorOptions;
use crate::spectral::{Eigenfunction, S1Status};

/// `s1`-evaluator plus the input channel carrying the pulse.
#[derive(Clone, Debug)]
pub struct PulseProblem {
    pub ef: Eigenfunction,
    pub channel: usize,
    /// Integrator settings for the forced phase.
    pub ode: IntegratorOptions,
}

impl PulseProblem {
    pub fn new(ef: Eigenfunction, channel: usize) -> Result<Self> {
        if channel >= ef.model.input_dim {
            return Err(Error::InvalidArgument(format!(
                "input channel {channel} out of range for a {}-input model",
                ef.model.input_dim
            )));
        }
        Ok(Self {
            ef,
            channel,
            ode: IntegratorOptions::with_tolerances(1e-11, 1e-11),
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.ef.lambda1()
    }

    pub fn rate(&self) -> f64 {
        self.ef.lambda1().abs()
    }

    pub fn params(&self) -> &[f64] {
        self.ef.params()
    }

    /// State at the end of the pulse `(mu, tau)` from `x`.
    pub fn pulse_endpoint(&self, x: &[f64], mu: f64, tau: f64) -> Result<(Vec<f64>, TerminalStatus)> {
        if tau == 0.0 {
            return Ok((x.to_vec(), TerminalStatus::Completed));
        }
        let traj = self.pulse_trajectory(x, mu, tau)?;
        Ok((traj.final_state().to_vec(), traj.terminal_status))
    }

    pub fn pulse_trajectory(&self, x: &[f64], mu: f64, tau: f64) -> Result<Trajectory> {
        let pulse = PulseInput::new(self.channel, mu, tau)?;
        let signal = pulse_signal(pulse, self.ef.model.input_dim);
        integrate(&self.ef.model, x, self.params(), &signal, tau, &self.ode)
    }

    /// Evaluates `r(x, mu, tau)`.
    pub fn r_eval(&self, x: &[f64], mu: f64, tau: f64) -> Result<PulseControlEvaluation> {
        if !(mu >= 0.0 && tau >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need mu >= 0 and tau >= 0, got ({mu}, {tau})"
            )));
        }
        if !self.ef.model.state_domain.contains(x) {
            return Err(Error::InvalidArgument("x outside the state domain".into()));
        }
        let (endpoint, status) = self.pulse_endpoint(x, mu, tau)?;
        let side = side_of(&self.ef, &endpoint);
        let (r, status) = match status {
            TerminalStatus::Completed => {
                let s = self.ef.eval(&endpoint);
                (s.value(), s.status)
            }
            TerminalStatus::LeftDomain => (None, S1Status::Diverged),
            TerminalStatus::StepFailure => {
                return Err(Error::Domain(format!(
                    "integration failed during the pulse ({mu}, {tau})"
                )))
            }
        };
        Ok(PulseControlEvaluation {
            x: x.to_vec(),
            mu,
            tau,
            r,
            status,
            side,
            p: self.params().to_vec(),
        })
    }

    /// `r` on the tensor grid `mus × taus`, evaluated in parallel.
    pub fn r_grid(&self, x: &[f64], mus: &[f64], taus: &[f64]) -> Result<RField> {
        let pts: Vec<(f64, f64)> = taus.iter().flat_map(|t| mus.iter().map(move |m| (*m, *t))).collect();
        let evals: Vec<PulseControlEvaluation> = pts
            .par_iter()
            .map(|(m, t)| self.r_eval(x, *m, *t))
            .collect::<Result<_>>()?;
        Ok(RField {
            mus: mus.to_vec(),
            taus: taus.to_vec(),
            evals,
        })
    }
}

fn side_of(ef: &Eigenfunction, x: &[f64]) -> f64 {
    let w1 = &ef.spectral.w1;
    let proj: f64 = x.iter().zip(ef.x_star()).zip(w1).map(|((a, b), w)| (a - b) * w).sum();
    if proj < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PulseControlEvaluation {
    pub x: Vec<f64>,
    pub mu: f64,
    pub tau: f64,
    /// `None` when the endpoint is not certified to lie in the basin.
    pub r: Option<f64>,
    pub status: S1Status,
    /// Side of `x*` the endpoint lies on, `±1` along `w1`.
    pub side: f64,
    pub p: Vec<f64>,
}

impl PulseControlEvaluation {
    /// `r` with diverged values mapped to `±∞` by the endpoint's side, so the
    /// pulse monotonicity in `μ` survives across the basin boundary.
    pub fn signed(&self) -> f64 {
        self.r.unwrap_or(self.side * f64::INFINITY)
    }

    pub fn is_diverged(&self) -> bool {
        self.r.is_none()
    }
}

/// `r` sampled on a `(μ, τ)` grid; `evals[j * mus.len() + i]` is at `(mus[i], taus[j])`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RField {
    pub mus: Vec<f64>,
    pub taus: Vec<f64>,
    pub evals: Vec<PulseControlEvaluation>,
}

impl RField {
    pub fn at(&self, i: usize, j: usize) -> &PulseControlEvaluation {
        &self.evals[j * self.mus.len() + i]
    }

    /// `r` as a grid field with diverged points masked.
    pub fn r_field(&self) -> GridField {
        GridField::new(
            self.mus.clone(),
            self.taus.clone(),
            self.evals.iter().map(|e| e.r.unwrap_or(f64::NAN)).collect(),
        )
    }

    /// Convergence-time field `T(μ, τ) = ln(|r|/ε)/|λ1|`, masked where
    /// `|r| < ε` or diverged.
    pub fn t_field(&self, lambda1: f64, epsilon: f64) -> GridField {
        let rate = lambda1.abs();
        GridField::new(
            self.mus.clone(),
            self.taus.clone(),
            self.evals
                .iter()
                .map(|e| match e.r {
                    Some(r) if r.abs() >= epsilon => (r.abs() / epsilon).ln() / rate,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Time for the unforced flow from `|s1| = |r|` to `|s1| = ε`.
pub fn convergence_time(r_value: f64, lambda1: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    if !(lambda1 < 0.0) {
        return Err(Error::Domain(format!("lambda1 = {lambda1} must be negative")));
    }
    if !(r_value <= -epsilon) {
        return Err(Error::Domain(format!(
            "r = {r_value} is not at or below -epsilon = {}",
            -epsilon
        )));
    }
    Ok((r_value.abs() / epsilon).ln() / lambda1.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveConstraint {
    IsostableReached,
    BudgetSaturated,
    Both,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PulseDesign {
    pub mu: f64,
    pub tau: f64,
    /// `ln|r| + |λ1| τ` at the design.
    pub gamma_star: f64,
    pub t_conv: f64,
    pub active_constraint: ActiveConstraint,
    pub epsilon: f64,
    pub budget: f64,
    pub r: f64,
    /// `t_conv / τ`; the design is only meaningful when this is large.
    pub time_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StaticProgramOptions {
    pub tau_min: f64,
    /// Defaults to `50 / |λ1|`.
    pub tau_max: Option<f64>,
    /// Log-spaced probes along the budget hyperbola.
    pub n_scan: usize,
    /// Required `|r + ε|` for frontier points.
    pub frontier_tol: f64,
    /// Bracket width below which bisection gives up.
    pub width_tol: f64,
}

impl Default for StaticProgramOptions {
    fn default() -> Self {
        Self {
            tau_min: 1e-3,
            tau_max: None,
            n_scan: 48,
            frontier_tol: 1e-7,
            width_tol: 1e-13,
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

/// Objective `ln|r| + rate·τ`; `+∞` where infeasible (`r > −ε` or diverged).
fn objective(r: f64, tau: f64, rate: f64, epsilon: f64) -> f64 {
    if r.is_finite() && r <= -epsilon * (1.0 + 1e-12) {
        r.abs().ln() + rate * tau
    } else if r.is_finite() && r <= -epsilon + 1e-12 {
        epsilon.ln() + rate * tau
    } else {
        f64::INFINITY
    }
}

/// Bisection of `h(s) = r + ε` on `[lo, hi]` with `h(lo) < 0 <= h(hi)`.
/// Returns `(s, r)` for the point on the `lo` side close to the frontier.
fn bisect_frontier(
    mut h: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    epsilon: f64,
    opts: &StaticProgramOptions,
) -> Result<(f64, f64)> {
    let mut best = (lo, h(lo)? - epsilon);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let hm = h(mid)?;
        if hm < 0.0 {
            lo = mid;
            best = (mid, hm - epsilon);
        } else {
            hi = mid;
        }
        if hi - lo <= opts.width_tol * hi.abs().max(1.0) {
            break;
        }
    }
    let r = best.1;
    if (r + epsilon).abs() <= opts.frontier_tol {
        Ok(best)
    } else {
        Err(Error::ToleranceNotMet(format!(
            "bracket [{lo:e}, {hi:e}] still has |r + eps| = {:e}",
            (r + epsilon).abs()
        )))
    }
}

/// Static minimum-time program: drive `x` onto `r = −ε` (or as close as
/// the budget `μτ ≤ e_max` allows) with a single pulse.
pub fn solve_static_program(
    problem: &PulseProblem,
    x: &[f64],
    epsilon: f64,
    e_max: f64,
    opts: &StaticProgramOptions,
) -> Result<PulseDesign> {
    if !(epsilon > 0.0) || !(e_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon and e_max must be positive, got {epsilon} and {e_max}"
        )));
    }
    let rate = problem.rate();
    let tau_min = opts.tau_min;
    let tau_max = opts.tau_max.unwrap_or(50.0 / rate);
    if !(tau_min > 0.0 && tau_max > tau_min && opts.n_scan >= 3) {
        return Err(Error::InvalidArgument("bad tau bracket".into()));
    }
    let start = problem.r_eval(x, 0.0, 0.0)?.signed();
    if !(start < -epsilon) {
        return Err(Error::InvalidArgument(format!(
            "s1(x) = {start} must lie below -epsilon"
        )));
    }
    let r_on_budget = |tau: f64| -> Result<f64> { Ok(problem.r_eval(x, e_max / tau, tau)?.signed()) };

    let design = |mu: f64, tau: f64, r: f64, kind: ActiveConstraint| -> Result<PulseDesign> {
        let r_clamped = r.min(-epsilon);
        let t_conv = convergence_time(r_clamped, problem.lambda1(), epsilon)? + tau;
        Ok(PulseDesign {
            mu,
            tau,
            gamma_star: r_clamped.abs().ln() + rate * tau,
            t_conv,
            active_constraint: kind,
            epsilon,
            budget: e_max,
            r,
            time_ratio: t_conv / tau.max(f64::MIN_POSITIVE),
        })
    };

    // Frontier already crossed at the shortest admissible pulse: lower μ at τ_min.
    let r_tau_min = r_on_budget(tau_min)?;
    if r_tau_min + epsilon >= 0.0 {
        let (mu, r) = bisect_frontier(
            |mu| Ok(problem.r_eval(x, mu, tau_min)?.signed() + epsilon),
            0.0,
            e_max / tau_min,
            epsilon,
            opts,
        )?;
        return design(mu, tau_min, r, ActiveConstraint::IsostableReached);
    }

    let taus = log_grid(tau_min, tau_max, opts.n_scan);
    let mut rs = vec![r_tau_min];
    for &tau in &taus[1..] {
        rs.push(r_on_budget(tau)?);
    }
    let crossing = (1..taus.len()).find(|&k| rs[k] + epsilon >= 0.0);
    let feasible_end = crossing.unwrap_or(taus.len() - 1);

    let mut best: Option<PulseDesign> = None;
    if let Some(k) = crossing {
        let (tau, r) = bisect_frontier(
            |tau| Ok(r_on_budget(tau)? + epsilon),
            taus[k - 1],
            taus[k],
            epsilon,
            opts,
        )?;
        best = Some(design(e_max / tau, tau, r, ActiveConstraint::Both)?);
    }

    // Golden-section on the budget hyperbola around the best feasible probe.
    let objs: Vec<f64> = (0..=feasible_end)
        .map(|k| objective(rs[k], taus[k], rate, epsilon))
        .collect();
    let (k_best, f_best) = objs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, f)| (k, *f))
        .expect("non-empty scan");
    if f_best.is_finite() {
        let lo = taus[k_best.saturating_sub(1)];
        let hi = match crossing {
            Some(k) if k_best + 1 >= k => best.as_ref().map(|d| d.tau).unwrap_or(taus[k]),
            _ => taus[(k_best + 1).min(taus.len() - 1)],
        };
        let f = |tau: f64| -> Result<(f64, f64)> {
            let r = r_on_budget(tau)?;
            Ok((objective(r, tau, rate, epsilon), r))
        };
        let (tau, fval, r) = golden_section(f, lo, hi, 1e-9)?;
        let (tau, fval, r) = if fval <= f_best {
            (tau, fval, r)
        } else {
            (taus[k_best], f_best, rs[k_best])
        };
        let improves = best.as_ref().is_none_or(|d| fval < d.gamma_star - 1e-12);
        if improves && fval.is_finite() {
            best = Some(design(e_max / tau, tau, r, ActiveConstraint::BudgetSaturated)?);
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no probe on mu*tau = {e_max} over tau in [{tau_min}, {tau_max}] reached the basin"
        ))
    })
}

/// Golden-section minimization on `[lo, hi]`; `f` returns `(objective, r)`.
fn golden_section(
    mut f: impl FnMut(f64) -> Result<(f64, f64)>,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<(f64, f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    while (hi - lo) > rel_tol * (lo.abs() + hi.abs()).max(1e-12) {
        if fa.0 <= fb.0 {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b)?;
        }
    }
    Ok(if fa.0 <= fb.0 { (a, fa.0, fa.1) } else { (b, fb.0, fb.1) })
}

/// Central finite differences of `r` in `μ`, `τ` and `x`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RGradient {
    pub r: f64,
    pub dr_dmu: f64,
    pub dr_dtau: f64,
    pub grad_x: Vec<f64>,
}

/// Finite-difference probe of `r` with relative step `h` (absolute floor `h`).
pub fn grad_r_fd(problem: &PulseProblem, x: &[f64], mu: f64, tau: f64, h: f64) -> Result<RGradient> {
    let value = |x: &[f64], mu: f64, tau: f64| -> Result<f64> {
        problem
            .r_eval(x, mu, tau)?
            .r
            .ok_or_else(|| Error::Domain(format!("r diverged at mu = {mu}, tau = {tau}")))
    };
    let r0 = value(x, mu, tau)?;
    let hm = h * mu.abs().max(1.0);
    let ht = h * tau.abs().max(1.0);
    let dr_dmu = (value(x, mu + hm, tau)? - value(x, (mu - hm).max(0.0), tau)?) / (mu + hm - (mu - hm).max(0.0));
    let dr_dtau = (value(x, mu, tau + ht)? - value(x, mu, (tau - ht).max(0.0))?) / (tau + ht - (tau - ht).max(0.0));
    let mut grad_x = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let hx = h * x[i].abs().max(1.0);
        xp[i] = x[i] + hx;
        let fp = value(&xp, mu, tau)?;
        xp[i] = x[i] - hx;
        let fm = value(&xp, mu, tau)?;
        xp[i] = x[i];
        grad_x.push((fp - fm) / (2.0 * hx));
    }
    Ok(RGradient {
        r: r0,
        dr_dmu,
        dr_dtau,
        grad_x,
    })
}

/// Threshold feedback `u(x) = μ` while `s1(x) < β`, else `0`.
#[derive(Debug)]
pub struct ClosedLoopPolicy {
    pub ef: Eigenfunction,
    pub channel: usize,
    pub mu: f64,
    pub beta: f64,
    cache: Mutex<HashMap<Vec<i64>, Option<f64>>>,
    diverged_queries: AtomicUsize,
}

pub fn closed_loop_policy(ef: Eigenfunction, channel: usize, mu: f64, beta: f64) -> Result<ClosedLoopPolicy> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu = {mu} must be positive")));
    }
    if channel >= ef.model.input_dim {
        return Err(Error::InvalidArgument(format!("input channel {channel} out of range")));
    }
    Ok(ClosedLoopPolicy {
        ef,
        channel,
        mu,
        beta,
        cache: Mutex::new(HashMap::new()),
        diverged_queries: AtomicUsize::new(0),
    })
}

impl ClosedLoopPolicy {
    fn key(x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / 1e-9).round() as i64).collect()
    }

    /// Memoized `s1(x)`; `None` outside the certified basin.
    pub fn s1(&self, x: &[f64]) -> Option<f64> {
        let key = Self::key(x);
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return *v;
        }
        let v = self.ef.value(x);
        self.cache.lock().expect("cache lock").insert(key, v);
        v
    }

    /// Scalar input on the policy's channel.
    pub fn u(&self, x: &[f64]) -> f64 {
        match self.s1(x) {
            Some(s) if s < self.beta => self.mu,
            Some(_) => 0.0,
            None => {
                self.diverged_queries.fetch_add(1, Ordering::Relaxed);
                0.0
            }
        }
    }

    pub fn diverged_queries(&self) -> usize {
        self.diverged_queries.load(Ordering::Relaxed)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Closed-loop run from `x0`: the input is held at `μ` until `s1` reaches
    /// `β`, then switched off for the rest of `[0, t_end]`. Points outside the
    /// certified basin count as being below `β`.
    pub fn simulate(&self, x0: &[f64], t_end: f64, opts: &IntegratorOptions) -> Result<ClosedLoopRun> {
        let g = |x: &[f64]| self.s1(x).unwrap_or(f64::NEG_INFINITY);
        let model = &self.ef.model;
        let p = self.ef.params();
        let mut u = model.zero_input();
        u[self.channel] = self.mu;
        let forced = if g(x0) < self.beta {
            Some(crate::uncertainty::integrate_to_level(
                model, p, &g, self.beta, x0, &u, t_end, opts,
            )?)
        } else {
            None
        };
        let (switch_time, x_switch, mut traj) = match forced {
            Some(hit) => match hit.crossing {
                Some((t, x)) => (Some(t), x, hit.trajectory),
                None => {
                    return Ok(ClosedLoopRun {
                        trajectory: hit.trajectory,
                        switch_time: None,
                    })
                }
            },
            None => (
                Some(0.0),
                x0.to_vec(),
                Trajectory::empty_at(0.0, x0, model.zero_input()),
            ),
        };
        let t_s = switch_time.unwrap_or(0.0);
        if t_s < t_end {
            let rest =
                crate::dynamics::integrate_from(model, t_s, &x_switch, p, &crate::dynamics::ZeroInput, t_end, opts)?;
            traj.append(rest);
        }
        Ok(ClosedLoopRun {
            trajectory: traj,
            switch_time,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    /// Time at which `s1` reached `β` and the input was switched off.
    pub switch_time: Option<f64>,
}
