//! Event-based regulation inside an order interval around a saddle.
//!
//! Exits through the faces that lie above the box in the state order mean
//! the flow is heading for the upper equilibrium `x•`; they are answered on
//! the lowering channel with a pulse aimed at `∂−B_{1/δ}(x•(q_min))`. Exits
//! through the lower faces head for `x*` and are answered on the raising
//! channel with a pulse aimed at `∂+B_{1/δ}(x*(q_max))`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AxisBox, Trajectory, VectorFieldModel};
use crate::error::{Error, Result};
use crate::ode::{self, IntegratorOptions, StepControl};
use crate::pulse_design::PulseProblem;

/// Order interval `[z, y]`, stored as the axis-aligned box it spans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl BoxConstraint {
    pub fn new(z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if z.len() != y.len() || z.is_empty() {
            return Err(Error::InvalidArgument(
                "box corners must have equal, nonzero length".into(),
            ));
        }
        Ok(Self { z, y })
    }

    /// The case-study box `[4, 10] × [4, 10]`.
    pub fn toggle_case_study() -> Self {
        Self {
            z: vec![4.0, 10.0],
            y: vec![10.0, 4.0],
        }
    }

    pub fn axis_box(&self) -> AxisBox {
        let lo = self.z.iter().zip(&self.y).map(|(a, b)| a.min(*b)).collect();
        let hi = self.z.iter().zip(&self.y).map(|(a, b)| a.max(*b)).collect();
        AxisBox { lo, hi }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axis_box().contains(x)
    }

    /// The box shrunk by `margin` on every face. Exits are detected on the
    /// boundary, so the state overshoots the monitored box before a pulse
    /// turns it around; monitoring an inset box keeps that overshoot inside
    /// the original one.
    pub fn inset(&self, margin: f64) -> Result<Self> {
        let b = self.axis_box();
        if !(margin >= 0.0) || b.lo.iter().zip(&b.hi).any(|(l, h)| h - l <= 2.0 * margin) {
            return Err(Error::InvalidArgument(format!(
                "margin {margin} does not fit inside the box"
            )));
        }
        let shift = |v: &[f64], toward: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(toward)
                .map(|(a, b)| if a < b { a + margin } else { a - margin })
                .collect()
        };
        Ok(Self {
            z: shift(&self.z, &self.y),
            y: shift(&self.y, &self.z),
        })
    }
}

/// Points spaced evenly along the boundary of a 2-D box, `n_side` per edge,
/// counter-clockwise from the lower-left corner.
pub fn boundary_points(bx: &AxisBox, n_side: usize) -> Vec<Vec<f64>> {
    let (x0, x1, y0, y1) = (bx.lo[0], bx.hi[0], bx.lo[1], bx.hi[1]);
    let edges = [
        ([x0, y0], [x1, y0]),
        ([x1, y0], [x1, y1]),
        ([x1, y1], [x0, y1]),
        ([x0, y1], [x0, y0]),
    ];
    let mut out = Vec::with_capacity(4 * n_side);
    for (a, b) in edges {
        for k in 0..n_side {
            let t = (k as f64 + 0.5) / n_side as f64;
            out.push(vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    /// Toward the upper equilibrium `x•`; answered on the lowering channel.
    Upper,
    /// Toward the lower equilibrium `x*`; answered on the raising channel.
    Lower,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelPulse {
    pub mu: f64,
    pub xi_lower: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Anchor {
    pub state: Vec<f64>,
    /// Pulse on the lowering channel toward `∂−B_{1/δ}(x•(q_min))`.
    pub lowering: Option<ChannelPulse>,
    /// Pulse on the raising channel toward `∂+B_{1/δ}(x*(q_max))`.
    pub raising: Option<ChannelPulse>,
}

impl Anchor {
    pub fn pulse(&self, heading: Heading) -> Option<&ChannelPulse> {
        match heading {
            Heading::Upper => self.lowering.as_ref(),
            Heading::Lower => self.raising.as_ref(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorTable {
    pub anchors: Vec<Anchor>,
    pub xi_upper: f64,
    pub delta: f64,
    pub mu_cap: f64,
    pub lowering_channel: usize,
    pub raising_channel: usize,
}

impl AnchorTable {
    pub fn infeasible_count(&self) -> usize {
        self.anchors
            .iter()
            .map(|a| usize::from(a.lowering.is_none()) + usize::from(a.raising.is_none()))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("anchor table serializes")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorOptions {
    pub n_side: usize,
    pub xi_upper: f64,
    pub mu_cap: f64,
}

impl Default for AnchorOptions {
    fn default() -> Self {
        Self {
            n_side: 8,
            xi_upper: 10.0,
            mu_cap: 50.0,
        }
    }
}

/// Smallest `μ ∈ [0, μ_cap]` with `pass(μ)`, assuming `pass` is monotone.
fn bisect_smallest(mut pass: impl FnMut(f64) -> Result<bool>, hi: f64, tol: f64) -> Result<Option<f64>> {
    if !pass(hi)? {
        return Ok(None);
    }
    if pass(0.0)? {
        return Ok(Some(0.0));
    }
    let (mut lo, mut hi) = (0.0, hi);
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if pass(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Magnitude and lower time bound for one anchor and one target isostable.
///
/// `toward` is `−1` when the pulse lowers `s1` to `−level`, `+1` when it
/// raises it to `+level`. Anchors outside the target basin, or with the
/// target level unattainable within `μ_cap`, are infeasible for that channel.
fn anchor_pulse(
    problem: &PulseProblem,
    x: &[f64],
    level: f64,
    toward: f64,
    opts: &AnchorOptions,
) -> Result<Option<ChannelPulse>> {
    let reached = |r: f64| toward * r >= level;
    if problem.r_eval(x, 0.0, 0.0)?.is_diverged() {
        return Ok(None);
    }
    let xi = opts.xi_upper;
    let Some(mu) = bisect_smallest(|mu| Ok(reached(problem.r_eval(x, mu, xi)?.signed())), opts.mu_cap, 1e-9)? else {
        return Ok(None);
    };
    let xi_lower = bisect_smallest(|tau| Ok(reached(problem.r_eval(x, mu, tau)?.signed())), xi, 1e-9)?.unwrap_or(xi);
    Ok(Some(ChannelPulse { mu, xi_lower }))
}

/// Computes the boundary pulse table.
///
/// `lowering` evaluates `s1` of `x•(q_min)` with its channel set to the
/// lowering input; `raising` evaluates `s1` of `x*(q_max)` on the raising
/// input.
pub fn precompute_boundary_pulses(
    lowering: &PulseProblem,
    raising: &PulseProblem,
    bx: &BoxConstraint,
    delta: f64,
    opts: &AnchorOptions,
) -> Result<AnchorTable> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must lie in (0, 1)")));
    }
    if opts.n_side == 0 {
        return Err(Error::InvalidArgument("need at least one anchor per edge".into()));
    }
    if lowering.ef.model.state_dim != 2 || bx.z.len() != 2 {
        return Err(Error::InvalidArgument(
            "anchor placement is defined for 2-D boxes".into(),
        ));
    }
    let level = 1.0 / delta;
    let points = boundary_points(&bx.axis_box(), opts.n_side);
    let anchors = points
        .into_iter()
        .map(|x| -> Result<Anchor> {
            Ok(Anchor {
                lowering: anchor_pulse(lowering, &x, level, -1.0, opts)?,
                raising: anchor_pulse(raising, &x, level, 1.0, opts)?,
                state: x,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnchorTable {
        anchors,
        xi_upper: opts.xi_upper,
        delta,
        mu_cap: opts.mu_cap,
        lowering_channel: lowering.channel,
        raising_channel: raising.channel,
    })
}

/// Index of the closest anchor (Euclidean, lowest index on ties) that has a
/// pulse for `heading`; `None` considers every anchor.
pub fn nearest_anchor(x: &[f64], table: &AnchorTable, heading: Option<Heading>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in table.anchors.iter().enumerate() {
        if let Some(h) = heading {
            if a.pulse(h).is_none() {
                continue;
            }
        }
        let d: f64 = a.state.iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoFeasibleAnchor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Exit while heading for `x•` (the flow acts like the raising input).
    ExitDuringU1Phase,
    /// Exit while heading for `x*`.
    ExitDuringU2Phase,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegulationEvent {
    pub time: f64,
    pub kind: EventKind,
    pub state: Vec<f64>,
    pub anchor: usize,
    pub channel: usize,
    pub mu: f64,
    pub window: (f64, f64),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<RegulationEvent>,
}

impl EventLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("event log serializes")
    }
}

#[derive(Clone, Debug)]
pub struct RegulationRun {
    pub trajectory: Trajectory,
    pub log: EventLog,
    /// Time the state left the 2× inflated box, if it did.
    pub runaway: Option<f64>,
}

impl RegulationRun {
    pub fn into_result(self) -> Result<Self> {
        match self.runaway {
            Some(t) => Err(Error::RunawayState { t }),
            None => Ok(self),
        }
    }

    /// End of the first fired pulse.
    pub fn first_cycle_end(&self) -> Option<f64> {
        self.log.events.first().map(|e| e.window.1)
    }
}

/// Which way the state is moving at `x`, read from its velocity:
/// increasing in the state order means heading for `x•`.
pub fn exit_heading(model: &VectorFieldModel, q_true: &[f64], u: &[f64], x: &[f64]) -> Heading {
    let v = model.eval(x, q_true, u);
    let up: f64 = v.iter().enumerate().map(|(i, vi)| model.state_order.sign(i) * vi).sum();
    if up >= 0.0 {
        Heading::Upper
    } else {
        Heading::Lower
    }
}

fn margin(bx: &AxisBox, x: &[f64]) -> f64 {
    x.iter()
        .zip(bx.lo.iter().zip(&bx.hi))
        .map(|(v, (a, b))| (v - a).min(b - v))
        .fold(f64::INFINITY, f64::min)
}

struct PhaseEnd {
    x: Vec<f64>,
    t: f64,
    exit: bool,
    runaway: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    model: &VectorFieldModel,
    p: &[f64],
    u: &[f64],
    t0: f64,
    x0: &[f64],
    t1: f64,
    monitor: Option<&AxisBox>,
    outer: &AxisBox,
    opts: &IntegratorOptions,
    traj: &mut Trajectory,
) -> Result<PhaseEnd> {
    let mut exit = None;
    let mut runaway = None;
    let mut m_prev = monitor.map(|b| margin(b, x0));
    let observer = |step: &ode::DenseStep| {
        let y = step.end_state();
        traj.push_step(step.clone(), u.to_vec());
        if !outer.contains(&y) {
            let g0 = margin(outer, step.start_state());
            let t = ode::bisect_in_step(step, step.t0, step.t1(), g0, |x| margin(outer, x), 1e-6);
            runaway = Some(t);
            return StepControl::Stop;
        }
        if let (Some(b), Some(mp)) = (monitor, m_prev) {
            let m = margin(b, &y);
            if m < 0.0 && mp >= 0.0 {
                let t = ode::bisect_in_step(step, step.t0, step.t1(), mp, |x| margin(b, x), 1e-6);
                let x = step.eval(t);
                traj.truncate_last(t, x.clone());
                exit = Some((t, x));
                return StepControl::Stop;
            }
            m_prev = Some(m);
        }
        StepControl::Continue
    };
    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| model.eval_into(x, p, u, dx);
    let end = ode::solve_segment(rhs, t0, x0, t1, opts, None, observer)?;
    if let Some(t) = runaway {
        return Ok(PhaseEnd {
            x: end.y,
            t,
            exit: false,
            runaway: Some(t),
        });
    }
    Ok(match exit {
        Some((t, x)) => PhaseEnd {
            x,
            t,
            exit: true,
            runaway: None,
        },
        None => PhaseEnd {
            x: end.y,
            t: end.t,
            exit: false,
            runaway: None,
        },
    })
}

/// Simulates the event-based scheme from `x0` at the true parameters.
pub fn event_regulate(
    model: &VectorFieldModel,
    q_true: &[f64],
    bx: &BoxConstraint,
    table: &AnchorTable,
    t_end: f64,
    x0: &[f64],
    opts: &IntegratorOptions,
) -> Result<RegulationRun> {
    let inner = bx.axis_box();
    if !inner.contains(x0) {
        return Err(Error::InvalidArgument("x0 must lie inside the box".into()));
    }
    if table.anchors.is_empty() {
        return Err(Error::NoFeasibleAnchor);
    }
    let outer = inner.inflated(2.0);
    let zero = model.zero_input();
    let mut traj = Trajectory::empty_at(0.0, x0, zero.clone());
    let mut log = EventLog::default();
    let mut t = 0.0;
    let mut x = x0.to_vec();
    while t < t_end {
        // Re-entry events that happened during a pulse are handled at once.
        let end = if inner.contains(&x) {
            run_phase(
                model,
                q_true,
                &zero,
                t,
                &x,
                t_end,
                Some(&inner),
                &outer,
                opts,
                &mut traj,
            )?
        } else {
            PhaseEnd {
                x: x.clone(),
                t,
                exit: true,
                runaway: None,
            }
        };
        if let Some(tr) = end.runaway {
            return Ok(RegulationRun {
                trajectory: traj,
                log,
                runaway: Some(tr),
            });
        }
        t = end.t;
        x = end.x;
        if !end.exit {
            break;
        }
        let heading = exit_heading(model, q_true, &zero, &x);
        let idx = nearest_anchor(&x, table, Some(heading))?;
        let pulse = table.anchors[idx].pulse(heading).expect("filtered by nearest_anchor");
        let (kind, channel) = match heading {
            Heading::Upper => (EventKind::ExitDuringU1Phase, table.lowering_channel),
            Heading::Lower => (EventKind::ExitDuringU2Phase, table.raising_channel),
        };
        let t_stop = (t + table.xi_upper).min(t_end);
        log.events.push(RegulationEvent {
            time: t,
            kind,
            state: x.clone(),
            anchor: idx,
            channel,
            mu: pulse.mu,
            window: (t, t_stop),
        });
        let mut u = zero.clone();
        u[channel] = pulse.mu;
        let end = run_phase(model, q_true, &u, t, &x, t_stop, None, &outer, opts, &mut traj)?;
        if let Some(tr) = end.runaway {
            return Ok(RegulationRun {
                trajectory: traj,
                log,
                runaway: Some(tr),
            });
        }
        t = end.t;
        x = end.x;
    }
    if let Some(last) = traj.times.last_mut() {
        *last = last.min(t_end);
    }
    Ok(RegulationRun {
        trajectory: traj,
        log,
        runaway: None,
    })
}
