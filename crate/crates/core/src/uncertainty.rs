//! Interval parametric uncertainty: minimum-time values to a level set,
//! their ordering across parameter vertices, the admissible pulse set
//! `S_σ` and the target box it certifies.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{self, GridField, Point};
use crate::dynamics::{integrate, pulse_signal, OrthantOrder, PulseInput, Trajectory, VectorFieldModel};
use crate::error::{Error, Result};
use crate::ode::{self, IntegratorOptions, StepControl};
use crate::pulse_design::{PulseProblem, RField};
use crate::spectral::{Eigenfunction, SpectralData};

/// Target `{x : g(x) = β}` for a scalar `g` increasing in the state order.
#[derive(Clone)]
pub struct LevelSetTarget {
    g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub beta: f64,
}

impl fmt::Debug for LevelSetTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSetTarget").field("beta", &self.beta).finish()
    }
}

impl LevelSetTarget {
    pub fn new(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, beta: f64) -> Self {
        Self { g: Arc::new(g), beta }
    }

    /// `g(x) = wᵀx`.
    pub fn linear(w: Vec<f64>, beta: f64) -> Self {
        Self::new(move |x| x.iter().zip(&w).map(|(a, b)| a * b).sum(), beta)
    }

    /// `g = s1(·, p)`; points outside the certified basin map to `−∞`.
    pub fn eigenfunction(ef: Eigenfunction, beta: f64) -> Self {
        Self::new(move |x| ef.value(x).unwrap_or(f64::NEG_INFINITY), beta)
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            g: Arc::clone(&self.g),
            beta,
        }
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    /// Worst reflected finite-difference gradient entry of `g` over `probes`;
    /// nonnegative when `g` is increasing in `order` at every probe.
    pub fn min_reflected_gradient(&self, order: &OrthantOrder, probes: &[Vec<f64>]) -> f64 {
        let mut worst = f64::INFINITY;
        for x in probes {
            let mut xp = x.clone();
            for i in 0..x.len() {
                let h = 1e-6 * (1.0 + x[i].abs());
                xp[i] = x[i] + h;
                let fp = self.g(&xp);
                xp[i] = x[i] - h;
                let fm = self.g(&xp);
                xp[i] = x[i];
                worst = worst.min(order.sign(i) * (fp - fm) / (2.0 * h));
            }
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct LevelHit {
    pub trajectory: Trajectory,
    /// First `(t, x)` with `g(x) = β`, located on the dense output.
    pub crossing: Option<(f64, Vec<f64>)>,
}

/// Integrates under the constant input `u` until `g` crosses `beta` or
/// `t_max` is reached.
#[allow(clippy::too_many_arguments)]
pub fn integrate_to_level(
    model: &VectorFieldModel,
    p: &[f64],
    g: &dyn Fn(&[f64]) -> f64,
    beta: f64,
    x0: &[f64],
    u: &[f64],
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<LevelHit> {
    let above0 = g(x0) >= beta;
    let mut traj = Trajectory::empty_at(0.0, x0, u.to_vec());
    let mut crossing = None;
    let mut g_prev = g(x0) - beta;
    let domain = &model.state_domain;
    let observer = |step: &ode::DenseStep| {
        let y = step.end_state();
        let gy = g(&y) - beta;
        traj.push_step(step.clone(), u.to_vec());
        if (gy >= 0.0) != above0 {
            let t = ode::bisect_in_step(step, step.t0, step.t1(), g_prev, |x| g(x) - beta, 1e-8);
            let x = step.eval(t);
            traj.truncate_last(t, x.clone());
            crossing = Some((t, x));
            return StepControl::Stop;
        }
        g_prev = gy;
        if domain.contains(&y) {
            StepControl::Continue
        } else {
            StepControl::Stop
        }
    };
    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| model.eval_into(x, p, u, dx);
    ode::solve_segment(rhs, 0.0, x0, t_max, opts, None, observer)?;
    Ok(LevelHit {
        trajectory: traj,
        crossing,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueOptions {
    /// Input channel carrying `μ`.
    pub channel: usize,
    pub t_max: f64,
    pub ode: IntegratorOptions,
}

impl Default for ValueOptions {
    fn default() -> Self {
        Self {
            channel: 0,
            t_max: 100.0,
            ode: IntegratorOptions::with_tolerances(1e-10, 1e-10),
        }
    }
}

impl ValueOptions {
    /// `t_max = 100/|λ1|`.
    pub fn for_rate(lambda1: f64) -> Self {
        Self {
            t_max: 100.0 / lambda1.abs(),
            ..Self::default()
        }
    }
}

/// Minimum time `V(x, μ, β, p)` to reach `g = β`: constant `u ≡ μ` from
/// below the level, `u ≡ 0` from above.
pub fn min_time_to_levelset(
    model: &VectorFieldModel,
    p: &[f64],
    target: &LevelSetTarget,
    x: &[f64],
    mu: f64,
    opts: &ValueOptions,
) -> Result<f64> {
    if opts.channel >= model.input_dim {
        return Err(Error::InvalidArgument(format!(
            "input channel {} out of range",
            opts.channel
        )));
    }
    let g0 = target.g(x);
    if g0 == target.beta {
        return Err(Error::InvalidArgument("x already lies on the level set".into()));
    }
    let mut u = model.zero_input();
    if g0 < target.beta {
        u[opts.channel] = mu;
    }
    let g = |y: &[f64]| target.g(y);
    let hit = integrate_to_level(model, p, &g, target.beta, x, &u, opts.t_max, &opts.ode)?;
    hit.crossing
        .map(|(t, _)| t)
        .ok_or(Error::Unreachable { t_max: opts.t_max })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ValueBounds {
    /// `V` at `p1`.
    pub upper: f64,
    /// `V` at `p2`.
    pub lower: f64,
}

/// `V(x, μ, β, p2) ≤ V(x, μ, β, p) ≤ V(x, μ, β, p1)` bracket from the vertices.
pub fn value_bounds(
    model: &VectorFieldModel,
    p1: &[f64],
    p2: &[f64],
    target: &LevelSetTarget,
    x: &[f64],
    mu: f64,
    opts: &ValueOptions,
) -> Result<ValueBounds> {
    if !model.param_order.leq(p1, p2) {
        return Err(Error::InvalidArgument(
            "p1 must precede p2 in the parameter order".into(),
        ));
    }
    if !(target.g(x) < target.beta) {
        return Err(Error::InvalidArgument("value bounds need g(x) < beta".into()));
    }
    Ok(ValueBounds {
        upper: min_time_to_levelset(model, p1, target, x, mu, opts)?,
        lower: min_time_to_levelset(model, p2, target, x, mu, opts)?,
    })
}

/// Point on `s1(·, p) = −ε` along `−v1` from `x*(p)`.
pub fn isostable_corner(ef: &Eigenfunction, epsilon: f64) -> Result<Vec<f64>> {
    let spec = &ef.spectral;
    let at = |c: f64| -> Vec<f64> { spec.x_star.iter().zip(&spec.v1).map(|(x, v)| x - c * v).collect() };
    // s1(x* - c v1) = -c + O(c²); below 1e-8 the quadratic term is below the
    // resolution of the Laplace average.
    let mut c = epsilon;
    if epsilon >= 1e-8 {
        for _ in 0..30 {
            let s = ef
                .value(&at(c))
                .ok_or_else(|| Error::Domain(format!("corner probe at c = {c} left the basin")))?;
            if !(s < 0.0) {
                return Err(Error::Domain("s1 not negative along -v1".into()));
            }
            let next = c * epsilon / s.abs();
            if (next - c).abs() <= 1e-12 * c {
                c = next;
                break;
            }
            c = next;
        }
    }
    Ok(at(c))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissiblePoint {
    pub mu: f64,
    pub tau: f64,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub member: bool,
    pub diverged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintyEnvelope {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub spec1: SpectralData,
    pub spec2: SpectralData,
    pub x: Vec<f64>,
    pub epsilon: f64,
    pub sigma: f64,
    pub mus: Vec<f64>,
    pub taus: Vec<f64>,
    /// Row-major over `(τ, μ)` like [`RField`].
    pub points: Vec<AdmissiblePoint>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// Set by [`UncertaintyEnvelope::mark_order_bounded`]; `None` until checked.
    pub order_bounded: Option<bool>,
}

impl UncertaintyEnvelope {
    pub fn thresholds(&self) -> (f64, f64) {
        (
            -self.epsilon * (self.spec1.lambda1.abs() * self.sigma).exp(),
            -self.epsilon * (self.spec2.lambda1.abs() * self.sigma).exp(),
        )
    }

    pub fn members(&self) -> impl Iterator<Item = &AdmissiblePoint> {
        self.points.iter().filter(|p| p.member)
    }

    pub fn mark_order_bounded(&mut self, report: &IntersectionReport) {
        self.order_bounded = Some(report.crossings.is_empty());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }
}

/// Samples `S_σ(x, p1, p2, ε)` on `mus × taus`.
pub fn admissible_set(
    prob1: &PulseProblem,
    prob2: &PulseProblem,
    x: &[f64],
    epsilon: f64,
    sigma: f64,
    mus: &[f64],
    taus: &[f64],
) -> Result<UncertaintyEnvelope> {
    let model = &prob1.ef.model;
    if !model.param_order.leq(prob1.params(), prob2.params()) {
        return Err(Error::InvalidArgument(
            "p1 must precede p2 in the parameter order".into(),
        ));
    }
    if !(epsilon > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("need epsilon > 0 and sigma >= 0".into()));
    }
    let f1 = prob1.r_grid(x, mus, taus)?;
    let f2 = prob2.r_grid(x, mus, taus)?;
    let th1 = -epsilon * (prob1.rate() * sigma).exp();
    let th2 = -epsilon * (prob2.rate() * sigma).exp();
    let points = f1
        .evals
        .iter()
        .zip(&f2.evals)
        .map(|(a, b)| {
            let diverged = a.r.is_none() || b.r.is_none();
            let member = match (a.r, b.r) {
                (Some(r1), Some(r2)) => r1 >= th1 && r2 <= th2,
                _ => false,
            };
            AdmissiblePoint {
                mu: a.mu,
                tau: a.tau,
                r1: a.r,
                r2: b.r,
                member,
                diverged,
            }
        })
        .collect();
    Ok(UncertaintyEnvelope {
        p1: prob1.params().to_vec(),
        p2: prob2.params().to_vec(),
        spec1: prob1.ef.spectral.clone(),
        spec2: prob2.ef.spectral.clone(),
        x: x.to_vec(),
        epsilon,
        sigma,
        mus: mus.to_vec(),
        taus: taus.to_vec(),
        points,
        z1: isostable_corner(&prob1.ef, epsilon)?,
        z2: isostable_corner(&prob2.ef, epsilon)?,
        order_bounded: None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MembershipSample {
    pub p: Vec<f64>,
    pub endpoint: Vec<f64>,
    /// `s1(endpoint, p1) + ε`; must be `≥ −slack`.
    pub lower_margin: Option<f64>,
    /// `−ε − s1(endpoint, p2)`; must be `≥ −slack`.
    pub upper_margin: Option<f64>,
    /// `min` reflected slack of `z1 ⪯ endpoint` and `endpoint ⪯ z2`.
    pub box_slack: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MembershipReport {
    pub mu: f64,
    pub tau: f64,
    pub samples: Vec<MembershipSample>,
}

impl MembershipReport {
    pub fn violations(&self) -> Vec<&MembershipSample> {
        self.samples.iter().filter(|s| !s.ok).collect()
    }
}

/// Checks that `φ(τ + σ, x, p, μ h(·, τ))` lands in the target set for each `p`.
#[allow(clippy::too_many_arguments)]
pub fn verify_membership(
    prob1: &PulseProblem,
    prob2: &PulseProblem,
    p_samples: &[Vec<f64>],
    x: &[f64],
    mu: f64,
    tau: f64,
    envelope: &UncertaintyEnvelope,
    slack: f64,
) -> Result<MembershipReport> {
    let model = &prob1.ef.model;
    let order = &model.state_order;
    let t_end = tau + envelope.sigma;
    let pulse = pulse_signal(PulseInput::new(prob1.channel, mu, tau)?, model.input_dim);
    let samples = p_samples
        .par_iter()
        .map(|p| -> Result<MembershipSample> {
            let traj = integrate(model, x, p, &pulse, t_end, &prob1.ode)?;
            let endpoint = traj.final_state().to_vec();
            let eps = envelope.epsilon;
            let lower_margin = prob1.ef.value(&endpoint).map(|s| s + eps);
            let upper_margin = prob2.ef.value(&endpoint).map(|s| -eps - s);
            let box_slack = order
                .slack(&envelope.z1, &endpoint)
                .min(order.slack(&endpoint, &envelope.z2));
            let ok = lower_margin.is_some_and(|m| m >= -slack)
                && upper_margin.is_some_and(|m| m >= -slack)
                && box_slack >= -slack;
            Ok(MembershipSample {
                p: p.clone(),
                endpoint,
                lower_margin,
                upper_margin,
                box_slack,
                ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MembershipReport { mu, tau, samples })
}

/// Points `p1 + t (p2 − p1)` for `t` evenly spaced in `[0, 1]`, which stay
/// inside the parameter order interval.
pub fn interpolate_params(p1: &[f64], p2: &[f64], n: usize) -> Vec<Vec<f64>> {
    contour::linspace(0.0, 1.0, n)
        .into_iter()
        .map(|t| p1.iter().zip(p2).map(|(a, b)| a + t * (b - a)).collect())
        .collect()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub sigma: f64,
    pub crossings: Vec<Point>,
    /// `[min μ, max μ]` over the crossings.
    pub mu_range: Option<(f64, f64)>,
    /// Fields were identical; the check was skipped.
    pub suppressed: bool,
}

/// Crossings between the `T = σ` contours of two fields on the same grid.
pub fn levelset_intersection_check(field1: &GridField, field2: &GridField, sigma: f64) -> Result<IntersectionReport> {
    if field1.xs != field2.xs || field1.ys != field2.ys {
        return Err(Error::InvalidArgument("fields must share a grid".into()));
    }
    let same = field1
        .values
        .iter()
        .zip(&field2.values)
        .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()));
    if same {
        return Ok(IntersectionReport {
            sigma,
            suppressed: true,
            ..IntersectionReport::default()
        });
    }
    let c1 = contour::contour_lines(field1, sigma);
    let c2 = contour::contour_lines(field2, sigma);
    let crossings = contour::polyline_crossings(&c1, &c2);
    let mu_range = crossings.iter().fold(None, |acc: Option<(f64, f64)>, p| {
        Some(match acc {
            None => (p[0], p[0]),
            Some((a, b)) => (a.min(p[0]), b.max(p[0])),
        })
    });
    Ok(IntersectionReport {
        sigma,
        crossings,
        mu_range,
        suppressed: false,
    })
}

/// `T`-fields for a set of problems over a shared `(μ, τ)` grid, each from
/// its own initial state.
pub fn t_fields(
    problems: &[(&PulseProblem, &[f64])],
    epsilon: f64,
    mus: &[f64],
    taus: &[f64],
) -> Result<Vec<(RField, GridField)>> {
    problems
        .iter()
        .map(|(pb, x)| {
            let rf = pb.r_grid(x, mus, taus)?;
            let tf = rf.t_field(pb.lambda1(), epsilon);
            Ok((rf, tf))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linear_model;

    fn scalar() -> VectorFieldModel {
        linear_model(
            "decay",
            vec![vec![-1.0]],
            vec![vec![1.0]],
            OrthantOrder::positive(1),
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn forced_reach_time_closed_form() {
        let m = scalar();
        let target = LevelSetTarget::linear(vec![1.0], 1.0);
        let v = min_time_to_levelset(&m, &[], &target, &[0.0], 2.0, &ValueOptions::default()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn unforced_reach_time_from_above() {
        let m = scalar();
        let target = LevelSetTarget::linear(vec![1.0], 1.0);
        let v = min_time_to_levelset(&m, &[], &target, &[2.0], 5.0, &ValueOptions::default()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn unreachable_level() {
        let m = scalar();
        let target = LevelSetTarget::linear(vec![1.0], 3.0);
        let r = min_time_to_levelset(&m, &[], &target, &[0.0], 2.0, &ValueOptions::default());
        assert!(matches!(r, Err(Error::Unreachable { .. })));
        let on = LevelSetTarget::linear(vec![1.0], 0.0);
        assert!(min_time_to_levelset(&m, &[], &on, &[0.0], 2.0, &ValueOptions::default()).is_err());
    }

    #[test]
    fn degenerate_interval_bounds_coincide() {
        let m = scalar();
        let target = LevelSetTarget::linear(vec![1.0], 1.0);
        let b = value_bounds(&m, &[], &[], &target, &[0.0], 2.0, &ValueOptions::default()).unwrap();
        assert_eq!(b.upper, b.lower);
    }

    #[test]
    fn identical_fields_suppressed() {
        let xs = contour::linspace(0.0, 1.0, 5);
        let v: Vec<f64> = (0..25).map(|k| (k % 5) as f64).collect();
        let f = GridField::new(xs.clone(), xs, v);
        let rep = levelset_intersection_check(&f, &f, 2.0).unwrap();
        assert!(rep.suppressed && rep.crossings.is_empty());
    }

    #[test]
    fn crossing_fields_reported() {
        let xs = contour::linspace(-1.0, 1.0, 10);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for y in &xs {
            for x in &xs {
                a.push(x + y);
                b.push(x - y);
            }
        }
        let fa = GridField::new(xs.clone(), xs.clone(), a);
        let fb = GridField::new(xs.clone(), xs, b);
        let rep = levelset_intersection_check(&fa, &fb, 0.05).unwrap();
        assert_eq!(rep.crossings.len(), 1);
        let (lo, hi) = rep.mu_range.unwrap();
        assert!((lo - 0.05).abs() < 1e-9 && (hi - 0.05).abs() < 1e-9);
    }

    #[test]
    fn interpolated_params_stay_ordered() {
        let order = OrthantOrder::new(vec![1, -1]).unwrap();
        let ps = interpolate_params(&[0.0, 2.0], &[1.0, 1.0], 5);
        assert_eq!(ps.len(), 5);
        for w in ps.windows(2) {
            assert!(order.leq(&w[0], &w[1]));
        }
    }
}
