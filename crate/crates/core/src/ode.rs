//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! This is the workhorse behind every flow evaluation in the crate. The
//! solver is deliberately low level: it integrates a closure over a single
//! smooth segment and hands every accepted step to an observer, which can
//! inspect the step's interpolant and stop the integration early. Input
//! discontinuities are handled one level up by splitting the time axis.

use serde::{Deserialize, Serialize};

use crate::error::OdeError;

/// Tolerances and step limits for the adaptive integrator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Steps below this size abort the integration with a step failure.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            max_step: f64::INFINITY,
            min_step: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients (5th minus embedded 4th order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step together with its quartic interpolant.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    dim: usize,
    coeffs: Vec<f64>,
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1()
    }

    /// Evaluates the interpolant; `t` is clamped into the step.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim;
        let theta = if self.h > 0.0 {
            ((t - self.t0) / self.h).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let theta1 = 1.0 - theta;
        let c = &self.coeffs;
        for i in 0..n {
            out[i] =
                c[i] + theta * (c[n + i] + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn start_state(&self) -> &[f64] {
        &self.coeffs[..self.dim]
    }

    pub fn end_state(&self) -> Vec<f64> {
        let n = self.dim;
        (0..n).map(|i| self.coeffs[i] + self.coeffs[n + i]).collect()
    }
}

/// Observer verdict after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct SegmentEnd {
    /// Time reached (`t1` unless the observer stopped early).
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub stopped: bool,
    /// Last step size proposal, reusable for a following segment.
    pub next_h: f64,
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` (`t1 > t0`).
///
/// `observer` is invoked on every accepted step; returning
/// [`StepControl::Stop`] ends the integration at the end of that step.
pub fn solve_segment<F, O>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &IntegratorOptions,
    h_init: Option<f64>,
    mut observer: O,
) -> Result<SegmentEnd, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&DenseStep) -> StepControl,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    if t1 <= t0 {
        return Ok(SegmentEnd {
            t,
            y,
            steps: 0,
            stopped: false,
            next_h: h_init.unwrap_or(0.0),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    rhs(t, &y, &mut k1);
    let span = t1 - t0;
    let max_step = opts.max_step.min(span);
    let mut h = match h_init {
        Some(h) if h > 0.0 => h,
        _ => initial_step(&mut rhs, t, &y, &k1, opts, &mut ytmp, &mut k2),
    }
    .min(max_step);

    let mut steps = 0usize;
    let mut last = false;
    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps { t, steps });
        }
        if t + h >= t1 || (t1 - (t + h)) <= 1e-14 * t1.abs().max(1.0) {
            h = t1 - t;
            last = true;
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, &ynew, &mut k7);

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            err += r * r;
            finite &= ynew[i].is_finite() && k7[i].is_finite();
        }
        let err = (err / n.max(1) as f64).sqrt();

        if !finite || !err.is_finite() {
            // Treat as a rejected step with aggressive shrink.
            h *= 0.1;
            last = false;
            if h < opts.min_step {
                return Err(OdeError::StepSizeUnderflow { t, h });
            }
            continue;
        }

        if err <= 1.0 {
            steps += 1;
            let mut coeffs = vec![0.0; 5 * n];
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                coeffs[i] = y[i];
                coeffs[n + i] = ydiff;
                coeffs[2 * n + i] = bspl;
                coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
                coeffs[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = DenseStep {
                t0: t,
                h,
                dim: n,
                coeffs,
            };
            let t_new = if last { t1 } else { t + h };
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let h_next = (h * factor).min(max_step);
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            let control = observer(&step);
            if control == StepControl::Stop || last {
                return Ok(SegmentEnd {
                    t,
                    y,
                    steps,
                    stopped: control == StepControl::Stop,
                    next_h: h_next,
                });
            }
            h = h_next;
        } else {
            last = false;
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= factor;
            if h < opts.min_step {
                return Err(OdeError::StepSizeUnderflow { t, h });
            }
        }
    }
}

fn initial_step<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    opts: &IntegratorOptions,
    ytmp: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let nf = n.max(1) as f64;
    let (d0, d1) = ((d0 / nf).sqrt(), (d1 / nf).sqrt());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.max_step);
    for i in 0..n {
        ytmp[i] = y[i] + h0 * f0[i];
    }
    rhs(t + h0, ytmp, f1);
    let mut d2 = 0.0;
    for i in 0..n {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    let d2 = (d2 / nf).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).max(opts.min_step * 10.0)
}

/// Locates a root of `g` inside a step by bisection on the interpolant.
///
/// `g_lo` and `g_hi` are the values at `lo` and `hi` and must bracket zero
/// (`g_lo < 0 <= g_hi` or the reverse). Returns the time of the first point
/// on the `g_hi` side.
pub fn bisect_in_step<G>(step: &DenseStep, mut lo: f64, mut hi: f64, g_lo: f64, mut g: G, t_tol: f64) -> f64
where
    G: FnMut(&[f64]) -> f64,
{
    let lo_sign = g_lo >= 0.0;
    let mut buf = vec![0.0; step.dim()];
    while hi - lo > t_tol {
        let mid = 0.5 * (lo + hi);
        step.eval_into(mid, &mut buf);
        if (g(&buf) >= 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
