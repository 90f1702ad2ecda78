use std::fs;
use std::path::Path;

use isopulse_core::contour::{contour_lines, linspace};
use isopulse_core::io::{self, Layer, Plot};
use isopulse_core::*;
use serde::{Deserialize, Serialize};

use crate::fail::Failure;
use crate::output::OutDir;
use crate::{CheckArgs, DesignArgs, EnvelopeArgs, ModelArgs, RegulateArgs, SimulateArgs, SpectralArgs, Vector, Which};

type Res<T> = std::result::Result<T, Failure>;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn read_input(path: &Path, what: &str) -> Res<String> {
    if !path.is_file() {
        return Err(Failure::Validation(format!("{what} not found: {}", path.display())));
    }
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

/// The model and its default parameters.
fn load_model(path: Option<&Path>) -> Res<(VectorFieldModel, Vec<f64>)> {
    let Some(path) = path else {
        return Ok((toggle_switch_model(), toggle::Q_INT.to_vec()));
    };
    let cfg = ModelConfig::from_json(&read_input(path, "model file")?)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let model = cfg.build(None)?;
    let params = if cfg.params.is_empty() {
        vec![0.0; model.param_dim]
    } else {
        cfg.params
    };
    Ok((model, params))
}

fn param_vector(model: &VectorFieldModel, q: &[f64], flag: &str) -> Res<Vec<f64>> {
    if q.len() != model.param_dim {
        return Err(Failure::Validation(format!(
            "--{flag} has {} entries, the model has {} parameters",
            q.len(),
            model.param_dim
        )));
    }
    Ok(q.to_vec())
}

fn resolve(args: &ModelArgs) -> Res<(VectorFieldModel, Vec<f64>)> {
    let (model, default) = load_model(args.model.as_deref())?;
    let q = match &args.q {
        Some(v) => param_vector(&model, &v.0, "q")?,
        None => default,
    };
    Ok((model, q))
}

fn state_arg(model: &VectorFieldModel, v: &Vector, flag: &str) -> Res<Vec<f64>> {
    if v.0.len() != model.state_dim {
        return Err(Failure::Validation(format!(
            "--{flag} needs {} entries",
            model.state_dim
        )));
    }
    Ok(v.0.clone())
}

fn pick(states: &ToggleStates, which: Which) -> Vec<f64> {
    match which {
        Which::Star => states.star.clone(),
        Which::Bullet => states.bullet.clone(),
    }
}

fn other(which: Which) -> Which {
    match which {
        Which::Star => Which::Bullet,
        Which::Bullet => Which::Star,
    }
}

fn eigenfunction(model: &VectorFieldModel, q: &[f64], states: &ToggleStates, at: Which) -> Res<Eigenfunction> {
    Ok(states.eigenfunction(model, q, matches!(at, Which::Bullet), LaplaceOptions::default())?)
}

fn range(v: &Vector, flag: &str) -> Res<(f64, f64)> {
    match v.0[..] {
        [a, b] if a.is_finite() && b.is_finite() && a < b => Ok((a, b)),
        _ => Err(Failure::Validation(format!("--{flag} needs two increasing numbers"))),
    }
}

fn bbox(v: &Vector, flag: &str) -> Res<AxisBox> {
    match v.0[..] {
        [a, b, c, d] if a < c && b < d => Ok(AxisBox::new(vec![a, b], vec![c, d])?),
        _ => Err(Failure::Validation(format!(
            "--{flag} needs lo1,lo2,hi1,hi2 with lo < hi"
        ))),
    }
}

fn positive(v: f64, flag: &str) -> Res<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Validation(format!("--{flag} must be positive, got {v}")))
    }
}

fn grid_axes(mu: (f64, f64), tau: (f64, f64), n: usize) -> Res<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Failure::Validation("--grid needs at least 2 points per axis".into()));
    }
    Ok((linspace(mu.0, mu.1, n), linspace(tau.0, tau.1, n)))
}

// ---------------------------------------------------------------------------
// simulate

/// `design.json` as written by `design`.
#[derive(Serialize, Deserialize)]
struct DesignFile {
    #[serde(flatten)]
    design: PulseDesign,
    channel: usize,
    q: Vec<f64>,
    x0: Vec<f64>,
    lambda1: f64,
}

fn trajectory_plots(traj: &Trajectory) -> (String, String) {
    let n = traj.states.first().map_or(0, Vec::len);
    let mut series = Plot::new("state", "t", "x");
    for i in 0..n {
        let line = traj.times.iter().zip(&traj.states).map(|(t, x)| [*t, x[i]]).collect();
        series = series.layer(Layer::lines(
            &format!("x{}", i + 1),
            COLORS[i % COLORS.len()],
            vec![line],
        ));
    }
    let mut phase = Plot::new("phase plane", "x1", "x2");
    if n >= 2 {
        let line = traj.states.iter().map(|x| [x[0], x[1]]).collect();
        phase = phase.layer(Layer::lines("trajectory", COLORS[0], vec![line]));
    }
    (series.render(), phase.render())
}

pub fn simulate(a: &SimulateArgs, config: &serde_json::Value) -> Res<()> {
    let (model, q) = resolve(&a.model)?;
    positive(a.t_end, "t-end")?;
    let design = match &a.design {
        Some(p) => Some(
            serde_json::from_str::<DesignFile>(&read_input(p, "design file")?)
                .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut out = OutDir::create(&a.out, "simulate", config)?;
    let x0 = match &a.x0 {
        Some(v) => state_arg(&model, v, "x0")?,
        None => pick(&ToggleStates::find(&model, &q)?, a.from),
    };
    let pulse = match (&design, a.mu, a.tau) {
        (Some(d), _, _) => Some(PulseInput::new(d.channel, d.design.mu, d.design.tau)?),
        (None, Some(mu), Some(tau)) => Some(PulseInput::new(a.channel, mu, tau)?),
        (None, None, None) => None,
        _ => return Err(Failure::Validation("--mu and --tau go together".into())),
    };
    if let Some(p) = &pulse {
        if p.channel >= model.input_dim {
            return Err(Failure::Validation(format!("channel {} out of range", p.channel)));
        }
    }
    if let Some(ts) = &a.at_times {
        if ts.0.iter().any(|t| !(0.0..=a.t_end).contains(t)) {
            return Err(Failure::Validation(format!("--at-times must lie in [0, {}]", a.t_end)));
        }
    }
    let opts = IntegratorOptions::with_tolerances(a.rtol, a.atol);
    let traj = out.stage("integrate", || match &pulse {
        Some(p) => integrate(&model, &x0, &q, &pulse_signal(*p, model.input_dim), a.t_end, &opts),
        None => integrate(&model, &x0, &q, &ZeroInput, a.t_end, &opts),
    })?;
    out.write(
        "trajectory.csv",
        &io::trajectory_csv(&traj, a.at_times.as_ref().map(|v| &v.0[..]))?,
    )?;
    if a.svg {
        let (series, phase) = trajectory_plots(&traj);
        out.write("timeseries.svg", &series)?;
        out.write("phase.svg", &phase)?;
    }
    out.finish()?;
    let last = traj.final_state();
    println!(
        "t = {}, x = {last:?}, status {:?}",
        traj.final_time(),
        traj.terminal_status
    );
    match traj.terminal_status {
        TerminalStatus::Completed => Ok(()),
        TerminalStatus::LeftDomain => {
            eprintln!("warning: trajectory left the state domain at t = {}", traj.final_time());
            Ok(())
        }
        TerminalStatus::StepFailure => Err(Failure::Numerical(format!(
            "step size collapsed at t = {}",
            traj.final_time()
        ))),
    }
}

// ---------------------------------------------------------------------------
// spectral

#[derive(Serialize)]
struct SpectralFile<'a> {
    spectral: &'a SpectralData,
    equilibria: &'a ToggleStates,
}

pub fn spectral(a: &SpectralArgs, config: &serde_json::Value) -> Res<()> {
    let (model, q) = resolve(&a.model)?;
    let bx = bbox(&a.bbox, "bbox")?;
    if a.resolution < 8 {
        return Err(Failure::Validation("--resolution must be at least 8".into()));
    }
    let mut out = OutDir::create(&a.out, "spectral", config)?;
    let states = out.stage("equilibria", || ToggleStates::find(&model, &q))?;
    let ef = eigenfunction(&model, &q, &states, a.at)?;
    let field = out.stage("sample", || sample_s1(&ef, &bx, a.resolution))?;
    out.write(
        "spectral.json",
        &io::to_sorted_json(&SpectralFile {
            spectral: &ef.spectral,
            equilibria: &states,
        })?,
    )?;
    out.write("s1_grid.csv", &io::sampled_field_csv(&field))?;
    let mut plot = Plot::new("isostables", "x1", "x2").with_bounds([bx.lo[0], bx.hi[0], bx.lo[1], bx.hi[1]]);
    for (k, level) in a.levels.0.iter().enumerate() {
        let lines = contour_lines(&field.grid, *level);
        if !lines.is_empty() {
            plot = plot.layer(Layer::lines(&format!("s1 = {level}"), COLORS[k % COLORS.len()], lines));
        }
    }
    let eq: Vec<_> = states
        .roots
        .iter()
        .filter(|x| bx.contains(x))
        .map(|x| [x[0], x[1]])
        .collect();
    plot = plot.layer(Layer::Points {
        name: "equilibria".into(),
        color: "#000000".into(),
        points: eq,
    });
    out.write("isostables.svg", &plot.render())?;
    out.finish()?;
    let s = &ef.spectral;
    println!(
        "x = {:?}, lambda1 = {}, gap = {}, v1 = {:?}, w1 = {:?}",
        s.x_star, s.lambda1, s.spectral_gap, s.v1, s.w1
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// design

pub fn design(a: &DesignArgs, config: &serde_json::Value) -> Res<()> {
    let (model, q) = resolve(&a.model)?;
    positive(a.epsilon, "epsilon")?;
    positive(a.e_max, "e-max")?;
    let mu_r = range(&a.mu_range, "mu-range")?;
    let tau_r = range(&a.tau_range, "tau-range")?;
    if a.channel >= model.input_dim {
        return Err(Failure::Validation(format!("channel {} out of range", a.channel)));
    }
    let axes = if a.grid == 0 {
        None
    } else {
        Some(grid_axes(mu_r, tau_r, a.grid)?)
    };
    let mut out = OutDir::create(&a.out, "design", config)?;
    let states = out.stage("equilibria", || ToggleStates::find(&model, &q))?;
    let x0 = match &a.x0 {
        Some(v) => state_arg(&model, v, "x0")?,
        None => pick(&states, other(a.target)),
    };
    let pb = PulseProblem::new(eigenfunction(&model, &q, &states, a.target)?, a.channel)?;
    let design = out.stage("static program", || {
        solve_static_program(&pb, &x0, a.epsilon, a.e_max, &StaticProgramOptions::default())
    })?;
    let file = DesignFile {
        design: design.clone(),
        channel: a.channel,
        q: q.clone(),
        x0: x0.clone(),
        lambda1: pb.lambda1(),
    };
    out.write("design.json", &io::to_sorted_json(&file)?)?;
    if let Some((mus, taus)) = axes {
        let rf = out.stage("r field", || pb.r_grid(&x0, &mus, &taus))?;
        out.write("r_field.csv", &io::r_field_csv(&rf))?;
        let frontier = contour_lines(&rf.r_field(), -a.epsilon);
        let budget: Vec<_> = linspace(tau_r.0, tau_r.1, 200)
            .into_iter()
            .map(|t| [a.e_max / t, t])
            .filter(|p| (mu_r.0..=mu_r.1).contains(&p[0]))
            .collect();
        let plot = Plot::new("pulse design", "mu", "tau")
            .with_bounds([mu_r.0, mu_r.1, tau_r.0, tau_r.1])
            .layer(Layer::lines(&format!("r = -{}", a.epsilon), COLORS[0], frontier))
            .layer(Layer::dashed("mu tau = e_max", COLORS[1], vec![budget]))
            .layer(Layer::Points {
                name: "design".into(),
                color: "#000000".into(),
                points: vec![[design.mu, design.tau]],
            });
        out.write("r_field.svg", &plot.render())?;
    }
    out.finish()?;
    println!(
        "mu = {}, tau = {}, r = {:e}, t_conv = {}, active = {:?}",
        design.mu, design.tau, design.r, design.t_conv, design.active_constraint
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// envelope

#[derive(Serialize)]
struct PairReport {
    a: String,
    b: String,
    report: IntersectionReport,
}

#[derive(Serialize)]
struct IntersectionFile {
    epsilon: f64,
    sigma: f64,
    /// Parameters whose `T = sigma` contour is empty on the grid.
    empty_contours: Vec<String>,
    pairs: Vec<PairReport>,
    members: usize,
    order_bounded: Option<bool>,
}

pub fn envelope(a: &EnvelopeArgs, config: &serde_json::Value) -> Res<()> {
    let (model, _) = load_model(a.model.as_deref())?;
    positive(a.epsilon, "epsilon")?;
    if !(a.sigma >= 0.0) {
        return Err(Failure::Validation("--sigma must be non-negative".into()));
    }
    let (mus, taus) = grid_axes(
        range(&a.mu_range, "mu-range")?,
        range(&a.tau_range, "tau-range")?,
        a.grid,
    )?;
    let p1 = param_vector(&model, &a.p1.0, "p1")?;
    let p2 = param_vector(&model, &a.p2.0, "p2")?;
    if !model.param_order.leq(&p1, &p2) {
        return Err(Failure::Validation(
            "--p1 must precede --p2 in the parameter order".into(),
        ));
    }
    let mid = a
        .p_mid
        .as_ref()
        .map(|v| param_vector(&model, &v.0, "p-mid"))
        .transpose()?;
    let p_ref = match (&a.p_ref, &mid) {
        (Some(v), _) => param_vector(&model, &v.0, "p-ref")?,
        (None, Some(m)) => m.clone(),
        (None, None) => param_vector(&model, &toggle::Q_INT, "p-ref")?,
    };
    let mut out = OutDir::create(&a.out, "envelope", config)?;

    let mut named: Vec<(&str, Vec<f64>)> = vec![("p1", p1.clone())];
    if let Some(m) = &mid {
        named.push(("p_mid", m.clone()));
    }
    named.push(("p2", p2.clone()));
    let target = other(a.from);
    let mut problems = Vec::new();
    let mut starts = Vec::new();
    out.stage("eigenfunctions", || -> Res<()> {
        for (_, q) in &named {
            let st = ToggleStates::find(&model, q)?;
            problems.push(PulseProblem::new(eigenfunction(&model, q, &st, target)?, a.channel)?);
            starts.push(pick(&st, a.from));
        }
        Ok(())
    })?;
    let fields = out.stage("r fields", || {
        problems
            .iter()
            .zip(&starts)
            .map(|(pb, x)| pb.r_grid(x, &mus, &taus))
            .collect::<Result<Vec<_>>>()
    })?;
    let t: Vec<GridField> = fields
        .iter()
        .zip(&problems)
        .map(|(rf, pb)| rf.t_field(pb.lambda1(), a.epsilon))
        .collect();
    let last = named.len() - 1;
    let mut pairs = vec![(0, last)];
    if mid.is_some() {
        pairs = vec![(1, 0), (1, 2), (0, 2)];
    }
    let mut reports = Vec::new();
    for (i, j) in pairs {
        reports.push(PairReport {
            a: named[i].0.into(),
            b: named[j].0.into(),
            report: levelset_intersection_check(&t[i], &t[j], a.sigma)?,
        });
    }

    let x_ref = pick(&ToggleStates::find(&model, &p_ref)?, a.from);
    let (i1, i2) = (0, last);
    let mut env = out.stage("admissible set", || {
        admissible_set(&problems[i1], &problems[i2], &x_ref, a.epsilon, a.sigma, &mus, &taus)
    })?;
    let bounds_report = reports.iter().find(|r| r.a == "p1" && r.b == "p2").map(|r| &r.report);
    if let Some(r) = bounds_report {
        env.mark_order_bounded(r);
    }

    let mut plot = Plot::new(&format!("T = {} contours", a.sigma), "mu", "tau").with_bounds([
        mus[0],
        mus[mus.len() - 1],
        taus[0],
        taus[taus.len() - 1],
    ]);
    let mut empty = Vec::new();
    for (k, (name, _)) in named.iter().enumerate() {
        let lines = contour_lines(&t[k], a.sigma);
        if lines.is_empty() {
            empty.push(name.to_string());
        }
        let layer = if *name == "p_mid" {
            Layer::dashed(name, COLORS[k], lines)
        } else {
            Layer::lines(name, COLORS[k], lines)
        };
        plot = plot.layer(layer);
    }
    let crossings: Vec<_> = reports
        .iter()
        .flat_map(|r| r.report.crossings.iter().copied())
        .collect();
    plot = plot.layer(Layer::Points {
        name: "crossings".into(),
        color: "#000000".into(),
        points: crossings,
    });
    out.write("envelope.svg", &plot.render())?;
    out.write("membership.csv", &io::membership_csv(&env))?;
    out.write("r_fields.csv", &io::tagged_r_fields_csv(&fields[i1], &fields[i2]))?;
    let file = IntersectionFile {
        epsilon: a.epsilon,
        sigma: a.sigma,
        empty_contours: empty.clone(),
        members: env.members().count(),
        order_bounded: env.order_bounded,
        pairs: reports,
    };
    out.write("intersection.json", &io::to_sorted_json(&file)?)?;
    out.finish()?;
    for name in &empty {
        eprintln!("warning: the T = {} contour of {name} is empty on this grid", a.sigma);
    }
    for r in &file.pairs {
        let state = if r.report.suppressed {
            "suppressed".to_string()
        } else {
            format!("{} crossings", r.report.crossings.len())
        };
        println!("{} vs {}: {state}", r.a, r.b);
    }
    println!("{} admissible grid points", file.members);
    Ok(())
}

// ---------------------------------------------------------------------------
// regulate

fn order_box(model: &VectorFieldModel, bx: &AxisBox) -> Res<BoxConstraint> {
    let z = (0..bx.dim())
        .map(|i| {
            if model.state_order.sign(i) > 0.0 {
                bx.lo[i]
            } else {
                bx.hi[i]
            }
        })
        .collect();
    let y = (0..bx.dim())
        .map(|i| {
            if model.state_order.sign(i) > 0.0 {
                bx.hi[i]
            } else {
                bx.lo[i]
            }
        })
        .collect();
    Ok(BoxConstraint::new(z, y)?)
}

const CONTAINMENT_DT: f64 = 0.005;

#[derive(Serialize)]
struct Containment {
    first_cycle_end: Option<f64>,
    samples: usize,
    /// Samples after the first cycle outside the box itself.
    outside_box: usize,
    /// Largest distance outside the box after the first cycle.
    max_excess: f64,
    /// Samples after the first cycle outside the 1.2x box.
    beyond_inflated: usize,
    runaway: Option<f64>,
    pass: bool,
}

pub fn regulate(a: &RegulateArgs, config: &serde_json::Value) -> Res<()> {
    let (model, _) = load_model(a.model.as_deref())?;
    if a.n_anchors == 0 {
        return Err(Failure::Validation("--n-anchors must be at least 1".into()));
    }
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(Failure::Validation(format!("--delta = {} must lie in (0, 1)", a.delta)));
    }
    positive(a.xi_upper, "xi-upper")?;
    positive(a.mu_cap, "mu-cap")?;
    positive(a.t_end, "t-end")?;
    if model.state_dim != 2 || model.input_dim < 2 {
        return Err(Failure::Validation(
            "regulation needs a planar model with two inputs".into(),
        ));
    }
    let q_true = param_vector(&model, &a.q_true.0, "q-true")?;
    let q_lo = param_vector(&model, &a.q_lo.0, "q-lo")?;
    let q_hi = param_vector(&model, &a.q_hi.0, "q-hi")?;
    let inner = bbox(&a.r#box, "box")?;
    let target = order_box(&model, &inner)?;
    let bx = target.inset(a.guard)?;
    let x0 = match &a.x0 {
        Some(v) => state_arg(&model, v, "x0")?,
        None => inner.center(),
    };
    if !bx.contains(&x0) {
        return Err(Failure::Validation("--x0 must lie inside the monitored box".into()));
    }
    let mut out = OutDir::create(&a.out, "regulate", config)?;
    let table = out.stage("anchor table", || -> Res<AnchorTable> {
        let lo = ToggleStates::find(&model, &q_lo)?;
        let hi = ToggleStates::find(&model, &q_hi)?;
        let lowering = PulseProblem::new(eigenfunction(&model, &q_lo, &lo, Which::Bullet)?, 1)?;
        let raising = PulseProblem::new(eigenfunction(&model, &q_hi, &hi, Which::Star)?, 0)?;
        let opts = AnchorOptions {
            n_side: a.n_anchors,
            xi_upper: a.xi_upper,
            mu_cap: a.mu_cap,
        };
        Ok(precompute_boundary_pulses(&lowering, &raising, &bx, a.delta, &opts)?)
    })?;
    out.write("anchors.json", &io::to_sorted_json(&table)?)?;
    let missing = table.infeasible_count();
    if missing > 0 {
        eprintln!(
            "warning: {missing} of {} anchor pulses are infeasible at delta = {} (see the null entries in anchors.json)",
            2 * table.anchors.len(),
            a.delta
        );
    }
    let ode = IntegratorOptions::with_tolerances(1e-9, 1e-9);
    let run = out.stage("regulate", || {
        event_regulate(&model, &q_true, &bx, &table, a.t_end, &x0, &ode)
    })?;
    out.write("trajectory.csv", &io::trajectory_csv(&run.trajectory, None)?)?;
    out.write("events.json", &io::to_sorted_json(&run.log)?)?;

    let outer = inner.inflated(1.2);
    let t1 = run.first_cycle_end();
    let after = |t: f64| t1.is_some_and(|t1| t >= t1);
    let traj = &run.trajectory;
    // stored steps plus a dense pass so excursions inside long steps are seen
    let mut samples: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| after(**t))
        .map(|(_, x)| x.clone())
        .collect();
    if let Some(t1) = t1 {
        let n = ((traj.final_time() - t1) / CONTAINMENT_DT).floor() as usize;
        samples.extend((0..=n).filter_map(|k| traj.sample(t1 + k as f64 * CONTAINMENT_DT)));
    }
    let max_excess = samples.iter().map(|x| inner.excess(x)).fold(0.0, f64::max);
    let outside = samples.iter().filter(|x| !inner.contains(x)).count();
    let beyond = samples.iter().filter(|x| !outer.contains(x)).count();
    let containment = Containment {
        first_cycle_end: t1,
        samples: samples.len(),
        outside_box: outside,
        max_excess,
        beyond_inflated: beyond,
        runaway: run.runaway,
        pass: run.runaway.is_none() && outside == 0 && beyond == 0,
    };
    out.write("containment.json", &io::to_sorted_json(&containment)?)?;

    let line = traj.states.iter().map(|x| [x[0], x[1]]).collect();
    let rect = |name: &str, color: &str, b: &AxisBox| Layer::Rect {
        name: name.into(),
        color: color.into(),
        lo: [b.lo[0], b.lo[1]],
        hi: [b.hi[0], b.hi[1]],
    };
    let plot = Plot::new("event-based regulation", "x1", "x2")
        .layer(rect("box", "#000000", &inner))
        .layer(rect("monitored", "#2ca02c", &bx.axis_box()))
        .layer(rect("1.2x box", "#999999", &outer))
        .layer(Layer::lines("trajectory", COLORS[0], vec![line]))
        .layer(Layer::Points {
            name: "anchors".into(),
            color: COLORS[2].into(),
            points: table.anchors.iter().map(|a| [a.state[0], a.state[1]]).collect(),
        })
        .layer(Layer::Points {
            name: "exits".into(),
            color: COLORS[1].into(),
            points: run.log.events.iter().map(|e| [e.state[0], e.state[1]]).collect(),
        });
    out.write("phase.svg", &plot.render())?;
    out.finish()?;

    println!(
        "{} events, max excess {:.3e}, containment {}",
        run.log.events.len(),
        max_excess,
        if containment.pass { "PASS" } else { "FAIL" }
    );
    if let Some(t) = run.runaway {
        return Err(Failure::Core(Error::RunawayState { t }));
    }
    if !containment.pass {
        return Err(Failure::Regulation(format!(
            "{outside} samples left the box, {beyond} the 1.2x box"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// check

#[derive(Serialize)]
struct CheckLine {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn checks(samples: usize, seed: u64) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    let mut push = |name, pass, detail: String| lines.push(CheckLine { name, pass, detail });

    let toggle_model = toggle_switch_model();
    let pbox = toggle_param_box();
    let rep = check_kamke_muller(&toggle_model, &pbox, 50.0, samples, seed)?;
    push(
        "toggle switch is monotone",
        rep.pass,
        format!("min off-diagonal {:.3e}", rep.min_state_offdiag),
    );

    let mut flipped = toggle_switch_model();
    flipped.state_order = OrthantOrder::positive(2);
    let rep = check_kamke_muller(&flipped, &pbox, 50.0, samples, seed)?;
    push(
        "flipped state order is rejected",
        !rep.pass,
        format!("min off-diagonal {:.3e}", rep.min_state_offdiag),
    );

    let scalar = linear_model(
        "decay",
        vec![vec![-1.0]],
        vec![vec![1.0]],
        OrthantOrder::positive(1),
        10.0,
    )?;
    let rep = check_kamke_muller(&scalar, &AxisBox::new(vec![], vec![])?, 1.0, samples, seed)?;
    push("scalar decay is monotone", rep.pass, String::new());

    let p = PulseInput::new(0, 5.0, 2.0)?;
    let vals = [p.value(1.0), p.value(2.0), p.value(2.0001)];
    push("pulse profile", vals == [5.0, 5.0, 0.0], format!("{vals:?}"));

    let traj = integrate(
        &scalar,
        &[1.0],
        &[],
        &ZeroInput,
        1.0,
        &IntegratorOptions::with_tolerances(1e-12, 1e-12),
    )?;
    let err = (traj.final_state()[0] - (-1f64).exp()).abs();
    push("scalar decay matches exp(-t)", err <= 1e-8, format!("error {err:.2e}"));

    let q = toggle::Q_INT;
    let states = ToggleStates::find(&toggle_model, &q)?;
    let traj = integrate(
        &toggle_model,
        &states.star,
        &q,
        &ZeroInput,
        10.0,
        &IntegratorOptions::default(),
    )?;
    let drift = traj
        .final_state()
        .iter()
        .zip(&states.star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    push("equilibrium is fixed", drift <= 1e-6, format!("drift {drift:.2e}"));

    let spec = dominant_spectrum(&toggle_model, &q, &states.bullet)?;
    let dot: f64 = spec.v1.iter().zip(&spec.w1).map(|(a, b)| a * b).sum();
    push(
        "w1 . v1 = 1",
        (dot - 1.0).abs() <= 1e-12,
        format!("lambda1 {:.6}", spec.lambda1),
    );

    let diag = linear_model(
        "diag",
        vec![vec![-1.0, 0.0], vec![0.0, -3.0]],
        vec![vec![0.0], vec![0.0]],
        OrthantOrder::positive(2),
        10.0,
    )?;
    let x_star = [0.0, 0.0];
    let ef = Eigenfunction::new(
        diag.clone(),
        dominant_spectrum(&diag, &[], &x_star)?,
        LaplaceOptions::default(),
    );
    let mut worst: f64 = 0.0;
    for x1 in linspace(-1.0, 1.0, 5) {
        for x2 in linspace(-1.0, 1.0, 5) {
            let s = ef.value(&[x1, x2]).unwrap_or(f64::NAN);
            worst = worst.max((s - x1).abs());
        }
    }
    push(
        "linear eigenfunction is x1",
        worst <= 1e-5,
        format!("max error {worst:.2e}"),
    );
    Ok(lines)
}

pub fn check(a: &CheckArgs, config: &serde_json::Value) -> Res<()> {
    if a.samples == 0 {
        return Err(Failure::Validation("--samples must be at least 1".into()));
    }
    let lines = checks(a.samples, a.seed)?;
    for l in &lines {
        println!("[{}] {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    if let Some(dir) = &a.out {
        let mut out = OutDir::create(dir, "check", config)?;
        out.write("check.json", &io::to_sorted_json(&lines)?)?;
        out.finish()?;
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} checks failed")));
    }
    Ok(())
}
