mod common;

use common::Toggle;
use isopulse_core::contour::linspace;
use isopulse_core::uncertainty::{integrate_to_level, ValueOptions};
use isopulse_core::*;

fn tight() -> IntegratorOptions {
    IntegratorOptions::with_tolerances(1e-11, 1e-11)
}

#[test]
fn empty_and_unforced_pulses_on_the_toggle() {
    let t = Toggle::int();
    let pb = PulseProblem::new(t.bullet(), 0).unwrap();
    let x = [600.0, 2.0];
    let s = pb.ef.value(&x).unwrap();
    for mu in [0.0, 3.0, 40.0] {
        let r = pb.r_eval(&x, mu, 0.0).unwrap().r.unwrap();
        assert!((r - s).abs() <= 1e-9 * s.abs());
    }
    for tau in [0.5, 2.0, 5.0] {
        let r = pb.r_eval(&x, 0.0, tau).unwrap().r.unwrap();
        let want = s * (pb.lambda1() * tau).exp();
        assert!((r - want).abs() <= 1e-6 * want.abs(), "{r} vs {want}");
    }
}

#[test]
fn objective_decreases_along_grid_lines() {
    let t = Toggle::int();
    let pb = PulseProblem::new(t.bullet(), 0).unwrap();
    let mus = linspace(2.5, 10.0, 16);
    let taus = linspace(0.5, 12.0, 16);
    let field = pb.r_grid(&t.states.star, &mus, &taus).unwrap();
    let rate = pb.rate();
    let obj = |i: usize, j: usize| -> Option<f64> {
        let r = field.at(i, j).r?;
        (r < 0.0).then(|| r.abs().ln() + rate * taus[j])
    };
    let mut pairs = 0;
    for j in 0..taus.len() {
        for i in 1..mus.len() {
            if let (Some(a), Some(b)) = (obj(i - 1, j), obj(i, j)) {
                assert!(
                    b <= a + 1e-9 * a.abs().max(1.0),
                    "mu line at tau {}: {a} -> {b}",
                    taus[j]
                );
                pairs += 1;
            }
        }
    }
    for i in 0..mus.len() {
        for j in 1..taus.len() {
            if let (Some(a), Some(b)) = (obj(i, j - 1), obj(i, j)) {
                assert!(
                    b <= a + 1e-9 * a.abs().max(1.0),
                    "tau line at mu {}: {a} -> {b}",
                    mus[i]
                );
                pairs += 1;
            }
        }
    }
    assert!(pairs >= 50, "only {pairs} comparable neighbours");
}

#[test]
fn designs_respect_their_contract() {
    let t = Toggle::int();
    let pb = PulseProblem::new(t.bullet(), 0).unwrap();
    for (eps, e_max) in [(1e-2, 26.0), (1e-3, 40.0), (1e-14, 100.0)] {
        let d = solve_static_program(&pb, &t.states.star, eps, e_max, &StaticProgramOptions::default()).unwrap();
        assert!(d.mu * d.tau <= e_max + 1e-9);
        assert!(d.r <= -eps + 1e-9, "{d:?}");
        let t_conv = (d.gamma_star - eps.ln()) / pb.rate();
        assert!((d.t_conv - t_conv).abs() <= 1e-9 * t_conv, "{d:?}");
        match d.active_constraint {
            ActiveConstraint::BudgetSaturated => assert!((d.mu * d.tau - e_max).abs() <= 1e-9),
            ActiveConstraint::IsostableReached => assert!((d.r + eps).abs() <= 1e-6),
            ActiveConstraint::Both => {
                assert!((d.mu * d.tau - e_max).abs() <= 1e-9 && (d.r + eps).abs() <= 1e-6)
            }
        }
    }
}

#[test]
fn tiny_epsilon_design_lands_on_the_frontier() {
    let t = Toggle::int();
    let pb = PulseProblem::new(t.bullet(), 0).unwrap();
    let eps = 1e-14;
    let d = solve_static_program(&pb, &t.states.star, eps, 100.0, &StaticProgramOptions::default()).unwrap();
    assert_ne!(d.active_constraint, ActiveConstraint::BudgetSaturated);
    // x1 ~ 943 resolves deviations only to ~1e-13, so r sits within that of -ε
    assert!((d.r + eps).abs() <= 1e-11, "{d:?}");
}

#[test]
fn frontier_design_converges_when_predicted() {
    let t = Toggle::int();
    let pb = PulseProblem::new(t.bullet(), 0).unwrap();
    let eps = 1e-6;
    let d = solve_static_program(&pb, &t.states.star, eps, 100.0, &StaticProgramOptions::default()).unwrap();
    assert_ne!(d.active_constraint, ActiveConstraint::BudgetSaturated);
    let ef = pb.ef.clone();
    let g = move |x: &[f64]| ef.value(x).unwrap_or(f64::NEG_INFINITY);
    let hit = integrate_to_level(&t.model, &t.q, &g, -eps, &t.states.star, &[d.mu, 0.0], d.tau, &tight()).unwrap();
    let crossed = match hit.crossing {
        Some((tt, _)) => tt,
        None if g(hit.trajectory.final_state()) >= -eps => d.tau,
        None => {
            let end = hit.trajectory.final_state().to_vec();
            d.tau
                + integrate_to_level(&t.model, &t.q, &g, -eps, &end, &[0.0, 0.0], 100.0, &tight())
                    .unwrap()
                    .crossing
                    .expect("relaxation reaches the isostable")
                    .0
        }
    };
    assert!(
        (crossed - d.t_conv).abs() <= 0.02 * d.t_conv,
        "{crossed} vs {}",
        d.t_conv
    );
}

#[test]
fn closed_loop_switches_where_the_value_function_says() {
    let t = Toggle::int();
    let eps = 1e-2;
    let mu = 5.0;
    let policy = closed_loop_policy(t.bullet(), 0, mu, -eps).unwrap();
    let run = policy.simulate(&t.states.star, 40.0, &tight()).unwrap();
    let ts = run.switch_time.expect("policy reaches the level");
    let target = LevelSetTarget::eigenfunction(t.bullet(), -eps);
    let v = min_time_to_levelset(&t.model, &t.q, &target, &t.states.star, mu, &ValueOptions::default()).unwrap();
    assert!((ts - v).abs() <= 0.02 * v, "{ts} vs {v}");

    // the same crossing from r: bisect τ for r(x*, μ, τ) = −ε
    let pb = PulseProblem::new(t.bullet(), 0).unwrap();
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pb.r_eval(&t.states.star, mu, mid).unwrap().signed() < -eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((hi - v).abs() <= 1e-4 * v, "{hi} vs {v}");

    // afterwards the input is off and s1 decays
    let later = run.trajectory.sample(ts + 2.0).unwrap();
    let s = policy.ef.value(&later).unwrap();
    assert!((s + eps * (-2.0 * policy.ef.spectral.rate()).exp()).abs() <= 1e-4 * eps);
    assert_eq!(policy.u(&later), 0.0);
}
