mod common;

use common::{above, Toggle};
use isopulse_core::contour::{contour_lines, linspace};
use isopulse_core::dynamics::{toggle, uniform_in};
use isopulse_core::uncertainty::{interpolate_params, ValueOptions};
use isopulse_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn g_lin() -> LevelSetTarget {
    LevelSetTarget::linear(vec![1.0, -1.0], 0.0)
}

fn value_opts() -> ValueOptions {
    ValueOptions {
        t_max: 200.0,
        ..Default::default()
    }
}

#[test]
fn linear_target_is_increasing() {
    let m = toggle_switch_model();
    let probes: Vec<Vec<f64>> = linspace(1.0, 1500.0, 7)
        .into_iter()
        .flat_map(|a| linspace(0.5, 80.0, 7).into_iter().map(move |b| vec![a, b]))
        .collect();
    assert!(g_lin().min_reflected_gradient(&m.state_order, &probes) >= 0.0);
}

#[test]
fn interior_parameters_fall_inside_the_value_bracket() {
    let m = toggle_switch_model();
    let ps = interpolate_params(&toggle::Q_MIN, &toggle::Q_MAX, 7);
    for (x, mu, beta) in [
        ([2.0, 56.0], 5.0, 0.0),
        ([10.0, 30.0], 3.0, 20.0),
        ([0.0, 80.0], 12.0, -10.0),
    ] {
        let target = g_lin().with_beta(beta);
        let b = value_bounds(&m, &toggle::Q_MIN, &toggle::Q_MAX, &target, &x, mu, &value_opts()).unwrap();
        assert!(b.lower <= b.upper);
        for p in &ps[1..6] {
            let v = min_time_to_levelset(&m, p, &target, &x, mu, &value_opts()).unwrap();
            let slack = 1e-6 * b.upper;
            assert!(
                b.lower - slack <= v && v <= b.upper + slack,
                "{} <= {v} <= {}",
                b.lower,
                b.upper
            );
        }
    }
}

#[test]
fn later_arrival_at_the_dominating_tuple_needs_a_higher_level() {
    let m = toggle_switch_model();
    let pbox = toggle_param_box();
    let sx = m.state_order.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut seen = 0;
    let mut later = 0;
    while seen < 16 {
        let y = uniform_in(&mut rng, &[0.0, 20.0], &[20.0, 80.0]);
        let z = above(&sx, &y, &uniform_in(&mut rng, &[0.0, 0.0], &[5.0, 5.0]));
        let nu = rng.gen_range(2.0..20.0);
        let mu = nu + rng.gen_range(0.0..5.0);
        let p1 = uniform_in(&mut rng, &pbox.lo, &pbox.hi);
        let p2: Vec<f64> = (0..4)
            .map(|i| {
                (p1[i] + m.param_order.sign(i) * rng.gen_range(0.0..0.5) * (pbox.hi[i] - pbox.lo[i]))
                    .clamp(pbox.lo[i], pbox.hi[i])
            })
            .collect();
        let lo = (z[0] - z[1]).max(y[0] - y[1]) + 1.0;
        let alpha = lo + rng.gen_range(0.0..40.0);
        let beta = lo + rng.gen_range(0.0..40.0);
        let va = min_time_to_levelset(&m, &p2, &g_lin().with_beta(alpha), &z, mu, &value_opts());
        let vb = min_time_to_levelset(&m, &p1, &g_lin().with_beta(beta), &y, nu, &value_opts());
        let (Ok(va), Ok(vb)) = (va, vb) else { continue };
        seen += 1;
        if va > vb {
            later += 1;
            assert!(
                alpha > beta - 1e-9,
                "V(z) = {va} > V(y) = {vb} with alpha {alpha} <= beta {beta}"
            );
        }
    }
    assert!(later > 0, "no tuple exercised the contrapositive");
}

fn switching(t: &Toggle) -> PulseProblem {
    PulseProblem::new(t.bullet(), 0).unwrap()
}

#[test]
fn coincident_parameters_split_the_grid_at_the_level_set() {
    // from x•(q_int) the q_max eigenfunction starts negative
    let t = Toggle::at(toggle::Q_MAX);
    let pb = switching(&t);
    let x = Toggle::int().states.bullet.clone();
    let mus = linspace(0.5, 20.0, 10);
    let taus = linspace(0.1, 5.0, 10);
    let (eps, sigma) = (1e-3, 3.0);
    let env = admissible_set(&pb, &pb, &x, eps, sigma, &mus, &taus).unwrap();
    let (th1, th2) = env.thresholds();
    assert_eq!(th1, th2);
    let (mut below, mut beyond) = (0, 0);
    for p in env.points.iter().filter(|p| !p.diverged) {
        let r = p.r1.unwrap();
        assert_eq!(p.r1, p.r2);
        // members would sit exactly on T = σ
        assert_eq!(p.member, r == th1);
        if r > th1 {
            below += 1;
        } else {
            beyond += 1;
        }
    }
    assert!(below > 0 && beyond > 0, "the T = σ level set must cross the window");
    let rf = pb.r_grid(&x, &mus, &taus).unwrap();
    assert!(!contour_lines(&rf.r_field(), th1).is_empty());
    let tf = rf.t_field(pb.lambda1(), eps);
    let rep = levelset_intersection_check(&tf, &tf, sigma).unwrap();
    assert!(rep.suppressed && rep.crossings.is_empty());
}

#[test]
fn zero_sigma_thresholds_are_minus_epsilon() {
    let lo = Toggle::at(toggle::Q_MIN);
    let hi = Toggle::at(toggle::Q_MAX);
    let env = admissible_set(
        &switching(&lo),
        &switching(&hi),
        &lo.states.bullet,
        1e-3,
        0.0,
        &[1.0, 2.0],
        &[0.5, 1.0],
    )
    .unwrap();
    assert_eq!(env.thresholds(), (-1e-3, -1e-3));
}

#[test]
fn admissible_set_is_an_order_box() {
    let lo = Toggle::at(toggle::Q_MIN);
    let hi = Toggle::at(toggle::Q_MAX);
    let mid = Toggle::int();
    let (p1, p2) = (switching(&lo), switching(&hi));
    let x = mid.states.bullet.clone();
    let mus = linspace(0.5, 20.0, 12);
    let taus = linspace(0.1, 5.0, 12);
    let env = admissible_set(&p1, &p2, &x, 1e-3, 3.0, &mus, &taus).unwrap();
    let (th1, th2) = env.thresholds();
    let nm = mus.len();
    let at = |i: usize, j: usize| &env.points[j * nm + i];
    let mut members = 0;
    for j in 0..taus.len() {
        for i in 0..nm {
            if !at(i, j).member {
                continue;
            }
            members += 1;
            for jj in 0..taus.len() {
                for ii in 0..nm {
                    let q = at(ii, jj);
                    if q.diverged {
                        continue;
                    }
                    if ii <= i && jj <= j {
                        assert!(q.r2.unwrap() <= th2, "p2 condition fails below ({i}, {j})");
                    }
                    if ii >= i && jj >= j {
                        assert!(q.r1.unwrap() >= th1, "p1 condition fails above ({i}, {j})");
                    }
                }
            }
        }
    }
    assert!(members > 0 && members < env.points.len());
}

#[test]
fn vertex_flows_meet_their_own_inequalities() {
    let lo = Toggle::at(toggle::Q_MIN);
    let hi = Toggle::at(toggle::Q_MAX);
    let mid = Toggle::int();
    let (p1, p2) = (switching(&lo), switching(&hi));
    let x = mid.states.bullet.clone();
    let env = admissible_set(
        &p1,
        &p2,
        &x,
        1e-3,
        3.0,
        &linspace(0.5, 20.0, 12),
        &linspace(0.1, 5.0, 12),
    )
    .unwrap();
    let m = env.members().nth(10).expect("admissible points");
    let ps = vec![toggle::Q_MIN.to_vec(), toggle::Q_MAX.to_vec()];
    let rep = verify_membership(&p1, &p2, &ps, &x, m.mu, m.tau, &env, 1e-6).unwrap();
    let (at1, at2) = (&rep.samples[0], &rep.samples[1]);
    let s1_at_p1 = p1.ef.value(&at1.endpoint).unwrap();
    let s1_at_p2 = p2.ef.value(&at2.endpoint).unwrap();
    assert!(s1_at_p1 >= -1e-3 - 1e-6, "{s1_at_p1}");
    assert!(s1_at_p2 <= -1e-3 + 1e-6, "{s1_at_p2}");
    assert!(rep.violations().is_empty(), "{rep:?}");
}
