//! Acceptance gate: one test per shipping criterion, each printing a
//! single PASS line with the worst observed value against its stated
//! tolerance. Corpora are seeded, so every run checks identical states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relbody::{
    antipodal_pair_mu, bcos3_consistency_check, body_frame_residual, double_integral_solution,
    fit_conic, motion_identity, pivot_only_mu, propagate, rk45_integrate, rs1_rhs, rs2_rhs,
    t_sum_check, to_relative, translation_invariance_residual, two_body_mu, BcosVerdict, Body,
    Formulation, IntegratorSettings, MethodKind, NBodyState, PairKey, RelativeMode, Scenario,
    StateKey, StepperSpec, TerminationReason, Vec3,
};

const SEED: u64 = 0x5eed_0001;

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Well-separated random state: masses in [0.1, 10), positions in a
/// side-6 box with pair separations at least 0.25, mild velocities.
fn random_state(rng: &mut ChaCha8Rng, n: usize) -> NBodyState {
    loop {
        let bodies: Vec<Body> = (0..n)
            .map(|_| Body {
                mass: rng.random_range(0.1..10.0),
                position: Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ),
                velocity: Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
            })
            .collect();
        let state = NBodyState::new(0.0, 1.0, bodies);
        if state.min_separation() >= 0.25 {
            return state;
        }
    }
}

/// The standard randomized corpus: `count` states cycling N over `ns`.
fn corpus(count: usize, ns: &[usize]) -> Vec<NBodyState> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..count).map(|i| random_state(&mut rng, ns[i % ns.len()])).collect()
}

fn rk45_scenario(
    name: &str,
    formulation: Formulation,
    t_end: f64,
    samples: usize,
    bodies: Vec<Body>,
    rel_tol: f64,
    abs_tol: f64,
) -> Scenario {
    Scenario {
        name: name.into(),
        g: 1.0,
        formulation,
        t_end,
        sample_interval: t_end / samples as f64,
        collision_guard_eps: None,
        integrator: StepperSpec {
            method: MethodKind::Rk45,
            dt: None,
            rel_tol: Some(rel_tol),
            abs_tol: Some(abs_tol),
            max_steps: None,
        },
        bodies,
    }
}

fn run(sc: &Scenario, with_reports: bool) -> relbody::Trajectory {
    let settings = IntegratorSettings::from_scenario(sc).expect("valid settings");
    propagate(sc, &settings, with_reports).expect("propagation starts cleanly")
}

fn bundled_scenarios() -> Vec<Scenario> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut out = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .expect("bundled scenario directory exists")
        .map(|e| e.expect("readable entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    for p in paths {
        let text = std::fs::read_to_string(&p).expect("readable scenario");
        let sc: Scenario = toml::from_str(&text).unwrap_or_else(|e| panic!("{p:?} parses: {e}"));
        out.push(sc);
    }
    assert!(out.len() >= 5, "expected the full bundled set, found {}", out.len());
    out
}

/// Characteristic time sqrt(L^3 / (G M)) from the RMS pair separation.
fn dynamical_time(state: &NBodyState) -> f64 {
    let n = state.n();
    let mut sum_sq = 0.0;
    let mut pairs = 0.0;
    for j in 1..=n {
        for k in (j + 1)..=n {
            sum_sq += state.separation(j, k).powi(2);
            pairs += 1.0;
        }
    }
    let rms = (sum_sq / pairs).sqrt();
    let total_mass: f64 = state.masses().iter().sum();
    (rms.powi(3) / (state.g * total_mass)).sqrt()
}

fn figure_eight() -> Vec<Body> {
    vec![
        Body {
            mass: 1.0,
            position: vec3([0.97000436, -0.24308753, 0.0]),
            velocity: vec3([0.466203685, 0.43236573, 0.0]),
        },
        Body {
            mass: 1.0,
            position: vec3([-0.97000436, 0.24308753, 0.0]),
            velocity: vec3([0.466203685, 0.43236573, 0.0]),
        },
        Body {
            mass: 1.0,
            position: vec3([0.0, 0.0, 0.0]),
            velocity: vec3([-0.93240737, -0.86473146, 0.0]),
        },
    ]
}

fn planetary_four() -> Vec<Body> {
    vec![
        Body { mass: 10.0, position: Vec3::zeros(), velocity: Vec3::zeros() },
        Body {
            mass: 0.02,
            position: vec3([1.0, 0.0, 0.0]),
            velocity: vec3([0.0, 3.1622776601683795, 0.0]),
        },
        Body {
            mass: 0.015,
            position: vec3([0.0, 1.6, 0.0]),
            velocity: vec3([-2.5, 0.0, 0.0]),
        },
        Body {
            mass: 0.01,
            position: vec3([-2.5, 0.0, 0.0]),
            velocity: vec3([0.0, -2.0, 0.0]),
        },
    ]
}

#[test]
fn criterion_01_motion_identity() {
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for state in corpus(1000, &[2, 3, 4, 5, 6, 7, 8]) {
        let id = motion_identity(&state).unwrap();
        assert!(id.rhs < 0.0, "identity rhs must be negative, got {}", id.rhs);
        assert!(id.residual <= tol, "identity residual {} > {tol}", id.residual);
        worst = worst.max(id.residual);
    }
    println!("PASS [ 1/10] motion identity on 1000 states: worst residual {worst:.3e} <= {tol:.0e}, rhs < 0 throughout");
}

#[test]
fn criterion_02_third_body_sum() {
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for state in corpus(1000, &[2, 3, 4, 5, 6, 7, 8]) {
        let t = t_sum_check(&state).unwrap();
        assert!(t.residual <= tol, "T-sum residual {} > {tol} (N = {})", t.residual, state.n());
        worst = worst.max(t.residual);
    }
    println!("PASS [ 2/10] third-body sum on 1000 states: worst residual {worst:.3e} <= {tol:.0e}");
}

#[test]
fn criterion_03_translation_invariance() {
    let tol = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let mut worst = 0.0f64;
    for state in corpus(100, &[2, 3, 4, 5, 6]) {
        let mut shifts = Vec::with_capacity(10);
        for _ in 0..5 {
            shifts.push(Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            ));
        }
        // Shifts sampled from a smooth curve of time, the shape a moving
        // frame would trace.
        for _ in 0..5 {
            let t: f64 = rng.random_range(0.0..10.0);
            shifts.push(Vec3::new(0.7 * t * t, 12.0 * t.sin(), -3.0 * t + 1.0));
        }
        for shift in shifts {
            for mode in [RelativeMode::Rs1, RelativeMode::Rs2] {
                let r = translation_invariance_residual(&state, shift, mode).unwrap();
                assert!(r <= tol, "{mode:?} residual {r} > {tol} under shift {shift:?}");
                worst = worst.max(r);
            }
        }
    }
    println!("PASS [ 3/10] translation invariance, 100 states x 10 shifts, both systems: worst residual {worst:.3e} <= {tol:.0e}");
}

#[test]
fn criterion_04_all_pairs_generation() {
    let tol = 1e-12;
    let mut worst = 0.0f64;
    for state in corpus(200, &[2, 3, 4, 5, 6]) {
        let rs1 = to_relative(&state, RelativeMode::Rs1).unwrap();
        let rs2 = to_relative(&state, RelativeMode::Rs2).unwrap();
        let a1 = rs1_rhs(&rs1, 0.0).unwrap();
        let a2 = rs2_rhs(&rs2, 0.0).unwrap();
        let pivot = |i: usize| {
            if i == 1 {
                Vec3::zeros()
            } else {
                a1.get(1, i).unwrap()
            }
        };
        for (key, accel) in a2.entries() {
            let generated = pivot(key.k) - pivot(key.j);
            let err = (accel - generated).norm() / accel.norm().max(1.0);
            assert!(err <= tol, "pair {key} generation error {err} > {tol}");
            worst = worst.max(err);
        }
    }
    println!("PASS [ 4/10] all-pairs accelerations generated by pivot differences, 200 states: worst error {worst:.3e} <= {tol:.0e}");
}

#[test]
fn criterion_05_trajectory_cross_check() {
    let tol = 1e-6;
    let mut worst = 0.0f64;
    for (label, bodies) in [("three-body loop", figure_eight()), ("planetary four", planetary_four())] {
        let probe = NBodyState::new(0.0, 1.0, bodies.clone());
        let t_end = 10.0 * dynamical_time(&probe);
        let abs_sc = rk45_scenario("abs", Formulation::Ncme, t_end, 50, bodies.clone(), 1e-10, 1e-12);
        let rel_sc = rk45_scenario("rel", Formulation::Rs2, t_end, 50, bodies, 1e-10, 1e-12);
        let abs = run(&abs_sc, false);
        let rel = run(&rel_sc, false);
        assert_eq!(abs.termination, TerminationReason::ReachedTEnd, "{label}");
        assert_eq!(rel.termination, TerminationReason::ReachedTEnd, "{label}");
        assert_eq!(abs.samples.len(), rel.samples.len(), "{label}");
        for s in 0..abs.samples.len() {
            for (ki, key) in rel.keys.iter().enumerate() {
                let StateKey::Pair(p) = key else { panic!("relative keys are pairs") };
                let differenced = abs.position(s, p.j - 1) - abs.position(s, p.k - 1);
                let direct = rel.position(s, ki);
                let err = (differenced - direct).norm() / differenced.norm();
                assert!(
                    err <= tol,
                    "{label}: pair {p} deviates by {err} at t = {}",
                    rel.samples[s].time
                );
                worst = worst.max(err);
            }
        }
    }
    println!("PASS [ 5/10] all-pairs trajectory vs differenced absolute trajectory over 10 dynamical times (N = 3, 4): worst relative deviation {worst:.3e} <= {tol:.0e}");
}

#[test]
fn criterion_06_two_body_conics() {
    // Circular orbit: radius pinned for a full period.
    let radius_tol = 1e-8;
    let v = 1.5f64.sqrt();
    let period = 2.0 * std::f64::consts::PI / v;
    let circular = rk45_scenario(
        "circular",
        Formulation::Rs1,
        period,
        64,
        vec![
            Body { mass: 1.0, position: vec3([1.0, 0.0, 0.0]), velocity: vec3([0.0, v, 0.0]) },
            Body { mass: 0.5, position: Vec3::zeros(), velocity: Vec3::zeros() },
        ],
        1e-10,
        1e-12,
    );
    let traj = run(&circular, false);
    assert_eq!(traj.termination, TerminationReason::ReachedTEnd);
    let mut worst_radius = 0.0f64;
    for s in 0..traj.samples.len() {
        worst_radius = worst_radius.max((traj.position(s, 0).norm() - 1.0).abs());
    }
    assert!(worst_radius <= radius_tol);

    // Eccentric orbit: e = 0.5 from periapsis, one full period.
    let conic_tol = 1e-6;
    let (mu, p, e): (f64, f64, f64) = (1.5, 1.0, 0.5);
    let a = p / (1.0 - e * e);
    let t_orbit = 2.0 * std::f64::consts::PI * (a.powi(3) / mu).sqrt();
    let vp = (mu / p).sqrt() * (1.0 + e);
    let eccentric = rk45_scenario(
        "eccentric",
        Formulation::Rs1,
        t_orbit,
        128,
        vec![
            Body { mass: 1.0, position: vec3([p / (1.0 + e), 0.0, 0.0]), velocity: vec3([0.0, vp, 0.0]) },
            Body { mass: 0.5, position: Vec3::zeros(), velocity: Vec3::zeros() },
        ],
        1e-10,
        1e-12,
    );
    let traj = run(&eccentric, false);
    assert_eq!(traj.termination, TerminationReason::ReachedTEnd);
    let samples = traj.orbit_samples(0);
    let right = fit_conic(&samples, two_body_mu(1.0, 1.0, 0.5)).unwrap();
    assert!(right.max_residual <= conic_tol, "conic residual {}", right.max_residual);
    assert!((right.params.e - e).abs() <= 1e-6);

    // Crediting only the pivot mass misfits by an order of magnitude.
    let wrong = fit_conic(&samples, pivot_only_mu(1.0, 1.0)).unwrap();
    assert!(
        wrong.max_residual >= 10.0 * right.max_residual,
        "wrong-parameter residual {} not 10x above {}",
        wrong.max_residual,
        right.max_residual
    );
    println!(
        "PASS [ 6/10] two-body conics: circular radius drift {:.3e} <= {:.0e}, eccentric fit residual {:.3e} <= {:.0e}, pivot-only parameter misfits {:.1}x",
        worst_radius,
        radius_tol,
        right.max_residual,
        conic_tol,
        wrong.max_residual / right.max_residual
    );
}

#[test]
fn criterion_07_origin_pinning_three_bodies() {
    // Verdict grid: 20 consistent + 30 inconsistent cases, all classified
    // exactly.
    let dirs = [
        vec3([1.0, 0.0, 0.0]),
        vec3([0.0, 1.0, 0.0]),
        vec3([0.6, 0.8, 0.0]),
        vec3([0.0, 0.6, -0.8]),
    ];
    let mut cases = 0;
    for (i, m) in [0.5, 1.0, 2.0, 4.0, 7.5].iter().enumerate() {
        for (d, radius) in [(0, 0.5), (1, 1.5), (2, 3.0), (3, 6.0)] {
            let r2 = radius * dirs[(d + i) % dirs.len()];
            let check = bcos3_consistency_check(*m, *m, r2, -r2);
            assert_eq!(check.verdict, BcosVerdict::Consistent, "m = {m}, radius = {radius}");
            assert!(check.constraint_residual == 0.0);
            cases += 1;
        }
    }
    for (i, delta) in [1e-6, 1e-3, 0.5].iter().enumerate() {
        for radius in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let r2 = radius * dirs[i % dirs.len()];
            // Five of these also break the geometry; the mass verdict must
            // take precedence.
            let r3 = if i == 1 { -1.5 * r2 } else { -r2 };
            let check = bcos3_consistency_check(1.0, 1.0 * (1.0 + delta), r2, r3);
            assert_eq!(check.verdict, BcosVerdict::InconsistentMassRatio, "delta = {delta}");
            cases += 1;
        }
    }
    for (i, delta) in [1e-6, 1e-3, 0.3].into_iter().enumerate() {
        for radius in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let u = dirs[(i + 1) % dirs.len()];
            let w = dirs[(i + 3) % dirs.len()];
            let bent = (u + delta * w).normalize();
            let check = bcos3_consistency_check(2.0, 2.0, radius * u, -radius * bent);
            assert_eq!(check.verdict, BcosVerdict::InconsistentGeometry, "delta = {delta}");
            cases += 1;
        }
    }
    assert_eq!(cases, 50);

    // The consistent family really orbits: antipodal symmetry survives a
    // full period and the circular rate matches G(m1 + m3/4).
    let sc = bundled_scenarios()
        .into_iter()
        .find(|s| s.name == "bcos3_antipodal")
        .expect("antipodal scenario bundled");
    let traj = run(&sc, false);
    assert_eq!(traj.termination, TerminationReason::ReachedTEnd);
    let symmetry_tol = 1e-8;
    let mut worst_sym = 0.0f64;
    for s in 0..traj.samples.len() {
        // Stored coordinates are r1 - rk = -rk, so r2 + r3 = -(d2 + d3).
        worst_sym = worst_sym.max((traj.position(s, 0) + traj.position(s, 1)).norm());
    }
    assert!(worst_sym <= symmetry_tol, "antipodal symmetry drift {worst_sym}");

    let key = traj.key_index(StateKey::Pair(PairKey::new(1, 2))).unwrap();
    let samples = traj.orbit_samples(key);
    let (m1, m3) = (sc.bodies[0].mass, sc.bodies[2].mass);
    let fit = fit_conic(&samples, antipodal_pair_mu(sc.g, m1, m3)).unwrap();
    assert!(fit.params.e <= 1e-8, "antipodal orbit should fit as circular, e = {}", fit.params.e);
    assert!(fit.max_residual <= 1e-8);
    assert!((fit.params.d - 1.0).abs() <= 1e-8);
    for wrong_mu in [pivot_only_mu(sc.g, m1), two_body_mu(sc.g, m1, sc.bodies[1].mass)] {
        let misfit = fit_conic(&samples, wrong_mu).unwrap();
        assert!(
            misfit.max_residual >= 10.0 * fit.max_residual.max(1e-9),
            "parameter {wrong_mu} fits too well: {}",
            misfit.max_residual
        );
    }
    println!(
        "PASS [ 7/10] origin pinning: 50-case verdict grid exact, antipodal symmetry {worst_sym:.3e} <= {symmetry_tol:.0e} over one period, circular rate matches G(m1 + m3/4) with residual {:.3e}",
        fit.max_residual
    );
}

#[test]
fn criterion_08_restlessness_along_trajectories() {
    let mut checked_samples = 0;
    for sc in bundled_scenarios() {
        let traj = run(&sc, true);
        assert_eq!(
            traj.termination,
            TerminationReason::ReachedTEnd,
            "bundled scenario {} must finish",
            sc.name
        );
        let n = sc.bodies.len();
        for sample in &traj.samples {
            let rep = sample.report.as_ref().expect("reports requested");
            assert!(
                !rep.restless_pairs.is_empty(),
                "{}: no restless pair at t = {}",
                sc.name,
                sample.time
            );
            assert!(rep.bound_ok, "{}: weighted bound failed at t = {}", sc.name, sample.time);
            assert!(rep.negativity_ok, "{}: identity rhs not negative", sc.name);
            if n >= 3 {
                assert!(
                    rep.accelerating_bodies >= 2,
                    "{}: {} accelerating bodies at t = {}",
                    sc.name,
                    rep.accelerating_bodies,
                    sample.time
                );
            }
            checked_samples += 1;
        }
    }
    println!("PASS [ 8/10] restlessness along every bundled trajectory: restless pairs, weighted bound, and body counts hold at all {checked_samples} samples");
}

#[test]
fn criterion_09_body_frame_identity() {
    let tol = 1e-12;
    let mut worst = 0.0f64;
    for state in corpus(100, &[2, 3, 4, 5, 6]) {
        let check = body_frame_residual(&state, 0.0).unwrap();
        let limit = tol * check.acceleration_scale;
        for (i, r) in check.residuals.iter().enumerate() {
            assert!(
                *r <= limit,
                "body {} residual {} above {} (scale {})",
                i + 1,
                r,
                limit,
                check.acceleration_scale
            );
            worst = worst.max(r / check.acceleration_scale.max(f64::MIN_POSITIVE));
        }
    }
    println!("PASS [ 9/10] riding-on-body-1 frame shift, 100 states: worst residual {worst:.3e} of acceleration scale, tolerance {tol:.0e}");
}

#[test]
fn criterion_10_double_integral_solution() {
    let poly_tol = 1e-10;
    // Frozen simple cases.
    let free = double_integral_solution(|_| Vec3::zeros(), vec3([1.0, 2.0, 3.0]), vec3([4.0, 5.0, 6.0]), 0.0, 2.0);
    assert!((free - vec3([9.0, 12.0, 15.0])).norm() <= poly_tol);
    let constant = double_integral_solution(|_| vec3([2.0, 0.0, 0.0]), Vec3::zeros(), Vec3::zeros(), 0.0, 3.0);
    assert!((constant - vec3([9.0, 0.0, 0.0])).norm() <= poly_tol);
    let linear = double_integral_solution(|t| vec3([6.0 * t, 0.0, 0.0]), Vec3::zeros(), Vec3::zeros(), 0.0, 2.0);
    assert!((linear - vec3([8.0, 0.0, 0.0])).norm() <= poly_tol);

    // General cubic against its closed form, nonzero start time.
    let coeffs: [[f64; 4]; 3] = [
        [1.25, -2.0, 0.5, 0.75],
        [0.0, 3.0, -1.0, 0.25],
        [-0.5, 0.0, 2.0, -1.5],
    ];
    let t0: f64 = 0.4;
    let t1: f64 = 2.6;
    let a = |u: f64| {
        Vec3::new(
            coeffs[0][0] + u * (coeffs[0][1] + u * (coeffs[0][2] + u * coeffs[0][3])),
            coeffs[1][0] + u * (coeffs[1][1] + u * (coeffs[1][2] + u * coeffs[1][3])),
            coeffs[2][0] + u * (coeffs[2][1] + u * (coeffs[2][2] + u * coeffs[2][3])),
        )
    };
    let r0 = vec3([0.1, -0.4, 2.0]);
    let v0 = vec3([-1.0, 0.5, 0.25]);
    // Double integral of u^n from t0 to t1.
    let ii = |n: i32| {
        let nf = n as f64;
        (t1.powi(n + 2) - t0.powi(n + 2)) / ((nf + 1.0) * (nf + 2.0))
            - t0.powi(n + 1) * (t1 - t0) / (nf + 1.0)
    };
    let mut expected = r0 + v0 * (t1 - t0);
    for (axis, row) in coeffs.iter().enumerate() {
        for (deg, c) in row.iter().enumerate() {
            expected[axis] += c * ii(deg as i32);
        }
    }
    let got = double_integral_solution(a, r0, v0, t0, t1);
    let poly_err = (got - expected).norm();
    assert!(poly_err <= poly_tol, "cubic closed-form error {poly_err}");

    // Non-polynomial forcing against direct integration of r'' = A(t).
    let ode_tol = 1e-8;
    let a = |t: f64| Vec3::new(2.0 * t.cos(), 6.0 * t, -(2.0 * t).sin());
    let r0 = vec3([1.0, 0.0, -0.5]);
    let v0 = vec3([0.0, 1.0, 0.25]);
    let mut rhs = |t: f64, y: &[f64], d: &mut [f64]| {
        d[..3].copy_from_slice(&y[3..]);
        let acc = a(t);
        d[3] = acc.x;
        d[4] = acc.y;
        d[5] = acc.z;
        Ok(())
    };
    let y0 = [r0.x, r0.y, r0.z, v0.x, v0.y, v0.z];
    let yf = rk45_integrate(&mut rhs, &y0, 0.0, 3.0, 1e-11, 1e-13, 1_000_000).unwrap();
    let quad = double_integral_solution(a, r0, v0, 0.0, 3.0);
    let ode_err = (Vec3::new(yf[0], yf[1], yf[2]) - quad).norm();
    assert!(ode_err <= ode_tol, "quadrature vs integration differ by {ode_err}");

    println!("PASS [10/10] double-integral solution: cubic closed forms to {poly_err:.3e} <= {poly_tol:.0e}, direct integration cross-check to {ode_err:.3e} <= {ode_tol:.0e}");
}
