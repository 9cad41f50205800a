//! Acceptance gate: one test per shipped claim, in order. Each test prints
//! exactly one pass/fail line under `cargo test --test acceptance`.
//!
//! Two claims are asserted faithfully even though the bundled data cannot
//! meet them (see the panic messages for the analysis): the output-gain
//! proportionality on the second example and the full certificate PASS.

mod common;

use std::time::Instant;

use common::{mat, pipeline, rng, scenario1, scenario2, stacked_y0, vec_of};
use descon::decomposition::decompose;
use descon::descriptor::{check_pair, DescriptorSystem};
use descon::gains::{
    assemble_theta, budget_check, feasible_lambda_sup, verify_theorem2, verify_theorem3,
    DesignCertificate, ProtocolGains,
};
use descon::numerics::{is_negative_definite, sym_eigenvalues, TOL_PSD};
use descon::scenario::Scenario;
use descon::simulation::{
    assemble_closed_loop, be_integrate, energy, integrate, map_to_oracle_coords,
    transform_oracle, EnergyAccount, Trajectory,
};
use descon::topology::{
    build_schedule, check_jointly_connected, laplacian, ScheduleKind, ScheduleSpec, Topology,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Per-entry gain tolerance: 1% relative or 5e-3 absolute, whichever is
/// looser (reference values carry four decimals).
fn assert_entries_close(got: &DMatrix<f64>, expect: &DMatrix<f64>, what: &str) {
    assert_eq!(got.shape(), expect.shape(), "{what}: shape");
    for i in 0..expect.nrows() {
        for j in 0..expect.ncols() {
            let (g, e) = (got[(i, j)], expect[(i, j)]);
            let tol = (0.01 * e.abs()).max(5e-3);
            assert!(
                (g - e).abs() <= tol,
                "{what}[{i},{j}]: got {g}, expected {e} (tol {tol})"
            );
        }
    }
}

/// Best scalar c minimizing ||k - c p||_F and the relative residual.
fn proportionality_fit(p: &DMatrix<f64>, k: &DMatrix<f64>) -> (f64, f64) {
    let c = p.dot(k) / p.dot(p);
    let resid = (k - p * c).norm() / k.norm();
    (c, resid)
}

/// Run a bundled scenario's closed loop exactly as the CLI does: pooled
/// topologies, the scenario schedule and seed, reduced initial states.
fn bundled_run(scn: &Scenario) -> (Trajectory, EnergyAccount, DesignCertificate) {
    let (dec, cert, gains) = pipeline(scn);
    let topos: Vec<Topology> = scn.topologies.iter().map(|(_, t)| t.clone()).collect();
    let schedule = build_schedule(&scn.schedule, scn.sim.horizon, scn.seed).expect("schedule");
    let cl = assemble_closed_loop(&dec, &gains, &schedule, &topos).expect("closed loop");
    let n = topos[0].n_agents();
    let mut x0 = DVector::<f64>::zeros(n * dec.h);
    for m in 0..n {
        let xi = dec.reduce_state(&scn.x0[m]).expect("reduce");
        x0.rows_mut(m * dec.h, dec.h).copy_from(&xi);
    }
    let traj = integrate(&cl, &x0, scn.sim.dt, scn.sim.horizon).expect("integrate");
    let account = energy(&traj, &gains, &cert.m, scn.sim.hbar).expect("energy");
    (traj, account, cert)
}

#[test]
fn criterion_01_input_gain_reproduction_first_example() {
    let start = Instant::now();
    let scn = scenario1();
    let (_, _, gains) = pipeline(&scn);
    let expect = mat(&[
        &[7.3118, -5.1748, -0.0027],
        &[11.0466, -8.1502, 0.0011],
    ]);
    assert_entries_close(&gains.k_u, &expect, "first example K_u");
    assert!(start.elapsed().as_secs_f64() < 1.0, "gain reproduction must be fast");
}

#[test]
fn criterion_02_input_gain_reproduction_second_example() {
    let scn = scenario2();
    let (_, _, gains) = pipeline(&scn);
    let expect = mat(&[
        &[-0.1320, 0.0440, -0.3169],
        &[-0.1056, 0.0264, 0.1760],
    ]);
    assert_entries_close(&gains.k_u, &expect, "second example K_u");
}

#[test]
fn criterion_03_output_gain_proportionality_both_examples() {
    // The published output gain must be a single positive multiple of
    // -R_x^{-T} C_o^T, with the implied eigenvalue bound in (0, N].
    let check = |scn: &Scenario, printed: DMatrix<f64>, what: &str| {
        let (dec, cert, _) = pipeline(scn);
        let p = -(cert.r_x.clone().try_inverse().unwrap().transpose() * dec.c_o.transpose());
        let (c, resid) = proportionality_fit(&p, &printed);
        let mut diagnosis = String::new();
        if resid >= 0.02 || c <= 0.0 {
            // One column of the reference matrix carries the opposite sign
            // of the direction the shaping data defines; record the fit for
            // the sign-corrected variant so the defect is self-explanatory.
            let mut flipped = printed.clone();
            let neg = -flipped.column(0).into_owned();
            flipped.set_column(0, &neg);
            let (c2, resid2) = proportionality_fit(&p, &flipped);
            diagnosis = format!(
                " (flipping the sign of column 1 gives scalar {c2:.7}, residual {:.3e}, \
                 implied bound {:.7}: the reference matrix carries an internal sign \
                 inconsistency between its columns)",
                resid2,
                0.5 / c2
            );
        }
        assert!(
            resid < 0.02 && c > 0.0,
            "{what}: residual {:.4}% with scalar {c:.7}{diagnosis}",
            resid * 100.0
        );
        let lambda = 0.5 / c;
        assert!(
            lambda > 0.0 && lambda <= scn.x0.len() as f64,
            "{what}: implied eigenvalue bound {lambda} outside (0, N]"
        );
    };

    check(
        &scenario1(),
        mat(&[&[-0.3686, -0.2873], &[-0.4183, 0.2121], &[0.0, 0.0]]),
        "first example",
    );
    check(
        &scenario2(),
        mat(&[&[0.2856, -0.1785], &[-0.1428, -0.1428], &[0.0, 0.0]]),
        "second example",
    );
}

#[test]
fn criterion_04_certificate_verification_both_examples() {
    let mut failures: Vec<String> = Vec::new();

    // First scenario: strict conditions against the bundled shaping data.
    {
        let scn = scenario1();
        let (dec, cert, _) = pipeline(&scn);
        let report = verify_theorem2(&dec, &cert, &stacked_y0(&scn)).unwrap();

        // Hard requirements that do hold: the admissibility and shaping
        // conditions, the eigenvalue bracket around the implied bound, and
        // block-matrix feasibility at that bound.
        for id in ["I", "II.a", "II.b", "III.a"] {
            let c = report.get(id).unwrap();
            assert!(c.pass && c.margin > 0.0, "{id} must clear: {c:?}");
        }
        let p = -(cert.r_x.clone().try_inverse().unwrap().transpose() * dec.c_o.transpose());
        let printed = mat(&[&[-0.3686, -0.2873], &[-0.4183, 0.2121], &[0.0, 0.0]]);
        let (c_fit, _) = proportionality_fit(&p, &printed);
        let lambda_implied = 0.5 / c_fit;
        assert!(
            cert.bounds.lambda_min <= lambda_implied * (1.0 + 1e-3)
                && lambda_implied <= cert.bounds.lambda_max,
            "reconstructed spectrum [{}, {}] must bracket the implied bound {lambda_implied}",
            cert.bounds.lambda_min,
            cert.bounds.lambda_max
        );
        let th = assemble_theta(&dec, &cert, lambda_implied.max(cert.bounds.lambda_min)).unwrap();
        let nd = is_negative_definite(&th.theta).unwrap();
        assert!(
            nd.verdict && nd.margin > 0.0,
            "block matrix must be feasible at the implied bound, margin {}",
            nd.margin
        );
        if !report.get("III.b").unwrap().pass {
            let sup = feasible_lambda_sup(&dec, &cert, cert.bounds.lambda_min, cert.bounds.lambda_max)
                .unwrap()
                .expect("feasible at lambda_min, so the interval is nonempty");
            assert!(sup >= lambda_implied, "shrunk range [lambda_min, {sup}] keeps the implied bound");
            failures.push(format!(
                "first example III.b: infeasible at lambda_max {} (margin {:.6e}); feasible only up to {:.6}",
                cert.bounds.lambda_max,
                report.get("III.b").unwrap().margin,
                sup
            ));
        }
        for c in &report.conditions {
            if !c.pass && c.id != "III.b" {
                failures.push(format!(
                    "first example {}: margin {:.6e} ({})",
                    c.id,
                    c.margin,
                    c.note.clone().unwrap_or_default()
                ));
            }
        }
    }

    // Second scenario: relaxed conditions with the diagonal shaping data.
    {
        let scn = scenario2();
        let (dec, cert, _) = pipeline(&scn);
        let report = verify_theorem3(&dec, &cert, &stacked_y0(&scn)).unwrap();
        for id in ["I", "II.a", "II.b", "III.a", "IV.a", "IV.b", "IV.detectable", "IV.stabilizable"] {
            let c = report.get(id).unwrap();
            assert!(c.pass && c.margin > 0.0, "{id} must clear: {c:?}");
        }
        // The printed output gain fails proportionality (criterion 3), so no
        // eigenvalue bound can be implied from it; feasibility is checked at
        // the schedule's own lower bound instead.
        let th = assemble_theta(&dec, &cert, cert.bounds.lambda_min).unwrap();
        let nd = is_negative_definite(&th.theta).unwrap();
        assert!(nd.verdict && nd.margin > 0.0, "feasible at lambda_min, margin {}", nd.margin);
        if !report.get("III.b").unwrap().pass {
            let sup = feasible_lambda_sup(&dec, &cert, cert.bounds.lambda_min, cert.bounds.lambda_max)
                .unwrap()
                .expect("feasible at lambda_min, so the interval is nonempty");
            failures.push(format!(
                "second example III.b: infeasible at lambda_max {} (margin {:.6e}); feasible only up to {:.6}",
                cert.bounds.lambda_max,
                report.get("III.b").unwrap().margin,
                sup
            ));
        }
        for c in &report.conditions {
            if !c.pass && c.id != "III.b" {
                failures.push(format!(
                    "second example {}: margin {:.6e} ({})",
                    c.id,
                    c.margin,
                    c.note.clone().unwrap_or_default()
                ));
            }
        }
    }

    assert!(
        failures.is_empty(),
        "full certificate PASS is unreachable with the bundled operating points:\n  {}\n\
         analysis: the budget inequality II.c compares J* C_o^T C_o against s E_o^T R_x, \
         where s is the squared initial output disagreement (about 7.8e4 and 3.2e4 for \
         the bundled initial states). In both data sets the symmetric part of E_o^T R_x \
         couples the penalized output directions to the kernel of C_o^T C_o, so the \
         difference matrix keeps a negative eigenvalue for every finite budget: no \
         choice of J* satisfies the strict inequality with this shaping data, even \
         though the simulated energy itself stays far inside the stated budgets \
         (criterion 6). The block-matrix condition III.b additionally fails at the \
         upper spectral bound 5 because the reconstructed topology sets reach \
         eigenvalues above the feasible supremum near 4.31..4.34; the recorded \
         feasible ranges cover the implied lower bounds, which is the hard requirement.",
        failures.join("\n  ")
    );
}

#[test]
fn criterion_05_switching_convergence_first_example() {
    let start = Instant::now();
    let scn = scenario1();
    let (traj, _, _) = bundled_run(&scn);
    let ratio = traj.disagreement.last().unwrap() / traj.disagreement[0];
    assert!(
        ratio < 1e-3,
        "disagreement must contract by 1e3 over the horizon, got ratio {ratio:.3e}"
    );
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn criterion_06_energy_stays_under_budget_both_examples() {
    for (scn, what) in [(scenario1(), "first"), (scenario2(), "second")] {
        let (_, account, cert) = bundled_run(&scn);
        assert!(
            account.j_at_hbar < cert.j_e_star,
            "{what} example: J_e({}) = {:.6e} must stay below {:.6e}",
            account.hbar,
            account.j_at_hbar,
            cert.j_e_star
        );
        let mut prev = 0.0_f64;
        for &(_, j) in &account.samples {
            assert!(j >= prev - 1e-12 * (1.0 + prev.abs()), "{what}: energy must not decrease");
            prev = j;
        }
    }
}

#[test]
fn criterion_07_jointly_connected_convergence_second_example() {
    let start = Instant::now();
    let scn = scenario2();
    let topos: Vec<Topology> = scn.topologies.iter().map(|(_, t)| t.clone()).collect();
    for t in &topos {
        assert!(
            !laplacian(t).unwrap().connected,
            "every topology in the window is individually disconnected"
        );
    }
    let (ok, _) = check_jointly_connected(&topos).unwrap();
    assert!(ok, "the full window union is connected");

    let (traj, _, _) = bundled_run(&scn);
    let ratio = traj.disagreement.last().unwrap() / traj.disagreement[0];
    assert!(
        ratio < 1e-2,
        "disagreement must contract by 1e2 over the horizon, got ratio {ratio:.3e}"
    );
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn criterion_08_transformed_and_direct_routes_agree() {
    let sys = DescriptorSystem::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let dec = decompose(&sys, &DMatrix::identity(1, 1), 1, None).unwrap();
    let gains = ProtocolGains {
        k_u: DMatrix::from_element(1, 1, -0.5),
        k_z: DMatrix::from_element(1, 1, -0.5),
        lambda_min_used: 1.0,
    };
    let topo = Topology::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    let x0 = vec_of(&[1.0, 0.0, -1.0]);
    let (dt, horizon) = (1e-3, 2.0);

    let spec = ScheduleSpec {
        kind: ScheduleKind::Cyclic,
        order: vec![0],
        dwell: horizon,
        dwell_max: None,
    };
    let schedule = build_schedule(&spec, horizon, None).unwrap();
    let cl = assemble_closed_loop(&dec, &gains, &schedule, std::slice::from_ref(&topo)).unwrap();
    let direct = integrate(&cl, &x0, dt, horizon).unwrap();
    let orun = transform_oracle(&dec, &gains, &topo, &x0, dt, horizon).unwrap();

    let mut worst = 0.0_f64;
    for (i, s) in direct.states.iter().enumerate() {
        let (x1, z1, z_hat, x_hat) = map_to_oracle_coords(&orun.u_kappa, 1, s);
        worst = worst
            .max((&x1 - &orun.x_o1[i]).amax())
            .max((&z1 - &orun.z_o1[i]).amax())
            .max((&z_hat - &orun.z_hat[i]).amax())
            .max((&x_hat - &orun.x_hat[i]).amax());
    }
    assert!(worst <= 1e-8, "routes diverged by {worst:.3e} in sup norm");
}

#[test]
fn criterion_09_property_suites() {
    // Laplacian row sums vanish and spectra stay nonnegative.
    let mut r = rng(301);
    for _ in 0..100 {
        let n = r.random_range(2..9);
        let mut edges = Vec::new();
        for i in 1..n {
            if r.random_range(0..4) > 0 {
                edges.push((r.random_range(0..i), i, r.random_range(0.5..2.0)));
            }
        }
        let rep = laplacian(&Topology::new(n, edges).unwrap()).unwrap();
        assert!((&rep.l * DVector::from_element(n, 1.0)).amax() <= 1e-12);
        assert!(rep.eigenvalues[0] >= -TOL_PSD);
    }

    // The certificate block matrix is affine in the eigenvalue.
    let (dec, cert, _) = pipeline(&scenario1());
    let th0 = assemble_theta(&dec, &cert, 0.0).unwrap().theta;
    let th1 = assemble_theta(&dec, &cert, 1.0).unwrap().theta;
    let slope = &th1 - &th0;
    for i in 1..=10 {
        let lambda = 0.4 * i as f64;
        let th = assemble_theta(&dec, &cert, lambda).unwrap().theta;
        assert!((&th - (&th0 + &slope * lambda)).amax() <= 1e-12 * (1.0 + th.amax()));
    }

    // Metered energy never decreases, for arbitrary stable agents and gains.
    for _ in 0..20 {
        let a = {
            let m = DMatrix::<f64>::from_fn(2, 2, |_, _| r.random_range(-2.0..2.0));
            -(&m * m.transpose()) - DMatrix::identity(2, 2) * 0.3
        };
        let sys = DescriptorSystem::new(
            DMatrix::identity(2, 2),
            a,
            DMatrix::from_fn(2, 1, |_, _| r.random_range(-1.5..1.5)),
            DMatrix::from_fn(1, 2, |_, _| r.random_range(-1.5..1.5)),
        )
        .unwrap();
        let dec = decompose(&sys, &DMatrix::identity(2, 2), 2, None).unwrap();
        let gains = ProtocolGains {
            k_u: DMatrix::from_fn(1, 2, |_, _| r.random_range(-1.0..1.0)),
            k_z: DMatrix::from_fn(2, 1, |_, _| r.random_range(-1.0..1.0)),
            lambda_min_used: 1.0,
        };
        let topos = vec![
            Topology::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap(),
            Topology::new(3, vec![(0, 2, 1.0)]).unwrap(),
        ];
        let spec = ScheduleSpec {
            kind: ScheduleKind::Cyclic,
            order: vec![0, 1],
            dwell: 0.5,
            dwell_max: None,
        };
        let schedule = build_schedule(&spec, 2.0, None).unwrap();
        let cl = assemble_closed_loop(&dec, &gains, &schedule, &topos).unwrap();
        let x0 = DVector::<f64>::from_fn(6, |_, _| r.random_range(-2.0..2.0));
        let traj = integrate(&cl, &x0, 0.01, 2.0).unwrap();
        let account = energy(&traj, &gains, &DMatrix::identity(1, 1), 2.0).unwrap();
        let mut prev = 0.0_f64;
        for &(_, j) in &account.samples {
            assert!(j >= prev - 1e-12 * (1.0 + prev.abs()));
            prev = j;
        }
    }

    // Implicit Euler converges at first order.
    let e = DMatrix::identity(2, 2);
    let a = mat(&[&[-1.0, 0.5], &[0.0, -2.0]]);
    let x0 = vec_of(&[1.0, 1.0]);
    let terminal = |dt: f64| -> DVector<f64> {
        be_integrate(&e, &a, &x0, dt, (1.0 / dt).round() as usize)
            .unwrap()
            .pop()
            .unwrap()
    };
    let ratio =
        (terminal(0.05) - terminal(0.025)).norm() / (terminal(0.025) - terminal(0.0125)).norm();
    assert!((1.7..=2.3).contains(&ratio), "refinement ratio {ratio}");

    // Pair verdicts survive equivalence transforms.
    for trial in 0..20 {
        let n = r.random_range(2..7);
        let mut e = DMatrix::<f64>::from_fn(n, n, |_, _| r.random_range(-2.0..2.0));
        if trial % 2 == 1 {
            let zc = DVector::<f64>::zeros(n);
            e.set_column(n - 1, &zc);
            e.set_row(n - 1, &nalgebra::RowDVector::<f64>::zeros(n));
        }
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| r.random_range(-2.0..2.0));
        let well_conditioned = |r: &mut rand_chacha::ChaCha8Rng| -> DMatrix<f64> {
            let q = common::random_orthonormal(r, n);
            let d = DMatrix::<f64>::from_fn(n, n, |i, j| {
                if i == j {
                    r.random_range(0.5..2.0)
                } else {
                    0.0
                }
            });
            q * d
        };
        let (t, s) = (well_conditioned(&mut r), well_conditioned(&mut r));
        let base = check_pair(&e, &a).unwrap();
        let moved = check_pair(&(&t * &e * &s), &(&t * &a * &s)).unwrap();
        assert_eq!(base.regular, moved.regular, "trial {trial}");
        assert_eq!(base.impulse_free, moved.impulse_free, "trial {trial}");
    }

    // Zero initial disagreement satisfies any budget.
    let (dec1, cert1, _) = pipeline(&scenario1());
    let mut tiny = cert1.clone();
    tiny.j_e_star = 1e-9;
    let same = DVector::<f64>::from_fn(10, |i, _| if i % 2 == 0 { 1.5 } else { -0.25 });
    let c = budget_check(&dec1, &tiny, &same).unwrap();
    assert!(c.pass, "equal outputs demand no energy: {c:?}");

    // Keep the eigenvalue helper honest alongside the suite.
    let spec = sym_eigenvalues(&mat(&[&[2.0, 0.0], &[0.0, -1.0]])).unwrap();
    assert_eq!(spec.eigenvalues.len(), 2);
    assert!(spec.min < 0.0 && spec.max > 0.0);
}

#[test]
fn criterion_10_degenerate_inputs() {
    // Identical agents: the consensus subspace is exactly invariant and the
    // protocol never spends energy.
    let scn = scenario1();
    let (dec, cert, gains) = pipeline(&scn);
    let topos: Vec<Topology> = scn.topologies.iter().map(|(_, t)| t.clone()).collect();
    let schedule = build_schedule(&scn.schedule, 2.0, scn.seed).unwrap();
    let cl = assemble_closed_loop(&dec, &gains, &schedule, &topos).unwrap();
    let xi = dec.reduce_state(&scn.x0[0]).unwrap();
    let mut x0 = DVector::<f64>::zeros(5 * dec.h);
    for m in 0..5 {
        x0.rows_mut(m * dec.h, dec.h).copy_from(&xi);
    }
    let traj = integrate(&cl, &x0, 0.001, 2.0).unwrap();
    for &g in &traj.disagreement {
        assert!(g <= 1e-10, "disagreement leaked to {g:.3e}");
    }
    let account = energy(&traj, &gains, &cert.m, 2.0).unwrap();
    assert!(account.j_at_hbar <= 1e-10, "J_e = {:.3e}", account.j_at_hbar);

    // Zero gains: the closed loop degenerates to two copies of the open
    // loop, block for block, for every topology.
    let zero = ProtocolGains {
        k_u: DMatrix::zeros(dec.k(), dec.h),
        k_z: DMatrix::zeros(dec.h, dec.l()),
        lambda_min_used: gains.lambda_min_used,
    };
    let open = assemble_closed_loop(&dec, &zero, &schedule, &topos).unwrap();
    let n2 = 2 * 5;
    let expect_e = DMatrix::<f64>::identity(n2, n2).kronecker(&dec.e_o);
    let expect_a = DMatrix::<f64>::identity(n2, n2).kronecker(&dec.a_o);
    assert_eq!(open.e_cl, expect_e);
    for a in &open.a_cl {
        assert_eq!(a, &expect_a, "uncoupled agents drift under their own dynamics only");
    }
}
