//! End-to-end pipelines: certificate verification, closed-loop simulation,
//! or both, from a loaded scenario to a structured run report.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::decomposition::{decompose, ObservableDecomposition};
use crate::descriptor::{closed_loop_pair_checks, PairReport};
use crate::error::{Error, Result};
use crate::gains::{
    compute_gains, feasible_lambda_sup, verify_theorem2, verify_theorem3, ConditionReport,
    DesignCertificate, ProtocolGains, TheoremKind,
};
use crate::scenario::Scenario;
use crate::simulation::{assemble_closed_loop, energy, integrate, write_trajectory_csv};
use crate::topology::{
    build_schedule, check_jointly_connected, spectral_bounds, ConnectivityMode, SpectralBounds,
    Topology,
};

/// What a run is asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Simulate,
    Full,
}

/// Command-line overrides for scenario values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub hbar: Option<f64>,
    pub seed: Option<u64>,
}

/// Simulation half of a run report.
#[derive(Debug, Clone)]
pub struct SimSummary {
    pub dt: f64,
    pub horizon: f64,
    pub hbar: f64,
    pub seed: Option<u64>,
    pub initial_disagreement: f64,
    pub terminal_disagreement: f64,
    pub j_e_hbar: f64,
    pub j_e_star: f64,
    /// `J_e(hbar) <= J_e_star`.
    pub budget_pass: bool,
    pub csv_path: Option<PathBuf>,
}

/// Everything a run produced, in display order.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: Command,
    pub bounds: SpectralBounds,
    pub block_residual: f64,
    pub gains: ProtocolGains,
    pub conditions: Option<ConditionReport>,
    pub pair_checks: Vec<(String, PairReport)>,
    /// Largest certified-feasible eigenvalue found when the block-matrix
    /// check failed at `lambda_max`; `None` inside that case means the check
    /// fails at `lambda_min` too.
    pub feasible_lambda_sup: Option<f64>,
    pub shrink_attempted: bool,
    pub sim: Option<SimSummary>,
    pub overall: bool,
}

fn stacked_initial_outputs(scn: &Scenario) -> DVector<f64> {
    let l = scn.system.l();
    let mut y0 = DVector::<f64>::zeros(scn.x0.len() * l);
    for (m, x) in scn.x0.iter().enumerate() {
        y0.rows_mut(m * l, l).copy_from(&(&scn.system.c * x));
    }
    y0
}

fn scheduled_topologies(scn: &Scenario) -> Vec<Topology> {
    let mut seen = vec![false; scn.topologies.len()];
    let mut out = Vec::new();
    for &idx in &scn.schedule.order {
        if !seen[idx] {
            seen[idx] = true;
            out.push(scn.topologies[idx].1.clone());
        }
    }
    out
}

/// Run `command` on a scenario. When `out_dir` is given and a simulation is
/// part of the run, the trajectory CSV is written there.
pub fn execute(
    scn: &Scenario,
    command: Command,
    overrides: &Overrides,
    out_dir: Option<&Path>,
) -> Result<RunReport> {
    let dec = decompose(&scn.system, &scn.u_o, scn.h, scn.block_tol)?;

    let active = scheduled_topologies(scn);
    if scn.connectivity == ConnectivityMode::JointlyConnected {
        let (ok, _) = check_jointly_connected(&active)?;
        if !ok {
            return Err(Error::ModeViolation(
                "scheduled topology set is not jointly connected".to_string(),
            ));
        }
    }
    let bounds = spectral_bounds(&active, scn.connectivity)?;

    let cert = DesignCertificate::new(
        scn.certificate.r_x.clone(),
        scn.certificate.r_z.clone(),
        scn.certificate.m.clone(),
        scn.certificate.j_e_star,
        bounds,
        scn.certificate.theorem,
        scn.certificate.data_tol,
    )?;
    let gains = compute_gains(&dec, &cert)?;

    let mut conditions = None;
    let mut pair_checks = Vec::new();
    let mut feasible_sup = None;
    let mut shrink_attempted = false;
    if command != Command::Simulate {
        let y0 = stacked_initial_outputs(scn);
        let report = match cert.theorem {
            TheoremKind::Two => verify_theorem2(&dec, &cert, &y0)?,
            TheoremKind::Three => verify_theorem3(&dec, &cert, &y0)?,
        };
        let lambdas = if (bounds.lambda_max - bounds.lambda_min).abs() < 1e-12 {
            vec![bounds.lambda_min]
        } else {
            vec![bounds.lambda_min, bounds.lambda_max]
        };
        pair_checks = closed_loop_pair_checks(&dec, &gains, &lambdas)?;
        if let Some(c) = report.get("III.b") {
            if !c.pass {
                shrink_attempted = true;
                feasible_sup =
                    feasible_lambda_sup(&dec, &cert, bounds.lambda_min, bounds.lambda_max)?;
            }
        }
        conditions = Some(report);
    }

    let mut sim = None;
    if command != Command::Verify {
        let dt = overrides.dt.unwrap_or(scn.sim.dt);
        let horizon = overrides.horizon.unwrap_or(scn.sim.horizon);
        let hbar = overrides.hbar.unwrap_or(scn.sim.hbar).min(horizon);
        let seed = overrides.seed.or(scn.seed);

        let schedule = build_schedule(&scn.schedule, horizon, seed)?;
        let pool: Vec<Topology> = scn.topologies.iter().map(|(_, t)| t.clone()).collect();
        let cl = assemble_closed_loop(&dec, &gains, &schedule, &pool)?;

        let n_agents = scn.x0.len();
        let mut x0 = DVector::<f64>::zeros(n_agents * dec.h);
        for (m, x) in scn.x0.iter().enumerate() {
            x0.rows_mut(m * dec.h, dec.h)
                .copy_from(&dec.reduce_state(x)?);
        }

        let traj = integrate(&cl, &x0, dt, horizon)?;
        let account = energy(&traj, &gains, &cert.m, hbar)?.with_budget(cert.j_e_star);

        let csv_path = match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join("trajectory.csv");
                let mut buf = Vec::new();
                write_trajectory_csv(&traj, &account, &mut buf)?;
                crate::report::write_atomic(&path, &buf)?;
                Some(path)
            }
            None => None,
        };

        sim = Some(SimSummary {
            dt,
            horizon,
            hbar,
            seed,
            initial_disagreement: traj.disagreement[0],
            terminal_disagreement: *traj.disagreement.last().unwrap(),
            j_e_hbar: account.j_at_hbar,
            j_e_star: cert.j_e_star,
            budget_pass: account.j_at_hbar <= cert.j_e_star,
            csv_path,
        });
    }

    let pairs_ok = pair_checks.iter().all(|(_, p)| p.regular && p.impulse_free);
    let conditions_ok = conditions.as_ref().is_none_or(|c| c.overall);
    let budget_ok = sim.as_ref().is_none_or(|s| s.budget_pass);
    let overall = pairs_ok && conditions_ok && budget_ok;

    Ok(RunReport {
        command,
        bounds,
        block_residual: dec.block_residual,
        gains,
        conditions,
        pair_checks,
        feasible_lambda_sup: feasible_sup,
        shrink_attempted,
        sim,
        overall,
    })
}

/// Decompose only, for callers that need the reduced system outside a run.
pub fn decompose_scenario(scn: &Scenario) -> Result<ObservableDecomposition> {
    decompose(&scn.system, &scn.u_o, scn.h, scn.block_tol)
}
