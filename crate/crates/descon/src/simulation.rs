//! Stacked closed-loop assembly, implicit integration of the switching
//! descriptor dynamics, energy metering, consensus metrics, and the
//! transformed-coordinates cross-check oracle.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};

use crate::decomposition::ObservableDecomposition;
use crate::error::{Error, Result};
use crate::gains::ProtocolGains;
use crate::topology::{laplacian, LaplacianReport, SwitchingSchedule, Topology};

/// The stacked dynamics: states ordered `[x_o(agents 1..N); z_o(agents
/// 1..N)]`, each agent block of size `h`. One drift matrix per topology id.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub e_cl: DMatrix<f64>,
    /// Indexed by topology id as referenced from the schedule.
    pub a_cl: Vec<DMatrix<f64>>,
    pub schedule: SwitchingSchedule,
    pub n_agents: usize,
    pub h: usize,
    pub c_o: DMatrix<f64>,
    pub gains: ProtocolGains,
}

/// Build `E_cl = I_2N (x) E_o` and, per topology,
/// `A_cl = [[I (x) A_o, I (x) B_o K_u], [-L (x) K_z C_o, I (x) (A_o + B_o K_u) + L (x) K_z C_o]]`.
/// The protocol state starts at zero by definition; `integrate` enforces it.
pub fn assemble_closed_loop(
    dec: &ObservableDecomposition,
    gains: &ProtocolGains,
    schedule: &SwitchingSchedule,
    topologies: &[Topology],
) -> Result<ClosedLoopSystem> {
    if topologies.is_empty() {
        return Err(Error::invalid_input("no topologies supplied"));
    }
    let n_agents = topologies[0].n_agents();
    if topologies.iter().any(|t| t.n_agents() != n_agents) {
        return Err(Error::invalid_input("topologies disagree on agent count"));
    }
    if let Some(bad) = schedule
        .entries
        .iter()
        .find(|e| e.topology >= topologies.len())
    {
        return Err(Error::invalid_input(format!(
            "schedule references topology {} but only {} are defined",
            bad.topology,
            topologies.len()
        )));
    }
    let h = dec.h;
    let k = dec.k();
    let l = dec.l();
    if gains.k_u.shape() != (k, h) || gains.k_z.shape() != (h, l) {
        return Err(Error::invalid_input("gain shapes inconsistent with decomposition"));
    }

    let eye_n = DMatrix::<f64>::identity(n_agents, n_agents);
    let e_cl = DMatrix::<f64>::identity(2 * n_agents, 2 * n_agents).kronecker(&dec.e_o);
    let bk = &dec.b_o * &gains.k_u;
    let a_closed = &dec.a_o + &bk;
    let kzc = &gains.k_z * &dec.c_o;

    let nh = n_agents * h;
    let mut a_cl = Vec::with_capacity(topologies.len());
    for t in topologies {
        let lap_mat = laplacian(t)?.l;
        let mut a = DMatrix::<f64>::zeros(2 * nh, 2 * nh);
        a.view_mut((0, 0), (nh, nh)).copy_from(&eye_n.kronecker(&dec.a_o));
        a.view_mut((0, nh), (nh, nh)).copy_from(&eye_n.kronecker(&bk));
        a.view_mut((nh, 0), (nh, nh)).copy_from(&(-(&lap_mat)).kronecker(&kzc));
        a.view_mut((nh, nh), (nh, nh))
            .copy_from(&(eye_n.kronecker(&a_closed) + lap_mat.kronecker(&kzc)));
        a_cl.push(a);
    }

    Ok(ClosedLoopSystem {
        e_cl,
        a_cl,
        schedule: schedule.clone(),
        n_agents,
        h,
        c_o: dec.c_o.clone(),
        gains: gains.clone(),
    })
}

/// A sampled run of the closed loop.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Stacked `[x_o; z_o]` per sample.
    pub states: Vec<DVector<f64>>,
    /// `outputs[sample][agent]`, each an l-vector `C_o x_om`.
    pub outputs: Vec<Vec<DVector<f64>>>,
    /// Output average per sample.
    pub consensus_candidate: Vec<DVector<f64>>,
    /// `max_m ||y_m - c_o||_inf` per sample.
    pub disagreement: Vec<f64>,
    pub n_agents: usize,
    pub h: usize,
    pub dt: f64,
}

/// Output average and worst per-agent deviation, per sample.
pub fn consensus_metrics(traj: &Trajectory) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut centers = Vec::with_capacity(traj.outputs.len());
    let mut gaps = Vec::with_capacity(traj.outputs.len());
    for ys in &traj.outputs {
        let l = ys[0].len();
        let mut c = DVector::<f64>::zeros(l);
        for y in ys {
            c += y;
        }
        c /= ys.len() as f64;
        let gap = ys
            .iter()
            .map(|y| (y - &c).amax())
            .fold(0.0_f64, f64::max);
        centers.push(c);
        gaps.push(gap);
    }
    (centers, gaps)
}

/// Plain implicit-Euler run of `E x' = A x` with constant matrices; returns
/// the state at every step including the initial one. Shared by the oracle
/// and tests.
pub fn be_integrate(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid_input(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != e.nrows() {
        return Err(Error::invalid_input("state length mismatch"));
    }
    let lu = (e - a * dt).lu();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.clone());
    let mut s = x0.clone();
    for _ in 0..steps {
        s = lu.solve(&(e * &s)).ok_or_else(|| {
            Error::StepFailure("implicit step matrix is singular; try a different dt".into())
        })?;
        out.push(s.clone());
    }
    Ok(out)
}

/// Integrate the switching closed loop with implicit Euler:
/// `(E_cl - dt A_cl(topology at t_{k+1})) s_{k+1} = E_cl s_k`. Switching
/// times are resolved on the step grid; the protocol state starts at zero.
/// `x0` stacks the observable agent states (length `N*h`).
pub fn integrate(
    cl: &ClosedLoopSystem,
    x0: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    let nh = cl.n_agents * cl.h;
    if x0.len() != nh {
        return Err(Error::invalid_input(format!(
            "x0 must stack {} observable states of size {} (length {}), got {}",
            cl.n_agents,
            cl.h,
            nh,
            x0.len()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid_input(format!("dt must be positive, got {dt}")));
    }
    if dt > cl.schedule.dwell / 10.0 * (1.0 + 1e-12) {
        return Err(Error::invalid_input(format!(
            "dt={dt} too coarse for dwell {}: every switching interval needs >= 10 steps",
            cl.schedule.dwell
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid_input(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    if steps as f64 * dt > cl.schedule.horizon * (1.0 + 1e-9) {
        return Err(Error::invalid_input(format!(
            "integration horizon {} exceeds schedule horizon {}",
            steps as f64 * dt,
            cl.schedule.horizon
        )));
    }

    let mut factor_cache: HashMap<usize, LU<f64, Dyn, Dyn>> = HashMap::new();
    let mut state = DVector::<f64>::zeros(2 * nh);
    state.rows_mut(0, nh).copy_from(x0);

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(state.clone());

    let t_last = cl.schedule.horizon - 0.5 * dt;
    for k in 0..steps {
        let t_next = (k + 1) as f64 * dt;
        let topo = crate::topology::topology_at(&cl.schedule, t_next.min(t_last))?;
        let lu = factor_cache
            .entry(topo)
            .or_insert_with(|| (&cl.e_cl - &cl.a_cl[topo] * dt).lu());
        let rhs = &cl.e_cl * &state;
        state = lu.solve(&rhs).ok_or_else(|| {
            Error::StepFailure(format!(
                "implicit step matrix singular at t={t_next}; try a different dt"
            ))
        })?;
        times.push(t_next);
        states.push(state.clone());
    }

    let l = cl.c_o.nrows();
    let mut outputs = Vec::with_capacity(states.len());
    for s in &states {
        let mut ys = Vec::with_capacity(cl.n_agents);
        for m in 0..cl.n_agents {
            let xm = s.rows(m * cl.h, cl.h);
            ys.push(&cl.c_o * xm);
        }
        debug_assert_eq!(ys.len(), cl.n_agents);
        debug_assert_eq!(ys[0].len(), l);
        outputs.push(ys);
    }

    let mut traj = Trajectory {
        times,
        states,
        outputs,
        consensus_candidate: Vec::new(),
        disagreement: Vec::new(),
        n_agents: cl.n_agents,
        h: cl.h,
        dt,
    };
    let (centers, gaps) = consensus_metrics(&traj);
    traj.consensus_candidate = centers;
    traj.disagreement = gaps;
    Ok(traj)
}

/// Running value of the input-energy functional.
#[derive(Debug, Clone)]
pub struct EnergyAccount {
    /// `(t, J_e(t))`, nondecreasing in the second component.
    pub samples: Vec<(f64, f64)>,
    pub hbar: f64,
    pub j_at_hbar: f64,
    /// Budget the caller intends to compare against, if any.
    pub budget: Option<f64>,
}

impl EnergyAccount {
    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }
}

/// Trapezoidal accumulation of `z_o^T (I (x) K_u^T M K_u) z_o` along the
/// trajectory, reported up to each sample and at the metering horizon.
pub fn energy(
    traj: &Trajectory,
    gains: &ProtocolGains,
    m_weight: &DMatrix<f64>,
    hbar: f64,
) -> Result<EnergyAccount> {
    let last_t = *traj.times.last().ok_or_else(|| {
        Error::invalid_input("empty trajectory")
    })?;
    if !(hbar > 0.0) || hbar > last_t * (1.0 + 1e-9) {
        return Err(Error::invalid_input(format!(
            "metering horizon {hbar} outside trajectory range (0, {last_t}]"
        )));
    }
    if m_weight.shape() != (gains.k_u.nrows(), gains.k_u.nrows()) {
        return Err(Error::invalid_input("M shape inconsistent with K_u"));
    }
    let q = gains.k_u.transpose() * m_weight * &gains.k_u;
    let nh = traj.n_agents * traj.h;
    let integrand = |s: &DVector<f64>| -> f64 {
        let mut f = 0.0;
        for m in 0..traj.n_agents {
            let z = s.rows(nh + m * traj.h, traj.h).into_owned();
            f += (&q * &z).dot(&z);
        }
        f
    };
    let mut samples = Vec::with_capacity(traj.times.len());
    let mut acc = 0.0;
    let mut prev = integrand(&traj.states[0]);
    samples.push((traj.times[0], 0.0));
    for i in 1..traj.times.len() {
        let cur = integrand(&traj.states[i]);
        let dt = traj.times[i] - traj.times[i - 1];
        acc += 0.5 * dt * (prev + cur);
        samples.push((traj.times[i], acc));
        prev = cur;
    }
    let idx = samples
        .iter()
        .position(|(t, _)| *t >= hbar * (1.0 - 1e-9))
        .unwrap_or(samples.len() - 1);
    Ok(EnergyAccount {
        j_at_hbar: samples[idx].1,
        samples,
        hbar,
        budget: None,
    })
}

/// Transformed trajectories: the consensus component and the disagreement
/// subsystem in the decoupling coordinates of a fixed connected topology.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub times: Vec<f64>,
    /// Consensus component of the agent states, h per sample.
    pub x_o1: Vec<DVector<f64>>,
    /// Consensus component of the protocol states.
    pub z_o1: Vec<DVector<f64>>,
    /// Disagreement protocol states, (N-1)h per sample.
    pub z_hat: Vec<DVector<f64>>,
    /// Disagreement agent states, (N-1)h per sample.
    pub x_hat: Vec<DVector<f64>>,
    /// Orthonormal eigenvector basis, first column `1/sqrt(N)`.
    pub u_kappa: DMatrix<f64>,
    /// Nonzero Laplacian eigenvalues in column order of `u_kappa[:, 1..]`.
    pub delta: Vec<f64>,
}

/// Orthonormal Laplacian eigenbasis sorted by ascending eigenvalue, the
/// zero-eigenvalue column normalized to `+1/sqrt(N)`.
pub fn laplacian_eigenbasis(rep: &LaplacianReport) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = rep.l.nrows();
    let se = rep.l.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut eigs = Vec::with_capacity(n);
    for (col, &i) in idx.iter().enumerate() {
        u.set_column(col, &se.eigenvectors.column(i));
        eigs.push(se.eigenvalues[i]);
    }
    let col_sum: f64 = u.column(0).iter().sum();
    if col_sum < 0.0 {
        let negated = -u.column(0).into_owned();
        u.set_column(0, &negated);
    }
    Ok((u, eigs))
}

/// Apply `(U^T (x) I_h)` to a stacked vector of `N` h-blocks.
pub fn block_transform(u: &DMatrix<f64>, h: usize, x: &DVector<f64>) -> DVector<f64> {
    let n = u.nrows();
    let mut out = DVector::<f64>::zeros(n * h);
    for i in 0..n {
        let mut acc = DVector::<f64>::zeros(h);
        for m in 0..n {
            acc += x.rows(m * h, h) * u[(m, i)];
        }
        out.rows_mut(i * h, h).copy_from(&acc);
    }
    out
}

/// Map a direct stacked state `[x_o; z_o]` into the oracle coordinates:
/// `(x_tilde_1, z_tilde_1, z_hat_delta, x_hat_delta)`.
pub fn map_to_oracle_coords(
    u_kappa: &DMatrix<f64>,
    h: usize,
    state: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = u_kappa.nrows();
    let nh = n * h;
    let x_t = block_transform(u_kappa, h, &state.rows(0, nh).into_owned());
    let z_t = block_transform(u_kappa, h, &state.rows(nh, nh).into_owned());
    let x1 = x_t.rows(0, h).into_owned();
    let z1 = z_t.rows(0, h).into_owned();
    let x_delta = x_t.rows(h, nh - h).into_owned();
    let z_delta = z_t.rows(h, nh - h).into_owned();
    let x_hat = &z_delta - &x_delta;
    (x1, z1, z_delta, x_hat)
}

/// Integrate the transformed systems directly for a fixed connected
/// topology: the consensus pair and the block-triangular disagreement
/// subsystem, with the same implicit scheme and step size as the direct
/// route.
pub fn transform_oracle(
    dec: &ObservableDecomposition,
    gains: &ProtocolGains,
    topo: &Topology,
    x0: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<OracleRun> {
    let rep = laplacian(topo)?;
    if !rep.connected {
        return Err(Error::OracleUndefined(
            "transform oracle needs a connected topology".to_string(),
        ));
    }
    let n = topo.n_agents();
    let h = dec.h;
    if x0.len() != n * h {
        return Err(Error::invalid_input(format!(
            "x0 must have length {}, got {}",
            n * h,
            x0.len()
        )));
    }
    let (u_kappa, eigs) = laplacian_eigenbasis(&rep)?;
    let delta: Vec<f64> = eigs[1..].to_vec();

    let x_t0 = block_transform(&u_kappa, h, x0);
    let x1_0 = x_t0.rows(0, h).into_owned();
    let x_delta_0 = x_t0.rows(h, (n - 1) * h).into_owned();

    let bk = &dec.b_o * &gains.k_u;
    let a_closed = &dec.a_o + &bk;
    let kzc = &gains.k_z * &dec.c_o;

    // Consensus pair: E_o x1' = A_o x1 + B_o K_u z1, E_o z1' = (A_o + B_o K_u) z1.
    let mut e_c = DMatrix::<f64>::zeros(2 * h, 2 * h);
    e_c.view_mut((0, 0), (h, h)).copy_from(&dec.e_o);
    e_c.view_mut((h, h), (h, h)).copy_from(&dec.e_o);
    let mut a_c = DMatrix::<f64>::zeros(2 * h, 2 * h);
    a_c.view_mut((0, 0), (h, h)).copy_from(&dec.a_o);
    a_c.view_mut((0, h), (h, h)).copy_from(&bk);
    a_c.view_mut((h, h), (h, h)).copy_from(&a_closed);
    let mut s_c0 = DVector::<f64>::zeros(2 * h);
    s_c0.rows_mut(0, h).copy_from(&x1_0);

    // Disagreement subsystem in hat coordinates, block upper-triangular:
    // z_hat' driven by x_hat, x_hat autonomous.
    let d = n - 1;
    let dh = d * h;
    let eye_d = DMatrix::<f64>::identity(d, d);
    let delta_mat = DMatrix::<f64>::from_fn(d, d, |i, j| if i == j { delta[i] } else { 0.0 });
    let e_d = DMatrix::<f64>::identity(2 * d, 2 * d).kronecker(&dec.e_o);
    let mut a_d = DMatrix::<f64>::zeros(2 * dh, 2 * dh);
    a_d.view_mut((0, 0), (dh, dh)).copy_from(&eye_d.kronecker(&a_closed));
    a_d.view_mut((0, dh), (dh, dh)).copy_from(&delta_mat.kronecker(&kzc));
    a_d.view_mut((dh, dh), (dh, dh))
        .copy_from(&(eye_d.kronecker(&dec.a_o) + delta_mat.kronecker(&kzc)));
    let mut s_d0 = DVector::<f64>::zeros(2 * dh);
    s_d0.rows_mut(dh, dh).copy_from(&(-&x_delta_0));

    let steps = (horizon / dt).round().max(1.0) as usize;
    let cons = be_integrate(&e_c, &a_c, &s_c0, dt, steps)?;
    let dis = be_integrate(&e_d, &a_d, &s_d0, dt, steps)?;

    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(OracleRun {
        times,
        x_o1: cons.iter().map(|s| s.rows(0, h).into_owned()).collect(),
        z_o1: cons.iter().map(|s| s.rows(h, h).into_owned()).collect(),
        z_hat: dis.iter().map(|s| s.rows(0, dh).into_owned()).collect(),
        x_hat: dis.iter().map(|s| s.rows(dh, dh).into_owned()).collect(),
        u_kappa,
        delta,
    })
}

/// Emit the trajectory as CSV: `t, y_<m>_<j>..., c_o_<j>..., disagreement,
/// J_e`, one row per sample, decimals formatted to round-trip exactly.
pub fn write_trajectory_csv(
    traj: &Trajectory,
    account: &EnergyAccount,
    sink: &mut dyn Write,
) -> Result<()> {
    let l = traj.consensus_candidate[0].len();
    let mut cols = vec!["t".to_string()];
    for m in 1..=traj.n_agents {
        for j in 1..=l {
            cols.push(format!("y_{m}_{j}"));
        }
    }
    for j in 1..=l {
        cols.push(format!("c_o_{j}"));
    }
    cols.push("disagreement".to_string());
    cols.push("J_e".to_string());
    writeln!(sink, "{}", cols.join(", "))?;

    for (i, t) in traj.times.iter().enumerate() {
        let mut row = Vec::with_capacity(cols.len());
        row.push(format!("{t}"));
        for y in &traj.outputs[i] {
            for v in y.iter() {
                row.push(format!("{v}"));
            }
        }
        for v in traj.consensus_candidate[i].iter() {
            row.push(format!("{v}"));
        }
        row.push(format!("{}", traj.disagreement[i]));
        row.push(format!("{}", account.samples[i].1));
        writeln!(sink, "{}", row.join(", "))?;
    }
    Ok(())
}
