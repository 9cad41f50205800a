//! Undirected weighted communication graphs, their Laplacians and spectra,
//! joint-connectivity over switching windows, and dwell-time switching
//! schedules.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{sym_eigenvalues, TOL_CONN};

/// An undirected weighted graph on agents `0..n_agents`.
#[derive(Debug, Clone)]
pub struct Topology {
    n_agents: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Topology {
    /// Edges are `(i, j, w)` with `i != j`, 0-indexed, `w > 0`. Parallel
    /// edges accumulate weight.
    pub fn new(n_agents: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::invalid_input("topology needs at least one agent"));
        }
        for &(i, j, w) in &edges {
            if i == j {
                return Err(Error::invalid_input(format!("self-loop at agent {i}")));
            }
            if i >= n_agents || j >= n_agents {
                return Err(Error::invalid_input(format!(
                    "edge ({i},{j}) out of range for {n_agents} agents"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid_input(format!(
                    "edge ({i},{j}) has non-positive weight {w}"
                )));
            }
        }
        Ok(Topology { n_agents, edges })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }
}

/// Laplacian with spectrum and connectivity verdict.
#[derive(Debug, Clone)]
pub struct LaplacianReport {
    pub l: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub connected: bool,
    /// Second-smallest eigenvalue (0 for a single agent).
    pub lambda2: f64,
    /// Largest eigenvalue.
    pub lambda_n: f64,
}

fn laplacian_matrix(t: &Topology) -> DMatrix<f64> {
    let n = t.n_agents;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for &(i, j, w) in &t.edges {
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}

fn report_from_matrix(l: DMatrix<f64>) -> Result<LaplacianReport> {
    let n = l.nrows();
    let spec = sym_eigenvalues(&l)?;
    let lambda2 = if n > 1 { spec.eigenvalues[1] } else { 0.0 };
    let lambda_n = spec.max.max(0.0);
    Ok(LaplacianReport {
        l,
        connected: n == 1 || lambda2 > TOL_CONN,
        eigenvalues: spec.eigenvalues,
        lambda2,
        lambda_n,
    })
}

/// Build the Laplacian `L_ii = sum_j w_ij`, `L_ij = -w_ij` and classify it.
pub fn laplacian(t: &Topology) -> Result<LaplacianReport> {
    report_from_matrix(laplacian_matrix(t))
}

/// How a topology set is meant to supply connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectivityMode {
    /// Every topology in the set is connected on its own.
    SwitchingConnected,
    /// Individual topologies may be disconnected; unions over switching
    /// windows must be connected.
    JointlyConnected,
}

/// Extremal nonzero Laplacian eigenvalues over a topology set.
#[derive(Debug, Clone, Copy)]
pub struct SpectralBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Nonzero (above the connectivity threshold) eigenvalues of a report.
fn nonzero_eigs(rep: &LaplacianReport) -> impl Iterator<Item = f64> + '_ {
    rep.eigenvalues.iter().copied().filter(|&v| v > TOL_CONN)
}

/// Bounds over the nonzero Laplacian spectra of the set. In jointly
/// connected mode the per-topology nonzero eigenvalues and the spectrum of
/// the whole-set union both count (the conservative reading); in switching
/// mode every member must itself be connected.
pub fn spectral_bounds(topologies: &[Topology], mode: ConnectivityMode) -> Result<SpectralBounds> {
    if topologies.is_empty() {
        return Err(Error::invalid_input("topology set is empty"));
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (idx, t) in topologies.iter().enumerate() {
        let rep = laplacian(t)?;
        if mode == ConnectivityMode::SwitchingConnected && !rep.connected {
            return Err(Error::ModeViolation(format!(
                "topology {idx} is disconnected in switching-connected mode"
            )));
        }
        for v in nonzero_eigs(&rep) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if mode == ConnectivityMode::JointlyConnected {
        let (_, union_rep) = check_jointly_connected(topologies)?;
        for v in nonzero_eigs(&union_rep) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo.is_finite() && lo > 0.0 && hi >= lo) {
        return Err(Error::invalid_input(
            "topology set has no nonzero Laplacian eigenvalues".to_string(),
        ));
    }
    Ok(SpectralBounds {
        lambda_min: lo,
        lambda_max: hi,
    })
}

/// Sum the Laplacians of a switching window and report whether the union
/// graph is connected.
pub fn check_jointly_connected(window: &[Topology]) -> Result<(bool, LaplacianReport)> {
    if window.is_empty() {
        return Err(Error::invalid_input("empty switching window"));
    }
    let n = window[0].n_agents;
    if window.iter().any(|t| t.n_agents != n) {
        return Err(Error::invalid_input(
            "window topologies disagree on agent count".to_string(),
        ));
    }
    let mut sum = DMatrix::<f64>::zeros(n, n);
    for t in window {
        sum += laplacian_matrix(t);
    }
    let rep = report_from_matrix(sum)?;
    Ok((rep.connected, rep))
}

/// How switching times and topology choices are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Uniform random dwell in `[dwell, dwell_max]`, uniform random topology.
    Random,
    /// Fixed dwell, repeating the listed order.
    Cyclic,
}

/// Declarative description of a schedule over topology ids `0..pool`.
#[derive(Debug, Clone)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Topology ids, in cycle order for `Cyclic`, as the draw pool for
    /// `Random`.
    pub order: Vec<usize>,
    pub dwell: f64,
    /// Upper dwell bound for `Random` (defaults to `3 * dwell`).
    pub dwell_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    pub start: f64,
    pub topology: usize,
}

/// A realized switching signal: piecewise-constant topology ids on
/// right-open intervals covering `[0, horizon)`.
#[derive(Debug, Clone)]
pub struct SwitchingSchedule {
    pub entries: Vec<ScheduleEntry>,
    pub dwell: f64,
    pub horizon: f64,
    pub kind: ScheduleKind,
    /// Window boundaries for joint-connectivity analysis: one full pass of
    /// the cycle per window (cyclic schedules only).
    pub joint_windows: Vec<f64>,
}

/// Realize a schedule. Random mode requires a seed and is deterministic for
/// a fixed (spec, seed) pair.
pub fn build_schedule(spec: &ScheduleSpec, horizon: f64, seed: Option<u64>) -> Result<SwitchingSchedule> {
    if spec.order.is_empty() {
        return Err(Error::invalid_input("schedule names no topologies"));
    }
    if !(spec.dwell > 0.0) || !spec.dwell.is_finite() {
        return Err(Error::invalid_input(format!("dwell must be positive, got {}", spec.dwell)));
    }
    if horizon < spec.dwell {
        return Err(Error::invalid_input(format!(
            "horizon {} shorter than dwell {}",
            horizon, spec.dwell
        )));
    }
    let mut entries = Vec::new();
    let mut joint_windows = Vec::new();
    match spec.kind {
        ScheduleKind::Cyclic => {
            let mut t = 0.0;
            let mut i = 0usize;
            while t < horizon {
                if i.is_multiple_of(spec.order.len()) {
                    joint_windows.push(t);
                }
                entries.push(ScheduleEntry {
                    start: t,
                    topology: spec.order[i % spec.order.len()],
                });
                i += 1;
                t = i as f64 * spec.dwell;
            }
            joint_windows.push(horizon);
        }
        ScheduleKind::Random => {
            let seed = seed.ok_or_else(|| {
                Error::invalid_input("random schedule requires a seed")
            })?;
            let dwell_max = spec.dwell_max.unwrap_or(3.0 * spec.dwell);
            if dwell_max < spec.dwell {
                return Err(Error::invalid_input(format!(
                    "dwell_max {} below dwell {}",
                    dwell_max, spec.dwell
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0.0;
            while t < horizon {
                let pick = spec.order[rng.random_range(0..spec.order.len())];
                entries.push(ScheduleEntry {
                    start: t,
                    topology: pick,
                });
                t += rng.random_range(spec.dwell..=dwell_max);
            }
        }
    }
    Ok(SwitchingSchedule {
        entries,
        dwell: spec.dwell,
        horizon,
        kind: spec.kind,
        joint_windows,
    })
}

/// Topology id active at time `t`: the last entry with `start <= t`
/// (intervals are right-open).
pub fn topology_at(s: &SwitchingSchedule, t: f64) -> Result<usize> {
    if !(0.0..s.horizon).contains(&t) {
        return Err(Error::invalid_input(format!(
            "time {t} outside schedule range [0, {})",
            s.horizon
        )));
    }
    let idx = s.entries.partition_point(|e| e.start <= t);
    Ok(s.entries[idx - 1].topology)
}
