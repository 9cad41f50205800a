//! Scenario files: a TOML document bundling the plant, the decomposition
//! transform, candidate topologies and their switching schedule, the
//! certificate matrices, initial states, and integration parameters.
//!
//! Edges are written 1-indexed in the file and converted on load. Matrices
//! are row-major nested arrays. Shape problems are reported with the
//! offending field path.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::descriptor::DescriptorSystem;
use crate::error::{Error, Result};
use crate::gains::TheoremKind;
use crate::topology::{ConnectivityMode, ScheduleKind, ScheduleSpec, Topology};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: Option<u64>,
    system: RawSystem,
    decomposition: RawDecomposition,
    topologies: Vec<RawTopology>,
    schedule: RawSchedule,
    certificate: RawCertificate,
    initial_states: RawInitialStates,
    sim: RawSim,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    e: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecomposition {
    u_o: Vec<Vec<f64>>,
    h: usize,
    block_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    name: String,
    /// 1-indexed agent pairs.
    edges: Vec<Vec<usize>>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: String,
    connectivity: String,
    topologies: Vec<String>,
    dwell: f64,
    dwell_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertificate {
    theorem: String,
    r_x: Vec<Vec<f64>>,
    r_z: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    j_e_star: f64,
    data_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitialStates {
    x: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: f64,
    horizon: f64,
    hbar: f64,
}

/// Certificate data as written in the file; eigenvalue bounds are derived
/// from the topology set at run time, so they are not part of the input.
#[derive(Debug, Clone)]
pub struct CertificateInput {
    pub theorem: TheoremKind,
    pub r_x: DMatrix<f64>,
    pub r_z: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub j_e_star: f64,
    pub data_tol: f64,
}

/// Integration parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimParams {
    pub dt: f64,
    pub horizon: f64,
    /// Metering horizon for the energy account.
    pub hbar: f64,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: DescriptorSystem,
    pub u_o: DMatrix<f64>,
    pub h: usize,
    pub block_tol: Option<f64>,
    /// Named topologies, in file order; schedule indices point here.
    pub topologies: Vec<(String, Topology)>,
    pub schedule: ScheduleSpec,
    pub connectivity: ConnectivityMode,
    pub certificate: CertificateInput,
    /// One full-order initial state per agent.
    pub x0: Vec<DVector<f64>>,
    pub sim: SimParams,
    pub seed: Option<u64>,
}

fn matrix_field(origin: &str, field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::parse(origin, format!("{field}: matrix must be nonempty")));
    }
    let ncols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::parse(
            origin,
            format!(
                "{field}: row {} has {} entries, expected {} (rows must have equal length)",
                i + 1,
                r.len(),
                ncols
            ),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn expect_shape(origin: &str, field: &str, m: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::parse(
            origin,
            format!(
                "{field}: expected {}x{}, got {}x{}",
                shape.0,
                shape.1,
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    Ok(())
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        Scenario::from_toml_str(&text, &path.display().to_string())
    }

    /// Parse and validate. `origin` names the source in error messages.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Scenario> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;

        let e = matrix_field(origin, "system.e", &raw.system.e)?;
        let n = e.nrows();
        expect_shape(origin, "system.e", &e, (n, n))?;
        let a = matrix_field(origin, "system.a", &raw.system.a)?;
        expect_shape(origin, "system.a", &a, (n, n))?;
        let b = matrix_field(origin, "system.b", &raw.system.b)?;
        if b.nrows() != n {
            return Err(Error::parse(
                origin,
                format!("system.b: expected {n} rows, got {}", b.nrows()),
            ));
        }
        let c = matrix_field(origin, "system.c", &raw.system.c)?;
        if c.ncols() != n {
            return Err(Error::parse(
                origin,
                format!("system.c: expected {n} columns, got {}", c.ncols()),
            ));
        }
        let system = DescriptorSystem::new(e, a, b, c)?;

        let u_o = matrix_field(origin, "decomposition.u_o", &raw.decomposition.u_o)?;
        expect_shape(origin, "decomposition.u_o", &u_o, (n, n))?;
        let h = raw.decomposition.h;
        if h == 0 || h > n {
            return Err(Error::parse(
                origin,
                format!("decomposition.h: must be in 1..={n}, got {h}"),
            ));
        }
        if let Some(t) = raw.decomposition.block_tol {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::parse(
                    origin,
                    format!("decomposition.block_tol: must be positive, got {t}"),
                ));
            }
        }

        if raw.topologies.is_empty() {
            return Err(Error::parse(origin, "topologies: at least one required"));
        }
        let n_agents = raw.initial_states.x.len();
        if n_agents == 0 {
            return Err(Error::parse(origin, "initial_states.x: at least one agent required"));
        }
        let mut topologies = Vec::with_capacity(raw.topologies.len());
        for (ti, rt) in raw.topologies.iter().enumerate() {
            let field = format!("topologies[{}]", ti);
            if let Some(w) = &rt.weights {
                if w.len() != rt.edges.len() {
                    return Err(Error::parse(
                        origin,
                        format!(
                            "{field}.weights: {} weights for {} edges",
                            w.len(),
                            rt.edges.len()
                        ),
                    ));
                }
            }
            let mut edges = Vec::with_capacity(rt.edges.len());
            for (ei, pair) in rt.edges.iter().enumerate() {
                if pair.len() != 2 {
                    return Err(Error::parse(
                        origin,
                        format!("{field}.edges[{ei}]: expected a pair, got {} entries", pair.len()),
                    ));
                }
                let (i, j) = (pair[0], pair[1]);
                if i == 0 || j == 0 || i > n_agents || j > n_agents {
                    return Err(Error::parse(
                        origin,
                        format!(
                            "{field}.edges[{ei}]: agents are numbered 1..={n_agents}, got ({i}, {j})"
                        ),
                    ));
                }
                let w = rt.weights.as_ref().map_or(1.0, |ws| ws[ei]);
                edges.push((i - 1, j - 1, w));
            }
            let topo = Topology::new(n_agents, edges)
                .map_err(|e| Error::parse(origin, format!("{field}: {e}")))?;
            topologies.push((rt.name.clone(), topo));
        }
        if topologies
            .iter()
            .enumerate()
            .any(|(i, (name, _))| topologies[..i].iter().any(|(other, _)| other == name))
        {
            return Err(Error::parse(origin, "topologies: names must be unique"));
        }

        let kind = match raw.schedule.kind.as_str() {
            "random" => ScheduleKind::Random,
            "cyclic" => ScheduleKind::Cyclic,
            other => {
                return Err(Error::parse(
                    origin,
                    format!("schedule.kind: expected \"random\" or \"cyclic\", got \"{other}\""),
                ))
            }
        };
        let connectivity = match raw.schedule.connectivity.as_str() {
            "switching" => ConnectivityMode::SwitchingConnected,
            "jointly" => ConnectivityMode::JointlyConnected,
            other => {
                return Err(Error::parse(
                    origin,
                    format!(
                        "schedule.connectivity: expected \"switching\" or \"jointly\", got \"{other}\""
                    ),
                ))
            }
        };
        if raw.schedule.topologies.is_empty() {
            return Err(Error::parse(origin, "schedule.topologies: at least one required"));
        }
        let mut order = Vec::with_capacity(raw.schedule.topologies.len());
        for name in &raw.schedule.topologies {
            let idx = topologies
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| {
                    Error::parse(
                        origin,
                        format!("schedule.topologies: unknown topology \"{name}\""),
                    )
                })?;
            order.push(idx);
        }
        if !(raw.schedule.dwell > 0.0) || !raw.schedule.dwell.is_finite() {
            return Err(Error::parse(
                origin,
                format!("schedule.dwell: must be positive, got {}", raw.schedule.dwell),
            ));
        }
        if let Some(dm) = raw.schedule.dwell_max {
            if dm < raw.schedule.dwell {
                return Err(Error::parse(
                    origin,
                    format!(
                        "schedule.dwell_max: must be >= dwell {}, got {dm}",
                        raw.schedule.dwell
                    ),
                ));
            }
        }
        let schedule = ScheduleSpec {
            kind,
            order,
            dwell: raw.schedule.dwell,
            dwell_max: raw.schedule.dwell_max,
        };

        let theorem = match raw.certificate.theorem.as_str() {
            "two" => TheoremKind::Two,
            "three" => TheoremKind::Three,
            other => {
                return Err(Error::parse(
                    origin,
                    format!("certificate.theorem: expected \"two\" or \"three\", got \"{other}\""),
                ))
            }
        };
        let r_x = matrix_field(origin, "certificate.r_x", &raw.certificate.r_x)?;
        expect_shape(origin, "certificate.r_x", &r_x, (h, h))?;
        let r_z = matrix_field(origin, "certificate.r_z", &raw.certificate.r_z)?;
        expect_shape(origin, "certificate.r_z", &r_z, (h, h))?;
        let m = matrix_field(origin, "certificate.m", &raw.certificate.m)?;
        let k = system.k();
        expect_shape(origin, "certificate.m", &m, (k, k))?;
        if !(raw.certificate.j_e_star > 0.0) || !raw.certificate.j_e_star.is_finite() {
            return Err(Error::parse(
                origin,
                format!(
                    "certificate.j_e_star: must be positive, got {}",
                    raw.certificate.j_e_star
                ),
            ));
        }
        let data_tol = raw.certificate.data_tol.unwrap_or(0.0);
        if !(data_tol >= 0.0) || !data_tol.is_finite() {
            return Err(Error::parse(
                origin,
                format!("certificate.data_tol: must be nonnegative, got {data_tol}"),
            ));
        }
        let certificate = CertificateInput {
            theorem,
            r_x,
            r_z,
            m,
            j_e_star: raw.certificate.j_e_star,
            data_tol,
        };

        let mut x0 = Vec::with_capacity(n_agents);
        for (i, row) in raw.initial_states.x.iter().enumerate() {
            if row.len() != n {
                return Err(Error::parse(
                    origin,
                    format!(
                        "initial_states.x[{i}]: expected length {n}, got {}",
                        row.len()
                    ),
                ));
            }
            x0.push(DVector::from_column_slice(row));
        }

        for (name, v) in [
            ("sim.dt", raw.sim.dt),
            ("sim.horizon", raw.sim.horizon),
            ("sim.hbar", raw.sim.hbar),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::parse(
                    origin,
                    format!("{name}: must be positive, got {v}"),
                ));
            }
        }
        if raw.sim.hbar > raw.sim.horizon * (1.0 + 1e-9) {
            return Err(Error::parse(
                origin,
                format!(
                    "sim.hbar: metering horizon {} exceeds sim.horizon {}",
                    raw.sim.hbar, raw.sim.horizon
                ),
            ));
        }

        Ok(Scenario {
            system,
            u_o,
            h,
            block_tol: raw.decomposition.block_tol,
            topologies,
            schedule,
            connectivity,
            certificate,
            x0,
            sim: SimParams {
                dt: raw.sim.dt,
                horizon: raw.sim.horizon,
                hbar: raw.sim.hbar,
            },
            seed: raw.seed,
        })
    }
}
