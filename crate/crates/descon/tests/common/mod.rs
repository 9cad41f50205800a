//! Shared fixtures for integration tests: bundled scenario loading, seeded
//! random matrix generators, and pipeline shortcuts.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use descon::decomposition::{decompose, ObservableDecomposition};
use descon::gains::{compute_gains, DesignCertificate, ProtocolGains};
use descon::scenario::Scenario;
use descon::topology::{spectral_bounds, SpectralBounds, Topology};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

pub fn scenario1() -> Scenario {
    Scenario::load(&scenario_path("example1.toml")).expect("bundled scenario must load")
}

pub fn scenario2() -> Scenario {
    Scenario::load(&scenario_path("example2.toml")).expect("bundled scenario must load")
}

/// Decomposition, certificate (with bounds from the scheduled topologies),
/// and gains for a loaded scenario.
pub fn pipeline(scn: &Scenario) -> (ObservableDecomposition, DesignCertificate, ProtocolGains) {
    let dec = decompose(&scn.system, &scn.u_o, scn.h, scn.block_tol).expect("decompose");
    let topos: Vec<Topology> = scn.topologies.iter().map(|(_, t)| t.clone()).collect();
    let bounds = spectral_bounds(&topos, scn.connectivity).expect("bounds");
    let cert = DesignCertificate::new(
        scn.certificate.r_x.clone(),
        scn.certificate.r_z.clone(),
        scn.certificate.m.clone(),
        scn.certificate.j_e_star,
        bounds,
        scn.certificate.theorem,
        scn.certificate.data_tol,
    )
    .expect("certificate");
    let gains = compute_gains(&dec, &cert).expect("gains");
    (dec, cert, gains)
}

pub fn stacked_y0(scn: &Scenario) -> DVector<f64> {
    let l = scn.system.l();
    let mut y0 = DVector::<f64>::zeros(scn.x0.len() * l);
    for (m, x) in scn.x0.iter().enumerate() {
        y0.rows_mut(m * l, l).copy_from(&(&scn.system.c * x));
    }
    y0
}

pub fn bounds_of(scn: &Scenario) -> SpectralBounds {
    let topos: Vec<Topology> = scn.topologies.iter().map(|(_, t)| t.clone()).collect();
    spectral_bounds(&topos, scn.connectivity).expect("bounds")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-3.0..=3.0))
}

pub fn random_symmetric(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(r, n, n);
    (&m + m.transpose()) * 0.5
}

/// Random orthonormal matrix via QR of a full-rank random matrix.
pub fn random_orthonormal(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let m = random_matrix(r, n, n);
        let qr = m.qr();
        let q = qr.q();
        if q.determinant().abs() > 0.5 {
            return q;
        }
    }
}

/// Random symmetric negative definite matrix (stable in the Lyapunov sense).
pub fn random_stable(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(r, n, n);
    -(&m * m.transpose()) - DMatrix::identity(n, n) * 0.2
}

pub fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows[0].len();
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

pub fn vec_of(entries: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(entries)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
