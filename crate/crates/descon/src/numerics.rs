//! Dense-matrix kernel: numerical rank, symmetric spectra, definiteness
//! tests, and matrix-pencil regularity/degree.
//!
//! All operations are pure functions over `nalgebra` dynamic matrices and
//! reject non-finite input. Margins follow the convention stated on each
//! function; callers that need a shifted "positive means pass" margin apply
//! the shift themselves.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on `max |m - m^T|` before a matrix is rejected as
/// asymmetric.
pub const TOL_SYM: f64 = 1e-9;
/// Strict-definiteness threshold: negative definite means max eigenvalue
/// below `-TOL_DEF`.
pub const TOL_DEF: f64 = 1e-9;
/// Semidefiniteness threshold: positive semidefinite means min eigenvalue
/// at or above `-TOL_PSD`.
pub const TOL_PSD: f64 = 1e-9;
/// Relative threshold (against the largest coefficient) below which a fitted
/// determinant-polynomial coefficient is treated as zero.
pub const TOL_POLY: f64 = 1e-8;
/// Connectivity threshold on the second-smallest Laplacian eigenvalue.
pub const TOL_CONN: f64 = 1e-8;

/// Default SVD rank threshold for a matrix with the given shape and largest
/// singular value.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON * 1e3
}

/// Rejects matrices containing NaN or infinite entries.
pub fn ensure_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid_input(format!("{name} has non-finite entries")))
    }
}

/// Result of a singular-value rank decision.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub rank: usize,
    /// Singular values, descending.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

impl RankReport {
    /// Signed distance of the rank decision from the threshold, relative to
    /// a target rank: positive iff the computed rank equals the target with
    /// clearance on both sides of the cut.
    pub fn margin_for_target(&self, target: usize) -> f64 {
        let sigma = |i: usize| {
            if i == 0 {
                f64::INFINITY
            } else {
                self.singular_values.get(i - 1).copied().unwrap_or(0.0)
            }
        };
        if self.rank == target {
            sigma(target) - self.tolerance_used
        } else if self.rank < target {
            // sigma(target) <= tol here, so this is <= 0.
            sigma(target) - self.tolerance_used
        } else {
            // Too many large singular values; negative by construction.
            self.tolerance_used - sigma(target + 1)
        }
    }
}

/// Rank by singular-value thresholding. `tol` overrides the default
/// threshold rule.
pub fn numerical_rank(m: &DMatrix<f64>, tol: Option<f64>) -> Result<RankReport> {
    ensure_finite("matrix", m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(RankReport {
            rank: 0,
            singular_values: Vec::new(),
            tolerance_used: tol.unwrap_or(0.0),
        });
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tolerance_used = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), sigma_max));
    let rank = sv.iter().filter(|&&s| s > tolerance_used).count();
    Ok(RankReport {
        rank,
        singular_values: sv,
        tolerance_used,
    })
}

/// Rank of a complex matrix, same thresholding rule. Used by the
/// eigenvalue-wise detectability and stabilizability tests.
pub fn numerical_rank_complex(m: &DMatrix<Complex<f64>>, tol: Option<f64>) -> Result<usize> {
    if !m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::invalid_input("complex matrix has non-finite entries"));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let t = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), sigma_max));
    Ok(sv.iter().filter(|&&s| s > t).count())
}

/// Full spectrum of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

/// Largest absolute asymmetry `max |m - m^T|`.
pub fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            r = r.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    r
}

/// Symmetric part `(m + m^T)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a (tolerably) symmetric matrix, ascending. The input is
/// symmetrized before factorization.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<SpectrumReport> {
    ensure_finite("matrix", m)?;
    if !m.is_square() {
        return Err(Error::invalid_input(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let res = symmetry_residual(m);
    if res > TOL_SYM {
        return Err(Error::invalid_input(format!(
            "matrix asymmetry {res:.3e} exceeds {TOL_SYM:.1e}"
        )));
    }
    sym_eigenvalues_presymmetrized(&symmetrize(m))
}

/// Like [`sym_eigenvalues`] but skips the asymmetry gate; the caller has
/// already symmetrized (used on residual-laden condition matrices whose
/// symmetry is checked separately with scenario-level slack).
pub fn sym_eigenvalues_presymmetrized(m: &DMatrix<f64>) -> Result<SpectrumReport> {
    ensure_finite("matrix", m)?;
    if m.nrows() == 0 {
        return Ok(SpectrumReport {
            eigenvalues: Vec::new(),
            min: f64::NAN,
            max: f64::NAN,
        });
    }
    let mut eig: Vec<f64> = symmetrize(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = eig[0];
    let max = *eig.last().unwrap();
    Ok(SpectrumReport {
        eigenvalues: eig,
        min,
        max,
    })
}

/// Definiteness verdict with the raw extreme eigenvalue as margin.
#[derive(Debug, Clone, Copy)]
pub struct DefinitenessReport {
    pub verdict: bool,
    /// For negative-definite tests: `-(max eigenvalue)`.
    /// For positive-semidefinite tests: the min eigenvalue.
    pub margin: f64,
}

/// True iff the max eigenvalue of the symmetrized input is below `-TOL_DEF`.
pub fn is_negative_definite(m: &DMatrix<f64>) -> Result<DefinitenessReport> {
    let spec = sym_eigenvalues(m)?;
    Ok(DefinitenessReport {
        verdict: spec.max < -TOL_DEF,
        margin: -spec.max,
    })
}

/// True iff the min eigenvalue of the symmetrized input is at or above
/// `-TOL_PSD` (boundary allowed).
pub fn is_positive_semidefinite(m: &DMatrix<f64>) -> Result<DefinitenessReport> {
    let spec = sym_eigenvalues(m)?;
    Ok(DefinitenessReport {
        verdict: spec.min >= -TOL_PSD,
        margin: spec.min,
    })
}

/// Regularity and degree of `det(sigma*E - A)`.
#[derive(Debug, Clone, Copy)]
pub struct PencilDegreeReport {
    pub regular: bool,
    pub degree: usize,
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..m.nrows() {
        let row_sum: f64 = (0..m.ncols()).map(|j| m[(i, j)].abs()).sum();
        best = best.max(row_sum);
    }
    best
}

/// `||m||_inf` (max absolute row sum); 0 for empty matrices.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    inf_norm(m)
}

/// Fit an interpolating polynomial through `(t_i, v_i)` and return its
/// coefficients (ascending powers). Points are assumed distinct.
fn fit_poly(ts: &[f64], vs: &[f64]) -> Option<Vec<f64>> {
    let n = ts.len();
    let mut vander = DMatrix::<f64>::zeros(n, n);
    for (i, &t) in ts.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..n {
            vander[(i, j)] = p;
            p *= t;
        }
    }
    let rhs = DVector::from_column_slice(vs);
    vander.lu().solve(&rhs).map(|c| c.iter().copied().collect())
}

/// Degree of `det(sigma*E - A)` in `sigma`, by sampling the determinant at
/// `n+1` points and fitting the interpolating polynomial. Coefficients below
/// `TOL_POLY` of the largest are treated as zero. Regularity is decided by a
/// full-rank test of `sigma*E - A` at the sample points (sturdier than the
/// magnitude of a determinant); a shifted resample backs up a degenerate
/// first round.
pub fn pencil_determinant_degree(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<PencilDegreeReport> {
    ensure_finite("E", e)?;
    ensure_finite("A", a)?;
    if !e.is_square() || e.shape() != a.shape() {
        return Err(Error::invalid_input(format!(
            "pencil needs equal square matrices, got {}x{} and {}x{}",
            e.nrows(),
            e.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let n = e.nrows();
    if n == 0 {
        return Ok(PencilDegreeReport {
            regular: true,
            degree: 0,
        });
    }
    // Sample-point scale guards against landing on generalized eigenvalues
    // of desk-scale pencils.
    let scale = 1.0 + inf_norm(a) / (1.0 + inf_norm(e));

    let evaluate = |shift: f64| -> (Vec<f64>, Vec<f64>, bool) {
        let mut ts = Vec::with_capacity(n + 1);
        let mut vs = Vec::with_capacity(n + 1);
        let mut any_full_rank = false;
        for i in 1..=(n + 1) {
            let sigma = (i as f64 + shift) * scale;
            let m = e * sigma - a;
            if let Ok(r) = numerical_rank(&m, None) {
                if r.rank == n {
                    any_full_rank = true;
                }
            }
            // Fit in the normalized variable tau = sigma/scale to keep the
            // Vandermonde system well conditioned; the degree is unchanged.
            ts.push(i as f64 + shift);
            vs.push(m.determinant());
        }
        (ts, vs, any_full_rank)
    };

    let (mut ts, mut vs, mut regular) = evaluate(0.0);
    let degenerate = |vals: &[f64]| vals.iter().all(|v| v.abs() == 0.0);
    if degenerate(&vs) || !regular {
        let (ts2, vs2, reg2) = evaluate(0.37);
        if regular || reg2 {
            regular = true;
            if degenerate(&vs) {
                ts = ts2;
                vs = vs2;
            }
        }
    }
    if !regular {
        return Ok(PencilDegreeReport {
            regular: false,
            degree: 0,
        });
    }
    let vmax = vs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if vmax == 0.0 {
        // Full rank was observed yet every sampled determinant is exactly
        // zero: numerically inconsistent input.
        return Err(Error::AnalysisUndefined(
            "determinant samples vanish on a full-rank pencil".into(),
        ));
    }
    let normalized: Vec<f64> = vs.iter().map(|v| v / vmax).collect();
    let coeffs = fit_poly(&ts, &normalized).ok_or_else(|| {
        Error::AnalysisUndefined("interpolating polynomial fit failed".into())
    })?;
    let cmax = coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    let degree = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > TOL_POLY * cmax)
        .map(|(i, _)| i)
        .max()
        .unwrap_or(0);
    Ok(PencilDegreeReport {
        regular: true,
        degree,
    })
}

/// Finite generalized eigenvalues of the pencil `(E, A)`, i.e. the roots of
/// `det(sigma*E - A)`. Computed through the shifted resolvent
/// `G = (beta*E - A)^{-1} E`: every eigenvalue `mu != 0` of `G` maps to a
/// finite eigenvalue `sigma = beta - 1/mu`; `mu = 0` corresponds to the
/// eigenvalues at infinity. Errors if no shift renders `beta*E - A`
/// comfortably invertible (irregular pencil).
pub fn finite_generalized_eigenvalues(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> Result<Vec<Complex<f64>>> {
    ensure_finite("E", e)?;
    ensure_finite("A", a)?;
    if !e.is_square() || e.shape() != a.shape() {
        return Err(Error::invalid_input("pencil needs equal square matrices"));
    }
    let n = e.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = 1.0 + inf_norm(a) / (1.0 + inf_norm(e));
    let candidates = [1.0, -1.0, 2.0, -2.0, 0.5, 3.0, -3.0, 5.0, 7.0, 11.0];

    let mut best: Option<(f64, f64)> = None;
    for c in candidates {
        let beta = c * scale;
        let m = e * beta - a;
        let svd = m.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let smin = sv.last().copied().unwrap_or(0.0);
        let smax = sv.first().copied().unwrap_or(0.0);
        if smin > default_rank_tol(n, n, smax) {
            if best.is_none_or(|(s, _)| smin > s) {
                best = Some((smin, beta));
            }
            if smin > 1e-3 * smax.max(1.0) {
                break;
            }
        }
    }
    let (_, beta) = best.ok_or_else(|| {
        Error::AnalysisUndefined("pencil appears irregular: no invertible shift found".into())
    })?;
    let lu = (e * beta - a).lu();
    let g = lu
        .solve(e)
        .ok_or_else(|| Error::AnalysisUndefined("shifted pencil solve failed".into()))?;
    let mus = g.complex_eigenvalues();
    let mu_max = mus.iter().map(|m| m.norm()).fold(0.0_f64, f64::max);
    let cutoff = (1e-9 * mu_max).max(1e-12);
    Ok(mus
        .iter()
        .filter(|mu| mu.norm() > cutoff)
        .map(|mu| Complex::new(beta, 0.0) - Complex::new(1.0, 0.0) / mu)
        .collect())
}
