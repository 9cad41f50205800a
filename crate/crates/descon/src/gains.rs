//! Certificate verification and protocol-gain computation: the block-matrix
//! inequality, the energy-budget inequality, and the two-step gain formulas.

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{check_detectable, check_stabilizable, ObservableDecomposition};
use crate::descriptor::check_pair;
use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, norm_inf, sym_eigenvalues_presymmetrized, symmetrize, symmetry_residual,
    TOL_DEF, TOL_PSD, TOL_SYM,
};
use crate::topology::SpectralBounds;

/// Which theorem's condition set a certificate claims to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremKind {
    /// Strict conditions; no detectability side conditions.
    Two,
    /// Relaxed semidefinite conditions plus detectability/stabilizability.
    Three,
}

/// A candidate certificate: the two shaping matrices, the input weight, the
/// energy budget, and the eigenvalue bounds it must cover.
///
/// `data_tol` is a scenario-level relative slack applied only to the
/// semidefinite/symmetry boundary checks, to absorb certificates published
/// with few printed digits. Strict-definiteness conditions never use it.
#[derive(Debug, Clone)]
pub struct DesignCertificate {
    pub r_x: DMatrix<f64>,
    pub r_z: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub j_e_star: f64,
    pub bounds: SpectralBounds,
    pub theorem: TheoremKind,
    pub data_tol: f64,
}

impl DesignCertificate {
    pub fn new(
        r_x: DMatrix<f64>,
        r_z: DMatrix<f64>,
        m: DMatrix<f64>,
        j_e_star: f64,
        bounds: SpectralBounds,
        theorem: TheoremKind,
        data_tol: f64,
    ) -> Result<Self> {
        for (name, mat) in [("R_x", &r_x), ("R_z", &r_z), ("M", &m)] {
            ensure_finite(name, mat)?;
            if !mat.is_square() {
                return Err(Error::InvalidCertificate(format!("{name} must be square")));
            }
        }
        if r_x.shape() != r_z.shape() {
            return Err(Error::InvalidCertificate(
                "R_x and R_z must have equal shape".to_string(),
            ));
        }
        if symmetry_residual(&m) > TOL_SYM * (1.0 + norm_inf(&m)) {
            return Err(Error::InvalidCertificate("M must be symmetric".to_string()));
        }
        let spec = sym_eigenvalues_presymmetrized(&symmetrize(&m))?;
        if !(spec.min > TOL_DEF) {
            return Err(Error::InvalidCertificate(
                "M must be positive definite".to_string(),
            ));
        }
        if !(j_e_star > 0.0) || !j_e_star.is_finite() {
            return Err(Error::InvalidCertificate(format!(
                "energy budget must be positive, got {j_e_star}"
            )));
        }
        if !(bounds.lambda_min > 0.0) || bounds.lambda_max < bounds.lambda_min {
            return Err(Error::InvalidCertificate(format!(
                "eigenvalue bounds must satisfy 0 < lambda_min <= lambda_max, got ({}, {})",
                bounds.lambda_min, bounds.lambda_max
            )));
        }
        if !(data_tol >= 0.0) || !data_tol.is_finite() {
            return Err(Error::InvalidCertificate(format!(
                "data_tol must be nonnegative, got {data_tol}"
            )));
        }
        Ok(DesignCertificate {
            r_x,
            r_z,
            m,
            j_e_star,
            bounds,
            theorem,
            data_tol,
        })
    }
}

/// The two protocol gains and the eigenvalue bound baked into `K_z`.
#[derive(Debug, Clone)]
pub struct ProtocolGains {
    pub k_u: DMatrix<f64>,
    pub k_z: DMatrix<f64>,
    pub lambda_min_used: f64,
}

/// `K_u = -B_o^T R_z^{-1} / 2`, `K_z = -R_x^{-T} C_o^T / (2 lambda_min)`.
pub fn compute_gains(dec: &ObservableDecomposition, cert: &DesignCertificate) -> Result<ProtocolGains> {
    let h = dec.h;
    if cert.r_x.nrows() != h {
        return Err(Error::InvalidCertificate(format!(
            "R_x must be {h}x{h}, got {}x{}",
            cert.r_x.nrows(),
            cert.r_x.ncols()
        )));
    }
    let rz_inv = cert
        .r_z
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidCertificate("R_z is singular".to_string()))?;
    let rx_inv_t = cert
        .r_x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidCertificate("R_x is singular".to_string()))?
        .transpose();
    let lambda_min = cert.bounds.lambda_min;
    let k_u = dec.b_o.transpose() * rz_inv * (-0.5);
    let k_z = rx_inv_t * dec.c_o.transpose() * (-0.5 / lambda_min);
    Ok(ProtocolGains {
        k_u,
        k_z,
        lambda_min_used: lambda_min,
    })
}

/// The symmetric block matrix whose negative definiteness certifies the
/// protocol at a given Laplacian eigenvalue.
#[derive(Debug, Clone)]
pub struct ThetaBlock {
    pub theta: DMatrix<f64>,
    pub lambda: f64,
}

/// Assemble the `(2h+k) x (2h+k)` block matrix
/// `[[A_o R_z + R_z^T A_o^T - B_o B_o^T, -lambda/2 R_x^{-T} C_o^T C_o, B_o M / 2],
///   [*, R_x^T A_o + A_o^T R_x - C_o^T C_o, 0],
///   [*, *, -M]]`, symmetrized.
pub fn assemble_theta(
    dec: &ObservableDecomposition,
    cert: &DesignCertificate,
    lambda: f64,
) -> Result<ThetaBlock> {
    let h = dec.h;
    let k = dec.k();
    if cert.r_x.nrows() != h || cert.r_z.nrows() != h {
        return Err(Error::InvalidCertificate(format!(
            "R matrices must be {h}x{h}"
        )));
    }
    if cert.m.nrows() != k {
        return Err(Error::InvalidCertificate(format!(
            "M must be {k}x{k}, got {}x{}",
            cert.m.nrows(),
            cert.m.ncols()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid_input(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let rx_inv_t = cert
        .r_x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidCertificate("R_x is singular".to_string()))?
        .transpose();

    let a_o = &dec.a_o;
    let b_o = &dec.b_o;
    let c_o = &dec.c_o;
    let ctc = c_o.transpose() * c_o;

    let t11 = a_o * &cert.r_z + cert.r_z.transpose() * a_o.transpose() - b_o * b_o.transpose();
    let t12 = &rx_inv_t * &ctc * (-0.5 * lambda);
    let t13 = b_o * &cert.m * 0.5;
    let t22 = cert.r_x.transpose() * a_o + a_o.transpose() * &cert.r_x - &ctc;
    let t33 = -&cert.m;

    let dim = 2 * h + k;
    let mut theta = DMatrix::<f64>::zeros(dim, dim);
    theta.view_mut((0, 0), (h, h)).copy_from(&t11);
    theta.view_mut((0, h), (h, h)).copy_from(&t12);
    theta.view_mut((h, 0), (h, h)).copy_from(&t12.transpose());
    theta.view_mut((0, 2 * h), (h, k)).copy_from(&t13);
    theta.view_mut((2 * h, 0), (k, h)).copy_from(&t13.transpose());
    theta.view_mut((h, h), (h, h)).copy_from(&t22);
    theta.view_mut((2 * h, 2 * h), (k, k)).copy_from(&t33);
    let theta = symmetrize(&theta);
    Ok(ThetaBlock { theta, lambda })
}

/// One named check with its clearance. `margin > 0` always means pass.
#[derive(Debug, Clone)]
pub struct Condition {
    pub id: String,
    pub pass: bool,
    pub margin: f64,
    pub note: Option<String>,
}

/// All checks of a theorem, in report order.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub conditions: Vec<Condition>,
    pub overall: bool,
}

impl ConditionReport {
    fn from_conditions(conditions: Vec<Condition>) -> Self {
        let overall = conditions.iter().all(|c| c.pass);
        ConditionReport { conditions, overall }
    }

    pub fn get(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }
}

/// Boundary-check tolerance: the larger of the kernel tolerance and the
/// scenario slack, scaled by the matrix magnitude.
fn boundary_gate(base: f64, data_tol: f64, norm: f64) -> f64 {
    base.max(data_tol) * (1.0 + norm)
}

/// `W = W^T >= 0` with scenario slack on both the symmetry residual and the
/// semidefinite boundary.
fn symmetric_psd_condition(id: &str, w: &DMatrix<f64>, data_tol: f64) -> Result<Condition> {
    let norm = norm_inf(w);
    let sym_gate = boundary_gate(TOL_SYM, data_tol, norm);
    let sym_margin = sym_gate - symmetry_residual(w);
    let spec = sym_eigenvalues_presymmetrized(&symmetrize(w))?;
    let psd_gate = boundary_gate(TOL_PSD, data_tol, norm);
    let psd_margin = spec.min + psd_gate;
    Ok(Condition {
        id: id.to_string(),
        pass: sym_margin >= 0.0 && psd_margin >= 0.0,
        margin: sym_margin.min(psd_margin),
        note: Some(format!(
            "min_eig={:.6e} sym_residual={:.3e}",
            spec.min,
            symmetry_residual(w)
        )),
    })
}

/// Strict `W < 0` (after symmetrization); never relaxed by scenario slack.
fn negative_definite_condition(id: &str, w: &DMatrix<f64>) -> Result<Condition> {
    let spec = sym_eigenvalues_presymmetrized(&symmetrize(w))?;
    Ok(Condition {
        id: id.to_string(),
        pass: spec.max < -TOL_DEF,
        margin: -spec.max - TOL_DEF,
        note: Some(format!("max_eig={:.6e}", spec.max)),
    })
}

/// `W <= 0` with scenario slack (the relaxed variants of the stability
/// conditions).
fn negative_semidefinite_condition(id: &str, w: &DMatrix<f64>, data_tol: f64) -> Result<Condition> {
    let norm = norm_inf(w);
    let spec = sym_eigenvalues_presymmetrized(&symmetrize(w))?;
    let gate = boundary_gate(TOL_PSD, data_tol, norm);
    let margin = gate - spec.max;
    Ok(Condition {
        id: id.to_string(),
        pass: margin >= 0.0,
        margin,
        note: Some(format!("max_eig={:.6e}", spec.max)),
    })
}

/// Initial-output disagreement scalar: `sum_m ||y_m - mean(y)||^2`.
pub fn output_disagreement_scalar(y0: &DVector<f64>, l: usize) -> Result<f64> {
    if l == 0 || !y0.len().is_multiple_of(l) {
        return Err(Error::invalid_input(format!(
            "stacked outputs of length {} not divisible by output dimension {l}",
            y0.len()
        )));
    }
    let n_agents = y0.len() / l;
    let mut mean = DVector::<f64>::zeros(l);
    for m in 0..n_agents {
        mean += y0.rows(m * l, l);
    }
    mean /= n_agents as f64;
    let mut s = 0.0;
    for m in 0..n_agents {
        let d = y0.rows(m * l, l) - &mean;
        s += d.norm_squared();
    }
    Ok(s)
}

/// The energy-budget matrix inequality:
/// `s * E_o^T R_x <= J_e_star * C_o^T C_o` with
/// `s = y0^T ((I - 11^T/N) (x) I_l) y0`.
pub fn budget_check(
    dec: &ObservableDecomposition,
    cert: &DesignCertificate,
    y0: &DVector<f64>,
) -> Result<Condition> {
    let s = output_disagreement_scalar(y0, dec.l())?;
    let etr = dec.e_o.transpose() * &cert.r_x;
    let ctc = dec.c_o.transpose() * &dec.c_o;
    let diff = &ctc * cert.j_e_star - &etr * s;
    let spec = sym_eigenvalues_presymmetrized(&symmetrize(&diff))?;
    let gate = boundary_gate(TOL_PSD, cert.data_tol, norm_inf(&diff));
    let margin = spec.min + gate;
    Ok(Condition {
        id: "II.c".to_string(),
        pass: margin >= 0.0,
        margin,
        note: Some(format!("s={s:.6e} min_eig={:.6e}", spec.min)),
    })
}

fn theorem2_conditions(
    dec: &ObservableDecomposition,
    cert: &DesignCertificate,
    y0: &DVector<f64>,
) -> Result<Vec<Condition>> {
    let mut out = Vec::new();

    let pair = check_pair(&dec.e_o, &dec.a_o)?;
    out.push(Condition {
        id: "I".to_string(),
        pass: pair.impulse_free && pair.regular,
        margin: pair.rank_margin,
        note: Some(format!("rank {}/{}", pair.lemma1_rank, pair.lemma1_target)),
    });

    let etr_x = dec.e_o.transpose() * &cert.r_x;
    out.push(symmetric_psd_condition("II.a", &etr_x, cert.data_tol)?);

    let ctc = dec.c_o.transpose() * &dec.c_o;
    let w_b = cert.r_x.transpose() * &dec.a_o + dec.a_o.transpose() * &cert.r_x - &ctc;
    out.push(negative_definite_condition("II.b", &w_b)?);

    out.push(budget_check(dec, cert, y0)?);

    let erz = &dec.e_o * &cert.r_z;
    out.push(symmetric_psd_condition("III.a", &erz, cert.data_tol)?);

    let lo = assemble_theta(dec, cert, cert.bounds.lambda_min)?;
    let hi = assemble_theta(dec, cert, cert.bounds.lambda_max)?;
    let c_lo = negative_definite_condition("III.b", &lo.theta)?;
    let c_hi = negative_definite_condition("III.b", &hi.theta)?;
    out.push(Condition {
        id: "III.b".to_string(),
        pass: c_lo.pass && c_hi.pass,
        margin: c_lo.margin.min(c_hi.margin),
        note: Some(format!(
            "margin@lambda_min({:.6})={:.6e} margin@lambda_max({:.6})={:.6e}",
            cert.bounds.lambda_min, c_lo.margin, cert.bounds.lambda_max, c_hi.margin
        )),
    });

    Ok(out)
}

/// Verify the strict condition set against the supplied initial outputs
/// (stacked `N*l` vector).
pub fn verify_theorem2(
    dec: &ObservableDecomposition,
    cert: &DesignCertificate,
    y0: &DVector<f64>,
) -> Result<ConditionReport> {
    Ok(ConditionReport::from_conditions(theorem2_conditions(
        dec, cert, y0,
    )?))
}

/// Verify the relaxed condition set: the strict checks plus the two
/// semidefinite stability conditions and detectability/stabilizability of
/// the reduced triple.
pub fn verify_theorem3(
    dec: &ObservableDecomposition,
    cert: &DesignCertificate,
    y0: &DVector<f64>,
) -> Result<ConditionReport> {
    let mut conditions = theorem2_conditions(dec, cert, y0)?;

    let w_x = cert.r_x.transpose() * &dec.a_o + dec.a_o.transpose() * &cert.r_x;
    conditions.push(negative_semidefinite_condition("IV.a", &w_x, cert.data_tol)?);

    let w_z = &dec.a_o * &cert.r_z + cert.r_z.transpose() * dec.a_o.transpose();
    conditions.push(negative_semidefinite_condition("IV.b", &w_z, cert.data_tol)?);

    let det = check_detectable(&dec.e_o, &dec.a_o, &dec.c_o)?;
    conditions.push(Condition {
        id: "IV.detectable".to_string(),
        pass: det.ok,
        margin: if det.ok { 1.0 } else { -1.0 },
        note: Some(format!(
            "finite_ok={} impulse_ok={} witnesses={:?}",
            det.finite_ok, det.impulse_ok, det.witnesses
        )),
    });

    let stab = check_stabilizable(&dec.e_o, &dec.a_o, &dec.b_o)?;
    conditions.push(Condition {
        id: "IV.stabilizable".to_string(),
        pass: stab.ok,
        margin: if stab.ok { 1.0 } else { -1.0 },
        note: Some(format!(
            "finite_ok={} impulse_ok={} witnesses={:?}",
            stab.finite_ok, stab.impulse_ok, stab.witnesses
        )),
    });

    Ok(ConditionReport::from_conditions(conditions))
}

/// Largest `lambda` in `[lo, hi]` keeping the block matrix negative
/// definite, by bisection (the feasible set is an interval, since the max
/// eigenvalue is convex in `lambda`). `None` if already infeasible at `lo`.
pub fn feasible_lambda_sup(
    dec: &ObservableDecomposition,
    cert: &DesignCertificate,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>> {
    if !(lo > 0.0) || hi < lo {
        return Err(Error::invalid_input(format!(
            "need 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    let feasible = |lambda: f64| -> Result<bool> {
        let th = assemble_theta(dec, cert, lambda)?;
        Ok(negative_definite_condition("", &th.theta)?.pass)
    };
    if !feasible(lo)? {
        return Ok(None);
    }
    if feasible(hi)? {
        return Ok(Some(hi));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if feasible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(a))
}
