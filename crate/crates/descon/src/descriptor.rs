//! Singular state-space systems `E x' = A x + B u`, `y = C x`, and the pair
//! tests that decide regularity, impulse freeness, and admissibility.

use nalgebra::DMatrix;

use crate::decomposition::ObservableDecomposition;
use crate::error::{Error, Result};
use crate::gains::ProtocolGains;
use crate::numerics::{
    self, ensure_finite, is_negative_definite, is_positive_semidefinite, norm_inf,
    numerical_rank, pencil_determinant_degree, symmetry_residual, symmetrize,
};

/// A descriptor agent model. `E` may be singular.
#[derive(Debug, Clone)]
pub struct DescriptorSystem {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl DescriptorSystem {
    pub fn new(e: DMatrix<f64>, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = e.nrows();
        if !e.is_square() {
            return Err(Error::invalid_input("E must be square"));
        }
        if a.shape() != (n, n) {
            return Err(Error::invalid_input(format!(
                "A must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::invalid_input(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::invalid_input(format!(
                "C must have {n} columns, got {}",
                c.ncols()
            )));
        }
        for (name, m) in [("E", &e), ("A", &a), ("B", &b), ("C", &c)] {
            ensure_finite(name, m)?;
        }
        Ok(DescriptorSystem { e, a, b, c })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    /// Input dimension.
    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn l(&self) -> usize {
        self.c.nrows()
    }
}

/// Verdict of the block-rank pair test.
#[derive(Debug, Clone)]
pub struct PairReport {
    pub regular: bool,
    pub impulse_free: bool,
    /// Rank of the 2n x 2n block matrix [[E,0],[A,E]].
    pub lemma1_rank: usize,
    /// n + rank(E).
    pub lemma1_target: usize,
    /// Positive iff the rank identity holds with clearance on both sides of
    /// the singular-value threshold.
    pub rank_margin: f64,
}

/// Stack [[E,0],[A,E]].
fn pair_block(e: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = e.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(e);
    m.view_mut((n, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (n, n)).copy_from(e);
    m
}

/// The pair (E, A) is regular and impulse-free iff
/// rank [[E,0],[A,E]] = n + rank(E). Regularity of an impulse-afflicted pair
/// falls back to the determinant-degree test.
pub fn check_pair(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<PairReport> {
    if !e.is_square() || e.shape() != a.shape() {
        return Err(Error::invalid_input(format!(
            "pair test needs equal square matrices, got {}x{} and {}x{}",
            e.nrows(),
            e.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite("E", e)?;
    ensure_finite("A", a)?;
    let n = e.nrows();
    let rank_e = numerical_rank(e, None)?.rank;
    let block = pair_block(e, a);
    let report = numerical_rank(&block, None)?;
    let target = n + rank_e;
    let impulse_free = report.rank == target;
    let regular = impulse_free || pencil_determinant_degree(e, a)?.regular;
    Ok(PairReport {
        regular,
        impulse_free,
        lemma1_rank: report.rank,
        lemma1_target: target,
        rank_margin: report.margin_for_target(target),
    })
}

/// An admissibility witness: `E^T R` symmetric positive semidefinite and
/// `A^T R + R^T A` negative definite certify the pair regular, impulse-free,
/// and asymptotically stable.
#[derive(Debug, Clone)]
pub struct AdmissibilityCertificate {
    pub r: DMatrix<f64>,
    pub valid: bool,
    /// `||E^T R - R^T E||_inf` against its relative gate.
    pub sym_residual: f64,
    /// Min eigenvalue of sym(E^T R); pass needs >= -TOL_PSD.
    pub sym_part_psd_margin: f64,
    /// -(max eigenvalue) of A^T R + R^T A; pass needs > TOL_DEF.
    pub stability_margin: f64,
}

/// Tests the two-matrix admissibility conditions for `(E, A)` with witness
/// `R`. The symmetry of `E^T R` is gated relatively:
/// `||E^T R - R^T E||_inf <= TOL_SYM * (1 + ||E^T R||_inf)`.
pub fn check_admissibility(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<AdmissibilityCertificate> {
    if !e.is_square() || e.shape() != a.shape() || e.shape() != r.shape() {
        return Err(Error::invalid_input(
            "admissibility test needs three equal square matrices".to_string(),
        ));
    }
    for (name, m) in [("E", e), ("A", a), ("R", r)] {
        ensure_finite(name, m)?;
    }
    let etr = e.transpose() * r;
    let sym_residual = symmetry_residual(&etr);
    let sym_ok = sym_residual <= numerics::TOL_SYM * (1.0 + norm_inf(&etr));
    let psd = is_positive_semidefinite(&symmetrize(&etr))?;
    let stab = is_negative_definite(&symmetrize(&(a.transpose() * r + r.transpose() * a)))?;
    Ok(AdmissibilityCertificate {
        r: r.clone(),
        valid: sym_ok && psd.verdict && stab.verdict,
        sym_residual,
        sym_part_psd_margin: psd.margin,
        stability_margin: stab.margin,
    })
}

/// Pair tests for every matrix pair appearing in the stacked closed loop:
/// `(E_o, A_o)`, `(E_o, A_o + B_o K_u)`, and `(E_o, A_o + lambda K_z C_o)`
/// for each supplied eigenvalue `lambda`. Returned in that order, labeled.
pub fn closed_loop_pair_checks(
    dec: &ObservableDecomposition,
    gains: &ProtocolGains,
    lambdas: &[f64],
) -> Result<Vec<(String, PairReport)>> {
    if lambdas.is_empty() {
        return Err(Error::invalid_input("lambda list must be nonempty"));
    }
    let e_o = &dec.e_o;
    let a_o = &dec.a_o;
    if gains.k_u.shape() != (dec.b_o.ncols(), dec.h) {
        return Err(Error::invalid_input(format!(
            "K_u must be {}x{}, got {}x{}",
            dec.b_o.ncols(),
            dec.h,
            gains.k_u.nrows(),
            gains.k_u.ncols()
        )));
    }
    if gains.k_z.shape() != (dec.h, dec.c_o.nrows()) {
        return Err(Error::invalid_input(format!(
            "K_z must be {}x{}, got {}x{}",
            dec.h,
            dec.c_o.nrows(),
            gains.k_z.nrows(),
            gains.k_z.ncols()
        )));
    }
    let mut out = Vec::with_capacity(2 + lambdas.len());
    out.push(("(E_o, A_o)".to_string(), check_pair(e_o, a_o)?));
    out.push((
        "(E_o, A_o + B_o K_u)".to_string(),
        check_pair(e_o, &(a_o + &dec.b_o * &gains.k_u))?,
    ));
    for &lambda in lambdas {
        out.push((
            format!("(E_o, A_o + {lambda:.6} K_z C_o)"),
            check_pair(e_o, &(a_o + (&gains.k_z * &dec.c_o) * lambda))?,
        ));
    }
    Ok(out)
}
