//! Observable decomposition of a descriptor system: given an invertible
//! transformation, split the state into an observable block driving the
//! output and an unobservable remainder, and test detectability and
//! stabilizability of the reduced triple.

use nalgebra::{Complex, DMatrix, DVector};

use crate::descriptor::DescriptorSystem;
use crate::error::{Error, Result};
use crate::numerics::{
    default_rank_tol, ensure_finite, finite_generalized_eigenvalues, norm_inf, numerical_rank,
    numerical_rank_complex,
};

/// Default relative tolerance on the zero-pattern blocks of the transformed
/// matrices.
pub const TOL_BLOCK: f64 = 1e-6;

/// The blocks of `U_o^{-1} E U_o = [[E_o, 0], [E_couple, E_unobs]]` and
/// friends. `h` is the observable dimension; coupling blocks are
/// `(n-h) x h`, unobservable blocks `(n-h) x (n-h)`.
#[derive(Debug, Clone)]
pub struct ObservableDecomposition {
    pub u_o: DMatrix<f64>,
    pub u_o_inv: DMatrix<f64>,
    pub h: usize,
    pub e_o: DMatrix<f64>,
    pub a_o: DMatrix<f64>,
    pub b_o: DMatrix<f64>,
    pub c_o: DMatrix<f64>,
    pub e_couple: DMatrix<f64>,
    pub e_unobs: DMatrix<f64>,
    pub a_couple: DMatrix<f64>,
    pub a_unobs: DMatrix<f64>,
    pub b_unobs: DMatrix<f64>,
    /// Largest relative violation of the required zero pattern, over the
    /// transformed E, A, and C.
    pub block_residual: f64,
}

impl ObservableDecomposition {
    /// State dimension of the original system.
    pub fn n(&self) -> usize {
        self.u_o.nrows()
    }

    /// Input dimension.
    pub fn k(&self) -> usize {
        self.b_o.ncols()
    }

    /// Output dimension.
    pub fn l(&self) -> usize {
        self.c_o.nrows()
    }

    /// Observable part of a full state vector: the top `h` entries of
    /// `U_o^{-1} x`.
    pub fn reduce_state(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::invalid_input(format!(
                "state must have length {}, got {}",
                self.n(),
                x.len()
            )));
        }
        Ok((&self.u_o_inv * x).rows(0, self.h).into_owned())
    }

    /// Reassemble (E, A, B, C) from the structural blocks and conjugate
    /// back. Violation blocks are dropped, so on data that decomposes
    /// exactly this reproduces the inputs to rounding error.
    pub fn reconstruct(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        let h = self.h;
        let k = self.k();
        let l = self.l();
        let mut te = DMatrix::<f64>::zeros(n, n);
        let mut ta = DMatrix::<f64>::zeros(n, n);
        let mut tb = DMatrix::<f64>::zeros(n, k);
        let mut tc = DMatrix::<f64>::zeros(l, n);
        te.view_mut((0, 0), (h, h)).copy_from(&self.e_o);
        ta.view_mut((0, 0), (h, h)).copy_from(&self.a_o);
        tb.view_mut((0, 0), (h, k)).copy_from(&self.b_o);
        tc.view_mut((0, 0), (l, h)).copy_from(&self.c_o);
        if n > h {
            te.view_mut((h, 0), (n - h, h)).copy_from(&self.e_couple);
            te.view_mut((h, h), (n - h, n - h)).copy_from(&self.e_unobs);
            ta.view_mut((h, 0), (n - h, h)).copy_from(&self.a_couple);
            ta.view_mut((h, h), (n - h, n - h)).copy_from(&self.a_unobs);
            tb.view_mut((h, 0), (n - h, k)).copy_from(&self.b_unobs);
        }
        (
            &self.u_o * te * &self.u_o_inv,
            &self.u_o * ta * &self.u_o_inv,
            &self.u_o * tb,
            tc * &self.u_o_inv,
        )
    }
}

/// Relative size of the block that should be zero: max |entry| of the block
/// over `(1e-300 +) ||whole transformed matrix||_inf`.
fn pattern_violation(transformed: &DMatrix<f64>, row0: usize, col0: usize, rows: usize, cols: usize) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let block = transformed.view((row0, col0), (rows, cols));
    let denom = norm_inf(transformed);
    if denom == 0.0 {
        block.amax()
    } else {
        block.amax() / denom
    }
}

/// Apply a supplied observability transformation and extract the blocks.
/// `tol_block` overrides the default relative zero-pattern tolerance; the
/// call fails if any required-zero block violates it.
pub fn decompose(
    sys: &DescriptorSystem,
    u_o: &DMatrix<f64>,
    h: usize,
    tol_block: Option<f64>,
) -> Result<ObservableDecomposition> {
    let n = sys.n();
    if u_o.shape() != (n, n) {
        return Err(Error::invalid_input(format!(
            "U_o must be {n}x{n}, got {}x{}",
            u_o.nrows(),
            u_o.ncols()
        )));
    }
    ensure_finite("U_o", u_o)?;
    if h == 0 || h > n {
        return Err(Error::invalid_input(format!(
            "observable dimension must satisfy 1 <= h <= {n}, got {h}"
        )));
    }
    if numerical_rank(u_o, None)?.rank < n {
        return Err(Error::invalid_input("U_o is singular"));
    }
    let u_o_inv = u_o
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid_input("U_o is singular"))?;

    let te = &u_o_inv * &sys.e * u_o;
    let ta = &u_o_inv * &sys.a * u_o;
    let tb = &u_o_inv * &sys.b;
    let tc = &sys.c * u_o;

    let tol = tol_block.unwrap_or(TOL_BLOCK);
    let viol_e = pattern_violation(&te, 0, h, h, n - h);
    let viol_a = pattern_violation(&ta, 0, h, h, n - h);
    let viol_c = pattern_violation(&tc, 0, h, sys.l(), n - h);
    let block_residual = viol_e.max(viol_a).max(viol_c);
    if block_residual > tol {
        return Err(Error::DecompositionInvalid {
            residual: block_residual,
            tol,
        });
    }

    let k = sys.k();
    let l = sys.l();
    Ok(ObservableDecomposition {
        u_o: u_o.clone(),
        u_o_inv,
        h,
        e_o: te.view((0, 0), (h, h)).into_owned(),
        a_o: ta.view((0, 0), (h, h)).into_owned(),
        b_o: tb.view((0, 0), (h, k)).into_owned(),
        c_o: tc.view((0, 0), (l, h)).into_owned(),
        e_couple: te.view((h, 0), (n - h, h)).into_owned(),
        e_unobs: te.view((h, h), (n - h, n - h)).into_owned(),
        a_couple: ta.view((h, 0), (n - h, h)).into_owned(),
        a_unobs: ta.view((h, h), (n - h, n - h)).into_owned(),
        b_unobs: tb.view((h, 0), (n - h, k)).into_owned(),
        block_residual,
    })
}

/// Outcome of a detectability or stabilizability test. `witnesses` lists the
/// finite eigenvalues (closed right half-plane) at which the rank test
/// failed; `impulse_ok` is the impulsive-mode side condition.
#[derive(Debug, Clone)]
pub struct RegionTestReport {
    pub ok: bool,
    pub finite_ok: bool,
    pub impulse_ok: bool,
    pub tested: Vec<Complex<f64>>,
    pub witnesses: Vec<Complex<f64>>,
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// Stack rows of complex matrices with equal column counts.
fn vstack_c(blocks: &[&DMatrix<Complex<f64>>]) -> DMatrix<Complex<f64>> {
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::<Complex<f64>>::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Detectability of the reduced triple: for every finite generalized
/// eigenvalue `sigma` of `(E_o, A_o)` with `Re(sigma) >= 0`, the stacked
/// matrix `[sigma E_o - A_o; C_o]` must have full column rank `h`; the
/// impulsive modes must all be observable, tested as
/// rank [[E, A], [0, E], [0, C]] = h + rank(E).
pub fn check_detectable(
    e_o: &DMatrix<f64>,
    a_o: &DMatrix<f64>,
    c_o: &DMatrix<f64>,
) -> Result<RegionTestReport> {
    let h = e_o.nrows();
    if !e_o.is_square() || a_o.shape() != (h, h) || c_o.ncols() != h {
        return Err(Error::invalid_input("detectability test: inconsistent shapes"));
    }
    let eigs = finite_generalized_eigenvalues(e_o, a_o)?;
    let ec = complexify(e_o);
    let ac = complexify(a_o);
    let cc = complexify(c_o);
    let l = c_o.nrows();
    // Rank tolerance scaled to the input data, not to the stacked matrix:
    // at an exact eigenvalue with a vanishing output row the stack is pure
    // roundoff, and a tolerance relative to its own largest singular value
    // would never flag it.
    let data_scale = norm_inf(e_o) + norm_inf(a_o) + norm_inf(c_o);
    let mut witnesses = Vec::new();
    let mut tested = Vec::new();
    for sigma in eigs {
        if sigma.re < -1e-9 {
            continue;
        }
        tested.push(sigma);
        let pencil = &ec * sigma - &ac;
        let stacked = vstack_c(&[&pencil, &cc]);
        let tol = default_rank_tol(h + l, h, data_scale * (1.0 + sigma.norm()));
        if numerical_rank_complex(&stacked, Some(tol))? < h {
            witnesses.push(sigma);
        }
    }
    let finite_ok = witnesses.is_empty();

    let rank_e = numerical_rank(e_o, None)?.rank;
    let mut imp = DMatrix::<f64>::zeros(2 * h + l, 2 * h);
    imp.view_mut((0, 0), (h, h)).copy_from(e_o);
    imp.view_mut((0, h), (h, h)).copy_from(a_o);
    imp.view_mut((h, h), (h, h)).copy_from(e_o);
    imp.view_mut((2 * h, h), (l, h)).copy_from(c_o);
    let impulse_ok = numerical_rank(&imp, None)?.rank == h + rank_e;

    Ok(RegionTestReport {
        ok: finite_ok && impulse_ok,
        finite_ok,
        impulse_ok,
        tested,
        witnesses,
    })
}

/// Stabilizability, the dual test: `[sigma E_o - A_o, B_o]` full row rank
/// `h` at every finite eigenvalue in the closed right half-plane, and
/// rank [[E, 0, 0], [A, E, B]] = h + rank(E) for the impulsive modes.
pub fn check_stabilizable(
    e_o: &DMatrix<f64>,
    a_o: &DMatrix<f64>,
    b_o: &DMatrix<f64>,
) -> Result<RegionTestReport> {
    let h = e_o.nrows();
    if !e_o.is_square() || a_o.shape() != (h, h) || b_o.nrows() != h {
        return Err(Error::invalid_input("stabilizability test: inconsistent shapes"));
    }
    let eigs = finite_generalized_eigenvalues(e_o, a_o)?;
    let ec = complexify(e_o);
    let ac = complexify(a_o);
    let bc = complexify(b_o);
    let k = b_o.ncols();
    // Same data-scaled tolerance as the detectability test.
    let data_scale = norm_inf(e_o) + norm_inf(a_o) + norm_inf(b_o);
    let mut witnesses = Vec::new();
    let mut tested = Vec::new();
    for sigma in eigs {
        if sigma.re < -1e-9 {
            continue;
        }
        tested.push(sigma);
        let mut wide = DMatrix::<Complex<f64>>::zeros(h, h + k);
        wide.view_mut((0, 0), (h, h)).copy_from(&(&ec * sigma - &ac));
        wide.view_mut((0, h), (h, k)).copy_from(&bc);
        let tol = default_rank_tol(h, h + k, data_scale * (1.0 + sigma.norm()));
        if numerical_rank_complex(&wide, Some(tol))? < h {
            witnesses.push(sigma);
        }
    }
    let finite_ok = witnesses.is_empty();

    let rank_e = numerical_rank(e_o, None)?.rank;
    let mut imp = DMatrix::<f64>::zeros(2 * h, 2 * h + k);
    imp.view_mut((0, 0), (h, h)).copy_from(e_o);
    imp.view_mut((h, 0), (h, h)).copy_from(a_o);
    imp.view_mut((h, h), (h, h)).copy_from(e_o);
    imp.view_mut((h, 2 * h), (h, k)).copy_from(b_o);
    let impulse_ok = numerical_rank(&imp, None)?.rank == h + rank_e;

    Ok(RegionTestReport {
        ok: finite_ok && impulse_ok,
        finite_ok,
        impulse_ok,
        tested,
        witnesses,
    })
}
