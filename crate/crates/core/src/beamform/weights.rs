use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot_h, fix_phase, hermitian_eigen, column, norm, solve_hpd, solve_lower, solve_lower_h, CMat};

/// Relative diagonal loading applied before any inversion of `Φ_NN`.
pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Dominant eigenvector of a speech PSD, unit norm, first nonzero entry real positive.
pub fn steering_vector(phi_ss: &CMat) -> Result<Vec<Complex64>> {
    if !(phi_ss.frobenius() > 0.0) || !phi_ss.is_finite() {
        return Err(Error::DegeneratePsd);
    }
    let (_, vecs) = hermitian_eigen(phi_ss);
    let mut v = column(&vecs, 0);
    fix_phase(&mut v);
    Ok(v)
}

/// `W = Φ_NN⁻¹ v / (vᴴ Φ_NN⁻¹ v)`, with diagonal loading.
pub fn mvdr_weights(phi_nn: &CMat, v: &[Complex64]) -> Result<Vec<Complex64>> {
    mvdr_weights_loaded(phi_nn, v, DIAGONAL_LOADING)
}

pub fn mvdr_weights_loaded(phi_nn: &CMat, v: &[Complex64], loading: f64) -> Result<Vec<Complex64>> {
    let x = solve_hpd(&phi_nn.diagonal_loaded(loading), v)?;
    let denom = dot_h(v, &x);
    if !(denom.norm() > 0.0) || !denom.re.is_finite() {
        return Err(Error::SingularMatrix);
    }
    Ok(x.iter().map(|xi| xi / denom).collect())
}

/// Generalized eigenvector beamformer.
///
/// Solves `Φ_SS W = ξ Φ_NN W` for the largest `ξ` by whitening with the
/// Cholesky factor of the (loaded) `Φ_NN`. Returns the unit-norm weight and
/// its Rayleigh quotient evaluated on the unloaded matrices.
pub fn gev_weights(phi_ss: &CMat, phi_nn: &CMat) -> Result<(Vec<Complex64>, f64)> {
    let m = phi_ss.dim();
    let l = cholesky(&phi_nn.diagonal_loaded(DIAGONAL_LOADING))?;
    // Y = L⁻¹ Φ_SS, then C = L⁻¹ Yᴴ = L⁻¹ Φ_SS L⁻ᴴ.
    let y_cols: Vec<Vec<Complex64>> = (0..m).map(|j| solve_lower(&l, &column(phi_ss, j))).collect();
    let y = CMat::from_fn(m, |i, j| y_cols[j][i]);
    let yh = y.conj_transpose();
    let c_cols: Vec<Vec<Complex64>> = (0..m).map(|j| solve_lower(&l, &column(&yh, j))).collect();
    let c = CMat::from_fn(m, |i, j| (c_cols[j][i] + c_cols[i][j].conj()) * 0.5);
    let (_, vecs) = hermitian_eigen(&c);
    let mut w = solve_lower_h(&l, &column(&vecs, 0));
    let n = norm(&w);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::SingularMatrix);
    }
    w.iter_mut().for_each(|x| *x /= n);
    fix_phase(&mut w);
    let xi = rayleigh_quotient(phi_ss, phi_nn, &w);
    Ok((w, xi))
}

/// `ξ = (Wᴴ Φ_SS W) / (Wᴴ Φ_NN W)`
pub fn rayleigh_quotient(phi_ss: &CMat, phi_nn: &CMat, w: &[Complex64]) -> f64 {
    phi_ss.quad_form(w) / phi_nn.quad_form(w)
}
