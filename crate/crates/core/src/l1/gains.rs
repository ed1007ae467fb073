//! Desired-system wrapper and the sampled-data adaptation gain set.

use super::L1Error;
use crate::lti::{expm, solve_lyapunov, LtiSystem};
use nalgebra::DMatrix;

/// The desired closed-loop dynamics `M(s) = C_m (sI - A_m)^{-1} B_m`
/// together with the DC-makeup gain `K_g = -(C_m A_m^{-1} B_m)^{-1}`.
#[derive(Debug, Clone)]
pub struct DesiredSystem {
    pub sys: LtiSystem,
    pub k_g: DMatrix<f64>,
}

impl DesiredSystem {
    /// Requires `A_m` Hurwitz and `C_m B_m` nonsingular (relative degree
    /// one); `K_g` then makes the DC gain identity: `M(0) K_g = I`.
    pub fn new(sys: LtiSystem) -> Result<Self, L1Error> {
        if !sys.is_strictly_proper(1e-14) {
            return Err(L1Error::DimensionMismatch("desired system must be strictly proper".into()));
        }
        let max_re = sys.max_eig_real();
        if max_re >= 0.0 {
            return Err(L1Error::NotHurwitz { max_re });
        }
        let cb = &sys.c * &sys.b;
        if cb.clone().try_inverse().is_none() {
            return Err(L1Error::SingularCmBm);
        }
        let m0 = sys
            .dc_gain()
            .ok_or_else(|| L1Error::DimensionMismatch("A_m singular".into()))?;
        let k_g = m0
            .try_inverse()
            .ok_or_else(|| L1Error::DimensionMismatch("M(0) singular; K_g undefined".into()))?;
        Ok(DesiredSystem { sys, k_g })
    }

    /// Diagonal first-order desired system `diag(a_i / (s + a_i))`.
    pub fn first_order_diagonal(poles: &[f64]) -> Result<Self, L1Error> {
        let n = poles.len();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for (i, &p) in poles.iter().enumerate() {
            a[(i, i)] = -p;
            b[(i, i)] = p;
        }
        Self::new(LtiSystem::strictly_proper(a, b, DMatrix::identity(n, n)))
    }

    pub fn order(&self) -> usize {
        self.sys.order()
    }

    pub fn outputs(&self) -> usize {
        self.sys.outputs()
    }
}

/// Split realization of the (improper) inverse `M^{-1}(s)`:
///
/// `M^{-1}(s) = s (C_m B_m)^{-1} + D_rem + C_rem (sI - A_rem)^{-1} B_rem`
///
/// built from the classical inverse-system construction for relative
/// degree one. The dynamic remainder carries the transmission zeros of
/// `M`; when `C_rem = C_g A_g` vanishes (first-order diagonal designs have
/// no finite zeros) the dynamic part is dropped entirely so no spurious
/// marginal modes leak into downstream interconnections.
#[derive(Debug, Clone)]
pub struct InverseDesired {
    /// Coefficient of `s`: `(C_m B_m)^{-1}`.
    pub deriv_gain: DMatrix<f64>,
    /// Proper remainder (static + strictly proper dynamic part).
    pub remainder: LtiSystem,
}

/// Builds the [`InverseDesired`] split and checks minimum phase: every
/// input-output relevant eigenvalue of the zero-dynamics matrix must lie
/// in the open left half plane.
pub fn inverse_desired_split(desired: &DesiredSystem) -> Result<InverseDesired, L1Error> {
    let m = &desired.sys;
    let cb = &m.c * &m.b;
    let cb_inv = cb.try_inverse().ok_or(L1Error::SingularCmBm)?;
    // Inverse system: x' = (A - B (CB)^{-1} C A) x + B (CB)^{-1} y',
    //                 u  = -(CB)^{-1} C A x + (CB)^{-1} y'
    let a_g = &m.a - &m.b * &cb_inv * &m.c * &m.a;
    let b_g = &m.b * &cb_inv;
    let c_g = -&cb_inv * &m.c * &m.a;
    let d_g = cb_inv.clone();
    // M^{-1} = G_inv(s) s = s D_g + C_g B_g + (C_g A_g)(sI - A_g)^{-1} B_g
    let c_rem = &c_g * &a_g;
    let static_part = &c_g * &b_g;
    let remainder = if c_rem.norm() <= 1e-12 * (1.0 + a_g.norm()) * (1.0 + c_g.norm()) {
        LtiSystem::static_gain(static_part)
    } else {
        let dyn_part = LtiSystem::new(a_g.clone(), b_g, c_rem, static_part);
        // Minimum-phase check on the I/O-relevant modes of the remainder.
        for eig in dyn_part.eigenvalues() {
            if eig.re >= 0.0 && dyn_part.is_minimal_mode(eig) {
                return Err(L1Error::NonMinimumPhaseM { re: eig.re });
            }
        }
        dyn_part
    };
    Ok(InverseDesired { deriv_gain: d_g, remainder })
}

impl InverseDesired {
    /// Realization of `M^{-1}(s) G(s)` for strictly proper `G`:
    /// `deriv_gain * (s G) + remainder * G`, all proper. When the
    /// remainder is static both terms share `G`'s state, so they merge
    /// into a single realization instead of stacking.
    pub fn compose_with(&self, g: &LtiSystem) -> Result<LtiSystem, L1Error> {
        let sg = g.times_s()?;
        if self.remainder.order() == 0 {
            // deriv_gain (C A, C B) + remainder_D (C, 0) on shared (A, B).
            let c = &self.deriv_gain * &sg.c + &self.remainder.d * &g.c;
            let d = &self.deriv_gain * &sg.d;
            return Ok(LtiSystem::new(g.a.clone(), g.b.clone(), c, d));
        }
        let first = sg.premultiply(&self.deriv_gain);
        let second = self.remainder.series(g);
        Ok(first.add(&second))
    }
}

/// Adaptation gain set: Lyapunov solution, its symmetric square root, the
/// nullspace completion `D`, the state transform `Lambda`, and the
/// sampled-integral matrix `Phi(Ts)` with the cached state transition.
#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct L1Gains {
    pub ts: f64,
    pub P: DMatrix<f64>,
    pub Q: DMatrix<f64>,
    pub sqrt_P: DMatrix<f64>,
    pub D: DMatrix<f64>,
    pub Lambda: DMatrix<f64>,
    pub Lambda_inv: DMatrix<f64>,
    /// `Phi(Ts) = int_0^Ts exp(Lambda A_m Lambda^{-1} (Ts - tau)) Lambda dtau`.
    pub phi: DMatrix<f64>,
    pub phi_inv: Option<DMatrix<f64>>,
    /// `exp(Lambda A_m Lambda^{-1} Ts)`.
    pub exp_term: DMatrix<f64>,
    /// Output-error embedding `[I_p; 0]` of size `n_m x p`.
    pub embed: DMatrix<f64>,
}

/// Builds the adaptation gain set from the desired system, a symmetric
/// positive-definite `Q`, and the sample period.
pub fn build_gains(desired: &DesiredSystem, q: &DMatrix<f64>, ts: f64) -> Result<L1Gains, L1Error> {
    let m = &desired.sys;
    let n = m.order();
    let p = m.outputs();
    assert!(ts > 0.0, "Ts must be positive");
    if q.nrows() != n || q.ncols() != n {
        return Err(L1Error::DimensionMismatch(format!(
            "Q must be {n}x{n}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if (q - q.transpose()).norm() > 1e-10 * (1.0 + q.norm()) {
        return Err(L1Error::NonSpdQ("Q is not symmetric".into()));
    }
    let max_re = m.max_eig_real();
    if max_re >= 0.0 {
        return Err(L1Error::NotHurwitz { max_re });
    }

    let q_sym = 0.5 * (q + q.transpose());
    let q_eigs = q_sym.clone().symmetric_eigen();
    if q_eigs.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(L1Error::NonSpdQ("Q has a non-positive eigenvalue".into()));
    }

    let p_mat = solve_lyapunov(&m.a, &q_sym)?;
    let p_sym = 0.5 * (&p_mat + p_mat.transpose());

    // Symmetric square root from the eigendecomposition (unique SPD root).
    let eig = p_sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(L1Error::NonSpdQ("Lyapunov solution not positive definite".into()));
    }
    let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    let sqrt_p = &eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose();
    let sqrt_p_inv = sqrt_p
        .clone()
        .try_inverse()
        .ok_or(L1Error::SingularLambda)?;

    // D: orthonormal nullspace rows of (C_m sqrtP^{-1}), (n - p) x n, from
    // the eigenvectors of the Gram matrix with (near-)zero eigenvalues;
    // signs fixed by making the largest-magnitude entry of each row
    // positive.
    let c_sp = &m.c * &sqrt_p_inv;
    let d_rows = n - p;
    let d = if d_rows == 0 {
        DMatrix::zeros(0, n)
    } else {
        let gram = c_sp.transpose() * &c_sp;
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mut d = DMatrix::zeros(d_rows, n);
        for r in 0..d_rows {
            let mut row = eig.eigenvectors.column(order[r]).transpose().into_owned();
            let mut max_idx = 0;
            for j in 1..n {
                if row[j].abs() > row[max_idx].abs() {
                    max_idx = j;
                }
            }
            if row[max_idx] < 0.0 {
                row.neg_mut();
            }
            d.row_mut(r).copy_from(&row);
        }
        d
    };

    let mut lambda = DMatrix::zeros(n, n);
    lambda.view_mut((0, 0), (p, n)).copy_from(&m.c);
    if d_rows > 0 {
        lambda.view_mut((p, 0), (d_rows, n)).copy_from(&(&d * &sqrt_p));
    }
    let lambda_inv = lambda.clone().try_inverse().ok_or(L1Error::SingularLambda)?;

    // One augmented exponential yields both exp(Abar Ts) and Phi(Ts):
    // exp([[Abar, Lambda],[0,0]] Ts) = [[exp(Abar Ts), Phi(Ts)],[0, I]].
    let a_bar = &lambda * &m.a * &lambda_inv;
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&a_bar * ts));
    aug.view_mut((0, n), (n, n)).copy_from(&(&lambda * ts));
    let e_aug = expm(&aug);
    let exp_term = e_aug.view((0, 0), (n, n)).into_owned();
    let phi = e_aug.view((0, n), (n, n)).into_owned();
    let phi_inv = phi.clone().try_inverse();

    let mut embed = DMatrix::zeros(n, p);
    for i in 0..p {
        embed[(i, i)] = 1.0;
    }

    Ok(L1Gains {
        ts,
        P: p_sym,
        Q: q_sym,
        sqrt_P: sqrt_p,
        D: d,
        Lambda: lambda,
        Lambda_inv: lambda_inv,
        phi,
        phi_inv,
        exp_term,
        embed,
    })
}
