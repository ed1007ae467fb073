//! Analysis toolbox: the interconnected transfer functions behind the
//! stability conditions, the L1-norm feasibility search, the continuous
//! reference system, and the sampled closed loop used to measure the
//! performance gap between them.

use super::controller::L1Controller;
use super::gains::{inverse_desired_split, DesiredSystem};
use super::L1Error;
use crate::lti::{l1_norm, LtiSystem};
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Uncertainty growth bound `F_delta` as a function of the state bound
/// (Lipschitz constant of the matched uncertainty over a ball of radius
/// delta). Configuration-friendly form.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FDelta {
    Constant { value: f64 },
    Affine { offset: f64, slope: f64 },
}

impl FDelta {
    pub fn eval(&self, delta: f64) -> f64 {
        match self {
            FDelta::Constant { value } => *value,
            FDelta::Affine { offset, slope } => offset + slope * delta,
        }
    }
}

/// Caller-supplied constants for the feasibility conditions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityBounds {
    /// Bound on the unknown initial state, `|x_0|_inf < rho_0`.
    pub rho_0: f64,
    /// Bound on the command, `|w_c|_inf <= M_omega`.
    pub m_omega: f64,
    /// Uncertainty bias bound `|f(t, 0)|_inf <= L_0`.
    pub l_0: f64,
    /// Lipschitz bound of the uncertainty as a function of delta.
    pub f_delta: FDelta,
    /// Small headroom constant in the Lipschitz composite.
    pub gamma_bar_1: f64,
}

impl Default for StabilityBounds {
    fn default() -> Self {
        StabilityBounds {
            rho_0: 1.0,
            m_omega: 0.05,
            l_0: 0.01,
            f_delta: FDelta::Constant { value: 0.1 },
            gamma_bar_1: 1e-3,
        }
    }
}

/// Outcome of the feasibility check, serializable for regression logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub g_l1_norm: f64,
    pub rho_r: f64,
    pub rho_1: f64,
    pub rho_2: f64,
    pub l_rho_r: f64,
    pub l_0: f64,
    pub f_delta_at_rho: f64,
    pub m_omega: f64,
    pub rho_0: f64,
    pub gamma_bar_1: f64,
    pub cond1_pass: bool,
    pub cond2_pass: bool,
    pub cond3_pass: bool,
    /// Best margin found on the search grid:
    /// `(rho_r - rho_1 - rho_2)/(L_rho_r rho_r + L_0) - |G|_L1`.
    pub cond3_margin: f64,
}

/// Builds the interconnection family and runs the three feasibility
/// conditions. `plant` is the analysis linearization of the wrapped
/// autopilot-vehicle system; `k` is the analysis-only state feedback with
/// `A_p - B_p K` Hurwitz.
pub fn stability_check(
    plant: &LtiSystem,
    k: &DMatrix<f64>,
    desired: &DesiredSystem,
    c_tf: &LtiSystem,
    bounds: &StabilityBounds,
) -> Result<StabilityReport, L1Error> {
    let n_p = plant.order();
    let p = desired.outputs();
    if plant.outputs() != p || plant.inputs() != p {
        return Err(L1Error::DimensionMismatch(format!(
            "plant must be {p}x{p} to match the desired system"
        )));
    }
    if k.nrows() != p || k.ncols() != n_p {
        return Err(L1Error::DimensionMismatch("K must be p x n_p".into()));
    }
    let a_pk = &plant.a - &plant.b * k;
    let shifted = LtiSystem::strictly_proper(a_pk.clone(), plant.b.clone(), plant.c.clone());
    if !shifted.is_hurwitz(0.0) {
        return Err(L1Error::NotHurwitz { max_re: shifted.max_eig_real() });
    }

    // P(s) and the state-output map H0(s).
    let p_sys = shifted.clone();
    let h0 = LtiSystem::strictly_proper(a_pk.clone(), plant.b.clone(), DMatrix::identity(n_p, n_p));

    // W = M^{-1} P via the derivative-split inverse.
    let inv = inverse_desired_split(desired)?;
    let w = inv.compose_with(&p_sys)?;
    let w_minus_i = w.sub(&LtiSystem::identity(p));

    // H1 = (I + (W - I) C)^{-1}.
    let loop_gain = w_minus_i.series(c_tf);
    let h1 = loop_gain.add(&LtiSystem::identity(p)).inverse()?;

    // H2 = H0 - H0 C H1 (W - I).
    let chain = h0.series(&c_tf.series(&h1.series(&w_minus_i)));
    let h2 = h0.sub(&chain);

    // H3 = H1 W, H4 = H1 (W - I). Constructed for completeness; the
    // conditions themselves only need their existence.
    let _h3 = h1.series(&w);
    let _h4 = h1.series(&w_minus_i);

    // H5 = H0 C H1 M^{-1}, realized through the split so the improper part
    // rides on the strictly proper chain T = H0 C H1.
    let t_chain = h0.series(&c_tf.series(&h1));
    let _h5 = t_chain
        .times_s()?
        .postmultiply(&inv.deriv_gain)
        .add(&t_chain.series(&inv.remainder));

    // G = H0 - H5 P = H0 - (H0 C H1) W, using the cheaper equivalent form.
    let g_sys = h0.sub(&t_chain.series(&w));

    // H_in = C_p (sI - A_pk)^{-1} - C_m (sI - A_m)^{-1} C_m^dagger C_p.
    let first = LtiSystem::strictly_proper(a_pk.clone(), DMatrix::identity(n_p, n_p), plant.c.clone());
    let m_sys = &desired.sys;
    let c_m = &m_sys.c;
    let c_dagger = c_m.transpose()
        * (c_m * c_m.transpose())
            .try_inverse()
            .ok_or_else(|| L1Error::DimensionMismatch("C_m not full row rank".into()))?;
    let second = LtiSystem::strictly_proper(m_sys.a.clone(), &c_dagger * &plant.c, c_m.clone());
    let h_in = first.sub(&second);

    // cond1: H1 stable (I/O sense; interconnections may carry duplicated
    // stable modes that PBH filters out).
    let cond1_pass = h1.is_io_stable(1e-9);
    // cond2: C M^{-1} proper. With C_m B_m nonsingular this reduces to C
    // strictly proper.
    let cond2_pass = c_tf.is_strictly_proper(1e-12);

    // rho_1 = | s(sI - A_pk)^{-1} - s H5 H_in |_L1 * rho_0, with the
    // second term assembled as s (H0 C H1)(M^{-1} H_in) to keep the state
    // count down (multiplication by s commutes).
    let s_resolvent = LtiSystem::new(
        a_pk.clone(),
        DMatrix::identity(n_p, n_p),
        a_pk.clone(),
        DMatrix::identity(n_p, n_p),
    );
    let w_in = inv.compose_with(&h_in)?;
    let s_h5_hin = t_chain.series(&w_in).times_s()?;
    let rho1_sys = s_resolvent.sub(&s_h5_hin);
    let rho_1 = l1_norm(&rho1_sys, 1e-9)? * bounds.rho_0;

    // rho_2 = | H2 K_g |_L1 * M_omega.
    let rho_2 = l1_norm(&h2.postmultiply(&desired.k_g), 1e-9)? * bounds.m_omega;

    let g_l1 = l1_norm(&g_sys, 1e-9)?;

    // cond3: search rho_r > rho_0 on a 50-point log grid for the largest
    // margin of |G|_L1 < (rho_r - rho_1 - rho_2)/(L_rho_r rho_r + L_0).
    let k_inf_norm = (0..k.nrows())
        .map(|i| (0..k.ncols()).map(|j| k[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut best_margin = f64::NEG_INFINITY;
    let mut best = (bounds.rho_0, 0.0, 0.0);
    for i in 0..50 {
        let rho_r = bounds.rho_0 * 10f64.powf(6.0 * (i + 1) as f64 / 50.0);
        let f_d = bounds.f_delta.eval(rho_r + bounds.gamma_bar_1);
        let l_rho = (bounds.gamma_bar_1 + rho_r) / rho_r * (f_d + k_inf_norm);
        let rhs = (rho_r - rho_1 - rho_2) / (l_rho * rho_r + bounds.l_0);
        let margin = rhs - g_l1;
        if margin > best_margin {
            best_margin = margin;
            best = (rho_r, l_rho, f_d);
        }
    }
    let (rho_r, l_rho_r, f_delta_at_rho) = best;
    let cond3_pass = best_margin > 0.0 && rho_r - rho_1 - rho_2 > 0.0;

    Ok(StabilityReport {
        g_l1_norm: g_l1,
        rho_r,
        rho_1,
        rho_2,
        l_rho_r,
        l_0: bounds.l_0,
        f_delta_at_rho,
        m_omega: bounds.m_omega,
        rho_0: bounds.rho_0,
        gamma_bar_1: bounds.gamma_bar_1,
        cond1_pass,
        cond2_pass,
        cond3_pass,
        cond3_margin: best_margin,
    })
}

/// Time series from a simulation run: state, input, and output sampled at
/// a fixed step.
#[derive(Debug, Clone)]
pub struct SimTrajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

/// Simulates the non-implementable reference system: the plant driven by
/// `u_ref = K_g w_c - C(s) sigma_ref`, where `sigma_ref` is eliminated
/// algebraically into the realizable loop
/// `u_ref = (I - C)^{-1} [K_g w_c - C M^{-1} (y_ref - init)]`
/// with `init` the desired-system response to the initial output.
///
/// `f` is the true matched uncertainty, used directly (which is what makes
/// this the verification-only reference). RK4 at step `dt` over `[0, t_end]`.
pub fn reference_system_sim(
    plant: &LtiSystem,
    f: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    desired: &DesiredSystem,
    c_tf: &LtiSystem,
    omega_c: &dyn Fn(f64) -> DVector<f64>,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<SimTrajectory, L1Error> {
    let p = desired.outputs();
    let n_p = plant.order();
    if x0.len() != n_p {
        return Err(L1Error::DimensionMismatch("x0 dimension".into()));
    }
    if !c_tf.is_strictly_proper(1e-12) {
        return Err(L1Error::NonProperFilter);
    }
    let inv = inverse_desired_split(desired)?;
    // R1 = C M^{-1} = s C deriv_gain + C remainder (proper by cond2).
    let r1 = c_tf
        .times_s()?
        .postmultiply(&inv.deriv_gain)
        .add(&c_tf.series(&inv.remainder));
    // Z = (I - C)^{-1}: biproper wrap of the filter loop.
    let z = LtiSystem::identity(p).sub(c_tf).inverse()?;

    let m_sys = &desired.sys;
    let c_m = &m_sys.c;
    let c_dagger = c_m.transpose()
        * (c_m * c_m.transpose())
            .try_inverse()
            .ok_or_else(|| L1Error::DimensionMismatch("C_m not full row rank".into()))?;
    let y0 = &plant.c * x0;
    let x_init0 = &c_dagger * &y0;

    let n_r1 = r1.order();
    let n_z = z.order();
    let n_m = m_sys.order();
    let n_total = n_p + n_r1 + n_z + n_m;

    // Packed state: [x_p, x_r1, x_z, x_init].
    let split = |s: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            s.rows(0, n_p).into_owned(),
            s.rows(n_p, n_r1).into_owned(),
            s.rows(n_p + n_r1, n_z).into_owned(),
            s.rows(n_p + n_r1 + n_z, n_m).into_owned(),
        )
    };
    let outputs = |t: f64, s: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let (x_p, x_r1, x_z, x_init) = split(s);
        let y_ref = &plant.c * &x_p;
        let e_y = &y_ref - c_m * &x_init;
        let w = &r1.c * &x_r1 + &r1.d * &e_y;
        let v = &desired.k_g * omega_c(t) - w;
        let u_ref = &z.c * &x_z + &z.d * &v;
        (u_ref, y_ref)
    };
    let deriv = |t: f64, s: &DVector<f64>| -> DVector<f64> {
        let (x_p, x_r1, x_z, x_init) = split(s);
        let y_ref = &plant.c * &x_p;
        let e_y = &y_ref - c_m * &x_init;
        let w = &r1.c * &x_r1 + &r1.d * &e_y;
        let v = &desired.k_g * omega_c(t) - w;
        let u_ref = &z.c * &x_z + &z.d * &v;
        let mut ds = DVector::zeros(n_total);
        ds.rows_mut(0, n_p)
            .copy_from(&(&plant.a * &x_p + &plant.b * (&u_ref + f(t, &x_p))));
        if n_r1 > 0 {
            ds.rows_mut(n_p, n_r1).copy_from(&(&r1.a * &x_r1 + &r1.b * &e_y));
        }
        if n_z > 0 {
            ds.rows_mut(n_p + n_r1, n_z).copy_from(&(&z.a * &x_z + &z.b * &v));
        }
        ds.rows_mut(n_p + n_r1 + n_z, n_m)
            .copy_from(&(&m_sys.a * &x_init));
        ds
    };

    let steps = (t_end / dt).round() as usize;
    let mut s = DVector::zeros(n_total);
    s.rows_mut(0, n_p).copy_from(x0);
    s.rows_mut(n_p + n_r1 + n_z, n_m).copy_from(&x_init0);

    let mut traj = SimTrajectory {
        dt,
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    for i in 0..=steps {
        let t = i as f64 * dt;
        let (u_ref, y_ref) = outputs(t, &s);
        traj.t.push(t);
        traj.x.push(s.rows(0, n_p).into_owned());
        traj.u.push(u_ref);
        traj.y.push(y_ref);
        if i < steps {
            let k1 = deriv(t, &s);
            let k2 = deriv(t + 0.5 * dt, &(&s + 0.5 * dt * &k1));
            let k3 = deriv(t + 0.5 * dt, &(&s + 0.5 * dt * &k2));
            let k4 = deriv(t + dt, &(&s + dt * &k3));
            s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    Ok(traj)
}

/// Simulates the sampled closed loop: the same plant and uncertainty, with
/// the discrete controller ticking every `Ts` (a multiple of `dt`) and its
/// output held between ticks.
pub fn closed_loop_sim(
    plant: &LtiSystem,
    f: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    controller: &mut L1Controller,
    omega_c: &dyn Fn(f64) -> DVector<f64>,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<SimTrajectory, L1Error> {
    let n_p = plant.order();
    if x0.len() != n_p {
        return Err(L1Error::DimensionMismatch("x0 dimension".into()));
    }
    let ts = controller.gains().ts;
    let ratio = ts / dt;
    let ticks_every = ratio.round() as usize;
    if ticks_every == 0 || (ratio - ticks_every as f64).abs() > 1e-6 {
        return Err(L1Error::MismatchedRuns(format!(
            "Ts = {ts} must be an integer multiple of dt = {dt}"
        )));
    }

    let steps = (t_end / dt).round() as usize;
    let mut x = x0.clone();
    let mut u_d = DVector::zeros(plant.inputs());
    let mut traj = SimTrajectory {
        dt,
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    for i in 0..=steps {
        let t = i as f64 * dt;
        if i % ticks_every == 0 {
            let y = &plant.c * &x;
            u_d = controller.step(&y, &omega_c(t));
        }
        traj.t.push(t);
        traj.x.push(x.clone());
        traj.u.push(u_d.clone());
        traj.y.push(&plant.c * &x);
        if i < steps {
            let deriv = |tt: f64, xx: &DVector<f64>| -> DVector<f64> {
                &plant.a * xx + &plant.b * (&u_d + f(tt, xx))
            };
            let k1 = deriv(t, &x);
            let k2 = deriv(t + 0.5 * dt, &(&x + 0.5 * dt * &k1));
            let k3 = deriv(t + 0.5 * dt, &(&x + 0.5 * dt * &k2));
            let k4 = deriv(t + dt, &(&x + dt * &k3));
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    Ok(traj)
}

/// Sup-norm gaps between a sampled closed-loop run and its reference run:
/// `(sup |x_ref - x|_inf, sup |u_ref - u_ad|_inf)`. The runs must share
/// the grid.
pub fn theorem2_gap(
    closed: &SimTrajectory,
    reference: &SimTrajectory,
) -> Result<(f64, f64), L1Error> {
    if closed.t.len() != reference.t.len() || (closed.dt - reference.dt).abs() > 1e-12 {
        return Err(L1Error::MismatchedRuns("sample grids differ".into()));
    }
    if closed.x[0].len() != reference.x[0].len() {
        return Err(L1Error::MismatchedRuns("state dimensions differ".into()));
    }
    let mut gap_x = 0.0f64;
    let mut gap_u = 0.0f64;
    for i in 0..closed.t.len() {
        gap_x = gap_x.max((&reference.x[i] - &closed.x[i]).amax());
        gap_u = gap_u.max((&reference.u[i] - &closed.u[i]).amax());
    }
    Ok((gap_x, gap_u))
}

/// Analysis-only state feedback: leaves a plant whose modes already decay
/// at `min_decay` untouched (`K = 0`); otherwise shifts slow poles onto
/// `-min_decay` per decoupled single-input block via Ackermann placement.
/// Plants that are both slow and not block-decoupled must supply `K`
/// themselves.
pub fn select_stabilizing_k(plant: &LtiSystem, min_decay: f64) -> Result<DMatrix<f64>, L1Error> {
    let n = plant.order();
    let m = plant.inputs();
    let zero = DMatrix::zeros(m, n);
    if plant
        .eigenvalues()
        .iter()
        .all(|l| l.re <= -min_decay + 1e-12)
    {
        return Ok(zero);
    }
    // Connected components of the state-coupling graph.
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = n_comp;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let coupled = plant.a[(i, j)] != 0.0 || plant.a[(j, i)] != 0.0;
                if coupled && comp[j] == usize::MAX {
                    comp[j] = n_comp;
                    stack.push(j);
                }
            }
        }
        n_comp += 1;
    }
    // Each component must be driven by exactly one input column.
    let mut k = DMatrix::zeros(m, n);
    for c in 0..n_comp {
        let states: Vec<usize> = (0..n).filter(|&i| comp[i] == c).collect();
        let inputs: Vec<usize> = (0..m)
            .filter(|&j| states.iter().any(|&i| plant.b[(i, j)] != 0.0))
            .collect();
        if inputs.len() != 1 {
            return Err(L1Error::DimensionMismatch(
                "plant is not single-input block-decoupled; supply K explicitly".into(),
            ));
        }
        let j = inputs[0];
        let nb = states.len();
        let a_blk = DMatrix::from_fn(nb, nb, |r, cc| plant.a[(states[r], states[cc])]);
        let b_blk = DVector::from_fn(nb, |r, _| plant.b[(states[r], j)]);
        let eigs = a_blk.complex_eigenvalues();
        let targets: Vec<Complex<f64>> = eigs
            .iter()
            .map(|l| {
                if l.re > -min_decay {
                    Complex::new(-min_decay, l.im)
                } else {
                    *l
                }
            })
            .collect();
        let k_blk = ackermann(&a_blk, &b_blk, &targets)?;
        for (idx, &s) in states.iter().enumerate() {
            k[(j, s)] = k_blk[idx];
        }
    }
    // Verify the shift landed.
    let a_cl = &plant.a - &plant.b * &k;
    let max_re = a_cl.complex_eigenvalues().iter().map(|l| l.re).fold(f64::MIN, f64::max);
    if max_re > -min_decay + 1e-6 {
        return Err(L1Error::NotHurwitz { max_re });
    }
    Ok(k)
}

/// Ackermann pole placement for a single-input controllable pair.
fn ackermann(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    poles: &[Complex<f64>],
) -> Result<DVector<f64>, L1Error> {
    let n = a.nrows();
    assert_eq!(poles.len(), n);
    // Controllability matrix [b, Ab, ..., A^{n-1} b].
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let ctrb_inv = ctrb
        .try_inverse()
        .ok_or_else(|| L1Error::DimensionMismatch("block not controllable".into()))?;
    // Desired characteristic polynomial coefficients (monic, real).
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for p in poles {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * p;
        }
        coeffs = next;
    }
    // phi(A) = A^n + c_1 A^{n-1} + ... + c_n I by Horner.
    let mut phi = DMatrix::identity(n, n);
    for c in coeffs.iter().skip(1) {
        phi = &phi * a + DMatrix::identity(n, n) * c.re;
    }
    // K = e_n^T Ctrb^{-1} phi(A).
    let e_n = DMatrix::from_fn(1, n, |_, j| if j == n - 1 { 1.0 } else { 0.0 });
    let k_row = e_n * ctrb_inv * phi;
    Ok(DVector::from_fn(n, |i, _| k_row[(0, i)]))
}
