//! Outer-loop geometric path following.
//!
//! The controller moves a virtual target along the path by commanding the
//! virtual-time rate, builds a desired direction that blends the path
//! tangent with a pull toward the path (shaped by the characteristic
//! distance `d`), and commands pitch/yaw rates that align the vehicle's
//! velocity with that direction. The error functional
//! `V = Psi + |p_T|^2 / c1^2` and its domain/decay parameters are exposed
//! for the runtime bound monitors.

use crate::path::{BernsteinPath, PathError, TransportFrame};
use crate::se3::{hat, vee_with_tol, Mat3, RotationMatrix, Se3Error, Vec3};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PfError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Vehicle flow-frame state: position of the CG, flow-frame orientation
/// (x-axis along the velocity), speed, and body rates `[p, q, r]`.
#[derive(Debug, Clone, Copy)]
pub struct FlowState {
    pub position: Vec3,
    pub orientation: RotationMatrix,
    pub speed: f64,
    pub omega: Vec3,
}

impl FlowState {
    /// Velocity direction (first flow-frame axis).
    pub fn w1(&self) -> Vec3 {
        self.orientation.column(0)
    }
}

/// Body-convention flow frame for a given velocity direction: x along
/// the velocity, z toward world-down (projected), y starboard completing
/// the right-handed triad. With this convention the second rate component
/// is pitch (positive nose-up in the z-up world) and the third is yaw.
pub fn body_frame_from_tangent(t1: &Vec3) -> Result<RotationMatrix, Se3Error> {
    let down = Vec3::new(0.0, 0.0, -1.0);
    let mut w3 = down - t1 * t1.dot(&down);
    if w3.norm() < 1e-6 {
        let y = Vec3::new(0.0, 1.0, 0.0);
        w3 = y - t1 * t1.dot(&y);
    }
    w3.normalize_mut();
    let w2 = w3.cross(t1);
    RotationMatrix::from_columns(*t1, w2, w3)
}

/// Path-following gains.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PfGains {
    /// Virtual-time convergence gain (1/s).
    pub k_gamma: f64,
    /// Attitude feedback gain (1/s).
    pub k_rtilde: f64,
    /// Characteristic distance shaping the approach direction (m).
    pub d: f64,
}

impl PfGains {
    pub fn validate(&self) -> Result<(), PfError> {
        if self.k_gamma <= 0.0 || self.k_rtilde <= 0.0 || self.d <= 0.0 {
            return Err(PfError::InvalidParams("gains must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Stability-domain parameters of the error functional.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PfParams {
    pub c: f64,
    pub c1: f64,
    pub lambda: f64,
    pub delta_lambda: f64,
    /// Inner-loop tracking error bound assumed by the design.
    pub delta_omega: f64,
    /// Feasible command magnitude (rad/s).
    pub omega_c_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl PfParams {
    /// Checks everything that does not depend on runtime suprema: the
    /// `c < 1/sqrt(2)` part of the command-margin condition, the rate
    /// bound on `lambda`, and the inner-loop error budget. The dynamic
    /// part of the command-margin condition is re-verified against
    /// empirical suprema by the bound monitor.
    pub fn validate(&self, gains: &PfGains) -> Result<(), PfError> {
        if !(self.c > 0.0 && self.c < std::f64::consts::FRAC_1_SQRT_2) {
            return Err(PfError::InvalidParams(format!(
                "c = {} must lie in (0, 1/sqrt(2))",
                self.c
            )));
        }
        if self.c1 <= 0.0 {
            return Err(PfError::InvalidParams("c1 must be positive".into()));
        }
        if !(0.0 < self.v_min && self.v_min <= self.v_max) {
            return Err(PfError::InvalidParams("need 0 < v_min <= v_max".into()));
        }
        let lambda_max = self.lambda_limit(gains);
        if !(self.lambda > 0.0 && self.lambda < lambda_max) {
            return Err(PfError::InvalidParams(format!(
                "lambda = {} must lie in (0, {lambda_max:.6})",
                self.lambda
            )));
        }
        if !(self.delta_lambda > 0.0 && self.delta_lambda < 1.0) {
            return Err(PfError::InvalidParams("delta_lambda must lie in (0, 1)".into()));
        }
        if self.delta_omega < 0.0 || self.delta_omega >= self.delta_omega_limit() {
            return Err(PfError::InvalidParams(format!(
                "delta_omega = {} must lie in [0, {:.6})",
                self.delta_omega,
                self.delta_omega_limit()
            )));
        }
        if self.omega_c_max <= 0.0 {
            return Err(PfError::InvalidParams("omega_c_max must be positive".into()));
        }
        Ok(())
    }

    /// Upper limit `v_min / (c1^2 sqrt(d^2 + c^2 c1^2))` on `lambda`.
    pub fn lambda_limit(&self, gains: &PfGains) -> f64 {
        self.v_min
            / (self.c1
                * self.c1
                * (gains.d * gains.d + self.c * self.c * self.c1 * self.c1).sqrt())
    }

    /// Upper limit `2 lambda delta_lambda c` on the inner-loop error.
    pub fn delta_omega_limit(&self) -> f64 {
        2.0 * self.lambda * self.delta_lambda * self.c
    }

    /// Exponential decay rate of the error-functional envelope.
    pub fn envelope_rate(&self) -> f64 {
        2.0 * self.lambda * (1.0 - self.delta_lambda)
    }

    /// Ultimate bound `(c/2)(delta_omega/(lambda delta_lambda))`.
    pub fn ultimate_bound(&self) -> f64 {
        0.5 * self.c * self.delta_omega / (self.lambda * self.delta_lambda)
    }

    /// Domain-of-attraction membership: `V <= c^2`.
    pub fn in_domain(&self, v: f64) -> bool {
        v <= self.c * self.c
    }
}

/// Per-step error quantities.
#[derive(Debug, Clone)]
pub struct PfErrorState {
    /// Position error resolved in the target frame `[x_T, y_T, z_T]`.
    pub p_t: Vec3,
    /// Attitude error `(1 - Rtilde_11)/2`, in `[0, 1]`.
    pub psi: f64,
    /// Attitude feedback vector `[Rtilde_13, -Rtilde_12]/2`.
    pub e_r: Vector2<f64>,
    pub r_dt: RotationMatrix,
    pub r_tilde: RotationMatrix,
    /// Angular rate of the desired frame w.r.t. the target frame,
    /// resolved in the desired frame.
    pub omega_dt_d: Vec3,
}

/// Controller output for one step.
#[derive(Debug, Clone)]
pub struct PfCommand {
    pub gamma: f64,
    pub gamma_dot: f64,
    /// Pitch/yaw-rate commands `(q_c, r_c)` after saturation.
    pub omega_c: Vector2<f64>,
    /// Command norm before saturation.
    pub omega_c_raw_norm: f64,
    pub saturated: bool,
    pub err: PfErrorState,
    /// Error functional `V = Psi + |p_T|^2/c1^2`.
    pub lyapunov: f64,
    pub in_domain: bool,
    pub complete: bool,
}

/// Position error resolved in the target frame: `p_T = R_TI^T (p - p_d)`.
pub fn position_error(
    flow: &FlowState,
    frame: &TransportFrame,
    path: &BernsteinPath,
) -> Result<Vec3, PfError> {
    let p_d = path.eval(frame.gamma)?;
    Ok(frame.rotation.transpose().apply(&(flow.position - p_d)))
}

/// Desired-frame orientation w.r.t. the target frame, built from the
/// cross-track error and the characteristic distance. Columns are the
/// desired basis resolved in the target frame; orthonormal by
/// construction since the third column is the cross product.
pub fn desired_frame(p_t: &Vec3, d: f64) -> RotationMatrix {
    let (y, z) = (p_t.y, p_t.z);
    let n1 = (d * d + y * y + z * z).sqrt();
    let n2 = (d * d + y * y).sqrt();
    let b1 = Vec3::new(d, -y, -z) / n1;
    let b2 = Vec3::new(y, d, 0.0) / n2;
    let b3 = b1.cross(&b2);
    RotationMatrix::from_columns(b1, b2, b3).expect("denominators bounded below by d > 0")
}

/// Attitude error from the desired and flow orientations (both resolved
/// in the target frame): `Rtilde = R_DT^T R_WT`, `Psi = (1 - Rtilde_11)/2`,
/// `e_R = [Rtilde_13, -Rtilde_12]/2`.
pub fn attitude_error(
    r_dt: &RotationMatrix,
    r_wt: &RotationMatrix,
) -> (RotationMatrix, f64, Vector2<f64>) {
    let r_tilde = r_dt.transpose().compose(r_wt);
    let m = *r_tilde.matrix();
    let psi = 0.5 * (1.0 - m[(0, 0)]);
    // The selector-matrix trace form reduces to the same expression; keep
    // them consistent to the last bit in debug builds.
    debug_assert!({
        let sel = Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 0.0));
        let trace_form = 0.5 * (sel * (Mat3::identity() - m)).trace();
        (psi - trace_form).abs() <= 1e-12
    });
    let e_r = Vector2::new(0.5 * m[(0, 2)], -0.5 * m[(0, 1)]);
    (r_tilde, psi, e_r)
}

/// Derivative of [`desired_frame`] along the cross-track error rates,
/// column by column through the normalized-vector chain rule.
fn desired_frame_derivative(p_t: &Vec3, p_t_dot: &Vec3, d: f64) -> Mat3 {
    let (y, z) = (p_t.y, p_t.z);
    let (yd, zd) = (p_t_dot.y, p_t_dot.z);
    let n1 = (d * d + y * y + z * z).sqrt();
    let n2 = (d * d + y * y).sqrt();
    let u1 = Vec3::new(d, -y, -z);
    let u2 = Vec3::new(y, d, 0.0);
    let c1 = u1 / n1;
    let c2 = u2 / n2;
    // d/dt (u/|u|) = (I - c c^T) u_dot / |u|.
    let proj1 = Mat3::identity() - c1 * c1.transpose();
    let proj2 = Mat3::identity() - c2 * c2.transpose();
    let u1_dot = Vec3::new(0.0, -yd, -zd);
    let u2_dot = Vec3::new(yd, 0.0, 0.0);
    let c1_dot = proj1 * u1_dot / n1;
    let c2_dot = proj2 * u2_dot / n2;
    let c3_dot = c1_dot.cross(&c2) + c1.cross(&c2_dot);
    Mat3::from_columns(&[c1_dot, c2_dot, c3_dot])
}

/// Angular rate of the desired frame w.r.t. the target frame resolved in
/// the desired frame: `vee(R_DT^T d/dt R_DT)`, with the time derivative
/// taken analytically through the cross-track error rates.
pub fn omega_dt_d(p_t: &Vec3, p_t_dot: &Vec3, d: f64) -> Result<Vec3, PfError> {
    let r = desired_frame(p_t, d);
    let r_dot = desired_frame_derivative(p_t, p_t_dot, d);
    let skew = r.transpose().matrix() * r_dot;
    // Numerical asymmetry beyond 1e-8 signals a differentiation bug.
    Ok(vee_with_tol(&skew, 1e-8)?)
}

/// Position-error dynamics (used for the analytic desired-frame rate):
/// `p_T' = -omega_T x p_T + R_WT [v,0,0] - [|p_d'| gamma_dot, 0, 0]`.
pub fn position_error_rate(
    flow: &FlowState,
    frame: &TransportFrame,
    path: &BernsteinPath,
    p_t: &Vec3,
    gamma_dot: f64,
) -> Result<Vec3, PfError> {
    let omega_t = frame.omega_t(gamma_dot);
    let r_wt = frame.rotation.transpose().compose(&flow.orientation);
    let speed_t = path.derivative(frame.gamma, 1)?.norm();
    Ok(-omega_t.cross(p_t) + r_wt.apply(&Vec3::new(flow.speed, 0.0, 0.0))
        - Vec3::new(speed_t * gamma_dot, 0.0, 0.0))
}

/// Virtual-time rate law:
/// `gamma_dot = [v w1 + k_gamma (p - p_d)]^T t1 / |p_d'|`.
pub fn gamma_dot(
    flow: &FlowState,
    frame: &TransportFrame,
    path: &BernsteinPath,
    gains: &PfGains,
) -> Result<f64, PfError> {
    let p_d = path.eval(frame.gamma)?;
    let t1 = frame.tangent();
    let speed_t = path.derivative(frame.gamma, 1)?.norm();
    if speed_t < crate::path::SPEED_FLOOR {
        return Err(PfError::Path(PathError::DegeneratePath {
            gamma: frame.gamma,
            speed: speed_t,
        }));
    }
    let drive = flow.speed * flow.w1() + gains.k_gamma * (flow.position - p_d);
    Ok(drive.dot(&t1) / speed_t)
}

/// Pitch/yaw-rate command (before saturation):
/// `w_c = Pi_R Rtilde^T (R_TD omega_T + omega_DT^D) - 2 k_Rtilde e_R`.
pub fn omega_command(
    err: &PfErrorState,
    frame: &TransportFrame,
    gamma_dot: f64,
    gains: &PfGains,
) -> Vector2<f64> {
    let omega_t = frame.omega_t(gamma_dot);
    let r_td = err.r_dt.transpose();
    let total_d = r_td.apply(&omega_t) + err.omega_dt_d;
    let in_w = err.r_tilde.transpose().apply(&total_d);
    Vector2::new(in_w.y, in_w.z) - 2.0 * gains.k_rtilde * err.e_r
}

/// Error functional `V = Psi + |p_T|^2 / c1^2`.
pub fn lyapunov_value(psi: f64, p_t: &Vec3, c1: f64) -> f64 {
    psi + p_t.norm_squared() / (c1 * c1)
}

/// The outer-loop controller: owns the virtual-time state and the cached
/// transport frame. Deterministic single-stepper; one instance per run.
pub struct PathFollowingController {
    path: BernsteinPath,
    gains: PfGains,
    params: PfParams,
    frame: TransportFrame,
    complete: bool,
}

impl PathFollowingController {
    pub fn new(path: BernsteinPath, gains: PfGains, params: PfParams) -> Result<Self, PfError> {
        gains.validate()?;
        params.validate(&gains)?;
        let frame = path.initial_frame()?;
        Ok(PathFollowingController { path, gains, params, frame, complete: false })
    }

    pub fn path(&self) -> &BernsteinPath {
        &self.path
    }

    pub fn gains(&self) -> &PfGains {
        &self.gains
    }

    pub fn params(&self) -> &PfParams {
        &self.params
    }

    pub fn gamma(&self) -> f64 {
        self.frame.gamma
    }

    /// Evaluates the full control law at the current virtual time without
    /// advancing it.
    pub fn evaluate(&self, flow: &FlowState) -> Result<PfCommand, PfError> {
        Self::evaluate_at(&self.path, &self.frame, flow, &self.gains, &self.params, self.complete)
    }

    fn evaluate_at(
        path: &BernsteinPath,
        frame: &TransportFrame,
        flow: &FlowState,
        gains: &PfGains,
        params: &PfParams,
        complete: bool,
    ) -> Result<PfCommand, PfError> {
        let gd = gamma_dot(flow, frame, path, gains)?;
        let p_t = position_error(flow, frame, path)?;
        let r_dt = desired_frame(&p_t, gains.d);
        let r_wt = frame.rotation.transpose().compose(&flow.orientation);
        let (r_tilde, psi, e_r) = attitude_error(&r_dt, &r_wt);
        let p_t_dot = position_error_rate(flow, frame, path, &p_t, gd)?;
        let omega_dt = omega_dt_d(&p_t, &p_t_dot, gains.d)?;
        let err = PfErrorState { p_t, psi, e_r, r_dt, r_tilde, omega_dt_d: omega_dt };

        let raw = omega_command(&err, frame, gd, gains);
        let raw_norm = raw.norm();
        // Commands beyond the feasibility bound are scaled back onto it
        // (direction preserving); the event is reported, not thrown.
        let (omega_c, saturated) = if raw_norm > params.omega_c_max {
            (raw * (params.omega_c_max / raw_norm), true)
        } else {
            (raw, false)
        };
        let (omega_c, gd_out) = if complete { (Vector2::zeros(), 0.0) } else { (omega_c, gd) };
        let lyap = lyapunov_value(psi, &err.p_t, params.c1);
        Ok(PfCommand {
            gamma: frame.gamma,
            gamma_dot: gd_out,
            omega_c,
            omega_c_raw_norm: raw_norm,
            saturated,
            err,
            lyapunov: lyap,
            in_domain: params.in_domain(lyap),
            complete,
        })
    }

    /// Evaluates the law and advances the virtual time by `dt` (RK4 on
    /// `gamma` with the vehicle state frozen). Reports completion once
    /// `gamma` reaches the end of the path; after that the command is
    /// zero and `gamma` holds.
    pub fn step(&mut self, flow: &FlowState, dt: f64) -> Result<PfCommand, PfError> {
        let cmd = self.evaluate(flow)?;
        if !self.complete {
            let t_f = self.path.final_time();
            let clamp = |g: f64| g.clamp(0.0, t_f);
            let rate = |frame: &TransportFrame| -> Result<f64, PfError> {
                gamma_dot(flow, frame, &self.path, &self.gains)
            };
            let k1 = cmd.gamma_dot;
            let g0 = self.frame.gamma;
            let f2 = self.path.propagate_frame(&self.frame, clamp(g0 + 0.5 * dt * k1))?;
            let k2 = rate(&f2)?;
            let f3 = self.path.propagate_frame(&self.frame, clamp(g0 + 0.5 * dt * k2))?;
            let k3 = rate(&f3)?;
            let f4 = self.path.propagate_frame(&self.frame, clamp(g0 + dt * k3))?;
            let k4 = rate(&f4)?;
            let g_next = clamp(g0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            self.frame = self.path.propagate_frame(&self.frame, g_next)?;
            if g_next >= t_f {
                self.complete = true;
            }
        }
        Ok(cmd)
    }
}

/// One sample of the ideal-inner-loop kinematic closed loop.
#[derive(Debug, Clone)]
pub struct KinematicSample {
    pub t: f64,
    pub cmd: PfCommand,
    pub position: Vec3,
}

/// Simulates the continuous kinematic closed loop with an ideal inner
/// loop: position and flow orientation integrate the commanded rates
/// directly (`q = q_c`, `r = r_c`, roll suppressed; RK4 with
/// re-orthonormalization). Used by the decay-envelope checks.
pub fn simulate_ideal_kinematics(
    controller: &mut PathFollowingController,
    initial: &FlowState,
    dt: f64,
    duration: f64,
) -> Result<Vec<KinematicSample>, PfError> {
    let mut flow = *initial;
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 * dt;
        let cmd = controller.step(&flow, dt)?;
        out.push(KinematicSample { t, cmd: cmd.clone(), position: flow.position });
        if i == steps {
            break;
        }
        // Rigid-body kinematics under the held command.
        let omega = Vec3::new(0.0, cmd.omega_c.x, cmd.omega_c.y);
        let speed = flow.speed;
        let deriv = |r: &Mat3| -> (Vec3, Mat3) {
            let vel = r * Vec3::new(speed, 0.0, 0.0);
            (vel, r * hat(&omega).into_matrix())
        };
        let r0 = *flow.orientation.matrix();
        let p0 = flow.position;
        let (kp1, kr1) = deriv(&r0);
        let (kp2, kr2) = deriv(&(r0 + 0.5 * dt * kr1));
        let (kp3, kr3) = deriv(&(r0 + 0.5 * dt * kr2));
        let (kp4, kr4) = deriv(&(r0 + dt * kr3));
        let r_next = r0 + dt / 6.0 * (kr1 + 2.0 * kr2 + 2.0 * kr3 + kr4);
        flow.position = p0 + dt / 6.0 * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4);
        flow.orientation = RotationMatrix::orthonormalized(&r_next)
            .map_err(|e| PfError::InvalidParams(format!("orientation degenerated: {e}")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight_path(len: f64) -> BernsteinPath {
        BernsteinPath::new(
            vec![Vec3::new(0.0, 0.0, -50.0), Vec3::new(len, 0.0, -50.0)],
            len,
        )
        .unwrap()
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let angle: f64 = rng.gen_range(-3.0..3.0);
        let k = hat(&axis).into_matrix();
        let m = Mat3::identity() + angle.sin() * k + (1.0 - angle.cos()) * (k * k);
        RotationMatrix::from_matrix(m).unwrap()
    }

    fn default_gains() -> PfGains {
        PfGains { k_gamma: 1.0, k_rtilde: 1.0, d: 5.0 }
    }

    fn compliant_params(gains: &PfGains) -> PfParams {
        let c = 0.5;
        let c1 = 2.0;
        let v_min = 1.0;
        let lambda_max = v_min / (c1 * c1 * (gains.d * gains.d + c * c * c1 * c1).sqrt());
        PfParams {
            c,
            c1,
            lambda: 0.8 * lambda_max,
            delta_lambda: 0.5,
            delta_omega: 0.0,
            omega_c_max: 2.0,
            v_min,
            v_max: 1.0,
        }
    }

    #[test]
    fn position_error_basic_cases() {
        let path = straight_path(100.0);
        let frame = path.initial_frame().unwrap();
        let p_d0 = path.eval(0.0).unwrap();
        let flow = FlowState {
            position: p_d0,
            orientation: frame.rotation,
            speed: 1.0,
            omega: Vec3::zeros(),
        };
        let e = position_error(&flow, &frame, &path).unwrap();
        assert!(e.norm() < 1e-12);
        // Offset expressed in frame axes: t2 = -z_world, t3 = +y_world.
        let flow = FlowState { position: p_d0 + Vec3::new(1.0, 2.0, 3.0), ..flow };
        let e = position_error(&flow, &frame, &path).unwrap();
        assert_relative_eq!(e.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.y, -3.0, epsilon = 1e-12);
        assert_relative_eq!(e.z, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn position_error_matches_explicit_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let path = straight_path(100.0);
        let mut frame = path.initial_frame().unwrap();
        frame.rotation = random_rotation(&mut rng);
        let offset = Vec3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let flow = FlowState {
            position: path.eval(frame.gamma).unwrap() + offset,
            orientation: RotationMatrix::identity(),
            speed: 1.0,
            omega: Vec3::zeros(),
        };
        let got = position_error(&flow, &frame, &path).unwrap();
        let want = frame.rotation.matrix().transpose() * offset;
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn desired_frame_on_path_is_identity() {
        let r = desired_frame(&Vec3::zeros(), 5.0);
        assert!((r.matrix() - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn desired_frame_first_column_analytic_case() {
        // y_T = d, z_T = 0: first column (1/sqrt(2), -1/sqrt(2), 0).
        let d = 3.0;
        let r = desired_frame(&Vec3::new(0.7, d, 0.0), d);
        let c0 = r.column(0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(c0.x, s, epsilon = 1e-15);
        assert_relative_eq!(c0.y, -s, epsilon = 1e-15);
        assert_relative_eq!(c0.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn desired_frame_matches_unit_vector_assembly_on_grid() {
        // Two-route construction: the closed-form matrix against the
        // normalized basis assembly, on a grid spanning +/- 10 d.
        let d = 2.5;
        for i in 0..100 {
            for j in 0..100 {
                let y = -10.0 * d + 20.0 * d * (i as f64) / 99.0;
                let z = -10.0 * d + 20.0 * d * (j as f64) / 99.0;
                let r = desired_frame(&Vec3::new(0.0, y, z), d);
                // Independent route: explicit entries of the matrix.
                let n1 = (d * d + y * y + z * z).sqrt();
                let n2 = (d * d + y * y).sqrt();
                let explicit = Mat3::new(
                    d / n1,
                    y / n2,
                    d * z / (n1 * n2),
                    -y / n1,
                    d / n2,
                    -y * z / (n1 * n2),
                    -z / n1,
                    0.0,
                    n2 / n1,
                );
                assert!(
                    (r.matrix() - explicit).norm() < 1e-12,
                    "y={y} z={z}: {}",
                    (r.matrix() - explicit).norm()
                );
                assert!(r.orthonormality_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn attitude_error_cases() {
        let id = RotationMatrix::identity();
        let (r_tilde, psi, e_r) = attitude_error(&id, &id);
        assert_eq!(psi, 0.0);
        assert_eq!(e_r, Vector2::zeros());
        assert!((r_tilde.matrix() - Mat3::identity()).norm() < 1e-15);

        // Rotation by pi about the first axis: only w1 alignment matters.
        let roll_pi = RotationMatrix::from_matrix(Mat3::new(
            1.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, //
            0.0, 0.0, -1.0,
        ))
        .unwrap();
        let (_, psi, _) = attitude_error(&id, &roll_pi);
        assert_eq!(psi, 0.0);

        // Rotation by pi/2 about the third axis: psi = 1/2.
        let yaw_90 = RotationMatrix::from_matrix(Mat3::new(
            0.0, -1.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0,
        ))
        .unwrap();
        let (r_tilde, psi, e_r) = attitude_error(&id, &yaw_90);
        assert_relative_eq!(psi, 0.5, epsilon = 1e-15);
        let m = r_tilde.matrix();
        assert_relative_eq!(e_r.x, 0.5 * m[(0, 2)], epsilon = 1e-15);
        assert_relative_eq!(e_r.y, -0.5 * m[(0, 1)], epsilon = 1e-15);
    }

    #[test]
    fn psi_in_unit_interval_and_trace_form_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..200 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let (r_tilde, psi, e_r) = attitude_error(&a, &b);
            assert!((0.0..=1.0).contains(&psi));
            let m = r_tilde.matrix();
            let sel = Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 0.0));
            let trace_form = 0.5 * (sel * (Mat3::identity() - m)).trace();
            assert!((psi - trace_form).abs() <= 1e-12);
            // e_R vanishes iff the (0,1) and (0,2) entries do.
            if m[(0, 1)].abs() < 1e-15 && m[(0, 2)].abs() < 1e-15 {
                assert!(e_r.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn omega_dt_d_zero_for_stationary_error() {
        let w = omega_dt_d(&Vec3::new(1.0, 2.0, -0.5), &Vec3::zeros(), 4.0).unwrap();
        assert!(w.norm() < 1e-15);
    }

    #[test]
    fn omega_dt_d_origin_response_matches_central_difference() {
        // At the origin with cross-track rate w, the central-difference
        // oracle gives (0, 0, -w/d): the desired direction swings away
        // from t2, a rotation about the negative third axis.
        let d = 4.0;
        let w = 0.3;
        let analytic = omega_dt_d(&Vec3::zeros(), &Vec3::new(0.0, w, 0.0), d).unwrap();
        let h = 1e-6;
        let r_m = desired_frame(&Vec3::new(0.0, -w * h, 0.0), d);
        let r_p = desired_frame(&Vec3::new(0.0, w * h, 0.0), d);
        let r_0 = desired_frame(&Vec3::zeros(), d);
        let rate = r_0.matrix().transpose() * (r_p.matrix() - r_m.matrix()) / (2.0 * h);
        let oracle = vee_with_tol(&rate, 1e-6).unwrap();
        assert!((analytic - oracle).norm() < 1e-6, "{analytic:?} vs {oracle:?}");
        assert_relative_eq!(analytic.z, -w / d, epsilon = 1e-12);
        assert_relative_eq!(analytic.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(analytic.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn omega_dt_d_matches_finite_difference_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let d = 3.0;
        for _ in 0..50 {
            let p_t = Vec3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let p_t_dot = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let analytic = omega_dt_d(&p_t, &p_t_dot, d).unwrap();
            let h = 1e-6;
            let r_m = desired_frame(&(p_t - h * p_t_dot), d);
            let r_p = desired_frame(&(p_t + h * p_t_dot), d);
            let r_0 = desired_frame(&p_t, d);
            let rate = r_0.matrix().transpose() * (r_p.matrix() - r_m.matrix()) / (2.0 * h);
            let oracle = vee_with_tol(&rate, 1e-4).unwrap();
            assert!(
                (analytic - oracle).norm() < 1e-5 * (1.0 + analytic.norm()),
                "{analytic:?} vs {oracle:?}"
            );
        }
    }

    #[test]
    fn vee_rejects_badly_asymmetric_rate() {
        let junk = Mat3::new(0.0, 1.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(vee_with_tol(&junk, 1e-8).is_err());
    }

    #[test]
    fn gamma_dot_cases() {
        let path = straight_path(100.0);
        let frame = path.initial_frame().unwrap();
        let gains = default_gains();
        let on_path = FlowState {
            position: path.eval(0.0).unwrap(),
            orientation: frame.rotation,
            speed: 2.0,
            omega: Vec3::zeros(),
        };
        // On path, aligned: gamma_dot = v / |p'| = 2 / 1.
        assert_relative_eq!(
            gamma_dot(&on_path, &frame, &path, &gains).unwrap(),
            2.0,
            epsilon = 1e-12
        );

        // Velocity perpendicular to the tangent: gamma_dot = 0. Rotate the
        // flow frame 90 degrees about world z.
        let yaw_90 = RotationMatrix::from_matrix(Mat3::new(
            0.0, -1.0, 0.0, //
            1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0,
        ))
        .unwrap();
        let perp = FlowState { orientation: yaw_90, ..on_path };
        assert_relative_eq!(
            gamma_dot(&perp, &frame, &path, &gains).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        // Behind the target along track: gamma_dot = (v + k_gamma x_T)/|p'|.
        let x_t = -3.0;
        let behind = FlowState {
            position: path.eval(0.0).unwrap() + x_t * frame.tangent(),
            ..on_path
        };
        assert_relative_eq!(
            gamma_dot(&behind, &frame, &path, &gains).unwrap(),
            2.0 + gains.k_gamma * x_t,
            epsilon = 1e-12
        );
    }

    #[test]
    fn omega_command_cases() {
        let path = straight_path(100.0);
        let frame = path.initial_frame().unwrap();
        let gains = default_gains();

        // Straight path, on path, aligned: zero command.
        let aligned = PfErrorState {
            p_t: Vec3::zeros(),
            psi: 0.0,
            e_r: Vector2::zeros(),
            r_dt: RotationMatrix::identity(),
            r_tilde: RotationMatrix::identity(),
            omega_dt_d: Vec3::zeros(),
        };
        let w = omega_command(&aligned, &frame, 1.0, &gains);
        assert!(w.norm() < 1e-15);

        // Pure attitude feedback: w_c = -2 k e_R.
        let e_r = Vector2::new(0.01, -0.02);
        let fb_only = PfErrorState { e_r, ..aligned.clone() };
        let w = omega_command(&fb_only, &frame, 1.0, &gains);
        assert!((w + 2.0 * gains.k_rtilde * e_r).norm() < 1e-15);

        // Curved path, on path, aligned: command equals the feedforward
        // term assembled by an independent matrix evaluation.
        let curved = TransportFrame { k1: 0.02, k2: -0.01, ..frame };
        let gd = 1.7;
        let w = omega_command(&aligned, &curved, gd, &gains);
        let omega_t = Vec3::new(0.0, -curved.k2 * gd, curved.k1 * gd);
        // R_TD = R_DT = I here, Rtilde = I: command is the (q, r) part.
        assert_relative_eq!(w.x, omega_t.y, epsilon = 1e-15);
        assert_relative_eq!(w.y, omega_t.z, epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_value_arithmetic() {
        assert_eq!(lyapunov_value(0.0, &Vec3::zeros(), 10.0), 0.0);
        let p = Vec3::new(3.0, 0.0, 4.0); // |p| = 5
        assert_relative_eq!(lyapunov_value(0.1, &p, 10.0), 0.35, epsilon = 1e-15);
    }

    #[test]
    fn params_validation_rejects_violations() {
        let gains = default_gains();
        let good = compliant_params(&gains);
        assert!(good.validate(&gains).is_ok());

        let bad_c = PfParams { c: 0.8, ..good };
        assert!(bad_c.validate(&gains).is_err());
        let bad_lambda = PfParams { lambda: 1.0, ..good };
        assert!(bad_lambda.validate(&gains).is_err());
        let bad_delta = PfParams { delta_omega: 1.0, ..good };
        assert!(bad_delta.validate(&gains).is_err());
    }

    /// Kinematic closed loop with an ideal inner loop and compliant
    /// parameters: the decay envelope of the error functional holds at
    /// every sample.
    #[test]
    fn ideal_loop_satisfies_decay_envelope() {
        let path = straight_path(400.0);
        let gains = default_gains();
        let params = compliant_params(&gains);
        let mut controller = PathFollowingController::new(path, gains, params).unwrap();

        // Start with V(0) = 0.5 c^2 as pure cross-track error, velocity
        // aligned with the desired direction so Psi(0) = 0.
        let v0 = 0.5 * params.c * params.c;
        let y_off = params.c1 * v0.sqrt();
        let frame0 = controller.path().initial_frame().unwrap();
        let p0 = controller.path().eval(0.0).unwrap() + y_off * frame0.rotation.column(1);
        let r_dt0 = desired_frame(&Vec3::new(0.0, y_off, 0.0), gains.d);
        let orientation0 = frame0.rotation.compose(&r_dt0);
        let flow0 = FlowState {
            position: p0,
            orientation: orientation0,
            speed: 1.0,
            omega: Vec3::zeros(),
        };

        let samples = simulate_ideal_kinematics(&mut controller, &flow0, 0.01, 150.0).unwrap();
        let v_init = samples[0].cmd.lyapunov;
        assert_relative_eq!(v_init, v0, epsilon = 1e-9);
        let rate = params.envelope_rate();
        let mut violations = 0;
        for s in &samples {
            let envelope = (-rate * s.t).exp() * v_init + 1e-6;
            if s.cmd.lyapunov > envelope {
                violations += 1;
            }
        }
        assert_eq!(violations, 0, "envelope violated {violations} times");
        // And the error actually converges.
        assert!(samples.last().unwrap().cmd.lyapunov < 1e-4);
    }

    /// Increasing d decreases the desired-frame rate for the same error
    /// trajectory.
    #[test]
    fn larger_d_softens_desired_frame_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let p_t = Vec3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let p_t_dot = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let small = omega_dt_d(&p_t, &p_t_dot, 2.0).unwrap().norm();
            let large = omega_dt_d(&p_t, &p_t_dot, 20.0).unwrap().norm();
            assert!(large < small || (large == 0.0 && small == 0.0));
        }
    }

    #[test]
    fn controller_reports_completion_and_holds() {
        let path = straight_path(10.0);
        let gains = default_gains();
        let params = compliant_params(&gains);
        let mut controller = PathFollowingController::new(path, gains, params).unwrap();
        let frame0 = controller.path().initial_frame().unwrap();
        let mut flow = FlowState {
            position: controller.path().eval(0.0).unwrap(),
            orientation: frame0.rotation,
            speed: 1.0,
            omega: Vec3::zeros(),
        };
        let dt = 0.05;
        let mut seen_complete = false;
        for _ in 0..400 {
            let cmd = controller.step(&flow, dt).unwrap();
            flow.position += flow.orientation.column(0) * flow.speed * dt;
            if cmd.complete {
                seen_complete = true;
                assert_eq!(cmd.omega_c, Vector2::zeros());
                assert_eq!(cmd.gamma_dot, 0.0);
            }
        }
        assert!(seen_complete, "path end never reached");
        assert_relative_eq!(controller.gamma(), 10.0, epsilon = 1e-9);
    }
}
