//! Surrogate reduced-order AUV plant.
//!
//! Stands in for the full CFD-coefficient vehicle model: flow-frame
//! kinematics with roll suppressed, first-order pitch/yaw-rate dynamics
//! whose control effectiveness scales with speed squared, the PI
//! autopilot with x-configured stern-plane mixing and saturation, and a
//! near-surface suction disturbance mapped onto the pitch channel.
//!
//! Conventions: the inertial frame is z-up, depth = -z (positive down).
//! Fin angles are in degrees, rates in rad/s.

use crate::lti::LtiSystem;
use crate::pf::FlowState;
use crate::se3::{hat, Mat3, RotationMatrix, Vec3};
use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

/// Stern-plane deflection limit (deg).
pub const DELTA_MAX: f64 = 30.0;

/// Plant and autopilot parameters. Defaults follow the published autopilot
/// gains and a control authority of ~0.05 rad/s for full deflection at the
/// 5 m/s reference speed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Pitch-rate lag (s).
    pub tau_q: f64,
    /// Yaw-rate lag (s).
    pub tau_r: f64,
    /// Effectiveness at the reference speed ((rad/s)/deg).
    pub b0: f64,
    /// Reference speed for the v^2 effectiveness scaling (m/s).
    pub v_ref: f64,
    /// Autopilot proportional gains (deg per rad/s).
    pub kp_v: f64,
    pub kp_h: f64,
    /// Autopilot integral gains (deg per rad).
    pub ki_v: f64,
    pub ki_h: f64,
    /// Fin deflection limit (deg).
    pub delta_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            tau_q: 4.0,
            tau_r: 4.0,
            b0: 0.05 / 30.0,
            v_ref: 5.0,
            kp_v: 3000.0,
            kp_h: 3000.0,
            ki_v: 50.0,
            ki_h: 50.0,
            delta_max: DELTA_MAX,
        }
    }
}

impl PlantParams {
    /// Pitch-channel effectiveness at speed `v` ((rad/s)/deg).
    pub fn b_q(&self, v: f64) -> f64 {
        self.b0 * (v / self.v_ref).powi(2)
    }

    /// Yaw-channel effectiveness at speed `v` ((rad/s)/deg).
    pub fn b_r(&self, v: f64) -> f64 {
        self.b_q(v)
    }
}

/// Near-surface suction profile and matched rate disturbances.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Disturbance {
    pub suction_enabled: bool,
    /// Force at the reference depth (kN).
    pub suction_f0: f64,
    /// Depth where the force equals `suction_f0` (m).
    pub suction_depth_ref: f64,
    /// Exponential decay scale with depth (m).
    pub suction_depth_scale: f64,
    /// Pitch-rate bias per kN of suction ((rad/s)/kN). Positive pitches
    /// the nose up toward the surface in the body convention.
    pub suction_pitch_gain: f64,
    /// Additive matched step disturbance on (q, r) switching on at
    /// `step_time` (absent = never).
    pub step_time: Option<f64>,
    pub step_q_bias: f64,
    pub step_r_bias: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Disturbance {
            suction_enabled: false,
            suction_f0: 1000.0,
            suction_depth_ref: 15.0,
            suction_depth_scale: 5.0,
            suction_pitch_gain: 2.0e-6,
            step_time: None,
            step_q_bias: 0.0,
            step_r_bias: 0.0,
        }
    }
}

impl Disturbance {
    /// Vertical hull force (kN): calibrated so the force is `suction_f0`
    /// at the reference depth and under 1 kN by 50 m.
    pub fn suction_force(&self, depth: f64) -> f64 {
        if !self.suction_enabled {
            return 0.0;
        }
        self.suction_f0 * (-(depth - self.suction_depth_ref) / self.suction_depth_scale).exp()
    }

    /// Matched rate disturbances `(w_q, w_r)` at time `t` and depth.
    pub fn matched_bias(&self, t: f64, depth: f64) -> (f64, f64) {
        let mut w_q = self.suction_pitch_gain * self.suction_force(depth);
        let mut w_r = 0.0;
        if self.step_time.is_some_and(|t0| t >= t0) {
            w_q += self.step_q_bias;
            w_r += self.step_r_bias;
        }
        (w_q, w_r)
    }
}

/// Vehicle state: flow frame, last applied fin angles, and the autopilot
/// memory (integrators plus previous errors for the trapezoid rule).
#[derive(Debug, Clone, Copy)]
pub struct VehicleState {
    pub flow: FlowState,
    pub fin_angles: [f64; 5],
    pub integrators: Vector2<f64>,
    pub prev_error: Vector2<f64>,
}

impl VehicleState {
    /// At-rest state on the given position/orientation at constant speed.
    pub fn new(position: Vec3, orientation: RotationMatrix, speed: f64) -> Self {
        VehicleState {
            flow: FlowState { position, orientation, speed, omega: Vec3::zeros() },
            fin_angles: [0.0; 5],
            integrators: Vector2::zeros(),
            prev_error: Vector2::zeros(),
        }
    }

    /// Depth below the surface (m, positive down); z-up inertial frame.
    pub fn depth(&self) -> f64 {
        -self.flow.position.z
    }
}

/// X-configured stern-plane mixing with saturation:
/// `d1 = -dv+dh, d2 = -dv-dh, d3 = dv-dh, d4 = dv+dh, d5 = dv`, each
/// clipped to the deflection limit.
pub fn mix_fins(delta_v: f64, delta_h: f64, delta_max: f64) -> [f64; 5] {
    let raw = [
        -delta_v + delta_h,
        -delta_v - delta_h,
        delta_v - delta_h,
        delta_v + delta_h,
        delta_v,
    ];
    raw.map(|d| d.clamp(-delta_max, delta_max))
}

/// Least-squares recovery of `(delta_v, delta_h)` from the five fin
/// angles; exact inverse of [`mix_fins`] when no fin saturates.
pub fn inverse_mix(fins: &[f64; 5]) -> (f64, f64) {
    let dv = (-fins[0] - fins[1] + fins[2] + fins[3] + fins[4]) / 5.0;
    let dh = (fins[0] - fins[1] - fins[2] + fins[3]) / 4.0;
    (dv, dh)
}

/// One PI autopilot update (trapezoidal integration, conditional
/// anti-windup). Inputs are the rate commands and measurements in rad/s;
/// outputs the pre-mixing deflections in degrees plus the updated
/// integrator/error memory.
pub fn autopilot_step(
    cmd: &Vector2<f64>,
    meas: &Vector2<f64>,
    integ: &Vector2<f64>,
    prev_error: &Vector2<f64>,
    dt: f64,
    params: &PlantParams,
) -> (f64, f64, Vector2<f64>, Vector2<f64>) {
    let error = cmd - meas;
    let mut integ_next = integ + 0.5 * dt * (error + prev_error);

    let delta_v_raw = params.kp_v * error.x + params.ki_v * integ_next.x;
    let delta_h_raw = params.kp_h * error.y + params.ki_h * integ_next.y;

    // Anti-windup by conditional integration: freeze a channel's
    // integrator while every fin it drives is saturated and the error
    // pushes deeper. The v-channel drives fin 5 directly; the h-channel
    // drives fins 1-4.
    let fins = mix_fins(delta_v_raw, delta_h_raw, params.delta_max);
    let v_saturated = delta_v_raw.abs() > params.delta_max && fins[4].abs() >= params.delta_max;
    let h_saturated = (0..4).all(|i| fins[i].abs() >= params.delta_max);
    if v_saturated && error.x * delta_v_raw > 0.0 {
        integ_next.x = integ.x;
    }
    if h_saturated && error.y * delta_h_raw > 0.0 {
        integ_next.y = integ.y;
    }

    let delta_v = params.kp_v * error.x + params.ki_v * integ_next.x;
    let delta_h = params.kp_h * error.y + params.ki_h * integ_next.y;
    (delta_v, delta_h, integ_next, error)
}

/// Advances the vehicle one step under held fin angles and the
/// disturbance environment: first-order rate dynamics driven by the
/// effective deflections recovered through the inverse mixing, and rigid
/// kinematics with roll suppressed (RK4, orientation re-orthonormalized).
pub fn plant_step(
    state: &VehicleState,
    fins: &[f64; 5],
    dist: &Disturbance,
    t: f64,
    dt: f64,
    params: &PlantParams,
) -> VehicleState {
    let (dv_eff, dh_eff) = inverse_mix(fins);
    let v = state.flow.speed;
    let b_q = params.b_q(v);
    let b_r = params.b_r(v);

    let r0 = *state.flow.orientation.matrix();
    let p0 = state.flow.position;
    let q0 = state.flow.omega.y;
    let rr0 = state.flow.omega.z;

    let deriv = |tt: f64, p: &Vec3, r: &Mat3, q: f64, rr: f64| -> (Vec3, Mat3, f64, f64) {
        let depth = -p.z;
        let (w_q, w_r) = dist.matched_bias(tt, depth);
        let q_dot = (-q + b_q * dv_eff + w_q) / params.tau_q;
        let r_dot = (-rr + b_r * dh_eff + w_r) / params.tau_r;
        let vel = r * Vec3::new(v, 0.0, 0.0);
        let r_rate = r * hat(&Vec3::new(0.0, q, rr)).into_matrix();
        (vel, r_rate, q_dot, r_dot)
    };

    let (kp1, kr1, kq1, krr1) = deriv(t, &p0, &r0, q0, rr0);
    let (kp2, kr2, kq2, krr2) = deriv(
        t + 0.5 * dt,
        &(p0 + 0.5 * dt * kp1),
        &(r0 + 0.5 * dt * kr1),
        q0 + 0.5 * dt * kq1,
        rr0 + 0.5 * dt * krr1,
    );
    let (kp3, kr3, kq3, krr3) = deriv(
        t + 0.5 * dt,
        &(p0 + 0.5 * dt * kp2),
        &(r0 + 0.5 * dt * kr2),
        q0 + 0.5 * dt * kq2,
        rr0 + 0.5 * dt * krr2,
    );
    let (kp4, kr4, kq4, krr4) = deriv(
        t + dt,
        &(p0 + dt * kp3),
        &(r0 + dt * kr3),
        q0 + dt * kq3,
        rr0 + dt * krr3,
    );

    let position = p0 + dt / 6.0 * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4);
    let r_next = r0 + dt / 6.0 * (kr1 + 2.0 * kr2 + 2.0 * kr3 + kr4);
    let q = q0 + dt / 6.0 * (kq1 + 2.0 * kq2 + 2.0 * kq3 + kq4);
    let rr = rr0 + dt / 6.0 * (krr1 + 2.0 * krr2 + 2.0 * krr3 + krr4);
    let orientation =
        RotationMatrix::orthonormalized(&r_next).expect("rotation degenerated during step");

    VehicleState {
        flow: FlowState {
            position,
            orientation,
            speed: v,
            omega: Vec3::new(0.0, q, rr),
        },
        fin_angles: *fins,
        integrators: state.integrators,
        prev_error: state.prev_error,
    }
}

/// Linearization of the autopilot-wrapped vehicle at speed `v` for the
/// adaptive-control analysis: per channel the states are (rate,
/// integrator), input is the rate command into the PI law, output the
/// rate. The deflection-per-rad/s loop is linear below saturation.
pub fn linearized_autopilot_vehicle(params: &PlantParams, v: f64) -> LtiSystem {
    let channel = |tau: f64, b: f64, kp: f64, ki: f64| -> LtiSystem {
        // q' = (-(1 + b kp) q + b ki I + b kp u)/tau, I' = u - q.
        LtiSystem::strictly_proper(
            DMatrix::from_row_slice(2, 2, &[-(1.0 + b * kp) / tau, b * ki / tau, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[b * kp / tau, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
    };
    let q_ch = channel(params.tau_q, params.b_q(v), params.kp_v, params.ki_v);
    let r_ch = channel(params.tau_r, params.b_r(v), params.kp_h, params.ki_h);
    LtiSystem::block_diag(&[q_ch, r_ch])
}
