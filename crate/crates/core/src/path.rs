//! Bernstein-polynomial geometric paths and the parallel transport frame
//! carried along them.
//!
//! The path `p_d(gamma)` is a degree-N Bernstein polynomial over virtual
//! time `gamma in [0, T_f]`. The transport frame keeps a tangent-aligned
//! triad whose normal pair rotates minimally (no spin about the tangent);
//! its bending coefficients `k1, k2` replace Frenet curvature/torsion.

use crate::se3::{Mat3, RotationMatrix, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Paths whose speed `|p'(gamma)|` dips below this are rejected.
pub const SPEED_FLOOR: f64 = 1e-9;

/// Frame-propagation RK4 substep cap as a fraction of `T_f`.
const SUBSTEP_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("gamma {gamma} outside [0, {t_f}]")]
    GammaOutOfRange { gamma: f64, t_f: f64 },
    #[error("degenerate path: |p'({gamma})| = {speed:.3e} below floor")]
    DegeneratePath { gamma: f64, speed: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

/// Serialized form of a path file: `{degree, final_time, control_points}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSpec {
    pub degree: usize,
    pub final_time: f64,
    pub control_points: Vec<[f64; 3]>,
}

/// Degree-N Bernstein path over `[0, T_f]`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct BernsteinPath {
    control_points: Vec<Vec3>,
    final_time: f64,
}

impl BernsteinPath {
    /// Validates shape invariants and checks `|p'|` on a 1000-point grid.
    pub fn new(control_points: Vec<Vec3>, final_time: f64) -> Result<Self, PathError> {
        if control_points.len() < 2 {
            return Err(PathError::InvalidPath("need at least 2 control points".into()));
        }
        if !(final_time > 0.0) || !final_time.is_finite() {
            return Err(PathError::InvalidPath(format!("final_time {final_time} must be > 0")));
        }
        if control_points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(PathError::InvalidPath("non-finite control point".into()));
        }
        let path = BernsteinPath { control_points, final_time };
        for i in 0..=1000 {
            let gamma = final_time * (i as f64) / 1000.0;
            let speed = path.derivative(gamma, 1)?.norm();
            if speed < SPEED_FLOOR {
                return Err(PathError::DegeneratePath { gamma, speed });
            }
        }
        Ok(path)
    }

    pub fn from_spec(spec: &PathSpec) -> Result<Self, PathError> {
        if spec.control_points.len() != spec.degree + 1 {
            return Err(PathError::InvalidPath(format!(
                "degree {} requires {} control points, got {}",
                spec.degree,
                spec.degree + 1,
                spec.control_points.len()
            )));
        }
        let pts = spec
            .control_points
            .iter()
            .map(|p| Vec3::new(p[0], p[1], p[2]))
            .collect();
        Self::new(pts, spec.final_time)
    }

    pub fn to_spec(&self) -> PathSpec {
        PathSpec {
            degree: self.degree(),
            final_time: self.final_time,
            control_points: self.control_points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn control_points(&self) -> &[Vec3] {
        &self.control_points
    }

    fn check_gamma(&self, gamma: f64) -> Result<(), PathError> {
        // A hair of slack absorbs roundoff from integrator stage points.
        let slack = 1e-9 * self.final_time;
        if gamma < -slack || gamma > self.final_time + slack || !gamma.is_finite() {
            return Err(PathError::GammaOutOfRange { gamma, t_f: self.final_time });
        }
        Ok(())
    }

    /// de Casteljau evaluation of `p_d(gamma)`.
    pub fn eval(&self, gamma: f64) -> Result<Vec3, PathError> {
        self.check_gamma(gamma)?;
        Ok(de_casteljau(&self.control_points, gamma / self.final_time))
    }

    /// Analytic first or second derivative with respect to `gamma`
    /// (hodograph control points, then de Casteljau).
    pub fn derivative(&self, gamma: f64, order: usize) -> Result<Vec3, PathError> {
        assert!(order == 1 || order == 2, "order must be 1 or 2");
        self.check_gamma(gamma)?;
        let n = self.degree();
        let u = gamma / self.final_time;
        if order == 1 {
            let hodo: Vec<Vec3> = (0..n)
                .map(|j| {
                    (self.control_points[j + 1] - self.control_points[j])
                        * (n as f64 / self.final_time)
                })
                .collect();
            Ok(de_casteljau(&hodo, u))
        } else {
            if n < 2 {
                return Ok(Vec3::zeros());
            }
            let scale = (n * (n - 1)) as f64 / (self.final_time * self.final_time);
            let hodo2: Vec<Vec3> = (0..n - 1)
                .map(|j| {
                    (self.control_points[j + 2] - 2.0 * self.control_points[j + 1]
                        + self.control_points[j])
                        * scale
                })
                .collect();
            Ok(de_casteljau(&hodo2, u))
        }
    }

    /// Unit tangent `t1(gamma) = p'(gamma)/|p'(gamma)|`.
    pub fn unit_tangent(&self, gamma: f64) -> Result<Vec3, PathError> {
        let d = self.derivative(gamma, 1)?;
        let speed = d.norm();
        if speed < SPEED_FLOOR {
            return Err(PathError::DegeneratePath { gamma, speed });
        }
        Ok(d / speed)
    }

    /// Derivative of the unit tangent with respect to `gamma`:
    /// `t1' = p''/|p'| - p' (p'.p'')/|p'|^3`.
    pub fn unit_tangent_derivative(&self, gamma: f64) -> Result<Vec3, PathError> {
        let d1 = self.derivative(gamma, 1)?;
        let d2 = self.derivative(gamma, 2)?;
        let speed = d1.norm();
        if speed < SPEED_FLOOR {
            return Err(PathError::DegeneratePath { gamma, speed });
        }
        Ok(d2 / speed - d1 * (d1.dot(&d2) / (speed * speed * speed)))
    }

    /// Initial transport frame at `gamma = 0`: `t1` from the tangent, `t2`
    /// the world-down direction projected orthogonal to `t1` (world-y
    /// fallback for near-vertical tangents), `t3 = t1 x t2`.
    ///
    /// The inertial frame is z-up, so world-down is `-z` and depth is the
    /// negated z-position.
    pub fn initial_frame(&self) -> Result<TransportFrame, PathError> {
        let t1 = self.unit_tangent(0.0)?;
        let down = Vec3::new(0.0, 0.0, -1.0);
        let mut t2 = down - t1 * t1.dot(&down);
        if t2.norm() < 1e-6 {
            let y = Vec3::new(0.0, 1.0, 0.0);
            t2 = y - t1 * t1.dot(&y);
        }
        t2.normalize_mut();
        let t3 = t1.cross(&t2);
        let rotation = RotationMatrix::from_columns(t1, t2, t3)
            .map_err(|e| PathError::InvalidPath(format!("initial frame: {e}")))?;
        let t1p = self.unit_tangent_derivative(0.0)?;
        Ok(TransportFrame {
            gamma: 0.0,
            rotation,
            k1: t2.dot(&t1p),
            k2: t3.dot(&t1p),
        })
    }

    /// Propagates the transport frame to `gamma_next` by integrating
    /// `t2' = -k1 t1`, `t3' = -k2 t1` with RK4 in `gamma` (substep at most
    /// `1e-3 T_f`), recomputing `k1 = t2.t1'`, `k2 = t3.t1'` from the
    /// analytic tangent at every stage, then re-orthonormalizing with `t1`
    /// reset from the analytic tangent. Backward propagation is allowed.
    pub fn propagate_frame(
        &self,
        frame: &TransportFrame,
        gamma_next: f64,
    ) -> Result<TransportFrame, PathError> {
        self.check_gamma(gamma_next)?;
        let span = gamma_next - frame.gamma;
        let max_h = SUBSTEP_FRACTION * self.final_time;
        let n_steps = (span.abs() / max_h).ceil().max(1.0) as usize;
        let h = span / n_steps as f64;

        let mut t2 = frame.rotation.column(1);
        let mut t3 = frame.rotation.column(2);
        let mut gamma = frame.gamma;
        if span != 0.0 {
            for _ in 0..n_steps {
                let deriv = |g: f64, t2: &Vec3, t3: &Vec3| -> Result<(Vec3, Vec3), PathError> {
                    let t1 = self.unit_tangent(g)?;
                    let t1p = self.unit_tangent_derivative(g)?;
                    let k1 = t2.dot(&t1p);
                    let k2 = t3.dot(&t1p);
                    Ok((-k1 * t1, -k2 * t1))
                };
                let (a2, a3) = deriv(gamma, &t2, &t3)?;
                let (b2, b3) =
                    deriv(gamma + 0.5 * h, &(t2 + 0.5 * h * a2), &(t3 + 0.5 * h * a3))?;
                let (c2, c3) =
                    deriv(gamma + 0.5 * h, &(t2 + 0.5 * h * b2), &(t3 + 0.5 * h * b3))?;
                let (d2, d3) = deriv(gamma + h, &(t2 + h * c2), &(t3 + h * c3))?;
                t2 += h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2);
                t3 += h / 6.0 * (a3 + 2.0 * b3 + 2.0 * c3 + d3);
                gamma += h;
            }
        }
        // Snap to the requested gamma and re-orthonormalize around the
        // analytic tangent.
        let gamma = gamma_next.clamp(0.0, self.final_time);
        let t1 = self.unit_tangent(gamma)?;
        let raw = Mat3::from_columns(&[t1, t2, t3]);
        let rotation = RotationMatrix::orthonormalized(&raw)
            .map_err(|e| PathError::InvalidPath(format!("frame degenerated: {e}")))?;
        let t1p = self.unit_tangent_derivative(gamma)?;
        Ok(TransportFrame {
            gamma,
            rotation,
            k1: rotation.column(1).dot(&t1p),
            k2: rotation.column(2).dot(&t1p),
        })
    }

    /// Curvature and torsion at the frame's `gamma`, in the
    /// gamma-parameterization: `kappa = sqrt(k1^2 + k2^2)`,
    /// `tau = -d/dgamma atan2(k2, k1)` with the angle unwrapped. On
    /// straight segments (`k1 = k2 = 0`) torsion is 0 by convention and
    /// `torsion_defined` is false.
    pub fn curvature_torsion(
        &self,
        frame: &TransportFrame,
    ) -> Result<CurvatureTorsion, PathError> {
        let kappa = (frame.k1 * frame.k1 + frame.k2 * frame.k2).sqrt();
        if kappa < 1e-12 {
            return Ok(CurvatureTorsion { kappa, tau: 0.0, torsion_defined: false });
        }
        // Internal finite difference of the bending angle, one-sided at the
        // ends of the parameter interval.
        let delta = (1e-5 * self.final_time).min(1e-4);
        let lo = (frame.gamma - delta).max(0.0);
        let hi = (frame.gamma + delta).min(self.final_time);
        let f_lo = self.propagate_frame(frame, lo)?;
        let f_hi = self.propagate_frame(frame, hi)?;
        let th_lo = f_lo.k2.atan2(f_lo.k1);
        let th_hi = f_hi.k2.atan2(f_hi.k1);
        let mut dth = th_hi - th_lo;
        // Unwrap across the atan2 branch cut.
        while dth > std::f64::consts::PI {
            dth -= 2.0 * std::f64::consts::PI;
        }
        while dth < -std::f64::consts::PI {
            dth += 2.0 * std::f64::consts::PI;
        }
        Ok(CurvatureTorsion { kappa, tau: -dth / (hi - lo), torsion_defined: true })
    }

    /// Samples speed and bending magnitude on a uniform grid and checks the
    /// path-feasibility limits. At least 1000 samples.
    pub fn validate_bounds(&self, bounds: &PathBounds) -> Result<BoundsReport, PathError> {
        let samples = 1000usize;
        let mut min_speed = f64::INFINITY;
        let mut max_speed = 0.0f64;
        let mut max_omega = 0.0f64;
        for i in 0..=samples {
            let gamma = self.final_time * (i as f64) / (samples as f64);
            let speed = self.derivative(gamma, 1)?.norm();
            min_speed = min_speed.min(speed);
            max_speed = max_speed.max(speed);
            if speed >= SPEED_FLOOR {
                // |t1'(gamma)| = sqrt(k1^2 + k2^2) independent of the frame.
                max_omega = max_omega.max(self.unit_tangent_derivative(gamma)?.norm());
            }
        }
        let pass = min_speed >= bounds.v_t_min
            && max_speed <= bounds.v_t_max
            && max_omega <= bounds.omega_t_max;
        Ok(BoundsReport { min_speed, max_speed, max_omega, pass })
    }
}

/// de Casteljau recursion at normalized parameter `u in [0, 1]`.
fn de_casteljau(points: &[Vec3], u: f64) -> Vec3 {
    let mut work: Vec<Vec3> = points.to_vec();
    let mut m = work.len();
    while m > 1 {
        for j in 0..m - 1 {
            work[j] = work[j] * (1.0 - u) + work[j + 1] * u;
        }
        m -= 1;
    }
    work[0]
}

/// Transport frame at a given `gamma`: columns of `rotation` are
/// `(t1, t2, t3)` resolved in the inertial frame.
#[derive(Debug, Clone, Copy)]
pub struct TransportFrame {
    pub gamma: f64,
    pub rotation: RotationMatrix,
    pub k1: f64,
    pub k2: f64,
}

impl TransportFrame {
    pub fn tangent(&self) -> Vec3 {
        self.rotation.column(0)
    }

    /// Angular velocity of the frame for a given virtual-time rate,
    /// resolved in the frame itself: `[0, -k2 gdot, k1 gdot]`.
    pub fn omega_t(&self, gamma_dot: f64) -> Vec3 {
        Vec3::new(0.0, -self.k2 * gamma_dot, self.k1 * gamma_dot)
    }
}

/// Feasibility limits on path speed and bending (per unit `gamma`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathBounds {
    pub v_t_min: f64,
    pub v_t_max: f64,
    pub omega_t_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundsReport {
    pub min_speed: f64,
    pub max_speed: f64,
    pub max_omega: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CurvatureTorsion {
    pub kappa: f64,
    pub tau: f64,
    pub torsion_defined: bool,
}
