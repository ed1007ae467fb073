//! Runtime verification of the outer-loop stability bounds against a
//! telemetry log: the exponential decay envelope, the ultimate bound
//! after the empirical crossover, and the design inequalities re-checked
//! with the run's observed suprema.

use super::log::RunLog;
use crate::pf::{PfGains, PfParams};
use serde::{Deserialize, Serialize};

/// Tolerance on the error functional when comparing against envelopes.
pub const ENVELOPE_TOL: f64 = 1e-6;

/// Inputs for the log-based check: the controller parameterization plus
/// the path's bending bound (per unit gamma).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheckParams {
    pub pf_gains: PfGains,
    pub pf_params: PfParams,
    pub omega_t_max: f64,
}

/// One design inequality re-checked against the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub pass: bool,
    /// Right-hand side the quantity must stay below.
    pub limit: f64,
    /// The observed (or configured) quantity.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    /// Initial value of the error functional.
    pub v_initial: f64,
    /// Whether the run started inside the domain of attraction.
    pub started_in_domain: bool,
    /// Samples violating the exponential envelope before the crossover.
    pub envelope_violations: u64,
    pub first_violation_t: Option<f64>,
    /// First time the functional dips under the ultimate bound.
    pub t_b_empirical: Option<f64>,
    /// Samples above the ultimate bound after the crossover.
    pub ultimate_violations: u64,
    /// Command-margin inequality with empirical suprema: the attitude
    /// gain budget `c < (w_c_max - w_T_max sup(gdot) - sup|w_DT|)/(2 k)`.
    pub command_margin: ConditionCheck,
    /// Rate-bound inequality on lambda (static).
    pub lambda_bound: ConditionCheck,
    /// Inner-loop budget with the configured delta_omega.
    pub delta_omega_config: ConditionCheck,
    /// Inner-loop budget with the measured sup |(q_c - q, r_c - r)|.
    pub delta_omega_measured: ConditionCheck,
    pub sup_gamma_dot: f64,
    pub sup_omega_dt_norm: f64,
    /// Clean pass: no envelope or ultimate violations and all inequality
    /// checks satisfied (with the measured inner-loop error).
    pub clean: bool,
}

/// Scans a run log for bound compliance.
pub fn bound_monitor(log: &RunLog, params: &BoundCheckParams) -> BoundReport {
    let p = &params.pf_params;
    let g = &params.pf_gains;
    let rows = &log.rows;
    let v_initial = rows.first().map_or(0.0, |r| r.lyapunov);
    let started_in_domain = p.in_domain(v_initial);
    let rate = p.envelope_rate();
    let ultimate = p.ultimate_bound();

    // Empirical crossover: first sample at or below the ultimate bound
    // (only meaningful with a nonzero inner-loop budget).
    let t_b_empirical = if p.delta_omega > 0.0 {
        rows.iter().find(|r| r.lyapunov <= ultimate).map(|r| r.t)
    } else {
        None
    };

    let mut envelope_violations = 0;
    let mut first_violation_t = None;
    let mut ultimate_violations = 0;
    let mut sup_gamma_dot: f64 = 0.0;
    let mut sup_omega_dt: f64 = 0.0;
    let mut sup_tracking_err: f64 = 0.0;
    for r in rows {
        sup_gamma_dot = sup_gamma_dot.max(r.gamma_dot.abs());
        sup_omega_dt = sup_omega_dt.max(r.omega_dt_norm);
        let dq = r.q_c - r.q;
        let dr = r.r_c - r.r;
        sup_tracking_err = sup_tracking_err.max((dq * dq + dr * dr).sqrt());
        let in_exponential_regime = t_b_empirical.is_none_or(|tb| r.t < tb);
        if in_exponential_regime {
            let envelope = v_initial * (-rate * r.t).exp() + ENVELOPE_TOL;
            if r.lyapunov > envelope {
                envelope_violations += 1;
                first_violation_t.get_or_insert(r.t);
            }
        } else if r.lyapunov > ultimate + ENVELOPE_TOL {
            ultimate_violations += 1;
            first_violation_t.get_or_insert(r.t);
        }
    }

    let margin_rhs =
        (p.omega_c_max - params.omega_t_max * sup_gamma_dot - sup_omega_dt) / (2.0 * g.k_rtilde);
    let command_margin = ConditionCheck {
        pass: p.c < margin_rhs.min(std::f64::consts::FRAC_1_SQRT_2),
        limit: margin_rhs.min(std::f64::consts::FRAC_1_SQRT_2),
        value: p.c,
    };
    let lambda_bound = ConditionCheck {
        pass: p.lambda < p.lambda_limit(g),
        limit: p.lambda_limit(g),
        value: p.lambda,
    };
    let delta_budget = p.delta_omega_limit();
    let delta_omega_config = ConditionCheck {
        pass: p.delta_omega < delta_budget,
        limit: delta_budget,
        value: p.delta_omega,
    };
    let delta_omega_measured = ConditionCheck {
        pass: sup_tracking_err < delta_budget,
        limit: delta_budget,
        value: sup_tracking_err,
    };

    let clean = envelope_violations == 0
        && ultimate_violations == 0
        && command_margin.pass
        && lambda_bound.pass
        && delta_omega_config.pass
        && delta_omega_measured.pass;

    BoundReport {
        v_initial,
        started_in_domain,
        envelope_violations,
        first_violation_t,
        t_b_empirical,
        ultimate_violations,
        command_margin,
        lambda_bound,
        delta_omega_config,
        delta_omega_measured,
        sup_gamma_dot,
        sup_omega_dt_norm: sup_omega_dt,
        clean,
    }
}
