//! Telemetry log, CSV serialization, run metrics, and a small JSON-schema
//! validator for the metrics document.

use super::SimError;
use crate::pf::KinematicSample;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Shipped schema for the metrics JSON document.
pub const METRICS_SCHEMA_JSON: &str = include_str!("../../schemas/metrics.schema.json");

/// One telemetry sample. Field order here is the CSV column order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub gamma: f64,
    pub gamma_dot: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub depth: f64,
    pub pt_x: f64,
    pub pt_y: f64,
    pub pt_z: f64,
    pub psi: f64,
    pub lyapunov: f64,
    pub q_c: f64,
    pub r_c: f64,
    pub omega_c_raw_norm: f64,
    pub omega_dt_norm: f64,
    pub q_m: f64,
    pub r_m: f64,
    pub q: f64,
    pub r: f64,
    pub u_q: f64,
    pub u_r: f64,
    pub sigma_norm: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
    pub suction_kn: f64,
    pub in_omega_pf: bool,
    pub omega_c_saturated: bool,
    pub fin_saturated: bool,
}

impl LogRow {
    pub const COLUMNS: [&'static str; 32] = [
        "t",
        "gamma",
        "gamma_dot",
        "x",
        "y",
        "z",
        "depth",
        "pt_x",
        "pt_y",
        "pt_z",
        "psi",
        "lyapunov",
        "q_c",
        "r_c",
        "omega_c_raw_norm",
        "omega_dt_norm",
        "q_m",
        "r_m",
        "q",
        "r",
        "u_q",
        "u_r",
        "sigma_norm",
        "delta1",
        "delta2",
        "delta3",
        "delta4",
        "delta5",
        "suction_kn",
        "in_omega_pf",
        "omega_c_saturated",
        "fin_saturated",
    ];

    fn fields(&self) -> [f64; 32] {
        [
            self.t,
            self.gamma,
            self.gamma_dot,
            self.x,
            self.y,
            self.z,
            self.depth,
            self.pt_x,
            self.pt_y,
            self.pt_z,
            self.psi,
            self.lyapunov,
            self.q_c,
            self.r_c,
            self.omega_c_raw_norm,
            self.omega_dt_norm,
            self.q_m,
            self.r_m,
            self.q,
            self.r,
            self.u_q,
            self.u_r,
            self.sigma_norm,
            self.delta1,
            self.delta2,
            self.delta3,
            self.delta4,
            self.delta5,
            self.suction_kn,
            if self.in_omega_pf { 1.0 } else { 0.0 },
            if self.omega_c_saturated { 1.0 } else { 0.0 },
            if self.fin_saturated { 1.0 } else { 0.0 },
        ]
    }

    fn from_fields(f: &[f64; 32]) -> LogRow {
        LogRow {
            t: f[0],
            gamma: f[1],
            gamma_dot: f[2],
            x: f[3],
            y: f[4],
            z: f[5],
            depth: f[6],
            pt_x: f[7],
            pt_y: f[8],
            pt_z: f[9],
            psi: f[10],
            lyapunov: f[11],
            q_c: f[12],
            r_c: f[13],
            omega_c_raw_norm: f[14],
            omega_dt_norm: f[15],
            q_m: f[16],
            r_m: f[17],
            q: f[18],
            r: f[19],
            u_q: f[20],
            u_r: f[21],
            sigma_norm: f[22],
            delta1: f[23],
            delta2: f[24],
            delta3: f[25],
            delta4: f[26],
            delta5: f[27],
            suction_kn: f[28],
            in_omega_pf: f[29] != 0.0,
            omega_c_saturated: f[30] != 0.0,
            fin_saturated: f[31] != 0.0,
        }
    }

    pub fn p_t_norm(&self) -> f64 {
        (self.pt_x * self.pt_x + self.pt_y * self.pt_y + self.pt_z * self.pt_z).sqrt()
    }
}

/// Fixed-schema time series sampled uniformly at the integration step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

impl RunLog {
    /// Minimal log assembled from an ideal-kinematics run (`q = q_c`,
    /// `r = r_c`), enough for the bound monitor.
    pub fn from_kinematic(samples: &[KinematicSample]) -> RunLog {
        let rows = samples
            .iter()
            .map(|s| LogRow {
                t: s.t,
                gamma: s.cmd.gamma,
                gamma_dot: s.cmd.gamma_dot,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                depth: -s.position.z,
                pt_x: s.cmd.err.p_t.x,
                pt_y: s.cmd.err.p_t.y,
                pt_z: s.cmd.err.p_t.z,
                psi: s.cmd.err.psi,
                lyapunov: s.cmd.lyapunov,
                q_c: s.cmd.omega_c.x,
                r_c: s.cmd.omega_c.y,
                omega_c_raw_norm: s.cmd.omega_c_raw_norm,
                omega_dt_norm: s.cmd.err.omega_dt_d.norm(),
                q_m: s.cmd.omega_c.x,
                r_m: s.cmd.omega_c.y,
                q: s.cmd.omega_c.x,
                r: s.cmd.omega_c.y,
                u_q: s.cmd.omega_c.x,
                u_r: s.cmd.omega_c.y,
                sigma_norm: 0.0,
                delta1: 0.0,
                delta2: 0.0,
                delta3: 0.0,
                delta4: 0.0,
                delta5: 0.0,
                suction_kn: 0.0,
                in_omega_pf: s.cmd.in_domain,
                omega_c_saturated: s.cmd.saturated,
                fin_saturated: false,
            })
            .collect();
        RunLog { rows }
    }
}

/// Serializes the log as CSV. Floats use the shortest round-trippable
/// representation, so parsing the output reproduces the log exactly and
/// identical runs produce byte-identical files.
pub fn to_csv_string(log: &RunLog) -> String {
    let mut out = String::with_capacity(64 * (log.rows.len() + 1));
    out.push_str(&LogRow::COLUMNS.join(","));
    out.push('\n');
    for row in &log.rows {
        let fields = row.fields();
        for (i, v) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV produced by [`to_csv_string`]; the header must match the
/// schema exactly.
pub fn parse_csv(text: &str) -> Result<RunLog, SimError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SimError::LogParse("empty file".into()))?;
    let expected = LogRow::COLUMNS.join(",");
    if header != expected {
        return Err(SimError::LogParse(format!(
            "header mismatch: got '{header}'"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = [0.0f64; 32];
        let mut count = 0;
        for (i, tok) in line.split(',').enumerate() {
            if i >= 32 {
                return Err(SimError::LogParse(format!("line {}: too many fields", lineno + 2)));
            }
            fields[i] = tok
                .parse()
                .map_err(|e| SimError::LogParse(format!("line {}: {e}", lineno + 2)))?;
            count += 1;
        }
        if count != 32 {
            return Err(SimError::LogParse(format!(
                "line {}: expected 32 fields, got {count}",
                lineno + 2
            )));
        }
        rows.push(LogRow::from_fields(&fields));
    }
    Ok(RunLog { rows })
}

/// Aggregate run metrics, serialized as JSON against the shipped schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub log_schema_version: u32,
    pub scenario: String,
    pub adaptation: bool,
    pub speed: f64,
    pub ts: f64,
    pub dt: f64,
    pub max_overshoot_depth_m: f64,
    pub max_overshoot_lateral_m: f64,
    pub max_q_tracking_error: f64,
    pub max_r_tracking_error: f64,
    pub envelope_violations: u64,
    pub time_to_converge_s: Option<f64>,
    pub t_b_empirical_s: Option<f64>,
    pub final_gamma: f64,
    pub path_complete: bool,
    pub max_omega_c_norm: f64,
    pub max_omega_c_raw_norm: f64,
    pub max_abs_fin_deg: f64,
    pub max_suction_kn: f64,
    pub max_p_t_norm: f64,
    pub final_depth_m: f64,
}

pub fn metrics_to_json(metrics: &Metrics) -> Value {
    serde_json::to_value(metrics).expect("metrics serialize")
}

/// Validates a JSON value against the subset of JSON Schema used by the
/// shipped metrics schema: `type` (string or list), `required`,
/// `properties`, and `items`.
pub fn validate_against_schema(value: &Value, schema: &Value) -> Result<(), String> {
    fn type_matches(value: &Value, ty: &str) -> bool {
        match ty {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            _ => false,
        }
    }
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(s) => type_matches(value, s),
            Value::Array(list) => list
                .iter()
                .filter_map(|t| t.as_str())
                .any(|t| type_matches(value, t)),
            _ => return Err("schema 'type' must be string or array".into()),
        };
        if !ok {
            return Err(format!("value {value} does not match type {ty}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
        let obj = value
            .as_object()
            .ok_or_else(|| "required applies to objects".to_string())?;
        for key in required.iter().filter_map(|k| k.as_str()) {
            if !obj.contains_key(key) {
                return Err(format!("missing required field '{key}'"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        if let Some(obj) = value.as_object() {
            for (key, subschema) in props {
                if let Some(subvalue) = obj.get(key) {
                    validate_against_schema(subvalue, subschema)
                        .map_err(|e| format!("{key}: {e}"))?;
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, item) in arr.iter().enumerate() {
                validate_against_schema(item, items).map_err(|e| format!("[{i}]: {e}"))?;
            }
        }
    }
    Ok(())
}
