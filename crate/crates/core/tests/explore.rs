//! Exploratory scenario probes (ignored by default): print the metrics
//! the acceptance checks depend on, for parameter calibration.

use auv_gnc::path::PathSpec;
use auv_gnc::sim::{preset_config, run, ts_sweep, PathSource};

#[test]
#[ignore]
fn probe_depth_change_ordering() {
    for speed in [2.0, 5.0] {
        for adaptation in [false, true] {
            let mut cfg = preset_config("depth_change").unwrap();
            cfg.speed = speed;
            cfg.adaptation = adaptation;
            let (log, m) = run(&cfg).unwrap();
            let min_depth = log.rows.iter().map(|r| r.depth).fold(f64::INFINITY, f64::min);
            println!(
                "depth_change v={speed} adapt={adaptation}: overshoot={:.5} m, min_depth={:.4}, \
                 max_q_err={:.6}, conv={:?}, complete={}, max_pt={:.3}",
                m.max_overshoot_depth_m,
                min_depth,
                m.max_q_tracking_error,
                m.time_to_converge_s,
                m.path_complete,
                m.max_p_t_norm
            );
        }
    }
}

#[test]
#[ignore]
fn probe_lane_change() {
    for adaptation in [false, true] {
        let mut cfg = preset_config("lane_change").unwrap();
        cfg.adaptation = adaptation;
        let (log, m) = run(&cfg).unwrap();
        let min_depth = log.rows.iter().map(|r| r.depth).fold(f64::INFINITY, f64::min);
        println!(
            "lane_change adapt={adaptation}: depth_overshoot={:.4} m, min_depth={:.3}, \
             lat_overshoot={:.4}, max_suction={:.1} kN, complete={}, final_depth={:.3}",
            m.max_overshoot_depth_m,
            min_depth,
            m.max_overshoot_lateral_m,
            m.max_suction_kn,
            m.path_complete,
            m.final_depth_m
        );
    }
}

#[test]
#[ignore]
fn probe_lane_change_lateral_agreement() {
    let mut on = preset_config("lane_change").unwrap();
    on.adaptation = true;
    let (log_on, _) = run(&on).unwrap();
    let mut off = on.clone();
    off.adaptation = false;
    let (log_off, _) = run(&off).unwrap();
    let n = log_on.rows.len().min(log_off.rows.len());
    let mut sup = 0.0f64;
    for i in 0..n {
        sup = sup.max((log_on.rows[i].y - log_off.rows[i].y).abs());
    }
    println!("lateral sup difference on-vs-off: {sup:.4} m (5% of 35 m = 1.75)");
}

#[test]
#[ignore]
fn probe_ts_sweep() {
    // Straight constant-depth path with a matched step disturbance.
    let mut cfg = preset_config("depth_change").unwrap();
    cfg.name = "ts_sweep_probe".into();
    cfg.path = PathSource::Inline(PathSpec {
        degree: 1,
        final_time: 240.0,
        control_points: vec![[0.0, 0.0, -60.0], [1200.0, 0.0, -60.0]],
    });
    cfg.speed = 5.0;
    cfg.duration = 120.0;
    cfg.dt = 0.001;
    cfg.disturbance.step_time = Some(20.0);
    cfg.disturbance.step_q_bias = 0.01;
    let report = ts_sweep(&cfg, &[0.05, 0.02, 0.01, 0.005]).unwrap();
    for row in &report.rows {
        println!("Ts={:.3}: max|q_m - q| = {:.8}", row.ts, row.max_q_tracking_error);
    }
    println!(
        "monotone={}, reduction = {:.3}",
        report.monotone,
        report.rows.last().unwrap().max_q_tracking_error
            / report.rows.first().unwrap().max_q_tracking_error
    );
}

#[test]
#[ignore]
fn probe_canyon() {
    let cfg = preset_config("canyon").unwrap();
    let (log, m) = run(&cfg).unwrap();
    let t_f = 160.0;
    let peak = log
        .rows
        .iter()
        .filter(|r| r.gamma < t_f - 0.1)
        .max_by(|a, b| a.p_t_norm().partial_cmp(&b.p_t_norm()).unwrap())
        .unwrap();
    let raw_max = log.rows.iter().map(|r| r.omega_c_raw_norm).fold(0.0f64, f64::max);
    // Error at the last pre-completion sample.
    let last_active = log.rows.iter().rev().find(|r| r.gamma < 159.9).unwrap();
    println!(
        "canyon: peak |p_T| = {:.2} m at t={:.1} (gamma={:.1}), raw w_c max = {:.4}, \
         final |p_T|(active) = {:.3}, ratio = {:.3}, complete={}, conv={:?}",
        peak.p_t_norm(),
        peak.t,
        peak.gamma,
        raw_max,
        last_active.p_t_norm(),
        last_active.p_t_norm() / peak.p_t_norm(),
        m.path_complete,
        m.time_to_converge_s,
    );
    // Where saturation happens.
    let sat_spans: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.omega_c_saturated)
        .map(|r| r.t)
        .collect();
    println!(
        "saturated samples: {} (t in [{:?}, {:?}])",
        sat_spans.len(),
        sat_spans.first(),
        sat_spans.last()
    );
}

#[test]
#[ignore]
fn probe_rows() {
    let mut cfg = preset_config("depth_change").unwrap();
    cfg.speed = 2.0;
    cfg.adaptation = true;
    let (log, _) = run(&cfg).unwrap();
    for i in (0..log.rows.len()).step_by(1500) {
        let r = &log.rows[i];
        println!(
            "t={:7.2} gamma={:7.2} q_c={:+.6} q_m={:+.6} q={:+.6} u_q={:+.6} sig={:.4} dv5={:+.2} depth={:8.4} pt=({:+.3},{:+.3},{:+.3})",
            r.t, r.gamma, r.q_c, r.q_m, r.q, r.u_q, r.sigma_norm, r.delta5, r.depth, r.pt_x, r.pt_y, r.pt_z
        );
    }
}

#[test]
#[ignore]
fn probe_v5_adaptive_overshoot() {
    let mut cfg = preset_config("depth_change").unwrap();
    cfg.speed = 5.0;
    cfg.adaptation = true;
    let (log, _) = run(&cfg).unwrap();
    // Find the minimum-depth sample.
    let (imin, _) = log
        .rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.depth.partial_cmp(&b.1.depth).unwrap())
        .unwrap();
    println!("min depth at t = {:.2}, gamma = {:.2}", log.rows[imin].t, log.rows[imin].gamma);
    let lo = imin.saturating_sub(4000);
    for i in (lo..(imin + 2000).min(log.rows.len())).step_by(500) {
        let r = &log.rows[i];
        println!(
            "t={:7.2} q_c={:+.6} q_m={:+.6} q={:+.6} u_q={:+.6} sig={:+.5} d5={:+7.3} depth={:9.5} pty={:+.4}",
            r.t, r.q_c, r.q_m, r.q, r.u_q, r.sigma_norm, r.delta5, r.depth, r.pt_y
        );
    }
}

#[test]
#[ignore]
fn probe_geometry_scan() {
    // Scan path scale: x-spacing s, T_f = 7 s / 2 (|p'| ~ 2).
    for scale in [60.0, 120.0, 180.0, 240.0, 370.0] {
        let t_f = 7.0 * scale / 2.0;
        let spec = PathSpec {
            degree: 7,
            final_time: t_f,
            control_points: (0..8)
                .map(|j| {
                    let z = if j <= 2 { -50.0 } else { -45.0 };
                    [scale * j as f64, 0.0, z]
                })
                .collect(),
        };
        let mut results = Vec::new();
        for speed in [2.0, 5.0] {
            for adaptation in [false, true] {
                let mut cfg = preset_config("depth_change").unwrap();
                cfg.path = PathSource::Inline(spec.clone());
                cfg.speed = speed;
                cfg.adaptation = adaptation;
                cfg.duration = t_f / (speed / 2.0) * 1.05 + 30.0;
                let (_, m) = run(&cfg).unwrap();
                results.push(m.max_overshoot_depth_m);
            }
        }
        println!(
            "scale={scale:5.0} T_f={t_f:6.0}: v2_off={:.5} v2_on={:.5} | v5_off={:.5} v5_on={:.5} | v5 ratio={:.2} v2 ord={} cons={:.2}",
            results[0], results[1], results[2], results[3],
            results[3].max(results[2]) / results[3].min(results[2]).max(1e-9),
            results[1] < results[0],
            results[1].max(results[3]) / results[1].min(results[3]).max(1e-9),
        );
    }
}

#[test]
#[ignore]
fn probe_ts_sweep_v2() {
    let mut cfg = preset_config("depth_change").unwrap();
    cfg.name = "ts_sweep_probe_v2".into();
    cfg.path = PathSource::Inline(PathSpec {
        degree: 1,
        final_time: 240.0,
        control_points: vec![[0.0, 0.0, -60.0], [480.0, 0.0, -60.0]],
    });
    cfg.speed = 2.0;
    cfg.duration = 120.0;
    cfg.dt = 0.001;
    cfg.disturbance.step_time = Some(20.0);
    cfg.disturbance.step_q_bias = 0.004;
    let report = ts_sweep(&cfg, &[0.05, 0.02, 0.01, 0.005]).unwrap();
    for row in &report.rows {
        println!("Ts={:.3}: max|q_m - q| = {:.8}", row.ts, row.max_q_tracking_error);
    }
    println!(
        "monotone={}, reduction = {:.3}",
        report.monotone,
        report.rows.last().unwrap().max_q_tracking_error
            / report.rows.first().unwrap().max_q_tracking_error
    );
}

#[test]
#[ignore]
fn probe_ts_sweep_tau_scan() {
    for tau in [0.5, 1.0, 2.0, 4.0] {
        let mut cfg = preset_config("depth_change").unwrap();
        cfg.name = "ts_sweep_tau".into();
        cfg.path = PathSource::Inline(PathSpec {
            degree: 1,
            final_time: 240.0,
            control_points: vec![[0.0, 0.0, -60.0], [1200.0, 0.0, -60.0]],
        });
        cfg.speed = 5.0;
        cfg.duration = 80.0;
        cfg.dt = 0.001;
        cfg.plant.tau_q = tau;
        cfg.plant.tau_r = tau;
        cfg.disturbance.step_time = Some(20.0);
        cfg.disturbance.step_q_bias = 0.01;
        let report = ts_sweep(&cfg, &[0.05, 0.02, 0.01, 0.005]).unwrap();
        let vals: Vec<f64> = report.rows.iter().map(|r| r.max_q_tracking_error).collect();
        println!(
            "tau={tau}: {:?} monotone={} reduction={:.3}",
            vals.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
            report.monotone,
            vals.last().unwrap() / vals.first().unwrap()
        );
    }
}

#[test]
#[ignore]
fn probe_ts_sweep_fast_filter() {
    use auv_gnc::sim::TfSpec;
    for (kp, w) in [(3000.0, 0.01), (600.0, 0.01), (3000.0, 0.02)] {
        let mut cfg = preset_config("depth_change").unwrap();
        cfg.name = "ts_sweep_fast_filter".into();
        cfg.path = PathSource::Inline(PathSpec {
            degree: 1,
            final_time: 240.0,
            control_points: vec![[0.0, 0.0, -60.0], [1200.0, 0.0, -60.0]],
        });
        cfg.speed = 5.0;
        cfg.duration = 80.0;
        cfg.dt = 0.001;
        cfg.plant.kp_v = kp;
        cfg.plant.kp_h = kp;
        cfg.l1.c_channels = vec![
            TfSpec { num: vec![1.0], den: vec![1.0, 1.0] },
            TfSpec { num: vec![1.0], den: vec![1.0, 1.0] },
        ];
        cfg.disturbance.step_time = Some(20.0);
        cfg.disturbance.step_q_bias = w;
        let report = ts_sweep(&cfg, &[0.05, 0.02, 0.01, 0.005]).unwrap();
        let vals: Vec<f64> = report.rows.iter().map(|r| r.max_q_tracking_error).collect();
        println!(
            "kp={kp} w={w}: {:?} monotone={} reduction={:.3}",
            vals.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
            report.monotone,
            vals.last().unwrap() / vals.first().unwrap()
        );
    }
}

#[test]
#[ignore]
fn probe_stability_golden() {
    use auv_gnc::l1::{select_stabilizing_k, stability_check, DesiredSystem, StabilityBounds};
    use auv_gnc::lti::LtiSystem;
    use auv_gnc::plant::{linearized_autopilot_vehicle, PlantParams};

    let params = PlantParams::default();
    for v in [2.0, 5.0] {
        let plant = linearized_autopilot_vehicle(&params, v);
        let k = select_stabilizing_k(&plant, 0.05).unwrap();
        let desired = DesiredSystem::first_order_diagonal(&[0.1, 0.1]).unwrap();
        let c1 = LtiSystem::from_siso_tf(&[0.1], &[1.0, 2.1, 1.2, 0.1]);
        let c2 = LtiSystem::from_siso_tf(&[1.0e-6], &[1.0, 0.03, 3.0e-4, 1.0e-6]);
        let c_tf = LtiSystem::block_diag(&[c1, c2]);
        let bounds = StabilityBounds::default();
        let t0 = std::time::Instant::now();
        let report = stability_check(&plant, &k, &desired, &c_tf, &bounds).unwrap();
        println!(
            "v={v}: K nonzero = {}, report = {}  ({:.2?})",
            k.iter().any(|x| *x != 0.0),
            serde_json::to_string_pretty(&report).unwrap(),
            t0.elapsed()
        );
    }
}
