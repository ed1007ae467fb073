use auv_gnc::l1::{inverse_desired_split, select_stabilizing_k, DesiredSystem};
use auv_gnc::lti::LtiSystem;
use auv_gnc::plant::{linearized_autopilot_vehicle, PlantParams};
use nalgebra::DMatrix;

fn main() {
    println!("start");
    let params = PlantParams::default();
    let v = 5.0;
    let plant = linearized_autopilot_vehicle(&params, v);
    println!("plant eigs: {:?}", plant.eigenvalues());
    let k = select_stabilizing_k(&plant, 0.05).unwrap();
    println!("K = {k}");
    let a_pk = &plant.a - &plant.b * &k;
    let shifted = LtiSystem::strictly_proper(a_pk.clone(), plant.b.clone(), plant.c.clone());
    println!("shifted eigs: {:?}", shifted.eigenvalues());
    let desired = DesiredSystem::first_order_diagonal(&[0.1, 0.1]).unwrap();
    let c1 = LtiSystem::from_siso_tf(&[0.1], &[1.0, 2.1, 1.2, 0.1]);
    let c2 = LtiSystem::from_siso_tf(&[1.0e-6], &[1.0, 0.03, 3.0e-4, 1.0e-6]);
    let c_tf = LtiSystem::block_diag(&[c1, c2]);
    let inv = inverse_desired_split(&desired).unwrap();
    let w = inv.compose_with(&shifted).unwrap();
    println!("W built: {} states", w.order());
    let w_minus_i = w.sub(&LtiSystem::identity(2));
    let loop_gain = w_minus_i.series(&c_tf);
    println!("loop gain built: {} states", loop_gain.order());
    let h1 = loop_gain.add(&LtiSystem::identity(2)).inverse().unwrap();
    println!("H1 built: {} states, eigs:", h1.order());
    for e in h1.eigenvalues() {
        println!("  {:+.6e} {:+.6e}i", e.re, e.im);
    }
    let h0 = LtiSystem::strictly_proper(a_pk.clone(), plant.b.clone(), DMatrix::identity(4, 4));
    let t_chain = h0.series(&c_tf.series(&h1));
    let g_sys = h0.sub(&t_chain.series(&w));
    println!("G: {} states", g_sys.order());
    for e in g_sys.eigenvalues() {
        println!("  eig {:+.6e} {:+.6e}i", e.re, e.im);
    }
    println!("checking minimality of slow modes...");
    for e in g_sys.eigenvalues() {
        if e.re > -0.2 {
            let minimal = g_sys.is_minimal_mode(e);
            println!("  eig {:+.6e} {:+.6e}i minimal={minimal}", e.re, e.im);
        }
    }
    println!("minimal decay: {:?}", g_sys.minimal_decay_rate(1e-9));
}
