//! Single ReLU neuron learning a teacher under the population loss: the
//! orthogonal weight w_y decays under the geometric envelope while v and w_x
//! settle on the 1-D 2-cycle.

use eoslab::neuron::{check_decay_envelope, simulate_neuron, NeuronConfig};

fn main() -> eoslab::Result<()> {
    let cfg = NeuronConfig {
        d: 2,
        k: 1.1,
        eps: 0.1,
        init_angle: std::f64::consts::FRAC_PI_2,
        theorem_mode: true,
    };
    let run = simulate_neuron(&cfg, 400)?;
    println!("eta = {}  T1 bound = {}  stage boundary = {:?}", cfg.eta(), run.t1_bound, run.stage_boundary);
    for (t, s) in run.states().enumerate().filter(|(t, _)| t % 50 == 0 || *t < 8) {
        println!("t = {t:>3}  v = {:.6}  w_x = {:.6}  w_y = {:.3e}", s.v, s.w_x, s.w_y);
    }
    let decay = check_decay_envelope(&run, cfg.k);
    println!(
        "decay envelope holds: {} (worst ratio {:.4} over {} steps)",
        decay.holds, decay.worst_ratio, decay.steps_checked
    );
    Ok(())
}
