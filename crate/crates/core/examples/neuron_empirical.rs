//! Empirical-loss neuron on n samples from the unit circle at eta = 2.2:
//! when w_y settles versus when the imbalance |v - w_x| first drops below
//! 0.05, per seed.

use eoslab::experiment::stage_ordering;
use eoslab::neuron::{empirical_neuron_gd, EmpiricalNeuron};

fn main() -> eoslab::Result<()> {
    for seed in 0..10 {
        let obj = EmpiricalNeuron::sample(1000, 2, seed)?;
        let traj = empirical_neuron_gd(&obj, 2.2, &[0.1, 0.0, 0.1], 3000)?;
        let s = |name: &str| traj.series(name).unwrap().to_vec();
        let o = stage_ordering(&s("v"), &s("w_x"), &s("w_y"), 0.05, 10.0, 0.1);
        println!(
            "seed {seed}  floor {:.2e}  w_y settled at {:?}  imbalance below 0.05 at {:?}  ordering holds {}",
            o.noise_floor, o.wy_settled_at, o.imbalance_below_at, o.holds
        );
    }
    Ok(())
}
