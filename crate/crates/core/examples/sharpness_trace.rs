//! Sharpness along GD runs from finite-difference power iteration, against
//! the analytic top Hessian eigenvalue, with 2 / eta for reference.

use eoslab::experiment::{execute, ExperimentConfig, ExperimentKind, SeedSource};

fn main() -> eoslab::Result<()> {
    for (model, eta) in [("quartic", "1.1"), ("factor2d", "1.1"), ("neuron", "2.2")] {
        let cfg = ExperimentConfig::build(
            ExperimentKind::SharpnessTrace,
            &[("model", model), ("eta", eta), ("steps", "300")],
            0,
        )?;
        let out = execute(&cfg, SeedSource::Config)?;
        let m = &out.summary.metrics;
        println!(
            "{model:<9} tail sharpness {:.6}  2/eta {:.6}  power-iteration error {:?}",
            m["tail_sharpness_mean"],
            m["two_over_eta"],
            m.get("power_iteration_max_rel_error")
        );
    }
    Ok(())
}
