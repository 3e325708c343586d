//! Stability conditions at a minimum: third order for the quartic, higher
//! order for a sine whose third derivative vanishes, and the squared-loss
//! condition for tanh.

use eoslab::experiment::{condition_report, named_function};

fn main() -> eoslab::Result<()> {
    for (name, target) in [("quartic", 0.5), ("sine", 0.5), ("quadratic", 0.5), ("tanh_l2", 0.5)] {
        let (f, x_bar) = named_function(name, 1.0, 1.0, 2.0, target)?;
        let r = condition_report(name, &f, x_bar, 0.01)?;
        println!(
            "{name:<10} x_bar {:>9.6}  margin {:>10.4}  {:<18} window {:?}  l2 {:?}",
            r.x_bar, r.third_order_margin, r.classification, r.eta_window, r.l2_condition
        );
    }
    Ok(())
}
