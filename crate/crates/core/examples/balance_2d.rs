//! Two-parameter factorization (xy - mu)^2 / 2 beyond the stability
//! threshold: the imbalance |x - y| shrinks to zero while the product
//! keeps oscillating.

use eoslab::dynamics::detect_period;
use eoslab::factor2d::{gd_2d, positivity_condition, recursion_residuals, Factor2DConfig};

fn main() -> eoslab::Result<()> {
    for k in [1.1, 1.2, 1.25, 1.4] {
        let cfg = Factor2DConfig {
            mu: 1.0,
            k,
            x0: 1.1,
            y0: 1.0,
            steps: 10_000,
        };
        let traj = gd_2d(&cfg)?;
        let pos = positivity_condition(cfg.x0, cfg.y0, cfg.mu, k)?;
        let res = recursion_residuals(&traj, cfg.mu);
        let last = traj.last();
        let period = detect_period(&traj, 16, 1e-9, 64)?.period;
        println!(
            "K = {k:.2}  positivity {}  |x - y| = {:.2e}  period {period:?}  recursion residuals {:.1e} {:.1e}",
            pos.holds,
            (last[0] - last[1]).abs(),
            res.difference,
            res.product
        );
    }
    Ok(())
}
