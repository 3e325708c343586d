//! GD on f(x) = (x^2 - mu)^2 / 4 across the stability regimes of eta*mu:
//! the closed-form 2-cycle against the detected tail of a simulated run.

use eoslab::dynamics::detect_period;
use eoslab::scalar1d::{gd_1d, solve_period2, ScalarFunction};

fn main() -> eoslab::Result<()> {
    let mu = 1.0;
    let f = ScalarFunction::quartic(mu);
    for eta in [0.9, 1.05, 1.2, 1.237, 1.4] {
        let traj = gd_1d(&f, 0.5, eta, 100_000)?;
        let period = detect_period(&traj, 16, 1e-7, 64)?.period;
        match solve_period2(mu, eta) {
            Ok(p) => println!(
                "eta*mu = {:.3}  predicted ({:.9}, {:.9}) {:?}  detected period {:?}",
                eta * mu,
                p.x_low,
                p.x_high,
                p.stability,
                period
            ),
            Err(e) => println!("eta*mu = {:.3}  {e}  detected period {period:?}", eta * mu),
        }
    }
    Ok(())
}
