//! Scalar factorization f(x, y) = (xy - mu)^2 / 2: GD, the balancing of
//! |x - y| beyond the edge of stability, the positivity predicate for the
//! iterates, and the explicit 2x2 Hessian.

use serde::Serialize;

use crate::dynamics::{run_gd_partial, GdOptions, GdRun, Probe, Trajectory};
use crate::error::{EosError, Result};
use crate::linalg::sym2_eigenvalues;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Factor2DConfig {
    pub mu: f64,
    /// eta = K / mu
    pub k: f64,
    pub x0: f64,
    pub y0: f64,
    pub steps: usize,
}

impl Factor2DConfig {
    pub fn eta(&self) -> f64 {
        self.k / self.mu
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(EosError::Precondition(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.k > 0.0) {
            return Err(EosError::Precondition(format!("K must be positive, got {}", self.k)));
        }
        if self.steps == 0 {
            return Err(EosError::Precondition("steps must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn loss(x: f64, y: f64, mu: f64) -> f64 {
    0.5 * (x * y - mu).powi(2)
}

pub fn gradient(x: f64, y: f64, mu: f64) -> [f64; 2] {
    let r = x * y - mu;
    [r * y, r * x]
}

/// One exact GD step.
pub fn step(x: f64, y: f64, mu: f64, eta: f64) -> (f64, f64) {
    let r = x * y - mu;
    (x - eta * r * y, y - eta * r * x)
}

/// GD trajectory of (x, y) with `loss` and `product` series.
pub fn gd_2d(cfg: &Factor2DConfig) -> Result<Trajectory> {
    gd_2d_partial(cfg)?.into_result()
}

pub fn gd_2d_partial(cfg: &Factor2DConfig) -> Result<GdRun> {
    cfg.validate()?;
    let mu = cfg.mu;
    let probes = [
        Probe::new("loss", move |t: &[f64]| loss(t[0], t[1], mu)),
        Probe::new("product", |t: &[f64]| t[0] * t[1]),
    ];
    run_gd_partial(
        move |t: &[f64]| gradient(t[0], t[1], mu).to_vec(),
        &[cfg.x0, cfg.y0],
        cfg.eta(),
        cfg.steps,
        &probes,
        GdOptions {
            divergence_bound: 1e6 * mu.sqrt().max(cfg.x0.abs()).max(cfg.y0.abs()),
        },
    )
}

/// (step, |x - y|) over the steps with x y > mu.
pub fn balance_gap_series(traj: &Trajectory, mu: f64) -> Vec<(usize, f64)> {
    traj.points
        .iter()
        .enumerate()
        .filter(|(_, p)| p[0] * p[1] > mu)
        .map(|(t, p)| (t, (p[0] - p[1]).abs()))
        .collect()
}

/// Absolute round-off level of |x - y| for iterates of magnitude `scale`.
pub fn gap_noise_floor(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.max(1.0)
}

/// True when the gap series strictly decreases until it reaches the
/// round-off floor of the subtraction x - y, and stays below it afterwards.
/// Equal consecutive values count as ties at the resolution of the iterates:
/// a decrease below one ulp of x and y is not representable.
pub fn gap_strictly_decreasing(gaps: &[(usize, f64)], floor: f64) -> bool {
    let mut below = false;
    for w in gaps.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if below || a <= floor {
            below = true;
            if b > floor {
                return false;
            }
            continue;
        }
        if b > a {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityCheck {
    pub holds: bool,
    pub p: f64,
    /// The max{...} compared against p.
    pub lhs: f64,
}

/// Sufficient condition keeping both x and y positive for the whole run.
pub fn positivity_condition(x0: f64, y0: f64, mu: f64, k: f64) -> Result<PositivityCheck> {
    if !(x0 > 0.0 && y0 > 0.0) || !(x0 * y0 > mu) || !(mu > 0.0) {
        return Err(EosError::Precondition(format!(
            "need x0, y0 > 0 and x0*y0 > mu (x0={x0}, y0={y0}, mu={mu})"
        )));
    }
    let eta = k / mu;
    let m = (y0 - x0).abs() / mu.sqrt();
    let p = 4.0 / (m + (m * m + 4.0).sqrt()).powi(2);
    let q = (1.0 + p).powi(2);
    let m2 = m * m;
    let cubic = 4.0 / 27.0 * (1.0 + k).powi(3);
    let coupling = (2.0 / 3.0 * k * k - k / 3.0 + q * k * k / (2.0 * (k + 1.0)) * m2) * q * m2;
    let lhs = (eta * (x0 * y0 - mu)).max(cubic + coupling - k);
    Ok(PositivityCheck {
        holds: lhs < p,
        p,
        lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hessian2D {
    pub matrix: [[f64; 2]; 2],
    /// (larger, smaller)
    pub eig: (f64, f64),
}

pub fn hessian_2d(x: f64, y: f64, mu: f64) -> Hessian2D {
    let off = 2.0 * x * y - mu;
    Hessian2D {
        matrix: [[y * y, off], [off, x * x]],
        eig: sym2_eigenvalues(y * y, off, x * x),
    }
}

/// Largest deviations of the two exact one-step identities along a
/// trajectory, each scaled by the magnitude of the terms involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecursionResiduals {
    pub difference: f64,
    pub product: f64,
}

/// Checks y' - x' = (y - x)(1 - eta (mu - xy)) and
/// x'y' = xy (1 + eta (mu - xy))^2 + eta (mu - xy)(x - y)^2 at every step.
pub fn recursion_residuals(traj: &Trajectory, mu: f64) -> RecursionResiduals {
    let eta = traj.eta;
    let mut out = RecursionResiduals {
        difference: 0.0,
        product: 0.0,
    };
    for w in traj.points.windows(2) {
        let (x, y) = (w[0][0], w[0][1]);
        let (xn, yn) = (w[1][0], w[1][1]);
        let r = mu - x * y;

        let diff_rhs = (y - x) * (1.0 - eta * r);
        let diff_scale = x.abs() + y.abs() + xn.abs() + yn.abs();
        out.difference = out
            .difference
            .max(((yn - xn) - diff_rhs).abs() / diff_scale.max(f64::MIN_POSITIVE));

        let lead = x * y * (1.0 + eta * r).powi(2);
        let cross = eta * r * (x - y).powi(2);
        let prod_scale = (xn * yn).abs() + lead.abs() + cross.abs();
        out.product = out
            .product
            .max(((xn * yn) - (lead + cross)).abs() / prod_scale.max(f64::MIN_POSITIVE));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::detect_period;
    use crate::scalar1d::solve_period2;

    fn cfg(mu: f64, k: f64, x0: f64, y0: f64, steps: usize) -> Factor2DConfig {
        Factor2DConfig {
            mu,
            k,
            x0,
            y0,
            steps,
        }
    }

    #[test]
    fn balanced_minimum_is_fixed() {
        let t = gd_2d(&cfg(4.0, 1.3, 2.0, 2.0, 100)).unwrap();
        assert!(t.points.iter().all(|p| p == &t.points[0]));
        let gaps = balance_gap_series(&t, 4.0);
        assert!(gaps.iter().all(|(_, g)| *g == 0.0));
    }

    #[test]
    fn period_two_matches_1d_prediction() {
        let t = gd_2d(&cfg(1.0, 1.05, 1.5, 0.8, 100_000)).unwrap();
        let r = detect_period(&t, 8, 1e-9, 100).unwrap();
        assert_eq!(r.period, Some(2));
        let pred = solve_period2(1.0, 1.05).unwrap();
        let mut xs: Vec<f64> = r.orbit_points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - pred.x_low).abs() < 1e-8);
        assert!((xs[1] - pred.x_high).abs() < 1e-8);
        for p in &r.orbit_points {
            assert!((p[0] - p[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn period_four_at_k_1_25() {
        let t = gd_2d(&cfg(1.0, 1.25, 1.2, 0.9, 100_000)).unwrap();
        let r = detect_period(&t, 8, 1e-7, 200).unwrap();
        assert_eq!(r.period, Some(4));
        let (x, y) = (t.last()[0], t.last()[1]);
        assert!((x - y).abs() < 1e-8);
    }

    #[test]
    fn gap_decreases_over_p() {
        let t = gd_2d(&cfg(1.0, 1.3, 1.4, 0.9, 5_000)).unwrap();
        let gaps = balance_gap_series(&t, 1.0);
        assert!(gaps.len() > 10);
        assert!(gap_strictly_decreasing(&gaps, gap_noise_floor(2.0)));
    }

    #[test]
    fn unbalanced_large_k_not_monotone() {
        // beyond the balancing range an unbalanced orbit can persist
        let t = gd_2d(&cfg(1.0, 1.9, 2.2, 0.5, 2_000));
        if let Ok(t) = t {
            let gaps = balance_gap_series(&t, 1.0);
            let tail = gaps.last().map_or(0.0, |g| g.1);
            assert!(!gap_strictly_decreasing(&gaps, gap_noise_floor(3.0)) || tail > 1e-8);
        }
    }

    #[test]
    fn positivity_balanced_example() {
        // m = 0, K = 1.1, eta (x0 y0 - mu) = 0.1
        let mu = 1.0;
        let k = 1.1;
        let prod: f64 = 1.0 + 0.1 / k;
        let x0 = prod.sqrt();
        let c = positivity_condition(x0, x0, mu, k).unwrap();
        assert!((c.p - 1.0).abs() < 1e-15);
        let expected = 4.0 / 27.0 * 2.1f64.powi(3) - 1.1;
        assert!((c.lhs - expected).abs() < 1e-12);
        assert!((c.lhs - 0.2720).abs() < 1e-4);
        assert!(c.holds);
    }

    #[test]
    fn positivity_precondition() {
        assert!(positivity_condition(1.0, 1.0, 1.0, 1.1).is_err());
        assert!(positivity_condition(-2.0, -1.0, 1.0, 1.1).is_err());
    }

    #[test]
    fn positivity_fails_for_large_imbalance_and_sign_flips() {
        // m = 3 with x0 y0 just above mu
        let mu = 1.0;
        let k = 1.4;
        let y0: f64 = (3.0 + 13f64.sqrt()) / 2.0 + 1e-3;
        let x0 = y0 - 3.0;
        assert!(x0 * y0 > mu);
        let c = positivity_condition(x0, y0, mu, k).unwrap();
        assert!(!c.holds);
        // a sign flip does occur for this imbalance once x y overshoots
        let t = gd_2d_partial(&cfg(mu, k, x0 + 0.2, y0, 200)).unwrap().trajectory;
        assert!(t.points.iter().any(|p| p[0] < 0.0 || p[1] < 0.0));
    }

    #[test]
    fn gap_ties_allowed_increases_rejected() {
        let f = 1e-14;
        let g = |v: &[f64]| v.iter().enumerate().map(|(t, x)| (t, *x)).collect::<Vec<_>>();
        assert!(gap_strictly_decreasing(&g(&[1e-3, 1e-4, 1e-4, 5e-5, 1e-15, 0.0]), f));
        assert!(gap_strictly_decreasing(&g(&[1e-3, 1e-4, 1e-4]), f));
        assert!(!gap_strictly_decreasing(&g(&[1e-3, 1e-4, 2e-4]), f));
        assert!(!gap_strictly_decreasing(&g(&[1e-3, 1e-15, 1e-13]), f));
    }

    #[test]
    fn hessian_values() {
        let h = hessian_2d(1.0, 1.0, 1.0);
        assert_eq!(h.matrix, [[1.0, 1.0], [1.0, 1.0]]);
        assert!((h.eig.0 - 2.0).abs() < 1e-15 && h.eig.1.abs() < 1e-15);

        let h = hessian_2d(2.0, 0.5, 1.0);
        assert!((h.eig.0 - 4.25).abs() < 1e-14 && h.eig.1.abs() < 1e-14);

        let h = hessian_2d(0.0, 0.0, 1.0);
        assert_eq!(h.matrix, [[0.0, -1.0], [-1.0, 0.0]]);
        assert_eq!(h.eig, (1.0, -1.0));
    }

    #[test]
    fn recursions_hold_along_trajectory() {
        let t = gd_2d(&cfg(1.0, 1.2, 1.6, 0.7, 2_000)).unwrap();
        let r = recursion_residuals(&t, 1.0);
        assert!(r.difference < 1e-13, "{r:?}");
        assert!(r.product < 1e-12, "{r:?}");
    }
}
