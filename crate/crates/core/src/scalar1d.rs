//! One-dimensional objectives with exact high-order derivatives, the
//! stable-oscillation condition checks, the closed-form period-2 orbit of the
//! quartic `f(x) = (x^2 - mu)^2 / 4`, and 1-D gradient descent.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{run_gd_partial, GdOptions, Probe, Trajectory};
use crate::error::{EosError, Result};

/// Order reported for built-in kinds whose derivatives are all available.
pub const BUILTIN_MAX_ORDER: usize = 16;

/// Tolerances defining "local minimum".
pub const MIN_GRAD_TOL: f64 = 1e-9;
pub const MIN_CURVATURE: f64 = 1e-9;

/// Derivatives below this (relative to max(1, |f''|)) count as zero when
/// searching for the lowest non-vanishing order.
const ZERO_DERIVATIVE_TOL: f64 = 1e-12;

/// sqrt(4.5) - 1: the orbit is approached without sign flips of the error below this.
pub fn monotone_rate_bound() -> f64 {
    4.5f64.sqrt() - 1.0
}

/// sqrt(5) - 1: local stability limit of the period-2 orbit.
pub fn oscillating_rate_bound() -> f64 {
    5f64.sqrt() - 1.0
}

/// Existence bound for the period-2 orbit.
pub const EXISTENCE_RATE_BOUND: f64 = 1.5;

/// Oracle returning `[f(x), f'(x), ..., f^(max_order)(x)]`.
pub type DerivativeOracle = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum ScalarFunction {
    /// (x^2 - mu)^2 / 4
    Quartic { mu: f64 },
    /// a * sin(x)
    ScaledSine { amplitude: f64 },
    /// tanh(x)
    Tanh,
    /// lambda * x^2 / 2
    Quadratic { lambda: f64 },
    /// (g(x) - y)^2
    SquaredLossOf {
        inner: Box<ScalarFunction>,
        target: f64,
    },
    Custom {
        name: String,
        max_order: usize,
        oracle: DerivativeOracle,
    },
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFunction::Quartic { mu } => write!(f, "Quartic(mu={mu})"),
            ScalarFunction::ScaledSine { amplitude } => write!(f, "ScaledSine(a={amplitude})"),
            ScalarFunction::Tanh => write!(f, "Tanh"),
            ScalarFunction::Quadratic { lambda } => write!(f, "Quadratic(lambda={lambda})"),
            ScalarFunction::SquaredLossOf { inner, target } => {
                write!(f, "SquaredLossOf({inner:?}, y={target})")
            }
            ScalarFunction::Custom {
                name, max_order, ..
            } => write!(f, "Custom({name}, order<={max_order})"),
        }
    }
}

/// Coefficients (ascending powers of t = tanh x) of d^k/dx^k tanh x.
fn tanh_derivative_polys(max_order: usize) -> Vec<Vec<f64>> {
    let mut polys = vec![vec![0.0, 1.0]];
    for _ in 0..max_order {
        let p = polys.last().unwrap();
        // d/dx P(t) = P'(t) (1 - t^2)
        let dp: Vec<f64> = p
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| i as f64 * c)
            .collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (i, c) in dp.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        polys.push(next);
    }
    polys
}

fn eval_poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ScalarFunction {
    pub fn quartic(mu: f64) -> Self {
        ScalarFunction::Quartic { mu }
    }

    pub fn squared_loss_of(inner: ScalarFunction, target: f64) -> Self {
        ScalarFunction::SquaredLossOf {
            inner: Box::new(inner),
            target,
        }
    }

    pub fn max_order(&self) -> usize {
        match self {
            ScalarFunction::SquaredLossOf { inner, .. } => inner.max_order(),
            ScalarFunction::Custom { max_order, .. } => *max_order,
            _ => BUILTIN_MAX_ORDER,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.all_derivatives(x, 0)[0]
    }

    pub fn gradient(&self, x: f64) -> f64 {
        self.all_derivatives(x, 1)[1]
    }

    /// `[f(x), f'(x), ..., f^(k)(x)]` in closed form.
    pub fn derivatives(&self, x: f64, k: usize) -> Result<Vec<f64>> {
        let max_order = self.max_order();
        if k > max_order {
            return Err(EosError::UnsupportedOrder {
                requested: k,
                max_order,
            });
        }
        Ok(self.all_derivatives(x, k))
    }

    fn all_derivatives(&self, x: f64, k: usize) -> Vec<f64> {
        match self {
            ScalarFunction::Quartic { mu } => (0..=k)
                .map(|order| match order {
                    0 => 0.25 * (x * x - mu).powi(2),
                    1 => x * x * x - mu * x,
                    2 => 3.0 * x * x - mu,
                    3 => 6.0 * x,
                    4 => 6.0,
                    _ => 0.0,
                })
                .collect(),
            ScalarFunction::ScaledSine { amplitude } => (0..=k)
                .map(|order| {
                    amplitude
                        * match order % 4 {
                            0 => x.sin(),
                            1 => x.cos(),
                            2 => -x.sin(),
                            _ => -x.cos(),
                        }
                })
                .collect(),
            ScalarFunction::Tanh => {
                let t = x.tanh();
                tanh_derivative_polys(k)
                    .iter()
                    .map(|p| eval_poly(p, t))
                    .collect()
            }
            ScalarFunction::Quadratic { lambda } => (0..=k)
                .map(|order| match order {
                    0 => 0.5 * lambda * x * x,
                    1 => lambda * x,
                    2 => *lambda,
                    _ => 0.0,
                })
                .collect(),
            ScalarFunction::SquaredLossOf { inner, target } => {
                // Leibniz rule on h^2 with h = g - y.
                let mut h = inner.all_derivatives(x, k);
                h[0] -= target;
                (0..=k)
                    .map(|n| (0..=n).map(|j| binomial(n, j) * h[j] * h[n - j]).sum())
                    .collect()
            }
            ScalarFunction::Custom { oracle, .. } => {
                let mut d = oracle(x);
                d.truncate(k + 1);
                d
            }
        }
    }

    /// Magnitude beyond which a 1-D iterate is treated as divergent.
    fn divergence_bound(&self, x0: f64) -> f64 {
        match self {
            ScalarFunction::Quartic { mu } => 1e6 * mu.sqrt(),
            _ => 1e6 * x0.abs().max(1.0),
        }
    }
}

fn check_minimum(f: &ScalarFunction, x_bar: f64) -> Result<Vec<f64>> {
    let d = f.derivatives(x_bar, f.max_order().min(BUILTIN_MAX_ORDER))?;
    if d.len() < 3 || d[1].abs() > MIN_GRAD_TOL || d[2] <= MIN_CURVATURE {
        return Err(EosError::NotAMinimum {
            first: d.get(1).copied().unwrap_or(f64::NAN),
            second: d.get(2).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThirdOrderCheck {
    pub applicable: bool,
    /// 3 [f'''(x)]^2 - f''(x) f''''(x)
    pub margin: f64,
}

/// Third-order stable-oscillation condition at a local minimum.
pub fn check_condition_third_order(f: &ScalarFunction, x_bar: f64) -> Result<ThirdOrderCheck> {
    if f.max_order() < 4 {
        return Err(EosError::UnsupportedOrder {
            requested: 4,
            max_order: f.max_order(),
        });
    }
    let d = check_minimum(f, x_bar)?;
    let margin = 3.0 * d[3] * d[3] - d[2] * d[4];
    let third_nonzero = d[3].abs() > ZERO_DERIVATIVE_TOL * d[2].abs().max(1.0);
    Ok(ThirdOrderCheck {
        applicable: third_nonzero && margin > 0.0,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum HigherOrderClass {
    /// Lowest non-vanishing order `k` admits a stable 2-cycle. For odd `k`
    /// with f^(k) < 0 the check is applied to the mirrored function x -> -x.
    StableOscillation {
        k: usize,
        derivative: f64,
        mirrored: bool,
    },
    /// Lowest non-vanishing order found but its sign rules out the branch.
    NoStableOscillation { k: usize, derivative: f64 },
    /// Every derivative of order 3..=max_order vanishes.
    AllZero { max_order: usize },
}

/// Higher-order classification at a minimum where f''' vanishes.
pub fn check_condition_higher_order(f: &ScalarFunction, x_bar: f64) -> Result<HigherOrderClass> {
    let d = check_minimum(f, x_bar)?;
    let zero_tol = ZERO_DERIVATIVE_TOL * d[2].abs().max(1.0);
    if d.len() > 3 && d[3].abs() > zero_tol {
        return Err(EosError::Precondition(format!(
            "f'''({x_bar}) = {} is non-zero; use the third-order check",
            d[3]
        )));
    }
    let max_order = d.len() - 1;
    let Some(k) = (4..=max_order).find(|&k| d[k].abs() > zero_tol) else {
        return Ok(HigherOrderClass::AllZero { max_order });
    };
    let fk = d[k];
    if k % 2 == 0 {
        return Ok(if fk < 0.0 {
            HigherOrderClass::StableOscillation {
                k,
                derivative: fk,
                mirrored: false,
            }
        } else {
            HigherOrderClass::NoStableOscillation { k, derivative: fk }
        });
    }
    // Odd k: mirroring x -> -x flips odd derivatives and keeps even ones, so
    // only the sign of f^(k+1) matters.
    match d.get(k + 1) {
        Some(&next) if next < 0.0 => Ok(HigherOrderClass::StableOscillation {
            k,
            derivative: fk,
            mirrored: fk < 0.0,
        }),
        _ => Ok(HigherOrderClass::NoStableOscillation { k, derivative: fk }),
    }
}

/// Squared-loss condition on the inner function `g` at a root of g - y.
pub fn check_l2_condition(g: &ScalarFunction, x_bar: f64, y: f64) -> Result<bool> {
    let d = g.derivatives(x_bar, 3)?;
    if (d[0] - y).abs() > MIN_GRAD_TOL {
        return Err(EosError::Precondition(format!(
            "g({x_bar}) = {} differs from target {y}",
            d[0]
        )));
    }
    Ok(d[1] != 0.0 && d[1] * d[3] < 6.0 * d[2] * d[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WindowValidity {
    ThirdOrder,
    HigherOrderOdd,
    HigherOrderEven,
    NotApplicable,
}

/// Learning rates bracketing a two-step return from x_bar - eps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaWindow {
    pub lower: f64,
    /// `+inf` when eps is large enough that the bracket is unbounded.
    pub upper: f64,
    pub validity: WindowValidity,
}

fn upper_rate(curvature: f64, shift: f64) -> f64 {
    let denom = curvature - shift;
    if denom > 0.0 {
        2.0 / denom
    } else {
        f64::INFINITY
    }
}

pub fn eta_window(f: &ScalarFunction, x_bar: f64, eps: f64) -> Result<EtaWindow> {
    let third = check_condition_third_order(f, x_bar)?;
    let d = check_minimum(f, x_bar)?;
    let curvature = d[2];
    let lower = 2.0 / curvature;
    if third.applicable {
        if eps * d[3] <= 0.0 {
            return Err(EosError::Precondition(format!(
                "eps * f'''(x_bar) must be positive (eps={eps}, f'''={})",
                d[3]
            )));
        }
        return Ok(EtaWindow {
            lower,
            upper: upper_rate(curvature, eps * d[3]),
            validity: WindowValidity::ThirdOrder,
        });
    }
    let zero_tol = ZERO_DERIVATIVE_TOL * curvature.abs().max(1.0);
    if d[3].abs() > zero_tol {
        return Err(EosError::NotApplicable(format!(
            "third-order margin {} is not positive",
            third.margin
        )));
    }
    if eps <= 0.0 {
        return Err(EosError::Precondition("eps must be positive".into()));
    }
    match check_condition_higher_order(f, x_bar)? {
        HigherOrderClass::StableOscillation { k, derivative, .. } => {
            let scale = eps.powi(k as i32 - 2);
            if k % 2 == 0 {
                Ok(EtaWindow {
                    lower,
                    upper: upper_rate(curvature, -derivative * scale),
                    validity: WindowValidity::HigherOrderEven,
                })
            } else {
                Ok(EtaWindow {
                    lower,
                    upper: upper_rate(curvature, derivative.abs() * scale),
                    validity: WindowValidity::HigherOrderOdd,
                })
            }
        }
        other => Err(EosError::NotApplicable(format!("{other:?}"))),
    }
}

/// Bisects the window for the rate at which GD started from x_bar - eps
/// (x_bar + eps for a mirrored odd branch) lands back on its start after two steps.
pub fn two_step_return_eta(f: &ScalarFunction, x_bar: f64, eps: f64) -> Result<f64> {
    let window = eta_window(f, x_bar, eps)?;
    let start = match window.validity {
        WindowValidity::ThirdOrder => x_bar - eps,
        WindowValidity::HigherOrderOdd => match check_condition_higher_order(f, x_bar)? {
            HigherOrderClass::StableOscillation { mirrored: true, .. } => x_bar + eps,
            _ => x_bar - eps,
        },
        _ => x_bar - eps,
    };
    let defect = |eta: f64| {
        let x1 = start - eta * f.gradient(start);
        let x2 = x1 - eta * f.gradient(x1);
        x2 - start
    };
    let mut lo = window.lower;
    let mut hi = if window.upper.is_finite() {
        window.upper
    } else {
        4.0 * window.lower
    };
    let (mut f_lo, f_hi) = (defect(lo), defect(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(EosError::NonConvergence {
            iters: 0,
            last_estimate: lo,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = defect(mid);
        if f_mid == 0.0 || (hi - lo) < 1e-15 * mid {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrbitStability {
    /// eta*mu <= sqrt(4.5) - 1
    ConvergentMonotone,
    /// eta*mu < sqrt(5) - 1
    ConvergentOscillating,
    /// eta*mu <= 3/2: the orbit exists but repels
    ExistsUnstable,
    /// Beyond the existence bound.
    None,
}

impl OrbitStability {
    pub fn classify(eta_mu: f64) -> Self {
        if eta_mu <= monotone_rate_bound() {
            OrbitStability::ConvergentMonotone
        } else if eta_mu < oscillating_rate_bound() {
            OrbitStability::ConvergentOscillating
        } else if eta_mu <= EXISTENCE_RATE_BOUND {
            OrbitStability::ExistsUnstable
        } else {
            OrbitStability::None
        }
    }
}

/// Closed-form period-2 orbit of GD on the quartic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitPrediction {
    pub x_low: f64,
    pub x_high: f64,
    pub eta: f64,
    pub mu: f64,
    pub stability: OrbitStability,
}

impl OrbitPrediction {
    /// x_high / x_low
    pub fn ratio(&self) -> f64 {
        self.x_high / self.x_low
    }
}

/// Roots of x^4 - (mu + 1/eta) x^2 + 1/eta^2 = 0 with x_low < sqrt(mu) < x_high.
///
/// The larger root in u = x^2 is computed directly and the smaller one from
/// the product 1/eta^2, which avoids cancellation as eta*mu -> 1+.
pub fn solve_period2(mu: f64, eta: f64) -> Result<OrbitPrediction> {
    if !(mu > 0.0) || !(eta > 0.0) {
        return Err(EosError::Precondition(format!(
            "mu and eta must be positive (mu={mu}, eta={eta})"
        )));
    }
    let eta_mu = eta * mu;
    if eta_mu <= 1.0 {
        return Err(EosError::NoOrbit {
            eta_mu,
            fixed_point: mu.sqrt(),
        });
    }
    let inv = 1.0 / eta;
    let sum = mu + inv;
    // sum^2 - 4/eta^2 = (mu - 1/eta)(mu + 3/eta), factored to keep precision
    let disc = (mu - inv) * (mu + 3.0 * inv);
    let u_high = 0.5 * (sum + disc.sqrt());
    let u_low = inv * inv / u_high;
    Ok(OrbitPrediction {
        x_low: u_low.sqrt(),
        x_high: u_high.sqrt(),
        eta,
        mu,
        stability: OrbitStability::classify(eta_mu),
    })
}

/// GD on a scalar function; the trajectory carries a `loss` series.
pub fn gd_1d(f: &ScalarFunction, x0: f64, eta: f64, steps: usize) -> Result<Trajectory> {
    gd_1d_partial(f, x0, eta, steps)?.into_result()
}

/// Like [`gd_1d`] but returns the prefix computed before a divergence.
pub fn gd_1d_partial(
    f: &ScalarFunction,
    x0: f64,
    eta: f64,
    steps: usize,
) -> Result<crate::dynamics::GdRun> {
    if steps == 0 {
        return Err(EosError::Precondition("steps must be at least 1".into()));
    }
    let loss = Probe::new("loss", |t: &[f64]| f.value(t[0]));
    run_gd_partial(
        |t: &[f64]| vec![f.gradient(t[0])],
        &[x0],
        eta,
        steps,
        &[loss],
        GdOptions {
            divergence_bound: f.divergence_bound(x0),
        },
    )
}
