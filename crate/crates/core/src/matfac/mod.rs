//! Matrix factorization around a minimum manifold.
//!
//! Two objectives share a target `C`:
//! - symmetric: `L(X) = 1/4 ||X X^T - C||_F^2`, `C = X0 X0^T`;
//! - two-factor: `L(Y, Z) = 1/2 ||Y Z - C||_F^2`, started near
//!   `(alpha X0, X0^T / alpha)`.
//!
//! Both reduce, along the leading singular direction, to the scalar quartic
//! with `mu = 1` and rescaled step `1 + beta sigma1^2`, so their period-2
//! orbits are predicted by [`crate::scalar1d::solve_period2`].

mod matrix;

pub use matrix::{svd, DenseMatrix, SvdResult};

use serde::Serialize;

use crate::dynamics::{run_gd_partial, sharpness_probe, GdOptions, Probe, Trajectory};
use crate::error::{EosError, Result};
use crate::rng::seeded_rng;
use crate::scalar1d::{solve_period2, OrbitPrediction};

/// Upper end of the admissible `beta sigma1^2` range.
pub const MAX_BETA_SIGMA1_SQ: f64 = 0.121;
/// Default deviation size relative to sigma1.
pub const DEFAULT_EPS_FRACTION: f64 = 1e-3;

/// Tolerance on `||XY - C||_F / max(1, ||C||_F)` for "on the manifold".
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

/// 1/4 ||X X^T - C||^2
pub fn symmetric_loss(x: &DenseMatrix, c: &DenseMatrix) -> f64 {
    let r = &(x * &x.transpose()) - c;
    0.25 * r.inner(&r)
}

/// (X X^T - C) X
pub fn symmetric_gradient(x: &DenseMatrix, c: &DenseMatrix) -> DenseMatrix {
    let r = &(x * &x.transpose()) - c;
    &r * x
}

/// 1/2 ||Y Z - C||^2
pub fn pair_loss(y: &DenseMatrix, z: &DenseMatrix, c: &DenseMatrix) -> f64 {
    let r = &(y * z) - c;
    0.5 * r.inner(&r)
}

/// ((YZ - C) Z^T, Y^T (YZ - C))
pub fn pair_gradient(y: &DenseMatrix, z: &DenseMatrix, c: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let r = &(y * z) - c;
    (&r * &z.transpose(), &y.transpose() * &r)
}

fn check_on_manifold(x: &DenseMatrix, y: &DenseMatrix, c: &DenseMatrix) -> Result<()> {
    let prod = x.matmul(y)?;
    let off = prod.try_sub(c)?.frobenius_norm();
    if off > ON_MANIFOLD_TOL * c.frobenius_norm().max(1.0) {
        return Err(EosError::Precondition(format!(
            "(X, Y) is off the minimum manifold: ||XY - C||_F = {off:e}"
        )));
    }
    Ok(())
}

/// Leading eigenpair of the loss Hessian at a point of `{XY = C}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadingEigvec {
    pub dx: DenseMatrix,
    pub dy: DenseMatrix,
    pub c1: f64,
    pub c2: f64,
    /// sigma_x1^2 + sigma_y1^2
    pub eigenvalue: f64,
}

impl LeadingEigvec {
    /// vec(dX) followed by vec(dY), row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.dx.as_slice().to_vec();
        v.extend_from_slice(self.dy.as_slice());
        v
    }
}

const SINGULAR_GAP_TOL: f64 = 1e-8;

/// `Delta = (C1 u_x1 u_y1^T, C2 v_x1 v_y1^T)` for the Hessian of
/// 1/2 ||XY - C||^2 at C = XY.
pub fn leading_hessian_eigvec(x: &DenseMatrix, y: &DenseMatrix) -> Result<LeadingEigvec> {
    if x.cols() != y.rows() {
        return Err(EosError::DimensionMismatch {
            expected: x.cols(),
            got: y.rows(),
        });
    }
    let sx = svd(x)?;
    let sy = svd(y)?;
    for (name, s) in [("X", &sx), ("Y", &sy)] {
        let gap = s.sigma[0] - s.sigma.get(1).copied().unwrap_or(0.0);
        if gap <= SINGULAR_GAP_TOL {
            return Err(EosError::Precondition(format!(
                "top singular value of {name} is degenerate (gap {gap:e})"
            )));
        }
    }
    let overlap: f64 = crate::linalg::dot(&sx.v_col(0), &sy.u_col(0));
    if overlap.abs() <= SINGULAR_GAP_TOL {
        return Err(EosError::Precondition(
            "v_x1 is orthogonal to u_y1".into(),
        ));
    }
    let (ax, ay) = (sx.sigma[0], sy.sigma[0]);
    let norm = ax.hypot(ay);
    let c1 = ay / norm;
    let c2 = ax / norm;
    Ok(LeadingEigvec {
        dx: DenseMatrix::outer(&sx.u_col(0), &sy.u_col(0)).scale(c1),
        dy: DenseMatrix::outer(&sx.v_col(0), &sy.v_col(0)).scale(c2),
        c1,
        c2,
        eigenvalue: ax * ax + ay * ay,
    })
}

/// Derivatives of `t -> 1/2 ||(X + t dX)(Y + t dY) - C||^2` at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossSection {
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    /// 3 f3^2 - f2 f4
    pub margin: f64,
}

pub fn cross_section_condition(
    x: &DenseMatrix,
    y: &DenseMatrix,
    c: &DenseMatrix,
    dx: &DenseMatrix,
    dy: &DenseMatrix,
) -> Result<CrossSection> {
    check_on_manifold(x, y, c)?;
    let first = dx.matmul(y)?.try_add(&x.matmul(dy)?)?;
    let second = dx.matmul(dy)?;
    let f2 = first.inner(&first);
    let f3 = 6.0 * first.inner(&second);
    let f4 = 12.0 * second.inner(&second);
    Ok(CrossSection {
        f2,
        f3,
        f4,
        margin: 3.0 * f3 * f3 - f2 * f4,
    })
}

/// max{eta (s1^2/a^2)(1 + a^4 s2^2/s1^2), eta s1^2 a^2 (1 + s2^2/(a^4 s1^2))} <= 2
pub fn sigma2_admissible(sigma1: f64, sigma2: f64, alpha: f64, eta: f64) -> bool {
    sigma2_admissibility_value(sigma1, sigma2, alpha, eta) <= 2.0
}

/// The left-hand side of [`sigma2_admissible`].
pub fn sigma2_admissibility_value(sigma1: f64, sigma2: f64, alpha: f64, eta: f64) -> f64 {
    let r2 = (sigma2 / sigma1).powi(2);
    let a2 = alpha * alpha;
    let a4 = a2 * a2;
    let first = eta * sigma1 * sigma1 / a2 * (1.0 + a4 * r2);
    let second = eta * sigma1 * sigma1 * a2 * (1.0 + r2 / a4);
    first.max(second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OrbitMode {
    Symmetric { delta1: f64, delta2: f64 },
    QuasiSymmetric { rho1: f64, rho2: f64, alpha: f64 },
}

/// Predicted period-2 orbit of the factorization dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatfacOrbit {
    pub mode: OrbitMode,
    pub sigma1: f64,
    pub beta: f64,
    /// Top singular value at the two orbit points, larger first.
    pub predicted_top: [f64; 2],
    /// One entry per orbit point: `[X]` (symmetric) or `[Y, Z]`.
    pub orbit_matrices: [Vec<DenseMatrix>; 2],
}

/// Period-2 roots for the rescaled step `1 + beta sigma1^2`.
pub fn predict_scaled_orbit(sigma1: f64, beta: f64) -> Result<OrbitPrediction> {
    solve_period2(1.0, 1.0 + beta * sigma1 * sigma1)
}

/// `beta` such that `eta = 1/sigma1^2 + beta = factor / sigma1^2`.
pub fn beta_for_eta_factor(sigma1: f64, factor: f64) -> f64 {
    (factor - 1.0) / (sigma1 * sigma1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatfacOptions {
    pub steps: usize,
    /// Refuse to run when a theorem precondition fails.
    pub theorem_mode: bool,
    /// 0 disables the sharpness series.
    pub sharpness_every: usize,
    pub sharpness_seed: u64,
}

impl Default for MatfacOptions {
    fn default() -> Self {
        MatfacOptions {
            steps: 20_000,
            theorem_mode: false,
            sharpness_every: 0,
            sharpness_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreconditionFlag {
    pub name: String,
    pub holds: bool,
    pub value: f64,
}

impl PreconditionFlag {
    fn new(name: &str, holds: bool, value: f64) -> Self {
        PreconditionFlag {
            name: name.to_string(),
            holds,
            value,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatfacRun {
    /// Flattened parameters per step, with series `loss`, `residual` and
    /// either `sigma1` or `sigma1_y`/`sigma1_z` (plus `sharpness` if probed).
    pub trajectory: Trajectory,
    pub orbit: MatfacOrbit,
    pub eta: f64,
    /// Frobenius size of the initial deviation.
    pub eps: f64,
    pub preconditions: Vec<PreconditionFlag>,
    pub divergence: Option<EosError>,
}

impl MatfacRun {
    /// Last two values of a series, larger first.
    pub fn tail_pair(&self, series: &str) -> Option<(f64, f64)> {
        let s = self.trajectory.series(series)?;
        if s.len() < 2 {
            return None;
        }
        let (a, b) = (s[s.len() - 2], s[s.len() - 1]);
        Some((a.max(b), a.min(b)))
    }

    /// Largest distance of the tail pair of `series` from the prediction.
    pub fn orbit_deviation(&self, series: &str) -> Option<f64> {
        let (hi, lo) = self.tail_pair(series)?;
        let [p_hi, p_lo] = self.orbit.predicted_top;
        Some((hi - p_hi).abs().max((lo - p_lo).abs()))
    }

    /// 10 eps + 1e-6
    pub fn orbit_envelope(&self) -> f64 {
        10.0 * self.eps + 1e-6
    }

    pub fn preconditions_hold(&self) -> bool {
        self.preconditions.iter().all(|f| f.holds)
    }
}

fn top_sigma(m: &DenseMatrix) -> f64 {
    svd(m).map(|s| s.sigma[0]).unwrap_or(f64::NAN)
}

/// Off-leading part of `m - base`: remove the component along `u v^T`.
fn off_leading(m: &DenseMatrix, base: &DenseMatrix, lead: &DenseMatrix) -> f64 {
    let d = m - base;
    let along = d.inner(lead);
    (&d - &lead.scale(along)).frobenius_norm()
}

fn reshape(data: &[f64], rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |i, j| data[i * cols + j])
}

fn beta_flag(sigma1: f64, beta: f64) -> PreconditionFlag {
    let scaled = beta * sigma1 * sigma1;
    PreconditionFlag::new(
        "beta_sigma1_sq_in_range",
        scaled > 0.0 && scaled <= MAX_BETA_SIGMA1_SQ,
        scaled,
    )
}

fn enforce(flags: &[PreconditionFlag], theorem_mode: bool, soft: &[&str]) -> Result<()> {
    if !theorem_mode {
        return Ok(());
    }
    match flags.iter().find(|f| !f.holds && !soft.contains(&f.name.as_str())) {
        Some(f) => Err(EosError::Precondition(format!(
            "theorem precondition `{}` fails (value {})",
            f.name, f.value
        ))),
        None => Ok(()),
    }
}

fn divergence_bound(sigma1: f64) -> GdOptions {
    GdOptions {
        divergence_bound: 1e6 * sigma1.max(1.0),
    }
}

/// GD on 1/4 ||X X^T - X0 X0^T||^2 from X0 + dX0 with eta = 1/sigma1^2 + beta.
pub fn gd_symmetric(
    x0: &DenseMatrix,
    dx0: &DenseMatrix,
    beta: f64,
    opts: &MatfacOptions,
) -> Result<MatfacRun> {
    if x0.shape() != dx0.shape() {
        return Err(EosError::DimensionMismatch {
            expected: x0.as_slice().len(),
            got: dx0.as_slice().len(),
        });
    }
    let s = svd(x0)?;
    let sigma1 = s.sigma[0];
    let sigma2 = s.sigma.get(1).copied().unwrap_or(0.0);
    let eta = 1.0 / (sigma1 * sigma1) + beta;
    let (u1, v1) = (s.u_col(0), s.v_col(0));
    let lead = DenseMatrix::outer(&u1, &v1);
    let projection = dx0.inner(&lead);
    let eps = dx0.frobenius_norm();

    let flags = vec![
        beta_flag(sigma1, beta),
        PreconditionFlag::new("eta_sigma2_sq_below_one", eta * sigma2 * sigma2 < 1.0, eta * sigma2 * sigma2),
        PreconditionFlag::new("leading_projection_nonzero", projection != 0.0, projection),
    ];
    enforce(&flags, opts.theorem_mode, &["leading_projection_nonzero"])?;

    let pred = predict_scaled_orbit(sigma1, beta)?;
    let orbit_point = |x: f64| vec![x0 + &lead.scale((x - 1.0) * sigma1)];
    let orbit = MatfacOrbit {
        mode: OrbitMode::Symmetric {
            delta1: pred.x_high - 1.0,
            delta2: pred.x_low - 1.0,
        },
        sigma1,
        beta,
        predicted_top: [sigma1 * pred.x_high, sigma1 * pred.x_low],
        orbit_matrices: [orbit_point(pred.x_high), orbit_point(pred.x_low)],
    };

    let (rows, cols) = x0.shape();
    let c = x0 * &x0.transpose();
    let grad = |t: &[f64]| symmetric_gradient(&reshape(t, rows, cols), &c).into_vec();
    let mut probes = vec![
        Probe::new("loss", |t: &[f64]| symmetric_loss(&reshape(t, rows, cols), &c)),
        Probe::new("sigma1", |t: &[f64]| top_sigma(&reshape(t, rows, cols))),
        Probe::new("residual", |t: &[f64]| off_leading(&reshape(t, rows, cols), x0, &lead)),
    ];
    if opts.sharpness_every > 0 {
        probes.push(sharpness_probe(&grad, opts.sharpness_seed, opts.sharpness_every));
    }
    let start = (x0 + dx0).into_vec();
    let run = run_gd_partial(grad, &start, eta, opts.steps, &probes, divergence_bound(sigma1))?;
    Ok(MatfacRun {
        trajectory: run.trajectory,
        orbit,
        eta,
        eps,
        preconditions: flags,
        divergence: run.divergence,
    })
}

/// GD on 1/2 ||Y Z - X0 X0^T||^2 from (alpha X0 + dY0, X0^T / alpha + dZ0).
pub fn gd_quasisymmetric(
    x0: &DenseMatrix,
    alpha: f64,
    dy0: &DenseMatrix,
    dz0: &DenseMatrix,
    beta: f64,
    opts: &MatfacOptions,
) -> Result<MatfacRun> {
    if !(alpha > 0.0) {
        return Err(EosError::Precondition(format!("alpha must be positive, got {alpha}")));
    }
    let (rows, cols) = x0.shape();
    if dy0.shape() != (rows, cols) || dz0.shape() != (cols, rows) {
        return Err(EosError::DimensionMismatch {
            expected: rows * cols,
            got: dy0.as_slice().len().min(dz0.as_slice().len()),
        });
    }
    let s = svd(x0)?;
    let sigma1 = s.sigma[0];
    let sigma2 = s.sigma.get(1).copied().unwrap_or(0.0);
    let eta = 1.0 / (sigma1 * sigma1) + beta;
    let (u1, v1) = (s.u_col(0), s.v_col(0));
    let lead_y = DenseMatrix::outer(&u1, &v1);
    let lead_z = lead_y.transpose();
    let y_base = x0.scale(alpha);
    let z_base = x0.transpose().scale(1.0 / alpha);
    let proj_y = dy0.inner(&lead_y);
    let proj_z = dz0.inner(&lead_z);
    let eps = dy0.frobenius_norm().hypot(dz0.frobenius_norm());

    let adm = sigma2_admissibility_value(sigma1, sigma2, alpha, eta);
    let flags = vec![
        beta_flag(sigma1, beta),
        PreconditionFlag::new("sigma2_admissible", adm <= 2.0, adm),
        PreconditionFlag::new("leading_projection_y_nonzero", proj_y != 0.0, proj_y),
        PreconditionFlag::new("leading_projection_z_nonzero", proj_z != 0.0, proj_z),
    ];
    enforce(
        &flags,
        opts.theorem_mode,
        &["leading_projection_y_nonzero", "leading_projection_z_nonzero"],
    )?;

    let pred = predict_scaled_orbit(sigma1, beta)?;
    let orbit_point = |rho: f64| {
        vec![
            &y_base + &lead_y.scale((rho - alpha) * sigma1),
            &z_base + &lead_z.scale((rho - 1.0 / alpha) * sigma1),
        ]
    };
    let orbit = MatfacOrbit {
        mode: OrbitMode::QuasiSymmetric {
            rho1: pred.x_high,
            rho2: pred.x_low,
            alpha,
        },
        sigma1,
        beta,
        predicted_top: [sigma1 * pred.x_high, sigma1 * pred.x_low],
        orbit_matrices: [orbit_point(pred.x_high), orbit_point(pred.x_low)],
    };

    let c = x0 * &x0.transpose();
    let split = rows * cols;
    let unpack = |t: &[f64]| (reshape(&t[..split], rows, cols), reshape(&t[split..], cols, rows));
    let grad = |t: &[f64]| {
        let (y, z) = unpack(t);
        let (gy, gz) = pair_gradient(&y, &z, &c);
        let mut g = gy.into_vec();
        g.extend(gz.into_vec());
        g
    };
    let mut probes = vec![
        Probe::new("loss", |t: &[f64]| {
            let (y, z) = unpack(t);
            pair_loss(&y, &z, &c)
        }),
        Probe::new("sigma1_y", |t: &[f64]| top_sigma(&unpack(t).0)),
        Probe::new("sigma1_z", |t: &[f64]| top_sigma(&unpack(t).1)),
        Probe::new("residual", |t: &[f64]| {
            let (y, z) = unpack(t);
            off_leading(&y, &y_base, &lead_y).hypot(off_leading(&z, &z_base, &lead_z))
        }),
    ];
    if opts.sharpness_every > 0 {
        probes.push(sharpness_probe(&grad, opts.sharpness_seed, opts.sharpness_every));
    }
    let mut start = (&y_base + dy0).into_vec();
    start.extend((&z_base + dz0).into_vec());
    let run = run_gd_partial(grad, &start, eta, opts.steps, &probes, divergence_bound(sigma1))?;
    Ok(MatfacRun {
        trajectory: run.trajectory,
        orbit,
        eta,
        eps,
        preconditions: flags,
        divergence: run.divergence,
    })
}

/// Square Gaussian factor whose top singular value is raised until
/// sigma2 / sigma1 <= `max_ratio`.
pub fn seeded_target(n: usize, max_ratio: f64, seed: u64) -> Result<DenseMatrix> {
    if n == 0 || !(max_ratio > 0.0 && max_ratio < 1.0) {
        return Err(EosError::Precondition(format!(
            "need n >= 1 and 0 < max_ratio < 1 (n={n}, max_ratio={max_ratio})"
        )));
    }
    let mut rng = seeded_rng(seed);
    let g = DenseMatrix::gaussian(&mut rng, n, n);
    let mut s = svd(&g)?;
    if s.sigma.len() > 1 {
        s.sigma[0] = s.sigma[0].max(s.sigma[1] / max_ratio);
    }
    Ok(s.reconstruct())
}

/// Gaussian direction scaled to Frobenius norm `eps`.
pub fn random_perturbation(rows: usize, cols: usize, eps: f64, seed: u64) -> DenseMatrix {
    let mut rng = seeded_rng(seed);
    let g = DenseMatrix::gaussian(&mut rng, rows, cols);
    let n = g.frobenius_norm();
    g.scale(eps / n)
}
