//! Generic fixed-step gradient descent, trajectory recording, numerical
//! period detection and sharpness probing through Hessian-vector products.

use crate::error::{EosError, Result};
use crate::linalg::{dot, norm2, normalize_sign};
use crate::rng::{gaussian_vec, seeded_rng};

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// Per-step read-only metric evaluated on the current iterate.
pub struct Probe<'a> {
    pub name: String,
    /// Evaluate every `every` steps; other steps record NaN.
    pub every: usize,
    eval: Box<dyn Fn(&[f64]) -> f64 + 'a>,
}

impl<'a> Probe<'a> {
    pub fn new(name: impl Into<String>, eval: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Probe {
            name: name.into(),
            every: 1,
            eval: Box::new(eval),
        }
    }

    pub fn with_cadence(mut self, every: usize) -> Self {
        self.every = every.max(1);
        self
    }

    fn sample(&self, step: usize, theta: &[f64]) -> f64 {
        if step % self.every == 0 {
            (self.eval)(theta)
        } else {
            f64::NAN
        }
    }
}

/// Time-indexed parameter vectors plus named per-step scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    /// Insertion-ordered named series, each the same length as `points`.
    pub scalars: Vec<(String, Vec<f64>)>,
    pub eta: f64,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn new(theta0: Vec<f64>, eta: f64) -> Self {
        Trajectory {
            points: vec![theta0],
            scalars: Vec::new(),
            eta,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("trajectory holds at least theta0")
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_slice())
    }

    /// Adds (or replaces) a named series. Its length must match `points`.
    pub fn set_series(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.points.len() {
            return Err(EosError::DimensionMismatch {
                expected: self.points.len(),
                got: values.len(),
            });
        }
        let name = name.into();
        match self.scalars.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = values,
            None => self.scalars.push((name, values)),
        }
        Ok(())
    }

    /// Coordinate `i` across all steps.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[i]).collect()
    }

    /// Drops the first `n` points (and the matching series entries).
    pub fn skip(&self, n: usize) -> Trajectory {
        let n = n.min(self.points.len().saturating_sub(1));
        Trajectory {
            points: self.points[n..].to_vec(),
            scalars: self
                .scalars
                .iter()
                .map(|(k, v)| (k.clone(), v[n..].to_vec()))
                .collect(),
            eta: self.eta,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    /// Any coordinate with magnitude above this counts as divergence.
    pub divergence_bound: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions {
            divergence_bound: 1e150,
        }
    }
}

/// Outcome of a run that may have stopped early: the trajectory up to the
/// last finite iterate, plus the divergence error if one occurred.
#[derive(Debug, Clone)]
pub struct GdRun {
    pub trajectory: Trajectory,
    pub divergence: Option<EosError>,
}

impl GdRun {
    pub fn into_result(self) -> Result<Trajectory> {
        match self.divergence {
            Some(err) => Err(err),
            None => Ok(self.trajectory),
        }
    }
}

/// Runs `theta <- theta - eta * grad(theta)` for `steps` steps, keeping the
/// partial trajectory when the iterate leaves the finite/bounded region.
pub fn run_gd_partial<G>(
    grad: G,
    theta0: &[f64],
    eta: f64,
    steps: usize,
    probes: &[Probe<'_>],
    options: GdOptions,
) -> Result<GdRun>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let dim = theta0.len();
    let mut traj = Trajectory::new(theta0.to_vec(), eta);
    let mut series: Vec<Vec<f64>> = probes
        .iter()
        .map(|p| {
            let mut v = Vec::with_capacity(steps + 1);
            v.push(p.sample(0, theta0));
            v
        })
        .collect();
    traj.points.reserve(steps);

    let mut theta = theta0.to_vec();
    let mut divergence = None;
    for step in 1..=steps {
        let g = grad(&theta);
        if g.len() != dim {
            return Err(EosError::DimensionMismatch {
                expected: dim,
                got: g.len(),
            });
        }
        let next: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect();
        if next
            .iter()
            .any(|x| !x.is_finite() || x.abs() > options.divergence_bound)
        {
            divergence = Some(EosError::Divergence {
                last_finite_step: step - 1,
                last_state: theta.clone(),
            });
            break;
        }
        for (s, p) in series.iter_mut().zip(probes) {
            s.push(p.sample(step, &next));
        }
        traj.points.push(next.clone());
        theta = next;
    }
    for (p, s) in probes.iter().zip(series) {
        traj.scalars.push((p.name.clone(), s));
    }
    Ok(GdRun {
        trajectory: traj,
        divergence,
    })
}

/// Fixed-step GD; divergence is an error.
pub fn run_gd<G>(
    grad: G,
    theta0: &[f64],
    eta: f64,
    steps: usize,
    probes: &[Probe<'_>],
) -> Result<Trajectory>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    run_gd_partial(grad, theta0, eta, steps, probes, GdOptions::default())?.into_result()
}

/// Detected periodic tail of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitReport {
    /// Smallest period within tolerance; `None` when nothing qualified.
    pub period: Option<usize>,
    /// The last `period` points, in time order.
    pub orbit_points: Vec<Vec<f64>>,
    pub residual: f64,
    /// Earliest step from which the periodicity holds through the end.
    pub settled_at: Option<usize>,
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Searches p = 1..=max_period for the first one with
/// max over the tail of ||theta_t - theta_{t+p}||_inf <= tol.
pub fn detect_period_points(
    points: &[Vec<f64>],
    max_period: usize,
    tol: f64,
    tail_window: usize,
) -> Result<OrbitReport> {
    let needed = tail_window + max_period;
    if points.len() < needed || max_period == 0 {
        return Err(EosError::InsufficientLength {
            needed,
            have: points.len(),
        });
    }
    let n = points.len();
    let mut best_residual = f64::INFINITY;
    for p in 1..=max_period {
        let start = n - tail_window - p;
        let residual = (start..n - p)
            .map(|t| inf_dist(&points[t], &points[t + p]))
            .fold(0.0, f64::max);
        best_residual = best_residual.min(residual);
        if residual <= tol {
            let mut settled = start;
            while settled > 0 && inf_dist(&points[settled - 1], &points[settled - 1 + p]) <= tol {
                settled -= 1;
            }
            return Ok(OrbitReport {
                period: Some(p),
                orbit_points: points[n - p..].to_vec(),
                residual,
                settled_at: Some(settled),
            });
        }
    }
    Ok(OrbitReport {
        period: None,
        orbit_points: Vec::new(),
        residual: best_residual,
        settled_at: None,
    })
}

pub fn detect_period(
    traj: &Trajectory,
    max_period: usize,
    tol: f64,
    tail_window: usize,
) -> Result<OrbitReport> {
    detect_period_points(&traj.points, max_period, tol, tail_window)
}

/// cbrt(machine epsilon) * max(1, ||theta||).
pub fn default_fd_step(theta: &[f64]) -> f64 {
    f64::EPSILON.cbrt() * norm2(theta).max(1.0)
}

/// Central-difference Hessian-vector product
/// (grad(theta + h v) - grad(theta - h v)) / 2h.
///
/// The difference is taken along v/||v|| and rescaled, so `v` need not be unit.
pub fn hessian_vector_product<G>(grad: &G, theta: &[f64], v: &[f64], h: f64) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let scale = norm2(v);
    if scale == 0.0 {
        return vec![0.0; theta.len()];
    }
    let plus: Vec<f64> = theta
        .iter()
        .zip(v)
        .map(|(t, vi)| t + h * vi / scale)
        .collect();
    let minus: Vec<f64> = theta
        .iter()
        .zip(v)
        .map(|(t, vi)| t - h * vi / scale)
        .collect();
    let gp = grad(&plus);
    let gm = grad(&minus);
    gp.iter()
        .zip(&gm)
        .map(|(a, b)| scale * (a - b) / (2.0 * h))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopEigen {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iters: usize,
}

/// Power iteration on finite-difference HVPs from a seeded start.
///
/// Returns the Rayleigh quotient of the dominant-magnitude eigenpair. Stops
/// once the quotient's relative change drops to `tol`.
pub fn top_eigenvalue<G>(
    grad: &G,
    theta: &[f64],
    tol: f64,
    max_iters: usize,
    seed: u64,
) -> Result<TopEigen>
where
    G: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let dim = theta.len();
    let h = default_fd_step(theta);
    let mut rng = seeded_rng(seed);
    let mut v = gaussian_vec(&mut rng, dim);
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut lambda = f64::NAN;
    for iter in 1..=max_iters {
        let hv = hessian_vector_product(grad, theta, &v, h);
        let rayleigh = dot(&v, &hv);
        let hn = norm2(&hv);
        if hn == 0.0 {
            // v sits in the null space; the Hessian restricted to it is zero.
            return Ok(TopEigen {
                lambda: 0.0,
                vector: normalize_sign(v),
                iters: iter,
            });
        }
        let converged = lambda.is_finite()
            && (rayleigh - lambda).abs() <= tol * rayleigh.abs().max(f64::MIN_POSITIVE);
        lambda = rayleigh;
        if converged {
            return Ok(TopEigen {
                lambda,
                vector: normalize_sign(v),
                iters: iter,
            });
        }
        v = hv.into_iter().map(|x| x / hn).collect();
    }
    Err(EosError::NonConvergence {
        iters: max_iters,
        last_estimate: lambda,
    })
}

/// Sharpness probe: top Hessian eigenvalue of `grad` at each probed iterate.
pub fn sharpness_probe<'a, G>(grad: &'a G, seed: u64, every: usize) -> Probe<'a>
where
    G: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    Probe::new("sharpness", move |theta: &[f64]| {
        top_eigenvalue(grad, theta, 1e-9, 5_000, seed)
            .map(|e| e.lambda)
            .unwrap_or_else(|e| match e {
                EosError::NonConvergence { last_estimate, .. } => last_estimate,
                _ => f64::NAN,
            })
    })
    .with_cadence(every)
}

/// Probe cadence for sharpness: every step up to 200 parameters, every 10 above.
pub fn default_sharpness_cadence(dim: usize) -> usize {
    if dim <= 200 {
        1
    } else {
        10
    }
}
