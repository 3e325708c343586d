//! Two-layer single-neuron ReLU network `v * relu(w . x)` learning the teacher
//! `relu(e1 . x)` from inputs uniform on the unit sphere.
//!
//! Under the population loss the weight `w` never leaves the plane spanned by
//! the teacher and `w(0)`, so the dynamics are tracked in reduced coordinates
//! `(v, w_x, w_y)`: the projection on the teacher and the (non-negative)
//! magnitude of the orthogonal residual. The step size is `eta = K d`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dynamics::{run_gd_partial, GdOptions, GdRun, Probe, Trajectory};
use crate::error::{EosError, Result};
use crate::rng::{seeded_rng, unit_sphere};

/// Contraction factor per step of the late-phase decay envelope is 1 - 0.030 K.
pub const DECAY_RATE_COEFF: f64 = 0.030;
/// Base of the logarithm bounding the length of the growth stage.
pub const STAGE_ONE_GROWTH: f64 = 2.56;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeuronState {
    pub v: f64,
    pub w_x: f64,
    /// Always >= 0.
    pub w_y: f64,
}

impl NeuronState {
    pub fn new(v: f64, w_x: f64, w_y: f64) -> Self {
        NeuronState {
            v,
            w_x,
            w_y: w_y.abs(),
        }
    }

    pub fn w_norm_sq(&self) -> f64 {
        self.w_x * self.w_x + self.w_y * self.w_y
    }

    pub fn w_norm(&self) -> f64 {
        self.w_norm_sq().sqrt()
    }

    /// Angle to the teacher; pi/2 exactly when w_x = 0 < w_y.
    pub fn alpha(&self) -> f64 {
        self.w_y.atan2(self.w_x)
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.v, self.w_x, self.w_y]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        NeuronState::new(p[0], p[1], p[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeuronConfig {
    pub d: usize,
    pub k: f64,
    /// v(0) = ||w(0)|| = eps
    pub eps: f64,
    /// Angle between w(0) and the teacher, in [0, pi/2].
    pub init_angle: f64,
    /// Enforce K in (1, 1.1] and eps in (0, 0.1].
    pub theorem_mode: bool,
}

impl NeuronConfig {
    pub fn eta(&self) -> f64 {
        self.k * self.d as f64
    }

    pub fn initial_state(&self) -> NeuronState {
        NeuronState::new(
            self.eps,
            self.eps * self.init_angle.cos(),
            self.eps * self.init_angle.sin(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(EosError::Precondition(format!("d must be >= 2, got {}", self.d)));
        }
        if !(0.0..=PI / 2.0).contains(&self.init_angle) {
            return Err(EosError::Precondition(format!(
                "init_angle must lie in [0, pi/2], got {}",
                self.init_angle
            )));
        }
        if !(self.eps > 0.0) || !(self.k > 0.0) {
            return Err(EosError::Precondition("eps and K must be positive".into()));
        }
        if self.theorem_mode {
            if !(self.k > 1.0 && self.k <= 1.1) {
                return Err(EosError::Precondition(format!(
                    "theorem mode needs 1 < K <= 1.1, got {}",
                    self.k
                )));
            }
            if self.eps > 0.10 {
                return Err(EosError::Precondition(format!(
                    "theorem mode needs 0 < eps <= 0.1, got {}",
                    self.eps
                )));
            }
        }
        Ok(())
    }
}

/// (dv, dw_x, dw_y) of one population GD step with eta = K d.
pub fn population_deltas(s: &NeuronState, k: f64) -> Result<(f64, f64, f64)> {
    let norm_sq = s.w_norm_sq();
    if norm_sq == 0.0 {
        return Err(EosError::Precondition(
            "w = 0 is a non-differentiable point of the population loss".into(),
        ));
    }
    let alpha = s.alpha();
    let cross = s.w_x * s.w_y / norm_sq;
    let bracket = (1.0 - s.v * s.w_x) - (alpha - cross) / PI;
    let radial = -s.v + s.w_y / (PI * norm_sq);
    let dv = k * s.w_x * bracket + k * s.w_y * s.w_y * radial;
    let dwx = k * s.v * bracket;
    let dwy = s.w_y * k * s.v * radial;
    Ok((dv, dwx, dwy))
}

/// One exact population step in reduced coordinates.
pub fn population_step(s: &NeuronState, k: f64) -> Result<NeuronState> {
    let (dv, dwx, dwy) = population_deltas(s, k)?;
    let next = NeuronState {
        v: s.v + dv,
        w_x: s.w_x + dwx,
        w_y: (s.w_y + dwy).abs(),
    };
    if !(next.v.is_finite() && next.w_x.is_finite() && next.w_y.is_finite()) {
        return Err(EosError::Divergence {
            last_finite_step: 0,
            last_state: s.as_vec(),
        });
    }
    Ok(next)
}

/// sin(a) + (pi - a) cos(a): the angular kernel of two ReLU features.
fn relu_kernel(alpha: f64) -> f64 {
    alpha.sin() + (PI - alpha) * alpha.cos()
}

/// E_x (v relu(w.x) - relu(e1.x))^2 for x uniform on S^{d-1}.
pub fn population_loss(v: f64, w_norm: f64, alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    (v * v * w_norm * w_norm - 2.0 / PI * v * w_norm * relu_kernel(alpha) + 1.0) / (2.0 * d)
}

fn split_ambient(theta: &[f64]) -> (f64, &[f64], f64, f64, f64) {
    let v = theta[0];
    let w = &theta[1..];
    let w_x = w[0];
    let w_y = w[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    let alpha = w_y.atan2(w_x);
    (v, w, w_x, w_y, alpha)
}

/// Population loss at ambient parameters theta = (v, w_1..w_d), teacher e1.
pub fn population_loss_ambient(theta: &[f64]) -> f64 {
    let (v, w, _, _, alpha) = split_ambient(theta);
    let w_norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    population_loss(v, w_norm, alpha, w.len())
}

/// Closed-form population gradient in ambient coordinates.
pub fn population_gradient_ambient(theta: &[f64]) -> Vec<f64> {
    let (v, w, _, w_y, alpha) = split_ambient(theta);
    let d = w.len() as f64;
    let w_norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut g = Vec::with_capacity(theta.len());
    g.push((v * w_norm * w_norm - w_norm / PI * relu_kernel(alpha)) / d);
    let along = v / PI * (PI - alpha + 0.5 * (2.0 * alpha).sin());
    let across = v / PI * (0.5 - 0.5 * (2.0 * alpha).cos());
    for (i, wi) in w.iter().enumerate() {
        let mut gi = v * v * wi;
        if i == 0 {
            gi -= along;
        } else if w_y > 0.0 {
            gi -= across * wi / w_y;
        }
        g.push(gi / d);
    }
    g
}

/// Reduced coordinates of an ambient parameter vector.
pub fn reduce_ambient(theta: &[f64]) -> NeuronState {
    let (v, _, w_x, w_y, _) = split_ambient(theta);
    NeuronState::new(v, w_x, w_y)
}

/// ceil(log_2.56(1.35 / (pi beta^2))) with beta = (1 + 1.1/pi) eps.
pub fn stage_one_bound(eps: f64) -> (u32, f64) {
    let beta = (1.0 + 1.1 / PI) * eps;
    let t1 = ((1.35 / (PI * beta * beta)).ln() / STAGE_ONE_GROWTH.ln()).ceil();
    (t1.max(0.0) as u32, beta)
}

/// 0.1 (1 - 0.030 K)^(t - T1 - 4), meaningful for t >= T1 + 4.
pub fn decay_envelope(t: usize, t1: u32, k: f64) -> f64 {
    let exponent = t as f64 - f64::from(t1) - 4.0;
    0.1 * (1.0 - DECAY_RATE_COEFF * k).powf(exponent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronRun {
    /// Points are (v, w_x, w_y); series `loss`.
    pub trajectory: Trajectory,
    /// First step at which v w_x > w_x w_y / (pi ||w||^2), i.e. w_y stops growing.
    pub stage_boundary: Option<usize>,
    pub t1_bound: u32,
    pub beta: f64,
    /// Set when an iterate became non-finite; the trajectory stops before it.
    pub divergence: Option<EosError>,
}

impl NeuronRun {
    pub fn states(&self) -> impl Iterator<Item = NeuronState> + '_ {
        self.trajectory.points.iter().map(|p| NeuronState::from_slice(p))
    }
}

fn in_growth_stage(s: &NeuronState) -> bool {
    let norm_sq = s.w_norm_sq();
    norm_sq > 0.0 && s.v * s.w_x <= s.w_x * s.w_y / (PI * norm_sq)
}

/// Population GD in reduced coordinates from the configured initialization.
pub fn simulate_neuron(cfg: &NeuronConfig, steps: usize) -> Result<NeuronRun> {
    cfg.validate()?;
    let mut state = cfg.initial_state();
    let mut traj = Trajectory::new(state.as_vec(), cfg.eta());
    let mut loss = vec![population_loss(state.v, state.w_norm(), state.alpha(), cfg.d)];
    let mut stage_boundary = (!in_growth_stage(&state)).then_some(0);
    let mut divergence = None;
    for step in 1..=steps {
        state = match population_step(&state, cfg.k) {
            Ok(next) => next,
            Err(EosError::Divergence { last_state, .. }) => {
                divergence = Some(EosError::Divergence {
                    last_finite_step: step - 1,
                    last_state,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        if stage_boundary.is_none() && !in_growth_stage(&state) {
            stage_boundary = Some(step);
        }
        traj.points.push(state.as_vec());
        loss.push(population_loss(state.v, state.w_norm(), state.alpha(), cfg.d));
    }
    traj.set_series("loss", loss)?;
    let (t1_bound, beta) = stage_one_bound(cfg.eps);
    Ok(NeuronRun {
        trajectory: traj,
        stage_boundary,
        t1_bound,
        beta,
        divergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayCheck {
    pub holds: bool,
    pub first_violation: Option<usize>,
    /// max over checked steps of w_y / envelope
    pub worst_ratio: f64,
    pub steps_checked: usize,
}

/// Checks w_y(t) < envelope(t) for every t >= T1 + 4 in the run.
pub fn check_decay_envelope(run: &NeuronRun, k: f64) -> DecayCheck {
    let start = run.t1_bound as usize + 4;
    let mut worst: f64 = 0.0;
    let mut first_violation = None;
    let mut checked = 0;
    for (t, s) in run.states().enumerate().skip(start) {
        let env = decay_envelope(t, run.t1_bound, k);
        if env <= 0.0 {
            break;
        }
        checked += 1;
        worst = worst.max(s.w_y / env);
        if !(s.w_y < env) && first_violation.is_none() {
            first_violation = Some(t);
        }
    }
    DecayCheck {
        holds: first_violation.is_none(),
        first_violation,
        worst_ratio: worst,
        steps_checked: checked,
    }
}

/// Top Hessian eigenvalue (||w||^2 + v^2) / d on the minimum manifold v w = e1.
pub fn neuron_hessian_top(v: f64, w_norm: f64, d: usize) -> Result<f64> {
    if (v * w_norm - 1.0).abs() > 1e-9 {
        return Err(EosError::Precondition(format!(
            "v * ||w|| = {} is off the minimum manifold; estimate the sharpness with dynamics::top_eigenvalue",
            v * w_norm
        )));
    }
    Ok((w_norm * w_norm + v * v) / d as f64)
}

/// Finite-sample squared loss (1/n) sum_i (v relu(w.x_i) - relu(x_i[0]))^2.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalNeuron {
    pub d: usize,
    /// Row-major n x d, fixed for the lifetime of the objective.
    samples: Vec<f64>,
}

impl EmpiricalNeuron {
    pub fn sample(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d < 2 {
            return Err(EosError::Precondition(format!(
                "need n >= 1 and d >= 2 (n={n}, d={d})"
            )));
        }
        let mut rng = seeded_rng(seed);
        let mut samples = Vec::with_capacity(n * d);
        for _ in 0..n {
            samples.extend(unit_sphere(&mut rng, d));
        }
        Ok(EmpiricalNeuron { d, samples })
    }

    pub fn n(&self) -> usize {
        self.samples.len() / self.d
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.d)
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let (v, w) = (theta[0], &theta[1..]);
        let total: f64 = self
            .rows()
            .map(|x| {
                let a: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
                let r = v * a.max(0.0) - x[0].max(0.0);
                r * r
            })
            .sum();
        total / self.n() as f64
    }

    /// Summed in sample order, so the result is bit-reproducible.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let (v, w) = (theta[0], &theta[1..]);
        let mut g = vec![0.0; theta.len()];
        for x in self.rows() {
            let a: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
            if a <= 0.0 {
                // the student is silent; only the (constant) teacher term remains
                continue;
            }
            let r = v * a - x[0].max(0.0);
            g[0] += 2.0 * r * a;
            for (gi, xi) in g[1..].iter_mut().zip(x) {
                *gi += 2.0 * r * v * xi;
            }
        }
        let n = self.n() as f64;
        g.iter_mut().for_each(|gi| *gi /= n);
        g
    }
}

/// Full-ambient GD on the empirical loss. Points are (v, w_1..w_d); series
/// `v`, `w_x`, `w_y`, `loss` carry the reduction and the empirical loss.
pub fn empirical_neuron_gd(
    objective: &EmpiricalNeuron,
    eta: f64,
    theta0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    empirical_neuron_gd_partial(objective, eta, theta0, steps)?.into_result()
}

/// Like [`empirical_neuron_gd`] but keeps the prefix before a divergence.
pub fn empirical_neuron_gd_partial(
    objective: &EmpiricalNeuron,
    eta: f64,
    theta0: &[f64],
    steps: usize,
) -> Result<GdRun> {
    if theta0.len() != objective.d + 1 {
        return Err(EosError::DimensionMismatch {
            expected: objective.d + 1,
            got: theta0.len(),
        });
    }
    let probes = [
        Probe::new("v", |t: &[f64]| t[0]),
        Probe::new("w_x", |t: &[f64]| reduce_ambient(t).w_x),
        Probe::new("w_y", |t: &[f64]| reduce_ambient(t).w_y),
        Probe::new("loss", |t: &[f64]| objective.loss(t)),
    ];
    run_gd_partial(
        |t| objective.gradient(t),
        theta0,
        eta,
        steps,
        &probes,
        GdOptions::default(),
    )
}

/// Ambient parameters (v, w) for a reduced state in the (e1, e2) plane.
pub fn ambient_from_state(s: &NeuronState, d: usize) -> Vec<f64> {
    let mut theta = vec![0.0; d + 1];
    theta[0] = s.v;
    theta[1] = s.w_x;
    theta[2] = s.w_y;
    theta
}
