use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::Serialize;
use serde_json::json;

use super::{Check, DetectedOrbit, ExperimentConfig, ExperimentKind, Table};
use crate::dynamics::{
    default_sharpness_cadence, detect_period_points, run_gd_partial, sharpness_probe, GdOptions,
    GdRun, Probe, Trajectory,
};
use crate::error::{EosError, Result};
use crate::factor2d::{self, Factor2DConfig};
use crate::matfac::{self, MatfacOptions, MatfacRun};
use crate::neuron::{self, EmpiricalNeuron, NeuronConfig};
use crate::scalar1d::{
    check_condition_higher_order, check_condition_third_order, check_l2_condition, eta_window,
    gd_1d_partial, solve_period2, HigherOrderClass, OrbitStability, ScalarFunction,
};

/// Everything a runner produces besides bookkeeping.
#[derive(Debug, Default)]
pub(super) struct Report {
    pub detected: Option<DetectedOrbit>,
    pub predicted: Option<serde_json::Value>,
    pub max_deviation: Option<f64>,
    pub divergence: Option<String>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub table: Table,
}

impl Report {
    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    fn record_divergence(&mut self, divergence: Option<&EosError>) {
        self.divergence = divergence.map(|e| e.to_string());
        let detail = self.divergence.clone().unwrap_or_else(|| "all iterates finite".into());
        self.check("no_divergence", divergence.is_none(), detail);
    }
}

pub(super) fn dispatch(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment {
        ExperimentKind::Oscillate1D => oscillate1d(cfg),
        ExperimentKind::Balance2D => balance2d(cfg),
        ExperimentKind::Neuron => neuron_population(cfg),
        ExperimentKind::NeuronEmpirical => neuron_empirical(cfg),
        ExperimentKind::MatfacSym => matfac_run(cfg, false),
        ExperimentKind::MatfacQuasi => matfac_run(cfg, true),
        ExperimentKind::ConditionCheck => condition_check(cfg),
        ExperimentKind::OrbitPredict => orbit_predict(cfg),
        ExperimentKind::SharpnessTrace => sharpness_trace(cfg),
    }
}

/// Step column, coordinates, then the named series that exist, in order.
fn trajectory_table(traj: &Trajectory, coords: &[String], series: &[&str]) -> Table {
    let mut table = Table::default();
    table.push_num("step", (0..traj.len()).map(|t| t as f64).collect());
    for (i, name) in coords.iter().enumerate() {
        table.push_num(name, traj.coordinate(i));
    }
    for name in series {
        if let Some(s) = traj.series(name) {
            table.push_num(name, s.to_vec());
        }
    }
    table
}

fn detect(cfg: &ExperimentConfig, points: &[Vec<f64>]) -> Option<DetectedOrbit> {
    detect_period_points(
        points,
        cfg.int("max_period"),
        cfg.num("period_tol"),
        cfg.int("tail_window"),
    )
    .ok()
    .map(DetectedOrbit::from)
}

/// Largest |coordinate - predicted| over the first `coords` coordinates of a
/// detected 2-cycle whose points are matched to (low, high) by the first one.
fn two_cycle_deviation(orbit: &DetectedOrbit, low: f64, high: f64, coords: usize) -> Option<f64> {
    if orbit.period != Some(2) {
        return None;
    }
    let mut pts = orbit.points.clone();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let dev = pts[0]
        .iter()
        .take(coords)
        .map(|c| (c - low).abs())
        .chain(pts[1].iter().take(coords).map(|c| (c - high).abs()))
        .fold(0.0, f64::max);
    Some(dev)
}

fn prediction_json(mu: f64, eta: f64) -> (serde_json::Value, Option<(f64, f64, OrbitStability)>) {
    match solve_period2(mu, eta) {
        Ok(p) => (
            serde_json::to_value(p).expect("prediction serializes"),
            Some((p.x_low, p.x_high, p.stability)),
        ),
        Err(EosError::NoOrbit { eta_mu, fixed_point }) => (
            json!({ "no_orbit": true, "eta_mu": eta_mu, "fixed_point": fixed_point }),
            None,
        ),
        Err(e) => (json!({ "error": e.to_string() }), None),
    }
}

const ORBIT_TOL: f64 = 1e-8;

fn convergent(stability: OrbitStability) -> bool {
    matches!(
        stability,
        OrbitStability::ConvergentMonotone | OrbitStability::ConvergentOscillating
    )
}

fn check_orbit(
    report: &mut Report,
    prediction: Option<(f64, f64, OrbitStability)>,
    coords: usize,
    enabled: bool,
) {
    let Some((low, high, stability)) = prediction else {
        return;
    };
    let Some(orbit) = report.detected.clone() else {
        return;
    };
    let dev = two_cycle_deviation(&orbit, low, high, coords);
    report.max_deviation = dev;
    if enabled && convergent(stability) {
        report.check(
            "period_is_2",
            orbit.period == Some(2),
            format!("detected period {:?}", orbit.period),
        );
        report.check(
            "orbit_matches_prediction",
            dev.is_some_and(|d| d <= ORBIT_TOL),
            format!("max deviation {dev:?}, tolerance {ORBIT_TOL:e}"),
        );
    }
}

fn oscillate1d(cfg: &ExperimentConfig) -> Result<Report> {
    let (mu, eta) = (cfg.num("mu"), cfg.num("eta"));
    let f = ScalarFunction::quartic(mu);
    let GdRun {
        mut trajectory,
        divergence,
    } = gd_1d_partial(&f, cfg.num("x0"), eta, cfg.int("steps"))?;
    let sharp = trajectory.points.iter().map(|p| 3.0 * p[0] * p[0] - mu).collect();
    trajectory.set_series("sharpness", sharp)?;

    let mut report = Report {
        table: trajectory_table(&trajectory, &["x".into()], &["loss", "sharpness"]),
        ..Default::default()
    };
    report.record_divergence(divergence.as_ref());
    if divergence.is_none() {
        report.detected = detect(cfg, &trajectory.points);
    }
    let (pred, roots) = prediction_json(mu, eta);
    report.predicted = Some(pred);
    report.metric("eta_mu", eta * mu);
    check_orbit(&mut report, roots, 1, divergence.is_none());
    Ok(report)
}

fn balance2d(cfg: &ExperimentConfig) -> Result<Report> {
    let fc = Factor2DConfig {
        mu: cfg.num("mu"),
        k: cfg.num("k"),
        x0: cfg.num("x0"),
        y0: cfg.num("y0"),
        steps: cfg.int("steps"),
    };
    let theorem_mode = cfg.flag("theorem_mode");
    let GdRun {
        mut trajectory,
        divergence,
    } = factor2d::gd_2d_partial(&fc)?;
    let sharp = trajectory
        .points
        .iter()
        .map(|p| factor2d::hessian_2d(p[0], p[1], fc.mu).eig.0)
        .collect();
    trajectory.set_series("sharpness", sharp)?;

    let mut report = Report {
        table: trajectory_table(&trajectory, &["x".into(), "y".into()], &["loss", "sharpness"]),
        ..Default::default()
    };
    report.record_divergence(divergence.as_ref());

    let positivity = factor2d::positivity_condition(fc.x0, fc.y0, fc.mu, fc.k);
    let positive = match &positivity {
        Ok(p) => {
            report.metric("positivity_p", p.p);
            report.metric("positivity_lhs", p.lhs);
            p.holds
        }
        Err(_) => false,
    };
    report.metric("positivity_holds", if positive { 1.0 } else { 0.0 });

    let res = factor2d::recursion_residuals(&trajectory, fc.mu);
    report.metric("recursion_difference_residual", res.difference);
    report.metric("recursion_product_residual", res.product);
    report.check(
        "difference_recursion",
        res.difference <= 1e-12,
        format!("max scaled residual {:e}", res.difference),
    );
    report.check(
        "product_recursion",
        res.product <= 1e-12,
        format!("max scaled residual {:e}", res.product),
    );

    let last = trajectory.last().to_vec();
    let final_gap = (last[0] - last[1]).abs();
    report.metric("final_gap", final_gap);
    let guaranteed = theorem_mode && positive && divergence.is_none();
    if guaranteed {
        let gaps = factor2d::balance_gap_series(&trajectory, fc.mu);
        let scale = trajectory
            .points
            .iter()
            .flat_map(|p| p.iter().map(|c| c.abs()))
            .fold(0.0, f64::max);
        let floor = factor2d::gap_noise_floor(scale);
        report.check(
            "gap_strictly_decreasing",
            factor2d::gap_strictly_decreasing(&gaps, floor),
            format!("{} steps with xy > mu, round-off floor {floor:e}", gaps.len()),
        );
        report.check("final_gap_below_1e-8", final_gap < 1e-8, format!("|x - y| = {final_gap:e}"));
    }
    if divergence.is_none() {
        report.detected = detect(cfg, &trajectory.points);
    }
    let (pred, roots) = prediction_json(fc.mu, fc.eta());
    report.predicted = Some(pred);
    check_orbit(&mut report, roots, 2, guaranteed);
    Ok(report)
}

fn neuron_population(cfg: &ExperimentConfig) -> Result<Report> {
    let nc = NeuronConfig {
        d: cfg.int("d"),
        k: cfg.num("k"),
        eps: cfg.num("eps"),
        init_angle: cfg.num("init_angle"),
        theorem_mode: cfg.flag("theorem_mode"),
    };
    let run = neuron::simulate_neuron(&nc, cfg.int("steps"))?;
    let coords: Vec<String> = ["v", "w_x", "w_y"].map(String::from).to_vec();
    let mut report = Report {
        table: trajectory_table(&run.trajectory, &coords, &["loss"]),
        ..Default::default()
    };
    report.record_divergence(run.divergence.as_ref());
    report.metric("t1_bound", f64::from(run.t1_bound));
    report.metric("beta", run.beta);
    report.metric("eta", nc.eta());
    report.metric(
        "stage_boundary",
        run.stage_boundary.map_or(f64::NAN, |t| t as f64),
    );
    if nc.theorem_mode {
        let decay = neuron::check_decay_envelope(&run, nc.k);
        report.metric("decay_worst_ratio", decay.worst_ratio);
        report.check(
            "decay_envelope",
            decay.holds && decay.steps_checked > 0,
            format!(
                "{} steps checked from t = T1 + 4 = {}, worst w_y/envelope {:.6}, first violation {:?}",
                decay.steps_checked,
                run.t1_bound + 4,
                decay.worst_ratio,
                decay.first_violation
            ),
        );
    }
    if run.divergence.is_none() {
        report.detected = detect(cfg, &run.trajectory.points);
    }
    let (pred, roots) = prediction_json(1.0, nc.k);
    report.predicted = Some(pred);
    check_orbit(&mut report, roots, 2, nc.theorem_mode && run.divergence.is_none());
    Ok(report)
}

/// Stage ordering of an empirical run: the step from which w_y stays below
/// `floor_factor` times its settled level versus the first step with
/// |v - w_x| below `gap_threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageOrdering {
    /// max of w_y over the trailing `tail_fraction` of the run
    pub noise_floor: f64,
    pub wy_settled_at: Option<usize>,
    pub imbalance_below_at: Option<usize>,
    pub holds: bool,
}

pub fn stage_ordering(
    v: &[f64],
    w_x: &[f64],
    w_y: &[f64],
    gap_threshold: f64,
    floor_factor: f64,
    tail_fraction: f64,
) -> StageOrdering {
    let n = w_y.len();
    let tail = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n.max(1));
    let noise_floor = w_y[n - tail..].iter().copied().fold(0.0, f64::max);
    let threshold = floor_factor * noise_floor;
    let wy_settled_at = match w_y.iter().rposition(|w| *w >= threshold) {
        None => Some(0),
        Some(t) if t + 1 < n => Some(t + 1),
        Some(_) => None,
    };
    let imbalance_below_at = v
        .iter()
        .zip(w_x)
        .position(|(a, b)| (a - b).abs() < gap_threshold);
    let holds = match (wy_settled_at, imbalance_below_at) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        (None, _) => false,
    };
    StageOrdering {
        noise_floor,
        wy_settled_at,
        imbalance_below_at,
        holds,
    }
}

fn neuron_empirical(cfg: &ExperimentConfig) -> Result<Report> {
    let (n, d, eta) = (cfg.int("n"), cfg.int("d"), cfg.num("eta"));
    let objective = EmpiricalNeuron::sample(n, d, cfg.seed)?;
    let mut theta0 = vec![0.0; d + 1];
    theta0[0] = cfg.num("v0");
    theta0[1] = cfg.num("wx0");
    theta0[2] = cfg.num("wy0");
    let run = neuron::empirical_neuron_gd_partial(&objective, eta, &theta0, cfg.int("steps"))?;
    let traj = &run.trajectory;
    let mut coords = vec!["v".to_string()];
    coords.extend((1..=d).map(|i| format!("w_{i}")));
    let mut report = Report {
        table: trajectory_table(traj, &coords, &["loss", "w_x", "w_y"]),
        ..Default::default()
    };
    report.record_divergence(run.divergence.as_ref());

    let series = |name: &str| traj.series(name).expect("probe recorded").to_vec();
    let ordering = stage_ordering(
        &series("v"),
        &series("w_x"),
        &series("w_y"),
        cfg.num("gap_threshold"),
        cfg.num("floor_factor"),
        cfg.num("tail_fraction"),
    );
    let as_metric = |t: Option<usize>| t.map_or(f64::NAN, |t| t as f64);
    report.metric("noise_floor", ordering.noise_floor);
    report.metric("wy_settled_at", as_metric(ordering.wy_settled_at));
    report.metric("imbalance_below_at", as_metric(ordering.imbalance_below_at));
    report.check(
        "wy_settles_before_imbalance",
        ordering.holds && run.divergence.is_none(),
        format!(
            "w_y < {} x floor {:e} at step {:?}; |v - w_x| < {} at step {:?}",
            cfg.num("floor_factor"),
            ordering.noise_floor,
            ordering.wy_settled_at,
            cfg.num("gap_threshold"),
            ordering.imbalance_below_at
        ),
    );
    if run.divergence.is_none() {
        let reduced: Vec<Vec<f64>> = traj
            .points
            .iter()
            .map(|p| neuron::reduce_ambient(p).as_vec())
            .collect();
        report.detected = detect(cfg, &reduced);
    }
    let (pred, roots) = prediction_json(1.0, eta / d as f64);
    report.predicted = Some(pred);
    // sample noise moves the orbit away from the population prediction
    check_orbit(&mut report, roots, 2, false);
    Ok(report)
}

fn matrix_coords(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{prefix}_{i}_{j}")))
        .collect()
}

fn matfac_run(cfg: &ExperimentConfig, quasi: bool) -> Result<Report> {
    let n = cfg.int("n");
    let x0 = matfac::seeded_target(n, cfg.num("gap_ratio"), cfg.seed)?;
    let spectrum = matfac::svd(&x0)?;
    let sigma1 = spectrum.sigma[0];
    let beta = matfac::beta_for_eta_factor(sigma1, cfg.num("eta_factor"));
    let eps = cfg.num("eps_fraction") * sigma1;
    let opts = MatfacOptions {
        steps: cfg.int("steps"),
        theorem_mode: cfg.flag("theorem_mode"),
        sharpness_every: cfg.int("sharpness_every"),
        sharpness_seed: cfg.seed,
    };
    let (run, coords, tops): (MatfacRun, Vec<String>, Vec<&str>) = if quasi {
        let alpha = cfg.num("alpha");
        let part = eps / 2f64.sqrt();
        let dy = matfac::random_perturbation(n, n, part, cfg.seed.wrapping_add(2));
        let dz = matfac::random_perturbation(n, n, part, cfg.seed.wrapping_add(3));
        let run = matfac::gd_quasisymmetric(&x0, alpha, &dy, &dz, beta, &opts)?;
        let mut coords = matrix_coords("y", n, n);
        coords.extend(matrix_coords("z", n, n));
        (run, coords, vec!["sigma1_y", "sigma1_z"])
    } else {
        let dx = matfac::random_perturbation(n, n, eps, cfg.seed.wrapping_add(1));
        let run = matfac::gd_symmetric(&x0, &dx, beta, &opts)?;
        (run, matrix_coords("x", n, n), vec!["sigma1"])
    };

    let mut series = vec!["loss", "sharpness"];
    series.extend(&tops);
    series.push("residual");
    let mut report = Report {
        table: trajectory_table(&run.trajectory, &coords, &series),
        ..Default::default()
    };
    report.record_divergence(run.divergence.as_ref());
    for flag in &run.preconditions {
        report.check(
            &format!("precondition_{}", flag.name),
            flag.holds,
            format!("value {}", flag.value),
        );
    }
    report.metric("sigma1", sigma1);
    report.metric("sigma2", spectrum.sigma.get(1).copied().unwrap_or(0.0));
    report.metric("eta", run.eta);
    report.metric("beta", beta);
    report.metric("eps", run.eps);
    report.predicted = Some(json!({
        "mode": run.orbit.mode,
        "sigma1": run.orbit.sigma1,
        "beta": run.orbit.beta,
        "predicted_top": run.orbit.predicted_top,
    }));

    let envelope = run.orbit_envelope();
    let [p_hi, p_lo] = run.orbit.predicted_top;
    let mut worst: f64 = 0.0;
    for name in &tops {
        let Some(dev) = run.orbit_deviation(name) else {
            continue;
        };
        worst = worst.max(dev);
        report.check(
            &format!("{name}_within_envelope"),
            dev <= envelope && run.divergence.is_none(),
            format!("deviation {dev:e}, envelope 10 eps + 1e-6 = {envelope:e}"),
        );
        if let Some((hi, lo)) = run.tail_pair(name) {
            let ratio = hi / lo;
            let rel = (ratio / (p_hi / p_lo) - 1.0).abs();
            report.metric(&format!("{name}_cycle_ratio"), ratio);
            report.check(
                &format!("{name}_ratio_within_1pct"),
                rel <= 0.01,
                format!("ratio {ratio:.6} vs predicted {:.6}", p_hi / p_lo),
            );
        }
    }
    report.max_deviation = Some(worst);
    report.metric("predicted_ratio", p_hi / p_lo);
    if quasi {
        if let (Some(y), Some(z)) = (run.tail_pair("sigma1_y"), run.tail_pair("sigma1_z")) {
            let gap = (y.0 - z.0).abs().max((y.1 - z.1).abs());
            report.metric("factor_gap", gap);
            report.check("factors_agree", gap <= 1e-6, format!("max |sigma1(Y) - sigma1(Z)| = {gap:e}"));
        }
    }
    if let Some(res) = run.trajectory.series("residual") {
        let max_res = res.iter().copied().fold(0.0, f64::max);
        report.metric("max_residual", max_res);
        report.check(
            "residual_order_eps",
            max_res <= envelope,
            format!("max off-leading residual {max_res:e}, envelope {envelope:e}"),
        );
    }
    if run.divergence.is_none() {
        let name = tops[0];
        let pts: Vec<Vec<f64>> = run
            .trajectory
            .series(name)
            .unwrap_or_default()
            .iter()
            .map(|s| vec![*s])
            .collect();
        report.detected = detect_period_points(&pts, 16, 1e-9, 64).ok().map(DetectedOrbit::from);
    }
    Ok(report)
}

/// Classification of a 1-D objective at a minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub function: String,
    pub x_bar: f64,
    /// f, f', ..., f^(8) at x_bar
    pub derivatives: Vec<f64>,
    pub third_order_margin: f64,
    /// `third_order`, `higher_order_even`, `higher_order_odd` or `not_applicable`
    pub classification: String,
    pub higher_order: Option<HigherOrderClass>,
    pub l2_condition: Option<bool>,
    pub eta_window: Option<[f64; 2]>,
    pub note: Option<String>,
}

/// Builds a built-in objective by name: `quartic` (mu), `sine` (amplitude),
/// `quadratic` (lambda) or `tanh_l2` (target). Returns it with its default
/// minimizer.
pub fn named_function(
    name: &str,
    mu: f64,
    amplitude: f64,
    lambda: f64,
    target: f64,
) -> Result<(ScalarFunction, f64)> {
    match name {
        "quartic" => Ok((ScalarFunction::quartic(mu), mu.sqrt())),
        "sine" => Ok((ScalarFunction::ScaledSine { amplitude }, -FRAC_PI_2)),
        "quadratic" => Ok((ScalarFunction::Quadratic { lambda }, 0.0)),
        "tanh_l2" => {
            if !(target.abs() < 1.0) {
                return Err(EosError::Precondition(format!(
                    "tanh target must lie in (-1, 1), got {target}"
                )));
            }
            Ok((ScalarFunction::squared_loss_of(ScalarFunction::Tanh, target), target.atanh()))
        }
        other => Err(EosError::Precondition(format!("unknown function `{other}`"))),
    }
}

pub fn condition_report(name: &str, f: &ScalarFunction, x_bar: f64, eps: f64) -> Result<ConditionReport> {
    let derivatives = f.derivatives(x_bar, 8.min(f.max_order()))?;
    let third = check_condition_third_order(f, x_bar)?;
    let mut report = ConditionReport {
        function: name.to_string(),
        x_bar,
        derivatives,
        third_order_margin: third.margin,
        classification: "not_applicable".into(),
        higher_order: None,
        l2_condition: None,
        eta_window: None,
        note: None,
    };
    if third.applicable {
        report.classification = "third_order".into();
    } else {
        match check_condition_higher_order(f, x_bar) {
            Ok(class) => {
                if let HigherOrderClass::StableOscillation { k, .. } = class {
                    report.classification =
                        if k % 2 == 0 { "higher_order_even" } else { "higher_order_odd" }.into();
                }
                report.higher_order = Some(class);
            }
            Err(e) => report.note = Some(e.to_string()),
        }
    }
    if let ScalarFunction::SquaredLossOf { inner, target } = f {
        report.l2_condition = Some(check_l2_condition(inner, x_bar, *target)?);
    }
    if report.classification != "not_applicable" {
        match eta_window(f, x_bar, eps) {
            Ok(w) => report.eta_window = Some([w.lower, w.upper]),
            Err(e) => report.note = Some(e.to_string()),
        }
    }
    Ok(report)
}

fn condition_check(cfg: &ExperimentConfig) -> Result<Report> {
    let name = cfg.text("function");
    let (f, default_x) = named_function(
        name,
        cfg.num("mu"),
        cfg.num("amplitude"),
        cfg.num("lambda"),
        cfg.num("target"),
    )?;
    let x_bar = cfg.opt_num("x_bar").unwrap_or(default_x);
    let cond = condition_report(name, &f, x_bar, cfg.num("eps"))?;

    let mut report = Report::default();
    report.table.push_num("order", (0..cond.derivatives.len()).map(|k| k as f64).collect());
    report.table.push_num("derivative", cond.derivatives.clone());
    report.metric("x_bar", x_bar);
    report.metric("third_order_margin", cond.third_order_margin);
    if let Some([lo, hi]) = cond.eta_window {
        report.metric("eta_lower", lo);
        report.metric("eta_upper", hi);
    }
    if name == "quartic" && cfg.opt_num("x_bar").is_none() {
        let expected = 96.0 * cfg.num("mu");
        let err = (cond.third_order_margin - expected).abs();
        report.check(
            "quartic_margin_closed_form",
            err <= 1e-12 * expected.max(1.0),
            format!("margin {} vs 96 mu = {expected}", cond.third_order_margin),
        );
    }
    report.predicted = Some(serde_json::to_value(&cond).expect("report serializes"));
    Ok(report)
}

fn orbit_predict(cfg: &ExperimentConfig) -> Result<Report> {
    let mu = cfg.num("mu");
    let start = cfg.num("eta");
    let end = cfg.opt_num("eta_end").unwrap_or(start);
    let points = cfg.int("points").max(1);
    let etas: Vec<f64> = (0..points)
        .map(|i| {
            if points == 1 {
                start
            } else {
                start + (end - start) * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut stability = Vec::with_capacity(points);
    for &eta in &etas {
        match solve_period2(mu, eta) {
            Ok(p) => {
                cols[0].push(eta * mu);
                cols[1].push(p.x_low);
                cols[2].push(p.x_high);
                cols[3].push(p.ratio());
                stability.push(format!("{:?}", p.stability));
            }
            Err(EosError::NoOrbit { eta_mu, .. }) => {
                cols[0].push(eta_mu);
                cols[1].push(f64::NAN);
                cols[2].push(f64::NAN);
                cols[3].push(f64::NAN);
                stability.push("NoOrbit".into());
            }
            Err(e) => return Err(e),
        }
    }
    let mut report = Report::default();
    let [eta_mu, low, high, ratio] = cols;
    report.table.push_num("eta", etas);
    report.table.push_num("eta_mu", eta_mu);
    report.table.push_num("x_low", low);
    report.table.push_num("x_high", high);
    report.table.push_num("ratio", ratio);
    report.table.push_text("stability", stability);
    report.predicted = Some(prediction_json(mu, start).0);
    Ok(report)
}

fn sharpness_trace(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.text("model").to_string();
    let (mu, eta) = (cfg.num("mu"), cfg.num("eta"));
    let d = cfg.int("d");
    type Grad = Box<dyn Fn(&[f64]) -> Vec<f64>>;
    type Scalar = Box<dyn Fn(&[f64]) -> f64>;
    let (theta0, coords, grad, loss, analytic): (Vec<f64>, Vec<String>, Grad, Scalar, Option<Scalar>) =
        match model.as_str() {
            "quartic" => {
                let f = ScalarFunction::quartic(mu);
                let g = f.clone();
                (
                    vec![cfg.num("x0")],
                    vec!["x".into()],
                    Box::new(move |t: &[f64]| vec![g.gradient(t[0])]),
                    Box::new(move |t: &[f64]| f.value(t[0])),
                    Some(Box::new(move |t: &[f64]| 3.0 * t[0] * t[0] - mu)),
                )
            }
            "factor2d" => (
                vec![cfg.num("x0"), cfg.num("y0")],
                vec!["x".into(), "y".into()],
                Box::new(move |t: &[f64]| factor2d::gradient(t[0], t[1], mu).to_vec()),
                Box::new(move |t: &[f64]| factor2d::loss(t[0], t[1], mu)),
                Some(Box::new(move |t: &[f64]| {
                    let (a, b) = factor2d::hessian_2d(t[0], t[1], mu).eig;
                    if a.abs() >= b.abs() {
                        a
                    } else {
                        b
                    }
                })),
            ),
            _ => {
                let mut theta = vec![0.0; d + 1];
                theta[0] = cfg.num("v0");
                theta[2] = cfg.num("wy0");
                let mut names = vec!["v".to_string()];
                names.extend((1..=d).map(|i| format!("w_{i}")));
                (
                    theta,
                    names,
                    Box::new(neuron::population_gradient_ambient),
                    Box::new(neuron::population_loss_ambient),
                    None,
                )
            }
        };
    let every = cfg
        .opt_num("sharpness_every")
        .map_or_else(|| default_sharpness_cadence(theta0.len()), |e| (e as usize).max(1));
    let probes = [
        Probe::new("loss", |t: &[f64]| loss(t)),
        sharpness_probe(&grad, cfg.seed, every),
    ];
    let run = run_gd_partial(&grad, &theta0, eta, cfg.int("steps"), &probes, GdOptions::default())?;
    let traj = &run.trajectory;
    let mut report = Report {
        table: trajectory_table(traj, &coords, &["loss", "sharpness"]),
        ..Default::default()
    };
    report.record_divergence(run.divergence.as_ref());

    let sharp = traj.series("sharpness").unwrap_or_default();
    let probed: Vec<(usize, f64)> = sharp
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .map(|(t, s)| (t, *s))
        .collect();
    let tail = &probed[probed.len() - (probed.len() / 10).max(1).min(probed.len())..];
    let mean = tail.iter().map(|(_, s)| s).sum::<f64>() / tail.len().max(1) as f64;
    report.metric("tail_sharpness_mean", mean);
    report.metric("two_over_eta", 2.0 / eta);
    if let Some(exact) = analytic {
        let worst = probed
            .iter()
            .map(|(t, s)| {
                let e = exact(&traj.points[*t]);
                (s - e).abs() / e.abs().max(1e-8)
            })
            .fold(0.0, f64::max);
        report.metric("power_iteration_max_rel_error", worst);
        report.check(
            "power_iteration_matches_analytic",
            worst <= 1e-5,
            format!("max relative error {worst:e} over {} probed steps", probed.len()),
        );
    }
    Ok(report)
}
