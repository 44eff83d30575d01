//! Experiment definitions: obstacle generators, formations, the sensing channel,
//! prediction metrics and the closed-loop driver.

use std::f64::consts::{E, PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::avoidance::facet_normals;
use crate::config::{Fusion, ObstacleKind, ObstacleSection, Observer, ScenarioConfig};
use crate::kinematics::{Mode, ModeSet, Pose, SwitchedModel};
use crate::koopman::{KoopmanSettings, LiftingDictionary, ObstacleTracker};
use crate::smpc::{commit_round, sequential_round, Agent, ObstacleForecast, SmpcSettings};
use crate::{Error, Result, Vec3};

/// Number of obstacles the configuration actually generates.
pub fn obstacle_count(obstacles: &ObstacleSection) -> usize {
    match obstacles.kind {
        ObstacleKind::None => 0,
        _ => obstacles.count,
    }
}

/// Planar butterfly radius in polar form.
fn butterfly_radius(theta: f64) -> f64 {
    theta.cos().exp() - 2.0 * (4.0 * theta).cos() - (theta / 12.0).sin().powi(5)
}

/// True position of obstacle `index` (0-based) at time `t`.
///
/// Single-curve kinds spread several obstacles along the curve with phase offsets
/// `2 pi j / count`. For the two-ring kind the first half of the indices sit on
/// ring 1 and the second half on ring 2.
pub fn obstacle_position(obstacles: &ObstacleSection, index: usize, t: f64) -> Result<Vec3> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    let count = obstacle_count(obstacles);
    if index >= count {
        return Err(Error::Domain(format!("obstacle index {index} out of range for {count} obstacles")));
    }
    let c = Vec3::from(obstacles.center);
    let a = obstacles.scale;
    let phase = obstacles.omega * t + TAU * index as f64 / count as f64;
    let p = match obstacles.kind {
        ObstacleKind::None => unreachable!("no obstacles generated"),
        ObstacleKind::Circular => Vec3::new(a * phase.cos(), a * phase.sin(), 0.0),
        ObstacleKind::Lemniscate => {
            let s = phase.sin();
            Vec3::new(a * s, a * s * phase.cos(), 0.0)
        }
        ObstacleKind::Butterfly3d => {
            let s = a / (E + 3.0);
            let r = butterfly_radius(phase);
            Vec3::new(s * r * phase.sin(), s * r * phase.cos(), obstacles.z_amplitude * (2.0 * phase).sin())
        }
        ObstacleKind::TwoRing => {
            let per_ring = count / 2;
            let (q, l) = (index / per_ring, index % per_ring);
            let ring_angle = 4.0 * PI * l as f64 / count as f64;
            let alpha = obstacles.initial_phase + obstacles.angular_velocity * t;
            let r = obstacles.ring_radii[q];
            Vec3::new(
                r * ring_angle.cos() + obstacles.cover_radius * alpha.cos(),
                r * ring_angle.sin() + obstacles.cover_radius * alpha.sin(),
                0.0,
            )
        }
    };
    Ok(p + c)
}

fn formation_angle(i: usize, n: usize) -> Result<f64> {
    if n == 0 || i == 0 || i > n {
        return Err(Error::Domain(format!("UAV index {i} outside 1..={n}")));
    }
    Ok(TAU * (i - 1) as f64 / n as f64)
}

/// Start pose of UAV `i` (1-based): evenly spaced on a circle, level attitude.
pub fn initial_pose(i: usize, n: usize, r_init: f64) -> Result<Pose> {
    let a = formation_angle(i, n)?;
    Ok(Pose::at(Vec3::new(r_init * a.cos(), r_init * a.sin(), 0.0)))
}

/// Target position of UAV `i` (1-based): the antipode of its start direction.
pub fn reference_pose(i: usize, n: usize, r_ref: f64) -> Result<Vec3> {
    let a = formation_angle(i, n)?;
    Ok(Vec3::new(-r_ref * a.cos(), -r_ref * a.sin(), 0.0))
}

/// Range-dependent Gaussian position noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma0: f64,
    pub kappa: f64,
}

impl NoiseModel {
    pub fn new(sigma0: f64, kappa: f64) -> Result<Self> {
        if !(sigma0 >= 0.0 && sigma0.is_finite() && kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("noise parameters must be >= 0 (sigma0={sigma0}, kappa={kappa})")));
        }
        Ok(Self { sigma0, kappa })
    }

    /// Per-axis standard deviation at `range` metres.
    pub fn std_at(&self, range: f64) -> f64 {
        self.sigma0 * (1.0 + self.kappa * range)
    }
}

/// Noisy measurement of `true_pos` taken from `observer_pos`.
pub fn measure(true_pos: &Vec3, observer_pos: &Vec3, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> Vec3 {
    let std = noise.std_at((true_pos - observer_pos).norm());
    if std == 0.0 {
        return *true_pos;
    }
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    true_pos + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub max_err: f64,
    pub count: usize,
}

impl PredictionMetrics {
    /// Metrics over non-negative error magnitudes. An empty set gives zeros.
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self { rmse: 0.0, mae: 0.0, max_err: 0.0, count: 0 };
        }
        let n = errors.len() as f64;
        let sq: f64 = errors.iter().map(|e| e * e).sum();
        let abs: f64 = errors.iter().map(|e| e.abs()).sum();
        let max_err = errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        // Clamp away rounding so the ordering invariants hold exactly.
        let rmse = (sq / n).sqrt().min(max_err);
        let mae = (abs / n).min(max_err);
        Self { rmse, mae, max_err, count: errors.len() }
    }
}

/// Pointwise Euclidean error metrics between aligned predicted and true positions.
pub fn prediction_metrics(predicted: &[Vec3], truth: &[Vec3]) -> Result<PredictionMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Domain(format!(
            "{} predictions but {} truth points",
            predicted.len(),
            truth.len()
        )));
    }
    let errors: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| (p - t).norm()).collect();
    Ok(PredictionMetrics::from_errors(&errors))
}

/// One row of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub poses: Vec<Pose>,
    /// Mode chosen at this step; committed unless this is the last record.
    pub modes: Vec<Mode>,
    /// Whether each UAV's OCP had a feasible solution.
    pub feasible: Vec<bool>,
    pub obstacles: Vec<Vec3>,
    /// Measured obstacle positions, averaged over the observers.
    pub measured: Vec<Vec3>,
}

/// One horizon forecast compared with the true position it targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    /// Time the forecast was issued.
    pub time: f64,
    /// Index of the predictor's measurement channel (UAV index for independent trackers).
    pub observer: usize,
    pub obstacle: usize,
    /// Steps ahead, `1..=N`.
    pub step: usize,
    pub predicted: Vec3,
    pub truth: Vec3,
}

impl PredictionRow {
    pub fn error(&self) -> f64 {
        (self.predicted - self.truth).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub config: ScenarioConfig,
    pub references: Vec<Vec3>,
    pub records: Vec<StepRecord>,
    pub predictions: Vec<PredictionRow>,
    /// Root mean square of the per-axis noise std fed to the predictors.
    pub injected_std_rms: f64,
}

/// Closest approach between two bodies over the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDistance {
    pub distance: f64,
    pub time: f64,
    /// UAV index.
    pub a: usize,
    /// Obstacle index or second UAV index.
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub uav_obstacle: Option<MinDistance>,
    pub uav_uav: Option<MinDistance>,
}

fn take_min(slot: &mut Option<MinDistance>, cand: MinDistance) {
    if slot.is_none_or(|m| cand.distance < m.distance) {
        *slot = Some(cand);
    }
}

/// Exact minima of UAV-obstacle and UAV-UAV centre distances over the records.
pub fn distance_report(records: &[StepRecord]) -> Result<DistanceReport> {
    if records.is_empty() {
        return Err(Error::Domain("distance report needs a non-empty trace".into()));
    }
    let mut report = DistanceReport { uav_obstacle: None, uav_uav: None };
    for r in records {
        for (i, pi) in r.poses.iter().enumerate() {
            for (j, o) in r.obstacles.iter().enumerate() {
                let d = (pi.position - o).norm();
                take_min(&mut report.uav_obstacle, MinDistance { distance: d, time: r.time, a: i, b: j });
            }
            for (j, pj) in r.poses.iter().enumerate().skip(i + 1) {
                let d = (pi.position - pj.position).norm();
                take_min(&mut report.uav_uav, MinDistance { distance: d, time: r.time, a: i, b: j });
            }
        }
    }
    Ok(report)
}

/// Distance of every UAV's final position from its reference.
pub fn convergence_errors(trace: &SimulationTrace) -> Vec<f64> {
    trace
        .records
        .last()
        .map(|r| r.poses.iter().zip(&trace.references).map(|(p, r)| (p.position - r).norm()).collect())
        .unwrap_or_default()
}

/// Builds the controller settings a configuration describes.
pub fn smpc_settings(cfg: &ScenarioConfig) -> Result<SmpcSettings> {
    let model = SwitchedModel::new(ModeSet::new(cfg.uav.v_bar, cfg.uav.w_bar)?, cfg.sim.sample_time)?
        .with_convention(cfg.uav.rotation);
    Ok(SmpcSettings {
        model,
        horizon: cfg.sim.horizon,
        allowed_modes: if cfg.uav.planar { Mode::planar() } else { Mode::all().collect() },
        normals: facet_normals(cfg.avoidance.facets, cfg.avoidance.layout)?,
        cluster_radius: cfg.uav.cluster_radius,
        sensing_radius: cfg.uav.sensing_radius,
        obstacle_radius: cfg.obstacles.radius,
        obstacle_margin: cfg.avoidance.obstacle_margin,
        agent_margin: cfg.avoidance.agent_margin,
    })
}

/// Runs the closed loop (or the observe-and-predict loop) for the configured duration.
///
/// Each step: obstacles move, observers measure, predictors refit and forecast, the
/// UAVs solve one sequential round from the current states, the step is recorded and
/// the chosen modes are applied.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimulationTrace> {
    let cfg = config.clone().resolved();
    cfg.validate()?;
    let n_r = cfg.uav.count;
    let n_obs = obstacle_count(&cfg.obstacles);
    let t_s = cfg.sim.sample_time;
    let horizon = cfg.sim.horizon;
    let steps = cfg.steps();
    let settings = smpc_settings(&cfg)?;
    let noise = NoiseModel::new(cfg.noise.sigma0, cfg.noise.kappa)?;

    let mut agents = (1..=n_r)
        .map(|i| {
            Ok(Agent {
                id: i - 1,
                pose: initial_pose(i, n_r, cfg.uav.init_radius)?,
                reference: reference_pose(i, n_r, cfg.uav.ref_radius)?,
                radius: cfg.uav.radius,
                plan: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let references: Vec<Vec3> = agents.iter().map(|a| a.reference).collect();
    let order: Vec<usize> = (0..n_r).collect();

    let independent = cfg.noise.observer == Observer::Uav && cfg.noise.fusion == Fusion::Independent;
    let channels = if independent { n_r } else { 1 };
    let dictionary = LiftingDictionary::new(cfg.tracked_dims())?;
    let ks = KoopmanSettings {
        dictionary,
        buffer_capacity: cfg.koopman.buffer_capacity,
        min_samples: cfg.koopman.min_samples.expect("resolved"),
        ridge: cfg.koopman.ridge,
        divergence_bound: cfg.koopman.divergence_bound,
    };
    let mut trackers: Vec<Vec<ObstacleTracker>> = (0..channels)
        .map(|_| (0..n_obs).map(|j| ObstacleTracker::new(j, ks, t_s)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(steps + 1);
    let mut predictions = Vec::new();
    let (mut var_sum, mut var_count) = (0.0, 0usize);

    for k in 0..=steps {
        let t = k as f64 * t_s;
        let truth = (0..n_obs).map(|j| obstacle_position(&cfg.obstacles, j, t)).collect::<Result<Vec<_>>>()?;

        // meas[c][j]: what channel c feeds the predictor of obstacle j.
        let mut meas = vec![vec![Vec3::zeros(); n_obs]; channels];
        for (j, p) in truth.iter().enumerate() {
            match cfg.noise.observer {
                Observer::Camera => {
                    meas[0][j] = measure(p, p, &noise, &mut rng);
                    var_sum += noise.std_at(0.0).powi(2);
                    var_count += 1;
                }
                Observer::Uav => {
                    let mut sum = Vec3::zeros();
                    let mut var_mean = 0.0;
                    for (i, a) in agents.iter().enumerate() {
                        let m = measure(p, &a.pose.position, &noise, &mut rng);
                        let var = noise.std_at((p - a.pose.position).norm()).powi(2);
                        if independent {
                            meas[i][j] = m;
                            var_sum += var;
                            var_count += 1;
                        }
                        sum += m;
                        var_mean += var;
                    }
                    if !independent {
                        meas[0][j] = sum / n_r as f64;
                        var_sum += var_mean / (n_r * n_r) as f64;
                        var_count += 1;
                    }
                }
            }
        }
        let measured: Vec<Vec3> = (0..n_obs)
            .map(|j| meas.iter().map(|m| m[j]).sum::<Vec3>() / channels as f64)
            .collect();

        let mut forecasts: Vec<Vec<ObstacleForecast>> = Vec::with_capacity(channels);
        for (c, row) in trackers.iter_mut().enumerate() {
            let mut list = Vec::with_capacity(n_obs);
            for (j, tracker) in row.iter_mut().enumerate() {
                tracker.observe(t, meas[c][j])?;
                let f = tracker.forecast(horizon).expect("tracker has a sample");
                if f.from_model {
                    for (h, p) in f.prediction.positions.iter().enumerate() {
                        let target = t + (h + 1) as f64 * t_s;
                        predictions.push(PredictionRow {
                            time: t,
                            observer: c,
                            obstacle: j,
                            step: h + 1,
                            predicted: *p,
                            truth: obstacle_position(&cfg.obstacles, j, target)?,
                        });
                    }
                }
                list.push(ObstacleForecast { id: j, current: f.current, positions: f.prediction.positions });
            }
            forecasts.push(list);
        }

        let (modes, feasible, outcome) = if cfg.sim.prediction_only {
            (vec![Mode::HOVER; n_r], vec![true; n_r], None)
        } else {
            let per_agent: Vec<Vec<ObstacleForecast>> =
                (0..n_r).map(|i| forecasts[if independent { i } else { 0 }].clone()).collect();
            let outcome = sequential_round(&agents, &per_agent, &order, &settings)?;
            let feasible = outcome.solutions.iter().map(|s| s.feasible).collect();
            (outcome.committed(), feasible, Some(outcome))
        };

        records.push(StepRecord {
            step: k,
            time: t,
            poses: agents.iter().map(|a| a.pose).collect(),
            modes,
            feasible,
            obstacles: truth,
            measured,
        });
        if k < steps {
            if let Some(outcome) = &outcome {
                commit_round(&mut agents, outcome, &settings.model)?;
            }
        }
    }

    let injected_std_rms = if var_count == 0 { 0.0 } else { (var_sum / var_count as f64).sqrt() };
    Ok(SimulationTrace { config: cfg, references, records, predictions, injected_std_rms })
}

/// Per-point and accumulated prediction metrics of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    /// Over every individual horizon point.
    pub per_point: PredictionMetrics,
    /// Over per-forecast sums of the horizon point errors.
    pub accumulated: PredictionMetrics,
    /// Sum of every point error in the run.
    pub total_error: f64,
}

pub fn summarize_predictions(rows: &[PredictionRow]) -> PredictionSummary {
    let errors: Vec<f64> = rows.iter().map(PredictionRow::error).collect();
    let mut sums: Vec<f64> = Vec::new();
    let mut key = None;
    for (r, e) in rows.iter().zip(&errors) {
        let k = (r.time.to_bits(), r.observer, r.obstacle);
        if key == Some(k) {
            *sums.last_mut().expect("started") += e;
        } else {
            key = Some(k);
            sums.push(*e);
        }
    }
    PredictionSummary {
        per_point: PredictionMetrics::from_errors(&errors),
        accumulated: PredictionMetrics::from_errors(&sums),
        total_error: errors.iter().sum(),
    }
}
