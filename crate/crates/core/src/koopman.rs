//! Data-driven linear prediction of obstacle motion.
//!
//! Each tracked coordinate `z` is lifted to `[z, z^2, sin z, cos z, z^2 sin z, z^2 cos z]`
//! and the per-coordinate blocks are concatenated. A linear operator `K` on the lifted
//! space is regressed from consecutive buffered measurements (EDMD with an optional
//! ridge penalty), and forecasts iterate `g <- K g` from the lifted latest measurement.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Observables per tracked coordinate.
pub const OBSERVABLES_PER_COORD: usize = 6;

/// Relative scale of the automatic ridge penalty: `lambda = scale * trace(G) / L`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-8;

pub const DEFAULT_BUFFER_CAPACITY: usize = 200;

pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftingDictionary {
    dims: usize,
}

impl LiftingDictionary {
    /// `dims` is 2 for planar tracking (x, y) or 3 for spatial tracking.
    pub fn new(dims: usize) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::Domain(format!("tracked coordinate count must be 1..=3, got {dims}")));
        }
        Ok(Self { dims })
    }

    pub fn planar() -> Self {
        Self { dims: 2 }
    }

    pub fn spatial() -> Self {
        Self { dims: 3 }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Lifted dimension `L`.
    pub fn lifted_dim(&self) -> usize {
        OBSERVABLES_PER_COORD * self.dims
    }

    /// Lifts the first `dims` coordinates of `position`.
    pub fn lift(&self, position: &Vec3) -> DVector<f64> {
        let mut g = DVector::zeros(self.lifted_dim());
        for c in 0..self.dims {
            let z = position[c];
            let z2 = z * z;
            let (s, co) = z.sin_cos();
            let o = c * OBSERVABLES_PER_COORD;
            g[o] = z;
            g[o + 1] = z2;
            g[o + 2] = s;
            g[o + 3] = co;
            g[o + 4] = z2 * s;
            g[o + 5] = z2 * co;
        }
        g
    }

    /// Reads the linear observable of every coordinate block.
    pub fn extract_position(&self, lifted: &DVector<f64>) -> Result<Vec<f64>> {
        if lifted.len() != self.lifted_dim() {
            return Err(Error::Domain(format!(
                "lifted vector has length {}, dictionary expects {}",
                lifted.len(),
                self.lifted_dim()
            )));
        }
        Ok((0..self.dims).map(|c| lifted[c * OBSERVABLES_PER_COORD]).collect())
    }
}

/// Ring buffer of equally spaced `(time, position)` measurements.
#[derive(Debug, Clone)]
pub struct ObservationBuffer {
    capacity: usize,
    sample_time: f64,
    samples: VecDeque<(f64, Vec3)>,
}

impl ObservationBuffer {
    pub fn new(capacity: usize, sample_time: f64) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::Domain(format!("buffer capacity must be at least 2, got {capacity}")));
        }
        if !(sample_time > 0.0) {
            return Err(Error::Domain(format!("sample time must be positive, got {sample_time}")));
        }
        Ok(Self { capacity, sample_time, samples: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn latest(&self) -> Option<&(f64, Vec3)> {
        self.samples.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, Vec3)> {
        self.samples.iter()
    }

    /// Appends a measurement, evicting the oldest when full.
    ///
    /// Timestamps must increase. A gap different from the sample time restarts the
    /// buffer, since only consecutive samples form regression pairs.
    pub fn push(&mut self, time: f64, position: Vec3) -> Result<()> {
        if !time.is_finite() || position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite measurement".into()));
        }
        if let Some(&(last, _)) = self.samples.back() {
            if time <= last {
                return Err(Error::Domain(format!(
                    "timestamp {time} does not follow previous sample at {last}"
                )));
            }
            let gap = time - last;
            if (gap - self.sample_time).abs() > 1e-6 * self.sample_time {
                self.samples.clear();
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((time, position));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ridge {
    Fixed(f64),
    Named(RidgeRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RidgeRule {
    /// `lambda = 1e-8 * trace(Gram) / L`.
    Auto,
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Named(RidgeRule::Auto)
    }
}

impl Ridge {
    pub const AUTO: Ridge = Ridge::Named(RidgeRule::Auto);

    fn resolve(self, gram_trace: f64, lifted_dim: usize) -> f64 {
        match self {
            Ridge::Fixed(l) => l,
            Ridge::Named(RidgeRule::Auto) => AUTO_RIDGE_SCALE * gram_trace / lifted_dim as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub operator: DMatrix<f64>,
    pub dictionary: LiftingDictionary,
    /// RMS one-step error in the lifted space over the training pairs.
    pub residual: f64,
    /// Ridge penalty actually used.
    pub ridge: f64,
}

impl KoopmanModel {
    /// Model with the identity operator; forecasts hold the latest position.
    pub fn identity(dictionary: LiftingDictionary) -> Self {
        let l = dictionary.lifted_dim();
        Self { operator: DMatrix::identity(l, l), dictionary, residual: 0.0, ridge: 0.0 }
    }
}

/// Regresses `K` minimising `sum ||g(z_{j+1}) - K g(z_j)||^2 + lambda ||K||_F^2`.
///
/// The minimiser `K = (sum y x^T)(sum x x^T + lambda I)^-1` is evaluated through a thin
/// SVD of the snapshot matrix `X = U S V^T` as `K = Y V diag(s / (s^2 + lambda)) U^T`,
/// which avoids squaring the condition number. With `lambda = 0`, singular values below
/// `eps * max(L, n) * s_max` are dropped (minimum-norm solution).
pub fn fit(
    buffer: &ObservationBuffer,
    dictionary: LiftingDictionary,
    ridge: Ridge,
    min_samples: usize,
) -> Result<KoopmanModel> {
    let need = min_samples.max(2);
    if buffer.len() < need {
        return Err(Error::NotReady { have: buffer.len(), need });
    }
    let positions: Vec<Vec3> = buffer.iter().map(|&(_, p)| p).collect();
    fit_snapshots(&positions, dictionary, ridge)
}

/// [`fit`] on an explicit list of consecutive positions.
pub fn fit_snapshots(
    positions: &[Vec3],
    dictionary: LiftingDictionary,
    ridge: Ridge,
) -> Result<KoopmanModel> {
    if positions.len() < 2 {
        return Err(Error::NotReady { have: positions.len(), need: 2 });
    }
    let l = dictionary.lifted_dim();
    let n = positions.len() - 1;
    let lifted: Vec<DVector<f64>> = positions.iter().map(|p| dictionary.lift(p)).collect();
    let x = DMatrix::from_fn(l, n, |r, c| lifted[c][r]);
    let y = DMatrix::from_fn(l, n, |r, c| lifted[c + 1][r]);

    let (operator, residual, lambda) = regress(&x, &y, ridge)?;
    Ok(KoopmanModel { operator, dictionary, residual, ridge: lambda })
}

/// Solves the ridge-regularised lifted regression for snapshot matrices `X`, `Y`
/// (one column per pair). Returns the operator, the RMS one-step residual and the
/// penalty used.
pub fn regress(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: Ridge) -> Result<(DMatrix<f64>, f64, f64)> {
    let (l, n) = x.shape();
    if y.shape() != (l, n) || n == 0 {
        return Err(Error::Domain(format!(
            "snapshot shapes {:?} and {:?} do not pair up",
            x.shape(),
            y.shape()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite lifted snapshot".into()));
    }
    let lambda = ridge.resolve(x.norm_squared(), l);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("ridge penalty must be finite and >= 0, got {lambda}")));
    }

    let svd = x.clone().svd(true, true);
    let (u, v_t) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Conditioning("SVD of the snapshot matrix failed".into())),
    };
    let s = &svd.singular_values;
    let s_max = s.max();
    if !(s_max > 0.0) {
        return Err(Error::Conditioning("snapshot matrix is zero; use lambda > 0".into()));
    }
    let cutoff = f64::EPSILON * l.max(n) as f64 * s_max;
    let gains = s.map(|sv| {
        if lambda > 0.0 {
            sv / (sv * sv + lambda)
        } else if sv > cutoff {
            1.0 / sv
        } else {
            0.0
        }
    });

    let yv = y * v_t.transpose();
    let scaled = DMatrix::from_fn(yv.nrows(), yv.ncols(), |r, c| yv[(r, c)] * gains[c]);
    let operator = scaled * u.transpose();
    if operator.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("fitted operator is not finite; use lambda > 0".into()));
    }

    let err = y - &operator * x;
    let residual = (err.norm_squared() / n as f64).sqrt();
    Ok((operator, residual, lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstaclePrediction {
    pub obstacle: usize,
    /// Positions at `k+1, ..., k+N`.
    pub positions: Vec<Vec3>,
    /// Some forecast exceeded the divergence bound.
    pub unreliable: bool,
}

/// Iterates the lifted dynamics `horizon` times from `latest`.
///
/// Untracked coordinates (z for a planar dictionary) are held at their latest value.
pub fn predict(
    model: &KoopmanModel,
    obstacle: usize,
    latest: &Vec3,
    horizon: usize,
    divergence_bound: f64,
) -> ObstaclePrediction {
    let dict = model.dictionary;
    let mut g = dict.lift(latest);
    let mut positions = Vec::with_capacity(horizon);
    let mut unreliable = false;
    for _ in 0..horizon {
        g = &model.operator * g;
        let mut p = *latest;
        for c in 0..dict.dims() {
            p[c] = g[c * OBSERVABLES_PER_COORD];
        }
        if !(p.norm() <= divergence_bound) {
            unreliable = true;
        }
        positions.push(p);
    }
    ObstaclePrediction { obstacle, positions, unreliable }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KoopmanSettings {
    pub dictionary: LiftingDictionary,
    pub buffer_capacity: usize,
    pub min_samples: usize,
    pub ridge: Ridge,
    pub divergence_bound: f64,
}

impl KoopmanSettings {
    pub fn new(dictionary: LiftingDictionary) -> Self {
        Self {
            dictionary,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            min_samples: dictionary.lifted_dim() + 1,
            ridge: Ridge::AUTO,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

/// Forecast handed to the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub prediction: ObstaclePrediction,
    /// Latest measured position.
    pub current: Vec3,
    /// False when the constant-position fallback was used.
    pub from_model: bool,
}

/// Online predictor for one obstacle track: buffer, refit on every sample, forecast.
#[derive(Debug, Clone)]
pub struct ObstacleTracker {
    obstacle: usize,
    settings: KoopmanSettings,
    buffer: ObservationBuffer,
    model: Option<KoopmanModel>,
}

impl ObstacleTracker {
    pub fn new(obstacle: usize, settings: KoopmanSettings, sample_time: f64) -> Result<Self> {
        Ok(Self {
            obstacle,
            settings,
            buffer: ObservationBuffer::new(settings.buffer_capacity, sample_time)?,
            model: None,
        })
    }

    pub fn obstacle(&self) -> usize {
        self.obstacle
    }

    pub fn buffer(&self) -> &ObservationBuffer {
        &self.buffer
    }

    pub fn model(&self) -> Option<&KoopmanModel> {
        self.model.as_ref()
    }

    pub fn is_ready(&self) -> bool {
        self.model.is_some()
    }

    /// Buffers the measurement and refits. A failed fit drops back to the fallback.
    pub fn observe(&mut self, time: f64, position: Vec3) -> Result<()> {
        self.buffer.push(time, position)?;
        self.model = fit(
            &self.buffer,
            self.settings.dictionary,
            self.settings.ridge,
            self.settings.min_samples,
        )
        .ok();
        Ok(())
    }

    pub fn forecast(&self, horizon: usize) -> Option<Forecast> {
        let &(_, current) = self.buffer.latest()?;
        let (prediction, from_model) = match &self.model {
            Some(m) => {
                (predict(m, self.obstacle, &current, horizon, self.settings.divergence_bound), true)
            }
            None => (
                ObstaclePrediction {
                    obstacle: self.obstacle,
                    positions: vec![current; horizon],
                    unreliable: false,
                },
                false,
            ),
        };
        Some(Forecast { prediction, current, from_model })
    }
}
