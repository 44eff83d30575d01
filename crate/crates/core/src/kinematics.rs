//! Switched quadrotor kinematics.
//!
//! The pose `[p, phi, theta, psi]` evolves as `d/dt pose = diag(R_v, R_w) v` where `v`
//! is a body velocity drawn from a 13-element alphabet. The discrete model is a single
//! forward-Euler step of length `T`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Number of switching modes.
pub const MODE_COUNT: u8 = 13;

/// Default distance from `pi/2` at which the pitch is considered singular.
pub const DEFAULT_PITCH_GUARD: f64 = 1e-6;

/// Wraps an angle to `(-pi, pi]`. Angles already in range are returned unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    /// Roll, pitch, yaw in radians.
    pub attitude: Vec3,
}

impl Pose {
    pub fn new(position: Vec3, attitude: Vec3) -> Self {
        Self { position, attitude }
    }

    pub fn at(position: Vec3) -> Self {
        Self { position, attitude: Vec3::zeros() }
    }

    pub fn roll(&self) -> f64 {
        self.attitude.x
    }

    pub fn pitch(&self) -> f64 {
        self.attitude.y
    }

    pub fn yaw(&self) -> f64 {
        self.attitude.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyVelocity {
    /// `(v_u, v_v, v_w)` in m/s.
    pub linear: Vec3,
    /// `(w_p, w_q, w_r)` in rad/s.
    pub angular: Vec3,
}

impl BodyVelocity {
    pub fn zero() -> Self {
        Self { linear: Vec3::zeros(), angular: Vec3::zeros() }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        ]
    }
}

/// A switching mode index in `1..=13`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Mode(u8);

impl Mode {
    pub const HOVER: Mode = Mode(1);

    pub fn new(sigma: u8) -> Result<Self> {
        if (1..=MODE_COUNT).contains(&sigma) {
            Ok(Mode(sigma))
        } else {
            Err(Error::Domain(format!("mode index {sigma} outside 1..={MODE_COUNT}")))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// All 13 modes in ascending order.
    pub fn all() -> impl Iterator<Item = Mode> {
        (1..=MODE_COUNT).map(Mode)
    }

    /// Hover, in-plane translations and yaw rotations: the modes that keep a level
    /// UAV in its horizontal plane.
    pub fn planar() -> Vec<Mode> {
        [1, 2, 3, 7, 8, 9, 13].into_iter().map(Mode).collect()
    }

    /// True for the six translation modes.
    pub fn is_linear(self) -> bool {
        matches!(self.0, 2..=4 | 8..=10)
    }
}

impl TryFrom<u8> for Mode {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Mode::new(value)
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m.0
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The discrete velocity alphabet: magnitudes for the translation and rotation modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub v_bar: f64,
    pub w_bar: f64,
}

impl ModeSet {
    pub fn new(v_bar: f64, w_bar: f64) -> Result<Self> {
        if !(v_bar > 0.0 && v_bar.is_finite() && w_bar > 0.0 && w_bar.is_finite()) {
            return Err(Error::Domain(format!(
                "mode speeds must be positive and finite (v_bar={v_bar}, w_bar={w_bar})"
            )));
        }
        Ok(Self { v_bar, w_bar })
    }

    pub fn len(&self) -> usize {
        MODE_COUNT as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn input(&self, mode: Mode) -> BodyVelocity {
        let mut v = [0.0; 6];
        let s = mode.0 as usize;
        match s {
            1 => {}
            2..=4 => v[s - 2] = self.v_bar,
            5..=7 => v[s - 2] = self.w_bar,
            8..=10 => v[s - 8] = -self.v_bar,
            _ => v[s - 8] = -self.w_bar,
        }
        BodyVelocity {
            linear: Vec3::new(v[0], v[1], v[2]),
            angular: Vec3::new(v[3], v[4], v[5]),
        }
    }
}

/// Body velocity for mode `sigma` given as a raw index.
pub fn mode_input(sigma: u8, modes: &ModeSet) -> Result<BodyVelocity> {
    Ok(modes.input(Mode::new(sigma)?))
}

/// A finite sequence of modes over the prediction horizon.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SwitchSequence(pub Vec<Mode>);

impl SwitchSequence {
    pub fn new(modes: Vec<Mode>) -> Self {
        Self(modes)
    }

    pub fn from_indices(indices: &[u8]) -> Result<Self> {
        indices.iter().map(|&s| Mode::new(s)).collect::<Result<Vec<_>>>().map(Self)
    }

    pub fn hover(len: usize) -> Self {
        Self(vec![Mode::HOVER; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.0
    }

    pub fn first(&self) -> Option<Mode> {
        self.0.first().copied()
    }

    /// Drops the first mode and pads with hover so the length is preserved.
    pub fn shifted(&self) -> Self {
        if self.0.is_empty() {
            return Self::default();
        }
        let mut v = self.0[1..].to_vec();
        v.push(Mode::HOVER);
        Self(v)
    }
}

/// Which `R_v` the body-to-world map uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationConvention {
    /// Textbook Z-Y-X (yaw-pitch-roll) rotation; orthonormal for every attitude.
    #[default]
    Standard,
    /// Variant whose (1,2), (1,3), (2,2) and (2,3) entries use the pitch angle where
    /// the Z-Y-X form uses the roll angle. Not orthonormal in general.
    AsPrinted,
}

/// The two 3x3 blocks of the body-to-world map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationBlocks {
    pub linear: Matrix3<f64>,
    pub angular: Matrix3<f64>,
}

impl RotationBlocks {
    pub fn to_matrix(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.linear);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.angular);
        m
    }
}

/// Computes `R_v` and `R_w` for the attitude `(phi, theta, psi)`.
pub fn rotation_blocks(
    attitude: &Vec3,
    convention: RotationConvention,
    pitch_guard: f64,
) -> Result<RotationBlocks> {
    let (phi, theta, psi) = (attitude.x, attitude.y, attitude.z);
    if !(theta.abs() < FRAC_PI_2 - pitch_guard) {
        return Err(Error::Singularity { theta: theta.abs(), guard: pitch_guard });
    }
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let tt = theta.tan();

    let linear = match convention {
        RotationConvention::Standard => Matrix3::new(
            ct * cp,
            sf * st * cp - cf * sp,
            cf * st * cp + sf * sp,
            ct * sp,
            sf * st * sp + cf * cp,
            cf * st * sp - sf * cp,
            -st,
            sf * ct,
            cf * ct,
        ),
        RotationConvention::AsPrinted => Matrix3::new(
            ct * cp,
            sf * st * cp - ct * sp,
            cf * st * cp + st * sp,
            ct * sp,
            sf * st * sp + ct * cp,
            cf * st * sp - st * cp,
            -st,
            sf * ct,
            cf * ct,
        ),
    };
    let angular = Matrix3::new(
        1.0,
        sf * tt,
        cf * tt,
        0.0,
        cf,
        -sf,
        0.0,
        sf / ct,
        cf / ct,
    );
    Ok(RotationBlocks { linear, angular })
}

/// The 6x6 block-diagonal map `diag(R_v, R_w)` from body velocity to pose rate.
pub fn body_to_world_map(
    attitude: &Vec3,
    convention: RotationConvention,
    pitch_guard: f64,
) -> Result<Matrix6<f64>> {
    rotation_blocks(attitude, convention, pitch_guard).map(|b| b.to_matrix())
}

/// Discrete switched model: mode alphabet, sampling time and rotation convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchedModel {
    pub modes: ModeSet,
    pub sample_time: f64,
    pub convention: RotationConvention,
    pub pitch_guard: f64,
}

impl SwitchedModel {
    pub fn new(modes: ModeSet, sample_time: f64) -> Result<Self> {
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(Error::Domain(format!("sample time must be positive, got {sample_time}")));
        }
        Ok(Self {
            modes,
            sample_time,
            convention: RotationConvention::Standard,
            pitch_guard: DEFAULT_PITCH_GUARD,
        })
    }

    pub fn with_convention(mut self, convention: RotationConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn blocks(&self, pose: &Pose) -> Result<RotationBlocks> {
        rotation_blocks(&pose.attitude, self.convention, self.pitch_guard)
    }

    /// One Euler step with precomputed rotation blocks for `pose`.
    ///
    /// Every child of a search node shares the parent's blocks, so the solver calls
    /// this directly; [`SwitchedModel::step`] goes through the same arithmetic.
    pub fn advance(&self, pose: &Pose, blocks: &RotationBlocks, mode: Mode) -> Pose {
        if mode == Mode::HOVER {
            return *pose;
        }
        let u = self.modes.input(mode);
        let t = self.sample_time;
        let position = pose.position + (blocks.linear * u.linear) * t;
        let raw = pose.attitude + (blocks.angular * u.angular) * t;
        let attitude = Vec3::new(wrap_angle(raw.x), raw.y, wrap_angle(raw.z));
        Pose { position, attitude }
    }

    pub fn step(&self, pose: &Pose, mode: Mode) -> Result<Pose> {
        let blocks = self.blocks(pose)?;
        Ok(self.advance(pose, &blocks, mode))
    }

    /// Poses visited by applying `seq` from `pose`, start included (length `N + 1`).
    pub fn rollout(&self, pose: &Pose, seq: &SwitchSequence) -> Result<Vec<Pose>> {
        let mut out = Vec::with_capacity(seq.len() + 1);
        out.push(*pose);
        let mut cur = *pose;
        for &m in seq.modes() {
            cur = self.step(&cur, m)?;
            out.push(cur);
        }
        Ok(out)
    }

    /// Upper bound on the world-frame distance covered in one step by any mode.
    pub fn max_step_displacement(&self) -> f64 {
        let factor = match self.convention {
            // Orthonormal: exactly v_bar * T, padded for rounding.
            RotationConvention::Standard => 1.0 + 1e-9,
            // Each column of the printed matrix has norm at most 3.
            RotationConvention::AsPrinted => 3.0,
        };
        self.modes.v_bar * self.sample_time * factor
    }
}
