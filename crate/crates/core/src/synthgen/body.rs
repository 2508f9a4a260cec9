use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Number of body joints the generator animates (COCO body layout).
pub const BODY_JOINTS: usize = 17;

const PELVIS_HEIGHT: f64 = 0.95;
const THIGH: f64 = 0.45;
const SHANK: f64 = 0.43;
const TORSO: f64 = 0.52;
const UPPER_ARM: f64 = 0.30;
const FOREARM: f64 = 0.27;
const HIP_HALF_WIDTH: f64 = 0.10;
const SHOULDER_HALF_WIDTH: f64 = 0.19;

/// Parametric in-place gait with a slow planar sway of the whole body.
///
/// Angles are in degrees, lengths in meters, periods in seconds. The world is
/// y-down with the floor at `y = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorSpec {
    pub gait_hz: f64,
    pub phase_deg: f64,
    pub knee_min_deg: f64,
    pub knee_max_deg: f64,
    pub elbow_min_deg: f64,
    pub elbow_max_deg: f64,
    pub hip_swing_deg: f64,
    pub arm_swing_deg: f64,
    /// Facing direction about the vertical axis; 0 faces the cameras (−z),
    /// 90 shows the actor in profile.
    pub heading_deg: f64,
    pub sway_x_m: f64,
    pub sway_x_period_s: f64,
    pub sway_z_m: f64,
    pub sway_z_period_s: f64,
    /// Center of the sway, `[x, z]`.
    pub origin: [f64; 2],
}

impl Default for ActorSpec {
    fn default() -> Self {
        Self {
            gait_hz: 0.9,
            phase_deg: 0.0,
            knee_min_deg: 60.0,
            knee_max_deg: 175.0,
            elbow_min_deg: 130.0,
            elbow_max_deg: 165.0,
            hip_swing_deg: 25.0,
            arm_swing_deg: 20.0,
            heading_deg: 90.0,
            sway_x_m: 0.8,
            sway_x_period_s: 15.0,
            sway_z_m: 0.5,
            sway_z_period_s: 10.0,
            origin: [0.0, 0.0],
        }
    }
}

/// Body side of a limb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn phase(self) -> f64 {
        match self {
            Side::Left => 0.0,
            Side::Right => PI,
        }
    }

    fn lateral_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

impl ActorSpec {
    fn gait_phase(&self, t: f64, side: Side) -> f64 {
        2.0 * PI * self.gait_hz * t + self.phase_deg.to_radians() + side.phase()
    }

    /// Planted knee angle at time `t`.
    pub fn knee_angle_deg(&self, t: f64, side: Side) -> f64 {
        let mid = 0.5 * (self.knee_max_deg + self.knee_min_deg);
        let amp = 0.5 * (self.knee_max_deg - self.knee_min_deg);
        mid + amp * self.gait_phase(t, side).cos()
    }

    /// Planted elbow angle at time `t`.
    pub fn elbow_angle_deg(&self, t: f64, side: Side) -> f64 {
        let mid = 0.5 * (self.elbow_max_deg + self.elbow_min_deg);
        let amp = 0.5 * (self.elbow_max_deg - self.elbow_min_deg);
        mid + amp * self.gait_phase(t, side).cos()
    }

    /// Pelvis center at time `t`.
    pub fn pelvis(&self, t: f64) -> Vector3<f64> {
        let sx = self.sway_x_m * (2.0 * PI * t / self.sway_x_period_s).sin();
        let sz = self.sway_z_m * (2.0 * PI * t / self.sway_z_period_s).sin();
        Vector3::new(self.origin[0] + sx, -PELVIS_HEIGHT, self.origin[1] + sz)
    }

    /// The 17 body joints at time `t`.
    pub fn skeleton(&self, t: f64) -> [Vector3<f64>; BODY_JOINTS] {
        skeleton_at(self, self.pelvis(t), self.heading_deg.to_radians(), t)
    }
}

/// Builds the skeleton around `pelvis`, facing `heading` (radians about the
/// vertical, 0 = −z).
pub(crate) fn skeleton_at(
    actor: &ActorSpec,
    pelvis: Vector3<f64>,
    heading: f64,
    t: f64,
) -> [Vector3<f64>; BODY_JOINTS] {
    let down = Vector3::new(0.0, 1.0, 0.0);
    let forward = Vector3::new(heading.sin(), 0.0, -heading.cos());
    let left = Vector3::new(heading.cos(), 0.0, heading.sin());
    // direction at `a` radians from straight down, rotated towards the front
    let dir = |a: f64| down * a.cos() + forward * a.sin();

    let mut j = [Vector3::zeros(); BODY_JOINTS];
    let neck = pelvis - down * TORSO;
    for side in [Side::Left, Side::Right] {
        let s = side.lateral_sign();
        let k = if side == Side::Left { 0 } else { 1 };
        let swing = actor.gait_phase(t, side).sin();

        let hip = pelvis + left * (s * HIP_HALF_WIDTH);
        let flex = actor.hip_swing_deg.to_radians() * swing;
        let knee_bend = PI - actor.knee_angle_deg(t, side).to_radians();
        let knee = hip + dir(flex) * THIGH;
        let ankle = knee + dir(flex - knee_bend) * SHANK;

        let shoulder = neck + left * (s * SHOULDER_HALF_WIDTH);
        let arm = -actor.arm_swing_deg.to_radians() * swing;
        let elbow_bend = PI - actor.elbow_angle_deg(t, side).to_radians();
        let elbow = shoulder + dir(arm) * UPPER_ARM;
        let wrist = elbow + dir(arm + elbow_bend) * FOREARM;

        j[5 + k] = shoulder;
        j[7 + k] = elbow;
        j[9 + k] = wrist;
        j[11 + k] = hip;
        j[13 + k] = knee;
        j[15 + k] = ankle;
        j[1 + k] = neck - down * 0.23 + forward * 0.08 + left * (s * 0.035);
        j[3 + k] = neck - down * 0.2 + left * (s * 0.08);
    }
    j[0] = neck - down * 0.2 + forward * 0.1;
    j
}
