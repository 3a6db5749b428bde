//! Stanley lateral control and PID longitudinal control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planning::Trajectory;
use crate::world::{wrap_angle, VehicleParams, VehiclePose};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Steering angle, rad.
    pub delta: f64,
    /// Longitudinal acceleration, m/s².
    pub accel: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    /// Stanley cross-track gain.
    pub k: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Softening added to speed in the Stanley arctan term, m/s.
    pub v_eps: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            k: 1.5,
            kp: 1.0,
            ki: 0.2,
            kd: 0.05,
            v_eps: 0.1,
        }
    }
}

/// Controller memory threaded through successive calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingState {
    pub integral_error: f64,
    pub prev_error: Option<f64>,
    pub cte: f64,
    pub heading_error: f64,
}

struct Projection {
    /// Signed distance, positive when the point is left of the segment direction.
    cte: f64,
    tangent: f64,
}

fn nearest_segment(x: f64, y: f64, poses: &[VehiclePose]) -> Result<Projection> {
    if poses.len() < 2 {
        return Err(Error::TrajectoryTooShort {
            needed: 2,
            got: poses.len(),
        });
    }
    let mut best: Option<(f64, Projection)> = None;
    for seg in poses.windows(2) {
        let (ax, ay, bx, by) = (seg[0].x, seg[0].y, seg[1].x, seg[1].y);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let t = (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (ax + t * dx, ay + t * dy);
        let dist = (x - px).hypot(y - py);
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            let cross = dx * (y - ay) - dy * (x - ax);
            let signed = if cross >= 0.0 { dist } else { -dist };
            best = Some((
                dist,
                Projection {
                    cte: signed,
                    tangent: dy.atan2(dx),
                },
            ));
        }
    }
    best.map(|(_, p)| p)
        .ok_or(Error::TrajectoryTooShort { needed: 2, got: 1 })
}

/// Signed distance to the nearest trajectory segment, positive to the left.
pub fn cross_track_error(pose: &VehiclePose, trajectory: &Trajectory) -> Result<f64> {
    Ok(nearest_segment(pose.x, pose.y, &trajectory.poses)?.cte)
}

/// `clamp(psi + atan(k·e / (v + v_eps)), ±delta_max)`.
///
/// `e` is positive when the path lies to the left of the vehicle, so a positive
/// result steers towards it.
pub fn stanley_steer(psi: f64, e: f64, v: f64, gains: &ControllerGains, delta_max: f64) -> f64 {
    let raw = psi + (gains.k * e / (v + gains.v_eps)).atan();
    if raw >= delta_max {
        delta_max
    } else if raw <= -delta_max {
        -delta_max
    } else {
        raw
    }
}

/// One discrete PID update; returns the saturated acceleration and new state.
///
/// The integral is clamped so its contribution stays within the acceleration
/// limits. The derivative term is zero on the first call.
pub fn pid_accel(
    v_ref: f64,
    v: f64,
    state: &TrackingState,
    gains: &ControllerGains,
    params: &VehicleParams,
    dt: f64,
) -> (f64, TrackingState) {
    let err = v_ref - v;
    let mut integral = state.integral_error + err * dt;
    if gains.ki > 0.0 {
        integral = integral.clamp(params.accel_min / gains.ki, params.accel_max / gains.ki);
    }
    let derivative = state.prev_error.map_or(0.0, |prev| (err - prev) / dt);
    let accel = gains.kp * err + gains.ki * integral + gains.kd * derivative;
    let next = TrackingState {
        integral_error: integral,
        prev_error: Some(err),
        ..*state
    };
    (accel.clamp(params.accel_min, params.accel_max), next)
}

/// Composes cross-track error, heading error, Stanley and PID.
pub fn step_controller(
    pose: &VehiclePose,
    trajectory: &Trajectory,
    v_ref: f64,
    state: &TrackingState,
    gains: &ControllerGains,
    params: &VehicleParams,
    dt: f64,
) -> Result<(ControlCommand, TrackingState)> {
    let proj = nearest_segment(pose.x, pose.y, &trajectory.poses)?;
    let psi = wrap_angle(proj.tangent - pose.theta);
    let delta = stanley_steer(psi, -proj.cte, pose.v, gains, params.delta_max);
    let (accel, mut next) = pid_accel(v_ref, pose.v, state, gains, params, dt);
    next.cte = proj.cte;
    next.heading_error = psi;
    Ok((ControlCommand { delta, accel }, next))
}
